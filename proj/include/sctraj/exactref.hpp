#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include <fftw3.h>
#include <lapacke.h>

#include "sctraj/csv.hpp"
#include "sctraj/model.hpp"
#include "sctraj/potentials.hpp"

namespace sctraj {

/// Free evolution of the coherent state; the width factor 1 + i w T with
/// w = hbar / (mu b^2) makes the Gaussian complex.
inline cplx exact_free(const CoherentState& s, double x, double T)
{
    const double w = s.hbar() / (s.mu() * s.b() * s.b());
    const double v = s.p() / s.mu();
    const cplx spread = 1.0 + I * (w * T);
    const double d = (x - s.q() - v * T) / s.b();
    const double phase = s.p() * (x - 0.5 * s.q()) / s.hbar() - s.p() * s.p() * T / (2.0 * s.mu() * s.hbar());
    const double norm = std::pow(std::numbers::pi, -0.25) / std::sqrt(s.b());
    return norm / std::sqrt(spread) * std::exp(-0.5 * d * d / spread + I * phase);
}

/// Hard wall at x = 0 with the packet on the positive side.
inline cplx exact_wall(const CoherentState& s, double x, double T)
{
    if (!(x > 0.0))
        throw Error(ErrorKind::DomainError, "the wall solution is defined for x > 0 only");
    return exact_free(s, x, T) - exact_free(s, -x, T);
}

/// Harmonic oscillator acting on a packet whose width matches it: the packet
/// stays coherent, with z rotating as z e^{-i W T} and a zero-point phase.
inline cplx exact_harmonic(const CoherentState& s, const PotentialModel& model, double x, double T)
{
    if (model.kind != PotentialKind::Harmonic)
        throw Error(ErrorKind::DomainError, "exact_harmonic needs a harmonic model");
    const double W = model.omega * std::sqrt(model.mu / s.mu());
    if (std::abs(W - s.omega()) > 1e-12 * W)
        throw Error(ErrorKind::DomainError, "packet width does not match the oscillator frequency");
    const cplx zT = s.z() * std::exp(-I * (W * T));
    const double qT = std::numbers::sqrt2 * s.b() * zT.real();
    const double pT = std::numbers::sqrt2 * s.c() * zT.imag();
    const CoherentState moved(qT, pT, s.hbar(), s.mu(), s.omega());
    return std::exp(-0.5 * I * (W * T)) * coherent_overlap(moved, x);
}

/// Periodic grid x_j = x_min + j dx, j = 0..n-1.
struct Grid {
    double x_min = -10.0;
    double x_max = 10.0;
    std::size_t n = 1024;

    Grid() = default;
    Grid(double lo, double hi, std::size_t count) : x_min(lo), x_max(hi), n(count)
    {
        if (!(hi > lo))
            throw Error(ErrorKind::DomainError, "grid needs x_max > x_min");
        if (count < 4 || !std::has_single_bit(count))
            throw Error(ErrorKind::DomainError, "grid point count must be a power of two");
    }

    double dx() const { return (x_max - x_min) / static_cast<double>(n); }
    double dk() const { return 2.0 * std::numbers::pi / (x_max - x_min); }
    double x(std::size_t j) const { return x_min + static_cast<double>(j) * dx(); }

    /// Angular wavenumber of FFT bin j in the usual wrapped ordering.
    double k(std::size_t j) const
    {
        const auto sj = static_cast<std::ptrdiff_t>(j);
        const auto sn = static_cast<std::ptrdiff_t>(n);
        return dk() * static_cast<double>(sj < sn / 2 ? sj : sj - sn);
    }
};

struct GridWavefunction {
    Grid grid;
    std::vector<cplx> values;
    double t = 0.0;

    double norm() const
    {
        double s = 0.0;
        for (const auto& v : values)
            s += std::norm(v);
        return s * grid.dx();
    }

    /// Trigonometric interpolation at an arbitrary point of the periodic cell.
    cplx at(double x) const;
};

struct SplitSettings {
    double dt = 1e-3;
    /// Largest |psi| tolerated on the outermost grid points.
    double boundary_tol = 1e-10;
    /// Number of points at each edge inspected by the leak monitor.
    std::size_t edge_points = 4;
};

namespace detail {

/// The FFTW planner is not reentrant; execution on distinct plans is.
inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

class FftPair {
public:
    explicit FftPair(std::size_t n) : n_(n), buf_(fftw_alloc_complex(n))
    {
        std::lock_guard lock(fftw_planner_mutex());
        fwd_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~FftPair()
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }
    FftPair(const FftPair&) = delete;
    FftPair& operator=(const FftPair&) = delete;

    std::complex<double>* data() { return reinterpret_cast<std::complex<double>*>(buf_); }
    void forward() { fftw_execute(fwd_); }
    /// Unnormalised; callers divide by n.
    void backward() { fftw_execute(bwd_); }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    fftw_complex* buf_;
    fftw_plan fwd_{}, bwd_{};
};

inline double edge_amplitude(std::span<const cplx> v, std::size_t edge)
{
    double m = 0.0;
    const std::size_t e = std::min(edge, v.size() / 2);
    for (std::size_t j = 0; j < e; ++j)
        m = std::max({m, std::abs(v[j]), std::abs(v[v.size() - 1 - j])});
    return m;
}

}  // namespace detail

/// Interpolates onto many points with a single transform.
inline std::vector<cplx> interpolate(const GridWavefunction& g, std::span<const double> xs)
{
    const std::size_t n = g.grid.n;
    detail::FftPair fft(n);
    std::copy(g.values.begin(), g.values.end(), fft.data());
    fft.forward();
    const double L = g.grid.x_max - g.grid.x_min;
    std::vector<cplx> out;
    out.reserve(xs.size());
    for (double x : xs) {
        const double xi = std::remainder(x - g.grid.x_min, L);
        cplx sum = fft.data()[n / 2] * std::cos(g.grid.k(n / 2) * xi);
        // Accumulate exp(i k xi) by recurrence over positive and negative bins.
        const cplx step = std::exp(I * (g.grid.dk() * xi));
        cplx ep = 1.0, em = 1.0;
        sum += fft.data()[0];
        for (std::size_t j = 1; j < n / 2; ++j) {
            ep *= step;
            em *= std::conj(step);
            sum += fft.data()[j] * ep + fft.data()[n - j] * em;
        }
        out.push_back(sum / static_cast<double>(n));
    }
    return out;
}

inline cplx GridWavefunction::at(double x) const
{
    const double xs[] = {x};
    return interpolate(*this, xs).front();
}

inline GridWavefunction initial_grid_wavefunction(const CoherentState& s, const Grid& grid)
{
    GridWavefunction g{grid, std::vector<cplx>(grid.n), 0.0};
    for (std::size_t j = 0; j < grid.n; ++j)
        g.values[j] = coherent_overlap(s, grid.x(j));
    return g;
}

/// <psi|H|psi> / <psi|psi> with a spectral kinetic term.
inline double energy_expectation(const GridWavefunction& g, const PotentialModel& model, double mu, double hbar)
{
    const std::size_t n = g.grid.n;
    detail::FftPair fft(n);
    std::copy(g.values.begin(), g.values.end(), fft.data());
    fft.forward();
    double kin = 0.0, kin_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double k = g.grid.k(j);
        kin += std::norm(fft.data()[j]) * hbar * hbar * k * k / (2.0 * mu);
        kin_norm += std::norm(fft.data()[j]);
    }
    double pot = 0.0, nrm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        pot += std::norm(g.values[j]) * evaluate(model, g.grid.x(j)).V;
        nrm += std::norm(g.values[j]);
    }
    return kin / kin_norm + pot / nrm;
}

/// Strang-split propagation V/2 - T - V/2 with spectral kinetic steps,
/// returning snapshots at the requested (ascending) times.
inline std::vector<GridWavefunction> propagate_grid_snapshots(const PotentialModel& model, const CoherentState& s,
                                                              std::span<const double> times, const Grid& grid,
                                                              const SplitSettings& set = {})
{
    if (!(set.dt > 0.0))
        throw Error(ErrorKind::DomainError, "time step must be positive");
    if (!std::is_sorted(times.begin(), times.end()) || (!times.empty() && times.front() < 0.0))
        throw Error(ErrorKind::DomainError, "snapshot times must be ascending and non-negative");

    const std::size_t n = grid.n;
    const double hbar = s.hbar(), mu = s.mu();
    GridWavefunction psi = initial_grid_wavefunction(s, grid);
    if (detail::edge_amplitude(psi.values, set.edge_points) > set.boundary_tol)
        throw Error(ErrorKind::BoundaryLeak, "initial packet is not contained in the grid");

    std::vector<double> V(n);
    for (std::size_t j = 0; j < n; ++j)
        V[j] = evaluate(model, grid.x(j)).V;

    detail::FftPair fft(n);
    std::copy(psi.values.begin(), psi.values.end(), fft.data());
    cplx* a = fft.data();

    std::vector<GridWavefunction> out;
    out.reserve(times.size());
    double t = 0.0;
    std::vector<cplx> half_v(n), kin(n);
    double cached_dt = -1.0;

    for (double target : times) {
        const double span = target - t;
        const auto steps = static_cast<std::size_t>(std::ceil(span / set.dt - 1e-9));
        if (steps > 0) {
            const double h = span / static_cast<double>(steps);
            if (h != cached_dt) {
                for (std::size_t j = 0; j < n; ++j) {
                    half_v[j] = std::exp(-I * (0.5 * h * V[j] / hbar));
                    const double k = grid.k(j);
                    kin[j] = std::exp(-I * (h * hbar * k * k / (2.0 * mu))) / static_cast<double>(n);
                }
                cached_dt = h;
            }
            for (std::size_t st = 0; st < steps; ++st) {
                for (std::size_t j = 0; j < n; ++j)
                    a[j] *= half_v[j];
                fft.forward();
                for (std::size_t j = 0; j < n; ++j)
                    a[j] *= kin[j];
                fft.backward();
                for (std::size_t j = 0; j < n; ++j)
                    a[j] *= half_v[j];
                if (detail::edge_amplitude({a, n}, set.edge_points) > set.boundary_tol)
                    throw Error(ErrorKind::BoundaryLeak,
                                "wavefunction reached the grid boundary at t = " +
                                    csv::num(t + static_cast<double>(st + 1) * h));
            }
        }
        t = target;
        out.push_back({grid, std::vector<cplx>(a, a + n), t});
    }
    return out;
}

inline GridWavefunction propagate_grid(const PotentialModel& model, const CoherentState& s, double T,
                                       const Grid& grid, const SplitSettings& set = {})
{
    const double times[] = {T};
    return propagate_grid_snapshots(model, s, times, grid, set).front();
}

namespace detail {

/// Lowest k eigenvalues of the second-order finite-difference Hamiltonian on
/// the interior points of the grid (Dirichlet ends).
inline std::vector<double> fd_eigenvalues(const PotentialModel& model, const Grid& grid, std::size_t k, double mu,
                                          double hbar)
{
    const std::size_t m = grid.n - 1;
    const double h = grid.dx();
    const double t = hbar * hbar / (2.0 * mu * h * h);
    std::vector<double> d(m), e(m), w(m), z(1);
    for (std::size_t j = 0; j < m; ++j)
        d[j] = 2.0 * t + evaluate(model, grid.x(j + 1)).V;
    std::fill(e.begin(), e.end(), -t);
    std::vector<lapack_int> isuppz(2 * m);
    lapack_int found = 0;
    const lapack_int info =
        LAPACKE_dstevr(LAPACK_COL_MAJOR, 'N', 'I', static_cast<lapack_int>(m), d.data(), e.data(), 0.0, 0.0, 1,
                       static_cast<lapack_int>(k), 0.0, &found, w.data(), z.data(), 1, isuppz.data());
    if (info != 0 || found != static_cast<lapack_int>(k))
        throw Error(ErrorKind::NotConverged, "tridiagonal eigensolver failed (info " + std::to_string(info) + ")");
    return {w.begin(), w.begin() + static_cast<std::ptrdiff_t>(k)};
}

}  // namespace detail

/// Lowest k levels. The grid and its doubled refinement are diagonalised and
/// Richardson-combined; NotConverged is raised when the combined levels still
/// move by more than tol against the refined ones.
inline std::vector<double> eigenvalues(const PotentialModel& model, const Grid& grid, std::size_t k, double mu = 1.0,
                                       double hbar = 1.0, double tol = 1e-4)
{
    if (k == 0 || k >= grid.n / 2)
        throw Error(ErrorKind::DomainError, "requested level count does not fit the grid");
    const auto coarse = detail::fd_eigenvalues(model, grid, k, mu, hbar);
    const auto fine = detail::fd_eigenvalues(model, Grid(grid.x_min, grid.x_max, 2 * grid.n), k, mu, hbar);
    std::vector<double> out(k);
    for (std::size_t j = 0; j < k; ++j) {
        out[j] = (4.0 * fine[j] - coarse[j]) / 3.0;
        if (!(std::abs(out[j] - fine[j]) < tol))
            throw Error(ErrorKind::NotConverged, "level " + std::to_string(j) + " not converged on this grid");
    }
    return out;
}

/// Snapshot CSV: one block of rows per time.
inline void write_snapshots_csv(std::ostream& os, std::span<const GridWavefunction> snaps)
{
    csv::Writer w(os);
    w.header({"t", "x", "re", "im", "abs2"});
    for (const auto& g : snaps)
        for (std::size_t j = 0; j < g.grid.n; ++j)
            w.field(g.t).field(g.grid.x(j)).field(g.values[j].real()).field(g.values[j].imag())
                .field(std::norm(g.values[j])).end();
}

}  // namespace sctraj
