#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "sctraj/error.hpp"

namespace sctraj {

using cplx = std::complex<double>;

inline constexpr cplx I{0.0, 1.0};

/// Gaussian packet centred at (q, p). The length and momentum scales b and c
/// are derived from (hbar, mu, omega), so b * c == hbar holds by construction.
class CoherentState {
public:
    CoherentState(double q, double p, double hbar, double mu, double omega)
        : q_(q), p_(p), hbar_(hbar), mu_(mu), omega_(omega),
          b_(std::sqrt(hbar / (mu * omega))), c_(hbar / b_)
    {
        if (!(hbar > 0.0) || !(mu > 0.0) || !(omega > 0.0))
            throw Error(ErrorKind::DomainError, "coherent state needs hbar, mu, omega > 0");
    }

    /// Packet specified by its width b instead of the oscillator frequency.
    static CoherentState from_width(double q, double p, double hbar, double mu, double b)
    {
        if (!(b > 0.0))
            throw Error(ErrorKind::DomainError, "coherent state needs b > 0");
        return CoherentState(q, p, hbar, mu, hbar / (mu * b * b));
    }

    double q() const { return q_; }
    double p() const { return p_; }
    double hbar() const { return hbar_; }
    double mu() const { return mu_; }
    double omega() const { return omega_; }
    double b() const { return b_; }
    double c() const { return c_; }

    cplx z() const { return (q_ / b_ + I * (p_ / c_)) / std::numbers::sqrt2; }

private:
    double q_, p_, hbar_, mu_, omega_;
    double b_, c_;
};

struct ComplexPhasePoint {
    cplx X;
    cplx P;
    double t = 0.0;
};

inline bool is_finite(cplx v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); }

inline bool is_finite(const ComplexPhasePoint& pt)
{
    return is_finite(pt.X) && is_finite(pt.P) && std::isfinite(pt.t);
}

/// Linearised flow in the scaled basis (dx/b, dp/c).
struct TangentMatrix {
    cplx qq{1.0}, qp{0.0}, pq{0.0}, pp{1.0};

    static TangentMatrix identity() { return {}; }

    cplx det() const { return qq * pp - qp * pq; }

    /// m_qq + i m_qp: the prefactor argument of every wavefunction formula and
    /// the derivative of the final position along the coherent-state family.
    cplx plus() const { return qq + I * qp; }

    TangentMatrix operator*(const TangentMatrix& o) const
    {
        return {qq * o.qq + qp * o.pq, qq * o.qp + qp * o.pp,
                pq * o.qq + pp * o.pq, pq * o.qp + pp * o.pp};
    }
};

struct TrajectoryRecord {
    std::vector<ComplexPhasePoint> samples;
    /// Running action and tangent matrix at each sample (same length as samples).
    std::vector<cplx> sample_S;
    std::vector<TangentMatrix> sample_m;
    cplx S{0.0};
    TangentMatrix m;
    cplx energy0{0.0};
    /// sqrt(m_qq + i m_qp) at the final time, on the branch continued from +1 at t = 0.
    cplx sqrt_m_plus{1.0};
    /// Smallest |m_qq + i m_qp| seen along the path; small values mean the
    /// tracked branch of sqrt_m_plus is fragile.
    double min_abs_m_plus = 1.0;

    const ComplexPhasePoint& initial() const { return samples.front(); }
    const ComplexPhasePoint& final() const { return samples.back(); }
    double duration() const { return samples.back().t; }
};

/// <x|z>: the initial packet in the position representation.
inline cplx coherent_overlap(const CoherentState& s, double x)
{
    const double norm = std::pow(std::numbers::pi, -0.25) / std::sqrt(s.b());
    const double d = (x - s.q()) / s.b();
    return norm * std::exp(cplx(-0.5 * d * d, s.p() * (x - 0.5 * s.q()) / s.hbar()));
}

struct UV {
    cplx u, v;
};

inline UV to_uv(const ComplexPhasePoint& pt, const CoherentState& s)
{
    const cplx xs = pt.X / s.b();
    const cplx ps = I * pt.P / s.c();
    return {(xs + ps) / std::numbers::sqrt2, (xs - ps) / std::numbers::sqrt2};
}

inline ComplexPhasePoint from_uv(UV uv, const CoherentState& s, double t = 0.0)
{
    const cplx X = s.b() * (uv.u + uv.v) / std::numbers::sqrt2;
    const cplx P = s.c() * (uv.u - uv.v) / (std::numbers::sqrt2 * I);
    return {X, P, t};
}

/// Zero exactly when u(0) = z, i.e. at a saddle of the x_i integral.
inline cplx stationarity_residual(cplx x0, cplx p0, const CoherentState& s)
{
    return (x0 - s.q()) / s.b() + I * (p0 - s.p()) / s.c();
}

struct ActionHessian {
    cplx S_ii, S_if, S_ff;
};

inline constexpr double kFocalThreshold = 1e-12;

inline ActionHessian action_second_derivatives(const TangentMatrix& m, const CoherentState& s)
{
    if (std::abs(m.qp) < kFocalThreshold)
        throw Error(ErrorKind::FocalPoint, "m_qp vanishes; the Van Vleck form diverges here");
    const double r = s.c() / s.b();
    return {r * m.qq / m.qp, -r / m.qp, r * m.pp / m.qp};
}

/// Inverse of action_second_derivatives, assuming a unit-determinant m.
inline TangentMatrix tangent_from_action_derivatives(const ActionHessian& h, const CoherentState& s)
{
    const double r = s.c() / s.b();
    return {-h.S_ii / h.S_if, -r / h.S_if,
            (h.S_if - h.S_ff * h.S_ii / h.S_if) / r, -h.S_ff / h.S_if};
}

}  // namespace sctraj
