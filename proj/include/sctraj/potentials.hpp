#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <string_view>

#include "sctraj/model.hpp"

namespace sctraj {

enum class PotentialKind { Free, Harmonic, InvertedGaussian, Quartic };

/// V(X) for the supported smooth potentials.
///   Free:             0
///   Harmonic:         mu omega^2 X^2 / 2
///   InvertedGaussian: -exp(-X^2)
///   Quartic:          A X^2 + B X^4
/// All are entire, so the same expressions continue to complex X.
struct PotentialModel {
    PotentialKind kind = PotentialKind::Free;
    double mu = 1.0;     // Harmonic only
    double omega = 1.0;  // Harmonic only
    double A = 0.0;      // Quartic only
    double B = 0.0;      // Quartic only

    static PotentialModel free() { return {}; }
    static PotentialModel harmonic(double mu, double omega)
    {
        return {PotentialKind::Harmonic, mu, omega, 0.0, 0.0};
    }
    static PotentialModel inverted_gaussian() { return {PotentialKind::InvertedGaussian}; }
    static PotentialModel quartic(double A, double B)
    {
        return {PotentialKind::Quartic, 1.0, 1.0, A, B};
    }

    bool is_quadratic() const
    {
        return kind == PotentialKind::Free || kind == PotentialKind::Harmonic;
    }
};

inline std::string_view to_string(PotentialKind k)
{
    switch (k) {
    case PotentialKind::Free: return "free";
    case PotentialKind::Harmonic: return "harmonic";
    case PotentialKind::InvertedGaussian: return "inverted_gaussian";
    case PotentialKind::Quartic: return "quartic";
    }
    return "?";
}

template <class T>
struct PotentialValue {
    T V, dV, d2V;
};

namespace detail {

template <class T>
PotentialValue<T> evaluate_impl(const PotentialModel& m, T x)
{
    switch (m.kind) {
    case PotentialKind::Free:
        return {T(0), T(0), T(0)};
    case PotentialKind::Harmonic: {
        const double k = m.mu * m.omega * m.omega;
        return {0.5 * k * x * x, k * x, T(k)};
    }
    case PotentialKind::InvertedGaussian: {
        const T g = std::exp(-x * x);
        return {-g, 2.0 * x * g, (2.0 - 4.0 * x * x) * g};
    }
    case PotentialKind::Quartic: {
        const T x2 = x * x;
        return {m.A * x2 + m.B * x2 * x2, 2.0 * m.A * x + 4.0 * m.B * x2 * x,
                2.0 * m.A + 12.0 * m.B * x2};
    }
    }
    return {T(0), T(0), T(0)};
}

}  // namespace detail

/// Real arguments take a real arithmetic path, so the imaginary parts are exactly zero.
inline PotentialValue<cplx> evaluate(const PotentialModel& m, cplx X)
{
    if (X.imag() == 0.0) {
        const auto r = detail::evaluate_impl<double>(m, X.real());
        return {r.V, r.dV, r.d2V};
    }
    return detail::evaluate_impl<cplx>(m, X);
}

inline PotentialValue<double> evaluate(const PotentialModel& m, double x)
{
    return detail::evaluate_impl<double>(m, x);
}

inline cplx hamiltonian(const PotentialModel& m, const ComplexPhasePoint& pt, double mu)
{
    return pt.P * pt.P / (2.0 * mu) + evaluate(m, pt.X).V;
}

}  // namespace sctraj
