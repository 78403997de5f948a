#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sctraj/model.hpp"

using namespace sctraj;

namespace {

const double kPiQuarter = std::pow(std::numbers::pi, -0.25);

}  // namespace

TEST(CoherentState, ScalesFollowFromOscillatorFrequency)
{
    const CoherentState s(0.3, -1.1, 0.7, 2.5, 1.9);
    EXPECT_NEAR(s.b(), std::sqrt(0.7 / (2.5 * 1.9)), 1e-12 * s.b());
    EXPECT_NEAR(s.c(), std::sqrt(0.7 * 2.5 * 1.9), 1e-12 * s.c());
    EXPECT_NEAR(s.b() * s.c(), 0.7, 1e-15);
}

TEST(CoherentState, FromWidthRoundTrips)
{
    const auto s = CoherentState::from_width(1.0, 2.0, 1.0, 1.0, 0.5);
    EXPECT_NEAR(s.b(), 0.5, 1e-15);
    EXPECT_NEAR(s.omega(), 4.0, 1e-12);
    EXPECT_NEAR(s.c(), 2.0, 1e-12);
}

TEST(CoherentState, ZFromFields)
{
    const auto s = CoherentState::from_width(1.0, 2.0, 1.0, 1.0, 0.5);
    const cplx expect = (1.0 / 0.5 + I * (2.0 / 2.0)) / std::sqrt(2.0);
    EXPECT_LT(std::abs(s.z() - expect), 1e-14);
}

TEST(CoherentState, RejectsNonPositiveScales)
{
    EXPECT_THROW(CoherentState(0, 0, 0.0, 1, 1), Error);
    EXPECT_THROW(CoherentState(0, 0, 1, -1, 1), Error);
    EXPECT_THROW(CoherentState::from_width(0, 0, 1, 1, 0.0), Error);
}

TEST(CoherentOverlap, OriginValue)
{
    const CoherentState s(0, 0, 1, 1, 1);
    EXPECT_NEAR(coherent_overlap(s, 0.0).real(), kPiQuarter, 1e-15);
    EXPECT_NEAR(coherent_overlap(s, 0.0).imag(), 0.0, 1e-15);
}

TEST(CoherentOverlap, PhaseAtCentre)
{
    const auto s = CoherentState::from_width(-5.0, 0.5, 1.0, 1.0, 1.0);
    const cplx v = coherent_overlap(s, -5.0);
    EXPECT_NEAR(std::abs(v), kPiQuarter, 1e-15);
    EXPECT_NEAR(std::arg(v), -1.25, 1e-14);
}

TEST(CoherentOverlap, UnitNormByMidpointQuadrature)
{
    for (const auto& s : {CoherentState::from_width(1.0, 3.0, 1.0, 1.0, 0.4),
                          CoherentState::from_width(-2.0, -1.0, 0.5, 2.0, 1.7)}) {
        const int n = 20000;
        const double lo = s.q() - 8 * s.b(), hi = s.q() + 8 * s.b();
        const double dx = (hi - lo) / n;
        double sum = 0;
        for (int i = 0; i < n; ++i)
            sum += std::norm(coherent_overlap(s, lo + (i + 0.5) * dx)) * dx;
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(UV, RealCentreGivesZ)
{
    const auto s = CoherentState::from_width(0.7, -1.3, 1.0, 1.0, 0.8);
    const auto uv = to_uv({s.q(), s.p(), 0.0}, s);
    EXPECT_LT(std::abs(uv.u - s.z()), 1e-15);
    EXPECT_LT(std::abs(uv.v - std::conj(uv.u)), 1e-15);
}

TEST(UV, ComplexPointBreaksConjugation)
{
    const CoherentState s(0, 0, 1, 1, 1);
    const auto uv = to_uv({I, 0.0, 0.0}, s);
    EXPECT_LT(std::abs(uv.u - I / std::sqrt(2.0)), 1e-15);
    EXPECT_LT(std::abs(uv.v - I / std::sqrt(2.0)), 1e-15);
    EXPECT_GT(std::abs(uv.u - std::conj(uv.v)), 1.0);
}

TEST(UV, RoundTrip)
{
    const auto s = CoherentState::from_width(0.2, 0.9, 0.6, 1.4, 0.75);
    const ComplexPhasePoint pt{{1.3, -0.4}, {-2.2, 0.7}, 0.0};
    const auto back = from_uv(to_uv(pt, s), s);
    EXPECT_LT(std::abs(back.X - pt.X), 1e-14);
    EXPECT_LT(std::abs(back.P - pt.P), 1e-14);
}

TEST(StationarityResidual, Examples)
{
    const auto s = CoherentState::from_width(0.5, -1.5, 1.0, 1.0, 0.8);
    EXPECT_EQ(stationarity_residual(s.q(), s.p(), s), cplx(0.0));
    const cplx r = stationarity_residual(s.q() + s.b(), s.p(), s);
    EXPECT_NEAR(r.real(), 1.0, 1e-15);
    EXPECT_NEAR(r.imag(), 0.0, 1e-15);
}

TEST(StationarityResidual, FreeParticleSaddle)
{
    // Free flight: x0 + p0 T / mu = x_f together with u(0) = z.
    const auto s = CoherentState::from_width(1.0, 2.0, 1.0, 1.0, 0.7);
    const double T = 1.7, x_f = 3.1;
    const double w = s.hbar() / (s.mu() * s.b() * s.b());
    const cplx shift = (x_f - s.q() - s.p() * T / s.mu()) / (1.0 + I * w * T);
    const cplx x0 = s.q() + shift;
    const cplx p0 = s.p() + I * (s.c() / s.b()) * shift;
    EXPECT_LT(std::abs(x0 + p0 * T / s.mu() - x_f), 1e-13);
    EXPECT_LT(std::abs(stationarity_residual(x0, p0, s)), 1e-12);
}

TEST(StationarityResidual, AffineInInitialData)
{
    const auto s = CoherentState::from_width(0.5, -1.5, 1.0, 1.0, 0.8);
    const cplx x1{0.3, 0.1}, p1{-1.0, 0.4}, x2{-0.7, 1.2}, p2{2.0, -0.3};
    const double a = 0.37;
    const cplx lhs = stationarity_residual(a * x1 + (1 - a) * x2, a * p1 + (1 - a) * p2, s);
    const cplx rhs = a * stationarity_residual(x1, p1, s) + (1 - a) * stationarity_residual(x2, p2, s);
    EXPECT_LT(std::abs(lhs - rhs), 1e-14);
}

TEST(ActionSecondDerivatives, FreeParticle)
{
    const auto s = CoherentState::from_width(0, 1, 1.0, 2.0, 0.6);
    const double T = 1.3;
    const TangentMatrix m{1.0, s.omega() * T, 0.0, 1.0};
    const auto h = action_second_derivatives(m, s);
    const double muT = s.mu() / T;
    EXPECT_LT(std::abs(h.S_ii - muT), 1e-12);
    EXPECT_LT(std::abs(h.S_ff - muT), 1e-12);
    EXPECT_LT(std::abs(h.S_if + muT), 1e-12);
}

TEST(ActionSecondDerivatives, IdentityIsFocal)
{
    const CoherentState s(0, 0, 1, 1, 1);
    try {
        (void)action_second_derivatives(TangentMatrix::identity(), s);
        FAIL() << "expected FocalPoint";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::FocalPoint);
    }
}

TEST(ActionSecondDerivatives, HarmonicQuarterPeriod)
{
    // S = (mu w / 2 sin wT) ((x_i^2 + x_f^2) cos wT - 2 x_i x_f) at wT = pi/2.
    const CoherentState s(0, 0, 1.0, 1.5, 2.0);
    const TangentMatrix m{0.0, 1.0, -1.0, 0.0};
    const auto h = action_second_derivatives(m, s);
    EXPECT_LT(std::abs(h.S_ii), 1e-14);
    EXPECT_LT(std::abs(h.S_ff), 1e-14);
    EXPECT_LT(std::abs(h.S_if + s.mu() * s.omega()), 1e-12);
    EXPECT_LT(std::abs(h.S_if + s.c() / s.b()), 1e-12);
}

TEST(ActionSecondDerivatives, RoundTripReconstructsTangentMatrix)
{
    const CoherentState s(0, 0, 1.0, 1.2, 0.8);
    // A complex unit-determinant matrix.
    const cplx a{1.2, 0.3}, b{0.4, -0.7}, c{-0.5, 0.2};
    const cplx d = (1.0 + b * c) / a;
    const TangentMatrix m{a, b, c, d};
    const auto back = tangent_from_action_derivatives(action_second_derivatives(m, s), s);
    EXPECT_LT(std::abs(back.qq - m.qq), 1e-10);
    EXPECT_LT(std::abs(back.qp - m.qp), 1e-10);
    EXPECT_LT(std::abs(back.pq - m.pq), 1e-10);
    EXPECT_LT(std::abs(back.pp - m.pp), 1e-10);
}

TEST(TangentMatrix, IdentityAndProduct)
{
    const auto id = TangentMatrix::identity();
    EXPECT_EQ(id.det(), cplx(1.0));
    EXPECT_EQ(id.plus(), cplx(1.0));
    const TangentMatrix r{0.6, 0.8, -0.8, 0.6};
    const auto rr = r * r;
    EXPECT_NEAR(rr.qq.real(), 0.36 - 0.64, 1e-15);
    EXPECT_NEAR(rr.qp.real(), 0.96, 1e-15);
    EXPECT_NEAR(rr.det().real(), 1.0, 1e-15);
}
