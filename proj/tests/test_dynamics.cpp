#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "sctraj/dynamics.hpp"
#include "test_support.hpp"

using namespace sctraj;
using namespace sctraj::testing;

TEST(Propagate, FreeParticleClosedForm)
{
    const auto s = CoherentState::from_width(0.0, 1.5, 1.0, 2.0, 0.7);
    const double x_i = -0.4, p = 1.5, T = 2.3;
    const auto res = propagate(PotentialModel::free(), x_i, p, T, s);
    ASSERT_TRUE(res.ok());
    const auto& r = res.trajectory;
    const double x_f = x_i + p * T / s.mu();
    EXPECT_NEAR(r.final().X.real(), x_f, 1e-10);
    EXPECT_NEAR(r.final().P.real(), p, 1e-12);
    EXPECT_NEAR(r.S.real(), s.mu() * (x_f - x_i) * (x_f - x_i) / (2 * T), 1e-10);
    EXPECT_LT(std::abs(r.m.qq - 1.0), 1e-12);
    EXPECT_LT(std::abs(r.m.qp - s.omega() * T), 1e-10);
    EXPECT_LT(std::abs(r.m.pq), 1e-12);
    EXPECT_LT(std::abs(r.m.pp - 1.0), 1e-12);
}

TEST(Propagate, HarmonicTangentMatrixIsRotation)
{
    const double w = 1.3;
    const CoherentState s(0.5, -0.2, 1.0, 1.0, w);
    for (double T : {0.4, 1.9, 5.0}) {
        const auto res = propagate(PotentialModel::harmonic(1.0, w), cplx(0.3, 0.2), cplx(-0.1, 0.4), T, s);
        ASSERT_TRUE(res.ok());
        const auto& m = res.trajectory.m;
        EXPECT_LT(std::abs(m.qq - std::cos(w * T)), 1e-9);
        EXPECT_LT(std::abs(m.qp - std::sin(w * T)), 1e-9);
        EXPECT_LT(std::abs(m.pq + std::sin(w * T)), 1e-9);
        EXPECT_LT(std::abs(m.pp - std::cos(w * T)), 1e-9);
    }
}

TEST(Propagate, QuarticReturnsAfterOnePeriod)
{
    const auto res = propagate(quartic_model(), 0.0, -2.0, 4.7, quartic_state());
    ASSERT_TRUE(res.ok());
    EXPECT_LT(std::abs(res.trajectory.final().X), 0.1);
    EXPECT_LT(std::abs(res.trajectory.final().P + 2.0), 0.1);
}

TEST(Propagate, CompletedEndsExactlyAtT)
{
    IntegratorSettings set;
    set.dense_output_stride = 0.3;
    const auto res = propagate(quartic_model(), cplx(0.2, 0.1), cplx(-2.0, 0.3), 3.17, quartic_state(), set);
    ASSERT_TRUE(res.ok());
    EXPECT_NEAR(res.trajectory.final().t, 3.17, 1e-12);
    const auto& smp = res.trajectory.samples;
    EXPECT_EQ(smp.front().t, 0.0);
    for (std::size_t k = 1; k < smp.size(); ++k)
        EXPECT_GT(smp[k].t, smp[k - 1].t);
    EXPECT_EQ(res.trajectory.sample_m.size(), smp.size());
    EXPECT_EQ(res.trajectory.sample_S.size(), smp.size());
}

TEST(Propagate, ZeroTimeIsIdentity)
{
    const auto res = propagate(quartic_model(), cplx(0.2, 0.1), cplx(-2.0, 0.3), 0.0, quartic_state());
    ASSERT_TRUE(res.ok());
    EXPECT_EQ(res.trajectory.m.plus(), cplx(1.0));
    EXPECT_EQ(res.trajectory.S, cplx(0.0));
    EXPECT_EQ(res.trajectory.sqrt_m_plus, cplx(1.0));
}

TEST(Propagate, RealInputStaysReal)
{
    IntegratorSettings set;
    set.dense_output_stride = 0.1;
    const struct {
        PotentialModel model;
        CoherentState state;
    } cases[] = {
        {PotentialModel::inverted_gaussian(), CoherentState::from_width(-5.0, 0.5, 1.0, 1.0, 1.0)},
        {quartic_model(), quartic_state()},
        {PotentialModel::harmonic(1.0, 1.3), CoherentState(1.0, -0.5, 1.0, 1.0, 1.3)},
    };
    for (const auto& c : cases) {
        const auto res = propagate(c.model, c.state.q(), c.state.p(), 7.0, c.state, set);
        ASSERT_TRUE(res.ok());
        for (std::size_t k = 0; k < res.trajectory.samples.size(); ++k) {
            const auto& pt = res.trajectory.samples[k];
            EXPECT_LT(std::abs(pt.X.imag()), 1e-9);
            EXPECT_LT(std::abs(pt.P.imag()), 1e-9);
            EXPECT_LT(std::abs(res.trajectory.sample_S[k].imag()), 1e-9);
        }
    }
}

TEST(Propagate, TimeReversal)
{
    for (cplx w : {cplx(0.0), cplx(0.3, 0.2), cplx(-0.4, 0.5)}) {
        const auto s = quartic_state();
        const auto p0 = launch_point(s, w);
        const double T = 3.3;
        const auto fwd = propagate(quartic_model(), p0.X, p0.P, T, s);
        ASSERT_TRUE(fwd.ok());
        const auto& f = fwd.trajectory.final();
        const auto back = propagate(quartic_model(), f.X, -f.P, T, s);
        ASSERT_TRUE(back.ok());
        EXPECT_LT(std::abs(back.trajectory.final().X - p0.X), 1e-7);
        EXPECT_LT(std::abs(back.trajectory.final().P + p0.P), 1e-7);
    }
}

TEST(Propagate, EscapeIsReported)
{
    IntegratorSettings set;
    set.escape_factor = 5.0;
    const auto s = CoherentState::from_width(0.0, 10.0, 1.0, 1.0, 1.0);
    const auto res = propagate(PotentialModel::free(), 0.0, 10.0, 1.0, s, set);
    EXPECT_EQ(res.status, PropagationStatus::Escaped);
    EXPECT_FALSE(res.ok());
}

TEST(Propagate, ClosedFormsAgreeWithIntegrator)
{
    const auto s = CoherentState(0.4, 1.1, 1.0, 1.0, 1.3);
    const cplx X0{0.4, 0.3}, P0{1.1, -0.6};
    for (double T : {0.7, 3.9}) {
        const auto fr = free_trajectory(X0, P0, T, s);
        const auto fn = propagate(PotentialModel::free(), X0, P0, T, s).trajectory;
        EXPECT_LT(std::abs(fr.final().X - fn.final().X), 1e-10);
        EXPECT_LT(std::abs(fr.S - fn.S), 1e-10);
        EXPECT_LT(std::abs(fr.sqrt_m_plus - fn.sqrt_m_plus), 1e-10);

        const auto model = PotentialModel::harmonic(1.0, 1.3);
        const auto hr = harmonic_trajectory(model, X0, P0, T, s);
        const auto hn = propagate(model, X0, P0, T, s).trajectory;
        EXPECT_LT(std::abs(hr.final().X - hn.final().X), 1e-9);
        EXPECT_LT(std::abs(hr.final().P - hn.final().P), 1e-9);
        EXPECT_LT(std::abs(hr.S - hn.S), 1e-9);
        EXPECT_LT(std::abs(hr.m.qp - hn.m.qp), 1e-9);
        EXPECT_LT(std::abs(hr.sqrt_m_plus - hn.sqrt_m_plus), 1e-9);
    }
}

TEST(Propagate, HarmonicPrefactorBranchAfterSeveralTurns)
{
    // m_qq + i m_qp = exp(i w T) for a matched oscillator, so the tracked root
    // is exp(i w T / 2) with no principal-branch folding.
    const double w = 1.0;
    const CoherentState s(0, 0, 1, 1, w);
    for (double T : {2.0, 4.0, 7.0, 11.0}) {
        const auto res = propagate(PotentialModel::harmonic(1.0, w), 0.5, 0.0, T, s);
        ASSERT_TRUE(res.ok());
        EXPECT_LT(std::abs(res.trajectory.sqrt_m_plus - std::exp(0.5 * I * w * T)), 1e-8) << "T=" << T;
    }
}

TEST(Propagate, NearSingularityDetourKeepsEnergy)
{
    // This launch point passes within ~0.003 of a pole of X(t) near t = 6.08.
    const auto s = quartic_state();
    const auto p0 = launch_point(s, cplx(0.75, -1.25));
    IntegratorSettings with, without;
    without.detour_factor = std::numeric_limits<double>::infinity();
    const auto a = propagate(quartic_model(), p0.X, p0.P, 6.5, s, with);
    const auto b = propagate(quartic_model(), p0.X, p0.P, 6.5, s, without);
    ASSERT_TRUE(a.ok());
    ASSERT_TRUE(b.ok());
    const cplx H0 = a.trajectory.energy0;
    const double err_with = std::abs(hamiltonian(quartic_model(), a.trajectory.final(), 1.0) - H0);
    const double err_without = std::abs(hamiltonian(quartic_model(), b.trajectory.final(), 1.0) - H0);
    EXPECT_LT(err_with, 1e-8);
    EXPECT_LT(err_with, err_without);
    EXPECT_LT(std::abs(a.trajectory.final().X - b.trajectory.final().X), 1e-3 * std::abs(a.trajectory.final().X));
    EXPECT_LT(std::abs(a.trajectory.m.det() - 1.0), 1e-8);
}

TEST(CentralEndpoint, FreeParticle)
{
    const auto s = CoherentState::from_width(1.0, 1.5, 1.0, 2.0, 0.7);
    const auto c = central_endpoint(PotentialModel::free(), s, 3.0);
    EXPECT_NEAR(c.q_T, 1.0 + 1.5 * 3.0 / 2.0, 1e-10);
    EXPECT_NEAR(c.p_T, 1.5, 1e-12);
}

TEST(CentralEndpoint, HarmonicFullPeriod)
{
    const double w = 1.3;
    const CoherentState s(1.0, -0.5, 1.0, 1.0, w);
    const auto c = central_endpoint(PotentialModel::harmonic(1.0, w), s, 2 * std::numbers::pi / w);
    EXPECT_NEAR(c.q_T, 1.0, 1e-8);
    EXPECT_NEAR(c.p_T, -0.5, 1e-8);
}

TEST(CentralEndpoint, QuarticHalfPeriod)
{
    const auto c = central_endpoint(quartic_model(), quartic_state(), 2.35);
    EXPECT_LT(std::abs(c.q_T), 0.1);
    EXPECT_LT(std::abs(c.p_T - 2.0), 0.1);
}

TEST(WallTrajectories, Example)
{
    const auto w = wall_trajectories(4.0, 1.0, 1.0, 1.0);
    ASSERT_EQ(w.size(), 2u);
    EXPECT_EQ(w[0].kind, WallPath::Direct);
    EXPECT_DOUBLE_EQ(w[0].S, 4.5);
    EXPECT_EQ(w[1].kind, WallPath::Reflected);
    EXPECT_DOUBLE_EQ(w[1].S, 12.5);
    EXPECT_DOUBLE_EQ(w[1].p_f, 5.0);
    EXPECT_DOUBLE_EQ(w[1].p_i, -5.0);
}

TEST(WallTrajectories, ZeroDisplacementAndMomentumReversal)
{
    for (double T : {0.3, 2.0}) {
        const auto w = wall_trajectories(2.5, 2.5, T, 1.7);
        EXPECT_DOUBLE_EQ(w[0].S, 0.0);
        EXPECT_DOUBLE_EQ(w[1].p_i, -w[1].p_f);
    }
    EXPECT_THROW(wall_trajectories(-1.0, 1.0, 1.0, 1.0), Error);
}

TEST(BranchTracker, FollowsAFullTurn)
{
    BranchTracker tr;
    for (int k = 1; k <= 64; ++k)
        tr.update(std::polar(1.0, 2 * std::numbers::pi * k / 64));
    EXPECT_LT(std::abs(tr.root() + 1.0), 1e-12);
    EXPECT_EQ(tr.half_turns(), 1);
    EXPECT_FALSE(tr.contract_violated());
}

TEST(BranchTracker, FlagsCoarseSampling)
{
    BranchTracker tr;
    tr.update(std::polar(1.0, 2.0));
    EXPECT_TRUE(tr.contract_violated());
}

TEST(TrajectoryCsv, HeaderAndRows)
{
    IntegratorSettings set;
    set.dense_output_stride = 0.5;
    const auto res = propagate(quartic_model(), 0.0, -2.0, 1.0, quartic_state(), set);
    std::ostringstream os;
    write_trajectory_csv(os, res.trajectory);
    std::istringstream in(os.str());
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), 14);
    int rows = 0;
    for (std::string line; std::getline(in, line);)
        ++rows;
    EXPECT_EQ(rows, static_cast<int>(res.trajectory.samples.size()));
}
