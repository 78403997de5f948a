#pragma once

#include "sctraj/model.hpp"

namespace sctraj {

/// F = S + p (x0 - q/2) + i hbar (x0 - q)^2 / 2b^2, so that the complex-trajectory
/// wavefunction carries exp(i F / hbar). Im F >= 0 on real trajectories.
inline cplx exponent_F(const TrajectoryRecord& traj, const CoherentState& s)
{
    const cplx x0 = traj.initial().X;
    const cplx d = x0 - s.q();
    return traj.S + s.p() * (x0 - 0.5 * s.q()) + I * s.hbar() * d * d / (2.0 * s.b() * s.b());
}

}  // namespace sctraj
