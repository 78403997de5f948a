#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include "sctraj/model.hpp"

namespace sctraj {

/// Follows the phase of m_qq + i m_qp continuously from its t = 0 value of 1
/// so that the square root in the prefactor never jumps sign.
///
/// Consecutive values must differ in phase by less than pi/2; a larger jump is
/// recorded in contract_violated() rather than silently mis-assigned.
class BranchTracker {
public:
    BranchTracker() = default;

    /// Feeds the next value and returns its square root on the tracked branch.
    cplx update(cplx value)
    {
        const double step = std::arg(value / previous_);
        if (std::abs(step) >= std::numbers::pi / 2)
            violated_ = true;
        phase_ += step;
        previous_ = value;
        return root();
    }

    cplx root() const { return std::polar(std::sqrt(std::abs(previous_)), 0.5 * phase_); }

    /// Unwrapped phase of the tracked value.
    double phase() const { return phase_; }

    /// Full turns of the tracked value, i.e. sign flips of the root relative to
    /// the principal square root.
    int half_turns() const
    {
        return static_cast<int>(std::round((phase_ - std::arg(previous_)) / (2.0 * std::numbers::pi)));
    }

    cplx previous() const { return previous_; }
    bool contract_violated() const { return violated_; }

private:
    cplx previous_{1.0};
    double phase_ = 0.0;
    bool violated_ = false;
};

}  // namespace sctraj
