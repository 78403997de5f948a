#pragma once

#include <array>
#include <cmath>
#include <algorithm>
#include <limits>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "sctraj/branch_tracker.hpp"
#include "sctraj/csv.hpp"
#include "sctraj/model.hpp"
#include "sctraj/potentials.hpp"

namespace sctraj {

struct IntegratorSettings {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = 0.05;
    /// Spacing of recorded samples; infinity keeps only the two end points.
    double dense_output_stride = std::numeric_limits<double>::infinity();
    /// Escape when |X| exceeds this many packet widths.
    double escape_factor = 1e3;
    long max_steps = 200000;
    /// A step may change H by at most this fraction of max(1, |H0|), or by
    /// the rounding level of H if that is larger; otherwise it is retried
    /// with a smaller step. Guards energy near poles of complex trajectories.
    double energy_step_tol = 1e-11;
    /// Real-time stretches where the energy scale of the path exceeds this
    /// multiple of its initial value are redone along a half circle in
    /// complex time; infinity disables the detour.
    double detour_factor = 20.0;
};

enum class PropagationStatus { Completed, Escaped, StepFailure };

inline std::string_view to_string(PropagationStatus s)
{
    switch (s) {
    case PropagationStatus::Completed: return "completed";
    case PropagationStatus::Escaped: return "escaped";
    case PropagationStatus::StepFailure: return "step_failure";
    }
    return "?";
}

struct PropagationResult {
    TrajectoryRecord trajectory;
    PropagationStatus status = PropagationStatus::Completed;
    bool branch_contract_violated = false;

    bool ok() const { return status == PropagationStatus::Completed; }
};

namespace detail {

// X, P, S, m_qq, m_qp, m_pq, m_pp as (re, im) pairs.
using FlowState = std::array<double, 14>;

inline cplx get(const FlowState& y, int slot) { return {y[2 * slot], y[2 * slot + 1]}; }

inline void put(FlowState& y, int slot, cplx v)
{
    y[2 * slot] = v.real();
    y[2 * slot + 1] = v.imag();
}

enum Slot { kX = 0, kP, kS, kQQ, kQP, kPQ, kPP };

struct HamiltonFlow {
    const PotentialModel& model;
    double mu;
    double omega;

    void operator()(const FlowState& y, FlowState& dy, double /*t*/) const
    {
        const cplx X = get(y, kX);
        const cplx P = get(y, kP);
        const auto v = evaluate(model, X);
        const cplx k = v.d2V / (mu * omega);
        put(dy, kX, P / mu);
        put(dy, kP, -v.dV);
        put(dy, kS, P * P / (2.0 * mu) - v.V);
        put(dy, kQQ, omega * get(y, kPQ));
        put(dy, kQP, omega * get(y, kPP));
        put(dy, kPQ, -k * get(y, kQQ));
        put(dy, kPP, -k * get(y, kQP));
    }
};

/// Magnitude of the largest term of H, which sets its rounding level.
inline double energy_scale(const PotentialModel& model, const FlowState& y, double mu)
{
    const cplx X = get(y, kX), P = get(y, kP);
    return std::max(std::norm(P) / (2.0 * mu), std::abs(evaluate(model, X).V));
}

inline cplx m_plus(const FlowState& y) { return get(y, kQQ) + I * get(y, kQP); }

inline ComplexPhasePoint point(const FlowState& y, double t) { return {get(y, kX), get(y, kP), t}; }

inline TangentMatrix tangent(const FlowState& y) { return {get(y, kQQ), get(y, kQP), get(y, kPQ), get(y, kPP)}; }

inline void record(TrajectoryRecord& rec, const FlowState& y, double t)
{
    rec.samples.push_back(point(y, t));
    rec.sample_S.push_back(get(y, kS));
    rec.sample_m.push_back(tangent(y));
}

/// Hamilton's flow along a path t(s) in complex time: dy/ds = t'(s) f(y).
template <class Path>
struct PathFlow {
    const HamiltonFlow& flow;
    Path path;

    void operator()(const FlowState& y, FlowState& dy, double s) const
    {
        flow(y, dy, 0.0);
        const cplx phi = path.derivative(s);
        for (int slot = kX; slot <= kPP; ++slot)
            put(dy, slot, phi * get(dy, slot));
    }
};

/// t(theta) = centre + radius e^{i theta}.
struct ArcPath {
    double centre, radius;
    cplx at(double theta) const { return centre + radius * std::exp(I * theta); }
    cplx derivative(double theta) const { return I * radius * std::exp(I * theta); }
};

/// t(u) = from + u (to - from) for u in [0, 1].
struct LinePath {
    cplx from, to;
    cplx derivative(double) const { return to - from; }
};

template <class Path>
bool integrate_path(const HamiltonFlow& flow, const Path& path, FlowState& y, double s0, double s1,
                    const IntegratorSettings& set)
{
    using namespace boost::numeric::odeint;
    if (s0 == s1)
        return true;
    try {
        integrate_adaptive(make_controlled<runge_kutta_dopri5<FlowState>>(set.abs_tol, set.rel_tol),
                           PathFlow<Path>{flow, path}, y, s0, s1, (s1 - s0) / 64.0);
    } catch (const std::exception&) {
        return false;
    }
    for (double v : y)
        if (!std::isfinite(v))
            return false;
    return true;
}

inline bool close_to(const FlowState& a, const FlowState& b, double tol)
{
    for (int slot : {kX, kP}) {
        const cplx u = get(a, slot), v = get(b, slot);
        if (std::abs(u - v) > tol * std::max({1.0, std::abs(u), std::abs(v)}))
            return false;
    }
    return true;
}

/// A real-time stretch [t_a, t_b] that came close to a singularity of the
/// complex flow.
struct DetourWindow {
    double t_a;
    FlowState y_a;
    std::size_t first_sample;
    double peak_scale;
    cplx singularity;  // estimated from the local pole form X ~ c / (t - t_p)
};

/// Redoes [w.t_a, t_b] along the half circle on the side of the real axis
/// away from the estimated singularity, so no singularity lies between the
/// two paths and X, P, S and m agree. Samples recorded inside the window are
/// recomputed from the arc along vertical segments at tight tolerance. The
/// result replaces y_b only if its X and P agree with the real-time values to
/// 1e-3 relative; m is the quantity the real-time path loses first.
inline bool apply_detour(const HamiltonFlow& flow, const DetourWindow& w, double t_b, bool ends_near_singularity,
                         FlowState& y_b, TrajectoryRecord& rec, const IntegratorSettings& set)
{
    if (!(t_b > w.t_a))
        return false;
    const double side = w.singularity.imag() >= 0.0 ? -1.0 : 1.0;
    const ArcPath arc{0.5 * (w.t_a + t_b), 0.5 * (t_b - w.t_a)};
    FlowState y = w.y_a;
    double theta = side * std::numbers::pi;

    IntegratorSettings fine = set;
    fine.abs_tol = fine.rel_tol = 1e-15;
    std::vector<std::pair<std::size_t, FlowState>> resampled;
    for (std::size_t k = w.first_sample; k < rec.samples.size(); ++k) {
        const double tk = rec.samples[k].t;
        if (!(tk > w.t_a && tk < t_b))
            continue;
        const double theta_k = side * std::acos(std::clamp((tk - arc.centre) / arc.radius, -1.0, 1.0));
        if (!integrate_path(flow, arc, y, theta, theta_k, set))
            return false;
        theta = theta_k;
        const LinePath down{arc.at(theta_k), cplx(tk)};
        FlowState yk = y;
        if (!integrate_path(flow, down, yk, 0.0, 1.0, fine)) {
            yk = y;
            if (!integrate_path(flow, down, yk, 0.0, 1.0, set))
                continue;
        }
        resampled.emplace_back(k, yk);
    }
    if (!integrate_path(flow, arc, y, theta, 0.0, ends_near_singularity ? fine : set))
        return false;
    if (!close_to(y, y_b, 1e-3))
        return false;
    y_b = y;
    for (const auto& [k, yk] : resampled) {
        rec.samples[k] = point(yk, rec.samples[k].t);
        rec.sample_S[k] = get(yk, kS);
        rec.sample_m[k] = tangent(yk);
    }
    return true;
}

template <class F>
void sample_times(double T, double stride, F&& add)
{
    add(0.0);
    if (T <= 0.0)
        return;
    if (std::isfinite(stride))
        for (long k = 1; k * stride < T - 1e-13 * std::max(1.0, T); ++k)
            add(k * stride);
    add(T);
}

}  // namespace detail

/// Integrates Hamilton's equations for complex (X, P) together with the action
/// S = int (P^2/2mu - V) dt and the tangent matrix in the scaled basis of
/// `state`, starting from m = identity.
inline PropagationResult propagate(const PotentialModel& model, cplx X0, cplx P0, double T,
                                   const CoherentState& state, const IntegratorSettings& settings = {})
{
    using namespace boost::numeric::odeint;
    using detail::FlowState;

    if (T < 0.0 || !is_finite(X0) || !is_finite(P0))
        throw Error(ErrorKind::DomainError, "propagate needs T >= 0 and finite initial data");

    const double mu = state.mu();
    const detail::HamiltonFlow flow{model, mu, state.omega()};

    FlowState y{};
    detail::put(y, detail::kX, X0);
    detail::put(y, detail::kP, P0);
    detail::put(y, detail::kQQ, 1.0);
    detail::put(y, detail::kPP, 1.0);

    PropagationResult res;
    auto& rec = res.trajectory;
    rec.energy0 = hamiltonian(model, {X0, P0, 0.0}, mu);
    detail::record(rec, y, 0.0);

    const double escape = settings.escape_factor * state.b();
    const double t_eps = 1e-13 * std::max(1.0, T);
    const double stride = settings.dense_output_stride;

    BranchTracker tracker;
    auto stepper = make_controlled<runge_kutta_dopri5<FlowState>>(settings.abs_tol, settings.rel_tol);

    double t = 0.0;
    double dt = std::min({settings.max_step, T > 0.0 ? T : 1.0, 1e-2});
    cplx H_prev = rec.energy0;
    const double detour_threshold =
        settings.detour_factor * std::max({1.0, std::abs(rec.energy0), detail::energy_scale(model, y, mu)});
    std::optional<detail::DetourWindow> window;
    double next_out = std::isfinite(stride) ? std::min(stride, T) : T;
    long steps = 0;

    while (t < T - t_eps) {
        if (++steps > settings.max_steps) {
            res.status = PropagationStatus::StepFailure;
            break;
        }
        const double clip = std::min({dt, next_out - t, settings.max_step});
        double t_try = t;
        double dt_try = clip;
        FlowState y_try = y;
        if (stepper.try_step(flow, y_try, t_try, dt_try) != success) {
            dt = dt_try;
            if (dt < 1e-14 * std::max(1.0, T)) {
                res.status = PropagationStatus::StepFailure;
                break;
            }
            continue;
        }
        const cplx H_try = hamiltonian(model, detail::point(y_try, t_try), mu);
        const double scale = detail::energy_scale(model, y_try, mu);
        const double energy_budget =
            std::max(settings.energy_step_tol * std::max(1.0, std::abs(rec.energy0)),
                     64.0 * std::numeric_limits<double>::epsilon() * scale);
        // Inside a detour window the complex-time path supplies the accuracy.
        if (scale <= detour_threshold && std::abs(H_try - H_prev) > energy_budget) {
            stepper.reset();
            dt = 0.5 * clip;
            if (dt < 1e-14 * std::max(1.0, T)) {
                res.status = PropagationStatus::StepFailure;
                break;
            }
            continue;
        }
        // Keep the prefactor phase resolvable between accepted steps.
        const cplx mp = detail::m_plus(y_try);
        if (std::abs(std::arg(mp / tracker.previous())) > std::numbers::pi / 4) {
            stepper.reset();
            dt = 0.5 * clip;
            if (dt < 1e-14 * std::max(1.0, T)) {
                res.status = PropagationStatus::StepFailure;
                break;
            }
            continue;
        }
        tracker.update(mp);
        rec.min_abs_m_plus = std::min(rec.min_abs_m_plus, std::abs(mp));
        if (scale > detour_threshold) {
            if (!window)
                window = detail::DetourWindow{t, y, rec.samples.size(), 0.0, 0.0};
            if (scale > window->peak_scale) {
                const cplx X = detail::get(y_try, detail::kX), P = detail::get(y_try, detail::kP);
                window->peak_scale = scale;
                window->singularity = t_try + X * mu / P;
            }
        }
        y = y_try;
        t = t_try;
        dt = dt_try;
        H_prev = H_try;
        if (std::abs(next_out - t) <= t_eps)
            t = next_out;
        if (window && (scale <= detour_threshold || t >= T - t_eps)) {
            if (detail::apply_detour(flow, *window, t, scale > detour_threshold, y, rec, settings)) {
                stepper.reset();
                tracker.update(detail::m_plus(y));
                H_prev = hamiltonian(model, detail::point(y, t), mu);
            }
            window.reset();
        }

        const cplx X = detail::get(y, detail::kX);
        if (!is_finite(X) || !is_finite(detail::get(y, detail::kP))) {
            res.status = PropagationStatus::StepFailure;
            break;
        }
        if (std::abs(X) > escape) {
            res.status = PropagationStatus::Escaped;
            break;
        }
        if (t == next_out) {
            detail::record(rec, y, t);
            next_out = std::min(next_out + stride, T);
        }
    }

    if (res.status != PropagationStatus::Completed && rec.samples.back().t < t)
        detail::record(rec, y, t);

    rec.S = detail::get(y, detail::kS);
    rec.m = detail::tangent(y);
    rec.sqrt_m_plus = tracker.root();
    res.branch_contract_violated = tracker.contract_violated();
    return res;
}

/// Exact flow of the free particle.
inline TrajectoryRecord free_trajectory(cplx X0, cplx P0, double T, const CoherentState& state,
                                        double stride = std::numeric_limits<double>::infinity())
{
    const double mu = state.mu();
    const double w = state.omega();
    TrajectoryRecord rec;
    rec.energy0 = P0 * P0 / (2.0 * mu);
    auto add = [&](double t) {
        rec.samples.push_back({X0 + P0 * t / mu, P0, t});
        rec.sample_S.push_back(rec.energy0 * t);
        rec.sample_m.push_back({1.0, w * t, 0.0, 1.0});
    };
    detail::sample_times(T, stride, add);
    rec.S = rec.sample_S.back();
    rec.m = rec.sample_m.back();
    // 1 + i w T stays in the right half plane.
    rec.sqrt_m_plus = std::sqrt(rec.m.plus());
    return rec;
}

/// Exact flow of V = mu Omega^2 X^2 / 2 where Omega is the potential's
/// frequency (which need not match the packet's).
inline TrajectoryRecord harmonic_trajectory(const PotentialModel& model, cplx X0, cplx P0, double T,
                                            const CoherentState& state,
                                            double stride = std::numeric_limits<double>::infinity())
{
    const double mu = state.mu();
    const double W = model.omega * std::sqrt(model.mu / mu);
    const double w = state.omega();
    TrajectoryRecord rec;
    rec.energy0 = P0 * P0 / (2.0 * mu) + 0.5 * mu * W * W * X0 * X0;
    auto add = [&](double t) {
        const double cs = std::cos(W * t), sn = std::sin(W * t);
        const cplx X = X0 * cs + P0 / (mu * W) * sn;
        const cplx P = P0 * cs - mu * W * X0 * sn;
        rec.samples.push_back({X, P, t});
        // d(XP)/dt = 2L for a quadratic potential.
        rec.sample_S.push_back(0.5 * (X * P - X0 * P0));
        rec.sample_m.push_back({cs, (w / W) * sn, -(W / w) * sn, cs});
    };
    detail::sample_times(T, stride, add);
    rec.S = rec.sample_S.back();
    rec.m = rec.sample_m.back();

    BranchTracker tracker;
    const double dt = std::numbers::pi / (8.0 * W);
    for (double t = dt; t < T; t += dt) {
        const cplx mp(std::cos(W * t), (w / W) * std::sin(W * t));
        tracker.update(mp);
        rec.min_abs_m_plus = std::min(rec.min_abs_m_plus, std::abs(mp));
    }
    rec.sqrt_m_plus = tracker.update(rec.m.plus());
    rec.min_abs_m_plus = std::min(rec.min_abs_m_plus, std::abs(rec.m.plus()));
    return rec;
}

/// Bundles what every trajectory search needs. With closed_form set, free and
/// harmonic models use their exact flows instead of the integrator.
struct Propagator {
    PotentialModel model;
    CoherentState state;
    IntegratorSettings settings{};
    bool closed_form = false;

    PropagationResult operator()(cplx X0, cplx P0, double T) const
    {
        if (closed_form && model.kind == PotentialKind::Free)
            return {free_trajectory(X0, P0, T, state, settings.dense_output_stride)};
        if (closed_form && model.kind == PotentialKind::Harmonic)
            return {harmonic_trajectory(model, X0, P0, T, state, settings.dense_output_stride)};
        return propagate(model, X0, P0, T, state, settings);
    }
};

struct CentralEndpoint {
    double q_T, p_T, S;
    TangentMatrix m;
    cplx sqrt_m_plus;
};

/// Real central trajectory of the packet, started at (q, p).
inline CentralEndpoint central_endpoint(const Propagator& prop, double T)
{
    const auto& state = prop.state;
    const auto res = prop(state.q(), state.p(), T);
    if (res.status == PropagationStatus::Escaped)
        throw Error(ErrorKind::Escaped, "central trajectory escaped");
    if (res.status == PropagationStatus::StepFailure)
        throw Error(ErrorKind::StepFailure, "central trajectory integration failed");
    const auto& r = res.trajectory;
    const auto& f = r.final();
    const TangentMatrix m{r.m.qq.real(), r.m.qp.real(), r.m.pq.real(), r.m.pp.real()};
    return {f.X.real(), f.P.real(), r.S.real(), m, r.sqrt_m_plus};
}

inline CentralEndpoint central_endpoint(const PotentialModel& model, const CoherentState& state, double T,
                                        const IntegratorSettings& settings = {})
{
    return central_endpoint(Propagator{model, state, settings}, T);
}

enum class WallPath { Direct, Reflected };

struct WallTrajectory {
    double S;
    double p_i;
    double p_f;
    WallPath kind;
};

/// The two real paths between x_i > 0 and x_f > 0 in time T with a hard wall at the origin.
inline std::vector<WallTrajectory> wall_trajectories(double x_i, double x_f, double T, double mu)
{
    if (!(x_i > 0.0) || !(x_f > 0.0) || !(T > 0.0))
        throw Error(ErrorKind::DomainError, "wall paths need x_i, x_f, T > 0");
    const double vd = (x_f - x_i) / T;
    const double vr = (x_f + x_i) / T;
    return {
        {0.5 * mu * vd * vd * T, mu * vd, mu * vd, WallPath::Direct},
        {0.5 * mu * vr * vr * T, -mu * vr, mu * vr, WallPath::Reflected},
    };
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec)
{
    csv::Writer w(os);
    w.header({"t", "re_X", "im_X", "re_P", "im_P", "re_S", "im_S", "re_m_qq", "im_m_qq", "re_m_qp",
              "im_m_qp", "re_m_pq", "im_m_pq", "re_m_pp", "im_m_pp"});
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        const auto& s = rec.samples[i];
        const auto& m = rec.sample_m[i];
        w.field(s.t).field(s.X.real()).field(s.X.imag()).field(s.P.real()).field(s.P.imag());
        for (cplx v : {rec.sample_S[i], m.qq, m.qp, m.pq, m.pp})
            w.field(v.real()).field(v.imag());
        w.end();
    }
}

}  // namespace sctraj
