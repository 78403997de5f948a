#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sctraj/dynamics.hpp"
#include "sctraj/exponent.hpp"
#include "sctraj/rootsearch.hpp"

namespace sctraj {

enum class Formula { CT, QP, XFQ, XFP };

inline std::string_view to_string(Formula f)
{
    switch (f) {
    case Formula::CT: return "CT";
    case Formula::QP: return "QP";
    case Formula::XFQ: return "XFQ";
    case Formula::XFP: return "XFP";
    }
    return "?";
}

/// Per-sample conditions recorded instead of aborting a sweep.
enum SampleFlag : unsigned {
    kFlagNone = 0,
    kFlagNearCaustic = 1u << 0,       // some contribution has |m_qq + i m_qp| below the caustic band
    kFlagNoTrajectory = 1u << 1,      // no trajectory contributes at this x_f
    kFlagCausticDivergence = 1u << 2, // a prefactor pole was hit and skipped
    kFlagSaddleInvalid = 1u << 3,     // Re(Phi'') >= 0 at the complex saddle
    kFlagBranchJump = 1u << 4,        // prefactor phase tracking contract violated
};

inline std::string flags_to_string(unsigned flags)
{
    if (flags == kFlagNone)
        return "-";
    static constexpr std::pair<unsigned, std::string_view> names[] = {
        {kFlagNearCaustic, "near_caustic"},
        {kFlagNoTrajectory, "no_trajectory"},
        {kFlagCausticDivergence, "caustic_divergence"},
        {kFlagSaddleInvalid, "saddle_invalid"},
        {kFlagBranchJump, "branch_jump"},
    };
    std::string out;
    for (auto [bit, name] : names) {
        if (flags & bit) {
            if (!out.empty())
                out += '|';
            out += name;
        }
    }
    return out;
}

struct Contribution {
    std::string label;
    cplx value;
};

struct WavefunctionSample {
    double x_f = 0;
    cplx psi;
    std::vector<Contribution> contributions;
    Formula formula = Formula::CT;
    unsigned flags = kFlagNone;
};

inline constexpr double kPrefactorPole = 1e-10;

namespace detail {

inline double packet_norm(const CoherentState& s) { return std::pow(std::numbers::pi, -0.25) / std::sqrt(s.b()); }

inline void check_prefactor(const TrajectoryRecord& t)
{
    if (std::abs(t.m.plus()) <= kPrefactorPole)
        throw Error(ErrorKind::CausticDivergence, "m_qq + i m_qp vanishes; prefactor pole");
}

}  // namespace detail

/// Complex-trajectory wavefunction for one root of u(0) = z, X(T) = x_f.
inline cplx psi_ct(const TrajectoryRecord& traj, const CoherentState& s)
{
    detail::check_prefactor(traj);
    return detail::packet_norm(s) / traj.sqrt_m_plus * std::exp(I * exponent_F(traj, s) / s.hbar());
}

/// Thawed Gaussian built on the real central trajectory.
inline cplx psi_tga(const CoherentState& s, const CentralEndpoint& c, double x_f)
{
    const cplx mp = c.m.plus();
    if (std::abs(mp) <= kPrefactorPole)
        throw Error(ErrorKind::CausticDivergence, "m_qq + i m_qp vanishes; prefactor pole");
    const double d = (x_f - c.q_T) / s.b();
    const cplx width = (c.m.pp - I * c.m.pq) / mp;
    const cplx expo = I * (c.S + 0.5 * s.p() * s.q() + c.p_T * (x_f - c.q_T)) / s.hbar() - 0.5 * width * d * d;
    return detail::packet_norm(s) / c.sqrt_m_plus * std::exp(expo);
}

/// Gaussian damping exponent -Re(...) of the mixed-boundary formulas; large
/// values mean a negligible contribution.
inline double xfq_damping(const CoherentState& s, const ShootingSolution& sol)
{
    const auto& m = sol.trajectory.m;
    const double d = (s.p() - sol.initial) / s.c();
    return (0.5 * (I * m.qp / m.plus()) * d * d).real();
}

inline double xfp_damping(const CoherentState& s, const ShootingSolution& sol)
{
    const auto& m = sol.trajectory.m;
    const double d = (s.q() - sol.initial) / s.b();
    return (0.5 * (m.qq / m.plus()) * d * d).real();
}

/// Real trajectory from q to x_f with initial momentum p_i = sol.initial.
inline cplx psi_xfq(const CoherentState& s, const ShootingSolution& sol)
{
    const auto& t = sol.trajectory;
    detail::check_prefactor(t);
    const double d = (s.p() - sol.initial) / s.c();
    const cplx expo = I * (t.S + 0.5 * s.p() * s.q()) / s.hbar() - 0.5 * (I * t.m.qp / t.m.plus()) * d * d;
    return detail::packet_norm(s) / t.sqrt_m_plus * std::exp(expo);
}

/// Real trajectory with initial momentum p from q_i = sol.initial to x_f.
inline cplx psi_xfp(const CoherentState& s, const ShootingSolution& sol)
{
    const auto& t = sol.trajectory;
    detail::check_prefactor(t);
    const double d = (s.q() - sol.initial) / s.b();
    const cplx expo = I * (t.S + 0.5 * s.p() * s.q() + s.p() * (sol.initial - s.q())) / s.hbar() -
                      0.5 * (t.m.qq / t.m.plus()) * d * d;
    return detail::packet_norm(s) / t.sqrt_m_plus * std::exp(expo);
}

/// Re(Phi'') at the saddle, Phi'' = (i/b^2)(m_qq + i m_qp)/m_qp. The Gaussian
/// integral behind the complex-trajectory formula needs this to be negative.
inline std::optional<double> saddle_curvature(const TrajectoryRecord& t, const CoherentState& s)
{
    if (std::abs(t.m.qp) < kFocalThreshold)
        return std::nullopt;
    return (I * t.m.plus() / t.m.qp).real() / (s.b() * s.b());
}

/// Applies the contribution rules to every secondary family:
///   (a) members with Im F_s < 0 are cut;
///   (b) members with Im F_s < Im F_m at the same x_f are cut;
///   (c) walking from the weak end of the family, the cut is placed inside the
///       band between the first (a)/(b) trigger and the first (a) trigger,
///       where removing the secondary changes |psi| the least.
/// Secondary members at saddles with Re(Phi'') >= 0 are cut as well. The
/// main family is never cut.
inline void filter_families(std::vector<TrajectoryFamily>& families, const CoherentState& s)
{
    auto main_it = std::find_if(families.begin(), families.end(),
                                [](const TrajectoryFamily& f) { return f.label.is_main(); });
    if (main_it == families.end())
        throw Error(ErrorKind::MissingMain, "no family contains w = 0");
    for (auto& m : main_it->members)
        m.status = MemberStatus::Contributing;
    const TrajectoryFamily& main = *main_it;

    auto value = [&](const FamilyMember& m) -> cplx {
        try {
            return psi_ct(m.trajectory, s);
        } catch (const Error&) {
            return 0.0;
        }
    };

    for (auto& fam : families) {
        if (fam.label.is_main() || fam.members.empty())
            continue;
        auto& mem = fam.members;
        const std::size_t n = mem.size();
        const bool forward = mem.front().F.imag() >= mem.back().F.imag();
        auto at = [&](std::size_t k) -> FamilyMember& { return forward ? mem[k] : mem[n - 1 - k]; };

        std::optional<std::size_t> band_start, band_end;
        for (std::size_t k = 0; k < n; ++k) {
            const auto& m = at(k);
            const auto* mm = main.find(m.x_f);
            const bool rule_a = m.F.imag() < 0.0;
            const bool rule_b = mm && m.F.imag() < mm->F.imag();
            if ((rule_a || rule_b) && !band_start)
                band_start = k;
            if (rule_a) {
                band_end = k;
                break;
            }
        }
        for (auto& m : mem)
            m.status = MemberStatus::Contributing;
        if (!band_start)
            continue;
        const std::size_t last = band_end.value_or(n - 1);

        std::size_t cut = *band_start;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = *band_start; k <= last; ++k) {
            const auto& m = at(k);
            const auto* mm = main.find(m.x_f);
            const cplx pm = mm ? value(*mm) : cplx(0.0);
            const double jump = std::abs(std::abs(pm + value(m)) - std::abs(pm));
            if (jump < best) {
                best = jump;
                cut = k;
            }
        }
        for (std::size_t k = cut; k < n; ++k)
            at(k).status = MemberStatus::Cut;
    }

    // A secondary saddle with Re(Phi'') >= 0 has no convergent Gaussian
    // integral around it and is dropped as well.
    for (auto& fam : families) {
        if (fam.label.is_main())
            continue;
        for (auto& m : fam.members)
            if (auto curv = saddle_curvature(m.trajectory, s); curv && *curv >= 0.0)
                m.status = MemberStatus::Cut;
    }
}

/// Everything assemble needs besides the formula, grid and time.
struct SemiclassicalProblem {
    Propagator prop;
    /// Hard wall at the origin (free motion on x > 0, method of images).
    bool hard_wall = false;
    /// Run a w-plane scan for caustics (and thus secondary families).
    bool scan_caustics = false;
    ScanWindow window{};
    CausticSettings caustics{};
    FamilySearch families{};
    std::vector<double> p_grid{};  // shooting grid for XFQ
    std::vector<double> q_grid{};  // shooting grid for XFP
    /// Fraction of a branch's x_f length dropped next to each fold end.
    double cut_margin = 0.02;
    /// Contributions damped by more than exp(-damping_limit) are skipped.
    double damping_limit = 40.0;
    /// |m_qq + i m_qp| below this raises the NearCaustic flag.
    double near_caustic = 1e-3;
    unsigned threads = 1;
};

/// Families with statuses set, as used by the complex-trajectory sum.
inline std::vector<TrajectoryFamily> ct_families(const SemiclassicalProblem& pb, std::span<const double> x_f_grid,
                                                 double T)
{
    std::vector<CausticPoint> caustics;
    if (pb.scan_caustics) {
        const auto field = wmap_scan(pb.prop, T, pb.window, pb.threads);
        caustics = detect_caustics(field, pb.prop, T, pb.caustics);
    }
    auto fams = discover_families(pb.prop, T, x_f_grid, caustics, pb.families);
    filter_families(fams, pb.prop.state);
    return fams;
}

namespace detail {

inline void finish(WavefunctionSample& smp)
{
    smp.psi = 0.0;
    for (const auto& c : smp.contributions)
        smp.psi += c.value;
    if (smp.contributions.empty())
        smp.flags |= kFlagNoTrajectory;
}

inline std::vector<WavefunctionSample> assemble_ct(const SemiclassicalProblem& pb, std::span<const double> grid,
                                                   double T)
{
    const auto& s = pb.prop.state;
    std::vector<WavefunctionSample> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out[i].x_f = grid[i];
        out[i].formula = Formula::CT;
    }
    const auto fams = ct_families(pb, grid, T);
    for (const auto& fam : fams) {
        for (const auto& m : fam.members) {
            const std::size_t i = nearest_index(grid, m.x_f);
            auto& smp = out[i];
            if (m.status == MemberStatus::Cut)
                continue;
            if (std::abs(m.trajectory.m.plus()) < pb.near_caustic)
                smp.flags |= kFlagNearCaustic;
            if (auto curv = saddle_curvature(m.trajectory, s); curv && *curv >= 0.0)
                smp.flags |= kFlagSaddleInvalid;
            try {
                smp.contributions.push_back({fam.label.name(), psi_ct(m.trajectory, s)});
            } catch (const Error&) {
                smp.flags |= kFlagCausticDivergence;
            }
        }
    }
    for (auto& smp : out)
        finish(smp);
    return out;
}

inline std::vector<WavefunctionSample> assemble_qp(const SemiclassicalProblem& pb, std::span<const double> grid,
                                                   double T)
{
    const auto& s = pb.prop.state;
    const auto c = central_endpoint(pb.prop, T);
    std::vector<WavefunctionSample> out;
    out.reserve(grid.size());
    for (double x : grid) {
        WavefunctionSample smp{x, 0.0, {}, Formula::QP, kFlagNone};
        try {
            smp.contributions.push_back({"central", psi_tga(s, c, x)});
        } catch (const Error&) {
            smp.flags |= kFlagCausticDivergence;
        }
        if (std::abs(c.m.plus()) < pb.near_caustic)
            smp.flags |= kFlagNearCaustic;
        finish(smp);
        out.push_back(std::move(smp));
    }
    return out;
}

inline bool inside_fold_margin(const ShootingBranch& br, double x_f, double margin)
{
    const double cut = margin * br.x_length();
    if (br.fold_at_lo && std::abs(x_f - br.x_at_lo) < cut)
        return true;
    if (br.fold_at_hi && std::abs(x_f - br.x_at_hi) < cut)
        return true;
    return false;
}

inline std::vector<WavefunctionSample> assemble_shooting(const SemiclassicalProblem& pb, Formula formula,
                                                         std::span<const double> grid, double T)
{
    const auto& s = pb.prop.state;
    const bool xfq = formula == Formula::XFQ;
    const auto& pgrid = xfq ? pb.p_grid : pb.q_grid;
    if (pgrid.size() < 2)
        throw Error(ErrorKind::ConfigError, "shooting grid not configured");
    const ShootingMap map(pb.prop, xfq ? ShootingMode::FixedPosition : ShootingMode::FixedMomentum, T, pgrid,
                          pb.threads);
    const auto& branches = map.branches();

    std::vector<WavefunctionSample> out(grid.size());
    parallel_for(grid.size(), pb.threads, [&](std::size_t i) {
        auto& smp = out[i];
        smp.x_f = grid[i];
        smp.formula = formula;
        for (const auto& sol : map.solve(grid[i])) {
            const auto& br = branches[static_cast<std::size_t>(sol.branch)];
            if (inside_fold_margin(br, grid[i], pb.cut_margin))
                continue;
            const double damping = xfq ? xfq_damping(s, sol) : xfp_damping(s, sol);
            if (damping > pb.damping_limit)
                continue;
            if (std::abs(sol.trajectory.m.plus()) < pb.near_caustic)
                smp.flags |= kFlagNearCaustic;
            try {
                const cplx v = xfq ? psi_xfq(s, sol) : psi_xfp(s, sol);
                smp.contributions.push_back({"branch" + std::to_string(sol.branch), v});
            } catch (const Error&) {
                smp.flags |= kFlagCausticDivergence;
            }
        }
        finish(smp);
    });
    return out;
}

inline std::vector<WavefunctionSample> assemble_smooth(const SemiclassicalProblem& pb, Formula formula,
                                                       std::span<const double> grid, double T)
{
    switch (formula) {
    case Formula::CT: return assemble_ct(pb, grid, T);
    case Formula::QP: return assemble_qp(pb, grid, T);
    case Formula::XFQ:
    case Formula::XFP: return assemble_shooting(pb, formula, grid, T);
    }
    return {};
}

/// Hard wall by images: psi(x) = psi_free(x) - psi_free(-x), the reflected
/// path carrying an explicit factor -1. The thawed Gaussian instead follows
/// its single central trajectory, reflected once it has reached the wall.
inline std::vector<WavefunctionSample> assemble_wall(const SemiclassicalProblem& pb, Formula formula,
                                                     std::span<const double> grid, double T)
{
    for (double x : grid)
        if (!(x > 0.0))
            throw Error(ErrorKind::DomainError, "hard-wall grid must lie in x > 0");
    SemiclassicalProblem free = pb;
    free.hard_wall = false;
    free.scan_caustics = false;
    free.prop.model = PotentialModel::free();

    const auto& s = pb.prop.state;
    if (formula == Formula::QP) {
        const double q_free = s.q() + s.p() * T / s.mu();
        const bool reflected = q_free < 0.0;
        std::vector<double> eval(grid.begin(), grid.end());
        if (reflected)
            for (auto& x : eval)
                x = -x;
        auto raw = assemble_qp(free, eval, T);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            raw[i].x_f = grid[i];
            for (auto& c : raw[i].contributions) {
                c.label = reflected ? "reflected" : "direct";
                if (reflected)
                    c.value = -c.value;
            }
            finish(raw[i]);
        }
        return raw;
    }

    std::vector<double> mirror(grid.rbegin(), grid.rend());
    for (auto& x : mirror)
        x = -x;
    const auto direct = assemble_smooth(free, formula, grid, T);
    const auto image = assemble_smooth(free, formula, mirror, T);
    std::vector<WavefunctionSample> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& d = direct[i];
        const auto& r = image[grid.size() - 1 - i];
        auto& smp = out[i];
        smp.x_f = grid[i];
        smp.formula = formula;
        smp.flags = (d.flags | r.flags) & ~kFlagNoTrajectory;
        if (!d.contributions.empty())
            smp.contributions.push_back({"direct", d.psi});
        if (!r.contributions.empty())
            smp.contributions.push_back({"reflected", -r.psi});
        finish(smp);
    }
    return out;
}

}  // namespace detail

/// Evaluates one formula over an x_f grid at time T.
inline std::vector<WavefunctionSample> assemble(Formula formula, const SemiclassicalProblem& pb,
                                                std::span<const double> x_f_grid, double T)
{
    if (x_f_grid.empty())
        return {};
    if (pb.hard_wall)
        return detail::assemble_wall(pb, formula, x_f_grid, T);
    return detail::assemble_smooth(pb, formula, x_f_grid, T);
}

}  // namespace sctraj
