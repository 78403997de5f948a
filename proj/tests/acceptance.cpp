#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <string>

#include "invariant_checks.hpp"
#include "sctraj/exactref.hpp"
#include "sctraj/scenario.hpp"
#include "test_support.hpp"

using namespace sctraj;
using namespace sctraj::testing;

namespace {

std::string scenario_path(const char* file) { return std::string(SCTRAJ_SOURCE_DIR) + "/scenarios/" + file; }

/// Accumulates sub-checks of one criterion; every sub-check prints a line.
class Verdict {
    static void print(const char* fmt, auto... args)
    {
        if constexpr (sizeof...(args) == 0)
            std::fputs(fmt, stdout);
        else
            std::printf(fmt, args...);
    }

public:
    void check(bool ok, const char* fmt, auto... args)
    {
        std::printf("    [%s] ", ok ? "ok" : "FAIL");
        print(fmt, args...);
        std::printf("\n");
        ok_ = ok_ && ok;
    }
    void note(const char* fmt, auto... args)
    {
        std::printf("    ");
        print(fmt, args...);
        std::printf("\n");
    }
    bool ok() const { return ok_; }

private:
    bool ok_ = true;
};

const char* name(Formula f) { return to_string(f).data(); }

// ---------------------------------------------------------------------------

bool exactness(Verdict& v)
{
    const Formula all[] = {Formula::CT, Formula::QP, Formula::XFQ, Formula::XFP};
    {
        const auto sc = load_scenario(scenario_path("free.cfg"));
        const auto& s = sc.states.front();
        const auto pb = sc.problem(s);
        for (double T : {0.5, 2.0, 7.0}) {
            const double centre = s.q() + s.p() * T / s.mu();
            const auto x = linspace(centre - 6 * s.b(), centre + 6 * s.b(), 121);
            std::vector<cplx> exact;
            for (double xf : x)
                exact.push_back(exact_free(s, xf, T));
            for (Formula f : all) {
                const double err = max_abs_diff(values(assemble(f, pb, x, T)), exact);
                v.check(err < 1e-8, "free T=%g %-3s max|psi - exact| = %.3e (< 1e-8)", T, name(f), err);
            }
        }
    }
    {
        const auto sc = load_scenario(scenario_path("harmonic.cfg"));
        const auto& s = sc.states.front();
        const double w = s.omega();
        const auto pb = sc.problem(s);
        for (double wT : {0.3, std::numbers::pi / 2, 2 * std::numbers::pi - 0.1}) {
            const double T = wT / w;
            const double centre = s.q() * std::cos(wT) + s.p() / (s.mu() * w) * std::sin(wT);
            const auto x = linspace(centre - 6 * s.b(), centre + 6 * s.b(), 121);
            std::vector<cplx> exact;
            for (double xf : x)
                exact.push_back(exact_harmonic(s, sc.potential, xf, T));
            for (Formula f : all) {
                const auto smp = assemble(f, pb, x, T);
                std::size_t missing = 0;
                for (const auto& p : smp)
                    missing += (p.flags & kFlagNoTrajectory) != 0;
                const double err = max_abs_diff(values(smp), exact);
                v.check(err < 1e-8, "harmonic wT=%.4f %-3s max|psi - exact| = %.3e (< 1e-8), no-trajectory points %zu",
                        wT, name(f), err, missing);
            }
        }
    }
    return v.ok();
}

bool hard_wall(Verdict& v)
{
    const auto sc = load_scenario(scenario_path("wall.cfg"));
    const auto& s = sc.states.front();
    const auto pb = sc.problem(s);
    const auto x = sc.xf_grid();
    const double T_r = s.q() / std::abs(s.p() / s.mu());
    v.note("return time q/|v| = %g", T_r);
    for (double T : sc.times) {
        std::vector<cplx> exact;
        for (double xf : x)
            exact.push_back(exact_wall(s, xf, T));
        for (Formula f : {Formula::CT, Formula::XFQ, Formula::XFP}) {
            const double l2 = l2_distance(x, values(assemble(f, pb, x, T)), exact);
            v.check(l2 < 1e-8, "T=%g %-3s L2 = %.3e (< 1e-8)", T, name(f), l2);
        }
        if (std::abs(T - T_r) < 1e-9) {
            const auto qp = values(assemble(Formula::QP, pb, x, T));
            const double l2 = l2_distance(x, qp, exact);
            v.check(l2 > 0.1, "T=%g QP  L2 = %.3f (> 0.1)", T, l2);
            const auto rho = densities(qp);
            const std::size_t minima = count_local_minima(rho);
            v.check(minima == 0, "T=%g QP  density local minima on (0, %g] = %zu (exact has %zu)", T, x.back(), minima,
                    count_local_minima(densities(exact)));
        }
    }
    return v.ok();
}

bool spectra(Verdict& v)
{
    const auto quartic = eigenvalues(quartic_model(), Grid(-8, 8, 2048), 3);
    const double expect[] = {0.559, 1.770, 3.319};
    for (std::size_t n = 0; n < 3; ++n)
        v.check(std::abs(quartic[n] - expect[n]) <= 0.002, "quartic E%zu = %.5f (target %.3f +- 0.002)", n, quartic[n],
                expect[n]);
    const auto ig = eigenvalues(PotentialModel::inverted_gaussian(), Grid(-20, 20, 4096), 1);
    v.check(std::abs(ig[0] + 0.48) <= 0.005, "inverted Gaussian E0 = %.5f (target -0.48 +- 0.005)", ig[0]);
    return v.ok();
}

bool inverted_gaussian(Verdict& v)
{
    const auto sc = load_scenario(scenario_path("inverted_gaussian_fig1.cfg"));
    const auto x = sc.xf_grid();
    const double T = sc.times.front();
    for (const auto& s : sc.states) {
        const auto exact = exact_reference(sc, s, x).front();
        const auto pb = sc.problem(s);
        const auto qp = compare(x, values(assemble(Formula::QP, pb, x, T)), x, exact, 1e-3);
        v.note("b=%g QP  L2 = %.4f, phase RMS = %.4f pi", s.b(), qp.l2, qp.phase_rms / std::numbers::pi);
        for (Formula f : {Formula::CT, Formula::XFQ}) {
            const auto c = compare(x, values(assemble(f, pb, x, T)), x, exact, 1e-3);
            v.check(c.l2 < 0.2 * qp.l2, "b=%g %-3s L2 = %.4f (< 0.2 * QP = %.4f)", s.b(), name(f), c.l2, 0.2 * qp.l2);
            v.check(c.phase_rms < 0.15 * std::numbers::pi, "b=%g %-3s phase RMS = %.4f pi (< 0.15 pi, %zu points)", s.b(),
                    name(f), c.phase_rms / std::numbers::pi, c.phase_points);
        }
    }
    return v.ok();
}

bool wmap(Verdict& v)
{
    const auto sc = load_scenario(scenario_path("quartic_map.cfg"));
    const auto& s = sc.states.front();
    const double T = sc.times.front();
    const auto md = compute_map_data(sc, s, T);
    v.check(!md.caustics.empty(), "caustics detected: %zu", md.caustics.size());
    for (const auto& c : md.caustics)
        v.note("caustic w = (%.4f, %.4f), X = (%.4f, %.4f)", c.w_c.real(), c.w_c.imag(), c.X_c.real(), c.X_c.imag());

    const auto x = sc.xf_grid();
    const double dx = x[1] - x[0];
    const auto q_T = central_endpoint(sc.problem(s).prop, T).q_T;
    bool have_main = false, crossing = false;
    for (const auto& fam : md.families) {
        if (fam.members.empty())
            continue;
        double lo = fam.members.front().F.imag(), hi = lo, x_at_lo = fam.members.front().x_f;
        for (const auto& m : fam.members) {
            if (m.F.imag() < lo) {
                lo = m.F.imag();
                x_at_lo = m.x_f;
            }
            hi = std::max(hi, m.F.imag());
        }
        if (fam.label.is_main()) {
            have_main = true;
            v.check(lo >= -1e-9, "main family min Im F = %.3e (>= -1e-9)", lo);
            v.check(std::abs(x_at_lo - q_T) <= dx, "main family Im F minimum at x_f = %.4f, q_T = %.4f (grid step %g)",
                    x_at_lo, q_T, dx);
        } else {
            v.note("%s: %zu members, Im F in [%.4f, %.4f]", fam.label.name().c_str(), fam.members.size(), lo, hi);
            crossing = crossing || (lo < 0.0 && hi > 0.0);
        }
    }
    v.check(have_main, "main family present");
    v.check(crossing, "a secondary family has Im F crossing zero");
    return v.ok();
}

/// Ratio of the density jump where the labelled contribution starts or stops
/// (the transition nearest to near) to the largest adjacent point-to-point
/// variation.
struct JumpRatio {
    double ratio = 0;
    double at = 0;
};

std::optional<JumpRatio> branch_jump(const std::vector<WavefunctionSample>& smp, const std::string& label, double near)
{
    auto has = [&](std::size_t i) {
        for (const auto& c : smp[i].contributions)
            if (c.label == label)
                return true;
        return false;
    };
    const auto rho = [&] {
        std::vector<double> r;
        for (const auto& p : smp)
            r.push_back(std::norm(p.psi));
        return r;
    }();
    std::optional<JumpRatio> best;
    for (std::size_t i = 1; i + 2 < smp.size(); ++i) {
        if (has(i) == has(i + 1))
            continue;
        const double at = 0.5 * (smp[i].x_f + smp[i + 1].x_f);
        if (best && std::abs(best->at - near) <= std::abs(at - near))
            continue;
        const double jump = std::abs(rho[i + 1] - rho[i]);
        const double nb = std::max(std::abs(rho[i] - rho[i - 1]), std::abs(rho[i + 2] - rho[i + 1]));
        best = JumpRatio{nb > 0 ? jump / nb : std::numeric_limits<double>::infinity(), at};
    }
    return best;
}

bool quartic_densities(Verdict& v)
{
    const auto sc = load_scenario(scenario_path("quartic_densities.cfg"));
    const auto& s = sc.states.front();
    const auto x = sc.xf_grid();
    const auto pb = sc.problem(s);
    const auto exact = exact_reference(sc, s, x);

    for (std::size_t k = 0; k < sc.times.size(); ++k) {
        const double T = sc.times[k];
        const auto ct = assemble(Formula::CT, pb, x, T);
        const double l2_ct = l2_distance(x, values(ct), exact[k]);
        const double l2_qp = l2_distance(x, values(assemble(Formula::QP, pb, x, T)), exact[k]);
        v.check(l2_ct < l2_qp, "(i) T=%g L2 CT = %.4f < QP = %.4f", T, l2_ct, l2_qp);

        if (T == 6.5) {
            std::vector<bool> overlap;
            std::size_t n_overlap = 0;
            for (const auto& p : ct) {
                overlap.push_back(p.contributions.size() >= 2);
                n_overlap += overlap.back();
            }
            const auto maxima = count_local_maxima(densities(values(ct)), overlap);
            v.check(maxima >= 2, "(ii) T=%g CT local maxima in the two-family region (%zu points) = %zu (>= 2)", T,
                    n_overlap, maxima);
        }

        if (T == 2.5 || T == 4.5) {
            const ShootingMap map(pb.prop, ShootingMode::FixedPosition, T, pb.p_grid);
            const int c = map.central_branch();
            if (c < 0) {
                v.check(false, "(iii) T=%g no central shooting branch", T);
                continue;
            }
            const auto& br = map.branches()[static_cast<std::size_t>(c)];
            const std::string label = "branch" + std::to_string(c);
            const auto coarse = assemble(Formula::XFQ, pb, x, T);
            const double cut = pb.cut_margin * br.x_length();
            const double dir = br.x_at_hi > br.x_at_lo ? 1.0 : -1.0;
            const std::pair<bool, double> ends[] = {{br.fold_at_lo, br.x_at_lo + dir * cut},
                                                    {br.fold_at_hi, br.x_at_hi - dir * cut}};
            for (const auto& [fold, x_cut] : ends) {
                if (!fold) {
                    v.check(false, "(iii) T=%g branch end near %.4f is not a fold", T, x_cut);
                    continue;
                }
                const auto fine = assemble(Formula::XFQ, pb, linspace(x_cut - 0.02, x_cut + 0.02, 41), T);
                const auto r = branch_jump(fine, label, x_cut);
                const auto rc = branch_jump(coarse, label, x_cut);
                if (!r) {
                    v.check(false, "(iii) T=%g main branch does not end near x_f = %.4f", T, x_cut);
                    continue;
                }
                v.check(r->ratio > 10.0,
                        "(iii) T=%g XFQ density jump at x_f = %.4f is %.1f x the adjacent variation (> 10; step 1e-3; "
                        "scenario grid step %g gives %.1f x)",
                        T, r->at, r->ratio, x[1] - x[0], rc ? rc->ratio : 0.0);
            }
        }

        if (T == 6.5 || T == 8.5) {
            std::size_t flagged = 0;
            double min_m = std::numeric_limits<double>::infinity(), at = 0;
            for (const auto& p : ct)
                flagged += (p.flags & kFlagNearCaustic) != 0;
            for (const auto& fam : ct_families(pb, x, T))
                for (const auto& m : fam.members)
                    if (m.status == MemberStatus::Contributing && std::abs(m.trajectory.m.plus()) < min_m) {
                        min_m = std::abs(m.trajectory.m.plus());
                        at = m.x_f;
                    }
            v.check(flagged > 0,
                    "(iv) T=%g NearCaustic samples = %zu (band |m_qq + i m_qp| < %g; smallest on contributing "
                    "members %.3f at x_f = %.2f)",
                    T, flagged, pb.near_caustic, min_m, at);
        }
    }
    return v.ok();
}

bool invariants(Verdict& v)
{
    for (const auto& r : run_all_invariants()) {
        if (r.worst_resolvable >= 0)
            v.check(r.ok(), "%-28s worst %.3e (tol %.0e); over samples resolvable in double precision %.3e", r.name.c_str(),
                    r.worst, r.tolerance, r.worst_resolvable);
        else
            v.check(r.ok(), "%-28s worst %.3e (tol %.0e)", r.name.c_str(), r.worst, r.tolerance);
    }
    return v.ok();
}

struct Criterion {
    const char* title;
    double time_limit;
    std::function<bool(Verdict&)> run;
};

const Criterion kCriteria[] = {
    {"exactness for free particle and harmonic oscillator", 10, exactness},
    {"hard wall by images", 10, hard_wall},
    {"bound-state spectra", 30, spectra},
    {"inverted Gaussian densities and phases", 120, inverted_gaussian},
    {"quartic w-plane map", 300, wmap},
    {"quartic densities", 600, quartic_densities},
    {"invariant suites", 120, invariants},
};

bool run_criterion(int n)
{
    const auto& c = kCriteria[n - 1];
    std::printf("criterion %d: %s\n", n, c.title);
    Verdict v;
    const Stopwatch sw;
    bool ok = false;
    try {
        ok = c.run(v);
    } catch (const std::exception& e) {
        v.check(false, "error: %s", e.what());
    }
    const double t = sw.seconds();
    v.check(t < c.time_limit, "runtime %.1f s (< %.0f s)", t, c.time_limit);
    ok = ok && v.ok();
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", n, c.title);
    std::fflush(stdout);
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    constexpr int count = static_cast<int>(std::size(kCriteria));
    if (argc > 2) {
        std::fprintf(stderr, "usage: %s [criterion 1-%d]\n", argv[0], count);
        return 2;
    }
    if (argc == 2) {
        const int n = std::atoi(argv[1]);
        if (n < 1 || n > count) {
            std::fprintf(stderr, "criterion must be 1-%d\n", count);
            return 2;
        }
        return run_criterion(n) ? 0 : 1;
    }
    bool all = true;
    for (int n = 1; n <= count; ++n)
        all = run_criterion(n) && all;
    return all ? 0 : 1;
}
