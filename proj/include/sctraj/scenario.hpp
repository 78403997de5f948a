#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sctraj/config.hpp"
#include "sctraj/csv.hpp"
#include "sctraj/exactref.hpp"
#include "sctraj/semiclassics.hpp"

namespace sctraj {

/// Which wavefunctions a scenario produces; Exact is the reference.
enum class Output { CT, QP, XFQ, XFP, Exact };

inline std::string_view to_string(Output o)
{
    switch (o) {
    case Output::CT: return "CT";
    case Output::QP: return "QP";
    case Output::XFQ: return "XFQ";
    case Output::XFP: return "XFP";
    case Output::Exact: return "EXACT";
    }
    return "?";
}

inline Output output_from_string(const std::string& s)
{
    const std::string u = [&] {
        std::string r = s;
        for (auto& ch : r)
            ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        return r;
    }();
    if (u == "CT") return Output::CT;
    if (u == "QP") return Output::QP;
    if (u == "XFQ") return Output::XFQ;
    if (u == "XFP") return Output::XFP;
    if (u == "EXACT") return Output::Exact;
    throw Error(ErrorKind::ConfigError, "unknown formula '" + s + "'");
}

inline Formula to_formula(Output o)
{
    switch (o) {
    case Output::CT: return Formula::CT;
    case Output::QP: return Formula::QP;
    case Output::XFQ: return Formula::XFQ;
    case Output::XFP: return Formula::XFP;
    case Output::Exact: break;
    }
    throw Error(ErrorKind::DomainError, "EXACT is not a semiclassical formula");
}

/// Every key a scenario file may contain.
inline const std::set<std::string>& scenario_schema()
{
    static const std::set<std::string> keys = {
        "name",
        "potential.kind", "potential.mu", "potential.omega", "potential.A", "potential.B",
        "state.q", "state.p", "state.hbar", "state.mu", "state.b", "state.omega",
        "times", "formulas",
        "xf.min", "xf.max", "xf.count",
        "search.scan", "search.extent", "search.step", "search.max_secondaries",
        "search.p_min", "search.p_max", "search.p_count",
        "search.q_min", "search.q_max", "search.q_count",
        "search.cut_margin", "search.damping_limit", "search.near_caustic",
        "integrator.rel_tol", "integrator.abs_tol", "integrator.max_step",
        "exact.x_min", "exact.x_max", "exact.n", "exact.dt", "exact.boundary_tol",
        "report.floor", "threads",
    };
    return keys;
}

struct Scenario {
    std::string name = "scenario";
    PotentialModel potential;
    bool hard_wall = false;
    /// One packet per requested width (state.b may be a list).
    std::vector<CoherentState> states;
    std::vector<double> times;
    std::vector<Output> outputs;
    double xf_min = 0, xf_max = 0;
    std::size_t xf_count = 0;

    bool scan = false;
    double scan_extent = 4.0;  // in units of b
    double scan_step = 0.05;   // in units of b
    std::size_t max_secondaries = 1;
    std::optional<double> p_min, p_max, q_min, q_max;
    std::size_t p_count = 2001, q_count = 2001;
    double cut_margin = 0.02;
    double damping_limit = 40.0;
    double near_caustic = 1e-3;

    IntegratorSettings integrator{};
    Grid exact_grid{-12.0, 12.0, 2048};
    SplitSettings split{};
    double report_floor = 1e-6;
    unsigned threads = 1;

    Config resolved;

    std::vector<double> xf_grid() const { return linspace(xf_min, xf_max, xf_count); }

    /// Shooting grids default to +-10 c (or b) around the packet centre.
    SemiclassicalProblem problem(const CoherentState& s) const
    {
        SemiclassicalProblem pb{.prop = Propagator{potential, s, integrator, true}};
        pb.hard_wall = hard_wall;
        pb.scan_caustics = scan;
        pb.window = ScanWindow::around_origin(s.b(), scan_extent, scan_step);
        pb.families.max_secondaries = max_secondaries;
        pb.p_grid = linspace(p_min.value_or(s.p() - 10.0 * s.c()), p_max.value_or(s.p() + 10.0 * s.c()), p_count);
        pb.q_grid = linspace(q_min.value_or(s.q() - 10.0 * s.b()), q_max.value_or(s.q() + 10.0 * s.b()), q_count);
        pb.cut_margin = cut_margin;
        pb.damping_limit = damping_limit;
        pb.near_caustic = near_caustic;
        pb.threads = threads;
        return pb;
    }
};

inline Scenario scenario_from_config(Config cfg)
{
    cfg.validate_and_override(scenario_schema());
    Scenario sc;
    sc.name = cfg.str("name", "scenario");

    const std::string kind = Config::lower(cfg.require("potential.kind"));
    if (kind == "free") {
        sc.potential = PotentialModel::free();
    } else if (kind == "harmonic") {
        sc.potential = PotentialModel::harmonic(cfg.number("potential.mu", 1.0), cfg.number("potential.omega"));
    } else if (kind == "inverted_gaussian") {
        sc.potential = PotentialModel::inverted_gaussian();
    } else if (kind == "quartic") {
        sc.potential = PotentialModel::quartic(cfg.number("potential.A"), cfg.number("potential.B"));
    } else if (kind == "hard_wall") {
        sc.potential = PotentialModel::free();
        sc.hard_wall = true;
    } else {
        throw Error(ErrorKind::ConfigError, "unknown potential.kind '" + kind + "'");
    }

    const double q = cfg.number("state.q"), p = cfg.number("state.p");
    const double hbar = cfg.number("state.hbar", 1.0), mu = cfg.number("state.mu", 1.0);
    const bool has_b = cfg.has("state.b"), has_w = cfg.has("state.omega");
    if (has_b == has_w)
        throw Error(ErrorKind::ConfigError, "give exactly one of state.b and state.omega");
    try {
        if (has_b)
            for (double b : cfg.numbers("state.b"))
                sc.states.push_back(CoherentState::from_width(q, p, hbar, mu, b));
        else
            sc.states.emplace_back(q, p, hbar, mu, cfg.number("state.omega"));
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, std::string("invalid state: ") + e.what());
    }
    if (sc.states.empty())
        throw Error(ErrorKind::ConfigError, "state.b lists no widths");

    sc.times = cfg.numbers("times");
    if (sc.times.empty())
        throw Error(ErrorKind::ConfigError, "times lists no values");
    for (double t : sc.times)
        if (!(t >= 0.0))
            throw Error(ErrorKind::ConfigError, "times must be non-negative");

    for (const auto& f : cfg.list("formulas"))
        sc.outputs.push_back(output_from_string(f));
    if (sc.outputs.empty())
        throw Error(ErrorKind::ConfigError, "formulas lists nothing to compute");

    sc.xf_min = cfg.number("xf.min");
    sc.xf_max = cfg.number("xf.max");
    const long count = cfg.integer("xf.count", 401);
    if (!(sc.xf_max > sc.xf_min) || count < 2)
        throw Error(ErrorKind::ConfigError, "x_f grid is empty");
    sc.xf_count = static_cast<std::size_t>(count);
    if (sc.hard_wall && !(sc.xf_min > 0.0))
        throw Error(ErrorKind::ConfigError, "hard-wall x_f grid must lie in x > 0");

    sc.scan = cfg.boolean("search.scan", !sc.potential.is_quadratic());
    sc.scan_extent = cfg.number("search.extent", sc.scan_extent);
    sc.scan_step = cfg.number("search.step", sc.scan_step);
    if (!(sc.scan_extent > 0.0) || !(sc.scan_step > 0.0))
        throw Error(ErrorKind::ConfigError, "search window must have positive extent and step");
    sc.max_secondaries = static_cast<std::size_t>(cfg.integer("search.max_secondaries", 1));
    auto opt = [&](const char* k) -> std::optional<double> {
        return cfg.has(k) ? std::optional<double>(cfg.number(k)) : std::nullopt;
    };
    sc.p_min = opt("search.p_min");
    sc.p_max = opt("search.p_max");
    sc.q_min = opt("search.q_min");
    sc.q_max = opt("search.q_max");
    sc.p_count = static_cast<std::size_t>(cfg.integer("search.p_count", 2001));
    sc.q_count = static_cast<std::size_t>(cfg.integer("search.q_count", 2001));
    if (sc.p_count < 2 || sc.q_count < 2)
        throw Error(ErrorKind::ConfigError, "shooting grids need at least two points");
    sc.cut_margin = cfg.number("search.cut_margin", sc.cut_margin);
    if (!(sc.cut_margin >= 0.0 && sc.cut_margin < 0.5))
        throw Error(ErrorKind::ConfigError, "search.cut_margin must lie in [0, 0.5)");
    sc.damping_limit = cfg.number("search.damping_limit", sc.damping_limit);
    sc.near_caustic = cfg.number("search.near_caustic", sc.near_caustic);

    sc.integrator.rel_tol = cfg.number("integrator.rel_tol", sc.integrator.rel_tol);
    sc.integrator.abs_tol = cfg.number("integrator.abs_tol", sc.integrator.abs_tol);
    sc.integrator.max_step = cfg.number("integrator.max_step", sc.integrator.max_step);

    try {
        sc.exact_grid = Grid(cfg.number("exact.x_min", -12.0), cfg.number("exact.x_max", 12.0),
                             static_cast<std::size_t>(cfg.integer("exact.n", 2048)));
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, std::string("invalid exact grid: ") + e.what());
    }
    sc.split.dt = cfg.number("exact.dt", sc.split.dt);
    sc.split.boundary_tol = cfg.number("exact.boundary_tol", sc.split.boundary_tol);
    if (!(sc.split.dt > 0.0))
        throw Error(ErrorKind::ConfigError, "exact.dt must be positive");

    sc.report_floor = cfg.number("report.floor", sc.report_floor);
    const long threads = cfg.integer("threads", 1);
    if (threads < 1)
        throw Error(ErrorKind::ConfigError, "threads must be >= 1");
    sc.threads = static_cast<unsigned>(threads);
    sc.resolved = std::move(cfg);
    return sc;
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_config(Config::load(path)); }

// ---------------------------------------------------------------------------
// Wavefunction CSV
// ---------------------------------------------------------------------------

struct WavefunctionTable {
    std::vector<double> x;
    std::vector<cplx> psi;
};

inline void write_wavefunction_csv(std::ostream& os, std::string_view formula, std::span<const double> x,
                                   std::span<const cplx> psi, std::span<const unsigned> flags = {})
{
    csv::Writer w(os);
    w.header({"x_f", "re", "im", "abs2", "phase_over_pi", "formula", "flags"});
    for (std::size_t i = 0; i < x.size(); ++i) {
        const cplx v = psi[i];
        w.field(x[i]).field(v.real()).field(v.imag()).field(std::norm(v))
            .field(v == 0.0 ? 0.0 : std::arg(v) / std::numbers::pi).field(formula)
            .field(flags.empty() ? std::string("-") : flags_to_string(flags[i])).end();
    }
}

inline WavefunctionTable read_wavefunction_csv(const std::string& path)
{
    const auto t = csv::read(path);
    const auto ix = t.column("x_f"), ir = t.column("re"), ii = t.column("im");
    WavefunctionTable out;
    for (const auto& row : t.rows) {
        if (row.size() <= std::max({ix, ir, ii}))
            throw Error(ErrorKind::IoError, path + ": short row");
        try {
            out.x.push_back(std::stod(row[ix]));
            out.psi.emplace_back(std::stod(row[ir]), std::stod(row[ii]));
        } catch (const std::exception&) {
            throw Error(ErrorKind::IoError, path + ": non-numeric value");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Comparison metrics
// ---------------------------------------------------------------------------

struct Comparison {
    double l2 = 0;
    double max_density_dev = 0;
    double phase_rms = 0;  // radians
    std::size_t phase_points = 0;
};

/// L2 = sqrt(sum |a - b|^2 dx); the phase RMS uses only points where both
/// densities exceed floor times the larger peak density.
inline Comparison compare(std::span<const double> x, std::span<const cplx> a, std::span<const double> xb,
                          std::span<const cplx> b, double floor = 1e-6)
{
    if (x.size() != xb.size() || a.size() != x.size() || b.size() != xb.size() || x.size() < 2)
        throw Error(ErrorKind::GridMismatch, "wavefunctions have different sample counts");
    const double dx = (x.back() - x.front()) / static_cast<double>(x.size() - 1);
    for (std::size_t i = 0; i < x.size(); ++i)
        if (std::abs(x[i] - xb[i]) > 1e-9 * std::max(1.0, std::abs(x[i])))
            throw Error(ErrorKind::GridMismatch, "x_f grids differ at index " + std::to_string(i));
    Comparison c;
    double peak = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        peak = std::max({peak, std::norm(a[i]), std::norm(b[i])});
    double sum = 0, phase = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sum += std::norm(a[i] - b[i]);
        c.max_density_dev = std::max(c.max_density_dev, std::abs(std::norm(a[i]) - std::norm(b[i])));
        if (std::norm(a[i]) > floor * peak && std::norm(b[i]) > floor * peak) {
            const double d = std::remainder(std::arg(a[i]) - std::arg(b[i]), 2.0 * std::numbers::pi);
            phase += d * d;
            ++c.phase_points;
        }
    }
    c.l2 = std::sqrt(sum * dx);
    c.phase_rms = c.phase_points ? std::sqrt(phase / static_cast<double>(c.phase_points)) : 0.0;
    return c;
}

inline Comparison compare_files(const std::string& a, const std::string& b, double floor = 1e-6)
{
    const auto ta = read_wavefunction_csv(a);
    const auto tb = read_wavefunction_csv(b);
    return compare(ta.x, ta.psi, tb.x, tb.psi, floor);
}

// ---------------------------------------------------------------------------
// Running scenarios
// ---------------------------------------------------------------------------

/// Exact reference on the x_f grid: analytic where available, else the grid
/// propagator interpolated onto x_f.
inline std::vector<std::vector<cplx>> exact_reference(const Scenario& sc, const CoherentState& s,
                                                      std::span<const double> x)
{
    std::vector<std::vector<cplx>> out;
    const bool harmonic_match =
        sc.potential.kind == PotentialKind::Harmonic &&
        std::abs(sc.potential.omega * std::sqrt(sc.potential.mu / s.mu()) - s.omega()) <= 1e-12 * s.omega();
    if (sc.hard_wall || sc.potential.kind == PotentialKind::Free || harmonic_match) {
        for (double T : sc.times) {
            std::vector<cplx> v(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (sc.hard_wall)
                    v[i] = exact_wall(s, x[i], T);
                else if (harmonic_match)
                    v[i] = exact_harmonic(s, sc.potential, x[i], T);
                else
                    v[i] = exact_free(s, x[i], T);
            }
            out.push_back(std::move(v));
        }
        return out;
    }
    std::vector<double> order(sc.times);
    std::sort(order.begin(), order.end());
    const auto snaps = propagate_grid_snapshots(sc.potential, s, order, sc.exact_grid, sc.split);
    for (double T : sc.times) {
        const auto it = std::find(order.begin(), order.end(), T);
        out.push_back(interpolate(snaps[static_cast<std::size_t>(it - order.begin())], x));
    }
    return out;
}

struct ReportRow {
    double b, T;
    std::string formula;
    Comparison metrics;
    std::size_t flagged;
};

struct RunResult {
    std::filesystem::path dir;
    std::vector<ReportRow> report;
};

inline std::string time_tag(double T) { return "T" + csv::num(T); }

inline std::string file_stem(const Scenario& sc, const CoherentState& s, std::string_view formula, double T)
{
    std::string stem = std::string(formula) + "_" + time_tag(T);
    if (sc.states.size() > 1)
        stem += "_b" + csv::num(s.b());
    return stem;
}

inline void write_report(std::ostream& os, const Scenario& sc, const std::vector<ReportRow>& rows)
{
    csv::Writer w(os);
    w.comment("reference EXACT; phase RMS over points with |psi|^2 > " + csv::num(sc.report_floor) +
              " * peak; phase in radians");
    w.header({"b", "T", "formula", "l2", "max_density_dev", "phase_rms", "phase_points", "flagged_points"});
    for (const auto& r : rows)
        w.field(r.b).field(r.T).field(r.formula).field(r.metrics.l2).field(r.metrics.max_density_dev)
            .field(r.metrics.phase_rms).field(static_cast<int>(r.metrics.phase_points))
            .field(static_cast<int>(r.flagged)).end();
}

/// Writes one wavefunction CSV per (width, formula, time), the resolved
/// config, and report.csv (when EXACT is among the outputs).
inline RunResult run_scenario(const Scenario& sc, const std::filesystem::path& out_dir)
{
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream cfg(out_dir / "resolved.cfg");
        cfg << sc.resolved.dump();
    }
    const auto x = sc.xf_grid();
    const bool want_exact = std::find(sc.outputs.begin(), sc.outputs.end(), Output::Exact) != sc.outputs.end();
    RunResult res{out_dir, {}};

    for (const auto& s : sc.states) {
        std::vector<std::vector<cplx>> exact;
        if (want_exact) {
            exact = exact_reference(sc, s, x);
            for (std::size_t k = 0; k < sc.times.size(); ++k) {
                std::ofstream f(out_dir / (file_stem(sc, s, "EXACT", sc.times[k]) + ".csv"));
                write_wavefunction_csv(f, "EXACT", x, exact[k]);
            }
        }
        const auto pb = sc.problem(s);
        for (Output o : sc.outputs) {
            if (o == Output::Exact)
                continue;
            for (std::size_t k = 0; k < sc.times.size(); ++k) {
                const double T = sc.times[k];
                const auto samples = assemble(to_formula(o), pb, x, T);
                std::vector<cplx> psi;
                std::vector<unsigned> flags;
                std::size_t flagged = 0;
                for (const auto& smp : samples) {
                    psi.push_back(smp.psi);
                    flags.push_back(smp.flags);
                    flagged += smp.flags != kFlagNone;
                }
                std::ofstream f(out_dir / (file_stem(sc, s, to_string(o), T) + ".csv"));
                write_wavefunction_csv(f, to_string(o), x, psi, flags);
                if (want_exact)
                    res.report.push_back({s.b(), T, std::string(to_string(o)),
                                          compare(x, psi, x, exact[k], sc.report_floor), flagged});
            }
        }
    }
    if (want_exact) {
        std::ofstream f(out_dir / "report.csv");
        write_report(f, sc, res.report);
    }
    return res;
}

// ---------------------------------------------------------------------------
// w-plane data
// ---------------------------------------------------------------------------

struct MapData {
    ScanField field;
    std::vector<CausticPoint> caustics;
    std::vector<TrajectoryFamily> families;
};

inline MapData compute_map_data(const Scenario& sc, const CoherentState& s, double T)
{
    if (sc.hard_wall)
        throw Error(ErrorKind::ConfigError, "w-plane maps need a smooth potential");
    const auto pb = sc.problem(s);
    MapData md;
    md.field = wmap_scan(pb.prop, T, pb.window, sc.threads);
    md.caustics = detect_caustics(md.field, pb.prop, T, pb.caustics);
    const auto x = sc.xf_grid();
    md.families = discover_families(pb.prop, T, x, md.caustics, pb.families);
    filter_families(md.families, s);
    return md;
}

/// scan.csv, caustics.csv and families.csv for one packet and time.
inline void emit_map_data(const Scenario& sc, double T, const std::filesystem::path& out_dir)
{
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream cfg(out_dir / "resolved.cfg");
        cfg << sc.resolved.dump();
    }
    for (const auto& s : sc.states) {
        const auto md = compute_map_data(sc, s, T);
        const std::string suffix = sc.states.size() > 1 ? "_b" + csv::num(s.b()) : "";
        const auto& win = md.field.window;
        const std::string echo = "window alpha=[" + csv::num(win.alpha_min) + "," + csv::num(win.alpha_max) +
                                 "] beta=[" + csv::num(win.beta_min) + "," + csv::num(win.beta_max) +
                                 "] step=" + csv::num(win.step) + " T=" + csv::num(T);
        {
            std::ofstream f(out_dir / ("scan" + suffix + ".csv"));
            csv::Writer w(f);
            w.comment(echo);
            w.header({"alpha", "beta", "re_X", "im_X", "re_dXdw", "im_dXdw", "re_F", "im_F", "escaped"});
            for (int ib = 0; ib < md.field.n_beta; ++ib)
                for (int ia = 0; ia < md.field.n_alpha; ++ia) {
                    const auto& n = md.field.at(ia, ib);
                    w.field(md.field.alpha(ia)).field(md.field.beta(ib)).field(n.X_T.real()).field(n.X_T.imag())
                        .field(n.dXdw.real()).field(n.dXdw.imag()).field(n.F.real()).field(n.F.imag())
                        .field(n.escaped ? 1 : 0).end();
                }
        }
        {
            std::ofstream f(out_dir / ("caustics" + suffix + ".csv"));
            csv::Writer w(f);
            w.comment(echo);
            w.header({"re_w", "im_w", "re_X", "im_X", "residual"});
            for (const auto& c : md.caustics)
                w.field(c.w_c.real()).field(c.w_c.imag()).field(c.X_c.real()).field(c.X_c.imag())
                    .field(c.residual).end();
        }
        {
            std::ofstream f(out_dir / ("families" + suffix + ".csv"));
            csv::Writer w(f);
            w.comment(echo);
            w.header({"family", "x_f", "re_w", "im_w", "re_F", "im_F", "abs_m_plus", "status"});
            for (const auto& fam : md.families)
                for (const auto& m : fam.members)
                    w.field(fam.label.name()).field(m.x_f).field(m.w.real()).field(m.w.imag()).field(m.F.real())
                        .field(m.F.imag()).field(std::abs(m.trajectory.m.plus()))
                        .field(m.status == MemberStatus::Cut ? "cut" : "contributing").end();
        }
    }
}

}  // namespace sctraj
