#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sctraj/dynamics.hpp"
#include "sctraj/exponent.hpp"
#include "sctraj/parallel.hpp"

namespace sctraj {

// ---------------------------------------------------------------------------
// Real shooting: trajectories from (q, p_i) or (q_i, p) that land on x_f.
// ---------------------------------------------------------------------------

enum class ShootingMode {
    FixedPosition,  // start at q, vary the initial momentum p_i
    FixedMomentum,  // start with p, vary the initial position q_i
};

/// A maximal monotone piece of the map parameter -> X(T).
struct ShootingBranch {
    int index = 0;
    double param_lo = 0, param_hi = 0;
    double x_at_lo = 0, x_at_hi = 0;
    bool fold_at_lo = false, fold_at_hi = false;
    /// Contains the packet centre (p for FixedPosition, q for FixedMomentum).
    bool central = false;

    double x_length() const { return std::abs(x_at_hi - x_at_lo); }
};

struct ShootingSolution {
    double initial = 0;  // p_i or q_i
    TrajectoryRecord trajectory;
    int branch = -1;
};

/// Samples the final position over a parameter grid once, then answers
/// root queries for any x_f by bracketing plus safeguarded Newton.
class ShootingMap {
public:
    ShootingMap(Propagator prop, ShootingMode mode, double T, std::vector<double> grid, unsigned threads = 1)
        : prop_(std::move(prop)), mode_(mode), T_(T), grid_(std::move(grid))
    {
        if (grid_.size() < 2 || !std::is_sorted(grid_.begin(), grid_.end()))
            throw Error(ErrorKind::DomainError, "shooting grid needs >= 2 increasing values");
        const std::size_t n = grid_.size();
        x_.resize(n);
        d_.resize(n);
        parallel_for(n, threads, [&](std::size_t k) {
            const auto r = run(grid_[k]);
            x_[k] = r.trajectory.final().X.real();
            d_[k] = derivative(r.trajectory);
        });
        build_branches();
    }

    ShootingMode mode() const { return mode_; }
    double time() const { return T_; }
    std::span<const double> grid() const { return grid_; }
    std::span<const double> final_positions() const { return x_; }
    const std::vector<ShootingBranch>& branches() const { return branches_; }

    /// Index of the branch through the packet centre, or -1 if the grid misses it.
    int central_branch() const
    {
        for (const auto& b : branches_)
            if (b.central)
                return b.index;
        return -1;
    }

    /// Every root on the grid with |X(T) - x_f| < tol_factor * b. Nearly coincident
    /// roots are kept separately.
    std::vector<ShootingSolution> solve(double x_f, double tol_factor = 1e-9) const
    {
        std::vector<ShootingSolution> out;
        const double tol = tol_factor * prop_.state.b();
        for (const auto& seg : segments_) {
            const double fa = seg.xa - x_f;
            const double fb = seg.xb - x_f;
            if (!(fa == 0.0 || fa * fb < 0.0))
                continue;
            if (auto s = refine(seg.a, seg.b, fa, fb, x_f, tol)) {
                s->branch = seg.branch;
                out.push_back(std::move(*s));
            }
        }
        return out;
    }

    /// Runs one real trajectory for parameter value s.
    PropagationResult run(double s) const
    {
        const auto& st = prop_.state;
        return mode_ == ShootingMode::FixedPosition ? prop_(st.q(), s, T_) : prop_(s, st.p(), T_);
    }

    /// dX(T)/d(parameter) from the tangent matrix.
    double derivative(const TrajectoryRecord& r) const
    {
        const auto& st = prop_.state;
        return mode_ == ShootingMode::FixedPosition ? (r.m.qp.real() * st.b() / st.c()) : r.m.qq.real();
    }

private:
    struct Segment {
        double a, b, xa, xb;
        int branch;
    };

    void build_branches()
    {
        const std::size_t n = grid_.size();
        const double centre = mode_ == ShootingMode::FixedPosition ? prop_.state.p() : prop_.state.q();

        ShootingBranch cur;
        cur.index = 0;
        cur.param_lo = grid_[0];
        cur.x_at_lo = x_[0];
        double seg_start = grid_[0], seg_x = x_[0];

        auto close_branch = [&](double param, double x, bool fold) {
            cur.param_hi = param;
            cur.x_at_hi = x;
            cur.fold_at_hi = fold;
            cur.central = cur.param_lo <= centre && centre <= cur.param_hi;
            branches_.push_back(cur);
            const int next = cur.index + 1;
            cur = ShootingBranch{};
            cur.index = next;
            cur.param_lo = param;
            cur.x_at_lo = x;
            cur.fold_at_lo = fold;
        };

        for (std::size_t k = 0; k + 1 < n; ++k) {
            if ((d_[k] > 0) != (d_[k + 1] > 0)) {
                // Fold inside (grid_[k], grid_[k+1]): locate by linear interpolation of dX/ds.
                const double t = d_[k] / (d_[k] - d_[k + 1]);
                const double f = grid_[k] + t * (grid_[k + 1] - grid_[k]);
                const double xf = run(f).trajectory.final().X.real();
                segments_.push_back({seg_start, f, seg_x, xf, cur.index});
                close_branch(f, xf, true);
                seg_start = f;
                seg_x = xf;
            }
            segments_.push_back({seg_start, grid_[k + 1], seg_x, x_[k + 1], cur.index});
            seg_start = grid_[k + 1];
            seg_x = x_[k + 1];
        }
        close_branch(grid_[n - 1], x_[n - 1], false);
    }

    std::optional<ShootingSolution> refine(double a, double b, double fa, double fb, double x_f, double tol) const
    {
        // Safeguarded Newton inside the bracket [a, b].
        double s = fa == 0.0 ? a : a - fa * (b - a) / (fb - fa);
        for (int it = 0; it < 80; ++it) {
            auto r = run(s);
            const double g = r.trajectory.final().X.real() - x_f;
            if (std::abs(g) < tol)
                return ShootingSolution{s, std::move(r.trajectory), -1};
            if ((g < 0) == (fa < 0)) {
                a = s;
                fa = g;
            } else {
                b = s;
                fb = g;
            }
            const double d = derivative(r.trajectory);
            double next = d != 0.0 ? s - g / d : 0.5 * (a + b);
            if (!(next > std::min(a, b) && next < std::max(a, b)))
                next = 0.5 * (a + b);
            if (std::abs(b - a) < 1e-15 * std::max(1.0, std::abs(s)))
                break;
            s = next;
        }
        return std::nullopt;
    }

    Propagator prop_;
    ShootingMode mode_;
    double T_;
    std::vector<double> grid_;
    std::vector<double> x_;
    std::vector<double> d_;
    std::vector<ShootingBranch> branches_;
    std::vector<Segment> segments_;
};

inline std::vector<ShootingSolution> shoot_q_to_xf(const Propagator& prop, double x_f, double T,
                                                   std::vector<double> p_grid, unsigned threads = 1)
{
    return ShootingMap(prop, ShootingMode::FixedPosition, T, std::move(p_grid), threads).solve(x_f);
}

inline std::vector<ShootingSolution> shoot_p_to_xf(const Propagator& prop, double x_f, double T,
                                                   std::vector<double> q_grid, unsigned threads = 1)
{
    return ShootingMap(prop, ShootingMode::FixedMomentum, T, std::move(q_grid), threads).solve(x_f);
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

// ---------------------------------------------------------------------------
// Complex roots of the map w -> X_T(w), with X(0) = q + w, P(0) = p + i(c/b)w.
// ---------------------------------------------------------------------------

inline ComplexPhasePoint launch_point(const CoherentState& s, cplx w)
{
    return {s.q() + w, s.p() + I * (s.c() / s.b()) * w, 0.0};
}

struct WPoint {
    cplx w;
    TrajectoryRecord trajectory;
    cplx X_T;

    /// dX_T/dw along the launch direction (1, i c/b), which is m_qq + i m_qp.
    cplx dXdw() const { return trajectory.m.plus(); }
};

struct ScanWindow {
    double alpha_min = -4, alpha_max = 4;
    double beta_min = -4, beta_max = 4;
    double step = 0.05;

    /// The default lattice: +-extent*b in both directions at step_fraction*b.
    static ScanWindow around_origin(double b, double extent = 4.0, double step_fraction = 0.05)
    {
        return {-extent * b, extent * b, -extent * b, extent * b, step_fraction * b};
    }

    int n_alpha() const { return static_cast<int>(std::lround((alpha_max - alpha_min) / step)) + 1; }
    int n_beta() const { return static_cast<int>(std::lround((beta_max - beta_min) / step)) + 1; }
};

struct ScanNode {
    cplx w;
    cplx X_T;
    cplx dXdw;
    cplx F;
    bool escaped = false;
};

struct ScanField {
    ScanWindow window;
    int n_alpha = 0, n_beta = 0;
    std::vector<ScanNode> nodes;  // row-major in beta, alpha fastest

    const ScanNode& at(int ia, int ib) const { return nodes[static_cast<std::size_t>(ib) * n_alpha + ia]; }
    double alpha(int ia) const { return window.alpha_min + ia * window.step; }
    double beta(int ib) const { return window.beta_min + ib * window.step; }
};

inline PropagationResult run_w(const Propagator& prop, double T, cplx w)
{
    const auto p0 = launch_point(prop.state, w);
    return prop(p0.X, p0.P, T);
}

inline ScanField wmap_scan(const Propagator& prop, double T, const ScanWindow& window, unsigned threads = 1)
{
    ScanField f;
    f.window = window;
    f.n_alpha = window.n_alpha();
    f.n_beta = window.n_beta();
    f.nodes.resize(static_cast<std::size_t>(f.n_alpha) * f.n_beta);
    parallel_for(f.nodes.size(), threads, [&](std::size_t k) {
        const int ia = static_cast<int>(k % f.n_alpha);
        const int ib = static_cast<int>(k / f.n_alpha);
        ScanNode& node = f.nodes[k];
        node.w = cplx(f.alpha(ia), f.beta(ib));
        const auto r = run_w(prop, T, node.w);
        node.escaped = !r.ok();
        if (!node.escaped) {
            node.X_T = r.trajectory.final().X;
            node.dXdw = r.trajectory.m.plus();
            node.F = exponent_F(r.trajectory, prop.state);
        }
    });
    return f;
}

struct RefineSettings {
    int max_iterations = 50;
    double tol_factor = 1e-10;       // |X_T - x_f| < tol_factor * b
    double caustic_threshold = 1e-8;  // |dX_T/dw| below this is a phase-space caustic
    double max_step_factor = 0.5;     // Newton steps capped at this many b
};

/// Newton iteration on X_T(w) = x_f.
inline WPoint refine_w(const Propagator& prop, double T, double x_f, cplx w_guess, const RefineSettings& rs = {})
{
    const double b = prop.state.b();
    cplx w = w_guess;
    for (int it = 0; it < rs.max_iterations; ++it) {
        auto r = run_w(prop, T, w);
        if (r.status == PropagationStatus::Escaped)
            throw Error(ErrorKind::Escaped, "trajectory escaped during Newton search");
        if (r.status == PropagationStatus::StepFailure)
            throw Error(ErrorKind::StepFailure, "integration failed during Newton search");
        const cplx X_T = r.trajectory.final().X;
        const cplx g = X_T - x_f;
        if (std::abs(g) < rs.tol_factor * b)
            return {w, std::move(r.trajectory), X_T};
        const cplx d = r.trajectory.m.plus();
        if (std::abs(d) < rs.caustic_threshold)
            throw Error(ErrorKind::NearCaustic, "dX_T/dw vanishes; Newton is ill-posed at a caustic");
        cplx step = -g / d;
        const double cap = rs.max_step_factor * b;
        if (std::abs(step) > cap)
            step *= cap / std::abs(step);
        w += step;
    }
    throw Error(ErrorKind::NoConvergence, "Newton search for w did not converge");
}

struct FamilyLabel {
    enum class Kind { Main, Secondary } kind = Kind::Main;
    int index = 0;

    static FamilyLabel main() { return {}; }
    static FamilyLabel secondary(int i) { return {Kind::Secondary, i}; }
    bool is_main() const { return kind == Kind::Main; }
    std::string name() const { return is_main() ? "main" : "secondary" + std::to_string(index); }
};

enum class MemberStatus { Contributing, Cut };

struct FamilyMember {
    double x_f = 0;
    cplx w;
    TrajectoryRecord trajectory;
    cplx F;
    MemberStatus status = MemberStatus::Contributing;
};

struct TrajectoryFamily {
    FamilyLabel label;
    std::vector<FamilyMember> members;  // ascending x_f
    bool truncated_low = false;
    bool truncated_high = false;

    const FamilyMember* find(double x_f, double tol = 1e-12) const
    {
        auto it = std::lower_bound(members.begin(), members.end(), x_f - tol,
                                   [](const FamilyMember& m, double x) { return m.x_f < x; });
        if (it != members.end() && std::abs(it->x_f - x_f) <= tol)
            return &*it;
        return nullptr;
    }
};

struct TraceSettings {
    RefineSettings refine{};
    /// Largest accepted change of w between neighbouring members, in units of b.
    double continuation_bound = 0.3;
    /// Halvings of an x_f step allowed before the family is truncated.
    int max_subdivisions = 10;
};

namespace detail {

inline std::optional<WPoint> continue_root(const Propagator& prop, double T, double x_from, const WPoint& from,
                                           double x_to, const TraceSettings& ts, int depth)
{
    const double b = prop.state.b();
    // Tangent predictor: dw/dx_f = 1 / (dX_T/dw).
    const cplx guess = from.w + (x_to - x_from) / from.dXdw();
    const double predicted = std::abs(guess - from.w);
    if (predicted <= ts.continuation_bound * b) {
        try {
            auto p = refine_w(prop, T, x_to, guess, ts.refine);
            const double moved = std::abs(p.w - from.w);
            const double corrected = std::abs(p.w - guess);
            if (moved <= ts.continuation_bound * b && corrected <= 0.5 * predicted + 1e-3 * b)
                return p;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::NearCaustic)
                return std::nullopt;
        }
    }
    if (depth >= ts.max_subdivisions)
        return std::nullopt;
    const double mid = 0.5 * (x_from + x_to);
    auto half = continue_root(prop, T, x_from, from, mid, ts, depth + 1);
    if (!half)
        return std::nullopt;
    return continue_root(prop, T, mid, *half, x_to, ts, depth + 1);
}

}  // namespace detail

/// Makes sqrt(m_qq + i m_qp) continuous along a family. A member whose path
/// passes close to m_qq + i m_qp = 0 at some intermediate time can pick up
/// the opposite sign from time tracking, so signs are propagated outwards in
/// x_f from the member whose path stays farthest from that zero.
inline void align_prefactor_branch(std::vector<FamilyMember>& members)
{
    if (members.size() < 2)
        return;
    std::size_t anchor = 0;
    for (std::size_t k = 1; k < members.size(); ++k)
        if (members[k].trajectory.min_abs_m_plus > members[anchor].trajectory.min_abs_m_plus)
            anchor = k;
    auto align = [&](std::size_t k, std::size_t ref) {
        cplx& r = members[k].trajectory.sqrt_m_plus;
        const cplx prev = members[ref].trajectory.sqrt_m_plus;
        if (std::abs(r + prev) < std::abs(r - prev))
            r = -r;
    };
    for (std::size_t k = anchor + 1; k < members.size(); ++k)
        align(k, k - 1);
    for (std::size_t k = anchor; k-- > 0;)
        align(k, k + 1);
}

/// Continues a converged root along the x_f grid in both directions.
/// The family stops where Newton fails, a caustic is hit, or w would jump.
inline TrajectoryFamily trace_family(const Propagator& prop, double T, std::span<const double> x_f_grid,
                                     std::size_t seed_index, const WPoint& seed, FamilyLabel label,
                                     const TraceSettings& ts = {})
{
    if (seed_index >= x_f_grid.size())
        throw Error(ErrorKind::DomainError, "seed index outside the x_f grid");
    TrajectoryFamily fam;
    fam.label = label;
    auto member = [&](double x, const WPoint& p) {
        return FamilyMember{x, p.w, p.trajectory, exponent_F(p.trajectory, prop.state), MemberStatus::Contributing};
    };

    std::vector<FamilyMember> low, high;
    WPoint cur = seed;
    for (std::size_t k = seed_index; k-- > 0;) {
        auto next = detail::continue_root(prop, T, x_f_grid[k + 1], cur, x_f_grid[k], ts, 0);
        if (!next) {
            fam.truncated_low = true;
            break;
        }
        cur = std::move(*next);
        low.push_back(member(x_f_grid[k], cur));
    }
    cur = seed;
    for (std::size_t k = seed_index + 1; k < x_f_grid.size(); ++k) {
        auto next = detail::continue_root(prop, T, x_f_grid[k - 1], cur, x_f_grid[k], ts, 0);
        if (!next) {
            fam.truncated_high = true;
            break;
        }
        cur = std::move(*next);
        high.push_back(member(x_f_grid[k], cur));
    }
    fam.members.assign(low.rbegin(), low.rend());
    fam.members.push_back(member(x_f_grid[seed_index], seed));
    fam.members.insert(fam.members.end(), high.begin(), high.end());
    align_prefactor_branch(fam.members);
    return fam;
}

struct CausticPoint {
    cplx w_c;
    cplx X_c;
    double residual = 0;  // |dX_T/dw| at w_c
};

struct CausticSettings {
    /// Lattice minima of |dX_T/dw| below this are refined.
    double candidate_threshold = 0.25;
    double accept_residual = 1e-6;
    int max_iterations = 40;
};

/// Lattice local minima of |dX_T/dw|, polished by Newton on dX_T/dw = 0 with a
/// complex central difference for the second derivative.
inline std::vector<CausticPoint> detect_caustics(const ScanField& field, const Propagator& prop, double T,
                                                 const CausticSettings& cs = {})
{
    std::vector<CausticPoint> out;
    const double b = prop.state.b();
    const double h = 1e-4 * b;
    auto slope = [&](cplx w) -> std::optional<std::pair<cplx, cplx>> {
        const auto r = run_w(prop, T, w);
        if (!r.ok())
            return std::nullopt;
        return std::pair{r.trajectory.m.plus(), r.trajectory.final().X};
    };

    for (int ib = 1; ib + 1 < field.n_beta; ++ib) {
        for (int ia = 1; ia + 1 < field.n_alpha; ++ia) {
            const auto& c = field.at(ia, ib);
            if (c.escaped || std::abs(c.dXdw) > cs.candidate_threshold)
                continue;
            bool is_min = true;
            for (int db = -1; db <= 1 && is_min; ++db)
                for (int da = -1; da <= 1 && is_min; ++da) {
                    if (da == 0 && db == 0)
                        continue;
                    const auto& nb = field.at(ia + da, ib + db);
                    if (nb.escaped || std::abs(nb.dXdw) < std::abs(c.dXdw))
                        is_min = false;
                }
            if (!is_min)
                continue;

            cplx w = c.w;
            std::optional<CausticPoint> found;
            for (int it = 0; it < cs.max_iterations; ++it) {
                const auto f0 = slope(w);
                if (!f0)
                    break;
                if (std::abs(f0->first) < cs.accept_residual) {
                    found = CausticPoint{w, f0->second, std::abs(f0->first)};
                    break;
                }
                const auto fp = slope(w + h);
                const auto fm = slope(w - h);
                if (!fp || !fm)
                    break;
                const cplx d2 = (fp->first - fm->first) / (2.0 * h);
                if (d2 == 0.0)
                    break;
                cplx step = -f0->first / d2;
                if (std::abs(step) > 0.5 * b)
                    step *= 0.5 * b / std::abs(step);
                w += step;
            }
            if (!found || std::abs(found->w_c - c.w) > 3.0 * field.window.step)
                continue;
            const bool duplicate = std::any_of(out.begin(), out.end(), [&](const CausticPoint& p) {
                return std::abs(p.w_c - found->w_c) < 1e-6 * b;
            });
            if (!duplicate)
                out.push_back(*found);
        }
    }
    return out;
}

struct FamilySearch {
    TraceSettings trace{};
    /// How many grid points away from Re X_c secondary seeds are placed.
    int seed_offset = 3;
    /// Only this many caustics, those closest to the main family in the w
    /// plane, spawn secondary families; far singularities are ignored.
    std::size_t max_secondaries = 1;
};

inline std::size_t nearest_index(std::span<const double> grid, double x)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - x) < std::abs(grid[best] - x))
            best = i;
    return best;
}

namespace detail {

inline bool belongs_to(const TrajectoryFamily& fam, double x_f, cplx w, double tol)
{
    const auto* m = fam.find(x_f);
    return m && std::abs(m->w - w) < tol;
}

}  // namespace detail

/// The main family through w = 0 plus one secondary family per caustic,
/// seeded on the branch of the caustic's two-to-one neighbourhood that does
/// not already belong to a traced family.
inline std::vector<TrajectoryFamily> discover_families(const Propagator& prop, double T,
                                                       std::span<const double> x_f_grid,
                                                       const std::vector<CausticPoint>& caustics,
                                                       const FamilySearch& fs = {})
{
    std::vector<TrajectoryFamily> fams;
    const double b = prop.state.b();

    const auto central = central_endpoint(prop, T);
    const std::size_t k0 = nearest_index(x_f_grid, central.q_T);
    try {
        const auto seed = refine_w(prop, T, x_f_grid[k0], 0.0, fs.trace.refine);
        fams.push_back(trace_family(prop, T, x_f_grid, k0, seed, FamilyLabel::main(), fs.trace));
    } catch (const Error& e) {
        throw Error(ErrorKind::MissingMain, std::string("cannot seed the main family: ") + e.what());
    }

    // Rank caustics by their distance to the main family's w curve.
    std::vector<std::pair<double, const CausticPoint*>> ranked;
    for (const auto& c : caustics) {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& m : fams.front().members)
            d = std::min(d, std::abs(m.w - c.w_c));
        ranked.emplace_back(d, &c);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b2) { return a.first < b2.first; });
    if (ranked.size() > fs.max_secondaries)
        ranked.resize(fs.max_secondaries);

    int next_index = 1;
    for (const auto& [dist, cp] : ranked) {
        const CausticPoint& c = *cp;
        // Second derivative of the map at the caustic from the slope nearby.
        const double h = 1e-3 * b;
        const auto rp = run_w(prop, T, c.w_c + h);
        const auto rm = run_w(prop, T, c.w_c - h);
        if (!rp.ok() || !rm.ok())
            continue;
        const cplx d2 = (rp.trajectory.m.plus() - rm.trajectory.m.plus()) / (2.0 * h);
        if (std::abs(d2) < 1e-12)
            continue;

        const std::size_t kc = nearest_index(x_f_grid, c.X_c.real());
        std::vector<std::pair<std::size_t, WPoint>> candidates;
        for (int side : {-1, 1}) {
            const long k = static_cast<long>(kc) + side * fs.seed_offset;
            if (k < 0 || k >= static_cast<long>(x_f_grid.size()))
                continue;
            const double x = x_f_grid[static_cast<std::size_t>(k)];
            const cplx root = std::sqrt(2.0 * (x - c.X_c) / d2);
            for (cplx g : {c.w_c + root, c.w_c - root}) {
                try {
                    candidates.emplace_back(static_cast<std::size_t>(k), refine_w(prop, T, x, g, fs.trace.refine));
                } catch (const Error&) {
                }
            }
        }
        // Prefer the seed farthest from the origin among those not yet traced.
        std::sort(candidates.begin(), candidates.end(),
                  [](const auto& a, const auto& b2) { return std::abs(a.second.w) > std::abs(b2.second.w); });
        for (const auto& [k, seed] : candidates) {
            const bool known = std::any_of(fams.begin(), fams.end(), [&](const TrajectoryFamily& f) {
                return detail::belongs_to(f, x_f_grid[k], seed.w, 1e-6 * b);
            });
            if (known)
                continue;
            fams.push_back(trace_family(prop, T, x_f_grid, k, seed, FamilyLabel::secondary(next_index++), fs.trace));
            break;
        }
    }
    return fams;
}

}  // namespace sctraj
