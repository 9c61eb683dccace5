#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "env.hpp"
#include "estimate.hpp"
#include "exact.hpp"
#include "stats.hpp"
#include "walk.hpp"

namespace cookiewalk {

// ---- Classification ----------------------------------------------------------

enum class Verdict { recurrent, transient, degenerate };

inline const char* to_string(Verdict v) noexcept
{
    switch (v) {
    case Verdict::recurrent: return "recurrent";
    case Verdict::transient: return "transient";
    case Verdict::degenerate: return "degenerate";
    }
    return "?";
}

struct Classification {
    double expected_delta = 0.0;
    Verdict verdict = Verdict::recurrent;
    /// The site law is a.s. the row (1, 1/2, 1/2, ...); the walk is then X_n = n.
    bool degenerate = false;

    bool transient() const noexcept { return verdict != Verdict::recurrent; }
};

/// Recurrent iff E[delta] <= 1, unless every site carries exactly one cookie of strength 1.
inline Classification classify(const EnvironmentSpec& spec)
{
    spec.validate();
    if (!spec.stationary())
        site_marginal(spec); // throws the explanatory error
    Classification c;
    c.expected_delta = expected_delta(spec);
    const CookieRow single{1.0};
    c.degenerate = true;
    for (const auto& [w, row] : site_marginal(spec))
        if (w > 0.0 && !(row.trimmed() == single))
            c.degenerate = false;
    if (c.degenerate)
        c.verdict = Verdict::degenerate;
    else
        c.verdict = c.expected_delta > 1.0 ? Verdict::transient : Verdict::recurrent;
    return c;
}

/// Verdict from an expected drift alone (used for measured leftover environments).
inline Classification classify_expected_delta(double expected)
{
    if (!(expected >= 0.0))
        throw ValidationError("expected_delta", "must be nonnegative");
    Classification c;
    c.expected_delta = expected;
    c.verdict = expected > 1.0 ? Verdict::transient : Verdict::recurrent;
    return c;
}

inline nlohmann::json to_json_value(const Classification& c)
{
    return {{"expected_delta", c.expected_delta}, {"verdict", to_string(c.verdict)}, {"degenerate", c.degenerate}};
}

// ---- Return probability formula ----------------------------------------------

/// True when the site law is i.i.d., has no cookies past the second, and the second
/// cookie is not a.s. 1/2.
inline bool two_cookie_formula_applies(const EnvironmentSpec& spec)
{
    if (spec.kind != EnvKind::homogeneous && spec.kind != EnvKind::iid_mixture)
        return false;
    bool second_nontrivial = false;
    for (const auto& [w, row] : site_marginal(spec)) {
        if (row.trimmed().size() > 2)
            return false;
        if (w > 0.0 && row.at(2) != 0.5)
            second_nontrivial = true;
    }
    return second_nontrivial;
}

/// P_0[X_n > 0 for all n > 0] = E[w(0,1)] (E[delta] - 1)_+ / E[(2 w(0,2) - 1) w(0,1)].
inline double predicted_escape_prob(const EnvironmentSpec& spec)
{
    spec.validate();
    if (!two_cookie_formula_applies(spec))
        throw ValidationError("spec", "closed form needs an i.i.d. law with at most two cookies per site "
                                      "and a second cookie that is not a.s. 1/2");
    double first = 0.0, delta = 0.0, denom = 0.0;
    for (const auto& [w, row] : site_marginal(spec)) {
        first += w * row.at(1);
        delta += w * row.drift();
        denom += w * (2.0 * row.at(2) - 1.0) * row.at(1);
    }
    return first * std::max(0.0, delta - 1.0) / denom;
}

// ---- Phase scan --------------------------------------------------------------

struct PhasePoint {
    double p = 0.0;
    double predicted = 0.0;
    Estimate mc;
    std::int64_t exact_K = 0;
    double exact_bound = 0.0;
    double exact_truncation = 0.0;
};

struct PhaseScanOptions {
    std::int64_t exact_K = 64;
    bool run_mc = true;
    bool run_exact = true;
};

inline EnvironmentSpec two_cookie_spec(double p) { return EnvironmentSpec::homogeneous(CookieRow{p, p}); }

/// Homogeneous (p, p) for every p of the grid: closed form, Monte Carlo at cfg.level and
/// the exact bound at opt.exact_K.
inline std::vector<PhasePoint> phase_scan(const std::vector<double>& p_grid, const McConfig& cfg,
                                          PhaseScanOptions opt = {})
{
    if (p_grid.empty())
        throw ValidationError("p_grid", "grid is empty");
    for (double p : p_grid)
        if (!(p > 0.5 && p <= 1.0))
            throw ValidationError("p_grid", "every p must lie in (1/2, 1]");
    std::vector<PhasePoint> out;
    for (double p : p_grid) {
        const auto spec = two_cookie_spec(p);
        PhasePoint pt;
        pt.p = p;
        pt.predicted = predicted_escape_prob(spec);
        if (opt.run_mc)
            pt.mc = mc_escape_prob(spec, cfg);
        if (opt.run_exact) {
            const auto b = escape_prob_upper_bounds(make_environment(spec), {opt.exact_K});
            if (b.values.empty())
                throw std::runtime_error("exact bound at K=" + std::to_string(opt.exact_K) +
                                         " exceeds the solver limits");
            pt.exact_K = opt.exact_K;
            pt.exact_bound = b.values.front();
            pt.exact_truncation = b.truncation_mass.front();
        }
        out.push_back(pt);
    }
    return out;
}

inline nlohmann::json to_json_value(const PhasePoint& pt)
{
    return {{"p", pt.p},
            {"predicted", pt.predicted},
            {"mc", to_json_value(pt.mc)},
            {"exact_K", pt.exact_K},
            {"exact_bound", pt.exact_bound},
            {"exact_truncation", pt.exact_truncation}};
}

// ---- Zero speed ---------------------------------------------------------------

/// Hypotheses of the zero-speed theorem: no cookies past the second, and two neighbouring
/// sites whose first cookies are both below 1 with positive probability.
inline bool zero_speed_hypotheses(const EnvironmentSpec& spec)
{
    if (!spec.stationary())
        return false;
    for (const auto& r : spec.rows)
        if (r.trimmed().size() > 2)
            return false;
    switch (spec.kind) {
    case EnvKind::homogeneous:
        return spec.rows.front().at(1) < 1.0;
    case EnvKind::iid_mixture:
        for (std::size_t j = 0; j < spec.rows.size(); ++j)
            if (spec.weights[j] > 0.0 && spec.rows[j].at(1) < 1.0)
                return true;
        return false;
    case EnvKind::periodic:
        for (std::size_t j = 0; j < spec.rows.size(); ++j)
            if (spec.rows[j].at(1) < 1.0 && spec.rows[(j + 1) % spec.rows.size()].at(1) < 1.0)
                return true;
        return false;
    case EnvKind::explicit_window:
        return false;
    }
    return false;
}

struct ZeroSpeedReport {
    bool hypotheses_hold = false;
    SpeedProfile profile;
    bool speed_decreasing = false;
    double final_speed = 0.0;
    std::string verdict; // "consistent with v=0", "positive speed" or "inconclusive"
};

/// A consistency check, not a proof: X_n/n over increasing horizons plus the u partial sums.
inline ZeroSpeedReport zero_speed_scan(const EnvironmentSpec& spec, const McConfig& cfg,
                                       const std::vector<std::uint64_t>& horizons)
{
    ZeroSpeedReport r;
    r.hypotheses_hold = zero_speed_hypotheses(spec);
    r.profile = speed_profile(spec, cfg, horizons);
    const auto& s = r.profile.speed;
    r.speed_decreasing = s.size() >= 2;
    for (std::size_t i = 1; i < s.size(); ++i)
        if (!(s[i].value < s[i - 1].value))
            r.speed_decreasing = false;
    r.final_speed = s.back().value;
    if (r.speed_decreasing && !r.profile.u_stable)
        r.verdict = "consistent with v=0";
    else if (r.profile.u_stable && s.back().lo > 0.0)
        r.verdict = "positive speed";
    else
        r.verdict = "inconclusive";
    return r;
}

inline nlohmann::json to_json_value(const SpeedProfile& p)
{
    nlohmann::json speeds = nlohmann::json::array();
    for (std::size_t i = 0; i < p.horizons.size(); ++i) {
        auto e = to_json_value(p.speed[i]);
        e["horizon"] = p.horizons[i];
        speeds.push_back(e);
    }
    nlohmann::json j{{"speed", speeds},
                     {"u_partial_J", p.u_partial.size()},
                     {"u_partial_last", p.u_partial.empty() ? 0.0 : p.u_partial.back()},
                     {"window_start", p.window_start},
                     {"window_growth", p.window_growth},
                     {"u_stable", p.u_stable},
                     {"v_hat", p.v_hat}};
    if (p.u_stable)
        j["u_hat"] = p.u_hat;
    else
        j["u_hat"] = "u diverging";
    return j;
}

inline nlohmann::json to_json_value(const ZeroSpeedReport& r)
{
    return {{"hypotheses_hold", r.hypotheses_hold},
            {"profile", to_json_value(r.profile)},
            {"speed_decreasing", r.speed_decreasing},
            {"final_speed", r.final_speed},
            {"verdict", r.verdict},
            {"note", "consistency check; the limit itself is not decidable from finite runs"}};
}

// ---- Leftover environments ---------------------------------------------------

struct LeftoverOptions {
    std::int64_t window = 50;
    /// Walk 1 runs until it first reaches this level; 0 means 64 * window.
    std::int64_t far_level = 0;
};

struct LeftoverReport {
    Classification first;
    std::int64_t window = 0;
    std::int64_t far_level = 0;
    /// Per-replica average over sites [0, W) of the drift left by walk 1.
    Estimate leftover_drift;
    /// Fraction of replicas whose walk 1 came back into the window after reaching 2W.
    double late_revisit_fraction = 0.0;
    /// Classification of the second walk from the measured leftover drift.
    Classification second;
    /// Walk 2 on the leftover: reaches W before returning to 0.
    Estimate second_escape;
};

/// Runs a first walk to far_level, removes the cookies it ate, and starts a second walk
/// in what is left on the window [0, W).
inline LeftoverReport leftover_iterate(const EnvironmentSpec& spec, const McConfig& cfg, LeftoverOptions opt = {})
{
    cfg.validate();
    if (opt.window < 1)
        throw ValidationError("window", "window must be >= 1");
    LeftoverReport rep;
    rep.first = classify(spec);
    if (!rep.first.transient())
        throw ValidationError("spec", "first walk must be transient for the leftover construction");
    const std::int64_t W = opt.window;
    const std::int64_t far = opt.far_level > 0 ? opt.far_level : 64 * W;
    if (far < 2 * W)
        throw ValidationError("far_level", "far level must be at least twice the window");
    rep.window = W;
    rep.far_level = far;
    const EnvironmentView base = make_environment(spec);

    struct Acc {
        Welford drift;
        std::uint64_t late = 0, escaped = 0, resolved = 0, short_runs = 0;
    };
    const auto chunks = run_chunks(cfg.replicas, cfg.threads, [&](std::uint64_t b, std::uint64_t e) {
        Acc a;
        WalkState w, w2;
        for (std::uint64_t r = b; r < e; ++r) {
            const EnvironmentView view = replica_view(base, cfg.master_seed, r);
            RngStream rng(cfg.master_seed, r);
            w.reset(0);
            auto res = run_until(w, view, StopCondition::hit_level(2 * W, cfg.max_steps), rng);
            if (res.reason == StopReason::truncated) {
                ++a.short_runs;
                continue;
            }
            // From 2W on, watch for returns into the window.
            bool late = false;
            std::uint64_t budget = cfg.max_steps - std::min(cfg.max_steps, w.steps());
            while (w.position() < far && budget > 0) {
                w.advance(view, rng.uniform());
                --budget;
                if (w.position() < W)
                    late = true;
            }
            if (w.position() < far) {
                ++a.short_runs;
                continue;
            }
            if (late)
                ++a.late;
            double sum = 0.0;
            EnvironmentView second = view;
            for (std::int64_t x = 0; x < W; ++x) {
                sum += w.remaining_drift(view, x);
                second.add_consumed(x, w.departures(x));
            }
            a.drift.add(sum / static_cast<double>(W));

            RngStream rng2 = rng.split(1);
            w2.reset(0);
            w2.advance(second, rng2.uniform());
            if (w2.position() < 1 || W == 1) {
                ++a.resolved;
                if (w2.position() >= 1)
                    ++a.escaped;
                continue;
            }
            const auto r2 = run_until(w2, second, StopCondition::hit_either(0, W, cfg.max_steps), rng2);
            if (r2.reason == StopReason::truncated)
                continue;
            ++a.resolved;
            if (r2.reason == StopReason::hit_right)
                ++a.escaped;
        }
        return a;
    });
    Acc tot;
    for (const auto& c : chunks) {
        tot.drift.merge(c.drift);
        tot.late += c.late;
        tot.escaped += c.escaped;
        tot.resolved += c.resolved;
        tot.short_runs += c.short_runs;
    }
    if (tot.short_runs > 0)
        throw std::runtime_error("horizon too small: " + std::to_string(tot.short_runs) +
                                 " replicas did not reach the far level within max_steps");
    rep.leftover_drift = mean_estimate(tot.drift, cfg.ci_level);
    rep.late_revisit_fraction = static_cast<double>(tot.late) / static_cast<double>(cfg.replicas);
    rep.second = classify_expected_delta(std::max(0.0, rep.leftover_drift.value));
    rep.second_escape = wilson_estimate(tot.escaped, tot.resolved, cfg.ci_level);
    return rep;
}

inline nlohmann::json to_json_value(const LeftoverReport& r)
{
    return {{"first", to_json_value(r.first)},
            {"window", r.window},
            {"far_level", r.far_level},
            {"leftover_drift", to_json_value(r.leftover_drift)},
            {"late_revisit_fraction", r.late_revisit_fraction},
            {"second", to_json_value(r.second)},
            {"second_escape_to_window", to_json_value(r.second_escape)}};
}

// ---- Random instances for the property suites --------------------------------

struct SuiteCaps {
    std::int64_t max_width = 8; // z - x
    std::size_t max_row = 2;
    std::uint64_t max_horizon = 14;
};

namespace detail {

inline CookieRow random_row(RngStream& rng, std::size_t max_len)
{
    const auto len = static_cast<std::size_t>(rng.next_u64() % (max_len + 1));
    CookieRow row;
    for (std::size_t i = 0; i < len; ++i)
        row.strengths.push_back(0.5 + 0.5 * rng.uniform());
    return row;
}

/// Explicit window over [x, z] with random rows and 1/2 elsewhere.
inline EnvironmentSpec random_window(RngStream& rng, std::int64_t x, std::int64_t z, std::size_t max_len)
{
    std::map<std::int64_t, CookieRow> window;
    for (std::int64_t s = x; s <= z; ++s)
        window[s] = random_row(rng, max_len);
    return EnvironmentSpec::explicit_window({CookieRow{}}, std::move(window));
}

/// Raises each cookie, plus one slot of the 1/2 tail, with probability 1/2 to a uniform
/// value in [current, 1].
inline CookieRow raise_row(RngStream& rng, const CookieRow& row)
{
    CookieRow out = row;
    out.strengths.push_back(0.5);
    for (double& s : out.strengths)
        if (rng.uniform() < 0.5)
            s += (1.0 - s) * rng.uniform();
    return out.trimmed();
}

inline EnvironmentSpec raise_window(RngStream& rng, const EnvironmentSpec& spec)
{
    EnvironmentSpec out = spec;
    for (auto& [site, row] : out.window)
        row = raise_row(rng, row);
    return out;
}

inline std::int64_t uniform_int(RngStream& rng, std::int64_t lo, std::int64_t hi)
{
    return lo + static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

} // namespace detail

struct SuiteViolation {
    std::size_t case_index = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    nlohmann::json instance;
};

struct SuiteReport {
    std::string name;
    std::size_t cases = 0;
    std::size_t violations = 0;
    double tolerance = 0.0;
    double worst_gap = 0.0; // max over cases of lhs - rhs (<= tolerance on a pass)
    std::vector<SuiteViolation> counterexamples;

    bool passed() const noexcept { return violations == 0; }
};

inline nlohmann::json to_json_value(const SuiteReport& r)
{
    nlohmann::json ce = nlohmann::json::array();
    for (const auto& v : r.counterexamples)
        ce.push_back({{"case", v.case_index}, {"lhs", v.lhs}, {"rhs", v.rhs}, {"instance", v.instance}});
    return {{"suite", r.name},
            {"cases", r.cases},
            {"violations", r.violations},
            {"tolerance", r.tolerance},
            {"worst_gap", r.worst_gap},
            {"passed", r.passed()},
            {"counterexamples", ce}};
}

namespace detail {

inline void record(SuiteReport& rep, std::size_t idx, double lhs, double rhs, const nlohmann::json& inst)
{
    ++rep.cases;
    rep.worst_gap = std::max(rep.worst_gap, lhs - rhs);
    if (lhs > rhs + rep.tolerance) {
        ++rep.violations;
        if (rep.counterexamples.size() < 20)
            rep.counterexamples.push_back({idx, lhs, rhs, inst});
    }
}

} // namespace detail

inline constexpr double kSuiteTolerance = 1e-10;

/// P_{y1}[T_z <= T_x ^ t] <= P_{y2}[T_z <= T_x ^ t] for x <= y1 <= y2 <= z.
inline SuiteReport initial_point_suite(std::size_t n_cases, std::uint64_t seed, SuiteCaps caps = {})
{
    SuiteReport rep;
    rep.name = "monotonicity_initial_point";
    rep.tolerance = kSuiteTolerance;
    for (std::size_t i = 0; i < n_cases; ++i) {
        RngStream rng(seed, hash_combine(1, i));
        const std::int64_t width = detail::uniform_int(rng, 1, caps.max_width);
        const std::int64_t x = 0, z = width;
        const auto spec = detail::random_window(rng, x, z, caps.max_row);
        std::int64_t y1 = detail::uniform_int(rng, x, z), y2 = detail::uniform_int(rng, x, z);
        if (y1 > y2)
            std::swap(y1, y2);
        const auto t = static_cast<std::uint64_t>(detail::uniform_int(rng, 0, static_cast<std::int64_t>(caps.max_horizon)));
        const auto view = make_environment(spec);
        const EventSpec ev{x, z, t};
        const double a = path_sum_event_prob(view, y1, ev, caps.max_horizon);
        const double b = path_sum_event_prob(view, y2, ev, caps.max_horizon);
        detail::record(rep, i, a, b,
                       {{"env", to_json_value(spec)}, {"x", x}, {"z", z}, {"y1", y1}, {"y2", y2}, {"t", t}});
    }
    return rep;
}

/// P_{y,omega1}[T_z <= T_x ^ t] <= P_{y,omega2}[...] for omega1 <= omega2.
inline SuiteReport environment_suite(std::size_t n_cases, std::uint64_t seed, SuiteCaps caps = {})
{
    SuiteReport rep;
    rep.name = "monotonicity_environment";
    rep.tolerance = kSuiteTolerance;
    for (std::size_t i = 0; i < n_cases; ++i) {
        RngStream rng(seed, hash_combine(2, i));
        const std::int64_t width = detail::uniform_int(rng, 1, caps.max_width);
        const std::int64_t x = 0, z = width;
        const auto lo = detail::random_window(rng, x, z, caps.max_row);
        const auto hi = detail::raise_window(rng, lo);
        const std::int64_t y = detail::uniform_int(rng, x, z);
        const auto t = static_cast<std::uint64_t>(detail::uniform_int(rng, 0, static_cast<std::int64_t>(caps.max_horizon)));
        const EventSpec ev{x, z, t};
        // Raised rows may be one cookie longer than the caps allow.
        const double a = path_sum_event_prob(make_environment(lo), y, ev, caps.max_horizon);
        const double b = path_sum_event_prob(make_environment(hi), y, ev, caps.max_horizon);
        detail::record(rep, i, a, b,
                       {{"env_low", to_json_value(lo)}, {"env_high", to_json_value(hi)}, {"x", x}, {"z", z}, {"y", y}, {"t", t}});
    }
    return rep;
}

/// P_y[T_x < T_z] <= (z - y) / (z - x), solved on the capped chain.
inline SuiteReport first_passage_bound_suite(std::size_t n_cases, std::uint64_t seed, SuiteCaps caps = {})
{
    SuiteReport rep;
    rep.name = "first_passage_bound";
    rep.tolerance = 1e-12;
    for (std::size_t i = 0; i < n_cases; ++i) {
        RngStream rng(seed, hash_combine(3, i));
        const std::int64_t width = detail::uniform_int(rng, 2, caps.max_width);
        const std::int64_t x = 0, z = width;
        const auto spec = detail::random_window(rng, x, z, caps.max_row);
        const std::int64_t y = detail::uniform_int(rng, x + 1, z - 1);
        const auto chain = build_capped_chain<double>(make_environment(spec), x, z);
        const double left_first = 1.0 - solve_hitting_prob(chain, y).value;
        const double bound = static_cast<double>(z - y) / static_cast<double>(z - x);
        detail::record(rep, i, left_first, bound, {{"env", to_json_value(spec)}, {"x", x}, {"z", z}, {"y", y}});
    }
    return rep;
}

/// Path sums against the capped chain. At a common finite horizon the two must agree;
/// the infinite-horizon chain value must lie in [event, event + unresolved].
inline SuiteReport oracle_equivalence_suite(std::size_t n_cases, std::uint64_t seed, SuiteCaps caps = {5, 2, 14})
{
    SuiteReport rep;
    rep.name = "oracle_equivalence";
    rep.tolerance = 1e-9;
    for (std::size_t i = 0; i < n_cases; ++i) {
        RngStream rng(seed, hash_combine(4, i));
        const std::int64_t width = detail::uniform_int(rng, 2, caps.max_width);
        const std::int64_t x = 0, z = width;
        const auto spec = detail::random_window(rng, x, z, caps.max_row);
        const std::int64_t y = detail::uniform_int(rng, x + 1, z - 1);
        const auto t = static_cast<std::uint64_t>(detail::uniform_int(rng, 1, static_cast<std::int64_t>(caps.max_horizon)));
        const auto view = make_environment(spec);
        const auto m = path_sum_masses(view, y, EventSpec{x, z, t}, caps.max_horizon);
        const auto chain = build_capped_chain<double>(view, x, z);
        const double finite = solve_hitting_prob_horizon(chain, y, t);
        const double full = solve_hitting_prob(chain, y).value;
        const double gap = std::max({std::abs(m.event - finite), m.event - full, full - (m.event + m.unresolved)});
        detail::record(rep, i, gap, 0.0,
                       {{"env", to_json_value(spec)}, {"x", x}, {"z", z}, {"y", y}, {"t", t},
                        {"path_sum", m.event}, {"unresolved", m.unresolved}, {"chain_t", finite}, {"chain", full}});
    }
    return rep;
}

struct MonotonicityReport {
    SuiteReport initial_point;
    SuiteReport environment;

    bool passed() const noexcept { return initial_point.passed() && environment.passed(); }
};

inline MonotonicityReport monotonicity_suite(std::size_t n_cases, std::uint64_t seed, SuiteCaps caps = {})
{
    if (caps.max_width > 8 || caps.max_horizon > 14)
        throw ValidationError("caps", "monotonicity instances are limited to width 8 and horizon 14");
    return {initial_point_suite(n_cases, seed, caps), environment_suite(n_cases, seed, caps)};
}

// ---- Return probability and speed ordering ----------------------------------

struct ReturnMonotonicityReport {
    struct Pair {
        EnvironmentSpec low, high;
        double bound_low = 0.0, bound_high = 0.0;
        Estimate speed_low, speed_high;
        bool bounds_ordered = false;
        bool speeds_ordered = false;
    };
    std::int64_t K = 0;
    std::vector<Pair> pairs;

    bool passed() const noexcept
    {
        return std::all_of(pairs.begin(), pairs.end(), [](const Pair& p) { return p.bounds_ordered && p.speeds_ordered; });
    }
};

/// For pointwise dominated homogeneous pairs: exact escape bounds at level K are ordered,
/// and the X_n/n estimates are ordered up to their joint uncertainty.
inline ReturnMonotonicityReport return_monotonicity_check(
    const std::vector<std::pair<EnvironmentSpec, EnvironmentSpec>>& pairs, std::int64_t K, const McConfig& cfg,
    std::uint64_t horizon)
{
    ReturnMonotonicityReport rep;
    rep.K = K;
    for (const auto& [lo, hi] : pairs) {
        if (lo.kind != EnvKind::homogeneous || hi.kind != EnvKind::homogeneous)
            throw ValidationError("pair", "comparison needs homogeneous specs");
        if (!row_dominated(lo.rows.front(), hi.rows.front()))
            throw ValidationError("pair", "environments are not pointwise ordered");
        ReturnMonotonicityReport::Pair p{lo, hi, 0.0, 0.0, {}, {}, false, false};
        const auto bl = escape_prob_upper_bounds(make_environment(lo), {K});
        const auto bh = escape_prob_upper_bounds(make_environment(hi), {K});
        if (bl.values.empty() || bh.values.empty())
            throw std::runtime_error("exact bound at K=" + std::to_string(K) + " exceeds the solver limits");
        p.bound_low = bl.values.front();
        p.bound_high = bh.values.front();
        p.bounds_ordered = p.bound_low <= p.bound_high + kSuiteTolerance + bl.truncation_mass.front();
        p.speed_low = mc_speed(lo, cfg, horizon).speed.front();
        p.speed_high = mc_speed(hi, cfg, horizon).speed.front();
        const double joint = std::hypot(p.speed_low.std_error, p.speed_high.std_error);
        p.speeds_ordered = p.speed_low.value <= p.speed_high.value + 4.0 * joint;
        rep.pairs.push_back(std::move(p));
    }
    return rep;
}

inline nlohmann::json to_json_value(const ReturnMonotonicityReport& r)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : r.pairs)
        arr.push_back({{"low", to_json_value(p.low)},
                       {"high", to_json_value(p.high)},
                       {"bound_low", p.bound_low},
                       {"bound_high", p.bound_high},
                       {"speed_low", to_json_value(p.speed_low)},
                       {"speed_high", to_json_value(p.speed_high)},
                       {"bounds_ordered", p.bounds_ordered},
                       {"speeds_ordered", p.speeds_ordered}});
    return {{"K", r.K}, {"pairs", arr}, {"passed", r.passed()}};
}

// ---- Couplings ----------------------------------------------------------------

/// Exact P[X1 overtakes X2 within `horizon` steps] for the naive coupling. Both walks
/// only compare u with 1/2, p1 and p2, so it suffices to enumerate the four intervals
/// those thresholds cut out of [0, 1) at every step.
inline double naive_overtake_exact(double p1, double p2, std::uint64_t horizon)
{
    detail::check_naive_params(p1, p2);
    if (horizon > 12)
        throw ValidationError("horizon", "exact enumeration is limited to 12 steps");
    const double cuts[5] = {0.0, 0.5, p1, p2, 1.0};
    std::vector<double> mid, len;
    for (int i = 0; i < 4; ++i) {
        if (cuts[i + 1] > cuts[i]) {
            mid.push_back(0.5 * (cuts[i] + cuts[i + 1]));
            len.push_back(cuts[i + 1] - cuts[i]);
        }
    }
    NaiveCoupler c(p1, p2);
    const std::size_t k = mid.size();
    std::uint64_t total = 1;
    for (std::uint64_t i = 0; i < horizon; ++i)
        total *= k;
    double prob = 0.0;
    std::vector<double> seq(horizon);
    for (std::uint64_t code = 0; code < total; ++code) {
        std::uint64_t rest = code;
        double w = 1.0;
        for (std::uint64_t n = 0; n < horizon; ++n) {
            seq[n] = mid[rest % k];
            w *= len[rest % k];
            rest /= k;
        }
        std::size_t i = 0;
        if (c.run(horizon, [&] { return seq[i++]; }, false).overtake)
            prob += w;
    }
    return prob;
}

struct CouplingCount {
    std::uint64_t runs = 0;
    std::uint64_t events = 0;
    double frequency() const noexcept { return runs ? static_cast<double>(events) / static_cast<double>(runs) : 0.0; }
};

/// Counts coupled runs in which X1 gets strictly ahead of X2 within the horizon.
inline CouplingCount naive_overtake_count(double p1, double p2, std::uint64_t horizon, std::uint64_t runs,
                                          std::uint64_t seed, unsigned threads = 0)
{
    detail::check_naive_params(p1, p2);
    const auto chunks = run_chunks(
        runs, threads,
        [&](std::uint64_t b, std::uint64_t e) {
            NaiveCoupler c(p1, p2);
            std::uint64_t n = 0;
            for (std::uint64_t r = b; r < e; ++r) {
                RngStream rng(seed, r);
                if (c.run(horizon, [&] { return rng.uniform(); }, false).overtake)
                    ++n;
            }
            return n;
        },
        1 << 16);
    CouplingCount out;
    out.runs = runs;
    for (auto n : chunks)
        out.events += n;
    return out;
}

/// Counts runs in which the shared-uniform coupling ever has Y_n > X_n.
inline CouplingCount domination_violations(const EnvironmentSpec& spec, std::uint64_t horizon, std::uint64_t runs,
                                           std::uint64_t seed, unsigned threads = 0)
{
    const EnvironmentView base = make_environment(spec);
    const auto chunks = run_chunks(
        runs, threads,
        [&](std::uint64_t b, std::uint64_t e) {
            std::uint64_t bad = 0;
            for (std::uint64_t r = b; r < e; ++r) {
                const EnvironmentView view = replica_view(base, seed, r);
                RngStream rng(seed, r);
                const auto paths = run_coupled_dominating(view, 0, horizon, rng);
                for (std::size_t n = 0; n < paths.x.size(); ++n)
                    if (paths.y[n] > paths.x[n]) {
                        ++bad;
                        break;
                    }
            }
            return bad;
        },
        1 << 12);
    CouplingCount out;
    out.runs = runs;
    for (auto n : chunks)
        out.events += n;
    return out;
}

} // namespace cookiewalk
