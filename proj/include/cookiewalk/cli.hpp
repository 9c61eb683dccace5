#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "env.hpp"
#include "estimate.hpp"
#include "exact.hpp"
#include "experiments.hpp"
#include "io.hpp"
#include "walk.hpp"

namespace cookiewalk::cli {

enum ExitCode : int { ok = 0, runtime_error = 1, usage_error = 2, validation_error = 3, verify_failed = 4 };

/// Options shared by every subcommand. Precedence: command line, then the --config
/// file (TOML/INI, one section per subcommand), then the defaults below.
struct Common {
    std::string env;
    std::uint64_t seed = 0;
    std::string output;
    std::string format = "json";
    bool append = false;
    unsigned threads = 0;
    std::uint64_t replicas = 0;
    double ci_level = 0.95;
    std::uint64_t max_steps = 1'000'000'000;
};

struct RunConfig {
    std::string subcommand;
    Common common;

    // simulate
    std::uint64_t steps = 1000;
    std::int64_t start = 0;
    std::string dump = "trajectory";
    // exact-hit
    std::int64_t from = 0, left = 0, right = 0;
    std::string target = "left";
    bool rational = false;
    std::uint64_t budget = kDefaultChainBudget;
    std::optional<std::uint64_t> horizon;
    std::string chain_csv;
    // escape / phase-scan
    std::int64_t K = 0;
    std::vector<std::int64_t> exact_levels;
    double p_min = 0.55, p_max = 0.99;
    std::uint64_t p_steps = 45;
    std::int64_t exact_K = 64;
    bool no_exact = false;
    // speed / zero-speed
    std::vector<std::uint64_t> horizons;
    // leftover
    std::int64_t window = 50;
    std::int64_t far_level = 0;
    // verify
    std::string suite = "all";
    std::uint64_t cases = 200;
    std::uint64_t runs = 1'000'000;
};

namespace detail {

inline McConfig mc_config(const Common& c, std::int64_t level = 0)
{
    McConfig m;
    m.replicas = c.replicas;
    m.master_seed = c.seed;
    m.level = level;
    m.max_steps = c.max_steps;
    m.ci_level = c.ci_level;
    m.threads = c.threads;
    return m;
}

inline nlohmann::json header(const std::string& command)
{
    return {{"schema", "v1"}, {"command", command}};
}

inline nlohmann::json spec_header(const std::string& command, const EnvironmentSpec& spec, const Common& c,
                                  bool stochastic)
{
    auto j = header(command);
    j["spec_hash"] = spec_hash(spec);
    j["env"] = to_json_value(spec);
    if (stochastic)
        j["seed"] = c.seed;
    return j;
}

inline void merge(nlohmann::json& into, const nlohmann::json& from)
{
    for (const auto& [k, v] : from.items())
        into[k] = v;
}

class Emitter {
public:
    Emitter(const Common& c, std::ostream& out) : c_(c), out_(out) {}

    void json(const nlohmann::json& j) { write(j.dump(2) + "\n"); }

    /// Batch rows under the shared estimator header; --append keeps earlier rows.
    void batch(const std::string& rows)
    {
        std::string previous;
        if (c_.append && !c_.output.empty() && std::filesystem::exists(c_.output))
            previous = read_file(c_.output);
        write(batch_csv_append(previous, rows));
    }

    void csv(const std::string& text) { write(text); }

    bool want_csv() const { return c_.format == "csv"; }

private:
    void write(const std::string& text)
    {
        if (c_.output.empty())
            out_ << text;
        else
            write_file_atomic(c_.output, text);
    }

    const Common& c_;
    std::ostream& out_;
};

inline int cmd_simulate(const RunConfig& rc, std::ostream& out)
{
    const auto& c = rc.common;
    const auto spec = load_spec(c.env);
    const EnvironmentView view = replica_view(make_environment(spec), c.seed, 0);
    RngStream rng(c.seed, 0);
    WalkState w(rc.start);
    std::vector<std::int64_t> traj{rc.start};
    const auto res = run_until(w, view, StopCondition::steps(rc.steps), rng, &traj);
    Emitter em(c, out);
    if (em.want_csv()) {
        std::ostringstream os;
        if (rc.dump == "passages")
            write_passage_csv(os, res.passages);
        else
            write_trajectory_csv(os, traj);
        em.csv(os.str());
        return ok;
    }
    auto j = spec_header("simulate", spec, c, true);
    j["start"] = rc.start;
    j["steps"] = w.steps();
    j["position"] = w.position();
    j["min_visited"] = w.min_visited();
    j["max_visited"] = w.max_visited();
    j["consumed_drift_pos"] = w.consumed_drift_pos();
    j["consumed_drift_neg"] = w.consumed_drift_neg();
    j["consumed_drift"] = w.consumed_drift();
    em.json(j);
    return ok;
}

template <class Scalar>
nlohmann::json exact_hit_values(const RunConfig& rc, const EnvironmentView& view, std::string* exact_text)
{
    const auto chain = build_capped_chain<Scalar>(view, rc.left, rc.right, rc.budget);
    if (!rc.chain_csv.empty()) {
        std::ostringstream os;
        write_chain_csv(os, chain);
        write_file_atomic(rc.chain_csv, os.str());
    }
    nlohmann::json j;
    if (rc.horizon) {
        const Scalar right = solve_hitting_prob_horizon(chain, rc.from, *rc.horizon);
        const Scalar left = Scalar(1) - right; // includes paths still inside at the horizon
        j["horizon"] = *rc.horizon;
        j["states"] = chain.size();
        j["p_right"] = to_double(right);
        j["p_not_right"] = to_double(left);
        j["value"] = rc.target == "right" ? to_double(right) : to_double(left);
        if (exact_text) {
            std::ostringstream os;
            os << (rc.target == "right" ? right : left);
            *exact_text = os.str();
        }
        return j;
    }
    const auto hit = solve_hitting_prob(chain, rc.from);
    const Scalar right = hit.value;
    const Scalar left = Scalar(1) - right;
    const auto exit = solve_expected_exit_time(chain, rc.from);
    j = solve_report_json(hit);
    j["p_right"] = to_double(right);
    j["p_left"] = to_double(left);
    j["value"] = rc.target == "right" ? to_double(right) : to_double(left);
    j["expected_exit_time"] = to_double(exit.value);
    if (exact_text) {
        std::ostringstream os;
        os << (rc.target == "right" ? right : left);
        *exact_text = os.str();
    }
    return j;
}

inline int cmd_exact_hit(const RunConfig& rc, std::ostream& out)
{
    const auto& c = rc.common;
    const auto spec = load_spec(c.env);
    if (!(rc.left < rc.from && rc.from < rc.right))
        throw ValidationError("from", "need --left < --from < --right");
    const auto view = make_environment(spec);
    std::string exact;
    const nlohmann::json vals = rc.rational ? exact_hit_values<Rational>(rc, view, &exact)
                                            : exact_hit_values<double>(rc, view, nullptr);
    Emitter em(c, out);
    if (em.want_csv()) {
        Estimate e;
        e.value = e.lo = e.hi = vals["value"].get<double>();
        em.batch(batch_csv_row("exact_hit_" + rc.target, spec_hash(spec), 0, e));
        return ok;
    }
    auto j = spec_header("exact-hit", spec, c, false);
    j["from"] = rc.from;
    j["left"] = rc.left;
    j["right"] = rc.right;
    j["target"] = rc.target;
    merge(j, vals);
    j["schema"] = "v1";
    if (rc.rational)
        j["exact"] = exact;
    em.json(j);
    return ok;
}

inline int cmd_escape(const RunConfig& rc, std::ostream& out)
{
    const auto& c = rc.common;
    const auto spec = load_spec(c.env);
    const auto est = mc_escape_prob(spec, mc_config(c, rc.K));
    Emitter em(c, out);
    if (em.want_csv()) {
        em.batch(batch_csv_row("escape_K" + std::to_string(rc.K), spec_hash(spec), c.seed, est));
        return ok;
    }
    auto j = spec_header("escape", spec, c, true);
    j["K"] = rc.K;
    merge(j, to_json_value(est));
    if (spec.stationary() && two_cookie_formula_applies(spec))
        j["predicted"] = predicted_escape_prob(spec);
    if (!rc.exact_levels.empty()) {
        const auto b = escape_prob_upper_bounds(make_environment(spec), rc.exact_levels);
        j["exact"] = {{"levels", b.levels}, {"values", b.values}, {"truncation_mass", b.truncation_mass}};
        if (b.cutoff)
            j["exact"]["cutoff"] = *b.cutoff;
    }
    em.json(j);
    return ok;
}

inline int cmd_speed(const RunConfig& rc, std::ostream& out)
{
    const auto& c = rc.common;
    const auto spec = load_spec(c.env);
    auto horizons = rc.horizons.empty() ? std::vector<std::uint64_t>{100000} : rc.horizons;
    const auto prof = speed_profile(spec, mc_config(c), horizons);
    Emitter em(c, out);
    if (em.want_csv()) {
        std::string rows;
        for (std::size_t i = 0; i < prof.horizons.size(); ++i)
            rows += batch_csv_row("speed_n" + std::to_string(prof.horizons[i]), spec_hash(spec), c.seed, prof.speed[i]);
        em.batch(rows);
        return ok;
    }
    auto j = spec_header("speed", spec, c, true);
    merge(j, to_json_value(prof));
    em.json(j);
    return ok;
}

inline std::vector<double> linear_grid(double lo, double hi, std::uint64_t n)
{
    if (n < 1)
        throw ValidationError("p-steps", "need at least one grid point");
    if (n == 1)
        return {lo};
    if (!(lo < hi))
        throw ValidationError("p-min", "need --p-min < --p-max");
    std::vector<double> g;
    for (std::uint64_t i = 0; i < n; ++i)
        g.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    return g;
}

inline int cmd_phase_scan(const RunConfig& rc, std::ostream& out)
{
    const auto& c = rc.common;
    const auto grid = linear_grid(rc.p_min, rc.p_max, rc.p_steps);
    PhaseScanOptions opt;
    opt.exact_K = rc.exact_K;
    opt.run_exact = !rc.no_exact;
    const auto pts = phase_scan(grid, mc_config(c, rc.K), opt);
    Emitter em(c, out);
    if (em.want_csv()) {
        std::string s = "p,predicted,mc,mc_lo,mc_hi,exact_K,exact_bound\n";
        for (const auto& pt : pts)
            s += format_double(pt.p) + ',' + format_double(pt.predicted) + ',' + format_double(pt.mc.value) + ',' +
                 format_double(pt.mc.lo) + ',' + format_double(pt.mc.hi) + ',' + std::to_string(pt.exact_K) + ',' +
                 (opt.run_exact ? format_double(pt.exact_bound) : std::string()) + '\n';
        em.csv(s);
        return ok;
    }
    auto j = header("phase-scan");
    j["seed"] = c.seed;
    j["K"] = rc.K;
    j["points"] = nlohmann::json::array();
    for (const auto& pt : pts)
        j["points"].push_back(to_json_value(pt));
    em.json(j);
    return ok;
}

inline int cmd_zero_speed(const RunConfig& rc, std::ostream& out)
{
    const auto& c = rc.common;
    const auto spec = load_spec(c.env);
    auto horizons = rc.horizons.empty() ? std::vector<std::uint64_t>{10000, 100000, 1000000} : rc.horizons;
    const auto rep = zero_speed_scan(spec, mc_config(c), horizons);
    Emitter em(c, out);
    if (em.want_csv()) {
        std::string rows;
        for (std::size_t i = 0; i < rep.profile.horizons.size(); ++i)
            rows += batch_csv_row("speed_n" + std::to_string(rep.profile.horizons[i]), spec_hash(spec), c.seed,
                                  rep.profile.speed[i]);
        em.batch(rows);
        return ok;
    }
    auto j = spec_header("zero-speed", spec, c, true);
    merge(j, to_json_value(rep));
    if (!rep.hypotheses_hold)
        j["warning"] = "zero-speed hypotheses do not hold; exploratory run";
    em.json(j);
    return ok;
}

inline int cmd_leftover(const RunConfig& rc, std::ostream& out)
{
    const auto& c = rc.common;
    const auto spec = load_spec(c.env);
    LeftoverOptions opt;
    opt.window = rc.window;
    opt.far_level = rc.far_level;
    const auto rep = leftover_iterate(spec, mc_config(c), opt);
    Emitter em(c, out);
    if (em.want_csv()) {
        em.batch(batch_csv_row("leftover_drift_W" + std::to_string(rc.window), spec_hash(spec), c.seed,
                               rep.leftover_drift) +
                 batch_csv_row("leftover_second_escape", spec_hash(spec), c.seed, rep.second_escape));
        return ok;
    }
    auto j = spec_header("leftover", spec, c, true);
    merge(j, to_json_value(rep));
    em.json(j);
    return ok;
}

inline int cmd_verify(const RunConfig& rc, std::ostream& out)
{
    const auto& c = rc.common;
    std::vector<SuiteReport> reports;
    const bool all = rc.suite == "all";
    if (all || rc.suite == "monotonicity") {
        auto m = monotonicity_suite(rc.cases, c.seed);
        reports.push_back(m.initial_point);
        reports.push_back(m.environment);
    }
    if (all || rc.suite == "lemma1")
        reports.push_back(first_passage_bound_suite(rc.cases, c.seed));
    if (all || rc.suite == "oracle")
        reports.push_back(oracle_equivalence_suite(rc.cases, c.seed));
    if (all || rc.suite == "coupling") {
        SuiteReport dom;
        dom.name = "domination_coupling";
        const auto mix = EnvironmentSpec::mixture({CookieRow{1.0, 0.9}, CookieRow{}, CookieRow{0.7}}, {0.3, 0.4, 0.3},
                                                  c.seed);
        const auto cnt = domination_violations(mix, 200, rc.runs, c.seed, c.threads);
        dom.cases = cnt.runs;
        dom.violations = cnt.events;
        reports.push_back(dom);
    }
    bool passed = true;
    for (const auto& r : reports)
        passed = passed && r.passed();
    Emitter em(c, out);
    if (em.want_csv()) {
        std::string s = "suite,cases,violations,worst_gap,passed\n";
        for (const auto& r : reports)
            s += r.name + ',' + std::to_string(r.cases) + ',' + std::to_string(r.violations) + ',' +
                 format_double(r.worst_gap) + ',' + (r.passed() ? "true" : "false") + '\n';
        em.csv(s);
    } else {
        auto j = header("verify");
        j["seed"] = c.seed;
        j["suites"] = nlohmann::json::array();
        for (const auto& r : reports)
            j["suites"].push_back(to_json_value(r));
        j["passed"] = passed;
        em.json(j);
    }
    return passed ? ok : verify_failed;
}

inline void add_common(CLI::App* sub, Common& c, bool needs_env, bool stochastic, std::uint64_t default_replicas)
{
    auto* env = sub->add_option("--env", c.env, "environment spec: inline JSON or path to a JSON file");
    if (needs_env)
        env->required();
    sub->add_option("--output", c.output, "write results here (atomically) instead of stdout");
    sub->add_option("--output-format", c.format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    sub->add_flag("--append", c.append, "csv: keep earlier rows of an existing batch file");
    sub->add_option("--threads", c.threads, "worker threads (default: COOKIEWALK_THREADS, else all cores)");
    if (stochastic) {
        sub->add_option("--seed", c.seed, "master seed")->required();
        c.replicas = default_replicas;
        sub->add_option("--replicas", c.replicas, "number of replicas")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_option("--ci-level", c.ci_level, "confidence level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
        sub->add_option("--max-steps", c.max_steps, "step budget per replica")->capture_default_str();
    }
}

inline void build(CLI::App& app, RunConfig& rc)
{
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file with one [subcommand] section; command-line flags win");
    app.set_help_all_flag("--help-all", "help for every subcommand");

    auto* sim = app.add_subcommand("simulate", "run one walk and dump its trajectory or summary");
    add_common(sim, rc.common, true, true, 1);
    sim->add_option("--steps", rc.steps, "number of steps")->capture_default_str();
    sim->add_option("--start", rc.start, "start site")->capture_default_str();
    sim->add_option("--dump", rc.dump, "csv content: trajectory or passages")
        ->check(CLI::IsMember({"trajectory", "passages"}))
        ->capture_default_str();

    auto* ex = app.add_subcommand("exact-hit", "exact two-sided hitting probability on the capped chain");
    add_common(ex, rc.common, true, false, 0);
    ex->add_option("--from", rc.from, "start site")->required();
    ex->add_option("--left", rc.left, "left absorbing site")->required();
    ex->add_option("--right", rc.right, "right absorbing site")->required();
    ex->add_option("--target", rc.target, "report P[T_left < T_right] (left) or P[T_right < T_left] (right)")
        ->check(CLI::IsMember({"left", "right"}))
        ->capture_default_str();
    ex->add_flag("--rational", rc.rational, "solve in exact rational arithmetic");
    ex->add_option("--budget", rc.budget, "maximum number of chain states")->capture_default_str();
    ex->add_option("--horizon", rc.horizon, "finite horizon t: P[T_right <= T_left ^ t] instead");
    ex->add_option("--chain-csv", rc.chain_csv, "dump the chain as (row_state,col_state,prob) triplets");

    auto* esc = app.add_subcommand("escape", "Monte Carlo probability of reaching K before returning to 0");
    add_common(esc, rc.common, true, true, 10000);
    esc->add_option("--K", rc.K, "truncation level")->required();
    esc->add_option("--exact-levels", rc.exact_levels, "also compute exact upper bounds at these levels");

    auto* sp = app.add_subcommand("speed", "X_n/n and the u partial sums");
    add_common(sp, rc.common, true, true, 1000);
    sp->add_option("--horizon", rc.horizons, "one or more increasing horizons (default 100000)");

    auto* ps = app.add_subcommand("phase-scan", "escape probability of homogeneous (p,p) over a grid of p");
    add_common(ps, rc.common, false, true, 10000);
    ps->add_option("--p-min", rc.p_min)->capture_default_str();
    ps->add_option("--p-max", rc.p_max)->capture_default_str();
    ps->add_option("--p-steps", rc.p_steps)->capture_default_str();
    rc.K = 1000;
    ps->add_option("--K", rc.K, "Monte Carlo truncation level")->capture_default_str();
    ps->add_option("--exact-K", rc.exact_K, "level of the exact bound")->capture_default_str();
    ps->add_flag("--no-exact", rc.no_exact, "skip the exact bound");

    auto* zs = app.add_subcommand("zero-speed", "zero-speed consistency check over increasing horizons");
    add_common(zs, rc.common, true, true, 200);
    zs->add_option("--horizons", rc.horizons, "increasing horizons (default 1e4 1e5 1e6)");

    auto* lo = app.add_subcommand("leftover", "second walk in the cookies left by a first transient walk");
    add_common(lo, rc.common, true, true, 200);
    lo->add_option("--window", rc.window, "window [0, W)")->capture_default_str();
    lo->add_option("--far-level", rc.far_level, "level walk 1 must reach (0: 64 W)")->capture_default_str();

    auto* ve = app.add_subcommand("verify", "exact property suites; exit 4 on any violation");
    add_common(ve, rc.common, false, true, 1);
    ve->add_option("--suite", rc.suite, "monotonicity, lemma1, oracle, coupling or all")
        ->check(CLI::IsMember({"monotonicity", "lemma1", "oracle", "coupling", "all"}))
        ->capture_default_str();
    ve->add_option("--cases", rc.cases, "random instances per suite")->capture_default_str();
    ve->add_option("--runs", rc.runs, "coupled runs for the coupling suite")->capture_default_str();
}

} // namespace detail

/// Parses argv and runs the subcommand. Errors go to `err` as one line
/// `error:<category>: message`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"cookiewalk: excited random walk simulations and exact solvers"};
    RunConfig rc;
    detail::build(app, rc);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error:usage: " << e.what() << '\n';
        return usage_error;
    }
    for (const auto* sub : app.get_subcommands())
        rc.subcommand = sub->get_name();
    try {
        if (rc.common.ci_level <= 0.0 || rc.common.ci_level >= 1.0)
            throw ValidationError("ci-level", "must lie in (0, 1)");
        if (rc.subcommand == "simulate") return detail::cmd_simulate(rc, out);
        if (rc.subcommand == "exact-hit") return detail::cmd_exact_hit(rc, out);
        if (rc.subcommand == "escape") return detail::cmd_escape(rc, out);
        if (rc.subcommand == "speed") return detail::cmd_speed(rc, out);
        if (rc.subcommand == "phase-scan") return detail::cmd_phase_scan(rc, out);
        if (rc.subcommand == "zero-speed") return detail::cmd_zero_speed(rc, out);
        if (rc.subcommand == "leftover") return detail::cmd_leftover(rc, out);
        if (rc.subcommand == "verify") return detail::cmd_verify(rc, out);
        err << "error:usage: unknown subcommand\n";
        return usage_error;
    } catch (const ValidationError& e) {
        err << "error:validation: " << e.what() << '\n';
        return validation_error;
    } catch (const BudgetExceeded& e) {
        err << "error:budget: " << e.what() << '\n';
        return runtime_error;
    } catch (const std::exception& e) {
        err << "error:runtime: " << e.what() << '\n';
        return runtime_error;
    }
}

} // namespace cookiewalk::cli
