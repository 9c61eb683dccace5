#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <cookiewalk/experiments.hpp>

using namespace cookiewalk;

namespace {

McConfig config(std::uint64_t replicas, std::uint64_t seed, std::int64_t level = 0)
{
    McConfig c;
    c.replicas = replicas;
    c.master_seed = seed;
    c.level = level;
    return c;
}

// Forward DP over the joint law of the two once-excited walks. The four u-intervals
// [0, 1/2), [1/2, p1), [p1, p2), [p2, 1) decide both moves.
double naive_overtake_dp(double p1, double p2, int horizon)
{
    using Side = std::pair<int, std::set<int>>;
    using Key = std::tuple<Side, Side>;
    std::map<Key, double> cur{{Key{{0, {}}, {0, {}}}, 1.0}};
    const double cuts[5] = {0.0, 0.5, p1, p2, 1.0};
    double hit = 0.0;
    for (int n = 0; n < horizon; ++n) {
        std::map<Key, double> nxt;
        for (const auto& [k, mass] : cur) {
            for (int i = 0; i < 4; ++i) {
                const double len = cuts[i + 1] - cuts[i];
                if (len <= 0.0)
                    continue;
                const double u = 0.5 * (cuts[i] + cuts[i + 1]);
                auto step = [u](Side s, double p) {
                    const bool fresh = !s.second.count(s.first);
                    s.second.insert(s.first);
                    s.first += u < (fresh ? p : 0.5) ? 1 : -1;
                    return s;
                };
                const Side a = step(std::get<0>(k), p1), b = step(std::get<1>(k), p2);
                if (a.first > b.first)
                    hit += mass * len;
                else
                    nxt[Key{a, b}] += mass * len;
            }
        }
        cur = std::move(nxt);
    }
    return hit;
}

} // namespace

TEST(Classify, Examples)
{
    EXPECT_EQ(classify(two_cookie_spec(0.9)).verdict, Verdict::transient);
    EXPECT_EQ(classify(two_cookie_spec(0.75)).verdict, Verdict::recurrent); // E[delta] = 1 exactly
    EXPECT_EQ(classify(two_cookie_spec(0.6)).verdict, Verdict::recurrent);
    const auto deg = classify(EnvironmentSpec::homogeneous(CookieRow{1.0}));
    EXPECT_TRUE(deg.degenerate);
    EXPECT_EQ(deg.verdict, Verdict::degenerate);
    EXPECT_TRUE(deg.transient());
    const auto mix = classify(EnvironmentSpec::mixture({CookieRow{1.0}, CookieRow{1.0, 1.0}}, {0.5, 0.5}, 1));
    EXPECT_FALSE(mix.degenerate);
    EXPECT_NEAR(mix.expected_delta, 1.5, 1e-15);
    EXPECT_EQ(mix.verdict, Verdict::transient);
    EXPECT_EQ(classify_expected_delta(1.0).verdict, Verdict::recurrent);
    EXPECT_THROW(classify_expected_delta(-0.1), ValidationError);
}

TEST(Classify, FixedPhasePeriodicRefused)
{
    PhasePolicy fixed;
    fixed.random = false;
    const auto spec = EnvironmentSpec::periodic({CookieRow{0.9}, CookieRow{0.6}}, fixed);
    EXPECT_THROW(classify(spec), std::exception);
    PhasePolicy random;
    random.random = true;
    const auto ok = EnvironmentSpec::periodic({CookieRow{0.9, 0.9}, CookieRow{0.6}}, random, 3);
    EXPECT_NEAR(classify(ok).expected_delta, 0.5 * (1.6 + 0.2), 1e-14);
}

TEST(EscapeFormula, ClosedFormValues)
{
    EXPECT_NEAR(predicted_escape_prob(two_cookie_spec(0.9)), 0.75, 1e-14);
    EXPECT_NEAR(predicted_escape_prob(two_cookie_spec(0.8)), 1.0 / 3.0, 1e-14);
    EXPECT_EQ(predicted_escape_prob(two_cookie_spec(0.7)), 0.0);
    EXPECT_NEAR(predicted_escape_prob(two_cookie_spec(1.0)), 1.0, 1e-15);
    for (double p = 0.55; p < 1.0; p += 0.01) {
        const auto spec = two_cookie_spec(p);
        EXPECT_NEAR(predicted_escape_prob(spec), std::max(0.0, (4 * p - 3) / (2 * p - 1)), 1e-12);
        EXPECT_EQ(predicted_escape_prob(spec) == 0.0, classify(spec).verdict == Verdict::recurrent) << p;
    }
}

TEST(EscapeFormula, Applicability)
{
    EXPECT_FALSE(two_cookie_formula_applies(EnvironmentSpec::homogeneous(CookieRow{0.9, 0.9, 0.9})));
    EXPECT_FALSE(two_cookie_formula_applies(EnvironmentSpec::homogeneous(CookieRow{0.9})));
    EXPECT_TRUE(two_cookie_formula_applies(EnvironmentSpec::mixture({CookieRow{0.9}, CookieRow{0.8, 0.7}}, {0.5, 0.5}, 1)));
    EXPECT_THROW(predicted_escape_prob(EnvironmentSpec::homogeneous(CookieRow{0.9})), ValidationError);
}

TEST(EscapeFormula, MixtureByHand)
{
    const auto spec = EnvironmentSpec::mixture({CookieRow{1.0, 0.9}, CookieRow{0.9, 0.8}}, {0.5, 0.5}, 1);
    // E[w1] = 0.95, E[delta] = 1.6, E[(2 w2 - 1) w1] = 0.5 * 0.8 + 0.5 * 0.54 = 0.67.
    EXPECT_NEAR(predicted_escape_prob(spec), 0.95 * 0.6 / 0.67, 1e-12);
}

TEST(PhaseScan, MonteCarloMatchesExactAtSameLevel)
{
    PhaseScanOptions opt;
    opt.exact_K = 16;
    const auto pts = phase_scan({0.7, 0.85, 0.95}, config(20'000, 5, 16), opt);
    ASSERT_EQ(pts.size(), 3u);
    for (const auto& pt : pts) {
        EXPECT_EQ(pt.exact_K, 16);
        EXPECT_LE(std::abs(pt.mc.value - pt.exact_bound), 4.0 * pt.mc.std_error + 1e-12) << pt.p;
        EXPECT_GE(pt.exact_bound + 1e-12, pt.predicted) << pt.p;
    }
    EXPECT_THROW(phase_scan({0.5}, config(10, 1, 4)), ValidationError);
    EXPECT_THROW(phase_scan({}, config(10, 1, 4)), ValidationError);
}

TEST(ZeroSpeed, Hypotheses)
{
    EXPECT_TRUE(zero_speed_hypotheses(two_cookie_spec(0.9)));
    EXPECT_FALSE(zero_speed_hypotheses(two_cookie_spec(1.0)));
    EXPECT_FALSE(zero_speed_hypotheses(EnvironmentSpec::homogeneous(CookieRow{0.9, 0.9, 0.9})));
    PhasePolicy random;
    random.random = true;
    EXPECT_TRUE(zero_speed_hypotheses(EnvironmentSpec::periodic({CookieRow{0.6, 0.6}, CookieRow{0.6}}, random, 1)));
}

TEST(ZeroSpeed, MarchHasPositiveSpeed)
{
    const auto r = zero_speed_scan(EnvironmentSpec::homogeneous(CookieRow{1.0, 1.0}), config(20, 1), {100, 1000});
    EXPECT_FALSE(r.hypotheses_hold);
    EXPECT_EQ(r.verdict, "positive speed");
    EXPECT_EQ(r.final_speed, 1.0);
}

TEST(ZeroSpeed, TwoCookieSpeedDecays)
{
    const auto r = zero_speed_scan(two_cookie_spec(0.9), config(200, 2), {1000, 10'000, 100'000});
    EXPECT_TRUE(r.hypotheses_hold);
    EXPECT_TRUE(r.speed_decreasing);
    EXPECT_FALSE(r.profile.u_stable);
    EXPECT_EQ(r.verdict, "consistent with v=0");
}

TEST(Leftover, MarchLeavesOneCookiePerSite)
{
    LeftoverOptions opt;
    opt.window = 10;
    const auto r = leftover_iterate(two_cookie_spec(1.0), config(50, 1), opt);
    EXPECT_EQ(r.far_level, 640);
    EXPECT_DOUBLE_EQ(r.leftover_drift.value, 1.0);
    EXPECT_EQ(r.late_revisit_fraction, 0.0);
    EXPECT_EQ(r.second.verdict, Verdict::recurrent);
    EXPECT_DOUBLE_EQ(r.second_escape.value, 1.0);
}

TEST(Leftover, TwoCookieLeavesRecurrentRemainder)
{
    LeftoverOptions opt;
    opt.window = 20;
    const auto r = leftover_iterate(two_cookie_spec(0.9), config(300, 3), opt);
    EXPECT_GT(r.leftover_drift.value, 0.5);
    EXPECT_LT(r.leftover_drift.value, 0.7);
    EXPECT_EQ(r.second.verdict, Verdict::recurrent);
    EXPECT_LT(r.late_revisit_fraction, 0.1);
}

TEST(Leftover, Validation)
{
    EXPECT_THROW(leftover_iterate(two_cookie_spec(0.6), config(10, 1)), ValidationError);
    LeftoverOptions bad;
    bad.window = 10;
    bad.far_level = 15;
    EXPECT_THROW(leftover_iterate(two_cookie_spec(0.9), config(10, 1), bad), ValidationError);
}

TEST(Suites, MonotonicityHolds)
{
    const auto r = monotonicity_suite(150, 77);
    EXPECT_EQ(r.initial_point.cases, 150u);
    EXPECT_TRUE(r.initial_point.passed()) << to_json_value(r.initial_point).dump();
    EXPECT_TRUE(r.environment.passed()) << to_json_value(r.environment).dump();
    SuiteCaps too_wide;
    too_wide.max_width = 9;
    EXPECT_THROW(monotonicity_suite(1, 1, too_wide), ValidationError);
}

TEST(Suites, RaisedRowsDominate)
{
    RngStream rng(3, 3);
    for (int i = 0; i < 2000; ++i) {
        const auto lo = detail::random_row(rng, 3);
        const auto hi = detail::raise_row(rng, lo);
        EXPECT_TRUE(row_dominated(lo, hi));
    }
}

TEST(Suites, ReportsCounterexamples)
{
    SuiteReport rep;
    rep.tolerance = 1e-10;
    detail::record(rep, 0, 0.4, 0.5, {});
    detail::record(rep, 1, 0.6, 0.5, {{"x", 1}});
    EXPECT_EQ(rep.violations, 1u);
    EXPECT_FALSE(rep.passed());
    EXPECT_NEAR(rep.worst_gap, 0.1, 1e-15);
    EXPECT_EQ(to_json_value(rep)["counterexamples"][0]["case"], 1);
}

TEST(ReturnMonotonicity, OrderedPairs)
{
    const auto r = return_monotonicity_check({{two_cookie_spec(0.7), two_cookie_spec(0.9)},
                                              {EnvironmentSpec::homogeneous(CookieRow{0.8}), two_cookie_spec(0.8)}},
                                             16, config(300, 4), 2000);
    EXPECT_TRUE(r.passed()) << to_json_value(r).dump();
    EXPECT_THROW(return_monotonicity_check({{EnvironmentSpec::homogeneous(CookieRow{0.9, 0.6}), two_cookie_spec(0.8)}},
                                           16, config(10, 1), 10),
                 ValidationError);
}

TEST(NaiveCoupling, ExactAgainstIndependentDp)
{
    for (auto [p1, p2] : {std::pair{0.6, 0.9}, {0.55, 0.6}, {0.7, 0.7}, {0.51, 0.99}})
        for (int h : {1, 3, 6, 8})
            EXPECT_NEAR(naive_overtake_exact(p1, p2, h), naive_overtake_dp(p1, p2, h), 1e-14) << p1 << ' ' << p2;
    EXPECT_GT(naive_overtake_exact(0.6, 0.9, 6), 0.0);
    EXPECT_THROW(naive_overtake_exact(0.6, 0.9, 13), ValidationError);
}

TEST(NaiveCoupling, FrequencyMatchesExact)
{
    const auto c = naive_overtake_count(0.6, 0.9, 6, 200'000, 12);
    const double exact = naive_overtake_exact(0.6, 0.9, 6);
    const double se = std::sqrt(exact * (1 - exact) / 200'000.0);
    EXPECT_LE(std::abs(c.frequency() - exact), 4.0 * se);
}

TEST(DominatingCoupling, NoViolations)
{
    const auto spec = EnvironmentSpec::mixture({CookieRow{0.9, 0.8}, CookieRow{0.6}, CookieRow{}}, {0.4, 0.3, 0.3}, 2);
    const auto c = domination_violations(spec, 200, 20'000, 5);
    EXPECT_EQ(c.runs, 20'000u);
    EXPECT_EQ(c.events, 0u);
}

TEST(NaiveCoupling, PaperCylinderIsContained)
{
    // Every uniform sequence in the cylinder has the same interval pattern, hence the same paths.
    const std::vector<double> u{0.7, 0.9, 0.55, 0.2, 0.3, 0.55};
    const auto run = run_coupled_naive(0.6, 0.8, u);
    ASSERT_TRUE(run.overtake);
    EXPECT_EQ(*run.overtake_step, 6u);
    const double cylinder = 0.2 * 0.2 * 0.1 * 0.5 * 0.5 * 0.1;
    EXPECT_NEAR(cylinder, 1e-4, 1e-18);
    // Within six steps this cylinder is the only way to overtake.
    EXPECT_NEAR(naive_overtake_exact(0.6, 0.8, 6), cylinder, 1e-15);
}
