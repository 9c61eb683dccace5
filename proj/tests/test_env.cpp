#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <cookiewalk/env.hpp>

using namespace cookiewalk;

TEST(CookieRow, TailIsHalf)
{
    const CookieRow row{0.9, 0.9};
    EXPECT_EQ(row.at(1), 0.9);
    EXPECT_EQ(row.at(2), 0.9);
    EXPECT_EQ(row.at(3), 0.5);
    EXPECT_EQ(CookieRow{}.at(1), 0.5);
    EXPECT_EQ(CookieRow{}.at(1000), 0.5);
}

TEST(CookieRow, DriftDelta)
{
    EXPECT_DOUBLE_EQ(drift_delta(CookieRow{0.5, 0.5, 0.5}), 0.0);
    EXPECT_DOUBLE_EQ(drift_delta(CookieRow{1.0, 1.0}), 2.0);
    // 2 * (2 * 0.75 - 1)
    EXPECT_DOUBLE_EQ(drift_delta(CookieRow{0.75, 0.75}), 2.0 * (2.0 * 0.75 - 1.0));
}

TEST(CookieRow, ResidualAndTrim)
{
    const CookieRow row{0.9, 0.8, 0.5};
    EXPECT_EQ(row.residual(1), (CookieRow{0.8, 0.5}));
    EXPECT_TRUE(row.residual(5).empty());
    EXPECT_EQ(row.trimmed(), (CookieRow{0.9, 0.8}));
}

TEST(CookieRow, Domination)
{
    EXPECT_TRUE(row_dominated(CookieRow{0.6}, CookieRow{0.7, 0.5}));
    EXPECT_TRUE(row_dominated(CookieRow{}, CookieRow{0.7}));
    EXPECT_FALSE(row_dominated(CookieRow{0.6, 0.6}, CookieRow{0.7}));
}

TEST(MakeEnvironment, Homogeneous)
{
    auto v = make_environment(EnvironmentSpec::homogeneous(CookieRow{0.5}));
    for (int x = -5; x <= 5; ++x)
        for (unsigned i = 1; i <= 4; ++i)
            EXPECT_EQ(v.strength(x, i), 0.5);
    auto w = make_environment(EnvironmentSpec::homogeneous(CookieRow{0.9, 0.9}));
    EXPECT_EQ(strength_at(w, 7, 1), 0.9);
    EXPECT_EQ(strength_at(w, 7, 2), 0.9);
    EXPECT_EQ(strength_at(w, 7, 3), 0.5);
}

TEST(MakeEnvironment, MixtureIsDeterministic)
{
    const auto spec = EnvironmentSpec::mixture({CookieRow{1, 1}, CookieRow{}}, {0.5, 0.5}, 99);
    auto a = make_environment(spec);
    auto b = make_environment(spec);
    EXPECT_EQ(a.base_row(17), a.base_row(17));
    EXPECT_EQ(a.base_row(17), b.base_row(17));
}

TEST(MakeEnvironment, MixtureFrequencies)
{
    const auto spec = EnvironmentSpec::mixture({CookieRow{1, 1}, CookieRow{}}, {0.3, 0.7}, 5);
    auto v = make_environment(spec);
    int n = 0;
    const int sites = 20000;
    for (int x = 0; x < sites; ++x)
        n += v.base_row(x).size() == 2;
    const double f = static_cast<double>(n) / sites;
    EXPECT_NEAR(f, 0.3, 4.0 * std::sqrt(0.3 * 0.7 / sites));
}

TEST(MakeEnvironment, PermutationIndependent)
{
    const auto spec = EnvironmentSpec::mixture({CookieRow{1, 1}, CookieRow{0.7}, CookieRow{}}, {0.2, 0.3, 0.5}, 1234);
    std::vector<int> sites(200);
    std::iota(sites.begin(), sites.end(), -100);
    auto v1 = make_environment(spec);
    std::vector<CookieRow> forward;
    for (int x : sites)
        forward.push_back(v1.base_row(x));
    std::mt19937 g(3);
    std::vector<int> order(sites.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), g);
    auto v2 = make_environment(spec);
    for (int k : order)
        EXPECT_EQ(v2.base_row(sites[static_cast<std::size_t>(k)]), forward[static_cast<std::size_t>(k)]);
}

TEST(MakeEnvironment, PeriodicPhase)
{
    auto fixed = make_environment(EnvironmentSpec::periodic({CookieRow{1, 1}, CookieRow{0.6, 1}}, PhasePolicy::fixed_phase(1)));
    EXPECT_EQ(fixed.base_row(0), (CookieRow{0.6, 1}));
    EXPECT_EQ(fixed.base_row(1), (CookieRow{1, 1}));
    EXPECT_EQ(fixed.base_row(-1), (CookieRow{1, 1}));
    // Random phase: every seed gives one of the two alternations.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto v = make_environment(EnvironmentSpec::periodic({CookieRow{1, 1}, CookieRow{0.6, 1}}, PhasePolicy::random_phase(), seed));
        EXPECT_NE(v.base_row(0), v.base_row(1));
        EXPECT_EQ(v.base_row(0), v.base_row(2));
    }
}

TEST(MakeEnvironment, ValidationNamesField)
{
    auto expect_field = [](const EnvironmentSpec& s, const std::string& field) {
        try {
            make_environment(s);
            FAIL() << "no error for " << field;
        } catch (const ValidationError& e) {
            EXPECT_EQ(e.field().rfind(field, 0), 0u) << e.what();
        }
    };
    expect_field(EnvironmentSpec::mixture({CookieRow{1}, CookieRow{}}, {0.5, 0.6}, 0), "weights");
    expect_field(EnvironmentSpec::mixture({CookieRow{1}, CookieRow{}}, {1.5, -0.5}, 0), "weights[1]");
    expect_field(EnvironmentSpec::homogeneous(CookieRow{0.9, 0.4}), "rows[0][1]");
    EnvironmentSpec empty;
    expect_field(empty, "rows");
    expect_field(EnvironmentSpec::periodic({CookieRow{1}}, PhasePolicy::random_phase()), "rows");
}

TEST(ExpectedDelta, Examples)
{
    EXPECT_DOUBLE_EQ(expected_delta(EnvironmentSpec::homogeneous(CookieRow{0.75, 0.75})), 1.0);
    EXPECT_DOUBLE_EQ(expected_delta(EnvironmentSpec::mixture({CookieRow{1, 1}, CookieRow{}}, {0.5, 0.5}, 0)), 1.0);
    EXPECT_DOUBLE_EQ(expected_delta(EnvironmentSpec::homogeneous(CookieRow{0.5})), 0.0);
    EXPECT_DOUBLE_EQ(expected_delta(EnvironmentSpec::periodic({CookieRow{1, 1}, CookieRow{0.6, 1}}, PhasePolicy::random_phase())),
                     0.5 * 2.0 + 0.5 * 1.2);
}

TEST(ExpectedDelta, FixedPhaseRejected)
{
    try {
        expected_delta(EnvironmentSpec::periodic({CookieRow{1, 1}, CookieRow{0.6, 1}}, PhasePolicy::fixed_phase(0)));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("site marginal not stationary; use random phase for classification"),
                  std::string::npos);
    }
}

TEST(LeftoverPsi, Examples)
{
    auto v = make_environment(EnvironmentSpec::explicit_window({CookieRow{}}, {{0, CookieRow{0.9, 0.8}}}));
    const auto after = leftover_psi(v, {0, 1, 0});
    EXPECT_EQ(after.strength(0, 1), 0.8);
    EXPECT_EQ(v.strength(0, 1), 0.9); // original untouched
    const auto same = leftover_psi(v, {0});
    EXPECT_TRUE(same.consumed_map().empty());

    auto h = make_environment(EnvironmentSpec::homogeneous(CookieRow{0.9, 0.9}));
    const auto w = leftover_psi(h, {0, 1, 2});
    EXPECT_EQ(w.consumed(0), 1u);
    EXPECT_EQ(w.consumed(1), 1u);
    EXPECT_EQ(w.consumed(2), 0u);
    EXPECT_EQ(w.strength(2, 1), 0.9);
    EXPECT_EQ(w.strength(0, 2), 0.5);
}

TEST(LeftoverPsi, RejectsJumps)
{
    auto v = make_environment(EnvironmentSpec::homogeneous(CookieRow{0.9}));
    EXPECT_THROW(leftover_psi(v, {0, 2}), ValidationError);
    EXPECT_THROW(leftover_psi(v, {0, 0}), ValidationError);
}

TEST(LeftoverPsi, Composition)
{
    std::mt19937_64 g(11);
    auto v = make_environment(EnvironmentSpec::homogeneous(CookieRow{0.9, 0.7, 0.6}));
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::int64_t> p1{0}, p2;
        for (int i = 0; i < 30; ++i)
            p1.push_back(p1.back() + ((g() & 1) ? 1 : -1));
        p2.push_back(p1.back());
        for (int i = 0; i < 30; ++i)
            p2.push_back(p2.back() + ((g() & 1) ? 1 : -1));
        std::vector<std::int64_t> joined = p1;
        joined.insert(joined.end(), p2.begin() + 1, p2.end());
        const auto two = leftover_psi(leftover_psi(v, p1), p2);
        const auto one = leftover_psi(v, joined);
        EXPECT_EQ(two.consumed_map(), one.consumed_map());
    }
}

TEST(EnvironmentView, ResidualDriftProperty)
{
    std::mt19937_64 g(5);
    const auto spec = EnvironmentSpec::mixture({CookieRow{0.9, 0.8}, CookieRow{0.6}, CookieRow{}}, {0.4, 0.4, 0.2}, 8);
    auto v = make_environment(spec);
    for (int x = -20; x <= 20; ++x)
        v.add_consumed(x, g() % 4);
    for (int x = -20; x <= 20; ++x) {
        const CookieRow base = v.base_row(x);
        double eaten = 0.0;
        for (std::uint64_t i = 1; i <= v.consumed(x); ++i)
            eaten += 2.0 * base.at(i) - 1.0;
        EXPECT_NEAR(v.residual_row(x).drift(), base.drift() - eaten, 1e-15);
        EXPECT_GE(v.residual_row(x).drift(), 0.0);
    }
}

TEST(EnvironmentView, ShiftConsistency)
{
    const auto mix = EnvironmentSpec::mixture({CookieRow{0.9, 0.8}, CookieRow{0.6}, CookieRow{}}, {0.4, 0.4, 0.2}, 21);
    const auto per = EnvironmentSpec::periodic({CookieRow{1}, CookieRow{0.7}, CookieRow{}}, PhasePolicy::random_phase(), 4);
    for (const auto& spec : {mix, per}) {
        auto v = make_environment(spec);
        v.add_consumed(3, 1);
        for (std::int64_t k : {-7, 0, 5}) {
            const auto s = v.shifted(k);
            for (std::int64_t x = -10; x <= 10; ++x) {
                EXPECT_EQ(s.base_row(x), v.base_row(x + k));
                EXPECT_EQ(s.strength(x, 1), v.strength(x + k, 1));
            }
        }
    }
}

TEST(EnvironmentView, ReseededKeepsLaw)
{
    const auto spec = EnvironmentSpec::mixture({CookieRow{1, 1}, CookieRow{}}, {0.5, 0.5}, 1);
    auto v = make_environment(spec);
    v.add_consumed(0, 1);
    auto r = v.reseeded(2);
    EXPECT_TRUE(r.consumed_map().empty());
    int differ = 0;
    for (int x = 0; x < 64; ++x)
        differ += !(r.base_row(x) == v.base_row(x));
    EXPECT_GT(differ, 0);
}

TEST(EnvironmentJson, RoundTrip)
{
    const std::vector<EnvironmentSpec> specs{
        EnvironmentSpec::homogeneous(CookieRow{0.9, 0.9}, 42),
        EnvironmentSpec::mixture({CookieRow{1, 1}, CookieRow{}}, {0.5, 0.5}, 3),
        EnvironmentSpec::periodic({CookieRow{1, 1}, CookieRow{0.6, 1}}, PhasePolicy::random_phase(), 9),
        EnvironmentSpec::periodic({CookieRow{1, 1}, CookieRow{0.6, 1}}, PhasePolicy::fixed_phase(1), 9),
        EnvironmentSpec::explicit_window({CookieRow{1}, CookieRow{1, 1}}, {{-1, CookieRow{}}, {0, CookieRow{0.9, 1}}}),
    };
    for (const auto& s : specs) {
        const auto j = to_json_value(s);
        EXPECT_EQ(spec_from_json(nlohmann::json::parse(j.dump())), s) << j.dump();
        EXPECT_EQ(spec_hash(s), spec_hash(spec_from_json(j)));
    }
}

TEST(EnvironmentJson, DocumentedForm)
{
    const auto s = spec_from_json(nlohmann::json::parse(R"({"kind":"homogeneous","rows":[[0.9,0.9]],"env_seed":42})"));
    EXPECT_EQ(s, EnvironmentSpec::homogeneous(CookieRow{0.9, 0.9}, 42));
    const auto m = spec_from_json(
        nlohmann::json::parse(R"({"kind":"iid_mixture","rows":[[1,1],[]],"weights":[0.5,0.5],"env_seed":1})"));
    EXPECT_EQ(m.kind, EnvKind::iid_mixture);
    const auto p = spec_from_json(
        nlohmann::json::parse(R"({"kind":"periodic","rows":[[1,1],[0.6,1]],"phase":"random","env_seed":1})"));
    EXPECT_TRUE(p.phase.random);
}

TEST(EnvironmentJson, Errors)
{
    EXPECT_THROW(spec_from_json(nlohmann::json::parse(R"({"rows":[[0.9]]})")), ValidationError);
    EXPECT_THROW(spec_from_json(nlohmann::json::parse(R"({"kind":"nope","rows":[[0.9]]})")), ValidationError);
    EXPECT_THROW(spec_from_json(nlohmann::json::parse(R"({"kind":"homogeneous","rows":[["a"]]})")), ValidationError);
    EXPECT_THROW(spec_from_json(nlohmann::json::parse(R"({"kind":"explicit_window","rows":[[]],"window":{"x":[]}})")),
                 ValidationError);
    EXPECT_THROW(spec_from_json(nlohmann::json::parse(
                     R"({"kind":"explicit_window","rows":[[],[1]],"window":{"0":[],"2":[]}})")),
                 ValidationError);
}

TEST(ExplicitWindow, Defaults)
{
    auto v = make_environment(
        EnvironmentSpec::explicit_window({CookieRow{1}, CookieRow{1, 1}}, {{-1, CookieRow{}}, {0, CookieRow{0.9, 1}}}));
    EXPECT_EQ(v.base_row(-5), (CookieRow{1}));
    EXPECT_EQ(v.base_row(-1), CookieRow{});
    EXPECT_EQ(v.base_row(0), (CookieRow{0.9, 1}));
    EXPECT_EQ(v.base_row(3), (CookieRow{1, 1}));
}

TEST(StrengthAt, RejectsZeroVisit)
{
    auto v = make_environment(EnvironmentSpec::homogeneous(CookieRow{0.9}));
    EXPECT_THROW(strength_at(v, 0, 0), std::invalid_argument);
}
