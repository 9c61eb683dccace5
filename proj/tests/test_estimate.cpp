#include <gtest/gtest.h>

#include <cmath>

#include <cookiewalk/estimate.hpp>
#include <cookiewalk/exact.hpp>

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

EnvironmentSpec two_cookie(double p) { return EnvironmentSpec::homogeneous(CookieRow{p, p}); }

} // namespace

TEST(Stats, WilsonInterval)
{
    const auto e = wilson_estimate(50, 100, 0.95);
    EXPECT_DOUBLE_EQ(e.value, 0.5);
    EXPECT_NEAR(e.lo, 0.40383, 1e-5);
    EXPECT_NEAR(e.hi, 0.59617, 1e-5);
    EXPECT_NEAR(e.std_error, 0.05, 1e-15);
    const auto all = wilson_estimate(10, 10, 0.95);
    EXPECT_EQ(all.hi, 1.0);
    EXPECT_EQ(all.std_error, 0.0);
    EXPECT_LT(all.lo, 1.0);
}

TEST(Stats, NormalQuantile)
{
    EXPECT_NEAR(normal_quantile(0.95), 1.959964, 1e-6);
    EXPECT_NEAR(normal_quantile(0.99), 2.575829, 1e-6);
    EXPECT_THROW(normal_quantile(1.0), std::invalid_argument);
}

TEST(Stats, WelfordMergeMatchesSequential)
{
    Welford all, a, b;
    for (int i = 0; i < 100; ++i) {
        const double x = std::sin(i * 0.37) * 10 + i * 0.01;
        all.add(x);
        (i < 37 ? a : b).add(x);
    }
    a.merge(b);
    EXPECT_EQ(a.n, all.n);
    EXPECT_NEAR(a.mean, all.mean, 1e-12);
    EXPECT_NEAR(a.variance(), all.variance(), 1e-10);
}

TEST(Stats, ChunkOrderIndependentOfThreads)
{
    auto sum = [](unsigned t) {
        const auto parts = run_chunks(10'000, t, [](std::uint64_t b, std::uint64_t e) {
            double s = 0.0;
            for (auto i = b; i < e; ++i)
                s += 1.0 / static_cast<double>(i + 1);
            return s;
        });
        double s = 0.0;
        for (double p : parts)
            s += p;
        return s;
    };
    const double one = sum(1);
    EXPECT_EQ(one, sum(3));
    EXPECT_EQ(one, sum(8));
}

TEST(Escape, DeterministicAndTrivialCases)
{
    const auto march = mc_escape_prob(EnvironmentSpec::homogeneous(CookieRow{1.0, 1.0}), config(500, 1, 50));
    EXPECT_EQ(march.value, 1.0);
    EXPECT_EQ(march.std_error, 0.0);
    EXPECT_EQ(march.censored_fraction, 0.0);
    const auto sym = mc_escape_prob(EnvironmentSpec::homogeneous(CookieRow{}), config(20'000, 2, 100));
    // 1/(2K) = 0.005
    EXPECT_NEAR(sym.value, 0.005, 4.0 * sym.std_error + 1e-3);
}

TEST(Escape, RejectsBadLevel)
{
    try {
        mc_escape_prob(two_cookie(0.9), config(10, 1, 0));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "K");
    }
}

TEST(Escape, AgreesWithExactAtSmallLevel)
{
    const auto spec = two_cookie(0.8);
    const auto exact = escape_prob_upper_bounds(make_environment(spec), {16}).values.front();
    const auto mc = mc_escape_prob(spec, config(40'000, 11, 16));
    EXPECT_LE(std::abs(mc.value - exact), 4.0 * mc.std_error) << mc.value << " vs " << exact;
    EXPECT_LE(mc.lo, mc.value);
    EXPECT_GE(mc.hi, mc.value);
}

TEST(Escape, ReproducibleAcrossThreadCounts)
{
    const auto spec = EnvironmentSpec::mixture({CookieRow{0.9, 0.8}, CookieRow{}}, {0.6, 0.4}, 5);
    auto c1 = config(3000, 9, 20);
    c1.threads = 1;
    auto c4 = c1;
    c4.threads = 4;
    const auto a = mc_escape_prob(spec, c1), b = mc_escape_prob(spec, c4);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.lo, b.lo);
    EXPECT_EQ(a.hi, b.hi);
}

TEST(Speed, MarchHasUnitSpeed)
{
    const auto p = mc_speed(EnvironmentSpec::homogeneous(CookieRow{1.0}), config(50, 3), 1000);
    ASSERT_EQ(p.speed.size(), 1u);
    EXPECT_EQ(p.speed[0].value, 1.0);
    EXPECT_TRUE(p.u_stable);
    EXPECT_DOUBLE_EQ(p.u_hat, 1.0);
    EXPECT_DOUBLE_EQ(p.v_hat, 1.0);
}

TEST(Speed, HorizonTooSmall)
{
    // After one step nobody can be at level 2.
    EXPECT_THROW(mc_speed(EnvironmentSpec::homogeneous(CookieRow{}), config(200, 3), 1), std::runtime_error);
    // Some replicas get there, not all: speed is reported, the partial sums are empty.
    const auto p = mc_speed(EnvironmentSpec::homogeneous(CookieRow{}), config(200, 3), 4);
    EXPECT_TRUE(p.u_partial.empty());
    EXPECT_FALSE(p.u_stable);
    EXPECT_EQ(p.speed.size(), 1u);
}

TEST(Speed, HorizonValidation)
{
    EXPECT_THROW(speed_profile(two_cookie(0.9), config(10, 1), {}), ValidationError);
    EXPECT_THROW(speed_profile(two_cookie(0.9), config(10, 1), {100, 50}), ValidationError);
}

TEST(ConsumedDrift, SymmetricIsZero)
{
    const auto e = mc_consumed_drift(EnvironmentSpec::homogeneous(CookieRow{}), config(100, 1), 0, 1000);
    EXPECT_EQ(e.value, 0.0);
    EXPECT_EQ(e.censored_fraction, 0.0);
}

TEST(ConsumedDrift, BoundedByOneForRecurrentLaw)
{
    // (0.6, 0.6) is recurrent; the expected consumed drift at a site stays at most 1.
    const auto ests =
        mc_consumed_drift(two_cookie(0.6), config(2000, 4), std::vector<std::int64_t>{0, 1, 3}, 20'000);
    for (const auto& e : ests) {
        EXPECT_LE(e.value, 1.0 + 3.0 * e.std_error);
        EXPECT_GT(e.value, 0.0);
        EXPECT_GE(e.value, 0.0);
    }
}

TEST(ConsumedDrift, SiteZeroEatsFirstCookie)
{
    const auto e = mc_consumed_drift(two_cookie(0.9), config(200, 4), 0, 10);
    EXPECT_GE(e.value, 0.8 - 1e-12);
    EXPECT_LE(e.value, 1.6 + 1e-12);
    EXPECT_THROW(mc_consumed_drift(two_cookie(0.9), config(10, 4), -1, 10), ValidationError);
}

TEST(Martingale, MarchConsumesExactlyK)
{
    const auto m = mc_martingale_check(EnvironmentSpec::homogeneous(CookieRow{1.0, 1.0}), config(20, 1), 10);
    EXPECT_DOUBLE_EQ(m.consumed.value, 10.0);
    EXPECT_DOUBLE_EQ(m.relative_deviation, 0.0);
    const auto s = mc_martingale_check(EnvironmentSpec::homogeneous(CookieRow{1.0}), config(20, 1), 0, -3);
    EXPECT_DOUBLE_EQ(s.consumed.value, 3.0);
    EXPECT_DOUBLE_EQ(s.expected, 3.0);
}

TEST(Martingale, RandomLawWithinNoise)
{
    const auto m = mc_martingale_check(two_cookie(0.7), config(4000, 8), 20);
    EXPECT_LE(std::abs(m.consumed.value - 20.0), 4.0 * m.consumed.std_error + 1e-9);
}

TEST(Martingale, RefusesWithoutLeftDrift)
{
    EXPECT_THROW(mc_martingale_check(EnvironmentSpec::homogeneous(CookieRow{}), config(10, 1), 5), ValidationError);
    EXPECT_TRUE(first_cookie_drift_positive(two_cookie(0.6)));
    EXPECT_FALSE(first_cookie_drift_positive(EnvironmentSpec::homogeneous(CookieRow{0.5, 0.9})));
}
