#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/erf.hpp>
#include <json.hpp>

namespace cookiewalk {

/// Point estimate with standard error, two-sided interval and censoring diagnostics.
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::uint64_t replicas_used = 0;
    double censored_fraction = 0.0;

    bool ci_excludes(double x) const noexcept { return x < lo || x > hi; }
};

inline nlohmann::json to_json_value(const Estimate& e)
{
    return {{"value", e.value},
            {"stderr", e.std_error},
            {"ci", {e.lo, e.hi}},
            {"replicas", e.replicas_used},
            {"censored", e.censored_fraction}};
}

/// Two-sided standard normal quantile for the given coverage.
inline double normal_quantile(double ci_level)
{
    if (!(ci_level > 0.0 && ci_level < 1.0))
        throw std::invalid_argument("ci_level must lie in (0, 1)");
    return std::sqrt(2.0) * boost::math::erf_inv(ci_level);
}

/// Wilson score interval for a binomial proportion.
inline Estimate wilson_estimate(std::uint64_t successes, std::uint64_t trials, double ci_level)
{
    Estimate e;
    e.replicas_used = trials;
    if (trials == 0)
        return e;
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z = normal_quantile(ci_level);
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    e.value = p;
    e.std_error = std::sqrt(p * (1.0 - p) / n);
    e.lo = std::min(p, std::max(0.0, centre - half));
    e.hi = std::max(p, std::min(1.0, centre + half));
    return e;
}

/// Streaming mean/variance; merge() is Chan's pairwise update.
struct Welford {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) noexcept
    {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }

    void merge(const Welford& o) noexcept
    {
        if (o.n == 0)
            return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
        const double d = o.mean - mean;
        const double tot = na + nb;
        mean += d * nb / tot;
        m2 += o.m2 + d * d * na * nb / tot;
        n += o.n;
    }

    double variance() const noexcept { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

/// Normal-approximation interval for a mean.
inline Estimate mean_estimate(const Welford& w, double ci_level)
{
    Estimate e;
    e.replicas_used = w.n;
    e.value = w.mean;
    e.std_error = w.n ? std::sqrt(w.variance() / static_cast<double>(w.n)) : 0.0;
    const double z = normal_quantile(ci_level);
    e.lo = e.value - z * e.std_error;
    e.hi = e.value + z * e.std_error;
    return e;
}

/// Worker count: explicit request, else COOKIEWALK_THREADS, else hardware parallelism.
inline unsigned resolve_threads(unsigned requested)
{
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("COOKIEWALK_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0)
            return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline constexpr std::uint64_t kReplicaChunk = 256;

/// Splits [0, n) into fixed chunks, evaluates fn(begin, end) for each chunk on up to
/// `threads` workers and returns the chunk results in chunk order. Chunk boundaries do
/// not depend on the thread count, so an in-order fold is bit-reproducible.
template <class Fn>
auto run_chunks(std::uint64_t n, unsigned threads, Fn&& fn, std::uint64_t chunk = kReplicaChunk)
{
    using Acc = decltype(fn(std::uint64_t{0}, std::uint64_t{0}));
    const std::uint64_t chunks = (n + chunk - 1) / chunk;
    std::vector<Acc> out(chunks);
    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::uint64_t c = next.fetch_add(1);
            if (c >= chunks)
                return;
            out[c] = fn(c * chunk, std::min(n, (c + 1) * chunk));
        }
    };
    const unsigned t = static_cast<unsigned>(std::min<std::uint64_t>(resolve_threads(threads), std::max<std::uint64_t>(chunks, 1)));
    if (t <= 1) {
        worker();
        return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (unsigned i = 0; i < t; ++i)
        pool.emplace_back(worker);
    for (auto& th : pool)
        th.join();
    return out;
}

} // namespace cookiewalk
