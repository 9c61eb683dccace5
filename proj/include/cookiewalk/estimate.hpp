#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "env.hpp"
#include "stats.hpp"
#include "walk.hpp"

namespace cookiewalk {

struct McConfig {
    std::uint64_t replicas = 1;
    std::uint64_t master_seed = 0;
    /// Truncation level K for open-ended events; 0 means unset.
    std::int64_t level = 0;
    /// Step budget per replica and run.
    std::uint64_t max_steps = 1'000'000'000;
    double ci_level = 0.95;
    unsigned threads = 0;

    void validate() const
    {
        if (replicas < 1)
            throw ValidationError("replicas", "need at least one replica");
        if (!(ci_level > 0.0 && ci_level < 1.0))
            throw ValidationError("ci_level", "must lie in (0, 1)");
        if (max_steps < 1)
            throw ValidationError("max_steps", "must be positive");
    }
};

/// Environment seen by replica r. Laws with randomness (mixtures, random phase) are
/// redrawn per replica, which makes estimates annealed; homogeneous and fixed laws are shared.
inline EnvironmentView replica_view(const EnvironmentView& base, std::uint64_t master_seed, std::uint64_t replica)
{
    const auto& s = base.spec();
    const bool random_law = s.kind == EnvKind::iid_mixture || (s.kind == EnvKind::periodic && s.phase.random);
    if (!random_law)
        return base;
    return base.reseeded(hash_combine(s.env_seed, hash_combine(master_seed, replica)));
}

/// Annealed probability of {T_K < return to 0}, an upper bound for never returning.
inline Estimate mc_escape_prob(const EnvironmentSpec& spec, const McConfig& cfg)
{
    cfg.validate();
    if (cfg.level < 1)
        throw ValidationError("K", "truncation level K must be >= 1");
    const EnvironmentView base = make_environment(spec);
    struct Acc {
        std::uint64_t success = 0, resolved = 0, censored = 0;
    };
    const auto chunks = run_chunks(cfg.replicas, cfg.threads, [&](std::uint64_t b, std::uint64_t e) {
        Acc a;
        WalkState w;
        for (std::uint64_t r = b; r < e; ++r) {
            const EnvironmentView view = replica_view(base, cfg.master_seed, r);
            RngStream rng(cfg.master_seed, r);
            w.reset(0);
            w.advance(view, rng.uniform());
            if (w.position() < 1) {
                ++a.resolved;
                continue;
            }
            if (cfg.level == 1) {
                ++a.resolved;
                ++a.success;
                continue;
            }
            const auto res = run_until(w, view, StopCondition::hit_either(0, cfg.level, cfg.max_steps - 1), rng);
            if (res.reason == StopReason::truncated) {
                ++a.censored;
                continue;
            }
            ++a.resolved;
            if (res.reason == StopReason::hit_right)
                ++a.success;
        }
        return a;
    });
    Acc tot;
    for (const auto& c : chunks) {
        tot.success += c.success;
        tot.resolved += c.resolved;
        tot.censored += c.censored;
    }
    Estimate est = wilson_estimate(tot.success, tot.resolved, cfg.ci_level);
    est.censored_fraction = static_cast<double>(tot.censored) / static_cast<double>(cfg.replicas);
    return est;
}

/// X_n / n at several horizons from the same replicas, plus the empirical partial sums
/// of u = sum_j P[T_{j+1} - T_j >= j] at the last horizon.
struct SpeedProfile {
    std::vector<std::uint64_t> horizons;
    std::vector<Estimate> speed; // X_n / n per horizon
    /// u_partial[J - 1] = sum_{j <= J} P^[T_{j+1} - T_j >= j], J up to the lowest
    /// maximum level reached by every replica, minus one.
    std::vector<double> u_partial;
    std::uint64_t window_start = 0; // first J of the stability window (final 20% of the J range)
    double window_growth = 0.0;     // (u(J) - u(window_start)) / u(window_start)
    bool u_stable = false;          // increment over the window < 1% of u(J)
    double u_hat = std::numeric_limits<double>::infinity();
    double v_hat = 0.0;
};

inline SpeedProfile speed_profile(const EnvironmentSpec& spec, const McConfig& cfg,
                                  std::vector<std::uint64_t> horizons)
{
    cfg.validate();
    if (horizons.empty())
        throw ValidationError("horizon", "need at least one horizon");
    for (std::size_t i = 0; i < horizons.size(); ++i)
        if (horizons[i] < 1 || (i > 0 && horizons[i] <= horizons[i - 1]))
            throw ValidationError("horizon", "horizons must be positive and increasing");
    const EnvironmentView base = make_environment(spec);
    struct Acc {
        std::vector<Welford> speed;
        std::vector<std::uint64_t> gap_ge; // index j
        std::int64_t min_top = std::numeric_limits<std::int64_t>::max();
        std::int64_t max_top = 0;
    };
    const auto chunks = run_chunks(cfg.replicas, cfg.threads, [&](std::uint64_t b, std::uint64_t e) {
        Acc a;
        a.speed.resize(horizons.size());
        WalkState w;
        std::vector<std::uint64_t> times;
        for (std::uint64_t r = b; r < e; ++r) {
            const EnvironmentView view = replica_view(base, cfg.master_seed, r);
            RngStream rng(cfg.master_seed, r);
            w.reset(0);
            times.clear();
            std::uint64_t done = 0;
            for (std::size_t h = 0; h < horizons.size(); ++h) {
                const auto res = run_until(w, view, StopCondition::steps(horizons[h] - done), rng);
                done = horizons[h];
                times.insert(times.end(), res.passages.up_times.begin(), res.passages.up_times.end());
                a.speed[h].add(static_cast<double>(w.position()) / static_cast<double>(horizons[h]));
            }
            // times[k] = T_k for k = 0 .. max level.
            const auto top = static_cast<std::int64_t>(times.size()) - 1;
            a.min_top = std::min(a.min_top, top);
            a.max_top = std::max(a.max_top, top);
            if (a.gap_ge.size() < times.size())
                a.gap_ge.resize(times.size(), 0);
            for (std::size_t j = 1; j + 1 < times.size(); ++j)
                if (times[j + 1] - times[j] >= j)
                    ++a.gap_ge[j];
        }
        return a;
    });

    SpeedProfile out;
    out.horizons = horizons;
    std::vector<Welford> speed(horizons.size());
    std::vector<std::uint64_t> gap_ge;
    std::int64_t min_top = std::numeric_limits<std::int64_t>::max();
    std::int64_t max_top = 0;
    for (const auto& c : chunks) {
        for (std::size_t h = 0; h < horizons.size(); ++h)
            speed[h].merge(c.speed[h]);
        if (gap_ge.size() < c.gap_ge.size())
            gap_ge.resize(c.gap_ge.size(), 0);
        for (std::size_t j = 0; j < c.gap_ge.size(); ++j)
            gap_ge[j] += c.gap_ge[j];
        min_top = std::min(min_top, c.min_top);
        max_top = std::max(max_top, c.max_top);
    }
    for (const auto& s : speed)
        out.speed.push_back(mean_estimate(s, cfg.ci_level));

    if (max_top < 2)
        throw std::runtime_error("horizon too small: no replica reached level 2");
    // Partial sums only run up to the level every replica reached; that may be none.
    const std::int64_t jmax = min_top - 1;
    if (jmax < 1)
        return out;
    const double n = static_cast<double>(cfg.replicas);
    double u = 0.0;
    for (std::int64_t j = 1; j <= jmax; ++j) {
        u += static_cast<double>(gap_ge[static_cast<std::size_t>(j)]) / n;
        out.u_partial.push_back(u);
    }
    const auto J = static_cast<std::uint64_t>(jmax);
    out.window_start = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::floor(0.8 * static_cast<double>(J))));
    const double u_end = out.u_partial[J - 1];
    const double u_start = out.u_partial[out.window_start - 1];
    out.window_growth = u_start > 0.0 ? (u_end - u_start) / u_start : 0.0;
    out.u_stable = (u_end - u_start) < 0.01 * u_end;
    if (out.u_stable) {
        out.u_hat = u_end;
        out.v_hat = 1.0 / u_end;
    }
    return out;
}

inline SpeedProfile mc_speed(const EnvironmentSpec& spec, const McConfig& cfg, std::uint64_t horizon)
{
    return speed_profile(spec, cfg, {horizon});
}

/// E_0[D^x_infinity] at each site in `sites`, estimated at a finite horizon. A replica
/// stops early once every target site has no drift left. censored_fraction counts
/// replicas that still hold uneaten drift at the site (the value can only grow).
inline std::vector<Estimate> mc_consumed_drift(const EnvironmentSpec& spec, const McConfig& cfg,
                                               const std::vector<std::int64_t>& sites, std::uint64_t horizon)
{
    cfg.validate();
    for (auto x : sites)
        if (x < 0)
            throw ValidationError("site", "sites must be >= 0");
    if (horizon < 1)
        throw ValidationError("horizon", "horizon must be positive");
    const EnvironmentView base = make_environment(spec);
    struct Acc {
        std::vector<Welford> drift;
        std::vector<std::uint64_t> censored;
    };
    constexpr std::uint64_t kCheckEvery = 1024;
    const auto chunks = run_chunks(cfg.replicas, cfg.threads, [&](std::uint64_t b, std::uint64_t e) {
        Acc a;
        a.drift.resize(sites.size());
        a.censored.assign(sites.size(), 0);
        WalkState w;
        for (std::uint64_t r = b; r < e; ++r) {
            const EnvironmentView view = replica_view(base, cfg.master_seed, r);
            RngStream rng(cfg.master_seed, r);
            w.reset(0);
            auto exhausted = [&] {
                for (auto x : sites)
                    if (w.remaining_drift(view, x) > 0.0)
                        return false;
                return true;
            };
            std::uint64_t done = 0;
            while (done < horizon && !exhausted()) {
                const auto chunk = std::min(kCheckEvery, horizon - done);
                run_until(w, view, StopCondition::steps(chunk), rng);
                done += chunk;
            }
            for (std::size_t i = 0; i < sites.size(); ++i) {
                a.drift[i].add(w.eaten_drift(view, sites[i]));
                if (w.remaining_drift(view, sites[i]) > 0.0)
                    ++a.censored[i];
            }
        }
        return a;
    });
    std::vector<Welford> drift(sites.size());
    std::vector<std::uint64_t> censored(sites.size(), 0);
    for (const auto& c : chunks)
        for (std::size_t i = 0; i < sites.size(); ++i) {
            drift[i].merge(c.drift[i]);
            censored[i] += c.censored[i];
        }
    std::vector<Estimate> out;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        Estimate est = mean_estimate(drift[i], cfg.ci_level);
        est.censored_fraction = static_cast<double>(censored[i]) / static_cast<double>(cfg.replicas);
        out.push_back(est);
    }
    return out;
}

inline Estimate mc_consumed_drift(const EnvironmentSpec& spec, const McConfig& cfg, std::int64_t site,
                                  std::uint64_t horizon)
{
    return mc_consumed_drift(spec, cfg, std::vector<std::int64_t>{site}, horizon).front();
}

/// Sufficient surrogate for the left-drift condition of the martingale identity: the
/// expected first-cookie drift of the site law (the left default row for windows) is positive.
inline bool first_cookie_drift_positive(const EnvironmentSpec& spec)
{
    spec.validate();
    if (spec.kind == EnvKind::explicit_window)
        return spec.rows.front().at(1) > 0.5;
    double e = 0.0;
    if (spec.kind == EnvKind::periodic) {
        for (const auto& r : spec.rows)
            e += (2.0 * r.at(1) - 1.0) / static_cast<double>(spec.rows.size());
    } else {
        for (const auto& [w, row] : site_marginal(spec))
            e += w * (2.0 * row.at(1) - 1.0);
    }
    return e > 0.0;
}

struct MartingaleCheck {
    Estimate consumed; // D_{T_k}
    double expected = 0.0;
    double relative_deviation = 0.0;
};

/// Averages D_{T_k} over replicas started at `start`; the identity says E[D_{T_k}] = k - start.
inline MartingaleCheck mc_martingale_check(const EnvironmentSpec& spec, const McConfig& cfg, std::int64_t level,
                                           std::int64_t start = 0)
{
    cfg.validate();
    if (level < start)
        throw ValidationError("k", "level must be >= start");
    if (!first_cookie_drift_positive(spec))
        throw ValidationError("spec", "expected first-cookie drift is not positive; the identity "
                                      "E[D_{T_k}] = k - x needs a positive average drift to the left");
    const EnvironmentView base = make_environment(spec);
    struct Acc {
        Welford d;
        std::uint64_t censored = 0;
    };
    const auto chunks = run_chunks(cfg.replicas, cfg.threads, [&](std::uint64_t b, std::uint64_t e) {
        Acc a;
        WalkState w;
        for (std::uint64_t r = b; r < e; ++r) {
            const EnvironmentView view = replica_view(base, cfg.master_seed, r);
            RngStream rng(cfg.master_seed, r);
            w.reset(start);
            const auto res = run_until(w, view, StopCondition::hit_level(level, cfg.max_steps), rng);
            if (res.reason == StopReason::truncated) {
                ++a.censored;
                continue;
            }
            a.d.add(w.consumed_drift());
        }
        return a;
    });
    Welford d;
    std::uint64_t censored = 0;
    for (const auto& c : chunks) {
        d.merge(c.d);
        censored += c.censored;
    }
    MartingaleCheck out;
    out.consumed = mean_estimate(d, cfg.ci_level);
    out.consumed.censored_fraction = static_cast<double>(censored) / static_cast<double>(cfg.replicas);
    out.expected = static_cast<double>(level - start);
    out.relative_deviation = out.expected > 0.0 ? out.consumed.value / out.expected - 1.0 : out.consumed.value;
    return out;
}

} // namespace cookiewalk
