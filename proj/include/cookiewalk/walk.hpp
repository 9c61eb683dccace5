#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "env.hpp"
#include "rng.hpp"

namespace cookiewalk {

/// Position, step count, per-site visit ledger and consumed-drift accumulators of one walker.
///
/// The ledger is dense over the visited interval and grows one site at a time, which
/// suffices for a nearest-neighbor walk. A state is bound to the environment view it
/// first steps in: each slot caches a pointer into that view's rows.
class WalkState {
public:
    explicit WalkState(std::int64_t start = 0) { reset(start); }

    void reset(std::int64_t start)
    {
        start_ = start;
        position_ = start;
        steps_ = 0;
        drift_pos_ = 0.0;
        drift_neg_ = 0.0;
        right_.clear();
        left_.clear();
        right_.push_back(Slot{});
        right_[0].visits = 1;
        min_ = max_ = start;
    }

    std::int64_t start() const noexcept { return start_; }
    std::int64_t position() const noexcept { return position_; }
    std::uint64_t steps() const noexcept { return steps_; }
    std::int64_t min_visited() const noexcept { return min_; }
    std::int64_t max_visited() const noexcept { return max_; }

    /// D_n^+ (sites >= 0) and D_n^- (sites < 0).
    double consumed_drift_pos() const noexcept { return drift_pos_; }
    double consumed_drift_neg() const noexcept { return drift_neg_; }
    double consumed_drift() const noexcept { return drift_pos_ + drift_neg_; }

    /// #{m <= n : X_m = site}.
    std::uint64_t visits(std::int64_t site) const noexcept
    {
        const Slot* s = find(site);
        return s ? s->visits : 0;
    }

    /// Visits that ended with a departure, i.e. cookies eaten at `site`.
    std::uint64_t departures(std::int64_t site) const noexcept
    {
        const auto v = visits(site);
        return site == position_ ? v - 1 : v;
    }

    /// Sum of visits over all sites; equals steps() + 1.
    std::uint64_t total_visits() const noexcept
    {
        std::uint64_t t = 0;
        for (const auto& s : right_)
            t += s.visits;
        for (const auto& s : left_)
            t += s.visits;
        return t;
    }

    /// Drift of the cookies eaten at `site` so far (D_n^x), recomputed from the view.
    double eaten_drift(const EnvironmentView& view, std::int64_t site) const
    {
        const CookieRow row = view.residual_row(site);
        const auto eaten = std::min<std::uint64_t>(departures(site), row.size());
        double d = 0.0;
        for (std::uint64_t i = 0; i < eaten; ++i)
            d += 2.0 * row.strengths[i] - 1.0;
        return d;
    }

    /// Drift still stored at `site` after this walk's consumption.
    double remaining_drift(const EnvironmentView& view, std::int64_t site) const
    {
        return view.residual_row(site).drift() - eaten_drift(view, site);
    }

    /// Moves the walker one step, eating the cookie at its current site.
    /// Returns +1 or -1.
    int advance(const EnvironmentView& view, double u)
    {
        Slot& here = slot(position_);
        if (!here.ready)
            prepare(here, view, position_);
        const std::uint64_t visit = here.visits;
        double s = 0.5;
        if (visit <= here.len) {
            s = here.cookies[visit - 1];
            (position_ >= 0 ? drift_pos_ : drift_neg_) += 2.0 * s - 1.0;
        }
        const int dir = u < s ? 1 : -1;
        position_ += dir;
        ++steps_;
        if (position_ > max_) {
            max_ = position_;
            right_.push_back(Slot{});
        } else if (position_ < min_) {
            min_ = position_;
            left_.push_back(Slot{});
        }
        ++slot(position_).visits;
        return dir;
    }

    /// Sites in [min_visited, max_visited] paired with their visit counts.
    std::vector<std::pair<std::int64_t, std::uint64_t>> ledger() const
    {
        std::vector<std::pair<std::int64_t, std::uint64_t>> out;
        for (std::int64_t x = min_; x <= max_; ++x)
            out.emplace_back(x, visits(x));
        return out;
    }

private:
    struct Slot {
        std::uint64_t visits = 0;
        const double* cookies = nullptr;
        std::uint64_t len = 0;
        bool ready = false;
    };

    Slot& slot(std::int64_t x) noexcept
    {
        return x >= start_ ? right_[static_cast<std::size_t>(x - start_)]
                           : left_[static_cast<std::size_t>(start_ - x - 1)];
    }

    const Slot* find(std::int64_t x) const noexcept
    {
        if (x < min_ || x > max_)
            return nullptr;
        return x >= start_ ? &right_[static_cast<std::size_t>(x - start_)]
                           : &left_[static_cast<std::size_t>(start_ - x - 1)];
    }

    static void prepare(Slot& s, const EnvironmentView& view, std::int64_t x)
    {
        const CookieRow& row = view.base_row(x);
        const std::uint64_t used = view.consumed(x);
        s.len = used >= row.size() ? 0 : row.size() - used;
        s.cookies = s.len ? row.strengths.data() + used : nullptr;
        s.ready = true;
    }

    std::int64_t start_ = 0;
    std::int64_t position_ = 0;
    std::uint64_t steps_ = 0;
    double drift_pos_ = 0.0;
    double drift_neg_ = 0.0;
    std::int64_t min_ = 0;
    std::int64_t max_ = 0;
    std::vector<Slot> right_; // sites start, start+1, ...
    std::vector<Slot> left_;  // sites start-1, start-2, ...
};

/// One transition: right iff u < strength_at(view, X_n, visits(X_n)).
inline WalkState& step(WalkState& state, const EnvironmentView& view, double u)
{
    state.advance(view, u);
    return state;
}

/// First-passage times of the levels first reached during a run.
/// Upward levels are stored contiguously from `up_first`, downward ones from `down_first`.
struct PassageRecord {
    std::int64_t up_first = 0;
    std::vector<std::uint64_t> up_times;
    std::int64_t down_first = 0;
    std::vector<std::uint64_t> down_times;

    std::optional<std::uint64_t> time_of(std::int64_t level) const
    {
        if (!up_times.empty() && level >= up_first &&
            static_cast<std::uint64_t>(level - up_first) < up_times.size())
            return up_times[static_cast<std::size_t>(level - up_first)];
        if (!down_times.empty() && level <= down_first &&
            static_cast<std::uint64_t>(down_first - level) < down_times.size())
            return down_times[static_cast<std::size_t>(down_first - level)];
        return std::nullopt;
    }

    /// (level, T_level) sorted by level.
    std::vector<std::pair<std::int64_t, std::uint64_t>> entries() const
    {
        std::vector<std::pair<std::int64_t, std::uint64_t>> out;
        for (std::size_t i = down_times.size(); i-- > 0;)
            out.emplace_back(down_first - static_cast<std::int64_t>(i), down_times[i]);
        for (std::size_t i = 0; i < up_times.size(); ++i)
            out.emplace_back(up_first + static_cast<std::int64_t>(i), up_times[i]);
        return out;
    }

    /// T_{j+1} - T_j over consecutive upward levels.
    std::vector<std::uint64_t> gaps() const
    {
        std::vector<std::uint64_t> g;
        for (std::size_t i = 1; i < up_times.size(); ++i)
            g.push_back(up_times[i] - up_times[i - 1]);
        return g;
    }
};

enum class StopReason { horizon, hit_level, hit_left, hit_right, truncated };

inline const char* to_string(StopReason r) noexcept
{
    switch (r) {
    case StopReason::horizon: return "horizon";
    case StopReason::hit_level: return "hit_level";
    case StopReason::hit_left: return "hit_left";
    case StopReason::hit_right: return "hit_right";
    case StopReason::truncated: return "truncated";
    }
    return "?";
}

/// Step budget plus an optional target. `max_steps` bounds the steps taken by one run.
struct StopCondition {
    enum class Target { none, level, either };
    Target target = Target::none;
    std::uint64_t max_steps = 0;
    std::int64_t level = 0;
    std::int64_t left = 0;
    std::int64_t right = 0;

    static StopCondition steps(std::uint64_t n) { return {Target::none, n, 0, 0, 0}; }
    static StopCondition hit_level(std::int64_t k, std::uint64_t max_steps)
    {
        return {Target::level, max_steps, k, 0, 0};
    }
    static StopCondition hit_either(std::int64_t x, std::int64_t z, std::uint64_t max_steps)
    {
        return {Target::either, max_steps, 0, x, z};
    }
};

struct RunResult {
    PassageRecord passages;
    StopReason reason = StopReason::horizon;
};

/// Steps the walk until the stop condition fires or the budget runs out. Draws exactly
/// one uniform per step taken. Exhausting the budget before a target is hit yields
/// StopReason::truncated. If `trajectory` is given, positions after each step are appended.
inline RunResult run_until(WalkState& state, const EnvironmentView& view, const StopCondition& stop, RngStream& rng,
                           std::vector<std::int64_t>* trajectory = nullptr)
{
    using Target = StopCondition::Target;
    if (stop.target == Target::either && !(stop.left < state.position() && state.position() < stop.right))
        throw ValidationError("stop", "hit_either needs left < position < right");

    RunResult res;
    auto& rec = res.passages;
    std::int64_t hi = state.max_visited();
    std::int64_t lo = state.min_visited();
    if (state.steps() == 0) {
        rec.up_first = state.start();
        rec.up_times.push_back(0);
        rec.down_first = state.start() - 1;
    } else {
        rec.up_first = hi + 1;
        rec.down_first = lo - 1;
    }

    auto hit = [&](std::int64_t pos) -> std::optional<StopReason> {
        switch (stop.target) {
        case Target::none: return std::nullopt;
        case Target::level:
            if (pos == stop.level)
                return StopReason::hit_level;
            return std::nullopt;
        case Target::either:
            if (pos <= stop.left)
                return StopReason::hit_left;
            if (pos >= stop.right)
                return StopReason::hit_right;
            return std::nullopt;
        }
        return std::nullopt;
    };

    if (auto r = hit(state.position())) {
        res.reason = *r;
        return res;
    }
    for (std::uint64_t n = 0; n < stop.max_steps; ++n) {
        state.advance(view, rng.uniform());
        const std::int64_t pos = state.position();
        if (trajectory)
            trajectory->push_back(pos);
        if (pos > hi) {
            hi = pos;
            rec.up_times.push_back(state.steps());
        } else if (pos < lo) {
            lo = pos;
            rec.down_times.push_back(state.steps());
        }
        if (auto r = hit(pos)) {
            res.reason = *r;
            return res;
        }
    }
    res.reason = stop.target == Target::none ? StopReason::horizon : StopReason::truncated;
    return res;
}

/// Walk X in `view` and simple symmetric walk Y driven by the same uniforms.
struct CoupledPaths {
    std::vector<std::int64_t> x;
    std::vector<std::int64_t> y;
};

/// Coupling of an excited walk with a simple symmetric walk: X moves right iff
/// u < omega(X_n, visit), Y moves right iff u < 1/2. Guarantees Y_n <= X_n.
inline CoupledPaths run_coupled_dominating(const EnvironmentView& view, std::int64_t start, std::uint64_t horizon,
                                           RngStream& rng)
{
    CoupledPaths out;
    out.x.reserve(horizon + 1);
    out.y.reserve(horizon + 1);
    WalkState w(start);
    std::int64_t y = start;
    out.x.push_back(start);
    out.y.push_back(start);
    for (std::uint64_t n = 0; n < horizon; ++n) {
        const double u = rng.uniform();
        w.advance(view, u);
        y += u < 0.5 ? 1 : -1;
        out.x.push_back(w.position());
        out.y.push_back(y);
    }
    return out;
}

struct NaiveCoupling {
    std::vector<std::int64_t> x1;
    std::vector<std::int64_t> x2;
    bool overtake = false;
    /// First n with x1[n] > x2[n], if any.
    std::optional<std::uint64_t> overtake_step;
};

namespace detail {

inline void check_naive_params(double p1, double p2)
{
    if (!(p1 > 0.5 && p1 < 1.0))
        throw ValidationError("p1", "need 1/2 < p1 < 1");
    if (!(p2 > 0.5 && p2 < 1.0))
        throw ValidationError("p2", "need 1/2 < p2 < 1");
    if (p1 > p2)
        throw ValidationError("p1", "need p1 <= p2");
}

} // namespace detail

/// Two once-excited walks (first-visit strength p1 resp. p2) driven by shared uniforms.
/// Reusable across many runs without reallocating the ledgers.
class NaiveCoupler {
public:
    NaiveCoupler(double p1, double p2)
        : env1_((detail::check_naive_params(p1, p2), EnvironmentSpec::homogeneous(CookieRow{p1}))),
          env2_(EnvironmentSpec::homogeneous(CookieRow{p2}))
    {
    }

    /// Runs one coupled pair; `uniform` is called once per step.
    template <class Source>
    NaiveCoupling run(std::uint64_t horizon, Source&& uniform, bool record = true)
    {
        NaiveCoupling out;
        w1_.reset(0);
        w2_.reset(0);
        if (record) {
            out.x1.push_back(0);
            out.x2.push_back(0);
        }
        for (std::uint64_t n = 1; n <= horizon; ++n) {
            const double u = uniform();
            w1_.advance(env1_, u);
            w2_.advance(env2_, u);
            if (record) {
                out.x1.push_back(w1_.position());
                out.x2.push_back(w2_.position());
            }
            if (!out.overtake && w1_.position() > w2_.position()) {
                out.overtake = true;
                out.overtake_step = n;
                if (!record)
                    break;
            }
        }
        return out;
    }

private:
    EnvironmentView env1_;
    EnvironmentView env2_;
    WalkState w1_;
    WalkState w2_;
};

inline NaiveCoupling run_coupled_naive(double p1, double p2, std::uint64_t horizon, RngStream& rng)
{
    NaiveCoupler c(p1, p2);
    return c.run(horizon, [&] { return rng.uniform(); });
}

/// Same coupling on a prescribed uniform sequence; the horizon is its length.
inline NaiveCoupling run_coupled_naive(double p1, double p2, std::span<const double> uniforms)
{
    NaiveCoupler c(p1, p2);
    std::size_t i = 0;
    return c.run(uniforms.size(), [&] { return uniforms[i++]; });
}

// ---- CSV dumps -------------------------------------------------------------

inline void write_trajectory_csv(std::ostream& os, std::span<const std::int64_t> positions)
{
    os << "step,position\n";
    for (std::size_t n = 0; n < positions.size(); ++n)
        os << n << ',' << positions[n] << '\n';
}

inline void write_passage_csv(std::ostream& os, const PassageRecord& rec)
{
    os << "level,T_level\n";
    for (const auto& [level, t] : rec.entries())
        os << level << ',' << t << '\n';
}

} // namespace cookiewalk
