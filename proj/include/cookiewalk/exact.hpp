#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "env.hpp"

namespace cookiewalk {

using Rational = boost::multiprecision::cpp_rational;

inline double to_double(double v) noexcept { return v; }
inline double to_double(const Rational& v) { return v.convert_to<double>(); }

/// Thrown when an exact computation would exceed its configured size.
class BudgetExceeded : public std::runtime_error {
public:
    BudgetExceeded(const std::string& what, std::uint64_t required)
        : std::runtime_error(what), required_(required)
    {
    }
    std::uint64_t required() const noexcept { return required_; }

private:
    std::uint64_t required_;
};

// ---- Path-sum oracle -------------------------------------------------------

/// The event {T_target <= T_barrier and T_target <= horizon}.
struct EventSpec {
    std::int64_t barrier = 0;
    std::int64_t target = 0;
    std::uint64_t horizon = 0;
};

/// Probability mass split by how the first `horizon` steps end.
struct PathSumMasses {
    double event = 0.0;      // reached target first, within the horizon
    double barrier = 0.0;    // reached barrier first, within the horizon
    double unresolved = 0.0; // still strictly inside after `horizon` steps
};

inline constexpr std::uint64_t kDefaultPathSumCap = 24;

namespace detail {

class PathEnumerator {
public:
    PathEnumerator(const EnvironmentView& view, std::int64_t barrier, std::int64_t target)
        : barrier_(barrier), target_(target)
    {
        for (std::int64_t s = barrier; s <= target; ++s)
            rows_.push_back(view.residual_row(s));
        visits_.assign(rows_.size(), 0);
    }

    PathSumMasses run(std::int64_t start, std::uint64_t horizon)
    {
        out_ = {};
        visit(start, horizon, 1.0);
        return out_;
    }

private:
    void visit(std::int64_t pos, std::uint64_t left, double prob)
    {
        if (pos == target_) {
            out_.event += prob;
            return;
        }
        if (pos == barrier_) {
            out_.barrier += prob;
            return;
        }
        if (left == 0) {
            out_.unresolved += prob;
            return;
        }
        const auto idx = static_cast<std::size_t>(pos - barrier_);
        const std::uint64_t n = ++visits_[idx];
        const double s = rows_[idx].at(n);
        if (s > 0.0)
            visit(pos + 1, left - 1, prob * s);
        if (s < 1.0)
            visit(pos - 1, left - 1, prob * (1.0 - s));
        --visits_[idx];
    }

    std::int64_t barrier_;
    std::int64_t target_;
    std::vector<CookieRow> rows_;
    std::vector<std::uint64_t> visits_;
    PathSumMasses out_;
};

} // namespace detail

/// Exact masses by depth-first enumeration of every path of at most `event.horizon` steps.
inline PathSumMasses path_sum_masses(const EnvironmentView& view, std::int64_t start, const EventSpec& event,
                                     std::uint64_t cap = kDefaultPathSumCap)
{
    if (event.horizon > cap)
        throw BudgetExceeded("horizon " + std::to_string(event.horizon) + " exceeds path-sum cap " +
                                 std::to_string(cap) + "; use the capped-chain solver",
                             event.horizon);
    if (!(event.barrier <= start && start <= event.target))
        throw ValidationError("start", "need barrier <= start <= target");
    if (event.barrier == event.target)
        return {1.0, 0.0, 0.0};
    detail::PathEnumerator e(view, event.barrier, event.target);
    return e.run(start, event.horizon);
}

/// P_{start,omega}[T_target <= T_barrier ^ horizon].
inline double path_sum_event_prob(const EnvironmentView& view, std::int64_t start, const EventSpec& event,
                                  std::uint64_t cap = kDefaultPathSumCap)
{
    return path_sum_masses(view, start, event, cap).event;
}

// ---- Capped chain ------------------------------------------------------------

inline constexpr std::uint64_t kDefaultChainBudget = 5'000'000;

/// Absorbing chain over (position, remaining cookie counts) on the open interval
/// (left, right). States are numbered lexicographically: position first, then the
/// count vector with the leftmost site most significant. Index `size()` is absorption
/// at `left`, `size() + 1` absorption at `right`.
template <class Scalar = double>
struct CappedChain {
    std::int64_t left = 0;
    std::int64_t right = 0;
    std::vector<std::vector<Scalar>> rows; // residual cookie strengths per interior site
    std::vector<std::uint64_t> place;      // mixed-radix place value per interior site
    std::uint64_t count_vectors = 1;       // prod (len + 1)

    std::vector<std::uint64_t> right_to;
    std::vector<std::uint64_t> left_to;
    std::vector<Scalar> p_right;

    std::size_t width() const noexcept { return rows.size(); }
    std::uint64_t size() const noexcept { return static_cast<std::uint64_t>(width()) * count_vectors; }
    std::uint64_t absorb_left() const noexcept { return size(); }
    std::uint64_t absorb_right() const noexcept { return size() + 1; }

    std::uint64_t full_counts() const noexcept
    {
        std::uint64_t c = 0;
        for (std::size_t s = 0; s < rows.size(); ++s)
            c += rows[s].size() * place[s];
        return c;
    }

    std::uint64_t remaining(std::uint64_t count_index, std::size_t site) const noexcept
    {
        return (count_index / place[site]) % (rows[site].size() + 1);
    }

    std::uint64_t state(std::int64_t position, std::uint64_t count_index) const noexcept
    {
        return static_cast<std::uint64_t>(position - left - 1) * count_vectors + count_index;
    }

    /// State with all cookies still in place and the walker at `position`.
    std::uint64_t initial_state(std::int64_t position) const
    {
        if (!(left < position && position < right))
            throw ValidationError("start", "start must lie strictly inside the interval");
        return state(position, full_counts());
    }
};

template <class Scalar = double>
CappedChain<Scalar> build_capped_chain(const EnvironmentView& view, std::int64_t left, std::int64_t right,
                                       std::uint64_t budget = kDefaultChainBudget)
{
    if (!(left < right))
        throw ValidationError("interval", "need left < right");
    if (right - left < 2)
        throw ValidationError("interval", "interval has no interior site");
    CappedChain<Scalar> c;
    c.left = left;
    c.right = right;
    const auto w = static_cast<std::uint64_t>(right - left - 1);
    long double required = static_cast<long double>(w);
    std::vector<CookieRow> residual;
    for (std::int64_t x = left + 1; x < right; ++x) {
        residual.push_back(view.residual_row(x));
        required *= static_cast<long double>(residual.back().size() + 1);
    }
    if (required > static_cast<long double>(budget)) {
        const auto req = required > 1.8e19L ? std::numeric_limits<std::uint64_t>::max()
                                            : static_cast<std::uint64_t>(required);
        throw BudgetExceeded("capped chain needs " + std::to_string(req) + " states, budget is " +
                                 std::to_string(budget),
                             req);
    }
    for (const auto& r : residual) {
        std::vector<Scalar> s;
        for (double v : r.strengths)
            s.emplace_back(Scalar(v));
        c.rows.push_back(std::move(s));
    }
    c.place.assign(c.rows.size(), 1);
    for (std::size_t s = c.rows.size(); s-- > 0;) {
        c.place[s] = c.count_vectors;
        c.count_vectors *= c.rows[s].size() + 1;
    }
    const std::uint64_t n = c.size();
    c.right_to.resize(n);
    c.left_to.resize(n);
    c.p_right.resize(n);
    const Scalar half = Scalar(1) / Scalar(2);
    for (std::size_t p = 0; p < c.width(); ++p) {
        const auto len = c.rows[p].size();
        for (std::uint64_t ci = 0; ci < c.count_vectors; ++ci) {
            const std::uint64_t st = static_cast<std::uint64_t>(p) * c.count_vectors + ci;
            const std::uint64_t rem = c.remaining(ci, p);
            std::uint64_t next = ci;
            if (rem > 0) {
                c.p_right[st] = c.rows[p][len - rem];
                next = ci - c.place[p];
            } else {
                c.p_right[st] = half;
            }
            c.right_to[st] = p + 1 == c.width() ? c.absorb_right()
                                                : static_cast<std::uint64_t>(p + 1) * c.count_vectors + next;
            c.left_to[st] = p == 0 ? c.absorb_left() : static_cast<std::uint64_t>(p - 1) * c.count_vectors + next;
        }
    }
    return c;
}

template <class Scalar>
struct ChainSolve {
    Scalar value{};
    double residual = 0.0;
    std::uint64_t states = 0;
};

inline constexpr double kChainResidualTol = 1e-12;

namespace detail {

/// Solves f = cost + p f(right) + (1-p) f(left) with fixed values at the two absorbing
/// states. Count vectors only decrease along transitions, so groups are solved in
/// increasing count index; within a group the unknowns couple only through sites
/// whose cookies are gone, which gives a tridiagonal system in the position.
template <class Scalar>
std::vector<Scalar> solve_chain_values(const CappedChain<Scalar>& c, const Scalar& at_left, const Scalar& at_right,
                                       const Scalar& cost, double* residual_out)
{
    const std::uint64_t n = c.size();
    const std::size_t w = c.width();
    std::vector<Scalar> f(n + 2);
    f[c.absorb_left()] = at_left;
    f[c.absorb_right()] = at_right;
    const Scalar one(1);
    const Scalar half = one / Scalar(2);
    std::vector<Scalar> sub(w), diag(w), sup(w), rhs(w);
    for (std::uint64_t ci = 0; ci < c.count_vectors; ++ci) {
        for (std::size_t p = 0; p < w; ++p) {
            const std::uint64_t st = static_cast<std::uint64_t>(p) * c.count_vectors + ci;
            sub[p] = Scalar(0);
            sup[p] = Scalar(0);
            diag[p] = one;
            if (c.remaining(ci, p) > 0) {
                const Scalar& pr = c.p_right[st];
                rhs[p] = cost + pr * f[c.right_to[st]] + (one - pr) * f[c.left_to[st]];
            } else {
                rhs[p] = cost;
                if (p + 1 == w)
                    rhs[p] += half * at_right;
                else
                    sup[p] = -half;
                if (p == 0)
                    rhs[p] += half * at_left;
                else
                    sub[p] = -half;
            }
        }
        // Thomas algorithm.
        for (std::size_t p = 1; p < w; ++p) {
            if (sub[p] == Scalar(0))
                continue;
            const Scalar m = sub[p] / diag[p - 1];
            diag[p] -= m * sup[p - 1];
            rhs[p] -= m * rhs[p - 1];
        }
        for (std::size_t p = w; p-- > 0;) {
            Scalar v = rhs[p];
            if (p + 1 < w && sup[p] != Scalar(0))
                v -= sup[p] * f[static_cast<std::uint64_t>(p + 1) * c.count_vectors + ci];
            f[static_cast<std::uint64_t>(p) * c.count_vectors + ci] = v / diag[p];
        }
    }
    if (residual_out) {
        double r = 0.0;
        for (std::uint64_t st = 0; st < n; ++st) {
            const Scalar& pr = c.p_right[st];
            const Scalar e = f[st] - (cost + pr * f[c.right_to[st]] + (one - pr) * f[c.left_to[st]]);
            r = std::max(r, std::abs(to_double(e)));
        }
        *residual_out = r;
    }
    return f;
}

template <class Scalar>
ChainSolve<Scalar> finish_solve(const CappedChain<Scalar>& c, std::int64_t start, const Scalar& at_left,
                                const Scalar& at_right, const Scalar& cost)
{
    const auto init = c.initial_state(start);
    ChainSolve<Scalar> out;
    const auto f = solve_chain_values(c, at_left, at_right, cost, &out.residual);
    if (out.residual > kChainResidualTol)
        throw std::runtime_error("chain solve residual " + std::to_string(out.residual) + " above tolerance");
    out.value = f[init];
    out.states = c.size();
    return out;
}

} // namespace detail

/// P_{start}[T_right < T_left] with every cookie of the chain still in place.
template <class Scalar>
ChainSolve<Scalar> solve_hitting_prob(const CappedChain<Scalar>& c, std::int64_t start)
{
    return detail::finish_solve(c, start, Scalar(0), Scalar(1), Scalar(0));
}

/// E_{start}[T_left ^ T_right].
template <class Scalar>
ChainSolve<Scalar> solve_expected_exit_time(const CappedChain<Scalar>& c, std::int64_t start)
{
    return detail::finish_solve(c, start, Scalar(0), Scalar(0), Scalar(1));
}

/// P_{start}[T_right <= T_left ^ horizon] by backward induction over `horizon` steps.
template <class Scalar>
Scalar solve_hitting_prob_horizon(const CappedChain<Scalar>& c, std::int64_t start, std::uint64_t horizon)
{
    const auto init = c.initial_state(start);
    const std::uint64_t n = c.size();
    std::vector<Scalar> cur(n + 2, Scalar(0)), nxt(n + 2, Scalar(0));
    cur[c.absorb_right()] = nxt[c.absorb_right()] = Scalar(1);
    const Scalar one(1);
    for (std::uint64_t t = 0; t < horizon; ++t) {
        for (std::uint64_t st = 0; st < n; ++st)
            nxt[st] = c.p_right[st] * cur[c.right_to[st]] + (one - c.p_right[st]) * cur[c.left_to[st]];
        std::swap(cur, nxt);
    }
    return cur[init];
}

template <class Scalar>
nlohmann::json solve_report_json(const ChainSolve<Scalar>& s)
{
    return {{"schema", "v1"}, {"states", s.states}, {"residual", s.residual}, {"value", to_double(s.value)}};
}

/// Sparse triplets (row_state, col_state, prob); absorbing states are size() and size()+1.
template <class Scalar>
void write_chain_csv(std::ostream& os, const CappedChain<Scalar>& c)
{
    os << "row_state,col_state,prob\n";
    os.precision(17);
    for (std::uint64_t st = 0; st < c.size(); ++st) {
        const double pr = to_double(c.p_right[st]);
        if (pr > 0.0)
            os << st << ',' << c.right_to[st] << ',' << pr << '\n';
        if (pr < 1.0)
            os << st << ',' << c.left_to[st] << ',' << 1.0 - pr << '\n';
    }
}

// ---- Crossing-count solver ---------------------------------------------------

/// Exact hitting probabilities through the down-crossing counts of the path.
///
/// On {T_right < T_left} started at y, let d_j be the number of jumps from j+1 to j.
/// Then d_{right-1} = 0, and at each interior site j the walk leaves upward
/// d_j + [j >= y] times, its last departure being upward. So d_{j-1} is the number of
/// failures before the (d_j + [j >= y])-th success in the site's Bernoulli sequence with
/// success probabilities given by its cookies (then 1/2). The event is {d_left = 0}.
/// The chain on d is propagated from right to left; mass above `max_count` or below
/// `entry_eps` is dropped and reported as truncation_mass, so the true value lies in
/// [value, value + truncation_mass].
class CrossingSolver {
public:
    struct Options {
        std::uint64_t max_count = 200'000;
        double entry_eps = 1e-24;
    };

    struct Result {
        double value = 0.0;
        double truncation_mass = 0.0;
        std::uint64_t max_count_used = 0;
    };

    CrossingSolver() = default;
    explicit CrossingSolver(Options opt) : opt_(opt) {}

    Result hit_prob(const EnvironmentView& view, std::int64_t start, std::int64_t left, std::int64_t right)
    {
        if (!(left < start && start < right))
            throw ValidationError("start", "need left < start < right");
        Result res;
        std::vector<double> v{1.0}, next;
        double lost = 0.0;
        for (std::int64_t j = right - 1; j > left; --j) {
            Table& tab = table_for(view.residual_row(j));
            const std::uint64_t extra = j >= start ? 1 : 0;
            next.assign(1, 0.0);
            for (std::size_t d = 0; d < v.size(); ++d) {
                const double m = v[d];
                if (m == 0.0)
                    continue;
                const Dist& f = tab.get(d + extra, opt_.entry_eps);
                lost += m * f.lost;
                const std::size_t hi = f.lo + f.p.size();
                if (hi > next.size())
                    next.resize(hi, 0.0);
                double* out = next.data() + f.lo;
                for (std::size_t k = 0; k < f.p.size(); ++k)
                    out[k] += m * f.p[k];
            }
            // Drop the negligible upper tail and anything above the count cap.
            while (next.size() > 1 && (next.back() < opt_.entry_eps || next.size() > opt_.max_count + 1)) {
                lost += next.back();
                next.pop_back();
            }
            res.max_count_used = std::max<std::uint64_t>(res.max_count_used, next.size() - 1);
            std::swap(v, next);
        }
        res.value = v[0];
        res.truncation_mass = lost;
        return res;
    }

private:
    struct Dist {
        std::size_t lo = 0;
        std::vector<double> p;
        double lost = 0.0;
    };

    /// Failures before k successes at probability 1/2, truncated below eps.
    static Dist negbin_half(std::uint64_t k, double eps)
    {
        Dist d;
        if (k == 0) {
            d.p = {1.0};
            return d;
        }
        const double kk = static_cast<double>(k);
        const std::uint64_t mode = k - 1;
        const double md = static_cast<double>(mode);
        const double logpeak =
            std::lgamma(md + kk) - std::lgamma(md + 1.0) - std::lgamma(kk) - (md + kk) * std::log(2.0);
        const double peak = std::exp(logpeak);
        std::vector<double> below; // mode-1, mode-2, ...
        double v = peak;
        for (std::uint64_t f = mode; f > 0; --f) {
            // pmf(f-1) = pmf(f) * 2f / (f - 1 + k)
            v *= 2.0 * static_cast<double>(f) / (static_cast<double>(f - 1) + kk);
            if (v < eps)
                break;
            below.push_back(v);
        }
        std::vector<double> above{peak};
        v = peak;
        for (std::uint64_t f = mode;; ++f) {
            v *= (static_cast<double>(f) + kk) / (2.0 * static_cast<double>(f + 1));
            if (v < eps)
                break;
            above.push_back(v);
        }
        d.lo = mode - below.size();
        d.p.assign(below.rbegin(), below.rend());
        d.p.insert(d.p.end(), above.begin(), above.end());
        double s = 0.0;
        for (double x : d.p)
            s += x;
        d.lost = std::max(0.0, 1.0 - s);
        return d;
    }

    struct Table {
        std::vector<double> cookies;
        std::vector<std::optional<Dist>> by_r;

        /// Law of the number of failures before r successes.
        const Dist& get(std::uint64_t r, double eps)
        {
            if (r >= by_r.size())
                by_r.resize(r + 1);
            if (!by_r[r])
                by_r[r] = build(r, eps);
            return *by_r[r];
        }

        Dist build(std::uint64_t r, double eps) const
        {
            Dist out;
            if (r == 0) {
                out.p = {1.0};
                return out;
            }
            std::map<std::size_t, double> acc;
            double lost = 0.0;
            // alive[a] = P(a successes, i - a failures, a < r) after i cookie trials.
            std::vector<double> alive{1.0};
            std::size_t i = 0;
            for (; i < cookies.size(); ++i) {
                const double s = cookies[i];
                std::vector<double> nxt(alive.size() + 1, 0.0);
                for (std::size_t a = 0; a < alive.size(); ++a) {
                    if (alive[a] == 0.0)
                        continue;
                    nxt[a] += alive[a] * (1.0 - s);
                    nxt[a + 1] += alive[a] * s;
                }
                const std::size_t done = static_cast<std::size_t>(r);
                if (done < nxt.size()) {
                    acc[i + 1 - done] += nxt[done];
                    nxt.resize(done);
                }
                alive = std::move(nxt);
            }
            for (std::size_t a = 0; a < alive.size(); ++a) {
                if (alive[a] == 0.0)
                    continue;
                const std::size_t fails = i - a;
                const Dist nb = negbin_half(r - a, eps);
                lost += alive[a] * nb.lost;
                for (std::size_t k = 0; k < nb.p.size(); ++k)
                    acc[fails + nb.lo + k] += alive[a] * nb.p[k];
            }
            if (acc.empty()) {
                out.p = {0.0};
                out.lost = lost;
                return out;
            }
            out.lo = acc.begin()->first;
            out.p.assign(acc.rbegin()->first - out.lo + 1, 0.0);
            for (const auto& [f, m] : acc)
                out.p[f - out.lo] += m;
            out.lost = lost;
            return out;
        }
    };

    Table& table_for(const CookieRow& row)
    {
        auto it = tables_.find(row.strengths);
        if (it == tables_.end())
            it = tables_.emplace(row.strengths, Table{row.strengths, {}}).first;
        return it->second;
    }

    Options opt_;
    std::map<std::vector<double>, Table> tables_;
};

// ---- Escape-probability bounds -----------------------------------------------

inline constexpr double kEscapeTruncationTol = 1e-10;

/// h_K = omega(0,1) * P_{1, psi(omega,(0,1))}[T_K < T_0] for each requested K. The
/// sequence is non-increasing in K and converges to P_0[X_n > 0 for all n > 0].
struct EscapeBounds {
    std::vector<std::int64_t> levels;
    std::vector<double> values;
    std::vector<double> truncation_mass;
    /// First K that could not be computed within the solver limits, if any.
    std::optional<std::int64_t> cutoff;
};

inline EscapeBounds escape_prob_upper_bounds(const EnvironmentView& view, const std::vector<std::int64_t>& levels,
                                             CrossingSolver::Options opt = {})
{
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] < 1)
            throw ValidationError("levels", "K must be >= 1");
        if (i > 0 && levels[i] <= levels[i - 1])
            throw ValidationError("levels", "levels must be strictly increasing");
    }
    EscapeBounds out;
    const double first = view.strength(0, 1);
    const EnvironmentView after = leftover_psi(view, {0, 1});
    CrossingSolver solver(opt);
    for (const auto k : levels) {
        double value = first;
        double lost = 0.0;
        if (k > 1) {
            const auto r = solver.hit_prob(after, 1, 0, k);
            if (r.truncation_mass > kEscapeTruncationTol) {
                out.cutoff = k;
                break;
            }
            value = first * r.value;
            lost = first * r.truncation_mass;
        }
        out.levels.push_back(k);
        out.values.push_back(value);
        out.truncation_mass.push_back(lost);
    }
    return out;
}

} // namespace cookiewalk
