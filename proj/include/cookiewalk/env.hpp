#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rng.hpp"

namespace cookiewalk {

/// Raised for malformed inputs; the message starts with the offending field.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field))
    {
    }
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Cookie strengths at one site. Visits past the listed cookies see strength 1/2.
struct CookieRow {
    std::vector<double> strengths;

    CookieRow() = default;
    CookieRow(std::initializer_list<double> s) : strengths(s) {}
    explicit CookieRow(std::vector<double> s) : strengths(std::move(s)) {}

    std::size_t size() const noexcept { return strengths.size(); }
    bool empty() const noexcept { return strengths.empty(); }

    /// Strength of the cookie met on the given (1-based) visit.
    double at(std::uint64_t visit) const noexcept
    {
        return visit >= 1 && visit <= strengths.size() ? strengths[visit - 1] : 0.5;
    }

    /// Total stored drift: sum of (2s - 1) over listed cookies.
    double drift() const noexcept
    {
        double d = 0.0;
        for (double s : strengths)
            d += 2.0 * s - 1.0;
        return d;
    }

    /// The row left after the bottom `eaten` cookies are removed.
    CookieRow residual(std::uint64_t eaten) const
    {
        if (eaten >= strengths.size())
            return {};
        return CookieRow(std::vector<double>(strengths.begin() + static_cast<std::ptrdiff_t>(eaten), strengths.end()));
    }

    /// Same row with trailing 1/2 entries dropped.
    CookieRow trimmed() const
    {
        auto s = strengths;
        while (!s.empty() && s.back() == 0.5)
            s.pop_back();
        return CookieRow(std::move(s));
    }

    void validate(const std::string& field) const
    {
        for (std::size_t i = 0; i < strengths.size(); ++i) {
            const double s = strengths[i];
            if (!(s >= 0.5 && s <= 1.0))
                throw ValidationError(field + "[" + std::to_string(i) + "]",
                                      "strength " + std::to_string(s) + " outside [1/2, 1]");
        }
    }

    friend bool operator==(const CookieRow&, const CookieRow&) = default;
};

inline double drift_delta(const CookieRow& row) noexcept { return row.drift(); }

/// True when lo(i) <= hi(i) for every visit index, tails included.
inline bool row_dominated(const CookieRow& lo, const CookieRow& hi) noexcept
{
    const std::size_t n = std::max(lo.size(), hi.size());
    for (std::size_t i = 1; i <= n; ++i)
        if (lo.at(i) > hi.at(i))
            return false;
    return true;
}

enum class EnvKind { homogeneous, iid_mixture, periodic, explicit_window };

inline const char* to_string(EnvKind k) noexcept
{
    switch (k) {
    case EnvKind::homogeneous: return "homogeneous";
    case EnvKind::iid_mixture: return "iid_mixture";
    case EnvKind::periodic: return "periodic";
    case EnvKind::explicit_window: return "explicit_window";
    }
    return "?";
}

struct PhasePolicy {
    bool random = true;
    std::int64_t fixed = 0;

    static PhasePolicy random_phase() { return {}; }
    static PhasePolicy fixed_phase(std::int64_t k) { return {false, k}; }
    friend bool operator==(const PhasePolicy&, const PhasePolicy&) = default;
};

/// Declarative environment law.
///
/// - homogeneous: rows[0] at every site.
/// - iid_mixture: each site independently draws rows[j] with probability weights[j].
/// - periodic: site x carries rows[(x + phase) mod rows.size()].
/// - explicit_window: `window` lists rows for individual sites. With a single
///   entry in `rows` that row fills every other site; with two entries, rows[0]
///   fills sites left of the window and rows[1] sites right of it (the window
///   must then be contiguous).
struct EnvironmentSpec {
    EnvKind kind = EnvKind::homogeneous;
    std::vector<CookieRow> rows;
    std::vector<double> weights;
    PhasePolicy phase;
    std::uint64_t env_seed = 0;
    std::map<std::int64_t, CookieRow> window;

    static EnvironmentSpec homogeneous(CookieRow row, std::uint64_t seed = 0)
    {
        EnvironmentSpec s;
        s.kind = EnvKind::homogeneous;
        s.rows = {std::move(row)};
        s.env_seed = seed;
        return s;
    }

    static EnvironmentSpec mixture(std::vector<CookieRow> rows, std::vector<double> weights, std::uint64_t seed)
    {
        EnvironmentSpec s;
        s.kind = EnvKind::iid_mixture;
        s.rows = std::move(rows);
        s.weights = std::move(weights);
        s.env_seed = seed;
        return s;
    }

    static EnvironmentSpec periodic(std::vector<CookieRow> rows, PhasePolicy phase, std::uint64_t seed = 0)
    {
        EnvironmentSpec s;
        s.kind = EnvKind::periodic;
        s.rows = std::move(rows);
        s.phase = phase;
        s.env_seed = seed;
        return s;
    }

    static EnvironmentSpec explicit_window(std::vector<CookieRow> defaults, std::map<std::int64_t, CookieRow> window)
    {
        EnvironmentSpec s;
        s.kind = EnvKind::explicit_window;
        s.rows = std::move(defaults);
        s.window = std::move(window);
        return s;
    }

    /// Stationary under the site shift, i.e. eligible for classification.
    bool stationary() const noexcept
    {
        return kind == EnvKind::homogeneous || kind == EnvKind::iid_mixture ||
               (kind == EnvKind::periodic && phase.random);
    }

    void validate() const
    {
        if (rows.empty())
            throw ValidationError("rows", "at least one row is required");
        for (std::size_t j = 0; j < rows.size(); ++j)
            rows[j].validate("rows[" + std::to_string(j) + "]");
        switch (kind) {
        case EnvKind::homogeneous:
            if (rows.size() != 1)
                throw ValidationError("rows", "homogeneous environment needs exactly one row");
            break;
        case EnvKind::iid_mixture: {
            if (weights.size() != rows.size())
                throw ValidationError("weights", "need one weight per row");
            double total = 0.0;
            for (std::size_t j = 0; j < weights.size(); ++j) {
                if (!(weights[j] >= 0.0) || !std::isfinite(weights[j]))
                    throw ValidationError("weights[" + std::to_string(j) + "]", "weight must be nonnegative");
                total += weights[j];
            }
            if (std::abs(total - 1.0) > 1e-12)
                throw ValidationError("weights", "weights sum to " + std::to_string(total) + ", not 1");
            break;
        }
        case EnvKind::periodic:
            if (rows.size() < 2)
                throw ValidationError("rows", "periodic environment needs at least two rows");
            break;
        case EnvKind::explicit_window:
            if (rows.size() > 2)
                throw ValidationError("rows", "explicit window takes one default row or a left/right pair");
            for (const auto& [site, row] : window)
                row.validate("window[" + std::to_string(site) + "]");
            if (rows.size() == 2) {
                if (window.empty())
                    throw ValidationError("window", "left/right defaults need a nonempty window");
                const auto lo = window.begin()->first;
                const auto hi = window.rbegin()->first;
                if (static_cast<std::uint64_t>(hi - lo) + 1 != window.size())
                    throw ValidationError("window", "left/right defaults need a contiguous window");
            }
            break;
        }
    }

    friend bool operator==(const EnvironmentSpec&, const EnvironmentSpec&) = default;
};

/// Law of the row at a single site, as (probability, row) pairs.
inline std::vector<std::pair<double, CookieRow>> site_marginal(const EnvironmentSpec& spec)
{
    std::vector<std::pair<double, CookieRow>> law;
    switch (spec.kind) {
    case EnvKind::homogeneous:
        law.emplace_back(1.0, spec.rows.front());
        break;
    case EnvKind::iid_mixture:
        for (std::size_t j = 0; j < spec.rows.size(); ++j)
            law.emplace_back(spec.weights[j], spec.rows[j]);
        break;
    case EnvKind::periodic:
        if (!spec.phase.random)
            throw ValidationError("phase", "site marginal not stationary; use random phase for classification");
        for (const auto& r : spec.rows)
            law.emplace_back(1.0 / static_cast<double>(spec.rows.size()), r);
        break;
    case EnvKind::explicit_window:
        throw ValidationError("kind", "explicit window environments have no stationary site marginal");
    }
    return law;
}

/// Expected row drift E[delta^0] under the site marginal.
inline double expected_delta(const EnvironmentSpec& spec)
{
    spec.validate();
    double e = 0.0;
    for (const auto& [w, row] : site_marginal(spec))
        e += w * row.drift();
    return e;
}

/// Realized environment: rows are a pure function of (env_seed, site); `consumed`
/// records cookies already removed (the leftover transform), and `shift` realizes
/// the site translation (theta^k w)(x) = w(x + k).
class EnvironmentView {
public:
    EnvironmentView() = default;

    explicit EnvironmentView(EnvironmentSpec spec)
    {
        spec.validate();
        spec_ = std::make_shared<const EnvironmentSpec>(std::move(spec));
        seed_ = spec_->env_seed;
        init_phase();
    }

    const EnvironmentSpec& spec() const noexcept { return *spec_; }
    std::uint64_t env_seed() const noexcept { return seed_; }
    std::int64_t shift() const noexcept { return shift_; }

    /// Row at `site` before any cookies were consumed.
    const CookieRow& base_row(std::int64_t site) const
    {
        const std::int64_t x = site + shift_;
        const auto& s = *spec_;
        switch (s.kind) {
        case EnvKind::homogeneous:
            return s.rows.front();
        case EnvKind::iid_mixture: {
            const double u = to_unit(hash_combine(seed_, static_cast<std::uint64_t>(x)));
            double acc = 0.0;
            for (std::size_t j = 0; j + 1 < s.rows.size(); ++j) {
                acc += s.weights[j];
                if (u < acc)
                    return s.rows[j];
            }
            return s.rows.back();
        }
        case EnvKind::periodic: {
            const auto p = static_cast<std::int64_t>(s.rows.size());
            const std::int64_t idx = ((x + phase_) % p + p) % p;
            return s.rows[static_cast<std::size_t>(idx)];
        }
        case EnvKind::explicit_window: {
            if (auto it = s.window.find(x); it != s.window.end())
                return it->second;
            if (s.rows.size() == 2 && x > s.window.rbegin()->first)
                return s.rows[1];
            return s.rows[0];
        }
        }
        return s.rows.front();
    }

    std::uint64_t consumed(std::int64_t site) const
    {
        auto it = consumed_.find(site);
        return it == consumed_.end() ? 0 : it->second;
    }

    const std::map<std::int64_t, std::uint64_t>& consumed_map() const noexcept { return consumed_; }

    /// Strength met on the visit_index-th visit (1-based) to `site`.
    double strength(std::int64_t site, std::uint64_t visit_index) const
    {
        return base_row(site).at(visit_index + consumed(site));
    }

    /// Cookies still in place at `site`.
    CookieRow residual_row(std::int64_t site) const { return base_row(site).residual(consumed(site)); }

    void add_consumed(std::int64_t site, std::uint64_t count)
    {
        if (count != 0)
            consumed_[site] += count;
    }

    /// theta^k: the returned view answers site x with what this view answers at x + k.
    EnvironmentView shifted(std::int64_t k) const
    {
        EnvironmentView v = *this;
        v.shift_ = shift_ + k;
        v.consumed_.clear();
        for (const auto& [site, c] : consumed_)
            v.consumed_[site - k] = c;
        return v;
    }

    /// Fresh draw of the same law (new mixture rows / new random phase), nothing consumed.
    EnvironmentView reseeded(std::uint64_t seed) const
    {
        EnvironmentView v;
        v.spec_ = spec_;
        v.seed_ = seed;
        v.init_phase();
        return v;
    }

    std::int64_t phase() const noexcept { return phase_; }

private:
    void init_phase()
    {
        if (spec_->kind != EnvKind::periodic)
            return;
        if (spec_->phase.random)
            phase_ = static_cast<std::int64_t>(hash_combine(seed_, UINT64_C(0x7068617365)) % spec_->rows.size());
        else
            phase_ = spec_->phase.fixed;
    }

    std::shared_ptr<const EnvironmentSpec> spec_;
    std::uint64_t seed_ = 0;
    std::int64_t shift_ = 0;
    std::int64_t phase_ = 0;
    std::map<std::int64_t, std::uint64_t> consumed_;
};

inline EnvironmentView make_environment(const EnvironmentSpec& spec) { return EnvironmentView(spec); }

/// Returns omega_psi(site, visit_index); visit_index is 1-based.
inline double strength_at(const EnvironmentView& view, std::int64_t site, std::uint64_t visit_index)
{
    if (visit_index == 0)
        throw std::invalid_argument("visit_index must be >= 1");
    return view.strength(site, visit_index);
}

inline void require_nearest_neighbor(std::span<const std::int64_t> path)
{
    for (std::size_t n = 1; n < path.size(); ++n)
        if (std::abs(path[n] - path[n - 1]) != 1)
            throw ValidationError("path[" + std::to_string(n) + "]", "not a nearest-neighbor step");
}

/// Removes one bottom cookie per visit along path[0..len-2]; the final site keeps its cookie.
inline EnvironmentView leftover_psi(const EnvironmentView& view, std::span<const std::int64_t> path)
{
    require_nearest_neighbor(path);
    EnvironmentView out = view;
    for (std::size_t n = 0; n + 1 < path.size(); ++n)
        out.add_consumed(path[n], 1);
    return out;
}

inline EnvironmentView leftover_psi(const EnvironmentView& view, std::initializer_list<std::int64_t> path)
{
    return leftover_psi(view, std::span<const std::int64_t>(path.begin(), path.size()));
}

// ---- JSON ------------------------------------------------------------------

inline EnvKind parse_kind(const std::string& s)
{
    if (s == "homogeneous") return EnvKind::homogeneous;
    if (s == "iid_mixture" || s == "mixture") return EnvKind::iid_mixture;
    if (s == "periodic") return EnvKind::periodic;
    if (s == "explicit_window" || s == "window") return EnvKind::explicit_window;
    throw ValidationError("kind", "unknown environment kind '" + s + "'");
}

namespace detail {

inline CookieRow row_from_json(const nlohmann::json& j, const std::string& field)
{
    if (!j.is_array())
        throw ValidationError(field, "row must be an array of strengths");
    CookieRow row;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw ValidationError(field + "[" + std::to_string(i) + "]", "strength must be a number");
        row.strengths.push_back(j[i].get<double>());
    }
    return row;
}

} // namespace detail

inline nlohmann::json to_json_value(const EnvironmentSpec& spec)
{
    nlohmann::json j;
    j["kind"] = to_string(spec.kind);
    auto rows = nlohmann::json::array();
    for (const auto& r : spec.rows)
        rows.push_back(r.strengths);
    j["rows"] = rows;
    if (spec.kind == EnvKind::iid_mixture)
        j["weights"] = spec.weights;
    if (spec.kind == EnvKind::periodic) {
        if (spec.phase.random)
            j["phase"] = "random";
        else
            j["phase"] = spec.phase.fixed;
    }
    if (spec.kind == EnvKind::explicit_window) {
        nlohmann::json w = nlohmann::json::object();
        for (const auto& [site, row] : spec.window)
            w[std::to_string(site)] = row.strengths;
        j["window"] = w;
    }
    j["env_seed"] = spec.env_seed;
    return j;
}

inline EnvironmentSpec spec_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ValidationError("env", "environment must be a JSON object");
    EnvironmentSpec spec;
    if (!j.contains("kind") || !j["kind"].is_string())
        throw ValidationError("kind", "missing environment kind");
    spec.kind = parse_kind(j["kind"].get<std::string>());
    if (!j.contains("rows") || !j["rows"].is_array())
        throw ValidationError("rows", "missing rows array");
    for (std::size_t r = 0; r < j["rows"].size(); ++r)
        spec.rows.push_back(detail::row_from_json(j["rows"][r], "rows[" + std::to_string(r) + "]"));
    if (j.contains("weights")) {
        if (!j["weights"].is_array())
            throw ValidationError("weights", "weights must be an array");
        for (const auto& w : j["weights"]) {
            if (!w.is_number())
                throw ValidationError("weights", "weights must be numbers");
            spec.weights.push_back(w.get<double>());
        }
    }
    if (j.contains("phase")) {
        const auto& p = j["phase"];
        if (p.is_string() && p.get<std::string>() == "random")
            spec.phase = PhasePolicy::random_phase();
        else if (p.is_number_integer())
            spec.phase = PhasePolicy::fixed_phase(p.get<std::int64_t>());
        else
            throw ValidationError("phase", "phase must be \"random\" or an integer");
    }
    if (j.contains("env_seed")) {
        if (!j["env_seed"].is_number_unsigned() && !(j["env_seed"].is_number_integer() && j["env_seed"].get<std::int64_t>() >= 0))
            throw ValidationError("env_seed", "env_seed must be a nonnegative integer");
        spec.env_seed = j["env_seed"].get<std::uint64_t>();
    }
    if (j.contains("window")) {
        if (!j["window"].is_object())
            throw ValidationError("window", "window must map site strings to rows");
        for (const auto& [key, val] : j["window"].items()) {
            std::int64_t site = 0;
            try {
                std::size_t used = 0;
                site = std::stoll(key, &used);
                if (used != key.size())
                    throw std::invalid_argument(key);
            } catch (const std::exception&) {
                throw ValidationError("window", "site key '" + key + "' is not an integer");
            }
            spec.window[site] = detail::row_from_json(val, "window[" + key + "]");
        }
    }
    spec.validate();
    return spec;
}

/// FNV-1a over the compact JSON form; stable identifier for CSV rows.
inline std::string spec_hash(const EnvironmentSpec& spec)
{
    const std::string text = to_json_value(spec).dump();
    std::uint64_t h = UINT64_C(0xcbf29ce484222325);
    for (unsigned char c : text) {
        h ^= c;
        h *= UINT64_C(0x100000001b3);
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xF];
        h >>= 4;
    }
    return out;
}

} // namespace cookiewalk
