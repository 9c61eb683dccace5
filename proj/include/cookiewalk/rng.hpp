#pragma once

#include <cstdint>

namespace cookiewalk {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * UINT64_C(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)) * UINT64_C(0x94D049BB133111EB);
    return z ^ (z >> 31);
}

/// Hash of two words, used to derive keys (stream keys, per-site environment draws).
constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept
{
    return mix64(mix64(a + UINT64_C(0x9E3779B97F4A7C15)) ^ (b * UINT64_C(0xD1342543DE82EF95) + 1));
}

/// Maps a 64-bit word to a double in [0, 1) using its top 53 bits.
constexpr double to_unit(std::uint64_t bits) noexcept
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based uniform stream. Output k is mix64(key + k * gamma), where the key
/// is derived from (master_seed, stream_id). Streams are independent of evaluation
/// order, so replica r always sees the same sequence regardless of threading.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id) noexcept
        : master_seed_(master_seed), stream_id_(stream_id), key_(hash_combine(master_seed, stream_id))
    {
    }

    std::uint64_t next_u64() noexcept
    {
        ++counter_;
        return mix64(key_ + counter_ * kGamma);
    }

    double uniform() noexcept { return to_unit(next_u64()); }

    std::uint64_t master_seed() const noexcept { return master_seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    /// Number of words drawn so far.
    std::uint64_t consumed() const noexcept { return counter_; }

    /// Child stream keyed off this stream's identity; used for nested fan-out.
    RngStream split(std::uint64_t child) const noexcept
    {
        return RngStream(key_, hash_combine(stream_id_, child));
    }

private:
    static constexpr std::uint64_t kGamma = UINT64_C(0x9E3779B97F4A7C15);
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace cookiewalk
