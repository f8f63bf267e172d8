#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace uiclab {

/// Counter-based generator: draw i of a stream is splitmix64(seed + (i+1)*gamma),
/// so a stream is fully described by (seed, position) and any draw can be read
/// without touching the others. Output is identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t position = 0)
        : seed_(seed), position_(position) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return position_; }

    std::uint64_t next_u64() { return peek_u64(position_++); }
    /// Uniform in [0, 1) with 53 random bits.
    double next_double() { return to_unit(next_u64()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
    /// Uniform integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);
    /// Standard normal via Box-Muller; always consumes exactly two draws.
    double normal();

    /// Draw at absolute stream position `pos`, without advancing.
    std::uint64_t peek_u64(std::uint64_t pos) const;
    double peek_double(std::uint64_t pos) const { return to_unit(peek_u64(pos)); }

    void skip(std::uint64_t n) { position_ += n; }

    /// Independent child stream keyed by `keys`, starting at position 0. The
    /// parent's position does not influence the child.
    Rng fork(std::initializer_list<std::uint64_t> keys) const;

    static std::uint64_t mix(std::uint64_t z);
    static double to_unit(std::uint64_t bits) {
        return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }

    bool operator==(const Rng&) const = default;

private:
    std::uint64_t seed_;
    std::uint64_t position_;
};

/// Stream tags used when forking per-purpose streams off an experiment seed.
enum class Stream : std::uint64_t {
    init = 1,
    label_aug = 2,
    train_aug = 3,
    sampler = 4,
    repair = 5,
    kmeans = 6,
    classifier_reinit = 7,
    synth = 8,
    probe = 9,
    fewshot = 10,
    split = 11,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

} // namespace uiclab
