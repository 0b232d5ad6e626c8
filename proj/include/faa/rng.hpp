#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace faa {

/// Stream purposes. Mixed into derived seeds so that, e.g., the augmentation
/// stream of a training run never shares state with its shuffling stream.
enum class StreamTag : std::uint64_t {
    Split = 1,
    Init,
    Shuffle,
    Augment,
    Suggest,
    Evaluate,
    Subsample,
    Synth,
    Control,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a child seed from a parent seed and a path of indices, e.g.
/// derive_seed(master, {fold, round, trial}). Order of the path matters.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) noexcept;

inline std::uint64_t derive_seed(std::uint64_t parent, StreamTag tag,
                                 std::initializer_list<std::uint64_t> path = {}) noexcept {
    return derive_seed(derive_seed(parent, {static_cast<std::uint64_t>(tag)}), path);
}

/// Seeded random stream. All distributions are implemented here on top of the
/// raw mt19937_64 output so that draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    /// True with probability p (p <= 0 never, p >= 1 always).
    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (no cached second variate).
    double normal();

    /// A fresh independent stream seeded from this one.
    Rng split() { return Rng(mix64(engine_())); }

private:
    std::mt19937_64 engine_;
};

} // namespace faa
