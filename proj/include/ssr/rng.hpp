// Deterministic random number generation. Every random quantity in the
// library flows through SplitMix64 so that a (seed, stream) pair reproduces
// the same bytes on every platform; nothing uses <random> distributions,
// whose output is implementation-defined.
#pragma once

#include <cmath>
#include <cstdint>

namespace ssr {

// SplitMix64: 64-bit state, one additive step plus a finalizer per output.
// Reference: Steele, Lea & Flood, "Fast splittable pseudorandom number
// generators" (the java.util.SplittableRandom mixing constants).
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Fair coin from the top bit.
    bool next_bool() { return (next_u64() >> 63) != 0; }

    // Uniform on [0, 1), 53 random mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double next_open_double() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller. Draws two uniforms and keeps one value;
    // no cached state, so the generator state stays a single 64-bit word.
    double next_gaussian() {
        const double u1 = next_open_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform on [-bound, bound].
    double next_uniform_sym(double bound) { return (2.0 * next_double() - 1.0) * bound; }

  private:
    std::uint64_t state_;
};

// Independent stream `index` of a master seed. Documented rule:
// child state = seed XOR mix(index + 1). Used to give each sample, epoch, or
// parameter block its own generator without coupling draw counts.
inline SplitMix64 derive_stream(std::uint64_t seed, std::uint64_t index) {
    return SplitMix64(seed ^ SplitMix64::mix(index + 1));
}

}  // namespace ssr
