#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace warpfield {

// Error taxonomy, mapped to CLI exit codes by tools/warpfield.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64. Hand-rolled because std:: distributions are not bit-portable
// and every determinism contract in the engine is bitwise.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0,1), safe for log()
    double uniform_open() { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller, no state caching: two draws per sample,
    // so the stream position is a pure function of the call count.
    double normal() {
        double u1 = uniform_open();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }
};

inline std::uint64_t hash_mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return hash_mix(a ^ (hash_mix(b) + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// Named sub-stream derivation: rng = f(seed, iteration, slot). Streams are
// independent of how much any other stream consumed, which is what makes
// checkpoint-resume and ablation runs line up bitwise.
enum class Stream : std::uint64_t {
    init_canonical_coarse = 1,
    init_canonical_fine,
    init_bending,
    init_rigidity,
    init_view_head,
    batch_pixels,
    stratified_coarse,
    importance_fine,
    divergence_probe,
    scene_build,
    misc,
};

inline Rng derive_rng(std::uint64_t seed, Stream stream, std::uint64_t iteration = 0,
                      std::uint64_t slot = 0) {
    std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(stream));
    h = hash_combine(h, iteration);
    h = hash_combine(h, slot);
    return Rng(h);
}

} // namespace warpfield
