#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace blockpred {

// SplitMix64 finalizer. Used to fan a master seed out into independent
// per-purpose / per-index streams so that changing one stage's seed does not
// perturb the others.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return splitmix64(splitmix64(base) ^ tag);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index) {
    return splitmix64(derive_seed(base, tag) ^ splitmix64(index + 0x51ed270b0a9cfd4bULL));
}

// Seed tags for the documented master-seed fan-out (one per pipeline stage).
namespace seed_tag {
inline constexpr std::uint64_t scenario = 0x7363656eULL;   // scenario sampling
inline constexpr std::uint64_t channel = 0x6368616eULL;    // fading draws
inline constexpr std::uint64_t model_init = 0x696e6974ULL; // weight init
inline constexpr std::uint64_t shuffle = 0x73687566ULL;    // training batch order
inline constexpr std::uint64_t random_init = 0x726e6474ULL; // random-init baseline
} // namespace seed_tag

// mt19937_64 engine with fixed uniform/normal transforms. The std
// distributions are implementation-defined, so we map raw engine output
// ourselves to keep every stream bit-reproducible.
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed) : eng_(seed) {}

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range; modulo bias is below 2^-50 for the ranges used here
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(eng_() % span);
    }

    // standard normal via Box-Muller, pairwise cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so log() stays finite
        const double u1 = static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    std::uint64_t raw() { return eng_(); }

  private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace blockpred
