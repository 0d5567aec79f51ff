#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace offrl {

using real = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Counter-based PRNG built on the splitmix64 update. Every sampler in the
/// workbench derives one independent stream per logical unit of work
/// (trajectory, tuple, experiment cell), so generation order never affects
/// the output and parallel schedules are reproducible.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    real uniform01() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

    real uniform(real lo, real hi) { return lo + (hi - lo) * uniform01(); }

    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    real normal() {
        // Box-Muller; the second variate is discarded to keep call sites
        // independent of history.
        real u1 = uniform01();
        real u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Index sampled from an (unnormalized is fine) nonnegative weight vector.
    int categorical(const Vec& probs) {
        real total = probs.sum();
        real u = uniform01() * total;
        real acc = 0.0;
        for (int i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return static_cast<int>(probs.size()) - 1;
    }

  private:
    uint64_t state_;
};

inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// FNV-1a over a string, used when deriving per-cell seeds from config text.
inline uint64_t hash_str(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Seed for one unit of work, independent of every other unit.
inline uint64_t derive_seed(uint64_t master, uint64_t index) { return mix64(mix64(master) ^ mix64(index + 0x51ed270b0ad0ull)); }

} // namespace offrl
