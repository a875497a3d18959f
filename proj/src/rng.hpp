#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace greenmg::rng {

inline uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Substream seed: one master seed plus a (tag, counter) pair names every
/// random stream in the project, so regeneration is order-independent.
/// Tags: 1 forcing samples, 2 coefficient fields, 3 batch shuffles,
/// 4 row subsampling, 5 auxiliary draws.
inline uint64_t derive(uint64_t master, uint64_t tag, uint64_t counter) {
    return mix(master + 0x9E3779B97F4A7C15ull * (tag + 1) + 0xD1342543DE82EF95ull * (counter + 1));
}

/// Deterministic generator: explicit uniform and Box-Muller normal mappings
/// keep draws bit-identical for a given seed independent of the standard
/// library's distribution implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t bits() { return eng_(); }

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }  // [0, 1)

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    /// Floyd-style distinct sample of `count` values from [0, n), then sorted.
    std::vector<int> sample_without_replacement(int n, int count);

  private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline std::vector<int> Rng::sample_without_replacement(int n, int count) {
    // Partial Fisher-Yates over an index array; deterministic in draw order.
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < count; ++i) {
        int j = i + static_cast<int>(eng_() % static_cast<uint64_t>(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace greenmg::rng
