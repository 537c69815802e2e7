#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cdm {

/// Seeded random stream. The engine is std::mt19937_64 (bit-exact across
/// platforms); the uniform/normal transforms are implemented here because the
/// standard distributions are implementation-defined.
///
/// split() derives an independent child stream from the construction seed and a
/// stream key, so sub-components can draw without perturbing each other.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    Rng split(std::uint64_t stream) const;
    Rng split(std::string_view stream) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
/// FNV-1a over the bytes of text.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace cdm
