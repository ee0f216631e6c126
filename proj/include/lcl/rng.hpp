#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

#include "lcl/special.hpp"

namespace lcl {

// Counter-based generator in the SplitMix64 family (Steele-Lea-Flood 2014,
// finalizer by Vigna).  Output k of a stream with key s is
// mix64(s + (k+1)*GOLDEN), so any position is addressable without advancing
// state and derived streams are cheap to spawn.
namespace rng_detail {
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}
}  // namespace rng_detail

// Stable combination of a base seed with a path of integers (task kind,
// replicate index, step index, ...).  Used everywhere a worker needs an
// independent stream that does not depend on scheduling.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
    using namespace rng_detail;
    std::uint64_t h = mix64(base + kGolden);
    for (std::uint64_t p : path) h = mix64(h ^ (p + kGolden + (h << 6) + (h >> 2)));
    return h;
}

class Rng {
  public:
    explicit Rng(std::uint64_t key) : key_(key) {}

    static Rng derived(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
        return Rng(derive_seed(base, path));
    }

    std::uint64_t next_u64() {
        return rng_detail::mix64(key_ + (++counter_) * rng_detail::kGolden);
    }

    // Uniform on the open interval (0,1); never returns an endpoint.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double exponential() { return -std::log(uniform()); }

    double normal() { return normal_icdf(uniform()); }

    // Marsaglia-Tsang for shape >= 1.  Consumes a variable number of draws
    // from this stream, which is fine: streams are per-task.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            const double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
            if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace lcl
