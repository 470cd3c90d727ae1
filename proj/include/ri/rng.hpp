#pragma once

#include <cstdint>

#include "ri/common.hpp"

namespace ri {

// Hand-rolled generator and samplers so that output streams are identical
// across platforms and standard libraries; std:: distributions make no such
// guarantee. SplitMix64 is plenty for Monte Carlo at these sizes.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform on (0,1), never exactly 0 or 1
    double u01() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1p-53; }
};

// Stream derivation: a draw's generator depends only on (master seed, draw
// index, attempt); covariate points never enter, which is the common random
// numbers contract.
inline SplitMix64 draw_rng(std::uint64_t master_seed, std::uint64_t draw_index,
                           std::uint64_t attempt = 0) {
    SplitMix64 h(master_seed);
    std::uint64_t s = h.next();
    SplitMix64 h2(s ^ (0x9E3779B97F4A7C15ull * (draw_index + 1)));
    std::uint64_t s2 = h2.next();
    SplitMix64 h3(s2 ^ (0xD1B54A32D192ED03ull * (attempt + 1)));
    return SplitMix64(h3.next());
}

// Inverse error function (rational approximation polished by two Newton
// steps); accurate to ~1e-15 over (-1, 1).
inline double erf_inv(double y) {
    if (y <= -1.0 || y >= 1.0) return y < 0 ? kNegInf : kPosInf;
    double x, z;
    if (y < -0.7) {
        z = std::sqrt(-std::log(0.5 * (1.0 + y)));
        x = -(((1.641345311 * z + 3.429567803) * z - 1.624906493) * z - 1.970840454) /
            ((1.637067800 * z + 3.543889200) * z + 1.0);
    } else if (y < 0.7) {
        z = y * y;
        x = y * (((-0.140543331 * z + 0.914624893) * z - 1.645349621) * z + 0.886226899) /
            ((((0.012229801 * z - 0.329097515) * z + 1.442710462) * z - 2.118377725) * z +
             1.0);
    } else {
        z = std::sqrt(-std::log(0.5 * (1.0 - y)));
        x = (((1.641345311 * z + 3.429567803) * z - 1.624906493) * z - 1.970840454) /
            ((1.637067800 * z + 3.543889200) * z + 1.0);
    }
    x -= (std::erf(x) - y) / (1.1283791670955126 * std::exp(-x * x));
    x -= (std::erf(x) - y) / (1.1283791670955126 * std::exp(-x * x));
    return x;
}

inline double sample_normal(SplitMix64& rng, double mean, double sd) {
    return mean + sd * 1.4142135623730951 * erf_inv(2.0 * rng.u01() - 1.0);
}

inline double sample_gumbel(SplitMix64& rng, double location, double scale) {
    return location - scale * std::log(-std::log(rng.u01()));
}

inline double sample_lognormal(SplitMix64& rng, double mean_log, double sd_log) {
    return std::exp(sample_normal(rng, mean_log, sd_log));
}

inline std::size_t sample_categorical(SplitMix64& rng, const Vec& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.u01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        u -= weights[i];
        if (u <= 0.0) return i;
    }
    return weights.size() - 1;
}

}  // namespace ri
