#pragma once

#include <algorithm>
#include <numeric>

#include "ri/belief.hpp"
#include "ri/common.hpp"

namespace ri {

enum class CostFamily { quadratic, kl_to_prior, tsallis };

inline const char* to_string(CostFamily f) {
    switch (f) {
        case CostFamily::quadratic: return "quadratic";
        case CostFamily::kl_to_prior: return "kl_to_prior";
        case CostFamily::tsallis: return "tsallis";
    }
    return "?";
}

inline CostFamily cost_family_from_string(const std::string& s) {
    if (s == "quadratic") return CostFamily::quadratic;
    if (s == "kl_to_prior" || s == "kl") return CostFamily::kl_to_prior;
    if (s == "tsallis") return CostFamily::tsallis;
    throw ConfigError("unknown cost family '" + s + "'");
}

// Posterior-specific attention cost: strictly convex, nonnegative, and exactly
// zero at its center (the prior). Families:
//   quadratic    kappa * ||g - mu||^2
//   kl_to_prior  kappa * sum g_j log(g_j / mu_j)
//   tsallis      kappa * (sum g_j^2 / mu_j - 1)
// kl/tsallis require a strictly positive center.
struct AttentionCost {
    CostFamily family = CostFamily::quadratic;
    double scale = 1.0;
    Belief center;

    AttentionCost() = default;
    AttentionCost(CostFamily f, double kappa, Belief mu)
        : family(f), scale(kappa), center(std::move(mu)) {
        if (!(scale > 0.0)) throw ConfigError("attention cost scale must be positive");
        if (family != CostFamily::quadratic)
            for (double m : center.p)
                if (!(m > 0.0))
                    throw ConfigError("cost family requires strictly positive prior");
    }

    double value(const Belief& g) const {
        if (g.p == center.p) return 0.0;  // T(mu) = 0 holds exactly
        const std::size_t J = g.dim();
        double t = 0.0;
        switch (family) {
            case CostFamily::quadratic:
                for (std::size_t j = 0; j < J; ++j) {
                    const double d = g.p[j] - center.p[j];
                    t += d * d;
                }
                break;
            case CostFamily::kl_to_prior:
                for (std::size_t j = 0; j < J; ++j) {
                    if (g.p[j] <= 0.0) continue;  // 0 log 0 = 0
                    if (center.p[j] <= 0.0) return kPosInf;
                    t += g.p[j] * std::log(g.p[j] / center.p[j]);
                }
                break;
            case CostFamily::tsallis:
                for (std::size_t j = 0; j < J; ++j) {
                    if (center.p[j] <= 0.0) {
                        if (g.p[j] > 0.0) return kPosInf;
                        continue;
                    }
                    t += g.p[j] * g.p[j] / center.p[j];
                }
                t -= 1.0;
                break;
        }
        return scale * std::max(t, 0.0);
    }

    // Gradient on the interior of the finite domain.
    Vec gradient(const Belief& g) const {
        const std::size_t J = g.dim();
        Vec grad(J, 0.0);
        switch (family) {
            case CostFamily::quadratic:
                for (std::size_t j = 0; j < J; ++j)
                    grad[j] = 2.0 * scale * (g.p[j] - center.p[j]);
                break;
            case CostFamily::kl_to_prior:
                for (std::size_t j = 0; j < J; ++j) {
                    const double gj = std::max(g.p[j], 1e-300);
                    grad[j] = scale * (std::log(gj / center.p[j]) + 1.0);
                }
                break;
            case CostFamily::tsallis:
                for (std::size_t j = 0; j < J; ++j)
                    grad[j] = 2.0 * scale * g.p[j] / center.p[j];
                break;
        }
        return grad;
    }

    // Exact maximizer of c . g - T(g) over the simplex, with its value.
    // Each family admits a closed form (projection, exponential tilt, or
    // weighted water-filling), so the inner maximizations of the support
    // function are exact rather than iterative.
    std::pair<Belief, double> tilted_argmax(const Vec& c) const {
        const std::size_t J = center.dim();
        switch (family) {
            case CostFamily::quadratic: {
                Vec y(J);
                for (std::size_t j = 0; j < J; ++j)
                    y[j] = center.p[j] + c[j] / (2.0 * scale);
                Belief g = project_to_simplex(std::move(y));
                return {g, dot(c, g.p) - value(g)};
            }
            case CostFamily::kl_to_prior: {
                double m = kNegInf;
                for (std::size_t j = 0; j < J; ++j) m = std::max(m, c[j] / scale);
                double z = 0.0;
                Vec g(J);
                for (std::size_t j = 0; j < J; ++j) {
                    g[j] = center.p[j] * std::exp(c[j] / scale - m);
                    z += g[j];
                }
                for (double& v : g) v /= z;
                Belief gb(std::move(g));
                // value = kappa * log sum mu_j exp(c_j/kappa), stabilized
                return {gb, scale * (m + std::log(z))};
            }
            case CostFamily::tsallis: {
                // g_j = mu_j (c_j - lam)_+ / (2 kappa), with lam so sum g = 1.
                std::vector<std::size_t> idx(J);
                std::iota(idx.begin(), idx.end(), 0);
                std::sort(idx.begin(), idx.end(),
                          [&](std::size_t a, std::size_t b) { return c[a] > c[b]; });
                double mu_sum = 0.0, muc_sum = 0.0, lam = 0.0;
                std::size_t active = 0;
                for (std::size_t k = 0; k < J; ++k) {
                    mu_sum += center.p[idx[k]];
                    muc_sum += center.p[idx[k]] * c[idx[k]];
                    const double cand = (muc_sum - 2.0 * scale) / mu_sum;
                    const double next_c = (k + 1 < J) ? c[idx[k + 1]] : kNegInf;
                    if (cand >= next_c) {
                        lam = cand;
                        active = k + 1;
                        break;
                    }
                }
                if (active == 0) {  // all coordinates active (numerical fallback)
                    lam = (muc_sum - 2.0 * scale) / mu_sum;
                    active = J;
                }
                Vec g(J, 0.0);
                for (std::size_t k = 0; k < active; ++k)
                    g[idx[k]] = center.p[idx[k]] * (c[idx[k]] - lam) / (2.0 * scale);
                double s = std::accumulate(g.begin(), g.end(), 0.0);
                for (double& v : g) v /= s;
                Belief gb(std::move(g));
                return {gb, dot(c, gb.p) - value(gb)};
            }
        }
        throw Error("unreachable cost family");
    }
};

}  // namespace ri
