#pragma once

// Brute-force oracles, independent of the production solvers. They enumerate
// feasible policies on belief lattices (or scan the choice-matrix polytope
// directly) and exist only to certify the solvers in tests.

#include "ri/instance.hpp"
#include "ri/sdsc.hpp"

namespace oracle {

using namespace ri;

// Best value over one- and two-point Bayes-plausible policies on a belief grid
// of the given resolution (two states). The one-point policy must sit at the
// prior; straddling pairs get barycentric weights.
inline double grid_policy_value_2(const Instance& inst, double resolution) {
    const double mu = inst.prior.p[0];
    const long n = static_cast<long>(std::llround(1.0 / resolution));
    std::vector<double> env(n + 1);
    for (long i = 0; i <= n; ++i) {
        const double g = static_cast<double>(i) / n;
        env[i] = objective_upper_envelope(inst, Belief({g, 1.0 - g})).first;
    }
    double best = objective_upper_envelope(inst, inst.prior).first;
    const long mu_hi = static_cast<long>(std::ceil(mu * n - 1e-12));
    for (long lo = 0; lo < mu_hi; ++lo) {
        const double glo = static_cast<double>(lo) / n;
        if (env[lo] == kNegInf) continue;
        for (long hi = mu_hi; hi <= n; ++hi) {
            const double ghi = static_cast<double>(hi) / n;
            if (ghi <= mu || env[hi] == kNegInf) continue;
            const double w = (ghi - mu) / (ghi - glo);  // weight on the low point
            const double v = w * env[lo] + (1.0 - w) * env[hi];
            if (v > best) best = v;
        }
    }
    return best;
}

// Lipschitz bound of the envelope over the belief segment, used to convert a
// grid-resolution gap into a value tolerance.
inline double envelope_lipschitz_2(const Instance& inst) {
    double slope = 0.0;
    for (std::size_t a = 0; a < inst.num_alternatives(); ++a) {
        if (inst.disturbance[a] == kNegInf) continue;
        slope = std::max(slope, std::abs(inst.utility[a][0] - inst.utility[a][1]));
    }
    // quadratic / tsallis gradients are bounded on the simplex
    double cost_slope = 4.0 * inst.cost.scale;
    if (inst.cost.family == CostFamily::tsallis) {
        double inv = 0.0;
        for (double m : inst.cost.center.p) inv = std::max(inv, 1.0 / m);
        cost_slope = 2.0 * inst.cost.scale * inv;
    } else if (inst.cost.family == CostFamily::kl_to_prior) {
        cost_slope = 50.0 * inst.cost.scale;  // crude but sufficient for tests
    }
    return slope + cost_slope;
}

// Three states: one-point at the prior, straddling pairs through the prior,
// and all lattice triples with exact nonnegative barycentric weights.
inline double grid_policy_value_3(const Instance& inst, double resolution) {
    std::vector<Belief> pts = simplex_grid(3, resolution);
    std::vector<double> env(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        env[i] = objective_upper_envelope(inst, pts[i]).first;
    const Vec& mu = inst.prior.p;
    double best = objective_upper_envelope(inst, inst.prior).first;
    // pairs: mu on the segment within a tight tolerance
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (env[i] == kNegInf) continue;
        for (std::size_t k = i + 1; k < pts.size(); ++k) {
            if (env[k] == kNegInf) continue;
            const double den = pts[k].p[0] - pts[i].p[0];
            double w = 0.0;
            if (std::abs(den) > 1e-12) {
                w = (pts[k].p[0] - mu[0]) / den;
            } else if (std::abs(pts[k].p[1] - pts[i].p[1]) > 1e-12) {
                w = (pts[k].p[1] - mu[1]) / (pts[k].p[1] - pts[i].p[1]);
            } else {
                continue;
            }
            if (w < -1e-12 || w > 1.0 + 1e-12) continue;
            bool on_segment = true;
            for (int j = 0; j < 3; ++j)
                if (std::abs(w * pts[i].p[j] + (1.0 - w) * pts[k].p[j] - mu[j]) > 1e-9)
                    on_segment = false;
            if (!on_segment) continue;
            const double v = w * env[i] + (1.0 - w) * env[k];
            if (v > best) best = v;
        }
    }
    // triples: exact 3x3 barycentric solve
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (env[i] == kNegInf) continue;
        for (std::size_t k = i + 1; k < pts.size(); ++k) {
            if (env[k] == kNegInf) continue;
            for (std::size_t l = k + 1; l < pts.size(); ++l) {
                if (env[l] == kNegInf) continue;
                Mat A = {{pts[i].p[0], pts[k].p[0], pts[l].p[0]},
                         {pts[i].p[1], pts[k].p[1], pts[l].p[1]},
                         {1.0, 1.0, 1.0}};
                Vec w;
                try {
                    w = solve_linear(std::move(A), {mu[0], mu[1], 1.0});
                } catch (const Error&) {
                    continue;
                }
                if (w[0] < -1e-12 || w[1] < -1e-12 || w[2] < -1e-12) continue;
                const double v = w[0] * env[i] + w[1] * env[k] + w[2] * env[l];
                if (v > best) best = v;
            }
        }
    }
    return best;
}

// Direct scan of the stochastic-matrix polytope: every column of the
// conditional matrix runs over a lattice on the alternative simplex, followed
// by a compass polish of the best point. Never touches either solver.
inline double sdsc_scan_value(const Instance& inst, int per_column) {
    const std::size_t K = inst.num_alternatives(), J = inst.num_states();
    std::vector<Vec> column_choices;
    {
        // lattice on the K-simplex
        std::function<void(Vec&, std::size_t, long, long)> rec = [&](Vec& cur, std::size_t a,
                                                                     long left, long n) {
            if (a + 1 == K) {
                cur[a] = static_cast<double>(left) / n;
                column_choices.push_back(cur);
                return;
            }
            for (long t = 0; t <= left; ++t) {
                cur[a] = static_cast<double>(t) / n;
                rec(cur, a + 1, left - t, n);
            }
        };
        Vec cur(K, 0.0);
        rec(cur, 0, per_column, per_column);
    }
    const std::size_t C = column_choices.size();
    std::vector<std::size_t> pick(J, 0);
    double best = kNegInf;
    Mat best_cond;
    for (;;) {
        Mat cond = zeros(K, J);
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t a = 0; a < K; ++a) cond[a][j] = column_choices[pick[j]][a];
        const double v = sdsc_objective(inst, make_sdsc(cond, inst.prior));
        if (v > best) {
            best = v;
            best_cond = cond;
        }
        std::size_t j = 0;
        while (j < J && ++pick[j] == C) pick[j++] = 0;
        if (j == J) break;
    }
    // compass polish on pairs of entries within a column
    double step = 1.0 / per_column;
    while (step > 1e-7) {
        bool moved = false;
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t a = 0; a < K; ++a)
                for (std::size_t b = 0; b < K; ++b) {
                    if (a == b) continue;
                    if (best_cond[b][j] < step) continue;
                    Mat cand = best_cond;
                    cand[a][j] += step;
                    cand[b][j] -= step;
                    const double v = sdsc_objective(inst, make_sdsc(cand, inst.prior));
                    if (v > best + 1e-15) {
                        best = v;
                        best_cond = std::move(cand);
                        moved = true;
                    }
                }
        if (!moved) step *= 0.5;
    }
    return best;
}

}  // namespace oracle
