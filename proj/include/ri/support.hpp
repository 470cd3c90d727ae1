#pragma once

#include <optional>

#include "ri/instance.hpp"

namespace ri {

// Per-alternative tangency data and the support value of the hypograph of the
// net-utility envelope in a given direction.
struct SupportResult {
    double value = kNegInf;                          // support value
    std::size_t argmax_alternative = 0;              // strict best branch
    std::vector<Belief> supported_posteriors;        // tangency set
    std::vector<std::size_t> supported_alternatives; // parallel to the above
    std::vector<std::optional<std::pair<Belief, double>>> per_alternative_argmax;

    const Belief& argmax_posterior() const {
        return per_alternative_argmax[argmax_alternative]->first;
    }
};

struct ConcavifyOptions {
    double theta_tol = 1e-14;       // relative bracket width at termination
    double tie_rel_tol = 1e-7;      // membership in the tangency set
    double bayes_tol = 1e-8;        // prior-as-mixture residual
    int max_bracket_doublings = 60;
    int max_bisect_iters = 200;
};

namespace detail {

inline Vec extended_theta(const Direction& d, std::size_t J) {
    Vec t(J, 0.0);
    for (std::size_t j = 0; j < d.dim(); ++j) t[j] = d.theta[j];
    return t;
}

// Generic fallback for evaluators without a closed-form tilted maximizer:
// damped projected gradient ascent on the simplex, then a local pattern-search
// polish. Strict concavity of the objective makes any local method global.
inline std::pair<Belief, double> pga_tilted_argmax(const Evaluator& ev, const Vec& tilt,
                                                   std::size_t J) {
    auto objective = [&](const Belief& g) {
        const double v = ev.value(g);
        return v == kNegInf ? kNegInf : v - dot(tilt, g.p);
    };
    Belief g(Vec(J, 1.0 / static_cast<double>(J)));
    double f = objective(g);
    double step = 1.0;
    for (int it = 0; it < 400; ++it) {
        Vec grad;
        if (ev.grad) {
            grad = ev.grad(g);
        } else {
            grad.assign(J, 0.0);
            const double h = 1e-7;
            for (std::size_t j = 0; j < J; ++j) {
                Vec up = g.p, dn = g.p;
                up[j] += h;
                dn[j] -= h;
                grad[j] = (ev.value(Belief(up)) - ev.value(Belief(dn))) / (2.0 * h);
            }
        }
        for (std::size_t j = 0; j < J; ++j) grad[j] -= tilt[j];
        bool improved = false;
        for (int bt = 0; bt < 40; ++bt) {
            Vec y = g.p;
            for (std::size_t j = 0; j < J; ++j) y[j] += step * grad[j];
            Belief cand = project_to_simplex(std::move(y));
            const double fc = objective(cand);
            if (fc > f + 1e-16) {
                g = std::move(cand);
                f = fc;
                improved = true;
                step *= 1.6;
                break;
            }
            step *= 0.5;
        }
        if (!improved && step < 1e-14) break;
    }
    // compass polish over coordinate pair moves
    double radius = 1e-4;
    while (radius > 1e-12) {
        bool moved = false;
        for (std::size_t i = 0; i < J && !moved; ++i)
            for (std::size_t j = 0; j < J && !moved; ++j) {
                if (i == j) continue;
                Vec y = g.p;
                const double d = std::min(radius, y[j]);
                y[i] += d;
                y[j] -= d;
                Belief cand(std::move(y));
                const double fc = objective(cand);
                if (fc > f) {
                    g = std::move(cand);
                    f = fc;
                    moved = true;
                }
            }
        if (!moved) radius *= 0.5;
    }
    return {g, f};
}

inline std::pair<Belief, double> tilted_argmax(const Evaluator& ev, const Vec& tilt,
                                               std::size_t J) {
    if (ev.exact_tilted) return ev.exact_tilted(tilt);
    return pga_tilted_argmax(ev, tilt, J);
}

}  // namespace detail

// Support value / tangency set of the upper envelope of the evaluators in the
// slope direction theta. Throws NonFinite when every evaluator is -inf.
inline SupportResult support_function(const std::vector<Evaluator>& evaluators,
                                      const Direction& theta, std::size_t J,
                                      double tie_rel_tol = 1e-7) {
    SupportResult res;
    res.per_alternative_argmax.assign(evaluators.size(), std::nullopt);
    const Vec tilt = detail::extended_theta(theta, J);
    for (std::size_t a = 0; a < evaluators.size(); ++a) {
        if (!evaluators[a].finite) continue;
        auto [g, v] = detail::tilted_argmax(evaluators[a], tilt, J);
        if (v == kNegInf) continue;
        res.per_alternative_argmax[a] = std::make_pair(g, v);
        if (v > res.value) {
            res.value = v;
            res.argmax_alternative = a;
        }
    }
    if (res.value == kNegInf)
        throw NonFinite("support_function: every evaluator is -inf");
    const double tie_tol = tie_rel_tol * (std::abs(res.value) + 1.0);
    for (std::size_t a = 0; a < evaluators.size(); ++a) {
        if (!res.per_alternative_argmax[a]) continue;
        const auto& [g, v] = *res.per_alternative_argmax[a];
        if (v >= res.value - tie_tol) {
            res.supported_posteriors.push_back(g);
            res.supported_alternatives.push_back(a);
        }
    }
    return res;
}

// Tangency solution at the prior: value of the least concave majorant of the
// envelope at mu, the posteriors supported by the tangent hyperplane, and the
// mixture weights averaging them back to mu.
struct EnvelopeSolution {
    double value = kNegInf;
    std::vector<Belief> posteriors;
    Vec weights;
    Direction optimal_direction;
    Vec values_at_posteriors;                 // envelope value at each posterior
    std::vector<std::size_t> alternatives;    // attaining alternative per posterior
};

namespace detail {

struct DualEval {
    double g = 0.0;          // dual objective: support value + theta . mu
    double subgrad = 0.0;    // along the probed coordinate: mu_c - gamma_c
    SupportResult support;
};

// The dual objective is convex in theta (pointwise sup of affine functions),
// so its coordinate subgradient mu_c - gamma_c(theta) is monotone and the
// minimizer is the subgradient's zero crossing. Bisection on the sign reaches
// machine precision where value-comparison search would stall at sqrt(eps) on
// the flat side of a kink. J=2 is one pass; J=3 nests one inside the other
// (partial minimization of a jointly convex function stays convex).
template <class Sub>
inline void expand_bracket(Sub&& subgrad, double& lo, double& hi, int max_doublings) {
    double r = std::max(1.0, hi - lo);
    int n = 0;
    while (subgrad(lo) > 0.0) {
        lo -= r;
        r *= 2.0;
        if (++n > max_doublings) throw NoConvergence("dual bracket expansion failed (lo)");
    }
    r = std::max(1.0, hi - lo);
    n = 0;
    while (subgrad(hi) < 0.0) {
        hi += r;
        r *= 2.0;
        if (++n > max_doublings) throw NoConvergence("dual bracket expansion failed (hi)");
    }
}

template <class Sub>
inline double bisect_subgradient(Sub&& subgrad, double lo, double hi, double rel_tol,
                                 int max_iter) {
    for (int it = 0;
         it < max_iter && (hi - lo) > rel_tol * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (subgrad(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

inline EnvelopeSolution concavify_at_prior(const std::vector<Evaluator>& evaluators,
                                           const Belief& mu,
                                           const ConcavifyOptions& opt = {}) {
    const std::size_t J = mu.dim();
    if (J != 2 && J != 3)
        throw ConfigError("concavify_at_prior: only 2 or 3 states supported");

    auto eval_dual = [&](const Vec& th) {
        Direction d(th);
        SupportResult s = support_function(evaluators, d, J, opt.tie_rel_tol);
        return std::make_pair(s.value + d.dot_belief(mu), std::move(s));
    };

    // Initial radius sized to the envelope's magnitude; bracket expansion
    // below fixes it when the tangent slope is larger.
    double radius = 1.0;
    {
        Direction zero(Vec(J - 1, 0.0));
        SupportResult s0 = support_function(evaluators, zero, J, opt.tie_rel_tol);
        radius = std::abs(s0.value) + 1.0;
    }

    Vec theta_hat(J - 1, 0.0);
    if (J == 2) {
        auto sub = [&](double t) {
            auto [g, s] = eval_dual({t});
            (void)g;
            return mu.p[0] - s.argmax_posterior().p[0];
        };
        double lo = -radius, hi = radius;
        detail::expand_bracket(sub, lo, hi, opt.max_bracket_doublings);
        theta_hat = {detail::bisect_subgradient(sub, lo, hi, opt.theta_tol,
                                                opt.max_bisect_iters)};
    } else {
        // inner: argmin over t2 at fixed t1
        auto inner = [&](double t1) {
            auto sub2 = [&](double t2) {
                auto [g, s] = eval_dual({t1, t2});
                (void)g;
                return mu.p[1] - s.argmax_posterior().p[1];
            };
            double lo = -radius, hi = radius;
            detail::expand_bracket(sub2, lo, hi, opt.max_bracket_doublings);
            return detail::bisect_subgradient(sub2, lo, hi, opt.theta_tol,
                                              opt.max_bisect_iters);
        };
        // A valid subgradient of the partially minimized dual G(t1): over the
        // branches active at the inner optimum, zero the t2 component by a
        // convex combination and read off the t1 component. Using the raw
        // argmax branch instead can flip the sign at inner kinks and steer the
        // bisection to a non-optimal point.
        auto outer_sub = [&](double t1) {
            const double t2 = inner(t1);
            auto [g, s] = eval_dual({t1, t2});
            (void)g;
            std::vector<std::pair<double, double>> w;
            for (const Belief& gamma : s.supported_posteriors)
                w.push_back({mu.p[0] - gamma.p[0], mu.p[1] - gamma.p[1]});
            std::size_t pos = w.size(), neg = w.size();
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (w[i].second > 0 && (pos == w.size() || w[i].second > w[pos].second))
                    pos = i;
                if (w[i].second < 0 && (neg == w.size() || w[i].second < w[neg].second))
                    neg = i;
            }
            if (pos == w.size() || neg == w.size())
                return mu.p[0] - s.argmax_posterior().p[0];
            const double lam = -w[neg].second / (w[pos].second - w[neg].second);
            return lam * w[pos].first + (1.0 - lam) * w[neg].first;
        };
        double lo = -radius, hi = radius;
        detail::expand_bracket(outer_sub, lo, hi, opt.max_bracket_doublings);
        const double t1m = detail::bisect_subgradient(outer_sub, lo, hi, opt.theta_tol,
                                                      opt.max_bisect_iters);
        theta_hat = {t1m, inner(t1m)};
    }

    auto [gval, support] = eval_dual(theta_hat);

    // Mixture weights over the tangency set. The minimal feasible support is
    // the Carathéodory representation; exact ties can park extra posteriors on
    // the tangent hyperplane that carry zero weight, and subsets containing
    // them are skipped by taking the smallest support that reaches the prior.
    EnvelopeSolution sol;
    sol.optimal_direction = Direction(theta_hat);
    const std::size_t m = support.supported_posteriors.size();
    std::vector<std::size_t> chosen;
    Vec weights;
    const std::size_t limit = std::min(m, J);
    for (std::size_t size = 1; size <= limit && chosen.empty(); ++size) {
        double best_resid = kPosInf;
        std::vector<std::size_t> idx(size);
        std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start,
                                                                std::size_t depth) {
            if (depth == size) {
                std::vector<Belief> pts;
                for (std::size_t i : idx) pts.push_back(support.supported_posteriors[i]);
                try {
                    Vec w = caratheodory_weights(pts, mu, 1e-9, opt.bayes_tol);
                    double resid = 0.0;
                    for (std::size_t j = 0; j < J; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < pts.size(); ++i)
                            s += w[i] * pts[i].p[j];
                        resid = std::max(resid, std::abs(s - mu.p[j]));
                    }
                    if (resid < best_resid) {
                        best_resid = resid;
                        chosen = idx;
                        weights = std::move(w);
                    }
                } catch (const Error&) {
                }
                return;
            }
            for (std::size_t i = start; i + (size - depth) <= m; ++i) {
                idx[depth] = i;
                rec(i + 1, depth + 1);
            }
        };
        rec(0, 0);
    }
    if (chosen.empty())
        throw DegenerateSupport(
            "concavify_at_prior: prior not expressible as a mixture of supported "
            "posteriors");

    double value = 0.0;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        if (weights[k] < 1e-12) continue;
        const std::size_t i = chosen[k];
        sol.posteriors.push_back(support.supported_posteriors[i]);
        sol.alternatives.push_back(support.supported_alternatives[i]);
        sol.weights.push_back(weights[k]);
        const double v =
            evaluators[support.supported_alternatives[i]].value(support.supported_posteriors[i]);
        sol.values_at_posteriors.push_back(v);
        value += weights[k] * v;
    }
    double wsum = 0.0;
    for (double w : sol.weights) wsum += w;
    for (double& w : sol.weights) w /= wsum;
    value /= wsum;
    sol.value = value;
    if (std::abs(sol.value - gval) > 1e-6 * (1.0 + std::abs(gval)))
        throw NoConvergence("concavify_at_prior: primal/dual gap " +
                            fmt17(std::abs(sol.value - gval)));
    return sol;
}

}  // namespace ri
