#pragma once

#include "ri/support.hpp"

namespace ri {

// Attention allocation plus per-posterior choice rule. Solves produce
// degenerate choices (one alternative per posterior); policies rebuilt from
// choice data may carry nondegenerate ones.
struct PosteriorPolicy {
    std::vector<Belief> posteriors;
    Vec weights;
    // choice[i] lists (alternative index, probability) pairs for posterior i.
    std::vector<std::vector<std::pair<std::size_t, double>>> choice;
};

// Bayes-plausibility residual ||sum_i Q_i gamma_i - mu||_inf.
inline double bayes_residual(const PosteriorPolicy& pol, const Belief& mu) {
    Vec mix(mu.dim(), 0.0);
    for (std::size_t i = 0; i < pol.posteriors.size(); ++i)
        for (std::size_t j = 0; j < mu.dim(); ++j)
            mix[j] += pol.weights[i] * pol.posteriors[i].p[j];
    return linf_dist(mix, mu.p);
}

// Objective value of a feasible policy.
inline double policy_value(const Instance& inst, const PosteriorPolicy& pol,
                           double feas_tol = 1e-6) {
    if (bayes_residual(pol, inst.prior) > feas_tol)
        throw InfeasiblePolicy("policy_value: Bayes plausibility violated");
    double v = 0.0;
    for (std::size_t i = 0; i < pol.posteriors.size(); ++i)
        for (const auto& [a, q] : pol.choice[i])
            v += pol.weights[i] * q * net_utility(inst, a, pol.posteriors[i]);
    return v;
}

struct AssumptionReport {
    bool finite_disturbance = false;       // some alternative available
    bool supported_rank_ok = false;        // tangency matrix has full column rank
    bool distinct_differences = false;     // no parallel utility surfaces
    std::string detail;
    bool all() const {
        return finite_disturbance && supported_rank_ok && distinct_differences;
    }
};

// The optimal policy: posteriors, weights, and alternatives from the tangent
// hyperplane at the prior, with degenerate choices.
inline PosteriorPolicy solve_ri(const Instance& inst, const ConcavifyOptions& opt = {}) {
    if (!any_finite_disturbance(inst))
        throw AssumptionViolation("solve_ri: every disturbance entry is -inf");
    if (!distinct_difference_vectors(inst))
        throw AssumptionViolation("solve_ri: duplicate utility difference vectors");
    if (inst.cost.family != CostFamily::quadratic)
        for (double m : inst.prior.p)
            if (!(m > 0.0))
                throw AssumptionViolation(
                    "solve_ri: boundary prior with a boundary-infinite cost family");
    auto evs = make_evaluators(inst);
    EnvelopeSolution env = concavify_at_prior(evs, inst.prior, opt);
    PosteriorPolicy pol;
    pol.posteriors = env.posteriors;
    pol.weights = env.weights;
    pol.choice.resize(env.posteriors.size());
    for (std::size_t i = 0; i < env.posteriors.size(); ++i)
        pol.choice[i] = {{env.alternatives[i], 1.0}};
    return pol;
}

inline EnvelopeSolution solve_ri_envelope(const Instance& inst,
                                          const ConcavifyOptions& opt = {}) {
    if (!any_finite_disturbance(inst))
        throw AssumptionViolation("solve_ri: every disturbance entry is -inf");
    if (!distinct_difference_vectors(inst))
        throw AssumptionViolation("solve_ri: duplicate utility difference vectors");
    auto evs = make_evaluators(inst);
    return concavify_at_prior(evs, inst.prior, opt);
}

// Per-condition diagnosis; reports rather than throws. The rank condition is
// evaluated at the solved tangent direction, so this performs a solve.
inline AssumptionReport verify_assumptions(const Instance& inst) {
    AssumptionReport rep;
    rep.finite_disturbance = any_finite_disturbance(inst);
    rep.distinct_differences = distinct_difference_vectors(inst);
    if (!rep.finite_disturbance || !rep.distinct_differences) {
        rep.detail = "static conditions failed; tangency rank not evaluated";
        return rep;
    }
    try {
        auto evs = make_evaluators(inst);
        EnvelopeSolution env = concavify_at_prior(evs, inst.prior);
        Mat G = zeros(inst.num_states(), env.posteriors.size());
        for (std::size_t j = 0; j < inst.num_states(); ++j)
            for (std::size_t i = 0; i < env.posteriors.size(); ++i)
                G[j][i] = env.posteriors[i].p[j];
        rep.supported_rank_ok = matrix_rank(G, 1e-9) == env.posteriors.size();
        if (!rep.supported_rank_ok) rep.detail = "supported posteriors linearly dependent";
    } catch (const Error& e) {
        rep.supported_rank_ok = false;
        rep.detail = e.what();
    }
    return rep;
}

}  // namespace ri
