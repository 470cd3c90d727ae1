#pragma once

#include <functional>
#include <optional>
#include <string>

#include "ri/cost.hpp"

namespace ri {

// One decision problem: alternatives, states, prior, utility table, a realized
// disturbance vector (entries of -inf mark unavailable alternatives), and an
// attention cost. Immutable after construction; solves are pure.
struct Instance {
    std::vector<std::string> alternatives;  // size K
    std::vector<std::string> states;        // size J
    Belief prior;
    Mat utility;      // K x J
    Vec disturbance;  // size K, may contain -inf
    AttentionCost cost;

    std::size_t num_alternatives() const { return alternatives.size(); }
    std::size_t num_states() const { return states.size(); }
};

// gamma . u_a + E(a) - T(gamma); -inf propagates.
inline double net_utility(const Instance& inst, std::size_t a, const Belief& gamma) {
    if (inst.disturbance[a] == kNegInf) return kNegInf;
    const double t = inst.cost.value(gamma);
    if (t == kPosInf) return kNegInf;
    return dot(gamma.p, inst.utility[a]) + inst.disturbance[a] - t;
}

// Max over alternatives with the argmax; ties broken by first index.
inline std::pair<double, std::size_t> objective_upper_envelope(const Instance& inst,
                                                               const Belief& gamma) {
    double best = kNegInf;
    std::size_t arg = 0;
    for (std::size_t a = 0; a < inst.num_alternatives(); ++a) {
        const double v = net_utility(inst, a, gamma);
        if (v > best) {
            best = v;
            arg = a;
        }
    }
    return {best, arg};
}

// Distinctness of utility-difference vectors (u_a(w_j) - u_a(w_J)) across
// alternatives: rules out parallel net-utility surfaces and hence ties at
// optimal posteriors.
inline bool distinct_difference_vectors(const Instance& inst, double tol = 1e-12) {
    const std::size_t K = inst.num_alternatives(), J = inst.num_states();
    for (std::size_t a = 0; a < K; ++a) {
        if (inst.disturbance[a] == kNegInf) continue;
        for (std::size_t b = a + 1; b < K; ++b) {
            if (inst.disturbance[b] == kNegInf) continue;
            double d = 0.0;
            for (std::size_t j = 0; j + 1 < J; ++j) {
                const double da = inst.utility[a][j] - inst.utility[a][J - 1];
                const double db = inst.utility[b][j] - inst.utility[b][J - 1];
                d = std::max(d, std::abs(da - db));
            }
            if (d <= tol) return false;
        }
    }
    return true;
}

inline bool any_finite_disturbance(const Instance& inst) {
    for (double e : inst.disturbance)
        if (e != kNegInf) return true;
    return false;
}

// Concave per-alternative objective over the simplex, as used by the support
// function. `value` may return -inf. `exact_tilted`, when present, returns the
// exact maximizer of value(g) - c.g over the simplex; otherwise the generic
// projected-gradient path is used with `grad`.
struct Evaluator {
    std::function<double(const Belief&)> value;
    std::function<Vec(const Belief&)> grad;  // optional
    std::function<std::pair<Belief, double>(const Vec&)> exact_tilted;  // optional
    bool finite = true;  // false when the alternative is unavailable everywhere
};

inline Evaluator make_evaluator(const Instance& inst, std::size_t a) {
    Evaluator ev;
    if (inst.disturbance[a] == kNegInf) {
        ev.finite = false;
        ev.value = [](const Belief&) { return kNegInf; };
        return ev;
    }
    ev.value = [&inst, a](const Belief& g) { return net_utility(inst, a, g); };
    ev.grad = [&inst, a](const Belief& g) {
        Vec gr = inst.cost.gradient(g);
        for (std::size_t j = 0; j < gr.size(); ++j) gr[j] = inst.utility[a][j] - gr[j];
        return gr;
    };
    ev.exact_tilted = [&inst, a](const Vec& tilt) {
        Vec c(inst.num_states());
        for (std::size_t j = 0; j < c.size(); ++j) c[j] = inst.utility[a][j] - tilt[j];
        auto [g, v] = inst.cost.tilted_argmax(c);
        return std::make_pair(g, v + inst.disturbance[a]);
    };
    return ev;
}

inline std::vector<Evaluator> make_evaluators(const Instance& inst) {
    std::vector<Evaluator> evs;
    evs.reserve(inst.num_alternatives());
    for (std::size_t a = 0; a < inst.num_alternatives(); ++a)
        evs.push_back(make_evaluator(inst, a));
    return evs;
}

}  // namespace ri
