#pragma once

#include "ri/instance.hpp"
#include "ri/rng.hpp"

namespace ri {

// Seeded instance generator for equivalence experiments: utilities uniform on
// [0, 10], Gumbel disturbances, and a cost scale drawn lognormal around 2.
inline Instance make_random_instance(std::size_t J, std::size_t K, CostFamily family,
                                     std::uint64_t seed) {
    SplitMix64 rng = draw_rng(seed, 0x5eed);
    std::vector<std::string> alts, states;
    for (std::size_t a = 0; a < K; ++a) alts.push_back(std::string(1, char('a' + a)));
    for (std::size_t j = 0; j < J; ++j) states.push_back("w" + std::to_string(j + 1));
    Vec prior(J, 1.0 / static_cast<double>(J));
    Mat utility = zeros(K, J);
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t j = 0; j < J; ++j) utility[a][j] = 10.0 * rng.u01();
    Vec e(K);
    for (std::size_t a = 0; a < K; ++a) e[a] = sample_gumbel(rng, 0.0, 1.0);
    const double kappa = sample_lognormal(rng, std::log(2.0), 0.25);
    return Instance{std::move(alts), std::move(states), Belief(std::move(prior)),
                    std::move(utility), std::move(e),
                    AttentionCost(family, kappa, Belief(Vec(J, 1.0 / static_cast<double>(J))))};
}

}  // namespace ri
