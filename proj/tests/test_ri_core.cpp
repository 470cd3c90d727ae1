#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle.hpp"
#include "ri/random_instance.hpp"
#include "ri/solve.hpp"
#include "test_util.hpp"

using namespace ri;

TEST_CASE("attention cost families") {
    Belief mu({0.5, 0.5});
    for (CostFamily fam :
         {CostFamily::quadratic, CostFamily::kl_to_prior, CostFamily::tsallis}) {
        AttentionCost cost(fam, 1.7, mu);
        CHECK(cost.value(mu) == 0.0);  // exactly zero at the center
        CHECK(cost.value(Belief({0.8, 0.2})) > 0.0);
        // midpoint convexity spot check
        Belief g1({0.7, 0.3}), g2({0.2, 0.8}), gm({0.45, 0.55});
        CHECK(cost.value(gm) <= 0.5 * cost.value(g1) + 0.5 * cost.value(g2) + 1e-12);
        // tilted argmax matches a fine scan, including boundary-clipped tilts
        for (Vec tilt : {Vec{1.3, -0.4}, Vec{6.0, -6.0}}) {
            auto [g, v] = cost.tilted_argmax(tilt);
            double best = kNegInf;
            for (const Belief& q : simplex_grid(2, 1e-5)) {
                const double cv = cost.value(q);
                if (cv == kPosInf) continue;
                best = std::max(best, dot(tilt, q.p) - cv);
            }
            CHECK(v == doctest::Approx(best).epsilon(1e-7));
            CHECK(dot(tilt, g.p) - cost.value(g) == doctest::Approx(v).epsilon(1e-12));
        }
    }
    SUBCASE("boundary-infinite families require interior priors") {
        CHECK_THROWS_AS(AttentionCost(CostFamily::kl_to_prior, 1.0, Belief({1.0, 0.0})),
                        ConfigError);
        CHECK_NOTHROW(AttentionCost(CostFamily::quadratic, 1.0, Belief({1.0, 0.0})));
    }
}

TEST_CASE("net utility on the worked example") {
    Instance inst = testutil::example1();
    CHECK(net_utility(inst, 0, Belief({1.0, 0.0})) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(net_utility(inst, 1, Belief({0.5, 0.5})) == doctest::Approx(9.5).epsilon(1e-12));
    // zero cost at the prior for any alternative
    CHECK(net_utility(inst, 0, inst.prior) == doctest::Approx(0.5 * 15 + 1).epsilon(1e-12));
    SUBCASE("unavailable alternative propagates -inf") {
        inst.disturbance[0] = kNegInf;
        CHECK(net_utility(inst, 0, inst.prior) == kNegInf);
    }
}

TEST_CASE("upper envelope and tie-breaking") {
    Instance inst = testutil::example1();
    auto [v_half, a_half] = objective_upper_envelope(inst, Belief({0.5, 0.5}));
    CHECK(v_half == doctest::Approx(9.5).epsilon(1e-12));
    CHECK(a_half == 1);
    auto [v0, a0] = objective_upper_envelope(inst, Belief({0.0, 1.0}));
    CHECK(v0 == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a0 == 0);
    SUBCASE("single alternative is the identity") {
        Instance one = testutil::single_alternative(2.0, 0.0);
        auto [v, a] = objective_upper_envelope(one, Belief({0.3, 0.7}));
        CHECK(a == 0);
        CHECK(v == doctest::Approx(net_utility(one, 0, Belief({0.3, 0.7}))));
    }
    SUBCASE("exact tie resolves to the first index") {
        Instance tie = testutil::example1();
        tie.utility[1] = {11, 6};  // a + 1 everywhere
        tie.disturbance = {1, 0};  // equal net utility at every belief
        auto [v, a] = objective_upper_envelope(tie, Belief({0.5, 0.5}));
        (void)v;
        CHECK(a == 0);
    }
}

TEST_CASE("solve_ri on the worked example") {
    Instance inst = testutil::example1();
    PosteriorPolicy pol = solve_ri(inst);
    REQUIRE(pol.posteriors.size() == 1);
    CHECK(pol.posteriors[0].p[0] == doctest::Approx(0.5).epsilon(1e-9));
    REQUIRE(pol.choice[0].size() == 1);
    CHECK(pol.choice[0][0].first == 1);
    CHECK(policy_value(inst, pol) == doctest::Approx(9.5).epsilon(1e-9));
}

TEST_CASE("solve_ri limits and structure") {
    SUBCASE("dominant cost pins the posterior at the prior") {
        Instance inst = testutil::example1();
        inst.cost = AttentionCost(CostFamily::quadratic, 1e7, inst.prior);
        PosteriorPolicy pol = solve_ri(inst);
        REQUIRE(pol.posteriors.size() == 1);
        CHECK(linf_dist(pol.posteriors[0].p, inst.prior.p) < 1e-6);
        // argmax of the prior expected utility: b gives 7.5 + 2
        CHECK(pol.choice[0][0].first == 1);
        CHECK(policy_value(inst, pol) == doctest::Approx(9.5).epsilon(1e-6));
    }
    SUBCASE("symmetric instance maps posteriors to distinct alternatives") {
        Instance inst = testutil::symmetric_two_state();
        PosteriorPolicy pol = solve_ri(inst);
        REQUIRE(pol.posteriors.size() == 2);
        CHECK(pol.choice[0][0].first != pol.choice[1][0].first);
        CHECK(policy_value(inst, pol) == doctest::Approx(6.5625).epsilon(1e-9));
    }
    SUBCASE("unavailable alternative is never chosen") {
        Instance inst = testutil::example1();
        inst.disturbance[1] = kNegInf;
        PosteriorPolicy pol = solve_ri(inst);
        for (const auto& ch : pol.choice)
            for (const auto& [a, q] : ch) CHECK(a == 0);
    }
    SUBCASE("assumption violations throw before solving") {
        Instance dup = testutil::example1();
        dup.utility[1] = dup.utility[0];
        CHECK_THROWS_AS(solve_ri(dup), AssumptionViolation);
        Instance broke = testutil::example1();
        broke.disturbance = {kNegInf, kNegInf};
        CHECK_THROWS_AS(solve_ri(broke), AssumptionViolation);
    }
}

TEST_CASE("policy_value") {
    Instance inst = testutil::example1();
    SUBCASE("one-point policy at the prior") {
        PosteriorPolicy pol;
        pol.posteriors = {inst.prior};
        pol.weights = {1.0};
        pol.choice = {{{0, 1.0}}};
        CHECK(policy_value(inst, pol) == doctest::Approx(8.5).epsilon(1e-12));
    }
    SUBCASE("forced full-information policy is suboptimal") {
        PosteriorPolicy pol;
        pol.posteriors = {Belief({0.0, 1.0}), Belief({1.0, 0.0})};
        pol.weights = {0.5, 0.5};
        pol.choice = {{{0, 1.0}}, {{1, 1.0}}};
        // direct evaluation: (N_a(0) + N_b(1)) / 2 = (5 + 13) / 2
        CHECK(policy_value(inst, pol) == doctest::Approx(9.0).epsilon(1e-12));
        CHECK(policy_value(inst, pol) < 9.5);
    }
    SUBCASE("infeasible mixtures are rejected") {
        PosteriorPolicy pol;
        pol.posteriors = {Belief({0.9, 0.1})};
        pol.weights = {1.0};
        pol.choice = {{{0, 1.0}}};
        CHECK_THROWS_AS(policy_value(inst, pol), InfeasiblePolicy);
    }
}

TEST_CASE("verify_assumptions reports per condition") {
    SUBCASE("worked example passes") {
        AssumptionReport rep = verify_assumptions(testutil::example1());
        CHECK(rep.finite_disturbance);
        CHECK(rep.supported_rank_ok);
        CHECK(rep.distinct_differences);
        CHECK(rep.all());
    }
    SUBCASE("duplicate utilities fail the slope condition") {
        Instance inst = testutil::example1();
        inst.utility[1] = inst.utility[0];
        AssumptionReport rep = verify_assumptions(inst);
        CHECK_FALSE(rep.distinct_differences);
        CHECK_FALSE(rep.all());
    }
    SUBCASE("all-unavailable fails finiteness") {
        Instance inst = testutil::example1();
        inst.disturbance = {kNegInf, kNegInf};
        AssumptionReport rep = verify_assumptions(inst);
        CHECK_FALSE(rep.finite_disturbance);
    }
}

TEST_CASE("optimality certificate and uniqueness on random instances") {
    for (std::uint64_t seed = 21; seed <= 32; ++seed) {
        CostFamily fam = seed % 3 == 0   ? CostFamily::kl_to_prior
                         : seed % 3 == 1 ? CostFamily::tsallis
                                         : CostFamily::quadratic;
        Instance inst = make_random_instance(2, 2 + seed % 3, fam, seed);
        CAPTURE(seed);
        PosteriorPolicy pol = solve_ri(inst);
        const double v = policy_value(inst, pol);

        // degenerate choices, one atom each
        for (const auto& ch : pol.choice) {
            REQUIRE(ch.size() == 1);
            CHECK(ch[0].second == doctest::Approx(1.0));
        }

        // beats every grid policy up to resolution slack
        const double res = 2e-3;
        const double oracle_best = oracle::grid_policy_value_2(inst, res);
        CHECK(v >= oracle_best - 1e-9);

        // re-solve with a perturbed dual bracket: same posteriors
        ConcavifyOptions opt;
        opt.theta_tol = 1e-13;
        PosteriorPolicy pol2 = solve_ri(inst, opt);
        REQUIRE(pol2.posteriors.size() == pol.posteriors.size());
        for (std::size_t i = 0; i < pol.posteriors.size(); ++i)
            CHECK(linf_dist(pol.posteriors[i].p, pol2.posteriors[i].p) < 1e-6);
    }
}

TEST_CASE("location invariance of the argmax structure") {
    Instance inst = make_random_instance(2, 3, CostFamily::quadratic, 77);
    PosteriorPolicy p0 = solve_ri(inst);
    Instance shifted = inst;
    for (auto& row : shifted.utility)
        for (double& u : row) u += 2.5;
    PosteriorPolicy p1 = solve_ri(shifted);
    REQUIRE(p1.posteriors.size() == p0.posteriors.size());
    for (std::size_t i = 0; i < p0.posteriors.size(); ++i) {
        CHECK(linf_dist(p0.posteriors[i].p, p1.posteriors[i].p) < 1e-7);
        CHECK(std::abs(p0.weights[i] - p1.weights[i]) < 1e-7);
        CHECK(p0.choice[i][0].first == p1.choice[i][0].first);
    }
    CHECK(policy_value(shifted, p1) - policy_value(inst, p0) ==
          doctest::Approx(2.5).epsilon(1e-9));
}
