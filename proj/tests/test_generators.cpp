#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "jccmdp/chance.hpp"
#include "jccmdp/generators.hpp"

using namespace jccmdp;

namespace {

QueueingConfig small_queue(std::uint64_t seed = 7, int L = 4) {
    QueueingConfig cfg;
    cfg.max_queue_length = L;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("queueing kernel rows match the transition law") {
    const auto [inst, unc] = queueing_instance(small_queue());
    const QueueingConfig cfg = small_queue();
    const int n2 = static_cast<int>(cfg.admission_levels.size());
    // (a1, a2) = (0.2, 0): service index 0, admission index 0
    const int a = 0 * n2 + 0;
    for (int s = 1; s < cfg.max_queue_length; ++s) {
        const int p = inst.pair_index(s, a);
        CHECK(inst.kernel_prob(p, s - 1) == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(inst.kernel_prob(p, s) == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(inst.kernel_prob(p, s + 1) == 0.0);
    }
    // full-queue rows: p(L-1|L) = a1, p(L|L) = 1 - a1 for every admission level
    const int L = cfg.max_queue_length;
    for (std::size_t i1 = 0; i1 < cfg.service_levels.size(); ++i1)
        for (int i2 = 0; i2 < n2; ++i2) {
            const int p = inst.pair_index(L, static_cast<int>(i1) * n2 + i2);
            CHECK(inst.kernel_prob(p, L - 1) ==
                  doctest::Approx(cfg.service_levels[i1]).epsilon(1e-15));
            CHECK(inst.kernel_prob(p, L) ==
                  doctest::Approx(1.0 - cfg.service_levels[i1]).epsilon(1e-15));
        }
    // empty-queue rows
    for (std::size_t i1 = 0; i1 < cfg.service_levels.size(); ++i1)
        for (int i2 = 0; i2 < n2; ++i2) {
            const double a1 = cfg.service_levels[i1];
            const double a2 = cfg.admission_levels[i2];
            const int p = inst.pair_index(0, static_cast<int>(i1) * n2 + i2);
            CHECK(inst.kernel_prob(p, 1) ==
                  doctest::Approx((1.0 - a1) * a2).epsilon(1e-15));
            CHECK(inst.kernel_prob(p, 0) ==
                  doctest::Approx(1.0 - (1.0 - a1) * a2).epsilon(1e-15));
        }
    // every row sums to exactly one within 1e-12 (validate() checks this too)
    for (int p = 0; p < inst.num_pairs(); ++p) {
        double sum = 0.0;
        for (const auto& [s2, pr] : inst.kernel[p]) sum += pr;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("queueing mean costs follow the stated rules") {
    const QueueingConfig cfg = small_queue();
    const auto [inst, unc] = queueing_instance(cfg);
    const int n2 = static_cast<int>(cfg.admission_levels.size());
    for (int s = 0; s <= cfg.max_queue_length; ++s)
        for (std::size_t i1 = 0; i1 < cfg.service_levels.size(); ++i1)
            for (int i2 = 0; i2 < n2; ++i2) {
                const int p = inst.pair_index(s, static_cast<int>(i1) * n2 + i2);
                CHECK(unc.objective.mean[p] == doctest::Approx(s));
                CHECK(unc.constraints[0].mean[p] ==
                      doctest::Approx(3.0 * std::pow(1.0 + cfg.service_levels[i1], 2)));
                CHECK(unc.constraints[1].mean[p] ==
                      doctest::Approx(10.0 - 3.0 * cfg.admission_levels[i2]));
            }
    CHECK(inst.budgets[0] == doctest::Approx(11.30));
    CHECK(inst.budgets[1] == doctest::Approx(11.35));
    // bounds straddle means, sigmas match the diagonal covariance
    for (int p = 0; p < inst.num_pairs(); ++p) {
        CHECK((*unc.objective.lower)[p] <= unc.objective.mean[p]);
        CHECK((*unc.objective.upper)[p] >= unc.objective.mean[p]);
        CHECK((*unc.objective.subgaussian)[p] ==
              doctest::Approx(std::sqrt((*unc.objective.diag_covariance)[p])));
    }
}

TEST_CASE("garnet branching structure") {
    SUBCASE("branching 1 gives deterministic transitions") {
        GarnetConfig cfg;
        cfg.num_states = 6;
        cfg.num_actions = 2;
        cfg.branching = 1;
        cfg.num_constraints = 1;
        cfg.seed = 3;
        const GarnetInstance g = garnet_instance(cfg);
        for (int p = 0; p < g.instance.num_pairs(); ++p) {
            REQUIRE(g.instance.kernel[p].size() == 1);
            CHECK(g.instance.kernel[p][0].second == 1.0);
        }
    }
    SUBCASE("branching B_F yields exactly B_F distinct reachable states") {
        GarnetConfig cfg;
        cfg.num_states = 9;
        cfg.num_actions = 3;
        cfg.branching = 4;
        cfg.num_constraints = 2;
        cfg.seed = 5;
        const GarnetInstance g = garnet_instance(cfg);
        for (int p = 0; p < g.instance.num_pairs(); ++p) {
            REQUIRE(g.instance.kernel[p].size() == 4);
            std::vector<int> states;
            double sum = 0.0;
            for (const auto& [s2, pr] : g.instance.kernel[p]) {
                states.push_back(s2);
                sum += pr;
                CHECK(pr >= 0.0);
            }
            std::sort(states.begin(), states.end());
            CHECK(std::adjacent_find(states.begin(), states.end()) == states.end());
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
    SUBCASE("branching above |S| is rejected") {
        GarnetConfig cfg;
        cfg.num_states = 3;
        cfg.branching = 4;
        CHECK_THROWS_AS(garnet_instance(cfg), std::invalid_argument);
    }
}

TEST_CASE("cost bounds from samples") {
    const Vec mean = (Vec(3) << 1.0, -2.0, 5.0).finished();
    SUBCASE("zero covariance collapses the bounds onto the mean") {
        const auto [up, lo] = cost_bounds_from_samples(mean, Vec::Zero(3), 3000, 1);
        CHECK((up - mean).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK((lo - mean).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("3000 draws stay within 8 sigma and straddle the mean") {
        const Vec cov = Vec::Constant(3, 0.5);
        const auto [up, lo] = cost_bounds_from_samples(mean, cov, 3000, 42);
        const double sd = std::sqrt(0.5);
        for (int i = 0; i < 3; ++i) {
            CHECK(up[i] > mean[i]);
            CHECK(lo[i] < mean[i]);
            CHECK(up[i] <= mean[i] + 8.0 * sd);
            CHECK(lo[i] >= mean[i] - 8.0 * sd);
        }
    }
    SUBCASE("fixed seed reproduces identical bounds") {
        const Vec cov = Vec::Constant(3, 0.3);
        const auto a = cost_bounds_from_samples(mean, cov, 500, 9);
        const auto b = cost_bounds_from_samples(mean, cov, 500, 9);
        CHECK((a.first - b.first).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK((a.second - b.second).lpNorm<Eigen::Infinity>() == 0.0);
    }
    CHECK_THROWS_AS(cost_bounds_from_samples(mean, Vec::Zero(3), 1, 0),
                    std::invalid_argument);
}

TEST_CASE("perturbation bounds") {
    const auto [inst, cunc] = queueing_instance(small_queue(11, 3));
    SUBCASE("eta = 0 gives all-zero bounds") {
        const TransitionUncertainty t = perturbation_bounds(inst, 0.0, 100, 4);
        CHECK(t.zeta_upper.lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(t.zeta_lower.lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("bounds approach the interval ends at n = 3000") {
        // Extreme order statistics of 3000 uniforms: the expected end gap is
        // width/(n+1) ~ 3e-6, exceeding 5e-5 with probability ~3e-7 per
        // entry; most entries land within 1e-5.
        const TransitionUncertainty t = perturbation_bounds(inst, 0.01, 3000, 4);
        const Mat mean = dense_kernel(inst);
        int tight = 0, entries = 0;
        for (int p = 0; p < inst.num_pairs(); ++p)
            for (int s2 = 0; s2 < inst.num_states; ++s2) {
                const double mu = mean(p, s2);
                const double lo = mu == 0.0 ? 0.0 : -0.01 * mu;
                const double hi = 0.01 * (1.0 - mu);
                CHECK(t.zeta_upper(p, s2) <= hi);
                CHECK(t.zeta_upper(p, s2) >= hi - 5e-5);
                CHECK(t.zeta_lower(p, s2) >= lo);
                if (mu > 0.0) CHECK(t.zeta_lower(p, s2) <= lo + 5e-5);
                ++entries;
                if (t.zeta_upper(p, s2) >= hi - 1e-5) ++tight;
            }
        CHECK(static_cast<double>(tight) / entries >= 0.7);
    }
    SUBCASE("fixed seed determinism") {
        const TransitionUncertainty a = perturbation_bounds(inst, 0.005, 200, 21);
        const TransitionUncertainty b = perturbation_bounds(inst, 0.005, 200, 21);
        CHECK((a.zeta_upper - b.zeta_upper).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK((a.zeta_lower - b.zeta_lower).lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("positive stable sampler matches its laplace transform") {
    // E[exp(-t S)] = exp(-t^alpha); monte-carlo check at several (alpha, t).
    for (double alpha : {0.5, 0.25, 0.1}) {
        for (double t : {0.5, 1.0, 2.0}) {
            double acc = 0.0;
            const int n = 200000;
            Rng local(split_seed(7777, static_cast<std::uint64_t>(alpha * 100) * 31 +
                                           static_cast<std::uint64_t>(t * 10)));
            for (int i = 0; i < n; ++i) acc += std::exp(-t * positive_stable(local, alpha));
            CHECK(acc / n ==
                  doctest::Approx(std::exp(-std::pow(t, alpha))).epsilon(0.01));
        }
    }
}

TEST_CASE("cost realization sampler") {
    const auto [inst, unc] = queueing_instance(small_queue(2, 2));

    SUBCASE("zero variances return the means exactly") {
        CostUncertainty point = unc;
        point.objective.diag_covariance = Vec::Zero(inst.num_pairs());
        point.objective.subgaussian = Vec::Zero(inst.num_pairs());
        point.objective.lower = point.objective.mean;
        point.objective.upper = point.objective.mean;
        for (auto& c : point.constraints) {
            c.diag_covariance = Vec::Zero(inst.num_pairs());
            c.subgaussian = Vec::Zero(inst.num_pairs());
            c.lower = c.mean;
            c.upper = c.mean;
        }
        const CostRealization draw =
            sample_cost_realization(point, CostCoupling::CopulaComonotone, 77);
        CHECK((draw.c - point.objective.mean).lpNorm<Eigen::Infinity>() == 0.0);
        for (int k = 0; k < 2; ++k)
            CHECK((draw.d[k] - point.constraints[k].mean).lpNorm<Eigen::Infinity>() == 0.0);
    }

    SUBCASE("draws respect the truncation bounds") {
        Rng rng(5);
        for (int i = 0; i < 200; ++i) {
            const CostRealization draw =
                sample_cost_realization(unc, CostCoupling::Independent, rng);
            for (int p = 0; p < inst.num_pairs(); ++p) {
                CHECK(draw.c[p] >= (*unc.objective.lower)[p]);
                CHECK(draw.c[p] <= (*unc.objective.upper)[p]);
            }
        }
    }

    SUBCASE("empirical pairwise copula at theta=2 matches the closed form") {
        CostUncertainty coupled = unc;
        coupled.copula.theta = 2.0;
        const int n = 100000;
        // rho strictly positive keeps rho'd^k strictly increasing in U_k
        const Vec rho = Vec::Constant(inst.num_pairs(), 1.0 / inst.num_pairs());
        std::vector<double> v1(n), v2(n);
        Rng rng(31337);
        for (int i = 0; i < n; ++i) {
            const CostRealization draw =
                sample_cost_realization(coupled, CostCoupling::CopulaComonotone, rng);
            v1[i] = rho.dot(draw.d[0]);
            v2[i] = rho.dot(draw.d[1]);
        }
        std::vector<int> order1(n), order2(n);
        std::iota(order1.begin(), order1.end(), 0);
        std::iota(order2.begin(), order2.end(), 0);
        std::sort(order1.begin(), order1.end(), [&](int a, int b) { return v1[a] < v1[b]; });
        std::sort(order2.begin(), order2.end(), [&](int a, int b) { return v2[a] < v2[b]; });
        std::vector<double> u1(n), u2(n);
        for (int r = 0; r < n; ++r) {
            u1[order1[r]] = (r + 1.0) / n;
            u2[order2[r]] = (r + 1.0) / n;
        }
        for (int gi = 1; gi <= 10; ++gi) {
            for (int gj = 1; gj <= 10; ++gj) {
                const double a = gi / 10.0, b = gj / 10.0;
                int hits = 0;
                for (int i = 0; i < n; ++i) hits += (u1[i] <= a && u2[i] <= b);
                const double emp = static_cast<double>(hits) / n;
                const double exact = gumbel_hougaard((Vec(2) << a, b).finished(), 2.0);
                CHECK(std::abs(emp - exact) <= 0.02);
            }
        }
    }
}

TEST_CASE("transition realization sampler") {
    GarnetConfig cfg;
    cfg.num_states = 8;
    cfg.num_actions = 2;
    cfg.branching = 4;
    cfg.num_constraints = 1;
    cfg.eta = 0.01;
    cfg.seed = 12;
    const GarnetInstance g = garnet_instance(cfg);

    SUBCASE("zero bounds return the mean kernel exactly") {
        TransitionUncertainty none = g.transitions;
        none.zeta_upper.setZero();
        none.zeta_lower.setZero();
        const Mat kernel = sample_transition_realization(g.instance, none, 5);
        CHECK((kernel - dense_kernel(g.instance)).lpNorm<Eigen::Infinity>() == 0.0);
    }

    SUBCASE("sampled rows are stochastic and inside the bounds") {
        const Mat mean = dense_kernel(g.instance);
        Rng rng(99);
        const int reps = 10000 / g.instance.num_pairs() + 1;
        for (int i = 0; i < reps; ++i) {
            const Mat kernel = sample_transition_realization(g.instance, g.transitions, rng);
            for (int p = 0; p < g.instance.num_pairs(); ++p) {
                CHECK(std::abs(kernel.row(p).sum() - 1.0) <= 1e-12);
                for (int s2 = 0; s2 < g.instance.num_states; ++s2) {
                    const double zeta = kernel(p, s2) - mean(p, s2);
                    CHECK(zeta >= g.transitions.zeta_lower(p, s2) - 1e-12);
                    CHECK(zeta <= g.transitions.zeta_upper(p, s2) + 1e-12);
                    CHECK(kernel(p, s2) >= -1e-12);
                    CHECK(kernel(p, s2) <= 1.0 + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("generators are bit-reproducible per (config, seed)") {
    const auto a = queueing_instance(small_queue(123));
    const auto b = queueing_instance(small_queue(123));
    CHECK(instance_to_json(a.first).dump() == instance_to_json(b.first).dump());
    CHECK(cost_uncertainty_to_json(a.second).dump() ==
          cost_uncertainty_to_json(b.second).dump());

    GarnetConfig cfg;
    cfg.seed = 321;
    cfg.num_states = 10;
    cfg.num_actions = 3;
    cfg.branching = 5;
    cfg.num_constraints = 2;
    const GarnetInstance g1 = garnet_instance(cfg);
    const GarnetInstance g2 = garnet_instance(cfg);
    CHECK(instance_to_json(g1.instance).dump() == instance_to_json(g2.instance).dump());
    CHECK(transition_uncertainty_to_json(g1.transitions).dump() ==
          transition_uncertainty_to_json(g2.transitions).dump());
}

TEST_CASE("uncertainty json round-trips") {
    const auto [inst, unc] = queueing_instance(small_queue(77, 2));
    const auto j = cost_uncertainty_to_json(unc);
    const CostUncertainty back = cost_uncertainty_from_json(j);
    CHECK(cost_uncertainty_to_json(back).dump() == j.dump());

    GarnetConfig cfg;
    cfg.num_states = 5;
    cfg.num_actions = 2;
    cfg.branching = 3;
    cfg.num_constraints = 1;
    cfg.seed = 2;
    const GarnetInstance g = garnet_instance(cfg);
    const auto tj = transition_uncertainty_to_json(g.transitions);
    const TransitionUncertainty tback = transition_uncertainty_from_json(tj);
    CHECK(transition_uncertainty_to_json(tback).dump() == tj.dump());
}
