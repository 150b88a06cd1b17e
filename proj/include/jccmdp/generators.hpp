// Benchmark instance generators (queueing control, Garnet) and the sampling
// protocols that fix cost bounds, perturbation bounds, and validation draws.
// All generation is bit-reproducible per (config, seed): every stochastic
// step derives its own stream via split_seed with a fixed stream id.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "jccmdp/costs.hpp"
#include "jccmdp/mdp.hpp"
#include "jccmdp/rng.hpp"
#include "jccmdp/transitions.hpp"

namespace jccmdp {

struct QueueingConfig {
    int max_queue_length = 10; // L; states are {0..L}
    std::vector<double> service_levels = {0.2, 0.75, 0.9};
    std::vector<double> admission_levels = {0.0, 0.5, 0.8};
    double discount = 0.9;
    std::uint64_t seed = 0;
    std::vector<double> budgets = {11.30, 11.35};
    double p0 = 0.9, p1 = 0.9, theta = 1.0;
    double cov_low = 0.0, cov_high = 0.8; // diagonal covariance entries
    int bound_samples = 3000;

    void validate() const;
};

/// Queue with service/admission control; mean costs mu_c(s) = s,
/// mu_d1(a1) = 3(1+a1)^2, mu_d2(a2) = 10 - 3 a2; bounds fixed from Gaussian
/// samples.
std::pair<CmdpInstance, CostUncertainty> queueing_instance(const QueueingConfig& cfg);

struct GarnetConfig {
    int num_states = 20;
    int num_actions = 4;
    int branching = 10; // |B_F| distinct reachable states per pair
    int num_constraints = 3;
    std::uint64_t seed = 0;
    double discount = 0.9;
    double obj_mean_low = 50.0, obj_mean_high = 70.0;
    double con_mean_low = 50.0, con_mean_high = 100.0;
    double cov_low = 0.0, cov_high = 0.4;
    double budget_low = 80.0, budget_high = 90.0;
    double eta = 0.001; // perturbation scale
    double p0 = 0.9, p1 = 0.9, theta = 1.0;
    int bound_samples = 3000;
    // Row covariances are materialized only while pairs*|S|^2 stays under
    // this cap; above it the Chebyshev transition bound is unavailable.
    std::size_t covariance_entry_cap = 4000000;

    void validate() const;
};

struct GarnetInstance {
    CmdpInstance instance;
    CostUncertainty costs;
    TransitionUncertainty transitions;
};

GarnetInstance garnet_instance(const GarnetConfig& cfg);

/// Componentwise max/min of n Gaussian draws: (upper, lower).
std::pair<Vec, Vec> cost_bounds_from_samples(const Vec& mean, const Vec& diag_cov, int n,
                                             std::uint64_t seed);

/// Perturbation bounds from n uniform draws on (-eta mu, eta (1-mu)) per
/// entry (on (0, eta) where mu = 0, with zeta_l pinned to 0), plus the
/// empirical within-row covariance of the same draws when under the cap.
TransitionUncertainty perturbation_bounds(const CmdpInstance& instance, double eta, int n,
                                          std::uint64_t seed,
                                          std::size_t covariance_entry_cap = 4000000);

enum class CostCoupling {
    CopulaComonotone, // constraint vectors driven by Gumbel-coupled uniforms
    Independent,
};

struct CostRealization {
    Vec c;
    std::vector<Vec> d;
};

/// One draw of (c, d^1..d^K) with truncated-Gaussian marginals. Under
/// CopulaComonotone each d^k is comonotone in a single uniform U_k and
/// (U_1..U_K) carries the Gumbel-Hougaard copula exactly, so the K budget
/// events inherit it; c is drawn independently either way.
CostRealization sample_cost_realization(const CostUncertainty& unc, CostCoupling coupling,
                                        Rng& rng);
CostRealization sample_cost_realization(const CostUncertainty& unc, CostCoupling coupling,
                                        std::uint64_t seed);

/// One perturbed kernel (pairs x states, rows sum to 1): entrywise uniform
/// draws on the zeta box, alternating projection onto the zero-sum
/// hyperplane, exact residual spread at the end.
Mat sample_transition_realization(const CmdpInstance& instance,
                                  const TransitionUncertainty& unc, Rng& rng);
Mat sample_transition_realization(const CmdpInstance& instance,
                                  const TransitionUncertainty& unc, std::uint64_t seed);

nlohmann::ordered_json cost_uncertainty_to_json(const CostUncertainty& unc);
CostUncertainty cost_uncertainty_from_json(const nlohmann::json& j);
nlohmann::ordered_json transition_uncertainty_to_json(const TransitionUncertainty& unc);
TransitionUncertainty transition_uncertainty_from_json(const nlohmann::json& j);

} // namespace jccmdp
