// Empirical and exact verification: Monte Carlo chance-constraint checks,
// brute-force oracles on tiny instances, the gap metric, and the extremal
// theoretical bounds.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jccmdp/costs.hpp"
#include "jccmdp/generators.hpp"
#include "jccmdp/transitions.hpp"

namespace jccmdp {

struct McReport {
    int samples = 0;
    double objective_prob = 0.0;      // empirical P(rho'c <= z)
    double joint_prob = 0.0;          // empirical P(rho'd^k <= xi_k for all k)
    std::vector<double> individual_probs;
    double objective_se = 0.0;
    double joint_se = 0.0;
    std::string sampler;
};

/// Monte Carlo check of the random-cost chance constraints at (rho, z).
McReport mc_check_costs(const CmdpInstance& instance, const CostUncertainty& unc,
                        const Vec& rho, double z, int n, CostCoupling sampler,
                        std::uint64_t seed, int shards = 1);

/// Monte Carlo check of the random-transition problem at (f, z): each draw
/// samples a perturbed kernel plus independent truncated-Gaussian costs at
/// their bound data and evaluates the discounted cost by a linear solve.
McReport mc_check_tp(const CmdpInstance& instance, const CostUncertainty& costs,
                     const TransitionUncertainty& unc, const StationaryPolicy& f,
                     double z, int n, std::uint64_t seed, int shards = 1);

/// Scenario oracle on tiny instances: m cost scenarios scored over the
/// polytope's vertices, vertex-pair midpoints, and a Dirichlet-sampled
/// interior cloud; returns the best z whose empirical levels meet (p0, p1).
/// Advisory reference for sandwich statistics, not an exact optimum.
struct ScenarioOracleResult {
    bool feasible = false;
    double value = std::numeric_limits<double>::quiet_NaN();
};
ScenarioOracleResult brute_force_costs_oracle(const CmdpInstance& instance,
                                              const CostUncertainty& unc, int scenarios,
                                              std::uint64_t seed,
                                              CostCoupling sampler = CostCoupling::CopulaComonotone,
                                              int interior_points = 10000);

GapValue gap_percent(double ub, double lb);

struct ExtremalBounds {
    std::map<std::string, double> upper; // UB^(u) per method tag
    double lower = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, GapValue> gaps; // G per method
    GapValue gap;                         // worst-case G over methods
};

/// Auxiliary-LP extremal bounds for the random-cost approximations.
ExtremalBounds extremal_bounds_costs(const CmdpInstance& instance,
                                     const CostUncertainty& unc, double bernstein_h0 = 10.0);

/// Same for the random-transition approximations (including the g(rho) term).
ExtremalBounds extremal_bounds_tp(const CmdpInstance& instance,
                                  const TransitionUncertainty& unc, double p0 = 0.9,
                                  double bernstein_h0 = 10.0);

} // namespace jccmdp
