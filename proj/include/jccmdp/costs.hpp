// Random running-cost pipeline: the four convex upper-bound programs
// (Chebyshev / Hoeffding / sub-Gaussian norm bounds and the Bernstein
// log-sum-exp program) and the tangent-based lower-bound LP.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jccmdp/chance.hpp"
#include "jccmdp/mdp.hpp"
#include "jccmdp/report.hpp"

namespace jccmdp {

struct CostUncertainty {
    RandomVectorSpec objective;                // c~ over pairs
    std::vector<RandomVectorSpec> constraints; // d~^k over pairs
    CopulaParams copula;                       // theta and the joint level p1
    double p0 = 0.9;                           // objective level

    int num_constraints() const { return static_cast<int>(constraints.size()); }
    void validate(const CmdpInstance& instance) const;
};

/// Auxiliary LP value V*_k = max over the occupation polytope of the
/// kind-specific weight vector (column norms of the covariance root,
/// bound widths, or sub-Gaussian sigmas).
double v_star(const CmdpInstance& instance, const CostUncertainty& unc, BoundKind kind,
              int k);

/// Variable layout of a built upper-bound program.
struct CostUpperProgram {
    ConvexProgram program;
    int z_var = -1;
    int rho0 = -1;
    std::vector<int> y_vars;
};

/// Norm-bound upper program: objective cone row plus per-constraint rows
/// rho'mu_k + t_k V*_k <= xi_k where t_k over-approximates the convex level
/// factor f_k(p1, y_k) by its secant envelope on the shared grid.
/// Hoeffding/sub-Gaussian require p1 >= 1 - e^{-1/2}.
CostUpperProgram build_upper(const CmdpInstance& instance, const CostUncertainty& unc,
                             BoundKind kind);

/// Bernstein upper program with exponent scales h0 (objective row) and h_k.
CostUpperProgram build_upper_bernstein(const CmdpInstance& instance,
                                       const CostUncertainty& unc, double h0,
                                       const Vec& h_k);

struct CostLowerProgram {
    ConvexProgram program;
    int z_var = -1;
    int rho0 = -1;
    std::vector<int> ybar_vars;
    int mc_var = -1;
    int md_var = -1;
};

/// Lower-bound LP with expectation/quantile rows on the objective side and
/// tangent rows of p1^{y^{1/theta}} on the constraint side.
CostLowerProgram build_lower(const CmdpInstance& instance, const CostUncertainty& unc,
                             double lambda_c, double lambda_d,
                             const Vec& tangent_points);

struct CostSolveOptions {
    double bernstein_h0 = 10.0;
    std::optional<Vec> bernstein_hk; // defaults to h0 for every k
    bool tune_bernstein_h = false;   // grid-search h instead of the fixed value
    double lambda_c = 1e-5;
    double lambda_d = 1e-5;
    int tangent_count = 20;
    SolverOptions solver;
    bool with_extremal_bounds = true;
    int max_parallel = 1;
};

/// Log-spaced candidates on [0.1, 100].
Vec default_bernstein_h_grid(int n = 13);

struct BernsteinTuning {
    double h = 10.0;
    double bound = kInf;
    SolveStatus status = SolveStatus::Infeasible;
};

/// 1-d grid search over a shared exponent scale h = h0 = h_k minimizing the
/// Bernstein upper bound.
BernsteinTuning tune_bernstein_h(const CmdpInstance& instance, const CostUncertainty& unc,
                                 const Vec& candidates = default_bernstein_h_grid(),
                                 const SolverOptions& solver = {});

inline constexpr const char* kMethodRcChebyshev = "rc.chebyshev";
inline constexpr const char* kMethodRcHoeffding = "rc.hoeffding";
inline constexpr const char* kMethodRcSubGaussian = "rc.subgaussian";
inline constexpr const char* kMethodRcBernstein = "rc.bernstein";
inline constexpr const char* kMethodRcLower = "rc.lower";

/// Runs the requested upper bounds plus the lower bound, recovers policies
/// from Optimal occupation measures, and fills gaps and extremal bounds.
/// Per-method failures are isolated into their BoundResult.
BoundReport solve_random_costs(const CmdpInstance& instance, const CostUncertainty& unc,
                               const std::vector<std::string>& methods,
                               const CostSolveOptions& opts = {});

} // namespace jccmdp
