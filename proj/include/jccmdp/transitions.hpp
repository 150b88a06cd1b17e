// Random transition-probability pipeline: state-wise cost envelopes, the
// Bonferroni-level SOCP/log-sum-exp upper programs, and the lower-bound LP.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jccmdp/chance.hpp"
#include "jccmdp/mdp.hpp"
#include "jccmdp/report.hpp"

namespace jccmdp {

struct TransitionUncertainty {
    // Perturbation bounds per (pair, next state); zeta_upper >= 0,
    // zeta_lower <= 0, and mean + zeta stays a probability.
    Mat zeta_upper, zeta_lower;
    // Empirical within-row covariance of the bound-fixing sample set, one
    // |S| x |S| block per pair. Empty when generation skipped it (size cap);
    // the Chebyshev builder requires it.
    std::vector<Mat> row_covariance;
    bool rows_independent = true;
    // Cost bounds used by the envelope construction.
    Vec c_upper, c_lower;
    std::vector<Vec> d_upper, d_lower;

    int num_constraints() const { return static_cast<int>(d_upper.size()); }
    void validate(const CmdpInstance& instance) const;
};

/// State-wise envelopes C_max/C_min (and D^k versions) on the random tail
/// costs, plus their argmin anchor states (smallest index on ties).
struct CostEnvelopes {
    Vec c_max_state, c_min_state;
    std::vector<Vec> d_max_state, d_min_state;
    double c_max = 0.0, c_min = 0.0;
    Vec d_max, d_min;
    int anchor_c_upper = 0; // argmin_s C_max(s)
    int anchor_c_lower = 0; // argmin_s C_min(s)
    std::vector<int> anchor_d_upper, anchor_d_lower;
};

CostEnvelopes cost_envelopes(const CmdpInstance& instance,
                             const TransitionUncertainty& unc);

/// || Qtilde - Q_mean (I + alpha Z Qtilde) ||_inf for a sampled perturbed
/// kernel (test utility for the inverse-splitting identity).
double q_identity_residual(const CmdpInstance& instance, const StationaryPolicy& f,
                           const Mat& perturbed_kernel);

/// The affine threshold R of the upper chance rows:
/// R = (budget - rho' cost_upper)/alpha + sum_p rho_p g_p with
/// g_p = sum_s' (env_max - env_min)(s') zeta_l(s'|p). `budget` is z for the
/// objective row (pass z_var) or xi_k (pass budget constant).
AffineScalar r_term_upper(const CmdpInstance& instance, const TransitionUncertainty& unc,
                          const CostEnvelopes& env, int rho0, int z_var, int k);

struct TpProgram {
    ConvexProgram program;
    int z_var = -1;
    int rho0 = -1;
    std::vector<int> m_vars; // lower program: m_c then m_{d^k}
};

/// Theorem-style norm upper bounds at Bonferroni level 1-(1-p1)/K.
/// Chebyshev requires row covariances; Hoeffding requires row independence.
TpProgram build_upper_tp(const CmdpInstance& instance, const TransitionUncertainty& unc,
                         BoundKind kind, double p0, double p1);

TpProgram build_upper_tp_bernstein(const CmdpInstance& instance,
                                   const TransitionUncertainty& unc, double p0, double p1,
                                   double h0, const Vec& h_k);

TpProgram build_lower_tp(const CmdpInstance& instance, const TransitionUncertainty& unc,
                         double p0, double p1, double lambda_c, const Vec& lambda_dk);

struct TpSolveOptions {
    double p0 = 0.9;
    double p1 = 0.9;
    double bernstein_h0 = 10.0;
    std::optional<Vec> bernstein_hk;
    double lambda_c = 1e-5;
    std::optional<Vec> lambda_dk;
    SolverOptions solver;
    bool with_extremal_bounds = true;
    int max_parallel = 1;
};

inline constexpr const char* kMethodTpChebyshev = "tp.chebyshev";
inline constexpr const char* kMethodTpHoeffding = "tp.hoeffding";
inline constexpr const char* kMethodTpBernstein = "tp.bernstein";
inline constexpr const char* kMethodTpLower = "tp.lower";

BoundReport solve_random_tp(const CmdpInstance& instance, const TransitionUncertainty& unc,
                            const std::vector<std::string>& methods,
                            const TpSolveOptions& opts = {});

} // namespace jccmdp
