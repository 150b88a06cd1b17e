// Finite discounted CMDP: instance data, the occupation-measure polytope,
// exact LP solve, policy recovery, and policy evaluation.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "jccmdp/convex.hpp"

namespace jccmdp {

/// Transition rows stored as (next_state, probability) lists, one row per
/// state-action pair.
using KernelRow = std::vector<std::pair<int, double>>;
using Kernel = std::vector<KernelRow>;

/// Finite CMDP with a mean transition kernel. Immutable after construction;
/// operations on it are pure.
struct CmdpInstance {
    int num_states = 0;
    std::vector<int> actions_per_state;
    Kernel kernel;        // one row per pair, indexed by pair_index(s, a)
    double discount = 0.0;
    Vec initial_dist;     // gamma over states
    Vec budgets;          // xi_k, size K

    int num_constraints() const { return static_cast<int>(budgets.size()); }
    int num_pairs() const { return pair_offset_.empty() ? 0 : pair_offset_.back(); }
    int pair_index(int s, int a) const { return pair_offset_[s] + a; }
    int pair_state(int p) const { return pair_state_[p]; }
    int pair_action(int p) const { return p - pair_offset_[pair_state_[p]]; }

    /// Recomputes the pair index tables; call after filling the fields.
    void finalize();
    /// Checks all invariants (row sums, gamma, discount); throws
    /// std::invalid_argument with the offending field on failure.
    void validate() const;

    double kernel_prob(int pair, int next_state) const;

  private:
    std::vector<int> pair_offset_;
    std::vector<int> pair_state_;
};

struct OccupationMeasure {
    Vec rho; // nonnegative weights over pairs
};

struct StationaryPolicy {
    std::vector<Vec> rows; // rows[s] is a distribution over A(s)
};

struct ExactSolveResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    double value = std::numeric_limits<double>::quiet_NaN();
    OccupationMeasure occupation;
    std::string message;
};

/// Adds one nonnegative variable per state-action pair to the program.
/// Returns the index of the first.
int add_occupation_variables(ConvexProgram& program, const CmdpInstance& instance,
                             const std::string& prefix = "rho");

/// Emits the |S| flow-balance equalities of the occupation polytope over the
/// pair variables starting at rho0 (their nonnegativity is a variable bound).
/// Uses `kernel` (defaults to the instance's own mean kernel).
std::vector<int> build_occupation_constraints(ConvexProgram& program,
                                              const CmdpInstance& instance, int rho0);
std::vector<int> build_occupation_constraints(ConvexProgram& program,
                                              const CmdpInstance& instance, int rho0,
                                              const Kernel& kernel);

/// Dense flow system (A, b) with A rho = b over the pair variables; used by
/// enumeration oracles and tests.
std::pair<Mat, Vec> occupation_flow_system(const CmdpInstance& instance);

/// min c'rho over the occupation polytope subject to d_k'rho <= xi_k.
/// `d` holds one cost vector per budget row (may be empty).
ExactSolveResult solve_exact_cmdp(const CmdpInstance& instance, const Vec& c,
                                  const std::vector<Vec>& d);

/// f(s,a) = rho(s,a) / sum_a rho(s,a); uniform over A(s) when the state
/// carries no mass.
StationaryPolicy recover_policy(const CmdpInstance& instance, const OccupationMeasure& rho);

StationaryPolicy uniform_policy(const CmdpInstance& instance);

/// Occupation measure induced by f under the mean kernel:
/// rho(s,a) = ((1-alpha) gamma' Q_f)(s) f(s,a).
OccupationMeasure induced_occupation_measure(const CmdpInstance& instance,
                                             const StationaryPolicy& f);

/// (1-alpha) gamma' (I - alpha P_f)^{-1} c_f by LU solve. The kernel
/// defaults to the instance's mean kernel; the dense overload takes one row
/// per pair over all states (perturbed kernels).
double discounted_cost(const CmdpInstance& instance, const StationaryPolicy& f,
                       const Vec& cost_over_pairs);
double discounted_cost(const CmdpInstance& instance, const StationaryPolicy& f,
                       const Vec& cost_over_pairs, const Mat& kernel_rows);

/// Policy-induced transition matrix P_f (S x S) under the given kernel rows.
Mat policy_transition_matrix(const CmdpInstance& instance, const StationaryPolicy& f);
Mat policy_transition_matrix(const CmdpInstance& instance, const StationaryPolicy& f,
                             const Mat& kernel_rows);

/// Mean kernel expanded to dense rows (pairs x states).
Mat dense_kernel(const CmdpInstance& instance);

nlohmann::ordered_json instance_to_json(const CmdpInstance& instance);
CmdpInstance instance_from_json(const nlohmann::json& j);

} // namespace jccmdp
