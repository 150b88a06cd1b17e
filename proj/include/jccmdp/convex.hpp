// Backend-neutral convex program representation: linear rows, second-order
// cone rows, and log-sum-exp rows, plus the solver contract.
#pragma once

#include <limits>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace jccmdp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Sparse affine scalar expression: sum_i coef_i * x_{var_i} + constant.
struct AffineScalar {
    std::vector<int> vars;
    std::vector<double> coefs;
    double constant = 0.0;

    AffineScalar() = default;
    explicit AffineScalar(double c) : constant(c) {}

    AffineScalar& add(int var, double coef) {
        if (coef != 0.0) {
            vars.push_back(var);
            coefs.push_back(coef);
        }
        return *this;
    }
    AffineScalar& offset(double c) {
        constant += c;
        return *this;
    }
    double eval(const Vec& x) const {
        double v = constant;
        for (std::size_t i = 0; i < vars.size(); ++i)
            v += coefs[i] * x[vars[i]];
        return v;
    }
    /// Accumulates scale * coefficients into a dense gradient.
    void add_gradient(Vec& g, double scale = 1.0) const {
        for (std::size_t i = 0; i < vars.size(); ++i)
            g[vars[i]] += scale * coefs[i];
    }
    static AffineScalar variable(int var, double coef = 1.0) {
        AffineScalar e;
        e.add(var, coef);
        return e;
    }
    int max_var() const {
        int m = -1;
        for (int v : vars) m = std::max(m, v);
        return m;
    }
};

/// A column of affine scalars; the vector inside a second-order cone row.
using AffineVec = std::vector<AffineScalar>;

enum class ConstraintKind { LinearEq, LinearIneq, SecondOrderCone, LogSumExp };

/// expr == 0 (equality) or expr <= 0 (inequality).
struct LinearCon {
    AffineScalar expr;
    bool equality = false;
};

/// ||vec(x)||_2 <= rhs(x).
struct SocCon {
    AffineVec vec;
    AffineScalar rhs;
};

/// One log term: ln( sum_j weight_j * exp(exponent_j(x)) ), weights > 0.
struct LseGroup {
    std::vector<double> weights;
    std::vector<AffineScalar> exponents;
};

/// sum_g ln(sum_j w_gj e^{a_gj(x)}) + offset(x) <= rhs(x).
struct LseCon {
    std::vector<LseGroup> groups;
    AffineScalar offset;
    AffineScalar rhs;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string to_string(SolveStatus s);

struct SolverOptions {
    double tolerance = 1e-8;      // backend feasibility / Newton tolerance
    double gap_abs = 1e-9;        // absolute duality-gap target
    double gap_rel = 1e-9;        // relative duality-gap target
    int max_iterations = 200;     // Newton iterations per centering step
    bool verbose = false;
};

struct SolverStats {
    int newton_iterations = 0;
    int centering_steps = 0;
    double duality_gap = kInf;
    double max_residual = kInf;   // worst constraint violation at the solution
};

struct Solution {
    SolveStatus status = SolveStatus::NumericalFailure;
    Vec x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    SolverStats stats;
    std::string message;

    bool optimal() const { return status == SolveStatus::Optimal; }
};

/// Convex program over named variables. Construction is single-threaded;
/// a built program is immutable under solve() and shareable across threads.
class ConvexProgram {
  public:
    int add_variable(std::string name, double lb = -kInf, double ub = kInf);
    int num_variables() const { return static_cast<int>(names_.size()); }
    const std::string& variable_name(int v) const { return names_[v]; }
    double lower_bound(int v) const { return lb_[v]; }
    double upper_bound(int v) const { return ub_[v]; }

    /// Objective is minimized.
    void set_objective(AffineScalar obj) { objective_ = std::move(obj); check(objective_); }
    const AffineScalar& objective() const { return objective_; }

    int add_linear_eq(AffineScalar expr, double rhs);
    int add_linear_le(AffineScalar expr, double rhs);
    int add_soc_constraint(AffineVec vec, AffineScalar rhs);
    int add_lse_constraint(std::vector<LseGroup> groups, AffineScalar rhs,
                           AffineScalar offset = AffineScalar{});

    const std::vector<LinearCon>& linear_constraints() const { return linear_; }
    const std::vector<SocCon>& soc_constraints() const { return soc_; }
    const std::vector<LseCon>& lse_constraints() const { return lse_; }

    /// Plain-text conic dump, one constraint per line.
    void dump(std::ostream& os) const;

    Solution solve(const SolverOptions& opts = SolverOptions{}) const;

    /// Same as solve(), but skips phase I when `hint` is strictly feasible.
    Solution solve_with_start(const Vec& hint,
                              const SolverOptions& opts = SolverOptions{}) const;

    /// Worst violation of all constraints and bounds at x (>= 0).
    double max_violation(const Vec& x) const;

  private:
    void check(const AffineScalar& e) const;

    std::vector<std::string> names_;
    std::vector<double> lb_, ub_;
    AffineScalar objective_;
    std::vector<LinearCon> linear_;
    std::vector<SocCon> soc_;
    std::vector<LseCon> lse_;
};

} // namespace jccmdp
