// Emitters for inner/outer approximations of a linear chance constraint
// P(r'z <= a) >= p, plus the Gumbel-Hougaard copula machinery shared by the
// joint-chance pipelines.
#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "jccmdp/convex.hpp"

namespace jccmdp {

/// Distributional data attached to a random vector; each approximation kind
/// consumes the subset it needs.
struct RandomVectorSpec {
    Vec mean;
    std::optional<Mat> covariance;      // full matrix
    std::optional<Vec> diag_covariance; // variances, for diagonal covariances
    std::optional<Vec> lower, upper;
    std::optional<Vec> subgaussian; // per-component sigma
    bool independent_components = false;

    int dim() const { return static_cast<int>(mean.size()); }
    bool has_covariance() const { return covariance.has_value() || diag_covariance.has_value(); }
    /// Column norms of the covariance square root (component sigmas when
    /// diagonal).
    Vec covariance_column_norms() const;
    /// Component standard deviations (sqrt of the covariance diagonal).
    Vec component_sd() const;
    /// lower <= mean <= upper where provided; covariance symmetric PSD.
    void validate() const;
};

struct CopulaParams {
    double theta = 1.0; // >= 1; 1 is the product copula
    double p1 = 0.9;    // joint level, in (0,1)
};

/// C_theta(u) = exp{-[sum_k (-ln u_k)^theta]^{1/theta}}.
double gumbel_hougaard(const Vec& u, double theta);

/// p1^{y^{1/theta}} for y in [0,1].
double copula_exponent(double p1, double y, double theta);

enum class BoundKind { Chebyshev, Hoeffding, SubGaussian };

/// Safety factors of the three norm-based bounds:
/// sqrt(p/(1-p)), sqrt(-ln(1-p)/2), sqrt(-2 ln(1-p)).
double safety_factor(BoundKind kind, double p);

/// y-parameterized factor safety_factor(kind, p1^{y^{1/theta}}). Convex in y
/// for Chebyshev always, and for Hoeffding/SubGaussian when
/// p1 >= 1 - e^{-1/2}.
double level_factor(BoundKind kind, double p1, double theta, double y);

enum class FactorKind { FHat, FBar };

struct ConvexityReport {
    bool passed = false;
    double worst_violation = 0.0;
    int pairs_checked = 0;
};

/// Midpoint-convexity check of fhat/fbar over all grid pairs (test utility).
ConvexityReport convexity_witness(FactorKind kind, double p1, double theta,
                                  const Vec& grid);

struct TangentLine {
    double a = 0.0, b = 0.0; // a + b*y
};

/// Tangents of y -> p1^{y^{1/theta}} at the given sorted points; the max of
/// the returned lines under-approximates the function on [0,1].
std::vector<TangentLine> tangent_coefficients(double p1, double theta,
                                              const Vec& y_points);

/// N points equally spaced over [0.1, 1.0].
Vec default_tangent_points(int n = 20);

/// Fixed graded grid on [1e-4, 1] shared by all secant linearizations:
/// geometric through the blow-up region near zero, uniform elsewhere. Using
/// one grid for every bound kind keeps their piecewise-linear envelopes
/// pointwise ordered whenever the underlying functions are.
Vec secant_grid();

/// Secants of f over consecutive grid nodes. For convex f their max is the
/// piecewise-linear interpolant (an over-approximation on the grid range);
/// for concave f their min is an under-approximation.
std::vector<TangentLine> secant_lines(const std::function<double(double)>& f,
                                      const Vec& grid);

enum class InnerKind { Chebyshev, Hoeffding, SubGaussian, Bernstein };

/// Adds the inner approximation of P(r'z <= a) >= p for the given kind.
/// r_expr is the affine coefficient vector (Hoeffding/Bernstein require the
/// caller to guarantee r >= 0), a_expr the affine threshold. Bernstein uses
/// the fixed exponent scale h > 0.
std::vector<int> emit_inner(ConvexProgram& program, InnerKind kind,
                            const AffineVec& r_expr, const AffineScalar& a_expr,
                            double p, const RandomVectorSpec& spec,
                            double bernstein_h = 10.0);

/// Log terms of the Bernstein bound for coefficient vector r and scale h:
/// one two-weight group per nondegenerate component, with zero-width
/// components folded into the linear offset (their log term is exactly
/// h r_i mu_i).
struct BernsteinParts {
    std::vector<LseGroup> groups;
    AffineScalar offset;
};
BernsteinParts bernstein_lse_parts(const AffineVec& r_expr, const RandomVectorSpec& spec,
                                   double h);

struct OuterEmission {
    std::vector<int> constraint_ids;
    int m_var = -1;
};

/// Outer (relaxation) rows: r'mu - a <= (1-p) m, lambda <= m,
/// r'z_u - a <= m, r'z_l <= a. `m_upper` caps the auxiliary variable so the
/// interior-point subproblems stay bounded; any value above the attainable
/// max(lambda, sup r'z_u - inf a) leaves the optimum unchanged.
OuterEmission emit_outer(ConvexProgram& program, const AffineVec& r_expr,
                         const AffineScalar& a_expr, double p,
                         const RandomVectorSpec& spec, double lambda,
                         double m_upper = kInf);

/// Symmetric PSD square root; throws when the matrix has an eigenvalue below
/// -1e-8 * |lambda_max|.
Mat psd_sqrt(const Mat& m);

/// Euclidean norms of the columns of psd_sqrt(cov).
Vec sqrt_column_norms(const Mat& cov);

} // namespace jccmdp
