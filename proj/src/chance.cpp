#include "jccmdp/chance.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace jccmdp {

Vec RandomVectorSpec::covariance_column_norms() const {
    if (diag_covariance) return diag_covariance->cwiseMax(0.0).cwiseSqrt();
    if (covariance) return sqrt_column_norms(*covariance);
    throw std::invalid_argument("spec: covariance required");
}

Vec RandomVectorSpec::component_sd() const {
    if (diag_covariance) return diag_covariance->cwiseMax(0.0).cwiseSqrt();
    if (covariance) return covariance->diagonal().cwiseMax(0.0).cwiseSqrt();
    throw std::invalid_argument("spec: covariance required");
}

void RandomVectorSpec::validate() const {
    const int n = dim();
    if (lower && upper) {
        for (int i = 0; i < n; ++i) {
            if (!((*lower)[i] <= mean[i] && mean[i] <= (*upper)[i]))
                throw std::invalid_argument("spec: bounds do not straddle the mean");
        }
    }
    if (diag_covariance) {
        if (diag_covariance->size() != n)
            throw std::invalid_argument("spec: diag covariance dimension");
        for (int i = 0; i < n; ++i)
            if ((*diag_covariance)[i] < 0.0)
                throw std::invalid_argument("spec: negative variance");
    }
    if (covariance) {
        if (covariance->rows() != n || covariance->cols() != n)
            throw std::invalid_argument("spec: covariance dimension");
        if ((*covariance - covariance->transpose()).lpNorm<Eigen::Infinity>() > 1e-10)
            throw std::invalid_argument("spec: covariance not symmetric");
        Eigen::SelfAdjointEigenSolver<Mat> es(*covariance, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = std::max(1.0, es.eigenvalues().maxCoeff());
        if (lo < -1e-8 * hi)
            throw std::invalid_argument("spec: covariance not positive semidefinite");
    }
    if (subgaussian) {
        for (int i = 0; i < n; ++i)
            if ((*subgaussian)[i] < 0.0)
                throw std::invalid_argument("spec: negative sub-Gaussian parameter");
    }
}

double gumbel_hougaard(const Vec& u, double theta) {
    if (theta < 1.0) throw std::domain_error("gumbel_hougaard: theta < 1");
    double acc = 0.0;
    for (int k = 0; k < u.size(); ++k) {
        if (u[k] < 0.0 || u[k] > 1.0)
            throw std::domain_error("gumbel_hougaard: u outside [0,1]");
        if (u[k] == 0.0) return 0.0;
        acc += std::pow(-std::log(u[k]), theta);
    }
    if (acc == 0.0) return 1.0;
    return std::exp(-std::pow(acc, 1.0 / theta));
}

double copula_exponent(double p1, double y, double theta) {
    if (!(p1 > 0.0 && p1 < 1.0)) throw std::domain_error("copula_exponent: p1");
    if (theta < 1.0) throw std::domain_error("copula_exponent: theta < 1");
    if (y < 0.0 || y > 1.0) throw std::domain_error("copula_exponent: y outside [0,1]");
    if (y == 0.0) return 1.0;
    return std::exp(std::pow(y, 1.0 / theta) * std::log(p1));
}

double safety_factor(BoundKind kind, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("safety_factor: p outside (0,1)");
    switch (kind) {
    case BoundKind::Chebyshev: return std::sqrt(p / (1.0 - p));
    case BoundKind::Hoeffding: return std::sqrt(-0.5 * std::log(1.0 - p));
    case BoundKind::SubGaussian: return std::sqrt(-2.0 * std::log(1.0 - p));
    }
    return 0.0;
}

double level_factor(BoundKind kind, double p1, double theta, double y) {
    const double level = copula_exponent(p1, y, theta);
    if (level >= 1.0) return kInf; // y = 0: the individual level degenerates
    return safety_factor(kind, level);
}

ConvexityReport convexity_witness(FactorKind kind, double p1, double theta,
                                  const Vec& grid) {
    if (kind == FactorKind::FBar && p1 < 1.0 - std::exp(-0.5))
        throw std::domain_error("convexity_witness: fbar requires p1 >= 1 - e^{-1/2}");
    const BoundKind bk =
        kind == FactorKind::FHat ? BoundKind::Chebyshev : BoundKind::Hoeffding;
    auto f = [&](double y) { return level_factor(bk, p1, theta, y); };
    ConvexityReport rep;
    rep.passed = true;
    for (int i = 0; i < grid.size(); ++i) {
        for (int j = i + 1; j < grid.size(); ++j) {
            const double mid = 0.5 * (grid[i] + grid[j]);
            const double lhs = f(mid);
            const double rhs = 0.5 * (f(grid[i]) + f(grid[j]));
            if (!std::isfinite(lhs) || !std::isfinite(rhs)) continue;
            const double viol = lhs - rhs;
            rep.worst_violation = std::max(rep.worst_violation, viol);
            if (viol > 1e-12) rep.passed = false;
            ++rep.pairs_checked;
        }
    }
    return rep;
}

std::vector<TangentLine> tangent_coefficients(double p1, double theta,
                                              const Vec& y_points) {
    if (!(p1 > 0.0 && p1 < 1.0)) throw std::domain_error("tangent_coefficients: p1");
    if (theta < 1.0) throw std::domain_error("tangent_coefficients: theta < 1");
    std::vector<TangentLine> lines;
    lines.reserve(y_points.size());
    double prev = -kInf;
    for (int i = 0; i < y_points.size(); ++i) {
        const double y = y_points[i];
        if (!(y > prev))
            throw std::invalid_argument("tangent_coefficients: points must increase");
        prev = y;
        if (y < 0.0 || y > 1.0)
            throw std::domain_error("tangent_coefficients: y outside [0,1]");
        if (y == 0.0 && theta > 1.0)
            throw std::domain_error(
                "tangent_coefficients: derivative singular at y = 0 for theta > 1");
        const double yr = std::pow(y, 1.0 / theta);
        const double phat = std::exp(yr * std::log(p1));
        TangentLine t;
        t.a = phat * (1.0 - yr / theta * std::log(p1));
        t.b = phat * (y == 0.0 ? 1.0 : std::pow(y, 1.0 / theta - 1.0)) / theta *
              std::log(p1);
        lines.push_back(t);
    }
    return lines;
}

Vec default_tangent_points(int n) { return Vec::LinSpaced(n, 0.1, 1.0); }

Vec secant_grid() {
    // 32 geometric nodes on [1e-4, 0.1), 128 uniform on [0.1, 1.0].
    const int ng = 32, nu = 128;
    Vec g(ng + nu);
    const double r = std::pow(0.1 / 1e-4, 1.0 / ng);
    double y = 1e-4;
    for (int i = 0; i < ng; ++i) {
        g[i] = y;
        y *= r;
    }
    g.tail(nu) = Vec::LinSpaced(nu, 0.1, 1.0);
    return g;
}

std::vector<TangentLine> secant_lines(const std::function<double(double)>& f,
                                      const Vec& grid) {
    std::vector<TangentLine> lines;
    lines.reserve(grid.size() - 1);
    double fy0 = f(grid[0]);
    for (int i = 0; i + 1 < grid.size(); ++i) {
        const double fy1 = f(grid[i + 1]);
        TangentLine t;
        t.b = (fy1 - fy0) / (grid[i + 1] - grid[i]);
        t.a = fy0 - t.b * grid[i];
        lines.push_back(t);
        fy0 = fy1;
    }
    return lines;
}

Mat psd_sqrt(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Vec ev = es.eigenvalues();
    const double hi = std::max(1.0, ev.maxCoeff());
    for (int i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-8 * hi) throw std::invalid_argument("psd_sqrt: matrix not PSD");
        ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Vec sqrt_column_norms(const Mat& cov) {
    const Mat root = psd_sqrt(cov);
    Vec norms(root.cols());
    for (int j = 0; j < root.cols(); ++j) norms[j] = root.col(j).norm();
    return norms;
}

namespace {

AffineScalar weighted_sum(const AffineVec& r_expr, const Vec& w, double constant = 0.0) {
    AffineScalar out(constant);
    for (int j = 0; j < w.size(); ++j) {
        if (w[j] == 0.0) continue;
        const AffineScalar& rj = r_expr[j];
        for (std::size_t i = 0; i < rj.vars.size(); ++i)
            out.add(rj.vars[i], w[j] * rj.coefs[i]);
        out.constant += w[j] * rj.constant;
    }
    return out;
}

AffineScalar scaled(const AffineScalar& e, double s) {
    AffineScalar out(e.constant * s);
    for (std::size_t i = 0; i < e.vars.size(); ++i) out.add(e.vars[i], s * e.coefs[i]);
    return out;
}

AffineScalar minus(const AffineScalar& a, const AffineScalar& b) {
    AffineScalar out = a;
    for (std::size_t i = 0; i < b.vars.size(); ++i) out.add(b.vars[i], -b.coefs[i]);
    out.constant -= b.constant;
    return out;
}

} // namespace

std::vector<int> emit_inner(ConvexProgram& program, InnerKind kind,
                            const AffineVec& r_expr, const AffineScalar& a_expr,
                            double p, const RandomVectorSpec& spec, double bernstein_h) {
    const int n = spec.dim();
    if (static_cast<int>(r_expr.size()) != n)
        throw std::invalid_argument("emit_inner: r dimension mismatch");
    spec.validate();
    std::vector<int> ids;

    // r' mu folded into the cone's right-hand side: a - r' mu.
    const AffineScalar rhs = minus(a_expr, weighted_sum(r_expr, spec.mean));

    switch (kind) {
    case InnerKind::Chebyshev: {
        if (!spec.has_covariance())
            throw std::invalid_argument("emit_inner: chebyshev needs a covariance");
        const double f = safety_factor(BoundKind::Chebyshev, p);
        AffineVec rows;
        rows.reserve(n);
        if (spec.diag_covariance) {
            const Vec sd = spec.component_sd();
            for (int i = 0; i < n; ++i) rows.push_back(scaled(r_expr[i], f * sd[i]));
        } else {
            const Mat root = psd_sqrt(*spec.covariance);
            for (int i = 0; i < n; ++i)
                rows.push_back(weighted_sum(r_expr, f * root.row(i)));
        }
        ids.push_back(program.add_soc_constraint(std::move(rows), rhs));
        return ids;
    }
    case InnerKind::Hoeffding:
    case InnerKind::SubGaussian: {
        Vec diag;
        if (kind == InnerKind::Hoeffding) {
            if (!spec.lower || !spec.upper || !spec.independent_components)
                throw std::invalid_argument(
                    "emit_inner: hoeffding needs bounds and independent components");
            diag = *spec.upper - *spec.lower;
        } else {
            if (!spec.subgaussian || !spec.independent_components)
                throw std::invalid_argument(
                    "emit_inner: subgaussian needs sigmas and independent components");
            diag = *spec.subgaussian;
        }
        const double f = safety_factor(kind == InnerKind::Hoeffding
                                           ? BoundKind::Hoeffding
                                           : BoundKind::SubGaussian,
                                       p);
        AffineVec rows;
        rows.reserve(n);
        for (int i = 0; i < n; ++i) rows.push_back(scaled(r_expr[i], f * diag[i]));
        ids.push_back(program.add_soc_constraint(std::move(rows), rhs));
        return ids;
    }
    case InnerKind::Bernstein: {
        BernsteinParts parts = bernstein_lse_parts(r_expr, spec, bernstein_h);
        AffineScalar bern_rhs = scaled(a_expr, bernstein_h);
        bern_rhs.constant += std::log(1.0 - p);
        if (parts.groups.empty()) {
            // Entirely deterministic: a single linear row.
            ids.push_back(program.add_linear_le(minus(parts.offset, bern_rhs), 0.0));
        } else {
            ids.push_back(program.add_lse_constraint(std::move(parts.groups), bern_rhs,
                                                     parts.offset));
        }
        return ids;
    }
    }
    return ids;
}

BernsteinParts bernstein_lse_parts(const AffineVec& r_expr, const RandomVectorSpec& spec,
                                   double h) {
    if (!spec.lower || !spec.upper || !spec.independent_components)
        throw std::invalid_argument(
            "bernstein_lse_parts: needs bounds and independent components");
    if (!(h > 0.0)) throw std::invalid_argument("bernstein_lse_parts: h <= 0");
    if (static_cast<int>(r_expr.size()) != spec.dim())
        throw std::invalid_argument("bernstein_lse_parts: r dimension mismatch");
    BernsteinParts parts;
    for (int i = 0; i < spec.dim(); ++i) {
        const double zu = (*spec.upper)[i], zl = (*spec.lower)[i];
        const double width = zu - zl;
        if (width <= 0.0) {
            const AffineScalar lin = scaled(r_expr[i], h * spec.mean[i]);
            for (std::size_t t = 0; t < lin.vars.size(); ++t)
                parts.offset.add(lin.vars[t], lin.coefs[t]);
            parts.offset.constant += lin.constant;
            continue;
        }
        const double A = (spec.mean[i] - zl) / width;
        if (A < -1e-12 || A > 1.0 + 1e-12)
            throw std::invalid_argument("bernstein_lse_parts: weight outside [0,1]");
        LseGroup g;
        if (A >= 1.0 - 1e-12) {
            g.weights = {1.0};
            g.exponents = {scaled(r_expr[i], h * zu)};
        } else if (A <= 1e-12) {
            g.weights = {1.0};
            g.exponents = {scaled(r_expr[i], h * zl)};
        } else {
            g.weights = {A, 1.0 - A};
            g.exponents = {scaled(r_expr[i], h * zu), scaled(r_expr[i], h * zl)};
        }
        parts.groups.push_back(std::move(g));
    }
    return parts;
}

OuterEmission emit_outer(ConvexProgram& program, const AffineVec& r_expr,
                         const AffineScalar& a_expr, double p,
                         const RandomVectorSpec& spec, double lambda, double m_upper) {
    if (!(lambda > 0.0)) throw std::invalid_argument("emit_outer: lambda <= 0");
    if (!spec.lower || !spec.upper)
        throw std::invalid_argument("emit_outer: needs bound vectors");
    if (static_cast<int>(r_expr.size()) != spec.dim())
        throw std::invalid_argument("emit_outer: r dimension mismatch");
    spec.validate();
    if (m_upper == kInf) m_upper = lambda + 1e8;

    OuterEmission out;
    out.m_var = program.add_variable("m_outer", lambda, m_upper);
    // r' mu - a <= (1-p) m
    AffineScalar row1 = minus(weighted_sum(r_expr, spec.mean), a_expr);
    row1.add(out.m_var, -(1.0 - p));
    out.constraint_ids.push_back(program.add_linear_le(std::move(row1), 0.0));
    // r' z_u - a <= m
    AffineScalar row2 = minus(weighted_sum(r_expr, *spec.upper), a_expr);
    row2.add(out.m_var, -1.0);
    out.constraint_ids.push_back(program.add_linear_le(std::move(row2), 0.0));
    // r' z_l <= a
    out.constraint_ids.push_back(
        program.add_linear_le(minus(weighted_sum(r_expr, *spec.lower), a_expr), 0.0));
    return out;
}

} // namespace jccmdp
