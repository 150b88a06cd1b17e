#include "jccmdp/costs.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <stdexcept>

#include "jccmdp/validation.hpp"

namespace jccmdp {

void CostUncertainty::validate(const CmdpInstance& instance) const {
    const int n = instance.num_pairs();
    if (objective.dim() != n)
        throw std::invalid_argument("cost uncertainty: objective spec dimension");
    objective.validate();
    if (num_constraints() != instance.num_constraints())
        throw std::invalid_argument("cost uncertainty: constraint spec count");
    for (const auto& spec : constraints) {
        if (spec.dim() != n)
            throw std::invalid_argument("cost uncertainty: constraint spec dimension");
        spec.validate();
    }
    if (!(p0 > 0.0 && p0 < 1.0) || !(copula.p1 > 0.0 && copula.p1 < 1.0))
        throw std::invalid_argument("cost uncertainty: p0, p1 must lie in (0,1)");
    if (copula.theta < 1.0) throw std::invalid_argument("cost uncertainty: theta < 1");
}

namespace {

Vec v_star_weights(const CostUncertainty& unc, BoundKind kind, int k) {
    const RandomVectorSpec& spec = unc.constraints.at(k);
    switch (kind) {
    case BoundKind::Chebyshev:
        if (!spec.has_covariance())
            throw std::invalid_argument("v_star: chebyshev needs a covariance");
        return spec.covariance_column_norms();
    case BoundKind::Hoeffding:
        if (!spec.upper || !spec.lower)
            throw std::invalid_argument("v_star: hoeffding needs bounds");
        return *spec.upper - *spec.lower;
    case BoundKind::SubGaussian:
        if (!spec.subgaussian)
            throw std::invalid_argument("v_star: subgaussian needs sigmas");
        return *spec.subgaussian;
    }
    return Vec();
}

AffineVec rho_exprs(int rho0, int n) {
    AffineVec v;
    v.reserve(n);
    for (int p = 0; p < n; ++p) v.push_back(AffineScalar::variable(rho0 + p));
    return v;
}

AffineScalar dot_expr(int rho0, const Vec& w) {
    AffineScalar e;
    for (int p = 0; p < w.size(); ++p) e.add(rho0 + p, w[p]);
    return e;
}

constexpr double kHoeffdingMinP1 = 0.3934693402873666; // 1 - e^{-1/2}

} // namespace

double v_star(const CmdpInstance& instance, const CostUncertainty& unc, BoundKind kind,
              int k) {
    const Vec w = v_star_weights(unc, kind, k);
    ConvexProgram prog;
    const int rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, rho0);
    prog.set_objective(dot_expr(rho0, -w)); // maximize w'rho
    const OccupationMeasure interior =
        induced_occupation_measure(instance, uniform_policy(instance));
    const Solution sol = prog.solve_with_start(interior.rho);
    if (!sol.optimal())
        throw std::runtime_error("v_star: auxiliary LP failed: " + to_string(sol.status));
    return -sol.objective;
}

CostUpperProgram build_upper(const CmdpInstance& instance, const CostUncertainty& unc,
                             BoundKind kind) {
    instance.validate();
    unc.validate(instance);
    if (kind != BoundKind::Chebyshev && unc.copula.p1 < kHoeffdingMinP1)
        throw std::invalid_argument("build_upper: p1 below 1 - e^{-1/2}");

    const int n = instance.num_pairs();
    const int K = unc.num_constraints();
    const double theta = unc.copula.theta;
    const double p1 = unc.copula.p1;
    const Vec grid = secant_grid();

    CostUpperProgram out;
    ConvexProgram& prog = out.program;
    out.z_var = prog.add_variable("z");
    out.rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, out.rho0);
    prog.set_objective(AffineScalar::variable(out.z_var));

    // Objective chance row through the generic inner emitter.
    const InnerKind inner = kind == BoundKind::Chebyshev  ? InnerKind::Chebyshev
                            : kind == BoundKind::Hoeffding ? InnerKind::Hoeffding
                                                           : InnerKind::SubGaussian;
    emit_inner(prog, inner, rho_exprs(out.rho0, n), AffineScalar::variable(out.z_var),
               unc.p0, unc.objective);

    if (K == 0) return out;

    if (K == 1) {
        // The simplex pins y_1 = 1, so the level factor is exactly
        // safety_factor(kind, p1); no linearization needed.
        const double v1 = v_star(instance, unc, kind, 0);
        AffineScalar row = dot_expr(out.rho0, unc.constraints[0].mean);
        row.constant += safety_factor(kind, p1) * v1;
        prog.add_linear_le(std::move(row), instance.budgets[0]);
        out.y_vars.push_back(prog.add_variable("y[0]", 1.0, 1.0));
        return out;
    }

    // Per-budget rows rho'mu_k + V*_k t_k <= xi_k with t_k >= the secant
    // envelope of the convex level factor at y_k; y on the unit simplex.
    AffineScalar simplex;
    for (int k = 0; k < K; ++k) {
        const double vk = v_star(instance, unc, kind, k);
        const double t_cap = level_factor(kind, p1, theta, grid[0]) + 1.0;
        const int yk = prog.add_variable("y[" + std::to_string(k) + "]", grid[0], 1.0);
        const int tk = prog.add_variable("t[" + std::to_string(k) + "]", 0.0, t_cap);
        out.y_vars.push_back(yk);
        simplex.add(yk, 1.0);

        AffineScalar row = dot_expr(out.rho0, unc.constraints[k].mean);
        row.add(tk, vk);
        prog.add_linear_le(std::move(row), instance.budgets[k]);

        const auto cuts = secant_lines(
            [&](double y) { return level_factor(kind, p1, theta, y); }, grid);
        for (const auto& cut : cuts) {
            AffineScalar c(cut.a);
            c.add(yk, cut.b).add(tk, -1.0);
            prog.add_linear_le(std::move(c), 0.0);
        }
    }
    prog.add_linear_eq(std::move(simplex), 1.0);
    return out;
}

CostUpperProgram build_upper_bernstein(const CmdpInstance& instance,
                                       const CostUncertainty& unc, double h0,
                                       const Vec& h_k) {
    instance.validate();
    unc.validate(instance);
    if (!(h0 > 0.0)) throw std::invalid_argument("build_upper_bernstein: h0 <= 0");
    const int K = unc.num_constraints();
    if (h_k.size() != K) throw std::invalid_argument("build_upper_bernstein: h_k size");
    const int n = instance.num_pairs();
    const double theta = unc.copula.theta;
    const double p1 = unc.copula.p1;
    const Vec grid = secant_grid();

    CostUpperProgram out;
    ConvexProgram& prog = out.program;
    out.z_var = prog.add_variable("z");
    out.rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, out.rho0);
    prog.set_objective(AffineScalar::variable(out.z_var));

    emit_inner(prog, InnerKind::Bernstein, rho_exprs(out.rho0, n),
               AffineScalar::variable(out.z_var), unc.p0, unc.objective, h0);

    if (K == 0) return out;

    auto concave_rhs = [&](double y) {
        return std::log(1.0 - copula_exponent(p1, y, theta));
    };
    if (K == 1) {
        // y_1 = 1 exactly: the concave right-hand term is ln(1 - p1).
        if (!(h_k[0] > 0.0)) throw std::invalid_argument("build_upper_bernstein: h_k <= 0");
        BernsteinParts parts =
            bernstein_lse_parts(rho_exprs(out.rho0, n), unc.constraints[0], h_k[0]);
        AffineScalar rhs(h_k[0] * instance.budgets[0] + std::log(1.0 - p1));
        if (parts.groups.empty()) {
            AffineScalar lin = parts.offset;
            lin.constant -= rhs.constant;
            prog.add_linear_le(std::move(lin), 0.0);
        } else {
            prog.add_lse_constraint(std::move(parts.groups), std::move(rhs), parts.offset);
        }
        out.y_vars.push_back(prog.add_variable("y[0]", 1.0, 1.0));
        return out;
    }
    AffineScalar simplex;
    for (int k = 0; k < K; ++k) {
        if (!(h_k[k] > 0.0)) throw std::invalid_argument("build_upper_bernstein: h_k <= 0");
        const int yk = prog.add_variable("y[" + std::to_string(k) + "]", grid[0], 1.0);
        const int uk = prog.add_variable("u[" + std::to_string(k) + "]",
                                         concave_rhs(grid[0]) - 1.0, kInf);
        out.y_vars.push_back(yk);
        simplex.add(yk, 1.0);

        // u_k <= secant envelope of the concave ln(1 - p1^{y^{1/theta}}).
        const auto cuts = secant_lines(concave_rhs, grid);
        for (const auto& cut : cuts) {
            AffineScalar c(-cut.a);
            c.add(uk, 1.0).add(yk, -cut.b);
            prog.add_linear_le(std::move(c), 0.0);
        }

        BernsteinParts parts =
            bernstein_lse_parts(rho_exprs(out.rho0, n), unc.constraints[k], h_k[k]);
        AffineScalar rhs(h_k[k] * instance.budgets[k]);
        rhs.add(uk, 1.0);
        if (parts.groups.empty()) {
            AffineScalar lin = parts.offset;
            for (std::size_t i = 0; i < rhs.vars.size(); ++i)
                lin.add(rhs.vars[i], -rhs.coefs[i]);
            lin.constant -= rhs.constant;
            prog.add_linear_le(std::move(lin), 0.0);
        } else {
            prog.add_lse_constraint(std::move(parts.groups), std::move(rhs), parts.offset);
        }
    }
    prog.add_linear_eq(std::move(simplex), 1.0);
    return out;
}

CostLowerProgram build_lower(const CmdpInstance& instance, const CostUncertainty& unc,
                             double lambda_c, double lambda_d,
                             const Vec& tangent_points) {
    instance.validate();
    unc.validate(instance);
    if (!(lambda_c > 0.0) || !(lambda_d > 0.0))
        throw std::invalid_argument("build_lower: lambdas must be positive");
    const RandomVectorSpec& cs = unc.objective;
    if (!cs.lower || !cs.upper)
        throw std::invalid_argument("build_lower: objective cost bounds required");
    const int n = instance.num_pairs();
    const int K = unc.num_constraints();

    CostLowerProgram out;
    ConvexProgram& prog = out.program;
    out.z_var = prog.add_variable("z");
    out.rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, out.rho0);
    prog.set_objective(AffineScalar::variable(out.z_var));

    // Objective side: expectation/quantile rows via the generic outer
    // emitter. Any truly feasible point maps to m_c <= max spread (the
    // quantile row pins z >= rho'c_l), so a cap far above that leaves the
    // LP value untouched while keeping the barrier domain bounded.
    const double cap_c =
        1e3 * (std::max(lambda_c, (*cs.upper - *cs.lower).maxCoeff()) + 1.0);
    const OuterEmission oe =
        emit_outer(prog, rho_exprs(out.rho0, n), AffineScalar::variable(out.z_var),
                   unc.p0, cs, lambda_c, cap_c);
    out.mc_var = oe.m_var;

    if (K == 0) return out;

    double cap_d = lambda_d;
    for (int k = 0; k < K; ++k) {
        const RandomVectorSpec& ds = unc.constraints[k];
        if (!ds.lower || !ds.upper)
            throw std::invalid_argument("build_lower: constraint cost bounds required");
        cap_d = std::max(cap_d, ds.upper->maxCoeff() - instance.budgets[k]);
    }
    cap_d = 1e3 * (cap_d + 1.0);
    out.md_var = prog.add_variable("m_d", lambda_d, cap_d);

    const auto tangents =
        tangent_coefficients(unc.copula.p1, unc.copula.theta, tangent_points);
    AffineScalar ybar_sum;
    for (int k = 0; k < K; ++k) {
        const RandomVectorSpec& ds = unc.constraints[k];
        const int ybar = prog.add_variable("ybar[" + std::to_string(k) + "]", 0.0, kInf);
        out.ybar_vars.push_back(ybar);
        ybar_sum.add(ybar, 1.0);
        // rho'mu_k - xi_k + a^i m_d + b^i ybar_k <= m_d for every tangent
        for (const auto& t : tangents) {
            AffineScalar row = dot_expr(out.rho0, ds.mean);
            row.add(out.md_var, t.a - 1.0).add(ybar, t.b);
            prog.add_linear_le(std::move(row), instance.budgets[k]);
        }
        // rho'd_u - xi_k <= m_d and rho'd_l <= xi_k
        AffineScalar up = dot_expr(out.rho0, *ds.upper);
        up.add(out.md_var, -1.0);
        prog.add_linear_le(std::move(up), instance.budgets[k]);
        prog.add_linear_le(dot_expr(out.rho0, *ds.lower), instance.budgets[k]);
    }
    ybar_sum.add(out.md_var, -1.0);
    prog.add_linear_eq(std::move(ybar_sum), 0.0);
    return out;
}

Vec default_bernstein_h_grid(int n) {
    Vec g(n);
    for (int i = 0; i < n; ++i)
        g[i] = std::pow(10.0, -1.0 + 3.0 * i / static_cast<double>(n - 1));
    return g;
}

BernsteinTuning tune_bernstein_h(const CmdpInstance& instance, const CostUncertainty& unc,
                                 const Vec& candidates, const SolverOptions& solver) {
    BernsteinTuning best;
    for (int i = 0; i < candidates.size(); ++i) {
        const double h = candidates[i];
        CostUpperProgram up =
            build_upper_bernstein(instance, unc, h, Vec::Constant(unc.num_constraints(), h));
        const Solution s = up.program.solve(solver);
        if (!s.optimal()) continue;
        if (best.status != SolveStatus::Optimal || s.x[up.z_var] < best.bound) {
            best.status = SolveStatus::Optimal;
            best.h = h;
            best.bound = s.x[up.z_var];
        }
    }
    return best;
}

namespace {

BoundResult run_method(const CmdpInstance& instance, const CostUncertainty& unc,
                       const std::string& method, const CostSolveOptions& opts) {
    BoundResult res;
    res.method = method;
    const auto start = std::chrono::steady_clock::now();
    try {
        ConvexProgram* prog = nullptr;
        int z_var = -1, rho0 = -1;
        std::vector<int> y_vars;
        int mc_var = -1, md_var = -1;
        CostUpperProgram up;
        CostLowerProgram low;
        if (method == kMethodRcChebyshev || method == kMethodRcHoeffding ||
            method == kMethodRcSubGaussian) {
            const BoundKind kind = method == kMethodRcChebyshev  ? BoundKind::Chebyshev
                                   : method == kMethodRcHoeffding ? BoundKind::Hoeffding
                                                                  : BoundKind::SubGaussian;
            up = build_upper(instance, unc, kind);
            prog = &up.program;
            z_var = up.z_var;
            rho0 = up.rho0;
            y_vars = up.y_vars;
        } else if (method == kMethodRcBernstein) {
            double h0 = opts.bernstein_h0;
            Vec hk = opts.bernstein_hk.value_or(
                Vec::Constant(unc.num_constraints(), opts.bernstein_h0));
            if (opts.tune_bernstein_h) {
                const BernsteinTuning tuned =
                    tune_bernstein_h(instance, unc, default_bernstein_h_grid(), opts.solver);
                if (tuned.status == SolveStatus::Optimal) {
                    h0 = tuned.h;
                    hk.setConstant(tuned.h);
                }
            }
            up = build_upper_bernstein(instance, unc, h0, hk);
            prog = &up.program;
            z_var = up.z_var;
            rho0 = up.rho0;
            y_vars = up.y_vars;
        } else if (method == kMethodRcLower) {
            low = build_lower(instance, unc, opts.lambda_c, opts.lambda_d,
                              default_tangent_points(opts.tangent_count));
            prog = &low.program;
            z_var = low.z_var;
            rho0 = low.rho0;
            y_vars = low.ybar_vars;
            mc_var = low.mc_var;
            md_var = low.md_var;
        } else {
            throw std::invalid_argument("unknown method tag: " + method);
        }

        const Solution sol = prog->solve(opts.solver);
        res.status = sol.status;
        res.message = sol.message;
        if (sol.optimal()) {
            res.bound = sol.x[z_var];
            res.occupation.rho = sol.x.segment(rho0, instance.num_pairs());
            res.policy = recover_policy(instance, res.occupation);
            res.y = Vec(y_vars.size());
            for (std::size_t i = 0; i < y_vars.size(); ++i) res.y[i] = sol.x[y_vars[i]];
            if (mc_var >= 0) res.aux_m_c = sol.x[mc_var];
            if (md_var >= 0) res.aux_m_d = sol.x[md_var];
        }
    } catch (const std::exception& e) {
        res.status = SolveStatus::NumericalFailure;
        res.message = e.what();
    }
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

} // namespace

BoundReport solve_random_costs(const CmdpInstance& instance, const CostUncertainty& unc,
                               const std::vector<std::string>& methods,
                               const CostSolveOptions& opts) {
    if (methods.empty())
        throw std::invalid_argument("solve_random_costs: no methods requested");
    std::vector<std::string> order;
    for (const char* tag : {kMethodRcChebyshev, kMethodRcHoeffding, kMethodRcSubGaussian,
                            kMethodRcBernstein}) {
        for (const auto& m : methods)
            if (m == tag) order.push_back(tag);
    }
    order.push_back(kMethodRcLower); // the lower bound always runs

    BoundReport report;
    report.results.resize(order.size());
    if (opts.max_parallel > 1) {
        std::vector<std::future<BoundResult>> futs;
        futs.reserve(order.size());
        for (const auto& m : order)
            futs.push_back(std::async(std::launch::async, run_method, std::cref(instance),
                                      std::cref(unc), m, std::cref(opts)));
        for (std::size_t i = 0; i < futs.size(); ++i) report.results[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < order.size(); ++i)
            report.results[i] = run_method(instance, unc, order[i], opts);
    }

    const BoundResult* low = report.find(kMethodRcLower);
    report.lower_method = kMethodRcLower;
    if (low && low->optimal()) report.lower_bound = low->bound;
    for (const auto& r : report.results) {
        if (r.method == kMethodRcLower || !r.optimal()) continue;
        report.gaps[r.method] = gap_value(r.bound, report.lower_bound);
    }
    if (opts.with_extremal_bounds) {
        const ExtremalBounds ex = extremal_bounds_costs(instance, unc, opts.bernstein_h0);
        report.extremal_upper = ex.upper;
        report.extremal_lower = ex.lower;
        report.extremal_gap = ex.gap;
    }
    return report;
}

} // namespace jccmdp
