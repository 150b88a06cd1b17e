#include "jccmdp/transitions.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <stdexcept>

#include <Eigen/LU>

#include "jccmdp/validation.hpp"

namespace jccmdp {

void TransitionUncertainty::validate(const CmdpInstance& instance) const {
    const int P = instance.num_pairs();
    const int S = instance.num_states;
    if (zeta_upper.rows() != P || zeta_upper.cols() != S || zeta_lower.rows() != P ||
        zeta_lower.cols() != S)
        throw std::invalid_argument("transition uncertainty: zeta dimensions");
    const Mat mean = dense_kernel(instance);
    for (int p = 0; p < P; ++p) {
        for (int s2 = 0; s2 < S; ++s2) {
            const double zu = zeta_upper(p, s2), zl = zeta_lower(p, s2);
            if (zu < 0.0 || zl > 0.0)
                throw std::invalid_argument("transition uncertainty: zeta sign");
            const double mu = mean(p, s2);
            if (mu + zl < -1e-12 || mu + zu > 1.0 + 1e-12)
                throw std::invalid_argument(
                    "transition uncertainty: perturbed value leaves [0,1]");
            if (mu == 0.0 && zl != 0.0)
                throw std::invalid_argument(
                    "transition uncertainty: zeta_lower must vanish where mu = 0");
        }
    }
    if (!row_covariance.empty() && static_cast<int>(row_covariance.size()) != P)
        throw std::invalid_argument("transition uncertainty: covariance block count");
    if (c_upper.size() != P || c_lower.size() != P)
        throw std::invalid_argument("transition uncertainty: objective cost bounds");
    if (d_upper.size() != d_lower.size())
        throw std::invalid_argument("transition uncertainty: budget cost bounds");
    for (std::size_t k = 0; k < d_upper.size(); ++k)
        if (d_upper[k].size() != P || d_lower[k].size() != P)
            throw std::invalid_argument("transition uncertainty: budget bound dims");
    for (int p = 0; p < P; ++p) {
        if (c_lower[p] > c_upper[p])
            throw std::invalid_argument("transition uncertainty: c bounds crossed");
        for (std::size_t k = 0; k < d_upper.size(); ++k)
            if (d_lower[k][p] > d_upper[k][p])
                throw std::invalid_argument("transition uncertainty: d bounds crossed");
    }
}

namespace {

int argmin_state(const Vec& v) {
    int best = 0;
    for (int s = 1; s < v.size(); ++s)
        if (v[s] < v[best]) best = s; // smallest index wins ties
    return best;
}

void envelope_pair(const CmdpInstance& inst, const Vec& upper, const Vec& lower,
                   double alpha, Vec& env_max, Vec& env_min, double& scal_max,
                   double& scal_min) {
    scal_max = upper.maxCoeff();
    scal_min = lower.minCoeff();
    env_max.resize(inst.num_states);
    env_min.resize(inst.num_states);
    const double tail = alpha / (1.0 - alpha);
    for (int s = 0; s < inst.num_states; ++s) {
        double mx = -kInf, mn = kInf;
        for (int a = 0; a < inst.actions_per_state[s]; ++a) {
            const int p = inst.pair_index(s, a);
            mx = std::max(mx, upper[p]);
            mn = std::min(mn, lower[p]);
        }
        env_max[s] = mx + tail * scal_max;
        env_min[s] = mn + tail * scal_min;
    }
}

} // namespace

CostEnvelopes cost_envelopes(const CmdpInstance& instance,
                             const TransitionUncertainty& unc) {
    CostEnvelopes env;
    envelope_pair(instance, unc.c_upper, unc.c_lower, instance.discount, env.c_max_state,
                  env.c_min_state, env.c_max, env.c_min);
    env.anchor_c_upper = argmin_state(env.c_max_state);
    env.anchor_c_lower = argmin_state(env.c_min_state);
    const int K = unc.num_constraints();
    env.d_max_state.resize(K);
    env.d_min_state.resize(K);
    env.d_max.resize(K);
    env.d_min.resize(K);
    for (int k = 0; k < K; ++k) {
        envelope_pair(instance, unc.d_upper[k], unc.d_lower[k], instance.discount,
                      env.d_max_state[k], env.d_min_state[k], env.d_max[k], env.d_min[k]);
        env.anchor_d_upper.push_back(argmin_state(env.d_max_state[k]));
        env.anchor_d_lower.push_back(argmin_state(env.d_min_state[k]));
    }
    return env;
}

double q_identity_residual(const CmdpInstance& instance, const StationaryPolicy& f,
                           const Mat& perturbed_kernel) {
    const int S = instance.num_states;
    const Mat Pf = policy_transition_matrix(instance, f, perturbed_kernel);
    const Mat Mf = policy_transition_matrix(instance, f);
    const Mat Zf = Pf - Mf;
    const double alpha = instance.discount;
    const Mat I = Mat::Identity(S, S);
    const Mat Qtilde = Eigen::PartialPivLU<Mat>(I - alpha * Pf).solve(I);
    const Mat Qmean = Eigen::PartialPivLU<Mat>(I - alpha * Mf).solve(I);
    const Mat resid = Qtilde - Qmean * (I + alpha * Zf * Qtilde);
    return resid.cwiseAbs().maxCoeff();
}

namespace {

struct TpData {
    CostEnvelopes env;
    // Aggregation weights per pipeline side: w(s') = env(s') - env(anchor).
    Vec w_c_upper;              // over states, objective side
    std::vector<Vec> w_d_upper; // per k
    Vec w_c_lower;
    std::vector<Vec> w_d_lower;
};

Vec shifted_weights(const Vec& env, int anchor) {
    Vec w = (env.array() - env[anchor]).matrix();
    w[anchor] = 0.0;
    return w;
}

TpData make_tp_data(const CmdpInstance& inst, const TransitionUncertainty& unc) {
    TpData d;
    d.env = cost_envelopes(inst, unc);
    d.w_c_upper = shifted_weights(d.env.c_max_state, d.env.anchor_c_upper);
    d.w_c_lower = shifted_weights(d.env.c_min_state, d.env.anchor_c_lower);
    const int K = unc.num_constraints();
    for (int k = 0; k < K; ++k) {
        d.w_d_upper.push_back(shifted_weights(d.env.d_max_state[k], d.env.anchor_d_upper[k]));
        d.w_d_lower.push_back(shifted_weights(d.env.d_min_state[k], d.env.anchor_d_lower[k]));
    }
    return d;
}

AffineScalar dot_expr(int rho0, const Vec& w) {
    AffineScalar e;
    for (int p = 0; p < w.size(); ++p) e.add(rho0 + p, w[p]);
    return e;
}

// R = (budget - rho' cost_u)/alpha + rho' g, with budget either the z
// variable (objective row) or the xi_k constant.
AffineScalar r_threshold(const CmdpInstance& inst, const Vec& cost_u, const Vec& g,
                         int rho0, int z_var, double xi) {
    const double alpha = inst.discount;
    AffineScalar r = dot_expr(rho0, Vec((g - cost_u / alpha)));
    if (z_var >= 0)
        r.add(z_var, 1.0 / alpha);
    else
        r.constant += xi / alpha;
    return r;
}

} // namespace

AffineScalar r_term_upper(const CmdpInstance& instance, const TransitionUncertainty& unc,
                          const CostEnvelopes& env, int rho0, int z_var, int k) {
    if (k < 0) {
        const Vec g = unc.zeta_lower * (env.c_max_state - env.c_min_state);
        return r_threshold(instance, unc.c_upper, g, rho0, z_var, 0.0);
    }
    const Vec g = unc.zeta_lower * (env.d_max_state[k] - env.d_min_state[k]);
    return r_threshold(instance, unc.d_upper[k], g, rho0, -1, instance.budgets[k]);
}

TpProgram build_upper_tp(const CmdpInstance& instance, const TransitionUncertainty& unc,
                         BoundKind kind, double p0, double p1) {
    instance.validate();
    unc.validate(instance);
    if (kind == BoundKind::SubGaussian)
        throw std::invalid_argument("build_upper_tp: only chebyshev/hoeffding are defined");
    if (kind == BoundKind::Chebyshev && unc.row_covariance.empty())
        throw std::invalid_argument("build_upper_tp: chebyshev needs row covariances");
    if (kind == BoundKind::Hoeffding && !unc.rows_independent)
        throw std::invalid_argument("build_upper_tp: hoeffding needs independent rows");

    const int P = instance.num_pairs();
    const int K = unc.num_constraints();
    const TpData d = make_tp_data(instance, unc);

    TpProgram out;
    ConvexProgram& prog = out.program;
    out.z_var = prog.add_variable("z");
    out.rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, out.rho0);
    prog.set_objective(AffineScalar::variable(out.z_var));

    // Per-pair dispersion weights of the aggregated perturbation.
    auto dispersion = [&](const Vec& w) {
        Vec v(P);
        for (int p = 0; p < P; ++p) {
            if (kind == BoundKind::Chebyshev) {
                const double var = w.dot(unc.row_covariance[p] * w);
                v[p] = std::sqrt(std::max(0.0, var));
            } else {
                v[p] = w.dot(unc.zeta_upper.row(p) - unc.zeta_lower.row(p));
            }
        }
        return v;
    };
    auto add_row = [&](const Vec& w, double level, const AffineScalar& rhs) {
        const double f = safety_factor(kind, level);
        const Vec disp = dispersion(w);
        AffineVec rows;
        rows.reserve(P);
        for (int p = 0; p < P; ++p)
            rows.push_back(AffineScalar::variable(out.rho0 + p, f * disp[p]));
        prog.add_soc_constraint(std::move(rows), rhs);
    };

    add_row(d.w_c_upper, p0, r_term_upper(instance, unc, d.env, out.rho0, out.z_var, -1));
    const double bonferroni = K > 0 ? 1.0 - (1.0 - p1) / K : 0.0;
    for (int k = 0; k < K; ++k)
        add_row(d.w_d_upper[k], bonferroni,
                r_term_upper(instance, unc, d.env, out.rho0, -1, k));
    return out;
}

TpProgram build_upper_tp_bernstein(const CmdpInstance& instance,
                                   const TransitionUncertainty& unc, double p0, double p1,
                                   double h0, const Vec& h_k) {
    instance.validate();
    unc.validate(instance);
    if (!unc.rows_independent)
        throw std::invalid_argument("build_upper_tp_bernstein: needs independent rows");
    if (!(h0 > 0.0)) throw std::invalid_argument("build_upper_tp_bernstein: h0 <= 0");
    const int K = unc.num_constraints();
    if (h_k.size() != K)
        throw std::invalid_argument("build_upper_tp_bernstein: h_k size");
    const int P = instance.num_pairs();
    const TpData d = make_tp_data(instance, unc);

    TpProgram out;
    ConvexProgram& prog = out.program;
    out.z_var = prog.add_variable("z");
    out.rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, out.rho0);
    prog.set_objective(AffineScalar::variable(out.z_var));

    auto add_row = [&](const Vec& w, double h, double log_level, const AffineScalar& r) {
        std::vector<LseGroup> groups;
        for (int p = 0; p < P; ++p) {
            const double up = w.dot(unc.zeta_upper.row(p));
            const double lo = w.dot(unc.zeta_lower.row(p));
            const double width = up - lo;
            if (width <= 1e-14) continue; // deterministic zero contribution
            const double A = -lo / width;
            LseGroup g;
            if (A >= 1.0 - 1e-12) {
                g.weights = {1.0};
                g.exponents = {AffineScalar::variable(out.rho0 + p, h * up)};
            } else if (A <= 1e-12) {
                g.weights = {1.0};
                g.exponents = {AffineScalar::variable(out.rho0 + p, h * lo)};
            } else {
                g.weights = {A, 1.0 - A};
                g.exponents = {AffineScalar::variable(out.rho0 + p, h * up),
                               AffineScalar::variable(out.rho0 + p, h * lo)};
            }
            groups.push_back(std::move(g));
        }
        AffineScalar rhs(log_level);
        for (std::size_t i = 0; i < r.vars.size(); ++i) rhs.add(r.vars[i], h * r.coefs[i]);
        rhs.constant += h * r.constant;
        if (groups.empty()) {
            AffineScalar lin(-rhs.constant);
            for (std::size_t i = 0; i < rhs.vars.size(); ++i)
                lin.add(rhs.vars[i], -rhs.coefs[i]);
            prog.add_linear_le(std::move(lin), 0.0);
        } else {
            prog.add_lse_constraint(std::move(groups), std::move(rhs));
        }
    };

    add_row(d.w_c_upper, h0, std::log(1.0 - p0),
            r_term_upper(instance, unc, d.env, out.rho0, out.z_var, -1));
    for (int k = 0; k < K; ++k)
        add_row(d.w_d_upper[k], h_k[k], std::log((1.0 - p1) / K),
                r_term_upper(instance, unc, d.env, out.rho0, -1, k));
    return out;
}

TpProgram build_lower_tp(const CmdpInstance& instance, const TransitionUncertainty& unc,
                         double p0, double p1, double lambda_c, const Vec& lambda_dk) {
    instance.validate();
    unc.validate(instance);
    if (!(lambda_c > 0.0)) throw std::invalid_argument("build_lower_tp: lambda_c <= 0");
    const int K = unc.num_constraints();
    if (lambda_dk.size() != K) throw std::invalid_argument("build_lower_tp: lambda size");
    for (int k = 0; k < K; ++k)
        if (!(lambda_dk[k] > 0.0)) throw std::invalid_argument("build_lower_tp: lambda <= 0");

    const int P = instance.num_pairs();
    const double alpha = instance.discount;
    const TpData d = make_tp_data(instance, unc);

    TpProgram out;
    ConvexProgram& prog = out.program;
    out.z_var = prog.add_variable("z");
    out.rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, out.rho0);
    prog.set_objective(AffineScalar::variable(out.z_var));

    // One block per chance row: -R <= (1-p) m, lambda <= m (bound),
    // rho'u' - R <= m, rho'l' <= R, with u'/l' the anchored aggregate bounds.
    auto add_block = [&](const Vec& w, const Vec& cost_l, const Vec& g, double p,
                         double lambda, int z_var, double xi, const char* name) {
        Vec up(P), lo(P);
        for (int p2 = 0; p2 < P; ++p2) {
            up[p2] = w.dot(unc.zeta_upper.row(p2));
            lo[p2] = w.dot(unc.zeta_lower.row(p2));
        }
        const double cap =
            1e3 * (std::max(lambda, up.maxCoeff() + std::max(0.0, -lo.minCoeff())) + 1.0);
        const int m = prog.add_variable(name, lambda, cap);
        out.m_vars.push_back(m);
        // R expression: (budget - rho'cost_l)/alpha + rho'g
        AffineScalar r = dot_expr(out.rho0, Vec(g - cost_l / alpha));
        if (z_var >= 0)
            r.add(z_var, 1.0 / alpha);
        else
            r.constant += xi / alpha;
        // -R <= (1-p) m
        AffineScalar row1;
        for (std::size_t i = 0; i < r.vars.size(); ++i) row1.add(r.vars[i], -r.coefs[i]);
        row1.constant -= r.constant;
        row1.add(m, -(1.0 - p));
        prog.add_linear_le(std::move(row1), 0.0);
        // rho'up - R <= m
        AffineScalar row2 = dot_expr(out.rho0, up);
        for (std::size_t i = 0; i < r.vars.size(); ++i) row2.add(r.vars[i], -r.coefs[i]);
        row2.constant -= r.constant;
        row2.add(m, -1.0);
        prog.add_linear_le(std::move(row2), 0.0);
        // rho'lo <= R
        AffineScalar row3 = dot_expr(out.rho0, lo);
        for (std::size_t i = 0; i < r.vars.size(); ++i) row3.add(r.vars[i], -r.coefs[i]);
        row3.constant -= r.constant;
        prog.add_linear_le(std::move(row3), 0.0);
    };

    // g' for the lower pipeline: (env_min - env_max) zeta_l, per family.
    const Vec gp_c = unc.zeta_lower * (d.env.c_min_state - d.env.c_max_state);
    add_block(d.w_c_lower, unc.c_lower, gp_c, p0, lambda_c, out.z_var, 0.0, "m_c");
    for (int k = 0; k < K; ++k) {
        const Vec gp_d = unc.zeta_lower * (d.env.d_min_state[k] - d.env.d_max_state[k]);
        add_block(d.w_d_lower[k], unc.d_lower[k], gp_d, p1, lambda_dk[k], -1,
                  instance.budgets[k], ("m_d[" + std::to_string(k) + "]").c_str());
    }
    return out;
}

namespace {

BoundResult run_tp_method(const CmdpInstance& instance, const TransitionUncertainty& unc,
                          const std::string& method, const TpSolveOptions& opts) {
    BoundResult res;
    res.method = method;
    const auto start = std::chrono::steady_clock::now();
    try {
        TpProgram built;
        if (method == kMethodTpChebyshev) {
            built = build_upper_tp(instance, unc, BoundKind::Chebyshev, opts.p0, opts.p1);
        } else if (method == kMethodTpHoeffding) {
            built = build_upper_tp(instance, unc, BoundKind::Hoeffding, opts.p0, opts.p1);
        } else if (method == kMethodTpBernstein) {
            const Vec hk = opts.bernstein_hk.value_or(
                Vec::Constant(unc.num_constraints(), opts.bernstein_h0));
            built = build_upper_tp_bernstein(instance, unc, opts.p0, opts.p1,
                                             opts.bernstein_h0, hk);
        } else if (method == kMethodTpLower) {
            const Vec lk = opts.lambda_dk.value_or(
                Vec::Constant(unc.num_constraints(), opts.lambda_c));
            built = build_lower_tp(instance, unc, opts.p0, opts.p1, opts.lambda_c, lk);
        } else {
            throw std::invalid_argument("unknown method tag: " + method);
        }
        const Solution sol = built.program.solve(opts.solver);
        res.status = sol.status;
        res.message = sol.message;
        if (sol.optimal()) {
            res.bound = sol.x[built.z_var];
            res.occupation.rho = sol.x.segment(built.rho0, instance.num_pairs());
            res.policy = recover_policy(instance, res.occupation);
            if (!built.m_vars.empty()) {
                res.aux_m_c = sol.x[built.m_vars[0]];
                if (built.m_vars.size() > 1) res.aux_m_d = sol.x[built.m_vars[1]];
            }
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

BoundReport solve_random_tp(const CmdpInstance& instance, const TransitionUncertainty& unc,
                            const std::vector<std::string>& methods,
                            const TpSolveOptions& opts) {
    if (methods.empty()) throw std::invalid_argument("solve_random_tp: no methods");
    std::vector<std::string> order;
    for (const char* tag : {kMethodTpChebyshev, kMethodTpHoeffding, kMethodTpBernstein}) {
        for (const auto& m : methods)
            if (m == tag) order.push_back(tag);
    }
    order.push_back(kMethodTpLower);

    BoundReport report;
    report.results.resize(order.size());
    if (opts.max_parallel > 1) {
        std::vector<std::future<BoundResult>> futs;
        futs.reserve(order.size());
        for (const auto& m : order)
            futs.push_back(std::async(std::launch::async, run_tp_method, std::cref(instance),
                                      std::cref(unc), m, std::cref(opts)));
        for (std::size_t i = 0; i < futs.size(); ++i) report.results[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < order.size(); ++i)
            report.results[i] = run_tp_method(instance, unc, order[i], opts);
    }

    const BoundResult* low = report.find(kMethodTpLower);
    report.lower_method = kMethodTpLower;
    if (low && low->optimal()) report.lower_bound = low->bound;
    for (const auto& r : report.results) {
        if (r.method == kMethodTpLower || !r.optimal()) continue;
        report.gaps[r.method] = gap_value(r.bound, report.lower_bound);
    }
    if (opts.with_extremal_bounds) {
        const ExtremalBounds ex =
            extremal_bounds_tp(instance, unc, opts.p0, opts.bernstein_h0);
        report.extremal_upper = ex.upper;
        report.extremal_lower = ex.lower;
        report.extremal_gap = ex.gap;
    }
    return report;
}

} // namespace jccmdp
