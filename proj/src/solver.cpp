// Barrier interior-point backend for the convex IR.
//
// Phase I finds a strictly feasible point by minimizing a shared slack over
// the slack-shifted constraints; phase II follows the central path of
//   minimize  t * c'x + sum_i barrier_i(x)   s.t.  A x = b
// with damped Newton steps. Barriers: -ln(-f) for linear and log-sum-exp
// rows, -ln(s^2 - |v|^2) for second-order cone rows.
#include "jccmdp/convex.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>

namespace jccmdp {

namespace {

struct Ineq {
    enum Kind { Lin, Soc, Lse } kind = Lin;
    // Lin: expr(x) <= 0
    AffineScalar lin;
    // Soc: ||vec(x)|| <= rhs(x)
    AffineVec soc_vec;
    AffineScalar soc_rhs;
    // Lse: sum_g ln(sum_j w e^{a(x)}) + lin_part(x) <= 0
    std::vector<LseGroup> groups;
    AffineScalar lse_lin;

    double nu() const { return kind == Soc ? 2.0 : 1.0; }
    bool single_var() const { return kind == Lin && lin.vars.size() <= 1; }
};

struct Internal {
    int n = 0;
    Vec c;            // linear objective
    double c0 = 0.0;
    std::vector<Ineq> ineqs;
    Mat A;            // equality rows (p x n)
    Vec b;
    bool diag_fast = false;
    // Presolve: variables fixed by lb == ub are substituted out. remap maps
    // original variable ids to compiled ids (-1 when fixed).
    std::vector<int> remap;
    Vec fixed_full;   // original-sized vector carrying the fixed values
    int n_orig = 0;

    double total_nu() const {
        double s = 0.0;
        for (const auto& q : ineqs) s += q.nu();
        return s;
    }
    Vec expand(const Vec& x) const {
        Vec full = fixed_full;
        for (int v = 0; v < n_orig; ++v)
            if (remap[v] >= 0) full[v] = x[remap[v]];
        return full;
    }
    Vec restrict(const Vec& full) const {
        Vec x(n);
        for (int v = 0; v < n_orig; ++v)
            if (remap[v] >= 0) x[remap[v]] = full[v];
        return x;
    }
};

double norm_scale(const AffineScalar& e) {
    double m = 0.0;
    for (double c : e.coefs) m = std::max(m, std::abs(c));
    return m;
}

void scale_affine(AffineScalar& e, double s) {
    for (double& c : e.coefs) c *= s;
    e.constant *= s;
}

Internal compile(const ConvexProgram& p) {
    Internal in;
    in.n_orig = p.num_variables();
    in.remap.assign(in.n_orig, -1);
    in.fixed_full = Vec::Zero(in.n_orig);
    int nf = 0;
    for (int v = 0; v < in.n_orig; ++v) {
        if (p.lower_bound(v) == p.upper_bound(v)) {
            in.fixed_full[v] = p.lower_bound(v);
        } else {
            in.remap[v] = nf++;
        }
    }
    in.n = nf;

    // Rewrites an expression over the free variables, folding fixed values
    // into the constant.
    auto rewrite = [&](const AffineScalar& e) {
        AffineScalar out(e.constant);
        for (std::size_t i = 0; i < e.vars.size(); ++i) {
            const int v = e.vars[i];
            if (in.remap[v] >= 0)
                out.add(in.remap[v], e.coefs[i]);
            else
                out.constant += e.coefs[i] * in.fixed_full[v];
        }
        return out;
    };

    const AffineScalar obj = rewrite(p.objective());
    in.c = Vec::Zero(in.n);
    for (std::size_t i = 0; i < obj.vars.size(); ++i) in.c[obj.vars[i]] += obj.coefs[i];
    in.c0 = obj.constant;

    int n_eq = 0;
    for (const auto& lc : p.linear_constraints())
        if (lc.equality) ++n_eq;
    in.A = Mat::Zero(n_eq, in.n);
    in.b = Vec::Zero(n_eq);
    int row = 0;
    for (const auto& lc : p.linear_constraints()) {
        const AffineScalar expr = rewrite(lc.expr);
        if (lc.equality) {
            for (std::size_t i = 0; i < expr.vars.size(); ++i)
                in.A(row, expr.vars[i]) += expr.coefs[i];
            in.b[row] = -expr.constant;
            ++row;
        } else {
            Ineq q;
            q.kind = Ineq::Lin;
            q.lin = expr;
            const double s = norm_scale(q.lin);
            if (s > 0.0) scale_affine(q.lin, 1.0 / s);
            in.ineqs.push_back(std::move(q));
        }
    }
    for (int v = 0; v < in.n_orig; ++v) {
        if (in.remap[v] < 0) continue;
        if (p.lower_bound(v) != -kInf) {
            Ineq q;
            q.lin = AffineScalar(p.lower_bound(v)).add(in.remap[v], -1.0);
            in.ineqs.push_back(std::move(q));
        }
        if (p.upper_bound(v) != kInf) {
            Ineq q;
            q.lin = AffineScalar(-p.upper_bound(v)).add(in.remap[v], 1.0);
            in.ineqs.push_back(std::move(q));
        }
    }
    for (const auto& sc : p.soc_constraints()) {
        AffineVec vec;
        vec.reserve(sc.vec.size());
        bool all_const = true;
        for (const auto& r : sc.vec) {
            vec.push_back(rewrite(r));
            all_const = all_const && vec.back().vars.empty();
        }
        AffineScalar rhs = rewrite(sc.rhs);
        if (all_const) {
            // ||const|| <= rhs(x): a plain linear row.
            double n2 = 0.0;
            for (const auto& r : vec) n2 += r.constant * r.constant;
            Ineq q;
            q.lin = rhs;
            scale_affine(q.lin, -1.0);
            q.lin.constant += std::sqrt(n2);
            const double s = norm_scale(q.lin);
            if (s > 0.0) scale_affine(q.lin, 1.0 / s);
            in.ineqs.push_back(std::move(q));
            continue;
        }
        Ineq q;
        q.kind = Ineq::Soc;
        q.soc_vec = std::move(vec);
        q.soc_rhs = std::move(rhs);
        double s = norm_scale(q.soc_rhs);
        for (const auto& r : q.soc_vec) s = std::max(s, norm_scale(r));
        if (s > 0.0) {
            scale_affine(q.soc_rhs, 1.0 / s);
            for (auto& r : q.soc_vec) scale_affine(r, 1.0 / s);
        }
        in.ineqs.push_back(std::move(q));
    }
    for (const auto& lc : p.lse_constraints()) {
        Ineq q;
        q.kind = Ineq::Lse;
        q.groups = lc.groups;
        for (auto& g : q.groups)
            for (auto& e : g.exponents) e = rewrite(e);
        q.lse_lin = rewrite(lc.offset);
        const AffineScalar rhs = rewrite(lc.rhs);
        for (std::size_t i = 0; i < rhs.vars.size(); ++i)
            q.lse_lin.add(rhs.vars[i], -rhs.coefs[i]);
        q.lse_lin.constant -= rhs.constant;
        in.ineqs.push_back(std::move(q));
    }
    // Drop inequality rows that became constant under presolve; a positive
    // constant row is recorded as an unconditional infeasibility marker.
    std::vector<Ineq> kept;
    kept.reserve(in.ineqs.size());
    for (auto& q : in.ineqs) {
        if (q.kind == Ineq::Lin && q.lin.vars.empty()) {
            if (q.lin.constant > 0.0) {
                kept.clear();
                Ineq marker;
                marker.lin = AffineScalar(q.lin.constant);
                kept.push_back(std::move(marker));
                in.ineqs = std::move(kept);
                in.diag_fast = false;
                return in;
            }
            continue;
        }
        kept.push_back(std::move(q));
    }
    in.ineqs = std::move(kept);
    in.diag_fast = std::all_of(in.ineqs.begin(), in.ineqs.end(),
                               [](const Ineq& q) { return q.single_var(); });
    return in;
}

// True when compile() reduced the program to a constant violated row.
bool trivially_infeasible(const Internal& in) {
    return in.ineqs.size() == 1 && in.ineqs[0].kind == Ineq::Lin &&
           in.ineqs[0].lin.vars.empty() && in.ineqs[0].lin.constant > 0.0;
}

// Value of one inequality function f_i at x (constraint is f_i <= 0).
// For SOC rows returns ||v|| - s, which matches the feasibility test but
// is not the quantity the barrier differentiates.
double ineq_value(const Ineq& q, const Vec& x) {
    switch (q.kind) {
    case Ineq::Lin:
        return q.lin.eval(x);
    case Ineq::Soc: {
        double n2 = 0.0;
        for (const auto& r : q.soc_vec) {
            const double v = r.eval(x);
            n2 += v * v;
        }
        return std::sqrt(n2) - q.soc_rhs.eval(x);
    }
    case Ineq::Lse: {
        double f = q.lse_lin.eval(x);
        for (const auto& g : q.groups) {
            double mx = -kInf;
            for (const auto& e : g.exponents) mx = std::max(mx, e.eval(x));
            double s = 0.0;
            for (std::size_t j = 0; j < g.weights.size(); ++j)
                s += g.weights[j] * std::exp(g.exponents[j].eval(x) - mx);
            f += mx + std::log(s);
        }
        return f;
    }
    }
    return 0.0;
}

bool strictly_feasible(const Internal& in, const Vec& x, double* worst = nullptr) {
    double w = -kInf;
    bool ok = true;
    for (const auto& q : in.ineqs) {
        const double f = ineq_value(q, x);
        w = std::max(w, f);
        if (!(f < 0.0)) ok = false;
        if (q.kind == Ineq::Soc && !(q.soc_rhs.eval(x) > 0.0)) ok = false;
    }
    if (worst) *worst = w;
    return ok;
}

void add_outer(Mat& H, const AffineScalar& a, double scale) {
    for (std::size_t i = 0; i < a.vars.size(); ++i)
        for (std::size_t j = 0; j < a.vars.size(); ++j)
            H(a.vars[i], a.vars[j]) += scale * a.coefs[i] * a.coefs[j];
}

struct DenseGrad {
    std::vector<int> vars;
    std::vector<double> coefs;
    void clear() { vars.clear(); coefs.clear(); }
    void add(const AffineScalar& a, double scale) {
        for (std::size_t i = 0; i < a.vars.size(); ++i) {
            vars.push_back(a.vars[i]);
            coefs.push_back(scale * a.coefs[i]);
        }
    }
    void add_to(Vec& g, double scale) const {
        for (std::size_t i = 0; i < vars.size(); ++i) g[vars[i]] += scale * coefs[i];
    }
    void add_outer_to(Mat& H, double scale) const {
        for (std::size_t i = 0; i < vars.size(); ++i)
            for (std::size_t j = 0; j < vars.size(); ++j)
                H(vars[i], vars[j]) += scale * coefs[i] * coefs[j];
    }
    void add_diag_to(Vec& d, double scale) const {
        for (std::size_t i = 0; i < vars.size(); ++i)
            for (std::size_t j = 0; j < vars.size(); ++j)
                if (vars[i] == vars[j]) d[vars[i]] += scale * coefs[i] * coefs[j];
    }
};

// Barrier value, gradient, and Hessian of one inequality. Returns false when
// x is outside the domain. Exactly one of (H, hdiag) is written.
bool barrier_terms(const Ineq& q, const Vec& x, double& phi, Vec& grad, Mat* H,
                   Vec* hdiag, DenseGrad& scratch) {
    switch (q.kind) {
    case Ineq::Lin: {
        const double f = q.lin.eval(x);
        if (!(f < 0.0)) return false;
        phi += -std::log(-f);
        const double inv = 1.0 / (-f);
        q.lin.add_gradient(grad, inv);
        if (hdiag) {
            for (std::size_t i = 0; i < q.lin.vars.size(); ++i)
                (*hdiag)[q.lin.vars[i]] += q.lin.coefs[i] * q.lin.coefs[i] * inv * inv;
        } else {
            add_outer(*H, q.lin, inv * inv);
        }
        return true;
    }
    case Ineq::Soc: {
        const double s = q.soc_rhs.eval(x);
        if (!(s > 0.0)) return false;
        double n2 = 0.0;
        std::vector<double> vals(q.soc_vec.size());
        for (std::size_t i = 0; i < q.soc_vec.size(); ++i) {
            vals[i] = q.soc_vec[i].eval(x);
            n2 += vals[i] * vals[i];
        }
        const double u = s * s - n2;
        if (!(u > 0.0)) return false;
        phi += -std::log(u);
        // grad(u) = 2 s c - 2 sum v_i F_i
        scratch.clear();
        scratch.add(q.soc_rhs, 2.0 * s);
        for (std::size_t i = 0; i < q.soc_vec.size(); ++i)
            scratch.add(q.soc_vec[i], -2.0 * vals[i]);
        scratch.add_to(grad, -1.0 / u);
        if (hdiag) {
            scratch.add_diag_to(*hdiag, 1.0 / (u * u));
            for (const auto& r : q.soc_vec) {
                for (std::size_t i = 0; i < r.vars.size(); ++i)
                    (*hdiag)[r.vars[i]] += 2.0 * r.coefs[i] * r.coefs[i] / u;
            }
            for (std::size_t i = 0; i < q.soc_rhs.vars.size(); ++i)
                (*hdiag)[q.soc_rhs.vars[i]] -=
                    2.0 * q.soc_rhs.coefs[i] * q.soc_rhs.coefs[i] / u;
        } else {
            scratch.add_outer_to(*H, 1.0 / (u * u));
            for (const auto& r : q.soc_vec) add_outer(*H, r, 2.0 / u);
            add_outer(*H, q.soc_rhs, -2.0 / u);
        }
        return true;
    }
    case Ineq::Lse: {
        double f = q.lse_lin.eval(x);
        scratch.clear();
        scratch.add(q.lse_lin, 1.0);
        // Accumulate convex curvature of f separately: Hf = sum_g group terms.
        struct GroupGrad {
            DenseGrad mean;
            std::vector<double> lambda;
        };
        std::vector<GroupGrad> ggs;
        ggs.reserve(q.groups.size());
        for (const auto& g : q.groups) {
            double mx = -kInf;
            std::vector<double> ev(g.exponents.size());
            for (std::size_t j = 0; j < g.exponents.size(); ++j) {
                ev[j] = g.exponents[j].eval(x);
                mx = std::max(mx, ev[j]);
            }
            double den = 0.0;
            std::vector<double> lam(g.weights.size());
            for (std::size_t j = 0; j < g.weights.size(); ++j) {
                lam[j] = g.weights[j] * std::exp(ev[j] - mx);
                den += lam[j];
            }
            f += mx + std::log(den);
            GroupGrad gg;
            for (std::size_t j = 0; j < lam.size(); ++j) {
                lam[j] /= den;
                gg.mean.add(g.exponents[j], lam[j]);
                scratch.add(g.exponents[j], lam[j]);
            }
            gg.lambda = std::move(lam);
            ggs.push_back(std::move(gg));
        }
        if (!(f < 0.0)) return false;
        phi += -std::log(-f);
        const double inv = 1.0 / (-f);
        scratch.add_to(grad, inv);
        if (hdiag) {
            scratch.add_diag_to(*hdiag, inv * inv);
            for (std::size_t gi = 0; gi < q.groups.size(); ++gi) {
                const auto& g = q.groups[gi];
                for (std::size_t j = 0; j < g.exponents.size(); ++j) {
                    for (std::size_t a = 0; a < g.exponents[j].vars.size(); ++a)
                        (*hdiag)[g.exponents[j].vars[a]] +=
                            inv * ggs[gi].lambda[j] * g.exponents[j].coefs[a] *
                            g.exponents[j].coefs[a];
                }
                ggs[gi].mean.add_diag_to(*hdiag, -inv);
            }
        } else {
            scratch.add_outer_to(*H, inv * inv);
            for (std::size_t gi = 0; gi < q.groups.size(); ++gi) {
                const auto& g = q.groups[gi];
                for (std::size_t j = 0; j < g.exponents.size(); ++j)
                    add_outer(*H, g.exponents[j], inv * ggs[gi].lambda[j]);
                ggs[gi].mean.add_outer_to(*H, -inv);
            }
        }
        return true;
    }
    }
    return false;
}

double barrier_value(const Internal& in, const Vec& x) {
    double phi = 0.0;
    for (const auto& q : in.ineqs) {
        switch (q.kind) {
        case Ineq::Lin: {
            const double f = q.lin.eval(x);
            if (!(f < 0.0)) return kInf;
            phi -= std::log(-f);
            break;
        }
        case Ineq::Soc: {
            const double s = q.soc_rhs.eval(x);
            if (!(s > 0.0)) return kInf;
            double n2 = 0.0;
            for (const auto& r : q.soc_vec) {
                const double v = r.eval(x);
                n2 += v * v;
            }
            const double u = s * s - n2;
            if (!(u > 0.0)) return kInf;
            phi -= std::log(u);
            break;
        }
        case Ineq::Lse: {
            const double f = ineq_value(q, x);
            if (!(f < 0.0)) return kInf;
            phi -= std::log(-f);
            break;
        }
        }
    }
    return phi;
}

struct BarrierOutcome {
    enum What { Converged, EarlyStop, Unbounded, Stalled, LowerCertified } what = Converged;
    Vec x;
    double gap = kInf;
    int newton = 0;
    int centers = 0;
    // Certified lower bound on the optimal objective: best c'x - nu/t seen
    // at a completed centering stage.
    double obj_lower = -kInf;
};

// Minimizes c'x subject to the compiled constraints, starting from a strictly
// feasible x satisfying A x = b. `early` (optional) is checked after every
// accepted step and aborts the run when it returns true.
BarrierOutcome run_barrier(const Internal& in, Vec x, const SolverOptions& opts,
                           double gap_target, double reg,
                           const std::function<bool(const Vec&)>& early,
                           double stop_if_lower_above = kInf) {
    BarrierOutcome out;
    const int n = in.n;
    const int p = static_cast<int>(in.A.rows());
    const double m_nu = std::max(1.0, in.total_nu());
    double t = 1.0;
    const double mu = 20.0;
    const bool verbose = opts.verbose;

    Eigen::LDLT<Mat> schur_ldlt;
    Eigen::PartialPivLU<Mat> kkt_lu;
    DenseGrad scratch;

    // Least-squares pullback onto A x = b, applied between centering stages
    // when it does not break strict feasibility.
    Eigen::LDLT<Mat> aat_ldlt;
    if (p > 0) aat_ldlt.compute(in.A * in.A.transpose());
    auto polish_equalities = [&](Vec& xc) {
        if (p == 0) return;
        const Vec r = in.b - in.A * xc;
        if (r.lpNorm<Eigen::Infinity>() < 1e-13) return;
        const Vec xp = xc + in.A.transpose() * aat_ldlt.solve(r);
        if (strictly_feasible(in, xp)) xc = xp;
    };

    for (int outer = 0; outer < 80; ++outer) {
        bool stalled = false;
        for (int it = 0; it < opts.max_iterations; ++it) {
            Vec grad = t * in.c;
            double phi = 0.0;
            Mat H;
            Vec hdiag;
            bool ok = true;
            if (in.diag_fast) {
                hdiag = Vec::Constant(n, reg);
                for (const auto& q : in.ineqs)
                    ok = ok && barrier_terms(q, x, phi, grad, nullptr, &hdiag, scratch);
            } else {
                H = Mat::Zero(n, n);
                for (const auto& q : in.ineqs)
                    ok = ok && barrier_terms(q, x, phi, grad, &H, nullptr, scratch);
                H.diagonal().array() += reg;
            }
            if (!ok) {
                // Iterate drifted out of the domain; should not happen.
                out.what = BarrierOutcome::Stalled;
                out.x = x;
                return out;
            }

            // Newton step with the current equality residual on the RHS, so
            // roundoff and regularization drift off A x = b self-corrects.
            // One round of iterative refinement keeps the equality part of
            // the step accurate even at large t, where the mixed scales in
            // the KKT system otherwise cost ~eps*t of absolute residual.
            Vec dx(n);
            if (in.diag_fast) {
                if (p > 0) {
                    const Vec eq_res = in.b - in.A * x;
                    const Vec dinv = hdiag.cwiseInverse();
                    const Mat S = in.A * dinv.asDiagonal() * in.A.transpose();
                    schur_ldlt.compute(S);
                    Vec w = schur_ldlt.solve(-(in.A * dinv.cwiseProduct(grad)) - eq_res);
                    dx = -dinv.cwiseProduct(grad + in.A.transpose() * w);
                    for (int refine = 0; refine < 2; ++refine) {
                        const Vec rg = -grad - hdiag.cwiseProduct(dx) - in.A.transpose() * w;
                        const Vec re = eq_res - in.A * dx;
                        const Vec dw = schur_ldlt.solve(in.A * dinv.cwiseProduct(rg) - re);
                        dx += dinv.cwiseProduct(rg - in.A.transpose() * dw);
                        w += dw;
                    }
                } else {
                    dx = -grad.cwiseQuotient(hdiag);
                }
            } else {
                Mat K = Mat::Zero(n + p, n + p);
                K.topLeftCorner(n, n) = H;
                if (p > 0) {
                    K.topRightCorner(n, p) = in.A.transpose();
                    K.bottomLeftCorner(p, n) = in.A;
                }
                Vec rhs = Vec::Zero(n + p);
                rhs.head(n) = -grad;
                if (p > 0) rhs.tail(p) = in.b - in.A * x;
                kkt_lu.compute(K);
                Vec sol = kkt_lu.solve(rhs);
                sol += kkt_lu.solve(rhs - K * sol);
                dx = sol.head(n);
            }

            const double lambda2 = -grad.dot(dx);
            if (!std::isfinite(lambda2)) {
                out.what = BarrierOutcome::Stalled;
                out.x = x;
                return out;
            }
            // Affine-invariant Newton decrement; lambda <= 0.03 is close
            // enough to the central path for the nu/t gap bound.
            if (lambda2 / 2.0 <= 5e-4) break;

            // Backtracking: restore domain membership first, then Armijo.
            const double psi0 = t * in.c.dot(x) + phi;
            double alpha = 1.0;
            int bt = 0;
            for (; bt < 80; ++bt) {
                const Vec xn = x + alpha * dx;
                const double phin = barrier_value(in, xn);
                if (std::isfinite(phin)) {
                    const double psin = t * in.c.dot(xn) + phin;
                    if (psin <= psi0 - 0.25 * alpha * lambda2 + 1e-12 * std::abs(psi0))
                        break;
                }
                alpha *= 0.5;
            }
            if (bt == 80) {
                stalled = true;
                break;
            }
            x += alpha * dx;
            ++out.newton;
            if (early && early(x)) {
                out.what = BarrierOutcome::EarlyStop;
                out.x = x;
                return out;
            }
            if (in.c.dot(x) < -1e18) {
                out.what = BarrierOutcome::Unbounded;
                out.x = x;
                return out;
            }
        }
        polish_equalities(x);
        ++out.centers;
        out.gap = m_nu / t;
        if (verbose)
            std::cerr << "[barrier] t=" << t << " obj=" << in.c.dot(x) + in.c0
                      << " gap<=" << out.gap << "\n";
        if (stalled) {
            out.what = BarrierOutcome::Stalled;
            out.x = x;
            return out;
        }
        out.obj_lower = std::max(out.obj_lower, in.c.dot(x) + in.c0 - out.gap);
        if (out.obj_lower > stop_if_lower_above) {
            out.what = BarrierOutcome::LowerCertified;
            out.x = x;
            return out;
        }
        const double target =
            std::max(gap_target, opts.gap_rel * std::abs(in.c.dot(x) + in.c0));
        if (out.gap <= target) break;
        t *= mu;
    }
    out.x = x;
    out.what = BarrierOutcome::Converged;
    return out;
}

// Least-norm solution of A x = b; ok=false when the system is inconsistent.
Vec equality_start(const Internal& in, bool& ok) {
    ok = true;
    if (in.A.rows() == 0) return Vec::Zero(in.n);
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(in.A);
    Vec x = cod.solve(in.b);
    const double resid = (in.A * x - in.b).lpNorm<Eigen::Infinity>();
    if (resid > 1e-7 * (1.0 + in.b.lpNorm<Eigen::Infinity>())) ok = false;
    return x;
}

// Phase-I internal program: one extra slack variable shifted into every
// inequality, objective = slack, slack >= -1.
Internal make_phase1(const Internal& in) {
    Internal ph;
    ph.n = in.n + 1;
    const int sv = in.n;
    ph.c = Vec::Zero(ph.n);
    ph.c[sv] = 1.0;
    ph.A = Mat::Zero(in.A.rows(), ph.n);
    ph.A.leftCols(in.n) = in.A;
    ph.b = in.b;
    ph.ineqs = in.ineqs;
    for (auto& q : ph.ineqs) {
        switch (q.kind) {
        case Ineq::Lin: q.lin.add(sv, -1.0); break;
        case Ineq::Soc: q.soc_rhs.add(sv, 1.0); break;
        case Ineq::Lse: q.lse_lin.add(sv, -1.0); break;
        }
    }
    Ineq cap;
    cap.lin = AffineScalar(-1.0).add(sv, -1.0); // slack >= -1
    ph.ineqs.push_back(std::move(cap));
    ph.diag_fast = false;
    return ph;
}

struct Attempt {
    SolveStatus status = SolveStatus::NumericalFailure;
    Vec x;
    SolverStats stats;
    std::string message;
};

Attempt solve_once(const Internal& in, const SolverOptions& opts, double gap_target,
                   double reg, const Vec* warm) {
    Attempt at;
    const int n = in.n;

    // Pure equality-constrained linear program.
    if (in.ineqs.empty()) {
        bool ok = true;
        Vec x0 = equality_start(in, ok);
        if (!ok) {
            at.status = SolveStatus::Infeasible;
            at.message = "inconsistent equality constraints";
            return at;
        }
        Vec cres = in.c;
        if (in.A.rows() > 0) {
            Eigen::CompleteOrthogonalDecomposition<Mat> cod(
                Mat(in.A.transpose()));
            cres = in.c - in.A.transpose() * cod.solve(in.c);
        }
        if (cres.lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + in.c.lpNorm<Eigen::Infinity>())) {
            at.status = SolveStatus::Unbounded;
            return at;
        }
        at.status = SolveStatus::Optimal;
        at.x = x0;
        at.stats.duality_gap = 0.0;
        return at;
    }

    Vec x_strict;
    bool have_strict = false;
    if (warm && warm->size() == n) {
        double eqres = 0.0;
        if (in.A.rows() > 0) eqres = (in.A * (*warm) - in.b).lpNorm<Eigen::Infinity>();
        if (eqres <= 1e-9 && strictly_feasible(in, *warm)) {
            x_strict = *warm;
            have_strict = true;
        }
    }

    if (!have_strict) {
        bool ok = true;
        Vec x0 = equality_start(in, ok);
        if (!ok) {
            at.status = SolveStatus::Infeasible;
            at.message = "inconsistent equality constraints";
            return at;
        }
        double worst = 0.0;
        if (strictly_feasible(in, x0, &worst)) {
            x_strict = x0;
            have_strict = true;
        } else {
            Internal ph = make_phase1(in);
            Vec xs(ph.n);
            xs.head(n) = x0;
            // Strict start for every shifted row, including SOC branch s>0.
            double need = worst;
            for (const auto& q : in.ineqs)
                if (q.kind == Ineq::Soc)
                    need = std::max(need, -q.soc_rhs.eval(x0));
            xs[n] = std::max(0.0, need) + std::max(1.0, 0.1 * std::abs(need));
            auto early = [&](const Vec& xc) {
                return strictly_feasible(in, xc.head(n));
            };
            // Certified strictly positive feasibility margin means no
            // feasible point exists; stop as soon as the bound clears zero.
            BarrierOutcome ph_out = run_barrier(ph, xs, opts, 1e-10, reg, early, 1e-7);
            at.stats.newton_iterations += ph_out.newton;
            if (ph_out.what == BarrierOutcome::EarlyStop ||
                strictly_feasible(in, ph_out.x.head(n))) {
                x_strict = ph_out.x.head(n);
                have_strict = true;
            } else if (ph_out.what == BarrierOutcome::LowerCertified ||
                       ph_out.obj_lower > 1e-9) {
                at.status = SolveStatus::Infeasible;
                std::ostringstream msg;
                msg << "infeasibility margin >= " << ph_out.obj_lower;
                at.message = msg.str();
                return at;
            } else if (ph_out.what == BarrierOutcome::Converged) {
                // Margin pinched between -1e-9 and ~0: no strictly feasible
                // point; surface as infeasible with the borderline flagged.
                at.status = SolveStatus::Infeasible;
                std::ostringstream msg;
                msg << "borderline phase-1 margin " << ph_out.x[n] << " (gap "
                    << ph_out.gap << ")";
                at.message = msg.str();
                return at;
            } else {
                at.status = SolveStatus::NumericalFailure;
                at.message = "phase-1 breakdown";
                return at;
            }
        }
    }

    BarrierOutcome o = run_barrier(in, x_strict, opts, gap_target, reg, {});
    at.stats.newton_iterations += o.newton;
    at.stats.centering_steps = o.centers;
    at.stats.duality_gap = o.gap;
    at.x = o.x;
    switch (o.what) {
    case BarrierOutcome::Converged:
        at.status = SolveStatus::Optimal;
        break;
    case BarrierOutcome::Unbounded:
        at.status = SolveStatus::Unbounded;
        break;
    case BarrierOutcome::Stalled: {
        // Accept the incumbent when the certified gap is still decent.
        const double obj = in.c.dot(o.x) + in.c0;
        if (o.gap <= 1e-5 * std::max(1.0, std::abs(obj))) {
            at.status = SolveStatus::Optimal;
            at.message = "stalled; accepted at gap " + std::to_string(o.gap);
        } else {
            at.status = SolveStatus::NumericalFailure;
            at.message = "newton stall at gap " + std::to_string(o.gap);
        }
        break;
    }
    default:
        at.status = SolveStatus::NumericalFailure;
        break;
    }
    return at;
}

} // namespace

Solution ConvexProgram::solve(const SolverOptions& opts) const {
    return solve_with_start(Vec(), opts);
}

Solution ConvexProgram::solve_with_start(const Vec& hint, const SolverOptions& opts) const {
    SolverOptions o = opts;
    if (const char* env = std::getenv("JCCMDP_VERBOSE"); env && env[0] && env[0] != '0')
        o.verbose = true;
    Internal in = compile(*this);

    Solution sol;
    if (trivially_infeasible(in)) {
        sol.status = SolveStatus::Infeasible;
        sol.message = "constant constraint violated after presolve";
        return sol;
    }
    if (in.n == 0) {
        // Everything fixed: just evaluate.
        const Vec full = in.fixed_full;
        sol.x = full;
        sol.objective = objective_.eval(full);
        sol.stats.max_residual = max_violation(full);
        sol.stats.duality_gap = 0.0;
        sol.status = sol.stats.max_residual <= o.tolerance ? SolveStatus::Optimal
                                                           : SolveStatus::Infeasible;
        return sol;
    }

    Vec warm_restricted;
    const Vec* warm = nullptr;
    if (hint.size() == num_variables()) {
        warm_restricted = in.restrict(hint);
        warm = &warm_restricted;
    }

    Attempt at = solve_once(in, o, o.gap_abs, 1e-11, warm);
    if (at.status == SolveStatus::NumericalFailure) {
        // One retry at relaxed tolerance before surfacing the failure.
        at = solve_once(in, o, 10.0 * o.gap_abs, 1e-9, warm);
    }
    sol.status = at.status;
    sol.stats = at.stats;
    sol.message = at.message;
    if (at.x.size() == in.n) {
        sol.x = in.expand(at.x);
        sol.objective = objective_.eval(sol.x);
        sol.stats.max_residual = max_violation(sol.x);
        if (sol.status == SolveStatus::Optimal && sol.stats.max_residual > 1e-6) {
            sol.status = SolveStatus::NumericalFailure;
            sol.message = "residual check failed: " + std::to_string(sol.stats.max_residual);
        }
    }
    return sol;
}

} // namespace jccmdp
