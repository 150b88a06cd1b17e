#include "jccmdp/validation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <numeric>
#include <stdexcept>

#include <Eigen/LU>

namespace jccmdp {

namespace {

double binom_se(double phat, int n) {
    return std::sqrt(std::max(0.0, phat * (1.0 - phat) / std::max(1, n)));
}

struct McCounts {
    long objective_hits = 0;
    long joint_hits = 0;
    std::vector<long> individual_hits;
};

McCounts mc_costs_shard(const CmdpInstance& instance, const CostUncertainty& unc,
                        const Vec& rho, double z, int n, CostCoupling sampler,
                        std::uint64_t seed) {
    Rng rng(seed);
    const int K = unc.num_constraints();
    McCounts c;
    c.individual_hits.assign(K, 0);
    for (int i = 0; i < n; ++i) {
        const CostRealization draw = sample_cost_realization(unc, sampler, rng);
        if (rho.dot(draw.c) <= z) ++c.objective_hits;
        bool all = true;
        for (int k = 0; k < K; ++k) {
            if (rho.dot(draw.d[k]) <= instance.budgets[k]) {
                ++c.individual_hits[k];
            } else {
                all = false;
            }
        }
        if (all) ++c.joint_hits;
    }
    return c;
}

} // namespace

McReport mc_check_costs(const CmdpInstance& instance, const CostUncertainty& unc,
                        const Vec& rho, double z, int n, CostCoupling sampler,
                        std::uint64_t seed, int shards) {
    if (rho.size() != instance.num_pairs())
        throw std::invalid_argument("mc_check_costs: rho size");
    shards = std::max(1, shards);
    const int per = n / shards;
    std::vector<std::future<McCounts>> futs;
    for (int s = 0; s < shards; ++s) {
        const int count = s + 1 == shards ? n - per * s : per;
        futs.push_back(std::async(shards > 1 ? std::launch::async : std::launch::deferred,
                                  mc_costs_shard, std::cref(instance), std::cref(unc),
                                  std::cref(rho), z, count, sampler,
                                  split_seed(seed, static_cast<std::uint64_t>(s))));
    }
    McCounts total;
    total.individual_hits.assign(unc.num_constraints(), 0);
    for (auto& f : futs) {
        const McCounts c = f.get();
        total.objective_hits += c.objective_hits;
        total.joint_hits += c.joint_hits;
        for (std::size_t k = 0; k < c.individual_hits.size(); ++k)
            total.individual_hits[k] += c.individual_hits[k];
    }
    McReport rep;
    rep.samples = n;
    rep.sampler = sampler == CostCoupling::CopulaComonotone ? "copula" : "independent";
    rep.objective_prob = static_cast<double>(total.objective_hits) / n;
    rep.joint_prob = static_cast<double>(total.joint_hits) / n;
    for (long h : total.individual_hits)
        rep.individual_probs.push_back(static_cast<double>(h) / n);
    rep.objective_se = binom_se(rep.objective_prob, n);
    rep.joint_se = binom_se(rep.joint_prob, n);
    return rep;
}

namespace {

McCounts mc_tp_shard(const CmdpInstance& instance, const CostUncertainty& costs,
                     const TransitionUncertainty& unc, const StationaryPolicy& f,
                     double z, int n, std::uint64_t seed) {
    Rng rng(seed);
    const int K = unc.num_constraints();
    const int S = instance.num_states;
    const double alpha = instance.discount;
    McCounts out;
    out.individual_hits.assign(K, 0);
    for (int i = 0; i < n; ++i) {
        const Mat kernel = sample_transition_realization(instance, unc, rng);
        // Costs drawn independently truncated to their bound data.
        const CostRealization draw =
            sample_cost_realization(costs, CostCoupling::Independent, rng);
        const Mat Pf = policy_transition_matrix(instance, f, kernel);
        Eigen::PartialPivLU<Mat> lu(Mat::Identity(S, S) - alpha * Pf);
        auto value = [&](const Vec& cost) {
            Vec cf = Vec::Zero(S);
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < instance.actions_per_state[s]; ++a)
                    cf[s] += f.rows[s][a] * cost[instance.pair_index(s, a)];
            return (1.0 - alpha) * instance.initial_dist.dot(lu.solve(cf));
        };
        if (value(draw.c) <= z) ++out.objective_hits;
        bool all = true;
        for (int k = 0; k < K; ++k) {
            if (value(draw.d[k]) <= instance.budgets[k]) {
                ++out.individual_hits[k];
            } else {
                all = false;
            }
        }
        if (all) ++out.joint_hits;
    }
    return out;
}

} // namespace

McReport mc_check_tp(const CmdpInstance& instance, const CostUncertainty& costs,
                     const TransitionUncertainty& unc, const StationaryPolicy& f,
                     double z, int n, std::uint64_t seed, int shards) {
    shards = std::max(1, shards);
    const int per = n / shards;
    std::vector<std::future<McCounts>> futs;
    for (int s = 0; s < shards; ++s) {
        const int count = s + 1 == shards ? n - per * s : per;
        futs.push_back(std::async(shards > 1 ? std::launch::async : std::launch::deferred,
                                  mc_tp_shard, std::cref(instance), std::cref(costs),
                                  std::cref(unc), std::cref(f), z, count,
                                  split_seed(seed, static_cast<std::uint64_t>(s))));
    }
    McCounts total;
    total.individual_hits.assign(unc.num_constraints(), 0);
    for (auto& fu : futs) {
        const McCounts c = fu.get();
        total.objective_hits += c.objective_hits;
        total.joint_hits += c.joint_hits;
        for (std::size_t k = 0; k < c.individual_hits.size(); ++k)
            total.individual_hits[k] += c.individual_hits[k];
    }
    McReport rep;
    rep.samples = n;
    rep.sampler = "tp";
    rep.objective_prob = static_cast<double>(total.objective_hits) / n;
    rep.joint_prob = static_cast<double>(total.joint_hits) / n;
    for (long h : total.individual_hits)
        rep.individual_probs.push_back(static_cast<double>(h) / n);
    rep.objective_se = binom_se(rep.objective_prob, n);
    rep.joint_se = binom_se(rep.joint_prob, n);
    return rep;
}

namespace {

// Basic feasible solutions of {A x = b, x >= 0}.
std::vector<Vec> enumerate_vertices(const Mat& A, const Vec& b) {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    std::vector<Vec> verts;
    std::vector<int> comb(m);
    std::function<void(int, int)> rec = [&](int start, int k) {
        if (k == m) {
            Mat B(m, m);
            for (int j = 0; j < m; ++j) B.col(j) = A.col(comb[j]);
            Eigen::FullPivLU<Mat> lu(B);
            if (!lu.isInvertible()) return;
            const Vec xb = lu.solve(b);
            if ((xb.array() < -1e-9).any()) return;
            Vec v = Vec::Zero(n);
            for (int j = 0; j < m; ++j) v[comb[j]] = std::max(0.0, xb[j]);
            for (const auto& u : verts)
                if ((u - v).lpNorm<Eigen::Infinity>() < 1e-9) return;
            verts.push_back(v);
            return;
        }
        for (int i = start; i < n; ++i) {
            comb[k] = i;
            rec(i + 1, k + 1);
        }
    };
    rec(0, 0);
    return verts;
}

} // namespace

ScenarioOracleResult brute_force_costs_oracle(const CmdpInstance& instance,
                                              const CostUncertainty& unc, int scenarios,
                                              std::uint64_t seed, CostCoupling sampler,
                                              int interior_points) {
    if (instance.num_pairs() > 8)
        throw std::invalid_argument("brute_force_costs_oracle: too many pairs");
    if (scenarios < 1 || scenarios > 10000)
        throw std::invalid_argument("brute_force_costs_oracle: scenario count");

    const auto [A, b] = occupation_flow_system(instance);
    const std::vector<Vec> verts = enumerate_vertices(A, b);
    if (verts.empty()) return {};

    std::vector<Vec> candidates = verts;
    for (std::size_t i = 0; i < verts.size(); ++i)
        for (std::size_t j = i + 1; j < verts.size(); ++j)
            candidates.push_back(0.5 * (verts[i] + verts[j]));
    Rng rng(split_seed(seed, 1));
    for (int t = 0; t < interior_points; ++t) {
        // Dirichlet(1) mixture over the vertex set.
        Vec w(verts.size());
        double tot = 0.0;
        for (int i = 0; i < w.size(); ++i) {
            w[i] = -std::log(uniform(rng, 1e-300, 1.0));
            tot += w[i];
        }
        Vec mix = Vec::Zero(instance.num_pairs());
        for (std::size_t i = 0; i < verts.size(); ++i) mix += (w[i] / tot) * verts[i];
        candidates.push_back(std::move(mix));
    }

    Rng srng(split_seed(seed, 2));
    std::vector<CostRealization> draws;
    draws.reserve(scenarios);
    for (int i = 0; i < scenarios; ++i)
        draws.push_back(sample_cost_realization(unc, sampler, srng));

    const int K = unc.num_constraints();
    const int need_obj = static_cast<int>(std::ceil(unc.p0 * scenarios));
    const double p1 = unc.copula.p1;
    ScenarioOracleResult res;
    std::vector<double> objective_values(scenarios);
    for (const auto& rho : candidates) {
        int joint = 0;
        for (int i = 0; i < scenarios; ++i) {
            bool all = true;
            for (int k = 0; k < K; ++k)
                if (rho.dot(draws[i].d[k]) > instance.budgets[k]) {
                    all = false;
                    break;
                }
            joint += all;
            objective_values[i] = rho.dot(draws[i].c);
        }
        if (static_cast<double>(joint) / scenarios < p1) continue;
        std::nth_element(objective_values.begin(), objective_values.begin() + (need_obj - 1),
                         objective_values.end());
        const double z = objective_values[need_obj - 1];
        if (!res.feasible || z < res.value) {
            res.feasible = true;
            res.value = z;
        }
    }
    return res;
}

GapValue gap_percent(double ub, double lb) { return gap_value(ub, lb); }

namespace {

// max (or min) of a linear functional over the occupation polytope.
double polytope_linear_opt(const CmdpInstance& instance, const Vec& weights, bool maximize) {
    ConvexProgram prog;
    const int rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, rho0);
    AffineScalar obj;
    for (int p = 0; p < weights.size(); ++p)
        obj.add(rho0 + p, maximize ? -weights[p] : weights[p]);
    prog.set_objective(obj);
    const OccupationMeasure interior =
        induced_occupation_measure(instance, uniform_policy(instance));
    const Solution sol = prog.solve_with_start(interior.rho);
    if (!sol.optimal())
        throw std::runtime_error("extremal bound LP failed: " + to_string(sol.status));
    return maximize ? -sol.objective : sol.objective;
}

} // namespace

ExtremalBounds extremal_bounds_costs(const CmdpInstance& instance,
                                     const CostUncertainty& unc, double bernstein_h0) {
    const RandomVectorSpec& c = unc.objective;
    ExtremalBounds ex;
    if (c.has_covariance()) {
        const Vec w = c.mean + safety_factor(BoundKind::Chebyshev, unc.p0) *
                                   c.covariance_column_norms();
        ex.upper[kMethodRcChebyshev] = polytope_linear_opt(instance, w, true);
    }
    if (c.lower && c.upper) {
        const Vec w = c.mean + safety_factor(BoundKind::Hoeffding, unc.p0) *
                                   Vec(*c.upper - *c.lower);
        ex.upper[kMethodRcHoeffding] = polytope_linear_opt(instance, w, true);
        ex.upper[kMethodRcBernstein] =
            polytope_linear_opt(instance, *c.upper, true) -
            std::log(1.0 - unc.p0) / bernstein_h0;
        ex.lower = polytope_linear_opt(instance, *c.lower, false);
    }
    if (c.subgaussian) {
        const Vec w = c.mean + safety_factor(BoundKind::SubGaussian, unc.p0) *
                                   Vec(*c.subgaussian);
        ex.upper[kMethodRcSubGaussian] = polytope_linear_opt(instance, w, true);
    }
    for (const auto& [method, ub] : ex.upper) {
        ex.gaps[method] = gap_value(ub, ex.lower);
        if (ex.gaps[method].applicable &&
            (!ex.gap.applicable || ex.gaps[method].percent > ex.gap.percent))
            ex.gap = ex.gaps[method];
    }
    return ex;
}

ExtremalBounds extremal_bounds_tp(const CmdpInstance& instance,
                                  const TransitionUncertainty& unc, double p0,
                                  double bernstein_h0) {
    const CostEnvelopes env = cost_envelopes(instance, unc);
    const double alpha = instance.discount;
    const int P = instance.num_pairs();

    Vec w_upper = (env.c_max_state.array() - env.c_max_state[env.anchor_c_upper]).matrix();
    w_upper[env.anchor_c_upper] = 0.0;
    Vec w_lower = (env.c_min_state.array() - env.c_min_state[env.anchor_c_lower]).matrix();
    w_lower[env.anchor_c_lower] = 0.0;

    const Vec g = unc.zeta_lower * (env.c_max_state - env.c_min_state); // g(rho) weights
    Vec width(P), up(P), lo(P);
    for (int p = 0; p < P; ++p) {
        up[p] = w_upper.dot(unc.zeta_upper.row(p));
        width[p] = w_upper.dot(unc.zeta_upper.row(p) - unc.zeta_lower.row(p));
        lo[p] = w_lower.dot(unc.zeta_lower.row(p));
    }

    ExtremalBounds ex;
    if (!unc.row_covariance.empty()) {
        Vec disp(P);
        for (int p = 0; p < P; ++p)
            disp[p] = std::sqrt(std::max(0.0, w_upper.dot(unc.row_covariance[p] * w_upper)));
        const Vec w = unc.c_upper - alpha * g +
                      alpha * safety_factor(BoundKind::Chebyshev, p0) * disp;
        ex.upper[kMethodTpChebyshev] = polytope_linear_opt(instance, w, true);
    }
    {
        const Vec w = unc.c_upper - alpha * g +
                      alpha * safety_factor(BoundKind::Hoeffding, p0) * width;
        ex.upper[kMethodTpHoeffding] = polytope_linear_opt(instance, w, true);
    }
    {
        const Vec w = unc.c_upper - alpha * g + alpha * up;
        ex.upper[kMethodTpBernstein] = polytope_linear_opt(instance, w, true) -
                                       alpha * std::log(1.0 - p0) / bernstein_h0;
    }
    {
        const Vec w = unc.c_lower + alpha * g + alpha * lo;
        ex.lower = polytope_linear_opt(instance, w, false);
    }
    for (const auto& [method, ub] : ex.upper) {
        ex.gaps[method] = gap_value(ub, ex.lower);
        if (ex.gaps[method].applicable &&
            (!ex.gap.applicable || ex.gaps[method].percent > ex.gap.percent))
            ex.gap = ex.gaps[method];
    }
    return ex;
}

} // namespace jccmdp
