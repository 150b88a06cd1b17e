#include "jccmdp/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace jccmdp {

namespace {

// Stream ids for the seed split; appending new streams keeps old ones stable.
enum Stream : std::uint64_t {
    kGamma = 0,
    kCovObjective = 1,
    kCovConstraintBase = 100,    // + k
    kBoundsObjective = 200,
    kBoundsConstraintBase = 300, // + k
    kKernel = 400,
    kMeanObjective = 500,
    kMeanConstraintBase = 600,   // + k
    kBudgets = 700,
    kPerturbation = 800,
};

Vec random_simplex_point(Rng& rng, int n) {
    Vec g(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        g[i] = uniform(rng, 0.0, 1.0);
        total += g[i];
    }
    g /= total;
    g[n - 1] += 1.0 - g.sum(); // pin the sum to exactly one
    return g;
}

Vec uniform_vec(Rng& rng, int n, double lo, double hi) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
    return v;
}

RandomVectorSpec make_cost_spec(Vec mean, Vec diag_cov, int n_bound_samples,
                                std::uint64_t bound_seed) {
    RandomVectorSpec spec;
    auto [upper, lower] =
        cost_bounds_from_samples(mean, diag_cov, n_bound_samples, bound_seed);
    spec.mean = std::move(mean);
    spec.subgaussian = diag_cov.cwiseSqrt();
    spec.diag_covariance = std::move(diag_cov);
    spec.upper = std::move(upper);
    spec.lower = std::move(lower);
    spec.independent_components = true;
    spec.validate();
    return spec;
}

} // namespace

void QueueingConfig::validate() const {
    if (max_queue_length < 1) throw std::invalid_argument("queueing: L < 1");
    if (service_levels.empty() || admission_levels.empty())
        throw std::invalid_argument("queueing: empty action levels");
    for (double a1 : service_levels)
        if (!(a1 > 0.0 && a1 < 1.0))
            throw std::invalid_argument("queueing: service levels must lie in (0,1)");
    for (double a2 : admission_levels)
        if (!(a2 >= 0.0 && a2 < 1.0))
            throw std::invalid_argument("queueing: admission levels must lie in [0,1)");
    if (!(discount > 0.0 && discount < 1.0))
        throw std::invalid_argument("queueing: discount");
    if (budgets.size() != 2) throw std::invalid_argument("queueing: needs two budgets");
    if (bound_samples < 2) throw std::invalid_argument("queueing: bound_samples < 2");
    if (!(cov_low >= 0.0 && cov_high >= cov_low))
        throw std::invalid_argument("queueing: covariance interval");
}

std::pair<CmdpInstance, CostUncertainty> queueing_instance(const QueueingConfig& cfg) {
    cfg.validate();
    const int L = cfg.max_queue_length;
    const int n1 = static_cast<int>(cfg.service_levels.size());
    const int n2 = static_cast<int>(cfg.admission_levels.size());
    const int na = n1 * n2;

    CmdpInstance inst;
    inst.num_states = L + 1;
    inst.actions_per_state.assign(L + 1, na);
    inst.discount = cfg.discount;
    inst.budgets = Eigen::Map<const Vec>(cfg.budgets.data(), cfg.budgets.size());
    {
        Rng rng(split_seed(cfg.seed, kGamma));
        inst.initial_dist = random_simplex_point(rng, L + 1);
    }
    inst.finalize();
    inst.kernel.resize(inst.num_pairs());
    for (int s = 0; s <= L; ++s) {
        for (int i1 = 0; i1 < n1; ++i1) {
            for (int i2 = 0; i2 < n2; ++i2) {
                const double a1 = cfg.service_levels[i1];
                const double a2 = cfg.admission_levels[i2];
                KernelRow& row = inst.kernel[inst.pair_index(s, i1 * n2 + i2)];
                if (s == L) {
                    row.emplace_back(L - 1, a1);
                    row.emplace_back(L, 1.0 - a1);
                } else if (s == 0) {
                    const double up = (1.0 - a1) * a2;
                    if (up > 0.0) row.emplace_back(1, up);
                    row.emplace_back(0, 1.0 - up);
                } else {
                    const double down = a1 * (1.0 - a2);
                    const double up = (1.0 - a1) * a2;
                    if (down > 0.0) row.emplace_back(s - 1, down);
                    if (up > 0.0) row.emplace_back(s + 1, up);
                    row.emplace_back(s, 1.0 - down - up); // exact complement
                }
            }
        }
    }
    inst.validate();

    const int n = inst.num_pairs();
    Vec mean_c(n), mean_d1(n), mean_d2(n);
    for (int s = 0; s <= L; ++s)
        for (int i1 = 0; i1 < n1; ++i1)
            for (int i2 = 0; i2 < n2; ++i2) {
                const int p = inst.pair_index(s, i1 * n2 + i2);
                mean_c[p] = s;
                mean_d1[p] = 3.0 * std::pow(1.0 + cfg.service_levels[i1], 2);
                mean_d2[p] = 10.0 - 3.0 * cfg.admission_levels[i2];
            }

    auto draw_cov = [&](std::uint64_t stream) {
        Rng rng(split_seed(cfg.seed, stream));
        return uniform_vec(rng, n, cfg.cov_low, cfg.cov_high);
    };
    CostUncertainty unc;
    unc.objective = make_cost_spec(mean_c, draw_cov(kCovObjective), cfg.bound_samples,
                                   split_seed(cfg.seed, kBoundsObjective));
    unc.constraints.push_back(make_cost_spec(mean_d1, draw_cov(kCovConstraintBase + 0),
                                             cfg.bound_samples,
                                             split_seed(cfg.seed, kBoundsConstraintBase + 0)));
    unc.constraints.push_back(make_cost_spec(mean_d2, draw_cov(kCovConstraintBase + 1),
                                             cfg.bound_samples,
                                             split_seed(cfg.seed, kBoundsConstraintBase + 1)));
    unc.copula.theta = cfg.theta;
    unc.copula.p1 = cfg.p1;
    unc.p0 = cfg.p0;
    unc.validate(inst);
    return {std::move(inst), std::move(unc)};
}

void GarnetConfig::validate() const {
    if (num_states < 1 || num_actions < 1) throw std::invalid_argument("garnet: sizes");
    if (branching < 1 || branching > num_states)
        throw std::invalid_argument("garnet: branching outside [1, |S|]");
    if (num_constraints < 0) throw std::invalid_argument("garnet: K < 0");
    if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("garnet: discount");
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("garnet: eta outside [0,1]");
    if (bound_samples < 2) throw std::invalid_argument("garnet: bound_samples < 2");
}

GarnetInstance garnet_instance(const GarnetConfig& cfg) {
    cfg.validate();
    const int S = cfg.num_states;
    GarnetInstance out;
    CmdpInstance& inst = out.instance;
    inst.num_states = S;
    inst.actions_per_state.assign(S, cfg.num_actions);
    inst.discount = cfg.discount;
    {
        Rng rng(split_seed(cfg.seed, kGamma));
        inst.initial_dist = random_simplex_point(rng, S);
    }
    {
        Rng rng(split_seed(cfg.seed, kBudgets));
        inst.budgets = uniform_vec(rng, cfg.num_constraints, cfg.budget_low, cfg.budget_high);
    }
    inst.finalize();
    inst.kernel.resize(inst.num_pairs());
    {
        Rng rng(split_seed(cfg.seed, kKernel));
        std::vector<int> states(S);
        for (int p = 0; p < inst.num_pairs(); ++p) {
            std::iota(states.begin(), states.end(), 0);
            // partial Fisher-Yates: |B_F| distinct reachable states
            for (int i = 0; i < cfg.branching; ++i) {
                const int j = i + static_cast<int>(uniform(rng, 0.0, 1.0) * (S - i));
                std::swap(states[i], states[std::min(j, S - 1)]);
            }
            std::vector<int> reach(states.begin(), states.begin() + cfg.branching);
            std::sort(reach.begin(), reach.end());
            Vec cuts(cfg.branching + 1);
            cuts[0] = 0.0;
            for (int i = 1; i < cfg.branching; ++i) cuts[i] = uniform(rng, 0.0, 1.0);
            cuts[cfg.branching] = 1.0;
            std::sort(cuts.begin() + 1, cuts.end() - 1);
            double acc = 0.0;
            for (int i = 0; i < cfg.branching; ++i) {
                double prob = (i + 1 == cfg.branching) ? 1.0 - acc : cuts[i + 1] - cuts[i];
                acc += prob;
                inst.kernel[p].emplace_back(reach[i], prob);
            }
        }
    }
    inst.validate();

    const int n = inst.num_pairs();
    auto stream_vec = [&](std::uint64_t stream, double lo, double hi) {
        Rng rng(split_seed(cfg.seed, stream));
        return uniform_vec(rng, n, lo, hi);
    };
    CostUncertainty& costs = out.costs;
    costs.objective = make_cost_spec(stream_vec(kMeanObjective, cfg.obj_mean_low, cfg.obj_mean_high),
                                     stream_vec(kCovObjective, cfg.cov_low, cfg.cov_high),
                                     cfg.bound_samples, split_seed(cfg.seed, kBoundsObjective));
    for (int k = 0; k < cfg.num_constraints; ++k) {
        costs.constraints.push_back(make_cost_spec(
            stream_vec(kMeanConstraintBase + k, cfg.con_mean_low, cfg.con_mean_high),
            stream_vec(kCovConstraintBase + k, cfg.cov_low, cfg.cov_high),
            cfg.bound_samples, split_seed(cfg.seed, kBoundsConstraintBase + k)));
    }
    costs.copula.theta = cfg.theta;
    costs.copula.p1 = cfg.p1;
    costs.p0 = cfg.p0;
    costs.validate(inst);

    out.transitions = perturbation_bounds(inst, cfg.eta, cfg.bound_samples,
                                          split_seed(cfg.seed, kPerturbation),
                                          cfg.covariance_entry_cap);
    out.transitions.c_upper = *costs.objective.upper;
    out.transitions.c_lower = *costs.objective.lower;
    for (int k = 0; k < cfg.num_constraints; ++k) {
        out.transitions.d_upper.push_back(*costs.constraints[k].upper);
        out.transitions.d_lower.push_back(*costs.constraints[k].lower);
    }
    out.transitions.validate(inst);
    return out;
}

std::pair<Vec, Vec> cost_bounds_from_samples(const Vec& mean, const Vec& diag_cov, int n,
                                             std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("cost_bounds_from_samples: n < 2");
    const int dim = static_cast<int>(mean.size());
    Vec upper(dim), lower(dim);
    for (int i = 0; i < dim; ++i) {
        const double sd = std::sqrt(std::max(0.0, diag_cov[i]));
        Rng rng(split_seed(seed, static_cast<std::uint64_t>(i)));
        double hi = -kInf, lo = kInf;
        for (int t = 0; t < n; ++t) {
            const double x = mean[i] + sd * standard_normal(rng);
            hi = std::max(hi, x);
            lo = std::min(lo, x);
        }
        upper[i] = sd == 0.0 ? mean[i] : hi;
        lower[i] = sd == 0.0 ? mean[i] : lo;
    }
    return {upper, lower};
}

TransitionUncertainty perturbation_bounds(const CmdpInstance& instance, double eta, int n,
                                          std::uint64_t seed,
                                          std::size_t covariance_entry_cap) {
    if (eta < 0.0) throw std::invalid_argument("perturbation_bounds: eta < 0");
    const int P = instance.num_pairs();
    const int S = instance.num_states;
    TransitionUncertainty unc;
    unc.zeta_upper = Mat::Zero(P, S);
    unc.zeta_lower = Mat::Zero(P, S);
    const Mat mean = dense_kernel(instance);

    const bool with_cov = static_cast<std::size_t>(P) * S * S <= covariance_entry_cap;
    if (with_cov) unc.row_covariance.resize(P);
    if (eta == 0.0) {
        if (with_cov)
            for (auto& c : unc.row_covariance) c = Mat::Zero(S, S);
        return unc;
    }

    Mat draws; // n x S buffer, reused per pair
    if (with_cov) draws.resize(n, S);
    for (int p = 0; p < P; ++p) {
        for (int s2 = 0; s2 < S; ++s2) {
            const double mu = mean(p, s2);
            const double lo = -eta * mu;
            const double hi = eta * (1.0 - mu);
            Rng rng(split_seed(seed, static_cast<std::uint64_t>(p) * S + s2));
            double zu = -kInf, zl = kInf;
            for (int t = 0; t < n; ++t) {
                const double x = uniform(rng, lo, hi);
                zu = std::max(zu, x);
                zl = std::min(zl, x);
                if (with_cov) draws(t, s2) = x;
            }
            if (eta == 0.0) {
                zu = zl = 0.0;
            }
            unc.zeta_upper(p, s2) = std::max(0.0, zu);
            unc.zeta_lower(p, s2) = mu == 0.0 ? 0.0 : std::min(0.0, zl);
        }
        if (with_cov) {
            const Vec colmean = draws.colwise().mean();
            Mat centered = draws.rowwise() - colmean.transpose();
            unc.row_covariance[p] = centered.transpose() * centered / (n - 1.0);
        }
    }
    return unc;
}

CostRealization sample_cost_realization(const CostUncertainty& unc, CostCoupling coupling,
                                        std::uint64_t seed) {
    Rng rng(seed);
    return sample_cost_realization(unc, coupling, rng);
}

namespace {

double trunc_component(const RandomVectorSpec& spec, int i, double u) {
    const double sd = spec.diag_covariance ? std::sqrt(std::max(0.0, (*spec.diag_covariance)[i]))
                      : spec.covariance    ? std::sqrt(std::max(0.0, (*spec.covariance)(i, i)))
                                           : 0.0;
    const double lo = spec.lower ? (*spec.lower)[i] : -kInf;
    const double hi = spec.upper ? (*spec.upper)[i] : kInf;
    return truncated_normal_quantile(u, spec.mean[i], sd, lo, hi);
}

} // namespace

CostRealization sample_cost_realization(const CostUncertainty& unc, CostCoupling coupling,
                                        Rng& rng) {
    CostRealization out;
    const int n = unc.objective.dim();
    out.c.resize(n);
    for (int i = 0; i < n; ++i)
        out.c[i] = trunc_component(unc.objective, i, uniform(rng, 0.0, 1.0));

    const int K = unc.num_constraints();
    out.d.resize(K);
    if (coupling == CostCoupling::CopulaComonotone && K > 0) {
        // Gumbel-coupled uniforms by the positive-stable mixture; each d^k is
        // comonotone in its U_k.
        const double theta = unc.copula.theta;
        double v = 1.0;
        if (theta > 1.0) v = positive_stable(rng, 1.0 / theta);
        for (int k = 0; k < K; ++k) {
            double e = -std::log(uniform(rng, 0.0, 1.0));
            if (e <= 0.0) e = 1e-300;
            const double u =
                theta > 1.0 ? std::exp(-std::pow(e / v, 1.0 / theta)) : std::exp(-e);
            out.d[k].resize(n);
            for (int i = 0; i < n; ++i) out.d[k][i] = trunc_component(unc.constraints[k], i, u);
        }
    } else {
        for (int k = 0; k < K; ++k) {
            out.d[k].resize(n);
            for (int i = 0; i < n; ++i)
                out.d[k][i] = trunc_component(unc.constraints[k], i, uniform(rng, 0.0, 1.0));
        }
    }
    return out;
}

Mat sample_transition_realization(const CmdpInstance& instance,
                                  const TransitionUncertainty& unc, std::uint64_t seed) {
    Rng rng(seed);
    return sample_transition_realization(instance, unc, rng);
}

Mat sample_transition_realization(const CmdpInstance& instance,
                                  const TransitionUncertainty& unc, Rng& rng) {
    const int P = instance.num_pairs();
    const int S = instance.num_states;
    Mat kernel = dense_kernel(instance);
    Vec zeta(S);
    for (int p = 0; p < P; ++p) {
        bool done = false;
        for (int attempt = 0; attempt < 5 && !done; ++attempt) {
            for (int s2 = 0; s2 < S; ++s2)
                zeta[s2] = uniform(rng, unc.zeta_lower(p, s2), unc.zeta_upper(p, s2));
            // Alternating projection: zero-sum hyperplane, then the box.
            for (int round = 0; round < 50; ++round) {
                const double r = zeta.sum() / S;
                for (int s2 = 0; s2 < S; ++s2)
                    zeta[s2] = std::min(unc.zeta_upper(p, s2),
                                        std::max(unc.zeta_lower(p, s2), zeta[s2] - r));
                if (std::abs(zeta.sum()) <= 1e-12) break;
            }
            // Spread the leftover residual over entries with slack.
            for (int pass = 0; pass < 8 && std::abs(zeta.sum()) > 1e-15 * S; ++pass) {
                const double r = zeta.sum();
                std::vector<int> idx;
                for (int s2 = 0; s2 < S; ++s2) {
                    const double slack = r > 0.0 ? zeta[s2] - unc.zeta_lower(p, s2)
                                                 : unc.zeta_upper(p, s2) - zeta[s2];
                    if (slack > std::abs(r) / S) idx.push_back(s2);
                }
                if (idx.empty()) break;
                const double share = r / static_cast<double>(idx.size());
                for (int s2 : idx)
                    zeta[s2] = std::min(unc.zeta_upper(p, s2),
                                        std::max(unc.zeta_lower(p, s2), zeta[s2] - share));
            }
            done = std::abs(zeta.sum()) <= 1e-12;
        }
        if (!done)
            throw std::runtime_error("sample_transition_realization: projection failed");
        kernel.row(p) += zeta.transpose();
    }
    return kernel;
}

nlohmann::ordered_json cost_uncertainty_to_json(const CostUncertainty& unc) {
    auto spec_json = [](const RandomVectorSpec& s) {
        nlohmann::ordered_json j;
        j["mean"] = std::vector<double>(s.mean.begin(), s.mean.end());
        if (s.diag_covariance)
            j["diag_covariance"] =
                std::vector<double>(s.diag_covariance->begin(), s.diag_covariance->end());
        if (s.lower) j["lower"] = std::vector<double>(s.lower->begin(), s.lower->end());
        if (s.upper) j["upper"] = std::vector<double>(s.upper->begin(), s.upper->end());
        if (s.subgaussian)
            j["subgaussian"] = std::vector<double>(s.subgaussian->begin(), s.subgaussian->end());
        j["independent"] = s.independent_components;
        return j;
    };
    nlohmann::ordered_json j;
    j["p0"] = unc.p0;
    j["p1"] = unc.copula.p1;
    j["theta"] = unc.copula.theta;
    j["objective"] = spec_json(unc.objective);
    nlohmann::ordered_json cons = nlohmann::ordered_json::array();
    for (const auto& c : unc.constraints) cons.push_back(spec_json(c));
    j["constraints"] = std::move(cons);
    return j;
}

CostUncertainty cost_uncertainty_from_json(const nlohmann::json& j) {
    auto spec_from = [](const nlohmann::json& js) {
        RandomVectorSpec s;
        const auto mean = js.at("mean").get<std::vector<double>>();
        s.mean = Eigen::Map<const Vec>(mean.data(), mean.size());
        auto opt_vec = [&](const char* key) -> std::optional<Vec> {
            if (!js.contains(key)) return std::nullopt;
            const auto v = js.at(key).get<std::vector<double>>();
            return Eigen::Map<const Vec>(v.data(), v.size());
        };
        s.diag_covariance = opt_vec("diag_covariance");
        s.lower = opt_vec("lower");
        s.upper = opt_vec("upper");
        s.subgaussian = opt_vec("subgaussian");
        s.independent_components = js.value("independent", false);
        return s;
    };
    CostUncertainty unc;
    unc.p0 = j.at("p0").get<double>();
    unc.copula.p1 = j.at("p1").get<double>();
    unc.copula.theta = j.at("theta").get<double>();
    unc.objective = spec_from(j.at("objective"));
    for (const auto& c : j.at("constraints")) unc.constraints.push_back(spec_from(c));
    return unc;
}

nlohmann::ordered_json transition_uncertainty_to_json(const TransitionUncertainty& unc) {
    nlohmann::ordered_json j;
    auto mat_rows = [](const Mat& m) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (int i = 0; i < m.rows(); ++i) {
            std::vector<double> r(m.cols());
            for (int c = 0; c < m.cols(); ++c) r[c] = m(i, c);
            rows.push_back(std::move(r));
        }
        return rows;
    };
    j["zeta_upper"] = mat_rows(unc.zeta_upper);
    j["zeta_lower"] = mat_rows(unc.zeta_lower);
    j["rows_independent"] = unc.rows_independent;
    j["c_upper"] = std::vector<double>(unc.c_upper.begin(), unc.c_upper.end());
    j["c_lower"] = std::vector<double>(unc.c_lower.begin(), unc.c_lower.end());
    nlohmann::ordered_json du = nlohmann::ordered_json::array(),
                           dl = nlohmann::ordered_json::array();
    for (const auto& v : unc.d_upper) du.push_back(std::vector<double>(v.begin(), v.end()));
    for (const auto& v : unc.d_lower) dl.push_back(std::vector<double>(v.begin(), v.end()));
    j["d_upper"] = std::move(du);
    j["d_lower"] = std::move(dl);
    // row covariances are regenerable; not serialized
    return j;
}

TransitionUncertainty transition_uncertainty_from_json(const nlohmann::json& j) {
    TransitionUncertainty unc;
    auto mat_from = [](const nlohmann::json& rows) {
        const int R = static_cast<int>(rows.size());
        const int C = R > 0 ? static_cast<int>(rows[0].size()) : 0;
        Mat m(R, C);
        for (int i = 0; i < R; ++i)
            for (int c = 0; c < C; ++c) m(i, c) = rows[i][c].get<double>();
        return m;
    };
    unc.zeta_upper = mat_from(j.at("zeta_upper"));
    unc.zeta_lower = mat_from(j.at("zeta_lower"));
    unc.rows_independent = j.value("rows_independent", true);
    auto vec_from = [](const nlohmann::json& v) {
        const auto d = v.get<std::vector<double>>();
        return Vec(Eigen::Map<const Vec>(d.data(), d.size()));
    };
    unc.c_upper = vec_from(j.at("c_upper"));
    unc.c_lower = vec_from(j.at("c_lower"));
    for (const auto& v : j.at("d_upper")) unc.d_upper.push_back(vec_from(v));
    for (const auto& v : j.at("d_lower")) unc.d_lower.push_back(vec_from(v));
    return unc;
}

} // namespace jccmdp
