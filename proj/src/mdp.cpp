#include "jccmdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>

namespace jccmdp {

void CmdpInstance::finalize() {
    pair_offset_.assign(num_states + 1, 0);
    for (int s = 0; s < num_states; ++s)
        pair_offset_[s + 1] = pair_offset_[s] + actions_per_state[s];
    pair_state_.assign(num_pairs(), 0);
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < actions_per_state[s]; ++a)
            pair_state_[pair_index(s, a)] = s;
}

void CmdpInstance::validate() const {
    if (num_states <= 0) throw std::invalid_argument("instance: no states");
    if (static_cast<int>(actions_per_state.size()) != num_states)
        throw std::invalid_argument("instance: actions_per_state size");
    for (int s = 0; s < num_states; ++s)
        if (actions_per_state[s] <= 0)
            throw std::invalid_argument("instance: empty action set at state " +
                                        std::to_string(s));
    if (!(discount > 0.0 && discount < 1.0))
        throw std::invalid_argument("instance: discount must lie in (0,1)");
    if (static_cast<int>(kernel.size()) != num_pairs())
        throw std::invalid_argument("instance: kernel row count");
    for (int p = 0; p < num_pairs(); ++p) {
        double sum = 0.0;
        for (const auto& [s2, prob] : kernel[p]) {
            if (s2 < 0 || s2 >= num_states)
                throw std::invalid_argument("instance: kernel target out of range");
            if (prob < 0.0)
                throw std::invalid_argument("instance: negative kernel entry");
            sum += prob;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw std::invalid_argument("instance: kernel row " + std::to_string(p) +
                                        " sums to " + std::to_string(sum));
    }
    if (initial_dist.size() != num_states)
        throw std::invalid_argument("instance: initial_dist size");
    double gsum = 0.0;
    for (int s = 0; s < num_states; ++s) {
        if (initial_dist[s] < 0.0)
            throw std::invalid_argument("instance: negative initial_dist entry");
        gsum += initial_dist[s];
    }
    if (std::abs(gsum - 1.0) > 1e-12)
        throw std::invalid_argument("instance: initial_dist sums to " +
                                    std::to_string(gsum));
}

double CmdpInstance::kernel_prob(int pair, int next_state) const {
    for (const auto& [s2, prob] : kernel[pair])
        if (s2 == next_state) return prob;
    return 0.0;
}

int add_occupation_variables(ConvexProgram& program, const CmdpInstance& instance,
                             const std::string& prefix) {
    int first = -1;
    for (int p = 0; p < instance.num_pairs(); ++p) {
        const int v = program.add_variable(
            prefix + "[" + std::to_string(instance.pair_state(p)) + "," +
                std::to_string(instance.pair_action(p)) + "]",
            0.0, kInf);
        if (first < 0) first = v;
    }
    return first;
}

std::vector<int> build_occupation_constraints(ConvexProgram& program,
                                              const CmdpInstance& instance, int rho0) {
    return build_occupation_constraints(program, instance, rho0, instance.kernel);
}

std::vector<int> build_occupation_constraints(ConvexProgram& program,
                                              const CmdpInstance& instance, int rho0,
                                              const Kernel& kernel) {
    const double alpha = instance.discount;
    // One row per target state: sum_p rho_p (delta(s',s_p) - alpha k(s'|p))
    // = (1-alpha) gamma(s').
    std::vector<AffineScalar> rows(instance.num_states);
    for (int p = 0; p < instance.num_pairs(); ++p) {
        rows[instance.pair_state(p)].add(rho0 + p, 1.0);
        for (const auto& [s2, prob] : kernel[p])
            rows[s2].add(rho0 + p, -alpha * prob);
    }
    std::vector<int> ids;
    ids.reserve(instance.num_states);
    for (int s2 = 0; s2 < instance.num_states; ++s2)
        ids.push_back(program.add_linear_eq(std::move(rows[s2]),
                                            (1.0 - alpha) * instance.initial_dist[s2]));
    return ids;
}

std::pair<Mat, Vec> occupation_flow_system(const CmdpInstance& instance) {
    const int n = instance.num_pairs();
    Mat A = Mat::Zero(instance.num_states, n);
    for (int p = 0; p < n; ++p) {
        A(instance.pair_state(p), p) += 1.0;
        for (const auto& [s2, prob] : instance.kernel[p])
            A(s2, p) -= instance.discount * prob;
    }
    Vec b = (1.0 - instance.discount) * instance.initial_dist;
    return {A, b};
}

ExactSolveResult solve_exact_cmdp(const CmdpInstance& instance, const Vec& c,
                                  const std::vector<Vec>& d) {
    instance.validate();
    if (c.size() != instance.num_pairs())
        throw std::invalid_argument("solve_exact_cmdp: cost size");
    if (static_cast<int>(d.size()) != instance.num_constraints())
        throw std::invalid_argument("solve_exact_cmdp: budget cost count");

    ConvexProgram prog;
    const int rho0 = add_occupation_variables(prog, instance);
    build_occupation_constraints(prog, instance, rho0);
    AffineScalar obj;
    for (int p = 0; p < instance.num_pairs(); ++p) obj.add(rho0 + p, c[p]);
    prog.set_objective(obj);
    for (int k = 0; k < instance.num_constraints(); ++k) {
        AffineScalar row;
        for (int p = 0; p < instance.num_pairs(); ++p) row.add(rho0 + p, d[k][p]);
        prog.add_linear_le(std::move(row), instance.budgets[k]);
    }

    const OccupationMeasure interior =
        induced_occupation_measure(instance, uniform_policy(instance));
    Solution sol = prog.solve_with_start(interior.rho);

    ExactSolveResult res;
    res.message = sol.message;
    if (sol.status == SolveStatus::Unbounded) {
        // The polytope is compact, so an unbounded claim is a backend bug.
        res.status = SolveStatus::NumericalFailure;
        res.message = "internal error: backend reported Unbounded on a compact polytope";
        return res;
    }
    res.status = sol.status;
    if (sol.optimal()) {
        res.value = sol.objective;
        res.occupation.rho = sol.x.head(instance.num_pairs());
    }
    return res;
}

StationaryPolicy recover_policy(const CmdpInstance& instance, const OccupationMeasure& rho) {
    StationaryPolicy f;
    f.rows.resize(instance.num_states);
    for (int s = 0; s < instance.num_states; ++s) {
        const int na = instance.actions_per_state[s];
        Vec row(na);
        double total = 0.0;
        for (int a = 0; a < na; ++a) {
            const double v = std::max(0.0, rho.rho[instance.pair_index(s, a)]);
            row[a] = v;
            total += v;
        }
        if (total > 0.0)
            row /= total;
        else
            row.setConstant(1.0 / na);
        f.rows[s] = row;
    }
    return f;
}

StationaryPolicy uniform_policy(const CmdpInstance& instance) {
    StationaryPolicy f;
    f.rows.resize(instance.num_states);
    for (int s = 0; s < instance.num_states; ++s)
        f.rows[s] = Vec::Constant(instance.actions_per_state[s],
                                  1.0 / instance.actions_per_state[s]);
    return f;
}

Mat dense_kernel(const CmdpInstance& instance) {
    Mat k = Mat::Zero(instance.num_pairs(), instance.num_states);
    for (int p = 0; p < instance.num_pairs(); ++p)
        for (const auto& [s2, prob] : instance.kernel[p]) k(p, s2) += prob;
    return k;
}

Mat policy_transition_matrix(const CmdpInstance& instance, const StationaryPolicy& f) {
    Mat P = Mat::Zero(instance.num_states, instance.num_states);
    for (int s = 0; s < instance.num_states; ++s)
        for (int a = 0; a < instance.actions_per_state[s]; ++a) {
            const double w = f.rows[s][a];
            if (w == 0.0) continue;
            for (const auto& [s2, prob] : instance.kernel[instance.pair_index(s, a)])
                P(s, s2) += w * prob;
        }
    return P;
}

Mat policy_transition_matrix(const CmdpInstance& instance, const StationaryPolicy& f,
                             const Mat& kernel_rows) {
    Mat P = Mat::Zero(instance.num_states, instance.num_states);
    for (int s = 0; s < instance.num_states; ++s)
        for (int a = 0; a < instance.actions_per_state[s]; ++a)
            P.row(s) += f.rows[s][a] * kernel_rows.row(instance.pair_index(s, a));
    return P;
}

namespace {

// Warn once per solve when (I - alpha P) is ill-conditioned.
void check_conditioning(const Eigen::PartialPivLU<Mat>& lu, int n) {
    const auto& u = lu.matrixLU();
    double dmin = kInf, dmax = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = std::abs(u(i, i));
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    if (dmin == 0.0 || dmax / dmin > 1e12)
        std::cerr << "[jccmdp] warning: policy-evaluation system condition estimate "
                  << (dmin == 0.0 ? kInf : dmax / dmin) << "\n";
}

double discounted_cost_impl(const CmdpInstance& instance, const StationaryPolicy& f,
                            const Vec& cost_over_pairs, const Mat& P) {
    const int n = instance.num_states;
    Vec cf = Vec::Zero(n);
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < instance.actions_per_state[s]; ++a)
            cf[s] += f.rows[s][a] * cost_over_pairs[instance.pair_index(s, a)];
    Mat M = Mat::Identity(n, n) - instance.discount * P;
    Eigen::PartialPivLU<Mat> lu(M);
    check_conditioning(lu, n);
    const Vec w = lu.solve(cf);
    return (1.0 - instance.discount) * instance.initial_dist.dot(w);
}

} // namespace

double discounted_cost(const CmdpInstance& instance, const StationaryPolicy& f,
                       const Vec& cost_over_pairs) {
    return discounted_cost_impl(instance, f, cost_over_pairs,
                                policy_transition_matrix(instance, f));
}

double discounted_cost(const CmdpInstance& instance, const StationaryPolicy& f,
                       const Vec& cost_over_pairs, const Mat& kernel_rows) {
    return discounted_cost_impl(instance, f, cost_over_pairs,
                                policy_transition_matrix(instance, f, kernel_rows));
}

OccupationMeasure induced_occupation_measure(const CmdpInstance& instance,
                                             const StationaryPolicy& f) {
    const int n = instance.num_states;
    const Mat P = policy_transition_matrix(instance, f);
    Mat M = (Mat::Identity(n, n) - instance.discount * P).transpose();
    Eigen::PartialPivLU<Mat> lu(M);
    check_conditioning(lu, n);
    const Vec x = lu.solve((1.0 - instance.discount) * instance.initial_dist);
    OccupationMeasure occ;
    occ.rho = Vec::Zero(instance.num_pairs());
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < instance.actions_per_state[s]; ++a)
            occ.rho[instance.pair_index(s, a)] = x[s] * f.rows[s][a];
    return occ;
}

nlohmann::ordered_json instance_to_json(const CmdpInstance& instance) {
    nlohmann::ordered_json j;
    j["schema"] = "jccmdp-instance-v1";
    j["states"] = instance.num_states;
    j["actions"] = instance.actions_per_state;
    j["alpha"] = instance.discount;
    j["gamma"] = std::vector<double>(instance.initial_dist.begin(),
                                     instance.initial_dist.end());
    nlohmann::ordered_json triplets = nlohmann::ordered_json::array();
    for (int p = 0; p < instance.num_pairs(); ++p) {
        KernelRow row = instance.kernel[p];
        std::sort(row.begin(), row.end());
        for (const auto& [s2, prob] : row)
            triplets.push_back({instance.pair_state(p), instance.pair_action(p), s2, prob});
    }
    j["kernel"] = std::move(triplets);
    j["xi"] = std::vector<double>(instance.budgets.begin(), instance.budgets.end());
    return j;
}

CmdpInstance instance_from_json(const nlohmann::json& j) {
    CmdpInstance inst;
    inst.num_states = j.at("states").get<int>();
    inst.actions_per_state = j.at("actions").get<std::vector<int>>();
    inst.discount = j.at("alpha").get<double>();
    const auto gamma = j.at("gamma").get<std::vector<double>>();
    inst.initial_dist = Eigen::Map<const Vec>(gamma.data(), gamma.size());
    const auto xi = j.at("xi").get<std::vector<double>>();
    inst.budgets = Eigen::Map<const Vec>(xi.data(), xi.size());
    inst.finalize();
    inst.kernel.assign(inst.num_pairs(), {});
    for (const auto& t : j.at("kernel")) {
        const int s = t.at(0).get<int>(), a = t.at(1).get<int>(), s2 = t.at(2).get<int>();
        inst.kernel[inst.pair_index(s, a)].emplace_back(s2, t.at(3).get<double>());
    }
    inst.validate();
    return inst;
}

} // namespace jccmdp
