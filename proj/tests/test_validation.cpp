#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "jccmdp/validation.hpp"

using namespace jccmdp;

namespace {

CmdpInstance tiny_instance(std::uint64_t seed, int ns = 2, int na = 2, int K = 1) {
    Rng rng(seed);
    CmdpInstance inst;
    inst.num_states = ns;
    inst.actions_per_state.assign(ns, na);
    inst.discount = 0.8;
    inst.initial_dist = Vec::Constant(ns, 1.0 / ns);
    inst.initial_dist[ns - 1] += 1.0 - inst.initial_dist.sum();
    inst.budgets = Vec::Zero(K);
    inst.finalize();
    inst.kernel.resize(inst.num_pairs());
    for (int p = 0; p < inst.num_pairs(); ++p) {
        Vec row(ns);
        double t = 0.0;
        for (int s2 = 0; s2 < ns; ++s2) {
            row[s2] = uniform(rng, 0.05, 1.0);
            t += row[s2];
        }
        for (int s2 = 0; s2 < ns; ++s2) inst.kernel[p].emplace_back(s2, row[s2] / t);
        double resid = 1.0;
        for (auto& [s2, pr] : inst.kernel[p]) resid -= pr;
        inst.kernel[p].back().second += resid;
    }
    inst.validate();
    return inst;
}

CostUncertainty gaussian_costs(const CmdpInstance& inst, std::uint64_t seed,
                               double var_hi = 0.5) {
    Rng rng(seed);
    const int n = inst.num_pairs();
    CostUncertainty unc;
    auto make = [&](double mean_lo, double mean_hi) {
        Vec mean(n), cov(n);
        for (int p = 0; p < n; ++p) {
            mean[p] = uniform(rng, mean_lo, mean_hi);
            cov[p] = uniform(rng, 0.01, var_hi);
        }
        return std::make_pair(mean, cov);
    };
    auto [mc, vc] = make(1.0, 5.0);
    auto [bu, bl] = cost_bounds_from_samples(mc, vc, 3000, split_seed(seed, 5));
    unc.objective.mean = mc;
    unc.objective.diag_covariance = vc;
    unc.objective.subgaussian = vc.cwiseSqrt();
    unc.objective.upper = bu;
    unc.objective.lower = bl;
    unc.objective.independent_components = true;
    for (int k = 0; k < inst.num_constraints(); ++k) {
        auto [md, vd] = make(2.0, 6.0);
        auto [du, dl] = cost_bounds_from_samples(md, vd, 3000, split_seed(seed, 50 + k));
        RandomVectorSpec s;
        s.mean = md;
        s.diag_covariance = vd;
        s.subgaussian = vd.cwiseSqrt();
        s.upper = du;
        s.lower = dl;
        s.independent_components = true;
        unc.constraints.push_back(std::move(s));
    }
    return unc;
}

} // namespace

TEST_CASE("gap percent") {
    const GapValue g1 = gap_percent(11.0, 10.0);
    CHECK(g1.applicable);
    CHECK(g1.percent == doctest::Approx(10.0).epsilon(1e-12));
    const GapValue g2 = gap_percent(10.0, 10.0);
    CHECK(g2.percent == doctest::Approx(0.0));
    CHECK_FALSE(gap_percent(5.0, 0.0).applicable);
    CHECK_FALSE(gap_percent(5.0, -1.0).applicable);
}

TEST_CASE("gap percent is monotone in ub and antitone in lb") {
    CHECK(gap_percent(12.0, 10.0).percent > gap_percent(11.0, 10.0).percent);
    CHECK(gap_percent(11.0, 9.0).percent > gap_percent(11.0, 10.0).percent);
}

TEST_CASE("mc_check_costs on deterministic costs") {
    CmdpInstance inst = tiny_instance(3);
    inst.budgets = Vec::Constant(1, 100.0);
    CostUncertainty unc = gaussian_costs(inst, 3);
    // degenerate to points
    unc.objective.diag_covariance = Vec::Zero(inst.num_pairs());
    unc.objective.lower = unc.objective.mean;
    unc.objective.upper = unc.objective.mean;
    unc.constraints[0].diag_covariance = Vec::Zero(inst.num_pairs());
    unc.constraints[0].lower = unc.constraints[0].mean;
    unc.constraints[0].upper = unc.constraints[0].mean;
    const Vec rho = induced_occupation_measure(inst, uniform_policy(inst)).rho;
    const double z = rho.dot(unc.objective.mean);
    McReport rep =
        mc_check_costs(inst, unc, rho, z, 2000, CostCoupling::Independent, 11);
    CHECK(rep.objective_prob == 1.0);
    CHECK(rep.joint_prob == 1.0);
    // a threshold below rho'c_l has empirical probability zero
    rep = mc_check_costs(inst, unc, rho, z - 1.0, 2000, CostCoupling::Independent, 11);
    CHECK(rep.objective_prob == 0.0);
}

TEST_CASE("mc sharding is deterministic given the shard count") {
    CmdpInstance inst = tiny_instance(5);
    inst.budgets = Vec::Constant(1, 6.0);
    const CostUncertainty unc = gaussian_costs(inst, 5);
    const Vec rho = induced_occupation_measure(inst, uniform_policy(inst)).rho;
    const double z = rho.dot(unc.objective.mean) + 1.0;
    const McReport a = mc_check_costs(inst, unc, rho, z, 4000, CostCoupling::Independent,
                                      123, 4);
    const McReport b = mc_check_costs(inst, unc, rho, z, 4000, CostCoupling::Independent,
                                      123, 4);
    CHECK(a.objective_prob == b.objective_prob);
    CHECK(a.joint_prob == b.joint_prob);
}

TEST_CASE("scenario oracle equals the exact LP on deterministic costs") {
    CmdpInstance inst = tiny_instance(7);
    CostUncertainty unc = gaussian_costs(inst, 7);
    unc.objective.diag_covariance = Vec::Zero(inst.num_pairs());
    unc.objective.lower = unc.objective.mean;
    unc.objective.upper = unc.objective.mean;
    unc.constraints[0].diag_covariance = Vec::Zero(inst.num_pairs());
    unc.constraints[0].lower = unc.constraints[0].mean;
    unc.constraints[0].upper = unc.constraints[0].mean;

    SUBCASE("loose budget: oracle equals the unconstrained LP value") {
        inst.budgets = Vec::Constant(1, 1e3);
        const ExactSolveResult exact =
            solve_exact_cmdp(inst, unc.objective.mean, {unc.constraints[0].mean});
        REQUIRE(exact.status == SolveStatus::Optimal);
        const ScenarioOracleResult oracle =
            brute_force_costs_oracle(inst, unc, 500, 1, CostCoupling::Independent, 2000);
        REQUIRE(oracle.feasible);
        CHECK(oracle.value == doctest::Approx(exact.value).epsilon(1e-9));
    }
    SUBCASE("oracle respects its preconditions") {
        CHECK_THROWS_AS(brute_force_costs_oracle(tiny_instance(1, 3, 3, 1),
                                                 gaussian_costs(tiny_instance(1, 3, 3, 1), 1),
                                                 100, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(brute_force_costs_oracle(inst, unc, 100000, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("sandwich experiment: lb <= oracle <= ub on most seeded trials") {
    int ok = 0, total = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CmdpInstance inst = tiny_instance(seed);
        CostUncertainty unc = gaussian_costs(inst, seed, 0.2);
        // budgets with moderate slack at the uniform policy
        const Vec rho_u = induced_occupation_measure(inst, uniform_policy(inst)).rho;
        inst.budgets = Vec::Constant(1, rho_u.dot(unc.constraints[0].mean) + 1.0);
        const BoundReport rep =
            solve_random_costs(inst, unc, {kMethodRcChebyshev}, [] {
                CostSolveOptions o;
                o.with_extremal_bounds = false;
                return o;
            }());
        const BoundResult* ub = rep.find(kMethodRcChebyshev);
        if (!ub || !ub->optimal() || !(rep.lower_bound == rep.lower_bound)) continue;
        const ScenarioOracleResult oracle =
            brute_force_costs_oracle(inst, unc, 2000, seed, CostCoupling::CopulaComonotone,
                                     3000);
        if (!oracle.feasible) continue;
        ++total;
        if (rep.lower_bound - 1e-6 <= oracle.value && oracle.value <= ub->bound + 1e-6)
            ++ok;
    }
    REQUIRE(total >= 10);
    CHECK(static_cast<double>(ok) / total >= 0.95);
}

TEST_CASE("extremal bounds on deterministic costs collapse to min/max LPs") {
    CmdpInstance inst = tiny_instance(9);
    CostUncertainty unc = gaussian_costs(inst, 9);
    unc.objective.diag_covariance = Vec::Zero(inst.num_pairs());
    unc.objective.subgaussian = Vec::Zero(inst.num_pairs());
    unc.objective.lower = unc.objective.mean;
    unc.objective.upper = unc.objective.mean;
    const ExtremalBounds ex = extremal_bounds_costs(inst, unc, 10.0);
    // chebyshev/hoeffding/subgaussian extremal uppers equal max rho'c
    ConvexProgram prog;
    const int rho0 = add_occupation_variables(prog, inst);
    build_occupation_constraints(prog, inst, rho0);
    AffineScalar obj;
    for (int p = 0; p < inst.num_pairs(); ++p) obj.add(rho0 + p, -unc.objective.mean[p]);
    prog.set_objective(obj);
    const Solution smax = prog.solve();
    REQUIRE(smax.status == SolveStatus::Optimal);
    const double maxlp = -smax.objective;
    CHECK(ex.upper.at(kMethodRcChebyshev) == doctest::Approx(maxlp).epsilon(1e-6));
    CHECK(ex.upper.at(kMethodRcHoeffding) == doctest::Approx(maxlp).epsilon(1e-6));
    CHECK(ex.upper.at(kMethodRcSubGaussian) == doctest::Approx(maxlp).epsilon(1e-6));
    // bernstein keeps its -ln(1-p0)/h shift above the max LP
    CHECK(ex.upper.at(kMethodRcBernstein) ==
          doctest::Approx(maxlp - std::log(1.0 - unc.p0) / 10.0).epsilon(1e-6));
    // lower extremal bound is min rho'c
    const ExactSolveResult mn = solve_exact_cmdp(inst, unc.objective.mean, {Vec::Zero(inst.num_pairs())});
    CHECK(ex.lower == doctest::Approx(mn.value).epsilon(1e-6));
}

TEST_CASE("solved bounds stay inside the extremal interval") {
    CmdpInstance inst = tiny_instance(13, 3, 2, 1);
    CostUncertainty unc = gaussian_costs(inst, 13);
    const Vec rho_u = induced_occupation_measure(inst, uniform_policy(inst)).rho;
    inst.budgets = Vec::Constant(1, rho_u.dot(unc.constraints[0].mean) + 2.0);
    const BoundReport rep = solve_random_costs(
        inst, unc, {kMethodRcChebyshev, kMethodRcSubGaussian, kMethodRcBernstein});
    for (const auto& r : rep.results) {
        if (!r.optimal() || r.method == kMethodRcLower) continue;
        CHECK(r.bound <= rep.extremal_upper.at(r.method) + 1e-6);
        const GapValue g = rep.gaps.at(r.method);
        if (g.applicable && rep.extremal_gap.applicable)
            CHECK(g.percent <= rep.extremal_gap.percent + 1e-9);
    }
    if (rep.lower_bound == rep.lower_bound)
        CHECK(rep.lower_bound >= rep.extremal_lower - 1e-6);
}
