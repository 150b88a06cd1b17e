#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "jccmdp/mdp.hpp"
#include "jccmdp/rng.hpp"

using namespace jccmdp;

namespace {

CmdpInstance single_state(double alpha = 0.5) {
    CmdpInstance inst;
    inst.num_states = 1;
    inst.actions_per_state = {1};
    inst.discount = alpha;
    inst.initial_dist = Vec::Ones(1);
    inst.budgets = Vec(0);
    inst.finalize();
    inst.kernel = {{{0, 1.0}}};
    inst.validate();
    return inst;
}

CmdpInstance random_instance(int ns, int na, std::uint64_t seed, int n_budgets = 0) {
    Rng rng(seed);
    CmdpInstance inst;
    inst.num_states = ns;
    inst.actions_per_state.assign(ns, na);
    inst.discount = 0.8;
    inst.initial_dist = Vec(ns);
    double g = 0.0;
    for (int s = 0; s < ns; ++s) {
        inst.initial_dist[s] = uniform(rng, 0.1, 1.0);
        g += inst.initial_dist[s];
    }
    inst.initial_dist /= g;
    // kill the normalization residual so the 1e-12 invariant holds exactly
    inst.initial_dist[ns - 1] += 1.0 - inst.initial_dist.sum();
    inst.budgets = Vec::Zero(n_budgets);
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

// Enumerates the vertices of {A rho = b, rho >= 0} as basic feasible
// solutions; independent of the solver path.
std::vector<Vec> polytope_vertices(const Mat& A, const Vec& b) {
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

// Expected discounted cost by truncated series, independent of linear solves.
double series_cost(const CmdpInstance& inst, const StationaryPolicy& f, const Vec& cost) {
    const int ns = inst.num_states;
    Mat P = Mat::Zero(ns, ns);
    Vec cf = Vec::Zero(ns);
    for (int s = 0; s < ns; ++s)
        for (int a = 0; a < inst.actions_per_state[s]; ++a) {
            const int p = inst.pair_index(s, a);
            cf[s] += f.rows[s][a] * cost[p];
            for (const auto& [s2, pr] : inst.kernel[p]) P(s, s2) += f.rows[s][a] * pr;
        }
    Vec dist = inst.initial_dist;
    double total = 0.0;
    double disc = 1.0;
    const int T = static_cast<int>(std::ceil(std::log(1e-13) / std::log(inst.discount)));
    for (int t = 0; t <= T; ++t) {
        total += disc * dist.dot(cf);
        dist = P.transpose() * dist;
        disc *= inst.discount;
    }
    return (1.0 - inst.discount) * total;
}

} // namespace

TEST_CASE("single state single action: unique occupation measure is 1") {
    const CmdpInstance inst = single_state(0.37);
    ConvexProgram prog;
    const int rho0 = add_occupation_variables(prog, inst);
    build_occupation_constraints(prog, inst, rho0);
    prog.set_objective(AffineScalar::variable(rho0));
    const Solution s = prog.solve();
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.x[rho0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("feasible occupation measures sum to one") {
    const CmdpInstance inst = random_instance(4, 3, 11);
    const ExactSolveResult res =
        solve_exact_cmdp(inst, Vec::LinSpaced(inst.num_pairs(), 0.0, 1.0), {});
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.occupation.rho.sum() == doctest::Approx(1.0).epsilon(1e-8));
    const auto [A, b] = occupation_flow_system(inst);
    CHECK((A * res.occupation.rho - b).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("2-state 2-action LP agrees with vertex enumeration oracle") {
    const CmdpInstance inst = random_instance(2, 2, 5);
    const auto [A, b] = occupation_flow_system(inst);
    const auto verts = polytope_vertices(A, b);
    REQUIRE(!verts.empty());
    Rng rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        Vec c(inst.num_pairs());
        for (int p = 0; p < c.size(); ++p) c[p] = uniform(rng, -1.0, 2.0);
        const ExactSolveResult res = solve_exact_cmdp(inst, c, {});
        REQUIRE(res.status == SolveStatus::Optimal);
        double best = kInf;
        for (const auto& v : verts) best = std::min(best, c.dot(v));
        CHECK(res.value == doctest::Approx(best).epsilon(1e-6));
    }
}

TEST_CASE("single state, cost 5: value is 5 for any discount") {
    for (double alpha : {0.1, 0.5, 0.9, 0.99}) {
        const CmdpInstance inst = single_state(alpha);
        const ExactSolveResult res = solve_exact_cmdp(inst, Vec::Constant(1, 5.0), {});
        REQUIRE(res.status == SolveStatus::Optimal);
        CHECK(res.value == doctest::Approx(5.0).epsilon(1e-8));
    }
}

TEST_CASE("3-state 2-action value matches deterministic-policy enumeration") {
    // Unconstrained: the optimum is attained by a deterministic policy, and
    // every policy is scored by the independent truncated-series oracle.
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const CmdpInstance inst = random_instance(3, 2, seed);
        Rng rng(split_seed(seed, 17));
        Vec c(inst.num_pairs());
        for (int p = 0; p < c.size(); ++p) c[p] = uniform(rng, 0.0, 10.0);
        const ExactSolveResult res = solve_exact_cmdp(inst, c, {});
        REQUIRE(res.status == SolveStatus::Optimal);
        double best = kInf;
        for (int mask = 0; mask < 8; ++mask) {
            StationaryPolicy f;
            f.rows.resize(3);
            for (int s = 0; s < 3; ++s) {
                f.rows[s] = Vec::Zero(2);
                f.rows[s][(mask >> s) & 1] = 1.0;
            }
            best = std::min(best, series_cost(inst, f, c));
        }
        CHECK(res.value == doctest::Approx(best).epsilon(1e-6));
        // randomized mixtures cannot beat the deterministic optimum here
        CHECK(series_cost(inst, uniform_policy(inst), c) >= best - 1e-9);
    }
}

TEST_CASE("negative budget with nonnegative budget costs is infeasible") {
    CmdpInstance inst = random_instance(2, 2, 8, 1);
    inst.budgets[0] = -1.0;
    const Vec c = Vec::Ones(inst.num_pairs());
    const std::vector<Vec> d{Vec::Ones(inst.num_pairs())};
    CHECK(solve_exact_cmdp(inst, c, d).status == SolveStatus::Infeasible);
}

TEST_CASE("recover_policy normalizes rows and falls back to uniform") {
    const CmdpInstance inst = random_instance(2, 2, 3);
    OccupationMeasure occ;
    occ.rho = (Vec(4) << 0.2, 0.3, 0.0, 0.0).finished();
    const StationaryPolicy f = recover_policy(inst, occ);
    CHECK(f.rows[0][0] == doctest::Approx(0.4));
    CHECK(f.rows[0][1] == doctest::Approx(0.6));
    CHECK(f.rows[1][0] == doctest::Approx(0.5));
    CHECK(f.rows[1][1] == doctest::Approx(0.5));
}

TEST_CASE("policy -> occupation measure -> policy round-trip") {
    const CmdpInstance inst = random_instance(3, 2, 21);
    Rng rng(1234);
    StationaryPolicy f;
    f.rows.resize(3);
    for (int s = 0; s < 3; ++s) {
        Vec row(2);
        row[0] = uniform(rng, 0.1, 0.9);
        row[1] = 1.0 - row[0];
        f.rows[s] = row;
    }
    const OccupationMeasure occ = induced_occupation_measure(inst, f);
    const auto [A, b] = occupation_flow_system(inst);
    CHECK((A * occ.rho - b).lpNorm<Eigen::Infinity>() <= 1e-10);
    const StationaryPolicy g = recover_policy(inst, occ);
    for (int s = 0; s < 3; ++s)
        CHECK((f.rows[s] - g.rows[s]).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("discounted_cost basics") {
    const CmdpInstance one = single_state(0.9);
    StationaryPolicy f1;
    f1.rows = {Vec::Ones(1)};
    CHECK(discounted_cost(one, f1, Vec::Constant(1, 3.25)) == doctest::Approx(3.25));

    // two absorbing states, gamma = (1,0): only state 0's cost counts
    CmdpInstance inst;
    inst.num_states = 2;
    inst.actions_per_state = {1, 1};
    inst.discount = 0.6;
    inst.initial_dist = (Vec(2) << 1.0, 0.0).finished();
    inst.budgets = Vec(0);
    inst.finalize();
    inst.kernel = {{{0, 1.0}}, {{1, 1.0}}};
    inst.validate();
    StationaryPolicy f2;
    f2.rows = {Vec::Ones(1), Vec::Ones(1)};
    const Vec costs = (Vec(2) << 7.0, 100.0).finished();
    CHECK(discounted_cost(inst, f2, costs) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("discounted_cost matches truncated-series oracle on random instance") {
    const CmdpInstance inst = random_instance(4, 2, 77);
    Rng rng(4242);
    StationaryPolicy f;
    f.rows.resize(4);
    for (int s = 0; s < 4; ++s) {
        Vec row(2);
        row[0] = uniform(rng, 0.0, 1.0);
        row[1] = 1.0 - row[0];
        f.rows[s] = row;
    }
    Vec c(inst.num_pairs());
    for (int p = 0; p < c.size(); ++p) c[p] = uniform(rng, -5.0, 5.0);
    CHECK(discounted_cost(inst, f, c) ==
          doctest::Approx(series_cost(inst, f, c)).epsilon(1e-10));
}

TEST_CASE("constant cost vector evaluates to the constant") {
    const CmdpInstance inst = random_instance(5, 3, 31);
    const StationaryPolicy f = uniform_policy(inst);
    CHECK(discounted_cost(inst, f, Vec::Constant(inst.num_pairs(), 4.2)) ==
          doctest::Approx(4.2).epsilon(1e-12));
}

TEST_CASE("exact value invariant under state/action relabeling") {
    const CmdpInstance inst = random_instance(3, 2, 55);
    Rng rng(8);
    Vec c(inst.num_pairs());
    for (int p = 0; p < c.size(); ++p) c[p] = uniform(rng, 0.0, 4.0);
    const ExactSolveResult base = solve_exact_cmdp(inst, c, {});
    REQUIRE(base.status == SolveStatus::Optimal);

    const std::vector<int> sperm{2, 0, 1};
    const std::vector<int> aperm{1, 0};
    CmdpInstance perm;
    perm.num_states = 3;
    perm.actions_per_state = {2, 2, 2};
    perm.discount = inst.discount;
    perm.initial_dist = Vec(3);
    perm.budgets = Vec(0);
    for (int s = 0; s < 3; ++s) perm.initial_dist[sperm[s]] = inst.initial_dist[s];
    perm.finalize();
    perm.kernel.resize(perm.num_pairs());
    Vec cperm(perm.num_pairs());
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) {
            const int p = inst.pair_index(s, a);
            const int q = perm.pair_index(sperm[s], aperm[a]);
            cperm[q] = c[p];
            for (const auto& [s2, pr] : inst.kernel[p])
                perm.kernel[q].emplace_back(sperm[s2], pr);
        }
    perm.validate();
    const ExactSolveResult res = solve_exact_cmdp(perm, cperm, {});
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.value == doctest::Approx(base.value).epsilon(1e-7));
}

TEST_CASE("instance json round-trip is exact and deterministically ordered") {
    const CmdpInstance inst = random_instance(3, 2, 13, 2);
    const auto j = instance_to_json(inst);
    const CmdpInstance back = instance_from_json(j);
    CHECK(instance_to_json(back).dump() == j.dump());
    CHECK(back.num_pairs() == inst.num_pairs());
    CHECK(back.discount == inst.discount);
}

TEST_CASE("invalid instances are rejected") {
    CmdpInstance inst = random_instance(2, 2, 1);
    inst.kernel[0][0].second += 1e-6;
    CHECK_THROWS_AS(inst.validate(), std::invalid_argument);

    CmdpInstance bad = random_instance(2, 2, 1);
    bad.discount = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    CmdpInstance bad2 = random_instance(2, 2, 1);
    bad2.initial_dist[0] += 0.1;
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}
