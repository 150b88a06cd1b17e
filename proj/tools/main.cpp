// Experiment runner: config-driven generation, solving, Monte Carlo
// validation, and CSV/JSON reporting.
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "jccmdp/costs.hpp"
#include "jccmdp/generators.hpp"
#include "jccmdp/mdp.hpp"
#include "jccmdp/report.hpp"
#include "jccmdp/transitions.hpp"
#include "jccmdp/validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace jccmdp;

namespace {

struct ExperimentConfig {
    std::string mode; // "costs" or "transitions"
    int repetitions = 50;
    std::uint64_t seed = 1;
    int mc_samples = 10000;
    int mc_shards = 1;
    std::string mc_sampler = "copula"; // costs mode: copula | independent
    bool timing_in_csv = false;        // real timings break byte determinism
    std::vector<std::string> methods;
    std::vector<double> theta_grid{1.0};   // costs mode
    std::vector<double> eta_grid{0.001};   // transitions mode
    std::vector<double> alpha_grid;        // transitions mode; empty = garnet default
    bool dump_instances = false;
    QueueingConfig queueing;
    GarnetConfig garnet;
    SolverOptions solver;
};

void check_field(bool ok, const std::string& path, const std::string& what) {
    if (!ok) throw std::runtime_error("config error at " + path + ": " + what);
}

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    check_field(j.contains("mode"), "mode", "required");
    cfg.mode = j.at("mode").get<std::string>();
    check_field(cfg.mode == "costs" || cfg.mode == "transitions", "mode",
                "must be 'costs' or 'transitions'");
    cfg.repetitions = j.value("repetitions", 50);
    check_field(cfg.repetitions >= 1, "repetitions", "must be >= 1");
    cfg.seed = j.value("seed", 1ULL);
    cfg.mc_samples = j.value("mc_samples", 10000);
    cfg.mc_shards = j.value("mc_shards", 1);
    cfg.mc_sampler = j.value("mc_sampler", std::string("copula"));
    cfg.timing_in_csv = j.value("timing_in_csv", false);
    cfg.dump_instances = j.value("dump_instances", false);
    if (j.contains("methods"))
        cfg.methods = j.at("methods").get<std::vector<std::string>>();
    if (cfg.methods.empty()) {
        if (cfg.mode == "costs")
            cfg.methods = {"chebyshev", "hoeffding", "subgaussian", "bernstein"};
        else
            cfg.methods = {"chebyshev", "hoeffding", "bernstein"};
    }
    if (j.contains("theta")) cfg.theta_grid = j.at("theta").get<std::vector<double>>();
    if (j.contains("eta")) cfg.eta_grid = j.at("eta").get<std::vector<double>>();
    if (j.contains("alpha")) cfg.alpha_grid = j.at("alpha").get<std::vector<double>>();
    if (j.contains("queueing")) {
        const json& q = j.at("queueing");
        cfg.queueing.max_queue_length = q.value("L", 10);
        if (q.contains("service_levels"))
            cfg.queueing.service_levels = q.at("service_levels").get<std::vector<double>>();
        if (q.contains("admission_levels"))
            cfg.queueing.admission_levels =
                q.at("admission_levels").get<std::vector<double>>();
        cfg.queueing.discount = q.value("alpha", 0.9);
        if (q.contains("xi")) cfg.queueing.budgets = q.at("xi").get<std::vector<double>>();
        cfg.queueing.p0 = q.value("p0", 0.9);
        cfg.queueing.p1 = q.value("p1", 0.9);
    }
    if (j.contains("garnet")) {
        const json& g = j.at("garnet");
        cfg.garnet.num_states = g.value("S", 20);
        cfg.garnet.num_actions = g.value("A", 4);
        cfg.garnet.branching = g.value("BF", 10);
        cfg.garnet.num_constraints = g.value("K", 3);
        cfg.garnet.discount = g.value("alpha", 0.9);
        cfg.garnet.p0 = g.value("p0", 0.9);
        cfg.garnet.p1 = g.value("p1", 0.9);
    }
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        cfg.solver.tolerance = s.value("tolerance", 1e-8);
        cfg.solver.gap_abs = s.value("gap_abs", 1e-9);
        cfg.solver.gap_rel = s.value("gap_rel", 1e-9);
        cfg.solver.max_iterations = s.value("max_iterations", 200);
    }
    return cfg;
}

std::string method_tag(const std::string& mode, const std::string& name) {
    const std::string prefix = mode == "costs" ? "rc." : "tp.";
    if (name.rfind("rc.", 0) == 0 || name.rfind("tp.", 0) == 0) return name;
    return prefix + name;
}

struct GridPoint {
    std::string label;
    double theta = 1.0;
    double eta = 0.0;
    double alpha = 0.9;
};

struct RepOutcome {
    BoundReport report;
    std::string instance_dump; // optional serialized instance
};

RepOutcome run_costs_rep(const ExperimentConfig& cfg, const GridPoint& gp, int rep) {
    QueueingConfig qc = cfg.queueing;
    qc.theta = gp.theta;
    qc.seed = split_seed(cfg.seed, static_cast<std::uint64_t>(rep));
    auto [inst, unc] = queueing_instance(qc);

    std::vector<std::string> methods;
    for (const auto& m : cfg.methods) methods.push_back(method_tag("costs", m));
    CostSolveOptions opts;
    opts.solver = cfg.solver;
    RepOutcome out;
    out.report = solve_random_costs(inst, unc, methods, opts);
    out.report.seed = qc.seed;
    std::ostringstream id;
    id << "queueL" << qc.max_queue_length << "-th" << gp.theta << "-r" << rep;
    out.report.instance_id = id.str();

    const CostCoupling sampler = cfg.mc_sampler == "independent"
                                     ? CostCoupling::Independent
                                     : CostCoupling::CopulaComonotone;
    for (const auto& r : out.report.results) {
        if (!r.optimal() || r.method == kMethodRcLower) continue;
        const McReport mc =
            mc_check_costs(inst, unc, r.occupation.rho, r.bound, cfg.mc_samples, sampler,
                           split_seed(qc.seed, 7777), cfg.mc_shards);
        McSummary s;
        s.samples = mc.samples;
        s.objective_prob = mc.objective_prob;
        s.joint_prob = mc.joint_prob;
        s.sampler = mc.sampler;
        out.report.mc[r.method] = s;
    }
    if (cfg.dump_instances) {
        ordered_json dump;
        dump["instance"] = instance_to_json(inst);
        dump["costs"] = cost_uncertainty_to_json(unc);
        out.instance_dump = dump.dump(2);
    }
    return out;
}

RepOutcome run_tp_rep(const ExperimentConfig& cfg, const GridPoint& gp, int rep) {
    GarnetConfig gc = cfg.garnet;
    gc.eta = gp.eta;
    gc.discount = gp.alpha;
    gc.seed = split_seed(cfg.seed, static_cast<std::uint64_t>(rep));
    const GarnetInstance g = garnet_instance(gc);

    std::vector<std::string> methods;
    for (const auto& m : cfg.methods) methods.push_back(method_tag("transitions", m));
    TpSolveOptions opts;
    opts.p0 = gc.p0;
    opts.p1 = gc.p1;
    opts.solver = cfg.solver;
    RepOutcome out;
    out.report = solve_random_tp(g.instance, g.transitions, methods, opts);
    out.report.seed = gc.seed;
    std::ostringstream id;
    id << "garnet" << gc.num_states << "x" << gc.num_actions << "-eta" << gp.eta << "-a"
       << gp.alpha << "-r" << rep;
    out.report.instance_id = id.str();

    for (const auto& r : out.report.results) {
        if (!r.optimal() || r.method == kMethodTpLower) continue;
        const McReport mc =
            mc_check_tp(g.instance, g.costs, g.transitions, r.policy, r.bound,
                        cfg.mc_samples, split_seed(gc.seed, 7777), cfg.mc_shards);
        McSummary s;
        s.samples = mc.samples;
        s.objective_prob = mc.objective_prob;
        s.joint_prob = mc.joint_prob;
        s.sampler = mc.sampler;
        out.report.mc[r.method] = s;
    }
    if (cfg.dump_instances) {
        ordered_json dump;
        dump["instance"] = instance_to_json(g.instance);
        dump["costs"] = cost_uncertainty_to_json(g.costs);
        dump["transitions"] = transition_uncertainty_to_json(g.transitions);
        out.instance_dump = dump.dump(2);
    }
    return out;
}

int cmd_run(const std::string& config_path, int jobs, std::optional<std::uint64_t> seed,
            const std::string& out_dir) {
    json raw;
    {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "cannot open config: " << config_path << "\n";
            return 2;
        }
        try {
            in >> raw;
        } catch (const json::parse_error& e) {
            std::cerr << "config parse error: " << e.what() << "\n";
            return 2;
        }
    }
    ExperimentConfig cfg;
    try {
        cfg = parse_config(raw);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    if (seed) cfg.seed = *seed;

    std::vector<GridPoint> grid;
    if (cfg.mode == "costs") {
        for (double theta : cfg.theta_grid) {
            GridPoint gp;
            gp.theta = theta;
            std::ostringstream label;
            label << "theta=" << theta;
            gp.label = label.str();
            grid.push_back(gp);
        }
    } else {
        std::vector<double> alphas =
            cfg.alpha_grid.empty() ? std::vector<double>{cfg.garnet.discount}
                                   : cfg.alpha_grid;
        for (double eta : cfg.eta_grid)
            for (double alpha : alphas) {
                GridPoint gp;
                gp.eta = eta;
                gp.alpha = alpha;
                std::ostringstream label;
                label << "eta=" << eta << ",alpha=" << alpha;
                gp.label = label.str();
                grid.push_back(gp);
            }
    }

    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "results.csv");
    csv << csv_header();

    ordered_json summary;
    summary["schema"] = "jccmdp-summary-v1";
    summary["mode"] = cfg.mode;
    summary["seed"] = cfg.seed;
    summary["repetitions"] = cfg.repetitions;
    ordered_json grid_json = ordered_json::array();

    int infrastructure_failures = 0;
    for (const auto& gp : grid) {
        std::vector<RepOutcome> outcomes(cfg.repetitions);
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (int rep = next.fetch_add(1); rep < cfg.repetitions;
                 rep = next.fetch_add(1)) {
                try {
                    outcomes[rep] = cfg.mode == "costs" ? run_costs_rep(cfg, gp, rep)
                                                        : run_tp_rep(cfg, gp, rep);
                } catch (const std::exception& e) {
                    outcomes[rep].report.instance_id = "rep" + std::to_string(rep);
                    BoundResult err;
                    err.method = "infrastructure";
                    err.message = e.what();
                    outcomes[rep].report.results.push_back(err);
                    ++infrastructure_failures;
                }
            }
        };
        std::vector<std::thread> pool;
        const int nthreads = std::max(1, std::min(jobs, cfg.repetitions));
        pool.reserve(nthreads);
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();

        // serialize rows in repetition order for byte-stable output
        std::map<std::string, int> feasible, total;
        std::map<std::string, double> gap_sum, time_sum, reduction_sum;
        std::map<std::string, int> gap_n, reduction_n;
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
            const BoundReport& report = outcomes[rep].report;
            append_csv_rows(csv, report, cfg.timing_in_csv);
            if (cfg.dump_instances && !outcomes[rep].instance_dump.empty()) {
                std::ofstream dump(fs::path(out_dir) /
                                   (report.instance_id + ".json"));
                dump << outcomes[rep].instance_dump;
            }
            for (const auto& r : report.results) {
                ++total[r.method];
                time_sum[r.method] += r.wall_seconds;
                if (r.optimal()) ++feasible[r.method];
                const auto git = report.gaps.find(r.method);
                if (git != report.gaps.end() && git->second.applicable) {
                    gap_sum[r.method] += git->second.percent;
                    ++gap_n[r.method];
                    const auto xit = report.extremal_upper.find(r.method);
                    if (xit != report.extremal_upper.end()) {
                        const GapValue xg = gap_value(xit->second, report.extremal_lower);
                        if (xg.applicable && xg.percent > 0.0) {
                            reduction_sum[r.method] +=
                                (xg.percent - git->second.percent) / xg.percent * 100.0;
                            ++reduction_n[r.method];
                        }
                    }
                }
            }
        }
        ordered_json point;
        point["grid"] = gp.label;
        ordered_json per_method = ordered_json::array();
        for (const auto& [m, n] : total) {
            ordered_json row;
            row["method"] = m;
            row["instances"] = n;
            row["feasible"] = feasible[m];
            row["avg_wall_seconds"] = time_sum[m] / n;
            if (gap_n[m] > 0) row["avg_gap_percent"] = gap_sum[m] / gap_n[m];
            if (reduction_n[m] > 0)
                row["avg_extremal_reduction_percent"] = reduction_sum[m] / reduction_n[m];
            per_method.push_back(std::move(row));
        }
        point["methods"] = std::move(per_method);
        grid_json.push_back(std::move(point));
    }
    summary["grid_points"] = std::move(grid_json);
    summary["infrastructure_failures"] = infrastructure_failures;
    {
        std::ofstream js(fs::path(out_dir) / "summary.json");
        js << summary.dump(2) << "\n";
    }
    std::cout << "wrote " << (fs::path(out_dir) / "results.csv").string() << " and "
              << (fs::path(out_dir) / "summary.json").string() << "\n";
    return infrastructure_failures == 0 ? 0 : 1;
}

int cmd_generate(const std::string& config_path, const std::string& out_path) {
    json raw;
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "cannot open config: " << config_path << "\n";
        return 2;
    }
    try {
        in >> raw;
    } catch (const json::parse_error& e) {
        std::cerr << "config parse error: " << e.what() << "\n";
        return 2;
    }
    ordered_json dump;
    try {
        const ExperimentConfig cfg = parse_config(raw);
        if (cfg.mode == "costs") {
            QueueingConfig qc = cfg.queueing;
            qc.seed = cfg.seed;
            qc.theta = cfg.theta_grid.front();
            auto [inst, unc] = queueing_instance(qc);
            dump["instance"] = instance_to_json(inst);
            dump["costs"] = cost_uncertainty_to_json(unc);
        } else {
            GarnetConfig gc = cfg.garnet;
            gc.seed = cfg.seed;
            gc.eta = cfg.eta_grid.front();
            const GarnetInstance g = garnet_instance(gc);
            dump["instance"] = instance_to_json(g.instance);
            dump["costs"] = cost_uncertainty_to_json(g.costs);
            dump["transitions"] = transition_uncertainty_to_json(g.transitions);
        }
    } catch (const std::exception& e) {
        std::cerr << "generation failed: " << e.what() << "\n";
        return 1;
    }
    std::ofstream out(out_path);
    out << dump.dump(2) << "\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_inspect(const std::string& path) {
    json j;
    {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "cannot open instance file: " << path << "\n";
            return 2;
        }
        try {
            in >> j;
        } catch (const json::parse_error& e) {
            std::cerr << "parse error in " << path << ": " << e.what() << "\n";
            return 2;
        }
    }
    try {
        const CmdpInstance inst =
            instance_from_json(j.contains("instance") ? j.at("instance") : j);
        int max_actions = 0;
        long kernel_entries = 0;
        for (int s = 0; s < inst.num_states; ++s)
            max_actions = std::max(max_actions, inst.actions_per_state[s]);
        std::size_t branching = 0;
        for (const auto& row : inst.kernel) {
            kernel_entries += static_cast<long>(row.size());
            branching = std::max(branching, row.size());
        }
        std::cout << "states: " << inst.num_states << "\n"
                  << "actions per state (max): " << max_actions << "\n"
                  << "state-action pairs: " << inst.num_pairs() << "\n"
                  << "discount: " << inst.discount << "\n"
                  << "budgets: " << inst.num_constraints() << "\n"
                  << "kernel nonzeros: " << kernel_entries << " ("
                  << static_cast<double>(kernel_entries) /
                         (static_cast<double>(inst.num_pairs()) * inst.num_states) * 100.0
                  << "% dense, max row support " << branching << ")\n";

        if (j.contains("costs")) {
            const CostUncertainty unc = cost_uncertainty_from_json(j.at("costs"));
            CmdpInstance unconstrained = inst;
            unconstrained.budgets = Vec(0);
            const ExactSolveResult res =
                solve_exact_cmdp(unconstrained, unc.objective.mean, {});
            if (res.status == SolveStatus::Optimal) {
                std::cout << "unconstrained optimum (mean costs): " << res.value << "\n";
                for (int k = 0; k < inst.num_constraints(); ++k) {
                    const double load = res.occupation.rho.dot(unc.constraints[k].mean);
                    std::cout << "budget " << k << ": xi = " << inst.budgets[k]
                              << ", load = " << load
                              << ", slack = " << inst.budgets[k] - load << "\n";
                }
            } else {
                std::cout << "unconstrained solve: " << to_string(res.status) << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "inspect failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint chance-constrained MDP bound toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", instance_path, gen_out = "instance.json";
    int jobs = 1;
    std::optional<std::uint64_t> seed_override;

    CLI::App* run = app.add_subcommand("run", "run an experiment batch from a config");
    run->add_option("--config", config_path, "experiment config JSON")->required();
    run->add_option("--jobs", jobs, "parallel repetitions");
    std::uint64_t seed_val = 0;
    CLI::Option* seed_opt = run->add_option("--seed", seed_val, "master seed override");
    run->add_option("--out", out_dir, "output directory");

    CLI::App* gen = app.add_subcommand("generate", "generate one instance from a config");
    gen->add_option("--config", config_path, "experiment config JSON")->required();
    gen->add_option("--out", gen_out, "output instance file");

    CLI::App* ins = app.add_subcommand("inspect", "summarize an instance file");
    ins->add_option("file", instance_path, "instance JSON")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        if (*seed_opt) seed_override = seed_val;
        return cmd_run(config_path, jobs, seed_override, out_dir);
    }
    if (gen->parsed()) return cmd_generate(config_path, gen_out);
    if (ins->parsed()) return cmd_inspect(instance_path);
    return 0;
}
