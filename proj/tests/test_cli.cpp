#include <chrono>
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(JCCMDP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

int run_cli_capture(const std::string& args, const fs::path& out) {
    const std::string cmd =
        std::string(JCCMDP_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "jccmdp_cli_test";
    fs::create_directories(dir);
    return dir;
}

void write_costs_config(const fs::path& p, int reps = 2) {
    std::ofstream c(p);
    c << R"({
      "mode": "costs",
      "repetitions": )"
      << reps << R"(,
      "seed": 5,
      "mc_samples": 500,
      "methods": ["chebyshev"],
      "theta": [1, 10],
      "queueing": { "L": 4, "alpha": 0.9, "xi": [11.30, 11.35] }
    })";
}

} // namespace

TEST_CASE("identical (config, seed) runs produce identical csv bytes") {
    const fs::path dir = scratch_dir();
    write_costs_config(dir / "cfg.json");
    REQUIRE(run_cli("run --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "a").string()) == 0);
    REQUIRE(run_cli("run --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "b").string() + " --jobs 2") == 0);
    const std::string a = slurp(dir / "a" / "results.csv");
    const std::string b = slurp(dir / "b" / "results.csv");
    REQUIRE(!a.empty());
    CHECK(a == b);
    // summaries agree apart from the measured timings
    nlohmann::json sa, sb;
    std::ifstream(dir / "a" / "summary.json") >> sa;
    std::ifstream(dir / "b" / "summary.json") >> sb;
    for (auto* s : {&sa, &sb})
        for (auto& point : s->at("grid_points"))
            for (auto& m : point.at("methods")) m.erase("avg_wall_seconds");
    CHECK(sa.dump() == sb.dump());
}

TEST_CASE("csv rows carry the full schema") {
    const fs::path dir = scratch_dir();
    write_costs_config(dir / "cfg2.json", 1);
    REQUIRE(run_cli("run --config " + (dir / "cfg2.json").string() + " --out " +
                    (dir / "c").string()) == 0);
    std::ifstream csv(dir / "c" / "results.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line.rfind("# jccmdp-csv", 0) == 0);
    std::getline(csv, line);
    CHECK(line ==
          "instance_id,seed,method,status,bound,gap_percent,mc_objective_prob,"
          "mc_joint_prob,wall_seconds");
    int rows = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        ++rows;
        int commas = 0;
        for (char ch : line) commas += ch == ',';
        CHECK(commas == 8);
    }
    CHECK(rows == 4); // 2 theta values x (chebyshev + lower)
}

TEST_CASE("summary aggregates match recomputation from the csv") {
    const fs::path dir = scratch_dir();
    std::ofstream c(dir / "cfg3.json");
    c << R"({
      "mode": "costs", "repetitions": 3, "seed": 9, "mc_samples": 200,
      "methods": ["chebyshev"], "theta": [1],
      "queueing": { "L": 10, "alpha": 0.9, "xi": [11.30, 11.35] }
    })";
    c.close();
    REQUIRE(run_cli("run --config " + (dir / "cfg3.json").string() + " --out " +
                    (dir / "d").string()) == 0);
    // recompute the average gap of rc.chebyshev from the csv rows
    std::ifstream csv(dir / "d" / "results.csv");
    std::string line;
    double gap_sum = 0.0;
    int gap_n = 0;
    while (std::getline(csv, line)) {
        if (line.rfind("#", 0) == 0 || line.rfind("instance_id", 0) == 0 || line.empty())
            continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        REQUIRE(fields.size() == 9);
        if (fields[2] == "rc.chebyshev" && fields[5] != "na") {
            gap_sum += std::stod(fields[5]);
            ++gap_n;
        }
    }
    nlohmann::json summary;
    std::ifstream(dir / "d" / "summary.json") >> summary;
    for (const auto& point : summary.at("grid_points")) {
        for (const auto& m : point.at("methods")) {
            if (m.at("method") == "rc.chebyshev" && m.contains("avg_gap_percent")) {
                REQUIRE(gap_n > 0);
                CHECK(m.at("avg_gap_percent").get<double>() ==
                      doctest::Approx(gap_sum / gap_n).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("transitions mode runs end-to-end with a clean exit") {
    const fs::path dir = scratch_dir();
    std::ofstream c(dir / "tcfg.json");
    c << R"({
      "mode": "transitions", "repetitions": 2, "seed": 6, "mc_samples": 300,
      "methods": ["chebyshev"], "eta": [0.0001, 0.001],
      "garnet": { "S": 8, "A": 2, "BF": 4, "K": 2 }
    })";
    c.close();
    REQUIRE(run_cli("run --config " + (dir / "tcfg.json").string() + " --out " +
                    (dir / "t").string()) == 0);
    nlohmann::json summary;
    std::ifstream(dir / "t" / "summary.json") >> summary;
    CHECK(summary.at("mode") == "transitions");
    REQUIRE(summary.at("grid_points").size() == 2);
    int feasible_low = -1;
    for (const auto& point : summary.at("grid_points"))
        for (const auto& m : point.at("methods"))
            if (m.at("method") == "tp.chebyshev") {
                CHECK(m.at("instances") == 2);
                if (feasible_low < 0)
                    feasible_low = m.at("feasible").get<int>();
                else
                    CHECK(m.at("feasible").get<int>() <= feasible_low);
            }
}

TEST_CASE("generate then inspect reports the configured dimensions") {
    const fs::path dir = scratch_dir();
    std::ofstream c(dir / "gcfg.json");
    c << R"({
      "mode": "transitions", "seed": 4, "eta": [0.001],
      "garnet": { "S": 12, "A": 3, "BF": 6, "K": 2 }
    })";
    c.close();
    REQUIRE(run_cli("generate --config " + (dir / "gcfg.json").string() + " --out " +
                    (dir / "inst.json").string()) == 0);
    const fs::path report = dir / "inspect.txt";
    REQUIRE(run_cli_capture("inspect " + (dir / "inst.json").string(), report) == 0);
    const std::string text = slurp(report);
    CHECK(text.find("states: 12") != std::string::npos);
    CHECK(text.find("actions per state (max): 3") != std::string::npos);
    CHECK(text.find("pairs: 36") != std::string::npos);
    CHECK(text.find("max row support 6") != std::string::npos);
    CHECK(text.find("budgets: 2") != std::string::npos);
}

TEST_CASE("mid-scale garnet generates and inspects within the time contract") {
    // Scaled-down version of the paper-size check (|S|=250, |A|=15, |BF|=125
    // generates in < 60 s and inspects in < 5 s on this machine; that run is
    // too slow for CI, so this guards the same path at |S|=100).
    using clock = std::chrono::steady_clock;
    const fs::path dir = scratch_dir();
    std::ofstream c(dir / "mid.json");
    c << R"({
      "mode": "transitions", "seed": 13, "eta": [0.001],
      "garnet": { "S": 100, "A": 8, "BF": 50, "K": 5 }
    })";
    c.close();
    const auto t0 = clock::now();
    REQUIRE(run_cli("generate --config " + (dir / "mid.json").string() + " --out " +
                    (dir / "mid_inst.json").string()) == 0);
    const double gen_s = std::chrono::duration<double>(clock::now() - t0).count();
    const auto t1 = clock::now();
    const fs::path report = dir / "mid_inspect.txt";
    REQUIRE(run_cli_capture("inspect " + (dir / "mid_inst.json").string(), report) == 0);
    const double ins_s = std::chrono::duration<double>(clock::now() - t1).count();
    CHECK(slurp(report).find("states: 100") != std::string::npos);
    CHECK(gen_s < 60.0);
    CHECK(ins_s < 5.0);
}

TEST_CASE("inspect rejects corrupt json with a nonzero exit") {
    const fs::path dir = scratch_dir();
    std::ofstream bad(dir / "bad.json");
    bad << "{ not json";
    bad.close();
    CHECK(run_cli("inspect " + (dir / "bad.json").string()) != 0);
    CHECK(run_cli("inspect " + (dir / "missing.json").string()) != 0);
}

TEST_CASE("run rejects malformed configs with field paths") {
    const fs::path dir = scratch_dir();
    std::ofstream c(dir / "bad_mode.json");
    c << R"({ "mode": "nonsense" })";
    c.close();
    const fs::path report = dir / "err.txt";
    CHECK(run_cli_capture("run --config " + (dir / "bad_mode.json").string() + " --out " +
                              (dir / "e").string(),
                          report) != 0);
    CHECK(slurp(report).find("mode") != std::string::npos);
}
