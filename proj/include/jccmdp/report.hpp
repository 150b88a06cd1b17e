// Per-method bound results and the report rows shared by the random-cost and
// random-transition pipelines (CSV schema v1).
#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jccmdp/mdp.hpp"

namespace jccmdp {

struct BoundResult {
    std::string method; // "rc.chebyshev", "tp.bernstein", "rc.lower", ...
    SolveStatus status = SolveStatus::NumericalFailure;
    double bound = std::numeric_limits<double>::quiet_NaN();
    OccupationMeasure occupation;
    StationaryPolicy policy;      // recovered for Optimal upper bounds
    Vec y;                        // y_k allocation (upper) or ybar_k (lower)
    double aux_m_c = std::numeric_limits<double>::quiet_NaN();
    double aux_m_d = std::numeric_limits<double>::quiet_NaN();
    double wall_seconds = 0.0;
    std::string message;

    bool optimal() const { return status == SolveStatus::Optimal; }
};

/// Gap(%) = (ub - lb)/lb * 100; not applicable when lb <= 0.
struct GapValue {
    bool applicable = false;
    double percent = std::numeric_limits<double>::quiet_NaN();
};

struct McSummary {
    int samples = 0;
    double objective_prob = std::numeric_limits<double>::quiet_NaN();
    double joint_prob = std::numeric_limits<double>::quiet_NaN();
    std::string sampler;
};

struct BoundReport {
    std::string instance_id;
    std::uint64_t seed = 0;
    std::vector<BoundResult> results;
    double lower_bound = std::numeric_limits<double>::quiet_NaN();
    std::string lower_method;
    std::map<std::string, GapValue> gaps;           // per upper method
    std::map<std::string, double> extremal_upper;   // UB^(u) per method
    double extremal_lower = std::numeric_limits<double>::quiet_NaN();
    GapValue extremal_gap;                          // G
    std::map<std::string, McSummary> mc;            // per method, when run

    const BoundResult* find(const std::string& method) const;
};

GapValue gap_value(double ub, double lb);

/// CSV columns: instance_id, seed, method, status, bound, gap_percent,
/// mc_objective_prob, mc_joint_prob, wall_seconds. `with_timing` = false
/// prints "na" in the timing column, keeping the bytes a pure function of
/// (config, seed).
std::string csv_header();
void append_csv_rows(std::ostream& os, const BoundReport& report,
                     bool with_timing = true);

nlohmann::ordered_json report_to_json(const BoundReport& report);

} // namespace jccmdp
