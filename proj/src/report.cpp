#include "jccmdp/report.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace jccmdp {

const BoundResult* BoundReport::find(const std::string& method) const {
    for (const auto& r : results)
        if (r.method == method) return &r;
    return nullptr;
}

GapValue gap_value(double ub, double lb) {
    GapValue g;
    if (!(lb > 0.0) || !std::isfinite(ub) || !std::isfinite(lb)) return g;
    g.applicable = true;
    g.percent = (ub - lb) / lb * 100.0;
    return g;
}

namespace {

// Fixed-format doubles so identical runs serialize to identical bytes.
std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

std::string csv_header() {
    return "# jccmdp-csv v1\n"
           "instance_id,seed,method,status,bound,gap_percent,mc_objective_prob,"
           "mc_joint_prob,wall_seconds\n";
}

void append_csv_rows(std::ostream& os, const BoundReport& report, bool with_timing) {
    for (const auto& r : report.results) {
        os << report.instance_id << ',' << report.seed << ',' << r.method << ','
           << to_string(r.status) << ',' << fmt(r.bound) << ',';
        const auto git = report.gaps.find(r.method);
        if (git != report.gaps.end() && git->second.applicable)
            os << fmt(git->second.percent);
        else
            os << "na";
        os << ',';
        const auto mit = report.mc.find(r.method);
        if (mit != report.mc.end()) {
            os << fmt(mit->second.objective_prob) << ',' << fmt(mit->second.joint_prob);
        } else {
            os << "na,na";
        }
        os << ',' << (with_timing ? fmt(r.wall_seconds) : "na") << '\n';
    }
}

nlohmann::ordered_json report_to_json(const BoundReport& report) {
    nlohmann::ordered_json j;
    j["schema"] = "jccmdp-report-v1";
    j["instance_id"] = report.instance_id;
    j["seed"] = report.seed;
    j["lower_bound"] = report.lower_bound;
    j["lower_method"] = report.lower_method;
    nlohmann::ordered_json methods = nlohmann::ordered_json::array();
    for (const auto& r : report.results) {
        nlohmann::ordered_json m;
        m["method"] = r.method;
        m["status"] = to_string(r.status);
        m["bound"] = r.bound;
        m["wall_seconds"] = r.wall_seconds;
        if (!r.message.empty()) m["message"] = r.message;
        const auto git = report.gaps.find(r.method);
        if (git != report.gaps.end() && git->second.applicable)
            m["gap_percent"] = git->second.percent;
        const auto mit = report.mc.find(r.method);
        if (mit != report.mc.end()) {
            m["mc"] = {{"samples", mit->second.samples},
                       {"objective_prob", mit->second.objective_prob},
                       {"joint_prob", mit->second.joint_prob},
                       {"sampler", mit->second.sampler}};
        }
        if (r.optimal()) {
            m["occupation"] =
                std::vector<double>(r.occupation.rho.begin(), r.occupation.rho.end());
            nlohmann::ordered_json pol = nlohmann::ordered_json::array();
            for (const auto& row : r.policy.rows)
                pol.push_back(std::vector<double>(row.begin(), row.end()));
            m["policy"] = std::move(pol);
            if (r.y.size() > 0) m["y"] = std::vector<double>(r.y.begin(), r.y.end());
        }
        methods.push_back(std::move(m));
    }
    j["methods"] = std::move(methods);
    if (!report.extremal_upper.empty()) {
        nlohmann::ordered_json ex;
        for (const auto& [k, v] : report.extremal_upper) ex[k] = v;
        j["extremal_upper"] = std::move(ex);
        j["extremal_lower"] = report.extremal_lower;
        if (report.extremal_gap.applicable)
            j["extremal_gap_percent"] = report.extremal_gap.percent;
    }
    return j;
}

} // namespace jccmdp
