#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "introspect/errors.hpp"

namespace introspect::analysis {

struct CurvePoint {
    int64_t step = 0;
    double loss = 0.0;     // windowed mean training loss
    double val_acc = 0.0;  // validation accuracy in [0,1]
    double seconds = 0.0;  // wall clock since run start (0 under --deterministic)
};

struct TrainingCurve {
    std::string name;
    uint64_t config_hash = 0;
    uint64_t seed = 0;
    std::vector<int64_t> jump_steps;
    std::vector<CurvePoint> points;

    void validate() const {
        for (size_t i = 1; i < points.size(); ++i)
            if (points[i].step <= points[i - 1].step)
                throw FormatError("curve '" + name + "': steps not strictly increasing");
    }
};

// CSV layout: '#'-prefixed metadata lines, then a header row, then data.
// %.17g round-trips doubles exactly, which is what makes "bit-identical
// curve CSVs" a meaningful determinism check.
inline void save_curve_csv(const TrainingCurve& curve, const std::filesystem::path& path) {
    curve.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path.string());
    char buf[256];
    std::snprintf(buf, sizeof(buf), "# name=%s\n", curve.name.c_str());
    out << buf;
    std::snprintf(buf, sizeof(buf), "# config_hash=%016llx\n",
                  static_cast<unsigned long long>(curve.config_hash));
    out << buf;
    std::snprintf(buf, sizeof(buf), "# seed=%llu\n", static_cast<unsigned long long>(curve.seed));
    out << buf;
    out << "# jumps=";
    for (size_t i = 0; i < curve.jump_steps.size(); ++i)
        out << (i ? ";" : "") << curve.jump_steps[i];
    out << "\n";
    out << "step,loss,val_acc,seconds\n";
    for (const CurvePoint& p : curve.points) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(p.step), p.loss, p.val_acc, p.seconds);
        out << buf;
    }
    if (!out) throw IoError("write failed for " + path.string());
}

inline TrainingCurve load_curve_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    TrainingCurve curve;
    curve.name = path.stem().string();
    std::string line;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(2, eq - 2);
            const std::string value = line.substr(eq + 1);
            if (key == "name") {
                curve.name = value;
            } else if (key == "config_hash") {
                curve.config_hash = std::stoull(value, nullptr, 16);
            } else if (key == "seed") {
                curve.seed = std::stoull(value);
            } else if (key == "jumps" && !value.empty()) {
                std::stringstream ss(value);
                std::string tok;
                while (std::getline(ss, tok, ';'))
                    curve.jump_steps.push_back(std::stoll(tok));
            }
            continue;
        }
        if (!saw_header) {
            if (line != "step,loss,val_acc,seconds")
                throw ConfigError("curve file " + path.string() +
                                  ": missing step,loss,val_acc,seconds header");
            saw_header = true;
            continue;
        }
        CurvePoint p;
        long long step = 0;
        if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf", &step, &p.loss, &p.val_acc,
                        &p.seconds) != 4)
            throw FormatError("curve file " + path.string() + ": malformed row '" + line + "'");
        p.step = step;
        curve.points.push_back(p);
    }
    if (!saw_header)
        throw ConfigError("curve file " + path.string() + ": missing accuracy column header");
    curve.validate();
    return curve;
}

struct RunSummary {
    std::string name;
    double max_acc = 0.0;
    int64_t max_acc_step = 0;
    double final_acc = 0.0;
    int64_t final_step = 0;
    // First step whose accuracy reaches the reference run's max; -1 = never.
    int64_t first_reach_step = -1;
    double acc_at_common_step = 0.0;   // accuracy at the largest shared step
    double acc_at_common_time = 0.0;   // accuracy at the shared wall-clock budget
};

struct CompareResult {
    std::string reference_name;
    double reference_max_acc = 0.0;
    int64_t common_step = 0;
    double common_seconds = 0.0;
    std::vector<RunSummary> runs;  // reference first
};

namespace detail {

inline double acc_at_step(const TrainingCurve& c, int64_t step) {
    double acc = 0.0;
    bool found = false;
    for (const CurvePoint& p : c.points) {
        if (p.step > step) break;
        acc = p.val_acc;
        found = true;
    }
    if (!found)
        throw RangeError("curve '" + c.name + "' has no point at or before step " +
                         std::to_string(step));
    return acc;
}

inline double acc_at_seconds(const TrainingCurve& c, double seconds) {
    double acc = 0.0;
    bool found = false;
    for (const CurvePoint& p : c.points) {
        if (p.seconds > seconds && found) break;
        acc = p.val_acc;
        found = true;
    }
    return acc;
}

}  // namespace detail

// Per-run max accuracy, first step reaching the reference max, and accuracy
// at the shared step/wall-clock budgets. curves[reference] is the baseline.
inline CompareResult compare_runs(const std::vector<TrainingCurve>& curves,
                                  size_t reference = 0) {
    if (curves.size() < 2) throw SpecError("compare_runs: need at least 2 curves");
    if (reference >= curves.size()) throw IndexError("compare_runs: bad reference index");
    for (const TrainingCurve& c : curves) {
        c.validate();
        if (c.points.empty()) throw EmptyDataset("compare_runs: curve '" + c.name + "' is empty");
    }

    int64_t max_first = 0, min_last = std::numeric_limits<int64_t>::max();
    double min_final_seconds = std::numeric_limits<double>::infinity();
    for (const TrainingCurve& c : curves) {
        max_first = std::max(max_first, c.points.front().step);
        min_last = std::min(min_last, c.points.back().step);
        min_final_seconds = std::min(min_final_seconds, c.points.back().seconds);
    }
    if (max_first > min_last)
        throw RangeError("compare_runs: curves have disjoint step ranges");

    CompareResult result;
    result.reference_name = curves[reference].name;
    result.common_step = min_last;
    result.common_seconds = min_final_seconds;

    double ref_max = 0.0;
    for (const CurvePoint& p : curves[reference].points) ref_max = std::max(ref_max, p.val_acc);
    result.reference_max_acc = ref_max;

    std::vector<size_t> order;
    order.push_back(reference);
    for (size_t i = 0; i < curves.size(); ++i)
        if (i != reference) order.push_back(i);

    for (size_t idx : order) {
        const TrainingCurve& c = curves[idx];
        RunSummary s;
        s.name = c.name;
        for (const CurvePoint& p : c.points) {
            if (p.val_acc > s.max_acc) {
                s.max_acc = p.val_acc;
                s.max_acc_step = p.step;
            }
            if (s.first_reach_step < 0 && p.val_acc >= ref_max - 1e-12)
                s.first_reach_step = p.step;
        }
        s.final_acc = c.points.back().val_acc;
        s.final_step = c.points.back().step;
        s.acc_at_common_step = detail::acc_at_step(c, result.common_step);
        s.acc_at_common_time = detail::acc_at_seconds(c, result.common_seconds);
        result.runs.push_back(std::move(s));
    }
    return result;
}

inline std::string format_summary_table(const CompareResult& result) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "reference: %s (max acc %.4f)\n",
                  result.reference_name.c_str(), result.reference_max_acc);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-28s %9s %12s %12s %14s\n", "run", "max_acc", "final_acc",
                  "reach_step", "acc@step" );
    out += buf;
    for (const RunSummary& s : result.runs) {
        std::string reach =
            s.first_reach_step < 0 ? "not reached" : std::to_string(s.first_reach_step);
        std::snprintf(buf, sizeof(buf), "%-28s %9.4f %12.4f %12s %14.4f\n", s.name.c_str(),
                      s.max_acc, s.final_acc, reach.c_str(), s.acc_at_common_step);
        out += buf;
    }
    return out;
}

inline void save_summary_csv(const CompareResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path.string());
    out << "run,max_acc,max_acc_step,final_acc,final_step,first_reach_step,acc_at_common_step,"
           "acc_at_common_time\n";
    char buf[320];
    for (const RunSummary& s : result.runs) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%lld,%.17g,%lld,%lld,%.17g,%.17g\n",
                      s.name.c_str(), s.max_acc, static_cast<long long>(s.max_acc_step),
                      s.final_acc, static_cast<long long>(s.final_step),
                      static_cast<long long>(s.first_reach_step), s.acc_at_common_step,
                      s.acc_at_common_time);
        out << buf;
    }
    if (!out) throw IoError("write failed for " + path.string());
}

// One CSV per curve plus the comparison summary, all under `dir`.
inline CompareResult export_curves(const std::vector<TrainingCurve>& curves,
                                   const std::filesystem::path& dir, size_t reference = 0) {
    if (curves.empty()) throw EmptyDataset("export_curves: no curves");
    std::filesystem::create_directories(dir);
    for (const TrainingCurve& c : curves) save_curve_csv(c, dir / (c.name + ".csv"));
    if (curves.size() < 2) {
        CompareResult single;
        single.reference_name = curves[0].name;
        for (const CurvePoint& p : curves[0].points)
            single.reference_max_acc = std::max(single.reference_max_acc, p.val_acc);
        return single;
    }
    CompareResult result = compare_runs(curves, reference);
    save_summary_csv(result, dir / "summary.csv");
    return result;
}

}  // namespace introspect::analysis
