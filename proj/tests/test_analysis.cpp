#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <vector>

#include "introspect/analysis/curves.hpp"
#include "introspect/analysis/histogram.hpp"
#include "introspect/rng.hpp"
#include "support/temp_dir.hpp"

using namespace introspect;
using namespace introspect::analysis;

namespace {

history::SnapshotStore random_walk_store(int64_t params, int64_t snapshots, uint64_t seed) {
    history::SnapshotStore store(params, history::StoreMeta{});
    rng::Stream stream(seed);
    std::vector<float> vals(static_cast<size_t>(params));
    for (auto& v : vals) v = static_cast<float>(stream.normal(0.0, 0.05));
    store.record(0, vals);
    for (int64_t s = 1; s <= snapshots; ++s) {
        for (auto& v : vals) v += static_cast<float>(stream.normal(0.0, 0.01));
        store.record(s * 10, vals);
    }
    return store;
}

TrainingCurve make_curve(const std::string& name, std::vector<CurvePoint> pts) {
    TrainingCurve c;
    c.name = name;
    c.points = std::move(pts);
    return c;
}

}  // namespace

TEST_CASE("deviation histogram bins symmetrically", "[analysis]") {
    // Deviations {+0.5, +0.5, +0.5, -0.5} into two bins: counts [1, 3].
    history::SnapshotStore store(4, history::StoreMeta{});
    store.record(0, {0.0f, 0.0f, 0.0f, 0.0f});
    store.record(100, {0.5f, 0.5f, 0.5f, -0.5f});
    HistogramSpec spec;
    spec.bins = 2;
    const Histogram hist = deviation_histogram(store, spec);
    CHECK(hist.edges == std::vector<double>{-0.5, 0.0, 0.5});
    CHECK(hist.counts == std::vector<int64_t>{1, 3});
    CHECK(hist.values == std::vector<double>{0.5, 0.5, 0.5, -0.5});
}

TEST_CASE("second moment matches the hand example", "[analysis]") {
    // w(0)=0.1, then 0.3 and 0.5: M = sqrt((0.2^2 + 0.4^2)/2) = sqrt(0.1).
    history::SnapshotStore store(1, history::StoreMeta{});
    store.record(0, {0.1f});
    store.record(10, {0.3f});
    store.record(20, {0.5f});
    const Histogram hist = second_moment_histogram(store);
    REQUIRE(hist.values.size() == 1);
    CHECK(std::abs(hist.values[0] - std::sqrt(0.1)) < 1e-6);
    // One-sided edges for a non-negative metric.
    CHECK(hist.edges.front() == 0.0);
}

TEST_CASE("histogram counts always sum to the parameter count", "[analysis]") {
    const auto store = random_walk_store(500, 20, 3);
    for (const auto& metric_hist :
         {deviation_histogram(store), second_moment_histogram(store)}) {
        CHECK(metric_hist.counts.size() == 101);
        const int64_t total =
            std::accumulate(metric_hist.counts.begin(), metric_hist.counts.end(), int64_t{0});
        CHECK(total == 500);
    }
}

TEST_CASE("second moment is zero only for frozen scalars", "[analysis]") {
    history::SnapshotStore store(3, history::StoreMeta{});
    store.record(0, {0.5f, 1.0f, -0.25f});
    store.record(10, {0.6f, 1.0f, -0.30f});
    store.record(20, {0.4f, 1.0f, -0.25f});
    const Histogram hist = second_moment_histogram(store);
    CHECK(hist.values[0] > 0.0);
    CHECK(hist.values[1] == 0.0);  // never moved
    CHECK(hist.values[2] > 0.0);
}

TEST_CASE("second moment scales homogeneously", "[analysis]") {
    history::SnapshotStore base(2, history::StoreMeta{});
    base.record(0, {0.1f, -0.2f});
    base.record(10, {0.2f, -0.1f});
    base.record(20, {0.0f, -0.4f});
    history::SnapshotStore scaled(2, history::StoreMeta{});
    scaled.record(0, {0.2f, -0.4f});
    scaled.record(10, {0.4f, -0.2f});
    scaled.record(20, {0.0f, -0.8f});
    const Histogram a = second_moment_histogram(base);
    const Histogram b = second_moment_histogram(scaled);
    for (size_t i = 0; i < 2; ++i) CHECK(std::abs(b.values[i] - 2.0 * a.values[i]) < 1e-7);
}

TEST_CASE("histogram validation", "[analysis]") {
    history::SnapshotStore store(2, history::StoreMeta{});
    store.record(0, {0.0f, 0.0f});
    CHECK_THROWS_AS(deviation_histogram(store), RangeError);
    CHECK_THROWS_AS(second_moment_histogram(store), RangeError);
    store.record(10, {0.1f, 0.2f});
    HistogramSpec spec;
    spec.bins = 1;
    CHECK_THROWS_AS(deviation_histogram(store, spec), SpecError);

    // All-constant stores still produce valid (degenerate) edges.
    history::SnapshotStore frozen(2, history::StoreMeta{});
    frozen.record(0, {0.5f, 0.5f});
    frozen.record(10, {0.5f, 0.5f});
    const Histogram hist = deviation_histogram(frozen);
    CHECK(std::accumulate(hist.counts.begin(), hist.counts.end(), int64_t{0}) == 2);
}

TEST_CASE("percentile interpolates order statistics", "[analysis]") {
    CHECK(percentile({1.0, 2.0, 3.0, 4.0, 5.0}, 50.0) == 3.0);
    CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 50.0) == 2.5);
    CHECK(percentile({5.0, 1.0, 3.0}, 0.0) == 1.0);
    CHECK(percentile({5.0, 1.0, 3.0}, 100.0) == 5.0);
    CHECK(percentile({2.0}, 75.0) == 2.0);
    CHECK_THROWS_AS(percentile({}, 50.0), EmptyDataset);
}

TEST_CASE("trajectory sampling stays inside each bin", "[analysis]") {
    const auto store = random_walk_store(200, 15, 11);
    const Histogram hist = deviation_histogram(store);
    const auto trajs = sample_trajectories(store, hist, 2, 99);
    REQUIRE(!trajs.empty());
    for (const auto& t : trajs) {
        // Each sampled series is a deviation series: starts at zero.
        REQUIRE(!t.series.values.empty());
        CHECK(t.series.values.front() == 0.0f);
        // The sampled scalar's metric value belongs to the claimed bin.
        const double v = hist.values[static_cast<size_t>(t.series.flat_index)];
        CHECK(v >= hist.edges[static_cast<size_t>(t.bin)] - 1e-12);
        CHECK(v <= hist.edges[static_cast<size_t>(t.bin + 1)] + 1e-12);
    }

    // No more than per_bin per bin.
    std::map<int64_t, int64_t> per_bin;
    for (const auto& t : trajs) ++per_bin[t.bin];
    for (const auto& [bin, count] : per_bin) CHECK(count <= 2);

    // Deterministic and empty when per_bin = 0.
    const auto again = sample_trajectories(store, hist, 2, 99);
    REQUIRE(again.size() == trajs.size());
    for (size_t i = 0; i < trajs.size(); ++i)
        CHECK(again[i].series.flat_index == trajs[i].series.flat_index);
    CHECK(sample_trajectories(store, hist, 0, 99).empty());

    // Mismatched histogram is rejected.
    const auto other = random_walk_store(100, 5, 12);
    CHECK_THROWS_AS(sample_trajectories(other, hist, 2, 99), ShapeError);
}

TEST_CASE("curve csv round trips exactly", "[analysis][io]") {
    TrainingCurve curve = make_curve("demo", {{0, 2.302585092994046, 0.1, 0.0},
                                              {100, 1.5, 0.42, 3.25},
                                              {200, 0.7531, 0.58123456789012345, 6.5}});
    curve.config_hash = 0xdeadbeef12345678ull;
    curve.seed = 17;
    curve.jump_steps = {60, 80};

    testsupport::TempDir dir("curves");
    const auto path = dir / "demo.csv";
    save_curve_csv(curve, path);
    const TrainingCurve back = load_curve_csv(path);
    CHECK(back.name == "demo");
    CHECK(back.config_hash == curve.config_hash);
    CHECK(back.seed == curve.seed);
    CHECK(back.jump_steps == curve.jump_steps);
    REQUIRE(back.points.size() == curve.points.size());
    for (size_t i = 0; i < curve.points.size(); ++i) {
        CHECK(back.points[i].step == curve.points[i].step);
        CHECK(back.points[i].loss == curve.points[i].loss);          // %.17g exact
        CHECK(back.points[i].val_acc == curve.points[i].val_acc);
        CHECK(back.points[i].seconds == curve.points[i].seconds);
    }
}

TEST_CASE("curve csv rejects malformed files", "[analysis][io]") {
    testsupport::TempDir dir("curves-bad");

    {
        std::ofstream f(dir / "noheader.csv");
        f << "# name=x\n0,1.0,0.5,0.0\n";
    }
    CHECK_THROWS_AS(load_curve_csv(dir / "noheader.csv"), ConfigError);

    {
        std::ofstream f(dir / "wrongheader.csv");
        f << "step,loss\n0,1.0\n";
    }
    CHECK_THROWS_AS(load_curve_csv(dir / "wrongheader.csv"), ConfigError);

    {
        std::ofstream f(dir / "badrow.csv");
        f << "step,loss,val_acc,seconds\n0,oops,0.5,0.0\n";
    }
    CHECK_THROWS_AS(load_curve_csv(dir / "badrow.csv"), FormatError);

    {
        std::ofstream f(dir / "backwards.csv");
        f << "step,loss,val_acc,seconds\n100,1.0,0.5,0.0\n50,0.9,0.6,1.0\n";
    }
    CHECK_THROWS_AS(load_curve_csv(dir / "backwards.csv"), FormatError);

    CHECK_THROWS_AS(load_curve_csv(dir / "missing.csv"), IoError);
}

TEST_CASE("compare_runs summarizes against the reference", "[analysis]") {
    const TrainingCurve base = make_curve("base", {{0, 2.0, 0.10, 0.0},
                                                   {100, 1.0, 0.50, 1.0},
                                                   {200, 0.8, 0.70, 2.0},
                                                   {300, 0.7, 0.65, 3.0}});
    const TrainingCurve faster = make_curve("faster", {{0, 2.0, 0.10, 0.0},
                                                       {100, 0.9, 0.72, 1.0},
                                                       {200, 0.6, 0.80, 2.0},
                                                       {300, 0.5, 0.85, 3.0}});
    const TrainingCurve never = make_curve("never", {{0, 2.0, 0.10, 0.0},
                                                     {100, 1.5, 0.30, 1.0},
                                                     {200, 1.2, 0.40, 2.0}});

    const CompareResult result = compare_runs({base, faster, never});
    CHECK(result.reference_name == "base");
    CHECK(result.reference_max_acc == 0.70);
    CHECK(result.common_step == 200);  // `never` ends first
    REQUIRE(result.runs.size() == 3);

    const RunSummary& rbase = result.runs[0];
    CHECK(rbase.name == "base");
    CHECK(rbase.max_acc == 0.70);
    CHECK(rbase.max_acc_step == 200);
    CHECK(rbase.final_acc == 0.65);
    CHECK(rbase.first_reach_step == 200);  // reaches its own max at 200

    const RunSummary& rfast = result.runs[1];
    CHECK(rfast.max_acc == 0.85);
    CHECK(rfast.first_reach_step == 100);  // 0.72 >= 0.70 already at step 100
    CHECK(rfast.acc_at_common_step == 0.80);

    const RunSummary& rnever = result.runs[2];
    CHECK(rnever.first_reach_step == -1);
    CHECK(rnever.final_acc == 0.40);

    // Reference can be any index.
    const CompareResult alt = compare_runs({base, faster, never}, 1);
    CHECK(alt.reference_name == "faster");
    CHECK(alt.runs[0].name == "faster");
    CHECK(alt.runs[1].name == "base");
    CHECK(alt.runs[1].first_reach_step == -1);  // base never hits 0.85
}

TEST_CASE("compare_runs validates", "[analysis]") {
    const TrainingCurve only = make_curve("x", {{0, 1.0, 0.5, 0.0}});
    CHECK_THROWS_AS(compare_runs({only}), SpecError);
    CHECK_THROWS_AS(compare_runs({only, only}, 5), IndexError);

    const TrainingCurve empty = make_curve("empty", {});
    CHECK_THROWS_AS(compare_runs({only, empty}), EmptyDataset);

    const TrainingCurve late = make_curve("late", {{500, 1.0, 0.5, 0.0}, {600, 0.9, 0.6, 1.0}});
    const TrainingCurve early = make_curve("early", {{0, 1.0, 0.5, 0.0}, {100, 0.9, 0.6, 1.0}});
    CHECK_THROWS_AS(compare_runs({late, early}), RangeError);
}

TEST_CASE("export_curves writes per-run csvs and a summary", "[analysis][io]") {
    const TrainingCurve a = make_curve("run_a", {{0, 2.0, 0.1, 0.0}, {100, 1.0, 0.6, 1.0}});
    const TrainingCurve b = make_curve("run_b", {{0, 2.0, 0.2, 0.0}, {100, 0.9, 0.7, 1.0}});
    testsupport::TempDir dir("export");
    const CompareResult result = export_curves({a, b}, dir.path());
    CHECK(std::filesystem::exists(dir / "run_a.csv"));
    CHECK(std::filesystem::exists(dir / "run_b.csv"));
    CHECK(std::filesystem::exists(dir / "summary.csv"));
    CHECK(result.runs.size() == 2);

    const std::string table = format_summary_table(result);
    CHECK(table.find("run_a") != std::string::npos);
    CHECK(table.find("run_b") != std::string::npos);
}
