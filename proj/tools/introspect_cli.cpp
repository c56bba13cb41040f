// Command-line front end for the introspection training toolkit.
//
// Pipeline:
//   train-base          train a network, recording its weight-evolution history
//   build-dataset       turn a history into stratified forecasting samples
//   train-introspection fit the 4->40->1 forecaster on those samples
//   train-target        train a network with forecast jumps applied
//   analyze             weight-evolution histograms and sampled trajectories
//   compare             summarize curve CSVs against a no-jump reference
//   history export      dump one weight's recorded series as CSV
//
// Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 IO/format.

#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "introspect/analysis/curves.hpp"
#include "introspect/analysis/histogram.hpp"
#include "introspect/config.hpp"
#include "introspect/errors.hpp"
#include "introspect/history/store.hpp"
#include "introspect/intro/dataset.hpp"
#include "introspect/intro/model.hpp"
#include "introspect/runner.hpp"

namespace fs = std::filesystem;
using namespace introspect;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir = "out";
    std::optional<uint64_t> seed;
    bool deterministic = false;
};

void add_global_flags(CLI::App* cmd, GlobalArgs& args, bool needs_config) {
    auto* config = cmd->add_option("--config", args.config_path, "experiment config file (JSON)");
    if (needs_config) config->required();
    cmd->add_option("--data-dir", args.data_dir, "directory with MNIST IDX files");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "derive all run seeds from this value");
    cmd->add_flag("--deterministic", args.deterministic,
                  "zero wall-clock columns for bit-reproducible artifacts");
}

RunOverrides overrides_from(const GlobalArgs& args) {
    RunOverrides ov;
    ov.seed = args.seed;
    ov.data_dir = args.data_dir;
    ov.deterministic = args.deterministic;
    return ov;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path.string());
    out << j.dump(2) << "\n";
}

void save_histogram_csv(const analysis::Histogram& hist, const fs::path& path,
                        bool log_frequency) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path.string());
    out << "# metric=" << analysis::to_string(hist.metric) << "\n";
    out << (log_frequency ? "bin_lo,bin_hi,count,log10_count\n" : "bin_lo,bin_hi,count\n");
    char buf[160];
    for (size_t b = 0; b < hist.counts.size(); ++b) {
        if (log_frequency) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%lld,%.17g\n", hist.edges[b],
                          hist.edges[b + 1], static_cast<long long>(hist.counts[b]),
                          std::log10(static_cast<double>(hist.counts[b]) + 1.0));
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%lld\n", hist.edges[b],
                          hist.edges[b + 1], static_cast<long long>(hist.counts[b]));
        }
        out << buf;
    }
}

int cmd_train_base(const GlobalArgs& args) {
    ExperimentConfig cfg = load_config(args.config_path);
    RunOverrides ov = overrides_from(args);
    ov.disable_jumps = true;
    ov.force_record_for_build = true;
    const RunResult result = run_experiment(cfg, args.out_dir, ov);
    std::cout << "train-base: " << cfg.name << " finished; final val acc "
              << result.final_val_acc << ", history " << result.store->size()
              << " snapshots -> " << args.out_dir << "\n";
    return 0;
}

int cmd_build_dataset(const GlobalArgs& args, const std::string& history_path) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (args.seed) apply_seed_override(cfg, *args.seed);
    const history::SnapshotStore store = history::SnapshotStore::load(history_path);
    const nn::NetworkPlan plan = nn::NetworkPlan::compile(cfg.network);
    if (store.meta().spec_hash != plan.spec_hash())
        throw ConfigError("history file " + history_path +
                          " was recorded for a different network spec");

    intro::BuildConfig build;
    build.sample_count = cfg.history.sample_count;
    build.k = cfg.history.k;
    build.t_min = cfg.history.t_min;
    build.t_max = cfg.history.t_max;
    build.val_fraction = cfg.history.val_fraction;
    build.seed = cfg.seeds.data;
    const intro::IntroDataset dataset = intro::build_dataset(store, build);

    fs::create_directories(args.out_dir);
    intro::save_samples_csv(dataset.train, fs::path(args.out_dir) / "samples_train.csv");
    intro::save_samples_csv(dataset.val, fs::path(args.out_dir) / "samples_val.csv");
    nlohmann::json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["history"] = history_path;
    manifest["k"] = build.k;
    manifest["sample_count"] = build.sample_count;
    manifest["train_samples"] = dataset.train.size();
    manifest["val_samples"] = dataset.val.size();
    write_json(manifest, fs::path(args.out_dir) / "build_manifest.json");
    std::cout << "build-dataset: " << dataset.train.size() << " train / " << dataset.val.size()
              << " val samples -> " << args.out_dir << "\n";
    return 0;
}

int cmd_train_introspection(const GlobalArgs& args, const std::string& samples_dir) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (args.seed) apply_seed_override(cfg, *args.seed);
    const fs::path dir = samples_dir.empty() ? fs::path(args.out_dir) : fs::path(samples_dir);
    const auto train = intro::load_samples_csv(dir / "samples_train.csv");
    const auto val = intro::load_samples_csv(dir / "samples_val.csv");

    intro::IntroProtocol proto;
    proto.activation = cfg.intro.activation == "relu"
                           ? intro::IntrospectionModel::Activation::relu
                           : intro::IntrospectionModel::Activation::identity;
    proto.schedule = optim::LrSchedule::step_decay(cfg.intro.lr, cfg.intro.decay_interval,
                                                   cfg.intro.decay_factor);
    proto.batch = cfg.intro.batch;
    proto.steps = cfg.intro.steps;
    proto.eval_every = cfg.intro.eval_every;
    proto.seed = cfg.seeds.init;
    const intro::IntroTrainResult result = intro::train_introspection(train, val, proto);

    fs::create_directories(args.out_dir);
    intro::save_model(result.model, fs::path(args.out_dir) / "model.intr");
    {
        std::ofstream curve(fs::path(args.out_dir) / "intro_curve.csv");
        if (!curve) throw IoError("cannot create intro_curve.csv");
        curve << "step,train_l1,val_l1\n";
        char buf[128];
        for (const auto& p : result.curve) {
            std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n",
                          static_cast<long long>(p.step), p.train_l1, p.val_l1);
            curve << buf;
        }
    }
    nlohmann::json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["final_train_l1"] = result.final_train_l1;
    manifest["final_val_l1"] = result.final_val_l1;
    manifest["train_samples"] = train.size();
    manifest["val_samples"] = val.size();
    write_json(manifest, fs::path(args.out_dir) / "intro_manifest.json");
    std::cout << "train-introspection: final train L1 " << result.final_train_l1
              << ", val L1 " << result.final_val_l1 << " -> " << args.out_dir << "\n";
    return 0;
}

int cmd_train_target(const GlobalArgs& args, const std::string& model_path) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (!model_path.empty()) cfg.jump.model_path = model_path;
    const RunResult result = run_experiment(cfg, args.out_dir, overrides_from(args));
    std::cout << "train-target: " << cfg.name << " finished; final val acc "
              << result.final_val_acc;
    for (const auto& report : result.jump_reports)
        std::cout << "; jump@" << report.step << " clamped " << report.clamped;
    std::cout << " -> " << args.out_dir << "\n";
    return 0;
}

int cmd_analyze(const GlobalArgs& args, const std::string& history_path, int64_t bins,
                int64_t per_bin) {
    const history::SnapshotStore store = history::SnapshotStore::load(history_path);
    analysis::HistogramSpec spec;
    spec.bins = bins;
    spec.log_frequency = true;

    spec.metric = analysis::HistMetric::final_minus_initial;
    const analysis::Histogram dev = analysis::deviation_histogram(store, spec);
    spec.metric = analysis::HistMetric::sqrt_second_moment;
    const analysis::Histogram mom = analysis::second_moment_histogram(store, spec);

    fs::create_directories(args.out_dir);
    save_histogram_csv(dev, fs::path(args.out_dir) / "deviation_histogram.csv", true);
    save_histogram_csv(mom, fs::path(args.out_dir) / "second_moment_histogram.csv", true);

    const uint64_t traj_seed = args.seed.value_or(0);
    const auto trajectories = analysis::sample_trajectories(store, dev, per_bin, traj_seed);
    {
        std::ofstream out(fs::path(args.out_dir) / "trajectories.csv");
        if (!out) throw IoError("cannot create trajectories.csv");
        out << "bin,flat_index,step,deviation\n";
        char buf[160];
        for (const auto& traj : trajectories) {
            for (size_t i = 0; i < traj.series.steps.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%.9g\n",
                              static_cast<long long>(traj.bin),
                              static_cast<long long>(traj.series.flat_index),
                              static_cast<long long>(traj.series.steps[i]),
                              static_cast<double>(traj.series.values[i]));
                out << buf;
            }
        }
    }

    std::vector<double> abs_dev(dev.values.size());
    for (size_t i = 0; i < dev.values.size(); ++i) abs_dev[i] = std::abs(dev.values[i]);
    const double median = analysis::percentile(abs_dev, 50.0);
    const double p99 = analysis::percentile(abs_dev, 99.0);
    nlohmann::json stats;
    stats["param_count"] = store.param_count();
    stats["median_abs_deviation"] = median;
    stats["p99_abs_deviation"] = p99;
    stats["deviation_count_sum"] =
        std::accumulate(dev.counts.begin(), dev.counts.end(), int64_t{0});
    stats["second_moment_count_sum"] =
        std::accumulate(mom.counts.begin(), mom.counts.end(), int64_t{0});
    stats["trajectories"] = trajectories.size();
    write_json(stats, fs::path(args.out_dir) / "analysis.json");
    std::cout << "analyze: median |d| " << median << ", p99 |d| " << p99 << " -> "
              << args.out_dir << "\n";
    return 0;
}

int cmd_compare(const GlobalArgs& args, const std::vector<std::string>& curve_paths,
                size_t reference) {
    std::vector<analysis::TrainingCurve> curves;
    curves.reserve(curve_paths.size());
    for (const std::string& path : curve_paths)
        curves.push_back(analysis::load_curve_csv(path));
    const analysis::CompareResult result = analysis::compare_runs(curves, reference);
    fs::create_directories(args.out_dir);
    analysis::save_summary_csv(result, fs::path(args.out_dir) / "summary.csv");
    std::cout << analysis::format_summary_table(result);
    return 0;
}

int cmd_history_export(const GlobalArgs& args, const std::string& history_path, int64_t index) {
    const history::SnapshotStore store = history::SnapshotStore::load(history_path);
    fs::create_directories(args.out_dir);
    const fs::path path = fs::path(args.out_dir) / ("weight_" + std::to_string(index) + ".csv");
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path.string());
    history::export_weight_csv(store, index, out);
    std::cout << "history export: index " << index << " -> " << path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weight-evolution forecasting toolkit"};
    app.require_subcommand(1);

    GlobalArgs args;

    auto* train_base = app.add_subcommand("train-base",
                                          "train a network and record its weight history");
    add_global_flags(train_base, args, true);

    auto* build = app.add_subcommand("build-dataset",
                                     "build stratified forecasting samples from a history");
    std::string history_path;
    add_global_flags(build, args, true);
    build->add_option("--history", history_path, "WHST history file")->required();

    auto* train_intro = app.add_subcommand("train-introspection",
                                           "train the 4->40->1 forecaster");
    std::string samples_dir;
    add_global_flags(train_intro, args, true);
    train_intro->add_option("--samples", samples_dir,
                            "directory with samples_train.csv/samples_val.csv");

    auto* train_target = app.add_subcommand("train-target",
                                            "train a network with forecast jumps");
    std::string model_path;
    add_global_flags(train_target, args, true);
    train_target->add_option("--model", model_path, "introspection model file override");

    auto* analyze = app.add_subcommand("analyze", "weight-evolution histograms and trajectories");
    std::string analyze_history;
    int64_t bins = 101;
    int64_t per_bin = 2;
    add_global_flags(analyze, args, false);
    analyze->add_option("--history", analyze_history, "WHST history file")->required();
    analyze->add_option("--bins", bins, "histogram bin count");
    analyze->add_option("--per-bin", per_bin, "trajectories sampled per bin");

    auto* compare = app.add_subcommand("compare", "summarize curves against a reference");
    std::vector<std::string> curve_paths;
    size_t reference = 0;
    add_global_flags(compare, args, false);
    compare->add_option("curves", curve_paths, "curve CSV files")->required()->expected(-2);
    compare->add_option("--reference", reference, "index of the no-jump reference curve");

    auto* history_cmd = app.add_subcommand("history", "history file utilities");
    auto* export_cmd = history_cmd->add_subcommand("export", "dump one weight series as CSV");
    std::string export_history;
    int64_t export_index = 0;
    add_global_flags(export_cmd, args, false);
    export_cmd->add_option("--history", export_history, "WHST history file")->required();
    export_cmd->add_option("--index", export_index, "flat weight index")->required();
    history_cmd->require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (train_base->parsed()) return cmd_train_base(args);
        if (build->parsed()) return cmd_build_dataset(args, history_path);
        if (train_intro->parsed()) return cmd_train_introspection(args, samples_dir);
        if (train_target->parsed()) return cmd_train_target(args, model_path);
        if (analyze->parsed()) return cmd_analyze(args, analyze_history, bins, per_bin);
        if (compare->parsed()) return cmd_compare(args, curve_paths, reference);
        if (export_cmd->parsed()) return cmd_history_export(args, export_history, export_index);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const SpecError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
