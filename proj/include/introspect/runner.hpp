#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "introspect/analysis/curves.hpp"
#include "introspect/config.hpp"
#include "introspect/data/dataset.hpp"
#include "introspect/data/idx.hpp"
#include "introspect/errors.hpp"
#include "introspect/history/store.hpp"
#include "introspect/intro/model.hpp"
#include "introspect/nn/network.hpp"
#include "introspect/optim/optimizer.hpp"
#include "introspect/predictors/jump.hpp"

namespace introspect {

struct RunOverrides {
    bool disable_jumps = false;          // train-base: force a no-jump run
    bool force_record_for_build = false; // train-base: keep dataset closure snapshots
    std::optional<uint64_t> seed;        // --seed
    std::string data_dir;                // --data-dir
    bool deterministic = false;          // zero wall-clock in artifacts
};

struct RunResult {
    analysis::TrainingCurve curve;
    std::shared_ptr<history::SnapshotStore> store;
    std::vector<predictors::JumpReport> jump_reports;
    double final_val_acc = 0.0;
    double max_val_acc = 0.0;
    double final_train_loss = 0.0;
};

namespace rundetail {

struct LoadedData {
    data::Dataset train;
    data::Dataset val;
};

inline LoadedData load_data(const ExperimentConfig& cfg, const std::string& data_dir_override) {
    LoadedData out;
    if (cfg.data.source == "synthetic") {
        data::SynthOptions opt;
        opt.h = cfg.data.height;
        opt.w = cfg.data.width;
        opt.c = cfg.data.channels;
        opt.amplitude = cfg.data.amplitude;
        opt.noise = cfg.data.noise;
        opt.sample_offset = 0;
        out.train = data::synth_dataset(cfg.data.n_train, cfg.data.classes, cfg.seeds.data, opt);
        opt.sample_offset = static_cast<uint64_t>(cfg.data.n_train);
        out.val = data::synth_dataset(cfg.data.n_val, cfg.data.classes, cfg.seeds.data, opt);
        out.val.split = data::Split::validation;
    } else {
        const std::string dir = !data_dir_override.empty() ? data_dir_override : cfg.data.dir;
        if (dir.empty())
            throw ConfigError("config field '$.data.dir': missing (or pass --data-dir)");
        const auto paths = data::mnist_paths(dir);
        out.train = data::load_idx(paths.train_images, paths.train_labels, data::Split::train);
        out.val = data::load_idx(paths.test_images, paths.test_labels, data::Split::validation);
    }
    return out;
}

inline double evaluate_accuracy(const nn::NetworkPlan& plan, const nn::Params& params,
                                const data::Dataset& val, int64_t limit) {
    const int64_t n = limit > 0 ? std::min<int64_t>(limit, val.n) : val.n;
    if (n == 0) throw EmptyDataset("evaluate_accuracy: empty validation set");
    int64_t correct = 0;
    constexpr int64_t kChunk = 500;
    std::vector<int64_t> indices;
    for (int64_t start = 0; start < n; start += kChunk) {
        const int64_t m = std::min(kChunk, n - start);
        indices.resize(static_cast<size_t>(m));
        for (int64_t i = 0; i < m; ++i) indices[static_cast<size_t>(i)] = start + i;
        const nn::Batch batch = data::gather_batch(val, indices);
        const auto state = nn::forward(plan, params, batch, nn::Mode::eval);
        const std::vector<float>& logits = nn::logits(state);
        const int64_t classes = plan.output_size();
        for (int64_t i = 0; i < m; ++i) {
            const float* row = logits.data() + i * classes;
            int64_t best = 0;
            for (int64_t cidx = 1; cidx < classes; ++cidx)
                if (row[cidx] > row[best]) best = cidx;
            if (best == batch.labels[static_cast<size_t>(i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

inline predictors::Predictor make_predictor(const JumpConfig& jump, uint64_t predictor_seed) {
    if (jump.predictor == "introspection" || jump.predictor == "linear-introspection") {
        if (jump.model_path.empty())
            throw ConfigError("config field '$.jump.model_path': required for predictor '" +
                              jump.predictor + "'");
        predictors::IntrospectionPredictor p;
        p.model = intro::load_model(jump.model_path);
        const bool want_relu = jump.predictor == "introspection";
        const bool is_relu = p.model.activation == intro::IntrospectionModel::Activation::relu;
        if (want_relu != is_relu)
            throw ConfigError("config field '$.jump.model_path': model activation does not "
                              "match predictor '" + jump.predictor + "'");
        return p;
    }
    if (jump.predictor == "quadratic-fit") return predictors::QuadraticFitPredictor{jump.r};
    if (jump.predictor == "linear-fit") return predictors::LinearFitPredictor{jump.r};
    return predictors::GaussianNoisePredictor{jump.sigma, predictor_seed};
}

inline nlohmann::json report_to_json(const predictors::JumpReport& r) {
    nlohmann::json j;
    j["step"] = r.step;
    j["forecasted"] = r.forecasted;
    j["skipped_biases"] = r.skipped_biases;
    j["clamped"] = r.clamped;
    j["cap"] = r.cap;
    j["max_abs_forecast"] = r.max_abs_forecast;
    return j;
}

inline void write_manifest(const std::filesystem::path& out_dir, const ExperimentConfig& cfg,
                           const RunOverrides& ov, const RunResult& result, bool diverged,
                           const std::string& error) {
    nlohmann::json m;
    m["schema_version"] = kConfigSchemaVersion;
    m["tool_version"] = kToolVersion;
    m["name"] = cfg.name;
    m["config"] = config_to_json(cfg);
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    m["config_hash"] = hash_hex;
    m["deterministic"] = ov.deterministic;
    m["seeds"] = {{"init", cfg.seeds.init},
                  {"data", cfg.seeds.data},
                  {"dropout", cfg.seeds.dropout},
                  {"predictor", cfg.seeds.predictor}};
    m["diverged"] = diverged;
    if (!error.empty()) m["error"] = error;
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : result.jump_reports) reports.push_back(report_to_json(r));
    m["jump_reports"] = reports;
    m["results"] = {{"final_val_acc", result.final_val_acc},
                    {"max_val_acc", result.max_val_acc},
                    {"final_train_loss", result.final_train_loss}};
    m["artifacts"] = {{"curve", "curve.csv"}, {"history", "history.whst"}};
    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw IoError("cannot create manifest in " + out_dir.string());
    out << m.dump(2) << "\n";
}

}  // namespace rundetail

// Runs one experiment end to end: training with snapshot recording at every
// required step, jumps per plan, periodic evaluation, and artifacts
// (curve.csv, history.whst, manifest.json) under out_dir. On divergence the
// partial artifacts are flushed before DivergenceError propagates.
inline RunResult run_experiment(ExperimentConfig cfg, const std::filesystem::path& out_dir,
                                const RunOverrides& ov = {}) {
    if (ov.seed) apply_seed_override(cfg, *ov.seed);
    if (ov.disable_jumps) cfg.jump.enabled = false;
    if (ov.force_record_for_build) cfg.history.record_for_build = true;

    std::filesystem::create_directories(out_dir);
    const nn::NetworkPlan plan = nn::NetworkPlan::compile(cfg.network);
    if (!plan.has_xent_head())
        throw ConfigError("config field '$.network.layers': final layer must be softmax_xent");

    const rundetail::LoadedData dataset = rundetail::load_data(cfg, ov.data_dir);
    if (dataset.train.sample_size() != plan.input_size())
        throw ConfigError("config field '$.network.input': dataset sample size " +
                          std::to_string(dataset.train.sample_size()) +
                          " != network input " + std::to_string(plan.input_size()));

    const std::vector<int64_t> jump_steps = cfg.jump.enabled ? cfg.jump.steps
                                                             : std::vector<int64_t>{};
    std::optional<history::BuildRange> build;
    if (cfg.history.record_for_build) {
        history::BuildRange range;
        range.t_min = cfg.history.t_min >= 0 ? cfg.history.t_min : (cfg.total_steps + 9) / 10;
        range.t_max = cfg.history.t_max >= 0
                          ? cfg.history.t_max
                          : static_cast<int64_t>(std::floor(
                                static_cast<double>(cfg.total_steps) / cfg.history.k));
        build = range;
    }
    const std::vector<int64_t> required = history::required_steps(
        cfg.total_steps, cfg.history.stride, jump_steps, build, cfg.history.k);
    history::SnapshotStore::validate_memory(required.size(),
                                            static_cast<uint64_t>(plan.param_count()));

    history::StoreMeta meta;
    meta.spec_hash = plan.spec_hash();
    meta.seed = cfg.seeds.init;
    meta.optimizer = optim::to_string(cfg.optimizer.kind);
    meta.stride = cfg.history.stride;
    RunResult result;
    result.store = std::make_shared<history::SnapshotStore>(plan.param_count(), meta, required);
    const std::unordered_set<int64_t> required_set(required.begin(), required.end());

    nn::Params params = nn::init_params(plan, cfg.init, cfg.seeds.init);
    optim::OptimizerState<float> opt;
    switch (cfg.optimizer.kind) {
        case optim::OptKind::sgd:
            opt = optim::OptimizerState<float>::plain_sgd();
            break;
        case optim::OptKind::momentum:
            opt = optim::OptimizerState<float>::with_momentum(cfg.optimizer.mu);
            break;
        case optim::OptKind::adam:
            opt = optim::OptimizerState<float>::adam(cfg.optimizer.beta1, cfg.optimizer.beta2,
                                                     cfg.optimizer.eps);
            break;
    }

    std::optional<predictors::Predictor> predictor;
    if (cfg.jump.enabled)
        predictor = rundetail::make_predictor(cfg.jump, cfg.seeds.predictor);
    predictors::JumpOptions jump_opt;
    jump_opt.include_biases = cfg.jump.include_biases;

    result.curve.name = cfg.name;
    result.curve.config_hash = config_hash(cfg);
    result.curve.seed = ov.seed.value_or(cfg.seeds.init);
    result.curve.jump_steps = jump_steps;

    data::BatchCursor cursor(dataset.train, cfg.batch_size, cfg.seeds.data);
    const auto start_time = std::chrono::steady_clock::now();
    const auto elapsed = [&]() -> double {
        if (ov.deterministic) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time)
            .count();
    };

    double window_loss = 0.0;
    int64_t window_batches = 0;
    bool diverged = false;
    std::string error_text;

    const auto flush_artifacts = [&]() {
        analysis::save_curve_csv(result.curve, out_dir / "curve.csv");
        result.store->save(out_dir / "history.whst");
        rundetail::write_manifest(out_dir, cfg, ov, result, diverged, error_text);
    };

    try {
        size_t next_jump = 0;
        for (int64_t step = 0; step <= cfg.total_steps; ++step) {
            if (required_set.count(step) && !result.store->has(step))
                result.store->record(step, params.data);

            if (cfg.jump.enabled && next_jump < jump_steps.size() &&
                jump_steps[next_jump] == step) {
                jump_opt.clamp_cap = cfg.jump.clamp_multiplier > 0.0
                                         ? cfg.jump.clamp_multiplier *
                                               static_cast<double>(result.store->max_abs_weight())
                                         : 0.0;
                result.jump_reports.push_back(predictors::apply_jump(
                    params.data, *result.store, step, *predictor, plan, jump_opt));
                if (cfg.jump.reset_moments) {
                    opt.velocity.clear();
                    opt.m.clear();
                    opt.v.clear();
                }
                ++next_jump;
            }

            if (step % cfg.eval_every == 0 || step == cfg.total_steps) {
                analysis::CurvePoint point;
                point.step = step;
                point.loss =
                    window_batches > 0 ? window_loss / static_cast<double>(window_batches) : 0.0;
                point.val_acc = rundetail::evaluate_accuracy(plan, params, dataset.val,
                                                             cfg.eval_samples);
                point.seconds = elapsed();
                result.curve.points.push_back(point);
                result.max_val_acc = std::max(result.max_val_acc, point.val_acc);
                window_loss = 0.0;
                window_batches = 0;
            }

            if (step == cfg.total_steps) break;

            const nn::Batch batch = cursor.next();
            const auto state =
                nn::forward(plan, params, batch, nn::Mode::train,
                            rng::derive_key({cfg.seeds.dropout, static_cast<uint64_t>(step)}));
            const auto back = nn::backward(plan, params, batch, state);
            if (!std::isfinite(back.loss)) {
                diverged = true;
                error_text = "non-finite training loss at step " + std::to_string(step);
                break;
            }
            window_loss += static_cast<double>(back.loss);
            ++window_batches;
            result.final_train_loss = static_cast<double>(back.loss);
            optim::apply_step<float>(params.data, back.grad, optim::lr_at(cfg.schedule, step),
                                     opt);
        }
    } catch (const Error&) {
        // Structural errors (missing snapshots, bad model files) still leave
        // whatever artifacts exist on disk for debugging.
        flush_artifacts();
        throw;
    }

    if (!result.curve.points.empty()) result.final_val_acc = result.curve.points.back().val_acc;
    flush_artifacts();
    if (diverged) throw DivergenceError("run '" + cfg.name + "': " + error_text +
                                        " (partial artifacts in " + out_dir.string() + ")");
    return result;
}

}  // namespace introspect
