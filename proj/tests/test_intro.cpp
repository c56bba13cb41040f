#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "introspect/history/store.hpp"
#include "introspect/intro/dataset.hpp"
#include "introspect/intro/model.hpp"
#include "support/temp_dir.hpp"

using namespace introspect;
using namespace introspect::intro;

namespace {

// 8 weights whose |w(t)-w(0)| ordering is the identity: w_i(t) = slope_i * t
// with strictly descending slopes.
history::SnapshotStore sloped_store(int64_t last_step) {
    history::StoreMeta meta;
    meta.stride = 1;
    history::SnapshotStore store(8, meta);
    std::vector<float> vals(8);
    for (int64_t s = 0; s <= last_step; ++s) {
        for (int64_t i = 0; i < 8; ++i)
            vals[static_cast<size_t>(i)] = static_cast<float>(8 - i) * 0.001f * s;
        store.record(s, vals);
    }
    return store;
}

history::SnapshotStore constant_store(float value, int64_t params, int64_t last_step) {
    history::StoreMeta meta;
    meta.stride = 1;
    history::SnapshotStore store(params, meta);
    const std::vector<float> vals(static_cast<size_t>(params), value);
    for (int64_t s = 0; s <= last_step; ++s) store.record(s, vals);
    return store;
}

// Weights 1 and -1 routed so the net computes relu(x0) - relu(-x0) = x0
// (or plain x0 for the identity variant).
IntrospectionModel passthrough_model(IntrospectionModel::Activation act) {
    IntrospectionModel model;
    model.activation = act;
    const nn::NetworkPlan plan = model.plan();
    model.params.assign(static_cast<size_t>(plan.param_count()), 0.0f);
    // dense 4→40 weights are laid out (in, out): w[in*40 + out].
    model.params[0] = 1.0f;  // x0 -> h0
    const int64_t w2_offset = 4 * 40 + 40;
    if (act == IntrospectionModel::Activation::relu) {
        model.params[1] = -1.0f;                              // x0 -> h1
        model.params[static_cast<size_t>(w2_offset)] = 1.0f;  // h0 -> out
        model.params[static_cast<size_t>(w2_offset + 1)] = -1.0f;
    } else {
        model.params[static_cast<size_t>(w2_offset)] = 1.0f;
    }
    return model;
}

}  // namespace

TEST_CASE("strata allocation is largest remainder", "[intro]") {
    CHECK(intro::detail::allocate_strata({0.5, 0.25, 0.25}, 8) == std::array<int64_t, 3>{4, 2, 2});
    CHECK(intro::detail::allocate_strata({0.5, 0.25, 0.25}, 10) == std::array<int64_t, 3>{5, 3, 2});
    const auto counts = intro::detail::allocate_strata({0.5, 0.25, 0.25}, 50001);
    CHECK(counts[0] + counts[1] + counts[2] == 50001);
    for (size_t i = 0; i < 3; ++i) {
        const double exact = (i == 0 ? 0.5 : 0.25) * 50001;
        CHECK(std::abs(static_cast<double>(counts[i]) - exact) <= 1.0);
    }
}

TEST_CASE("dataset build respects the strata", "[intro]") {
    const auto store = sloped_store(40);
    BuildConfig cfg;
    cfg.sample_count = 8;
    cfg.t_min = 10;
    cfg.t_max = 20;
    cfg.val_fraction = 0.0;
    cfg.seed = 3;
    const IntroDataset ds = build_dataset(store, cfg);
    REQUIRE(ds.train.size() == 8);
    CHECK(ds.val.empty());

    int64_t top = 0, mid = 0, low = 0;
    for (const WeightSample& s : ds.train) {
        CHECK(s.t >= 10);
        CHECK(s.t <= 20);
        if (s.flat_index < 4)
            ++top;
        else if (s.flat_index < 6)
            ++mid;
        else
            ++low;
    }
    // Slopes descend with the index, so ranks equal indices: 4/2/2 split.
    CHECK(top == 4);
    CHECK(mid == 2);
    CHECK(low == 2);
}

TEST_CASE("samples read the four taps and the scaled target", "[intro]") {
    const auto store = sloped_store(40);
    BuildConfig cfg;
    cfg.sample_count = 12;
    cfg.t_min = 10;
    cfg.t_max = 20;
    cfg.val_fraction = 0.0;
    cfg.seed = 9;
    const IntroDataset ds = build_dataset(store, cfg);
    for (const WeightSample& s : ds.train) {
        const auto& wt = store.lookup_exact(s.t);
        const auto& w7 = store.lookup_exact(s.t * 7 / 10);
        const auto& w4 = store.lookup_exact(s.t * 4 / 10);
        const auto& w0 = store.lookup_exact(0);
        const auto& wk = store.lookup_exact(scaled_target_step(s.k, s.t));
        const auto i = static_cast<size_t>(s.flat_index);
        CHECK(s.x[0] == wt[i] * 1000.0f);
        CHECK(s.x[1] == w7[i] * 1000.0f);
        CHECK(s.x[2] == w4[i] * 1000.0f);
        CHECK(s.x[3] == w0[i] * 1000.0f);
        CHECK(s.y == wk[i] * 1000.0f);
    }
}

TEST_CASE("constant weight samples scale to threes", "[intro]") {
    const auto store = constant_store(0.003f, 8, 20);
    BuildConfig cfg;
    cfg.sample_count = 6;
    cfg.t_min = 5;
    cfg.t_max = 10;
    cfg.val_fraction = 0.0;
    const IntroDataset ds = build_dataset(store, cfg);
    REQUIRE(ds.train.size() == 6);
    for (const WeightSample& s : ds.train) {
        for (float x : s.x) CHECK(x == 3.0f);
        CHECK(s.y == 3.0f);
    }
}

TEST_CASE("derived t range uses 10 percent and 1/k of the run", "[intro]") {
    const auto required = history::required_steps(1000, 100, {}, history::BuildRange{100, 500});
    history::StoreMeta meta;
    meta.stride = 100;
    history::SnapshotStore store(8, meta);
    std::vector<float> vals(8);
    for (int64_t s : required) {
        for (int64_t i = 0; i < 8; ++i)
            vals[static_cast<size_t>(i)] = static_cast<float>(8 - i) * 0.0001f * s;
        store.record(s, vals);
    }

    BuildConfig cfg;
    cfg.sample_count = 40;
    cfg.val_fraction = 0.0;
    const IntroDataset ds = build_dataset(store, cfg);
    for (const WeightSample& s : ds.train) {
        CHECK(s.t >= 100);
        CHECK(s.t <= 500);
        CHECK(s.t % 100 == 0);
    }
}

TEST_CASE("train and validation never share a weight", "[intro]") {
    history::StoreMeta meta;
    meta.stride = 1;
    history::SnapshotStore store(40, meta);
    std::vector<float> vals(40);
    for (int64_t s = 0; s <= 40; ++s) {
        for (int64_t i = 0; i < 40; ++i)
            vals[static_cast<size_t>(i)] = static_cast<float>(40 - i) * 0.001f * s;
        store.record(s, vals);
    }
    BuildConfig cfg;
    cfg.sample_count = 200;
    cfg.t_min = 10;
    cfg.t_max = 20;
    cfg.val_fraction = 0.4;
    cfg.seed = 17;
    const IntroDataset ds = build_dataset(store, cfg);
    REQUIRE(!ds.val.empty());
    REQUIRE(ds.train.size() + ds.val.size() == 200);

    std::set<int64_t> train_weights, val_weights;
    for (const auto& s : ds.train) train_weights.insert(s.flat_index);
    for (const auto& s : ds.val) val_weights.insert(s.flat_index);
    std::vector<int64_t> overlap;
    std::set_intersection(train_weights.begin(), train_weights.end(), val_weights.begin(),
                          val_weights.end(), std::back_inserter(overlap));
    CHECK(overlap.empty());
}

TEST_CASE("dataset build is deterministic in the seed", "[intro]") {
    const auto store = sloped_store(40);
    BuildConfig cfg;
    cfg.sample_count = 20;
    cfg.t_min = 10;
    cfg.t_max = 20;
    cfg.seed = 5;
    const IntroDataset a = build_dataset(store, cfg);
    const IntroDataset b = build_dataset(store, cfg);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    cfg.seed = 6;
    const IntroDataset c = build_dataset(store, cfg);
    CHECK(a.train != c.train);
}

TEST_CASE("dataset build rejects bad configs", "[intro]") {
    const auto store = sloped_store(40);
    BuildConfig cfg;
    cfg.sample_count = 0;
    CHECK_THROWS_AS(build_dataset(store, cfg), SpecError);

    cfg = BuildConfig{};
    cfg.k = 1.0;
    CHECK_THROWS_AS(build_dataset(store, cfg), SpecError);

    cfg = BuildConfig{};
    cfg.fractions = {0.5, 0.4, 0.2};
    CHECK_THROWS_AS(build_dataset(store, cfg), SpecError);

    cfg = BuildConfig{};
    cfg.val_fraction = 1.0;
    CHECK_THROWS_AS(build_dataset(store, cfg), SpecError);

    // Empty candidate range.
    cfg = BuildConfig{};
    cfg.sample_count = 4;
    cfg.t_min = 21;
    cfg.t_max = 25;
    const auto short_store = sloped_store(20);  // t_max=25 has no candidates ≤ floor(20/2)
    CHECK_THROWS_AS(build_dataset(short_store, cfg), RangeError);

    // A candidate whose taps were never recorded.
    history::StoreMeta meta;
    meta.stride = 1;
    history::SnapshotStore holes(8, meta);
    const std::vector<float> vals(8, 1.0f);
    holes.record(0, vals);
    holes.record(10, vals);
    holes.record(20, vals);
    BuildConfig hole_cfg;
    hole_cfg.sample_count = 4;
    hole_cfg.t_min = 10;
    hole_cfg.t_max = 10;
    CHECK_THROWS_AS(build_dataset(holes, hole_cfg), MissingSnapshot);

    // Too few weights to stratify.
    const auto tiny = constant_store(0.1f, 2, 20);
    BuildConfig tiny_cfg;
    tiny_cfg.sample_count = 4;
    tiny_cfg.t_min = 5;
    tiny_cfg.t_max = 10;
    CHECK_THROWS_AS(build_dataset(tiny, tiny_cfg), SpecError);

    history::SnapshotStore empty(4, history::StoreMeta{});
    CHECK_THROWS_AS(build_dataset(empty, BuildConfig{}), EmptyDataset);
}

TEST_CASE("samples csv round trips exactly", "[intro][io]") {
    const auto store = sloped_store(40);
    BuildConfig cfg;
    cfg.sample_count = 25;
    cfg.t_min = 10;
    cfg.t_max = 20;
    cfg.seed = 21;
    const IntroDataset ds = build_dataset(store, cfg);

    testsupport::TempDir dir("samples");
    const auto path = dir / "train.csv";
    save_samples_csv(ds.train, path);
    const auto back = load_samples_csv(path);
    CHECK(back == ds.train);

    // Corrupt header.
    {
        std::ofstream f(dir / "bad.csv");
        f << "flat,t,k\n1,2,3\n";
    }
    CHECK_THROWS_AS(load_samples_csv(dir / "bad.csv"), FormatError);

    // Malformed row.
    {
        std::ofstream f(dir / "row.csv");
        f << "flat_index,t,k,x0,x1,x2,x3,y\n1,2,2.0,notanumber,0,0,0,0\n";
    }
    CHECK_THROWS_AS(load_samples_csv(dir / "row.csv"), FormatError);

    CHECK_THROWS_AS(load_samples_csv(dir / "missing.csv"), IoError);
}

TEST_CASE("passthrough model reproduces w(t) exactly", "[intro]") {
    for (const auto act :
         {IntrospectionModel::Activation::relu, IntrospectionModel::Activation::identity}) {
        const IntrospectionModel model = passthrough_model(act);
        for (const float wt : {0.25f, -0.125f, 0.1f, 0.003f, 0.0f, -3.75f}) {
            const double exact = static_cast<double>(wt);
            const double got = predict_weight(model, {exact, 0.5, -0.25, 0.125});
            CHECK(got == exact);  // bit-exact: scale round trip is lossless
        }
    }
}

TEST_CASE("zero model forecasts zero and scores mean |y|", "[intro]") {
    IntrospectionModel model;
    model.params.assign(static_cast<size_t>(model.plan().param_count()), 0.0f);
    CHECK(predict_weight(model, {1.0, 2.0, 3.0, 4.0}) == 0.0);

    std::vector<WeightSample> samples(10);
    for (size_t i = 0; i < samples.size(); ++i) {
        samples[i].x = {3.0f, 3.0f, 3.0f, 3.0f};
        samples[i].y = (i % 2 == 0) ? 3.0f : -3.0f;
    }
    CHECK(evaluate_l1(model, samples) == 3.0);

    const IntrospectionModel pt = passthrough_model(IntrospectionModel::Activation::relu);
    std::vector<WeightSample> aligned(4);
    for (auto& s : aligned) {
        s.x = {2.5f, 0.0f, 0.0f, 0.0f};
        s.y = 2.5f;
    }
    CHECK(evaluate_l1(pt, aligned) == 0.0);

    CHECK_THROWS_AS(evaluate_l1(model, {}), EmptyDataset);
}

TEST_CASE("forecast rejects non-finite inputs and bad params", "[intro]") {
    const IntrospectionModel model = passthrough_model(IntrospectionModel::Activation::relu);
    CHECK_THROWS_AS(
        predict_weight(model, {std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, 0.0}),
        NumericError);
    CHECK_THROWS_AS(
        predict_weight(model, {0.0, std::numeric_limits<double>::infinity(), 0.0, 0.0}),
        NumericError);

    IntrospectionModel broken = model;
    broken.params.pop_back();
    CHECK_THROWS_AS(predict_weight(broken, {0.0, 0.0, 0.0, 0.0}), ShapeError);
}

TEST_CASE("make_model is seeded and activation-shaped", "[intro]") {
    const auto a = make_model(IntrospectionModel::Activation::relu, 1);
    const auto b = make_model(IntrospectionModel::Activation::relu, 1);
    const auto c = make_model(IntrospectionModel::Activation::relu, 2);
    CHECK(a == b);
    CHECK(a.params != c.params);
    CHECK(a.params.size() == 4 * 40 + 40 + 40 + 1);

    const auto lin = make_model(IntrospectionModel::Activation::identity, 1);
    CHECK(lin.plan().layers().size() == 2);
    CHECK(a.plan().layers().size() == 3);
}

TEST_CASE("training drives identical samples below 0.01 L1", "[intro][slow]") {
    std::vector<WeightSample> train(200);
    for (auto& s : train) {
        s.x = {3.0f, 3.0f, 3.0f, 3.0f};
        s.y = 3.0f;
    }
    IntroProtocol proto;
    proto.steps = 2000;
    proto.eval_every = 500;
    proto.seed = 4;
    const IntroTrainResult result = train_introspection(train, {}, proto);
    CHECK(result.final_train_l1 < 0.01);
    CHECK(std::isnan(result.final_val_l1));
    REQUIRE(result.curve.size() == 4);

    // Window-mean L1 is non-increasing (small slack for the noise floor).
    for (size_t i = 1; i < result.curve.size(); ++i)
        CHECK(result.curve[i].train_l1 <= result.curve[i - 1].train_l1 + 1e-3);

    // Deterministic replay.
    const IntroTrainResult again = train_introspection(train, {}, proto);
    CHECK(again.model.params == result.model.params);
    CHECK(again.final_train_l1 == result.final_train_l1);
}

TEST_CASE("training validates inputs", "[intro]") {
    IntroProtocol proto;
    CHECK_THROWS_AS(train_introspection({}, {}, proto), EmptyDataset);
    std::vector<WeightSample> one(1);
    proto.batch = 0;
    CHECK_THROWS_AS(train_introspection(one, {}, proto), SpecError);
}

TEST_CASE("model file round trips and rejects corruption", "[intro][io]") {
    testsupport::TempDir dir("intr");
    const auto path = dir / "model.intr";
    const auto model = make_model(IntrospectionModel::Activation::relu, 77);
    save_model(model, path);
    const auto back = load_model(path);
    CHECK(back == model);

    const auto lin = make_model(IntrospectionModel::Activation::identity, 78);
    const auto lin_path = dir / "linear.intr";
    save_model(lin, lin_path);
    CHECK(load_model(lin_path).activation == IntrospectionModel::Activation::identity);

    // Flip one parameter byte: crc must catch it.
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(20, std::ios::beg);
        char c;
        f.seekg(20, std::ios::beg);
        f.get(c);
        f.seekp(20, std::ios::beg);
        f.put(static_cast<char>(c ^ 0x01));
    }
    CHECK_THROWS_AS(load_model(path), FormatError);

    const auto bad = dir / "bad.intr";
    {
        std::ofstream f(bad, std::ios::binary);
        f.write("NOPE", 4);
    }
    CHECK_THROWS_AS(load_model(bad), FormatError);
    CHECK_THROWS_AS(load_model(dir / "missing.intr"), IoError);
}
