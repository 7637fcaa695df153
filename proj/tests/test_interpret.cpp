#include <cmath>

#include "doctest.h"
#include "flowcast/interpret.hpp"
#include "flowcast/train.hpp"
#include "test_util.hpp"

using namespace flowcast;

namespace {

WindowedDataset small_dataset(int lag = 4, int lead = 2) {
    SynthConfig cfg;
    cfg.days = 2;
    cfg.seed = 61;
    WindowedDataset ds = make_windows(make_series_pair(synth_generate(cfg)), lag, lead);
    apply_split(ds, 0.6, 0.15, 0.25);
    normalize_fit_apply(ds);
    return ds;
}

ModelConfig small_model_config(int lag = 4, int lead = 2) {
    ModelConfig c;
    c.lag = lag;
    c.lead = lead;
    c.lstm1_units = 5;
    c.lstm2_units = 4;
    c.branch_dense_units = 4;
    c.fusion_dense_units = 3;
    c.seed = 19;
    return c;
}

}  // namespace

TEST_CASE("a model that ignores its input yields all-zero saliency rows") {
    WindowedDataset ds = small_dataset();
    Model m = Model::build(ModelVariant::Merged, small_model_config());
    for (auto& e : m.params().entries())
        for (auto& v : e.value.data()) v = 0.0;

    auto maps = input_saliency(m, ds, 0, 10, {1, 2});
    REQUIRE(maps.size() == 2);
    for (const auto& map : maps)
        for (double v : map.values) CHECK(v == 0.0);  // left unnormalized
}

TEST_CASE("a linear model's saliency is proportional to |w| on every row") {
    WindowedDataset ds = small_dataset();
    const int lag = ds.lag;
    const std::vector<double> w = {0.5, -1.0, 0.25, 2.0};

    ForwardFn linear = [&](Tape* tape, const std::vector<Tensor>& xs,
                           const std::vector<Tensor>&) {
        Tensor acc;
        for (int t = 0; t < lag; ++t) {
            Tensor term = scale(tape, xs[t], w[t]);
            acc = (t == 0) ? term : add(tape, acc, term);
        }
        return concat_rows(tape, acc, acc);  // lead = 2 identical rows
    };

    auto maps = saliency_for_forward(linear, false, ds, 0, 12, {1});
    REQUIRE(maps.size() == 1);
    const double wmax = 2.0;
    for (std::size_t r = 0; r < maps[0].window_times.size(); ++r)
        for (int t = 0; t < lag; ++t)
            CHECK(maps[0].at(r, t) == doctest::Approx(std::abs(w[t]) / wmax).epsilon(1e-14));
}

TEST_CASE("saliency input gradients match finite differences") {
    WindowedDataset ds = small_dataset();
    Model m = Model::build(ModelVariant::MergedAttnBoth, small_model_config());

    std::vector<std::size_t> idx = {0, 1, 2};
    BatchTensors bt = assemble_batch(ds, idx, true, /*inputs_require_grad=*/true);
    std::vector<Tensor> inputs;
    for (const Tensor& t : bt.x_steps) inputs.push_back(t);
    for (const Tensor& t : bt.dx_steps) inputs.push_back(t);

    // same target the saliency pass differentiates: selected horizons summed,
    // scaled down so FD roundoff stays below the tolerance floor
    auto f = [&](Tape* tape) {
        Tensor pred = m.forward_steps(tape, bt.x_steps, bt.dx_steps);
        return scale(tape, sum_all(tape, slice_rows(tape, pred, 0, 1)), 0.01);
    };
    CHECK(testutil::max_rel_grad_error(inputs, f) < 1e-4);
}

TEST_CASE("nonzero saliency rows have max exactly 1") {
    WindowedDataset ds = small_dataset();
    Model m = Model::build(ModelVariant::Merged, small_model_config());
    auto maps = input_saliency(m, ds, 0, 20, {1});
    for (const auto& map : maps) {
        for (std::size_t r = 0; r < map.window_times.size(); ++r) {
            double mx = 0.0;
            for (int t = 0; t < map.lag; ++t) mx = std::max(mx, map.at(r, t));
            if (mx > 0.0) CHECK(mx == 1.0);
        }
    }
}

TEST_CASE("saliency validates its horizon set") {
    WindowedDataset ds = small_dataset();
    Model m = Model::build(ModelVariant::Lstm, small_model_config());
    CHECK_THROWS_AS(input_saliency(m, ds, 0, 4, {}), ValueError);
    CHECK_THROWS_AS(input_saliency(m, ds, 0, 4, {3}), ValueError);  // lead is 2
}

TEST_CASE("extracted features match a manual branch re-run and leave the model untouched") {
    WindowedDataset ds = small_dataset();
    ModelConfig mc = small_model_config();
    Model m = Model::build(ModelVariant::MergedAttnBoth, mc);

    Rng rng(71);
    Tensor probe_x = testutil::random_tensor(mc.lag, 1, rng);
    Tensor probe_dx = testutil::random_tensor(mc.lag, 1, rng);
    Tensor before = m.predict(probe_x, probe_dx);

    const std::size_t count = 6;
    auto [flow, fluct] = extract_features(m, ds, 0, count);
    CHECK(flow.rows() == count);
    CHECK(flow.dims == mc.branch_dense_units);
    CHECK(fluct.rows() == count);

    // manual re-run of one branch per window through the public layer API
    for (std::size_t i = 0; i < count; ++i) {
        const Example& ex = ds.examples[i];
        auto branch_out = [&](const BranchParams& b, const std::vector<double>& window) {
            Tensor seq = Tensor::from_values(mc.lag, 1, window);
            LstmRunOut l1 = lstm_run(nullptr, b.lstm1, seq);
            LstmRunOut l2 = lstm_run(nullptr, b.lstm2, l1.hidden_seq);
            Tensor enc;
            if (b.has_attention) {
                AttentionOut att = bahdanau_attention(nullptr, b.attn, l2.hidden_seq,
                                                      l2.final_state.h);
                enc = att.attention;
            } else {
                enc = l2.final_state.h;
            }
            return dense_forward(nullptr, b.dense, enc);
        };
        Tensor f1 = branch_out(m.flow_branch(), ex.x);
        Tensor f2 = branch_out(m.fluct_branch(), ex.dx);
        for (int d = 0; d < mc.branch_dense_units; ++d) {
            CHECK(flow.at(i, d) == f1.at(d, 0));
            CHECK(fluct.at(i, d) == f2.at(d, 0));
        }
    }

    // extraction must not perturb model state
    Tensor after = m.predict(probe_x, probe_dx);
    for (int i = 0; i < mc.lead; ++i) CHECK(before.at(i, 0) == after.at(i, 0));

    // identical windows give identical feature rows
    WindowedDataset dup = ds;
    dup.examples[1] = dup.examples[0];
    auto [dflow, dfluct] = extract_features(m, dup, 0, 2);
    for (int d = 0; d < mc.branch_dense_units; ++d) {
        CHECK(dflow.at(0, d) == dflow.at(1, d));
        CHECK(dfluct.at(0, d) == dfluct.at(1, d));
    }
}

TEST_CASE("feature extraction rejects single-branch variants") {
    WindowedDataset ds = small_dataset();
    Model m = Model::build(ModelVariant::LstmAttn, small_model_config());
    CHECK_THROWS_AS(extract_features(m, ds, 0, 4), ValueError);
}

namespace {

BranchFeatures make_features(const char* name, int dims,
                             const std::vector<std::vector<double>>& rows) {
    BranchFeatures f;
    f.branch = name;
    f.dims = dims;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        f.window_times.push_back(static_cast<std::int64_t>(i));
        for (double v : rows[i]) f.values.push_back(v);
    }
    return f;
}

}  // namespace

TEST_CASE("separability score behavior") {
    SUBCASE("identical feature sets give -1/n, i.e. complete overlap") {
        std::vector<std::vector<double>> rows;
        Rng rng(73);
        for (int i = 0; i < 10; ++i) rows.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        BranchFeatures a = make_features("flow", 2, rows);
        BranchFeatures b = make_features("fluct", 2, rows);
        const double s = separability_score(a, b);
        CHECK(s == doctest::Approx(-0.1).epsilon(1e-9));  // -1/n with n = 10
        CHECK(s <= 0.0);
    }
    SUBCASE("far-separated clouds score near 1") {
        Rng rng(79);
        std::vector<std::vector<double>> ra, rb;
        for (int i = 0; i < 8; ++i) {
            ra.push_back({rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)});
            rb.push_back({100 + rng.uniform(-0.1, 0.1), 100 + rng.uniform(-0.1, 0.1)});
        }
        const double s = separability_score(make_features("flow", 2, ra),
                                            make_features("fluct", 2, rb));
        CHECK(s > 0.99);
    }
    SUBCASE("matches a brute-force silhouette oracle on 20 rows") {
        Rng rng(83);
        std::vector<std::vector<double>> ra, rb;
        for (int i = 0; i < 10; ++i) {
            ra.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
            rb.push_back({rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)});
        }
        BranchFeatures fa = make_features("flow", 3, ra);
        BranchFeatures fb = make_features("fluct", 3, rb);

        // oracle: explicit distance matrix over the pooled 20 points
        std::vector<std::vector<double>> pts;
        for (auto& r : ra) pts.push_back(r);
        for (auto& r : rb) pts.push_back(r);
        auto dist = [&](std::size_t i, std::size_t j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k)
                s += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
            return std::sqrt(s);
        };
        double want = 0.0;
        for (std::size_t i = 0; i < 20; ++i) {
            double intra = 0.0, inter = 0.0;
            for (std::size_t j = 0; j < 20; ++j) {
                if (i == j) continue;
                const bool same = (i < 10) == (j < 10);
                (same ? intra : inter) += dist(i, j);
            }
            const double av = intra / 9.0, bv = inter / 10.0;
            want += (bv - av) / std::max(av, bv);
        }
        want /= 20.0;
        CHECK(separability_score(fa, fb) == doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("fewer than 2 rows per branch errors") {
        BranchFeatures a = make_features("flow", 2, {{0, 0}});
        BranchFeatures b = make_features("fluct", 2, {{1, 1}});
        CHECK_THROWS_AS(separability_score(a, b), ValueError);
    }
}

TEST_CASE("interpretability csv headers") {
    WindowedDataset ds = small_dataset();
    Model m = Model::build(ModelVariant::Merged, small_model_config());
    auto maps = input_saliency(m, ds, 0, 3, {1});
    CHECK(saliency_to_csv(maps).rfind("window_time,feature,step_index,value\n", 0) == 0);

    auto [flow, fluct] = extract_features(m, ds, 0, 3);
    CHECK(features_to_csv(flow, fluct).rfind("window_time,branch,dim_0,dim_1,dim_2,dim_3\n",
                                             0) == 0);
}
