#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "flowcast/eval.hpp"
#include "flowcast/train.hpp"
#include "test_util.hpp"

using namespace flowcast;

TEST_CASE("rmse values") {
    CHECK(rmse({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(rmse({0, 0}, {3, 4}) == doctest::Approx(3.5355339059327378).epsilon(1e-15));
    CHECK_THROWS_AS(rmse({1}, {1, 2}), ShapeError);
    CHECK_THROWS_AS(rmse({}, {}), ValueError);
}

TEST_CASE("rmse matches a naive-loop oracle and is symmetric") {
    Rng rng(211);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_below(40));
        std::vector<double> y(n), yh(n);
        for (int i = 0; i < n; ++i) {
            y[i] = rng.uniform(0, 600);
            yh[i] = rng.uniform(0, 600);
        }
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += (y[i] - yh[i]) * (y[i] - yh[i]);
        const double want = std::sqrt(acc / n);
        CHECK(rmse(y, yh) == doctest::Approx(want).epsilon(1e-12));
        CHECK(rmse(y, yh) == rmse(yh, y));

        // permutation invariance over paired samples
        std::vector<std::size_t> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.next_below(i)]);
        std::vector<double> py(n), pyh(n);
        for (int i = 0; i < n; ++i) {
            py[i] = y[perm[i]];
            pyh[i] = yh[perm[i]];
        }
        CHECK(rmse(py, pyh) == doctest::Approx(rmse(y, yh)).epsilon(1e-12));
    }
}

TEST_CASE("mape values, zero-target exclusion, scale invariance") {
    CHECK(mape({5, 6}, {5, 6}) == 0.0);
    CHECK(mape({10}, {9}) == doctest::Approx(10.0).epsilon(1e-15));

    // entries with a zero target are excluded; compare to the subset oracle
    std::size_t excluded = 0;
    const double got = mape({10, 0, 20}, {9, 5, 22}, &excluded);
    CHECK(excluded == 1);
    CHECK(got == doctest::Approx(mape({10, 20}, {9, 22})).epsilon(1e-15));

    CHECK_THROWS_AS(mape({0, 0}, {1, 2}), ValueError);

    Rng rng(223);
    std::vector<double> y(30), yh(30);
    for (int i = 0; i < 30; ++i) {
        y[i] = rng.uniform(1, 500);
        yh[i] = rng.uniform(1, 500);
    }
    std::vector<double> sy = y, syh = yh;
    for (auto& v : sy) v *= 37.5;
    for (auto& v : syh) v *= 37.5;
    CHECK(mape(sy, syh) == doctest::Approx(mape(y, yh)).epsilon(1e-12));
}

TEST_CASE("congested mask percentiles") {
    SynthConfig cfg;
    cfg.days = 4;
    cfg.seed = 31;
    RawSeries s = synth_generate(cfg);

    auto all = congested_mask(s.flow, 0.0);
    CHECK(std::count(all.begin(), all.end(), true) == static_cast<long>(s.flow.size()));

    auto maxima = congested_mask(s.flow, 100.0);
    const double mx = *std::max_element(s.flow.begin(), s.flow.end());
    for (std::size_t i = 0; i < s.flow.size(); ++i) CHECK(maxima[i] == (s.flow[i] == mx));

    auto peak = congested_mask(s.flow, 85.0);
    const double frac = static_cast<double>(std::count(peak.begin(), peak.end(), true)) /
                        static_cast<double>(s.flow.size());
    CHECK(frac > 0.13);
    CHECK(frac < 0.17);

    CHECK_THROWS_AS(congested_mask(s.flow, 101.0), ValueError);
    CHECK_THROWS_AS(congested_mask(s.flow, -1.0), ValueError);
}

TEST_CASE("clock-window congestion mask") {
    std::vector<std::int64_t> ts;
    for (int h = 0; h < 24; ++h) ts.push_back(1735689600 + h * 3600);  // midnight UTC start
    std::vector<ClockWindow> windows = {{7 * 60, 9 * 60}, {16 * 60, 18 * 60}};
    auto mask = congested_mask_clock(ts, windows);
    for (int h = 0; h < 24; ++h)
        CHECK(mask[h] == ((h >= 7 && h < 9) || (h >= 16 && h < 18)));
}

namespace {

WindowedDataset eval_dataset() {
    SynthConfig cfg;
    cfg.days = 3;
    cfg.seed = 41;
    WindowedDataset ds = make_windows(make_series_pair(synth_generate(cfg)), 4, 2);
    apply_split(ds, 0.6, 0.15, 0.25);
    normalize_fit_apply(ds);
    return ds;
}

ModelConfig eval_model_config() {
    ModelConfig c;
    c.lag = 4;
    c.lead = 2;
    c.lstm1_units = 5;
    c.lstm2_units = 4;
    c.branch_dense_units = 4;
    c.fusion_dense_units = 3;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("a memorizing model scores zero on a single-example split") {
    SynthConfig scfg;
    scfg.days = 1;
    scfg.seed = 47;
    WindowedDataset ds = make_windows(make_series_pair(synth_generate(scfg)), 4, 2);
    // single test example
    ds.split.train = ds.examples.size() - 2;
    ds.split.val = 1;
    ds.split.test = 1;
    normalize_fit_apply(ds);

    ModelConfig mc = eval_model_config();
    Model m = Model::build(ModelVariant::Lstm, mc);
    for (auto& e : m.params().entries())
        for (auto& v : e.value.data()) v = 0.0;
    Tensor& bias = m.params().get("output.b");
    const Example& ex = ds.examples[ds.test_begin()];
    for (int h = 0; h < 2; ++h) bias.at(h, 0) = ex.y[h];

    EvalReport rep = evaluate(m, ds);
    CHECK(rep.rmse_overall == 0.0);
    CHECK(rep.mape_overall == 0.0);
    for (double v : rep.rmse_h) CHECK(v == 0.0);
}

TEST_CASE("evaluate emits a consistent horizon-wise report") {
    WindowedDataset ds = eval_dataset();
    Model m = Model::build(ModelVariant::Merged, eval_model_config());
    EvalReport rep = evaluate(m, ds, 85.0);

    CHECK(rep.lead == 2);
    CHECK(rep.examples == ds.split.test);
    CHECK(rep.total_points == ds.split.test * 2);
    CHECK(rep.congested_count <= rep.total_points);
    for (int h = 0; h < 2; ++h) {
        CHECK(rep.rmse_h[h] >= 0.0);
        CHECK(rep.congested_count_h[h] <= rep.examples);
    }

    // overall RMSE^2 equals the count-weighted mean of per-horizon RMSE^2
    double weighted = 0.0;
    for (int h = 0; h < 2; ++h) weighted += rep.rmse_h[h] * rep.rmse_h[h] * rep.examples;
    weighted /= static_cast<double>(rep.total_points);
    CHECK(rep.rmse_overall * rep.rmse_overall == doctest::Approx(weighted).epsilon(1e-12));

    // normalized-unit MSE matches the split helper
    CHECK(rep.mse_norm_overall ==
          split_mse(m, ds, ds.test_begin(), ds.split.test, 256));
}

TEST_CASE("report values equal a recomputation from the dumped predictions csv") {
    WindowedDataset ds = eval_dataset();
    Model m = Model::build(ModelVariant::Lstm, eval_model_config());

    std::vector<PredRow> rows = predict_test_split(m, ds);
    EvalReport direct = report_from_predictions(rows, ds.lead, 85.0);

    const std::string csv = predictions_to_csv(rows);
    std::vector<PredRow> parsed = predictions_from_csv(csv);
    REQUIRE(parsed.size() == rows.size());
    EvalReport recomputed = report_from_predictions(parsed, ds.lead, 85.0);

    CHECK(recomputed.rmse_overall == direct.rmse_overall);
    CHECK(recomputed.mape_overall == direct.mape_overall);
    for (int h = 0; h < ds.lead; ++h) {
        CHECK(recomputed.rmse_h[h] == direct.rmse_h[h]);
        CHECK(recomputed.congested_count_h[h] == direct.congested_count_h[h]);
    }

    // csv header contract
    CHECK(csv.rfind("example_index,horizon,y_true,y_pred\n", 0) == 0);
}

TEST_CASE("predictions are clamped at zero after de-normalization") {
    WindowedDataset ds = eval_dataset();
    Model m = Model::build(ModelVariant::Lstm, eval_model_config());
    // drive predictions strongly negative
    Tensor& bias = m.params().get("output.b");
    for (int h = 0; h < 2; ++h) bias.at(h, 0) = -100.0;
    std::vector<PredRow> rows = predict_test_split(m, ds);
    for (const PredRow& r : rows) CHECK(r.y_pred >= 0.0);
}

TEST_CASE("evaluate requires a test split") {
    WindowedDataset ds = eval_dataset();
    ds.split.train += ds.split.test;
    ds.split.test = 0;
    Model m = Model::build(ModelVariant::Lstm, eval_model_config());
    CHECK_THROWS_AS(evaluate(m, ds), ValueError);
}
