#include <cmath>
#include <sstream>

#include "doctest.h"
#include "flowcast/train.hpp"
#include "test_util.hpp"

using namespace flowcast;

namespace {

// a small normalized dataset over the synthetic series
WindowedDataset tiny_dataset(int days = 2, int lag = 4, int lead = 2, std::uint64_t seed = 9) {
    SynthConfig cfg;
    cfg.days = days;
    cfg.seed = seed;
    WindowedDataset ds = make_windows(make_series_pair(synth_generate(cfg)), lag, lead);
    apply_split(ds, 0.6, 0.15, 0.25);
    normalize_fit_apply(ds);
    return ds;
}

ModelConfig tiny_model_config(int lag = 4, int lead = 2) {
    ModelConfig c;
    c.lag = lag;
    c.lead = lead;
    c.lstm1_units = 5;
    c.lstm2_units = 4;
    c.branch_dense_units = 4;
    c.fusion_dense_units = 3;
    c.seed = 7;
    return c;
}

// independent scalar trace of the update rule, used as the hand oracle
struct ScalarAdadelta {
    double eg2 = 0.0, ed2 = 0.0;
    double step(double g, double lr, double rho, double eps) {
        eg2 = rho * eg2 + (1.0 - rho) * g * g;
        const double dx = -lr * std::sqrt(ed2 + eps) / std::sqrt(eg2 + eps) * g;
        ed2 = rho * ed2 + (1.0 - rho) * dx * dx;
        return dx;
    }
};

}  // namespace

TEST_CASE("mse loss values and gradient") {
    Tensor p = Tensor::from_values(2, 1, {0, 0}).set_requires_grad(true);
    Tensor t = Tensor::from_values(2, 1, {1, 3});
    Tensor same = mse_loss(nullptr, t, t);
    CHECK(same.at(0, 0) == 0.0);
    CHECK(mse_loss(nullptr, p, t).at(0, 0) == 5.0);  // (1 + 9) / 2
    CHECK_THROWS_AS(mse_loss(nullptr, p, Tensor(3, 1)), ShapeError);

    // gradient 2 (pred - target) / n, against finite differences
    Rng rng(11);
    Tensor pred = testutil::random_tensor(4, 3, rng, -1, 1, true);
    Tensor target = testutil::random_tensor(4, 3, rng);
    auto f = [&](Tape* tape) { return mse_loss(tape, pred, target); };
    CHECK(testutil::max_rel_grad_error({pred}, f) < 1e-4);

    pred.drop_grad();  // the FD harness above already ran one backward
    Tape tape;
    Tensor loss = f(&tape);
    backward(loss, tape);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(pred.grad()[i * 3 + j] ==
                  doctest::Approx(2.0 * (pred.at(i, j) - target.at(i, j)) / 12.0)
                      .epsilon(1e-14));
}

TEST_CASE("adadelta scalar fidelity") {
    SUBCASE("zero gradient leaves parameters unchanged, accumulators decay") {
        ModelConfig mc = tiny_model_config();
        Model m = Model::build(ModelVariant::Lstm, mc);
        m.params().zero_grads();
        for (auto& e : m.params().entries())
            for (auto& v : e.eg2) v = 1.0;
        auto before = m.params().copy_values();
        adadelta_step(m.params(), 0.5, 0.95, 1e-7);
        auto after = m.params().copy_values();
        for (std::size_t i = 0; i < before.size(); ++i)
            for (std::size_t j = 0; j < before[i].size(); ++j)
                CHECK(before[i][j] == after[i][j]);
        for (auto& e : m.params().entries())
            for (auto& v : e.eg2) CHECK(v == 0.95);
    }
    SUBCASE("first step with g=1, lr=1 hits the hand-computed value") {
        ParamStore store;
        store.add("x", Tensor::from_values(1, 1, {0.0}).set_requires_grad(true));
        store.zero_grads();
        store.get("x").grad()[0] = 1.0;
        adadelta_step(store, 1.0, 0.95, 1e-7);
        // hand evaluation: -sqrt(1e-7) / sqrt(0.05 + 1e-7)
        CHECK(store.get("x").at(0, 0) ==
              doctest::Approx(-0.0014142121481616533).epsilon(1e-12));
    }
    SUBCASE("three steps on f(x) = x^2 from x = 1 match the manual trace") {
        const double lr = 0.1, rho = 0.95, eps = 1e-7;
        ParamStore store;
        store.add("x", Tensor::from_values(1, 1, {1.0}).set_requires_grad(true));

        ScalarAdadelta oracle;
        double ox = 1.0;
        const double expected_x[3] = {0.99985857867911798, 0.99975680665875299,
                                      0.99967246963475176};  // frozen from the trace
        for (int step = 0; step < 3; ++step) {
            Tensor& x = store.get("x");
            store.zero_grads();
            x.grad()[0] = 2.0 * x.at(0, 0);
            adadelta_step(store, lr, rho, eps);

            ox += oracle.step(2.0 * ox, lr, rho, eps);
            CHECK(std::abs(x.at(0, 0) - ox) / std::abs(ox) < 1e-9);
            CHECK(x.at(0, 0) == doctest::Approx(expected_x[step]).epsilon(1e-12));
        }
    }
    SUBCASE("lr = 0 is a bit-exact no-op on parameters") {
        ModelConfig mc = tiny_model_config();
        Model m = Model::build(ModelVariant::Merged, mc);
        m.params().zero_grads();
        Rng rng(3);
        for (auto& e : m.params().entries())
            for (auto& g : e.value.grad()) g = rng.uniform(-1, 1);
        auto before = m.params().copy_values();
        adadelta_step(m.params(), 0.0, 0.95, 1e-7);
        auto after = m.params().copy_values();
        for (std::size_t i = 0; i < before.size(); ++i)
            for (std::size_t j = 0; j < before[i].size(); ++j)
                CHECK(before[i][j] == after[i][j]);
    }
    SUBCASE("missing gradients error") {
        ModelConfig mc = tiny_model_config();
        Model m = Model::build(ModelVariant::Lstm, mc);
        CHECK_THROWS_AS(adadelta_step(m.params(), 0.1, 0.95, 1e-7), ValueError);
    }
}

TEST_CASE("training descends on a learnable series") {
    WindowedDataset ds = tiny_dataset(3);
    ModelConfig mc = tiny_model_config();
    TrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 32;
    tc.learning_rate = 1.0;
    tc.seed = 5;

    Model m = Model::build(ModelVariant::Lstm, mc);
    TrainResult r = train(m, ds, tc);
    CHECK(r.history.train_loss.size() == 8);
    CHECK(r.history.train_loss.back() < r.history.train_loss.front());
    for (double v : r.history.train_loss) CHECK(v >= 0.0);
    for (double v : r.history.val_loss) CHECK(v >= 0.0);

    double min_val = r.history.val_loss[0];
    for (double v : r.history.val_loss) min_val = std::min(min_val, v);
    CHECK(r.history.best_val_loss == min_val);
}

TEST_CASE("one epoch gives history length 1 and best_epoch 1") {
    WindowedDataset ds = tiny_dataset();
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 5;
    Model m = Model::build(ModelVariant::Lstm, tiny_model_config());
    TrainResult r = train(m, ds, tc);
    CHECK(r.history.train_loss.size() == 1);
    CHECK(r.history.best_epoch == 1);
}

TEST_CASE("fixed seed reproduces the loss history bit-exactly") {
    WindowedDataset ds = tiny_dataset();
    TrainConfig tc;
    tc.epochs = 4;
    tc.seed = 21;
    Model m = Model::build(ModelVariant::Merged, tiny_model_config());
    TrainResult a = train(m, ds, tc);
    TrainResult b = train(m, ds, tc);
    REQUIRE(a.history.train_loss.size() == b.history.train_loss.size());
    for (std::size_t i = 0; i < a.history.train_loss.size(); ++i) {
        CHECK(a.history.train_loss[i] == b.history.train_loss[i]);
        CHECK(a.history.val_loss[i] == b.history.val_loss[i]);
    }
}

TEST_CASE("with batch covering the train split, shuffling changes nothing") {
    WindowedDataset ds = tiny_dataset();
    TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 33;
    tc.batch_size = static_cast<int>(ds.split.train);

    Model m = Model::build(ModelVariant::Lstm, tiny_model_config());
    TrainConfig no_shuffle = tc;
    no_shuffle.shuffle_train = false;
    TrainResult a = train(m, ds, tc);
    TrainResult b = train(m, ds, no_shuffle);
    for (std::size_t i = 0; i < a.history.train_loss.size(); ++i) {
        CHECK(a.history.train_loss[i] == b.history.train_loss[i]);
        CHECK(a.history.val_loss[i] == b.history.val_loss[i]);
    }
}

TEST_CASE("returned snapshot reproduces the best validation loss") {
    WindowedDataset ds = tiny_dataset();
    TrainConfig tc;
    tc.epochs = 5;
    tc.seed = 13;
    Model m = Model::build(ModelVariant::Merged, tiny_model_config());
    TrainResult r = train(m, ds, tc);
    const double re_eval = split_mse(r.model, ds, ds.val_begin(), ds.split.val, tc.eval_batch);
    CHECK(re_eval == doctest::Approx(r.history.best_val_loss).epsilon(1e-12));
    CHECK(re_eval == r.history.best_val_loss);  // identical computation path
}

TEST_CASE("non-finite forward aborts with a diagnostic naming the op") {
    WindowedDataset ds = tiny_dataset();
    TrainConfig tc;
    tc.epochs = 1;
    Model m = Model::build(ModelVariant::Lstm, tiny_model_config());
    for (auto& v : m.params().get("output.W").data()) v = 1e300;
    for (auto& v : m.params().get("fusion.W").data()) v = 1e300;
    CHECK_THROWS_AS(train(m, ds, tc), NumericError);
}

TEST_CASE("training validates its inputs") {
    WindowedDataset ds = tiny_dataset();
    Model m = Model::build(ModelVariant::Lstm, tiny_model_config());
    TrainConfig tc;

    WindowedDataset no_val = ds;
    no_val.split.train += no_val.split.val;
    no_val.split.val = 0;
    CHECK_THROWS_AS(train(m, no_val, tc), ValueError);

    TrainConfig bad = tc;
    bad.rho = 1.5;
    CHECK_THROWS_AS(train(m, ds, bad), ValueError);
}

TEST_CASE("grid search") {
    WindowedDataset ds = tiny_dataset();
    ModelConfig mc = tiny_model_config();
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 17;

    SUBCASE("a single cell reduces to a plain train run") {
        GridResult g = grid_search(ModelVariant::Lstm, mc, ds, {0.5}, {16}, tc);
        REQUIRE(g.cells.size() == 1);
        ModelConfig cell_mc = mc;
        cell_mc.seed = g.cells[0].seed;
        TrainConfig cell_tc = tc;
        cell_tc.seed = g.cells[0].seed;
        cell_tc.learning_rate = 0.5;
        cell_tc.batch_size = 16;
        TrainResult direct = train(Model::build(ModelVariant::Lstm, cell_mc), ds, cell_tc);
        CHECK(g.cells[0].min_val_loss == direct.history.best_val_loss);
    }
    SUBCASE("table shape, best-cell scan, and csv emission") {
        const std::vector<double> lrs = {0.1, 1.0};
        const std::vector<int> batches = {8, 64};
        GridResult g = grid_search(ModelVariant::Lstm, mc, ds, lrs, batches, tc, 2);
        CHECK(g.cells.size() == 4);

        // independent scan of the emitted table
        std::size_t best = 0;
        for (std::size_t i = 1; i < g.cells.size(); ++i) {
            const auto& c = g.cells[i];
            const auto& b = g.cells[best];
            if (c.min_val_loss < b.min_val_loss ||
                (c.min_val_loss == b.min_val_loss &&
                 (c.batch_size < b.batch_size ||
                  (c.batch_size == b.batch_size && c.learning_rate < b.learning_rate))))
                best = i;
        }
        CHECK(best == g.best_index);

        std::string csv = grid_to_csv(ModelVariant::Lstm, g);
        std::istringstream in(csv);
        std::string line;
        std::getline(in, line);
        CHECK(line == "model,batch_size,learning_rate,min_val_loss");
        int rows = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 4);
    }
    SUBCASE("empty grid errors") {
        CHECK_THROWS_AS(grid_search(ModelVariant::Lstm, mc, ds, {}, {8}, tc), ValueError);
    }
}

TEST_CASE("history csv format") {
    TrainHistory h;
    h.train_loss = {0.5, 0.25};
    h.val_loss = {0.75, 0.125};
    const std::string csv = history_to_csv(h);
    CHECK(csv == "epoch,train_loss,val_loss\n1,0.5,0.75\n2,0.25,0.125\n");
}
