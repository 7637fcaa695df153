#include "flowcast/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace flowcast {

void TrainConfig::validate() const {
    if (epochs < 1) throw ValueError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ValueError("train config: batch_size must be >= 1");
    if (!(rho > 0.0 && rho < 1.0)) throw ValueError("train config: rho must be in (0, 1)");
    if (!(epsilon > 0.0)) throw ValueError("train config: epsilon must be > 0");
    if (learning_rate < 0.0) throw ValueError("train config: learning_rate must be >= 0");
    if (eval_batch < 1) throw ValueError("train config: eval_batch must be >= 1");
}

Tensor mse_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ShapeError("mse_loss: shape mismatch (" + pred.shape_str() + " vs " +
                         target.shape_str() + ")");
    Tensor diff = sub(tape, pred, target);
    Tensor sq = mul(tape, diff, diff);
    return scale(tape, sum_all(tape, sq), 1.0 / static_cast<double>(pred.size()));
}

void adadelta_step(ParamStore& params, double lr, double rho, double eps) {
    if (!(rho > 0.0 && rho < 1.0)) throw ValueError("adadelta: rho must be in (0, 1)");
    if (!(eps > 0.0)) throw ValueError("adadelta: epsilon must be > 0");
    for (auto& e : params.entries()) {
        if (!e.value.has_grad())
            throw ValueError("adadelta: missing gradient for '" + e.path + "'");
        const std::vector<double>& g = e.value.grad();
        check_finite("backward (parameter gradient)", g);
        std::vector<double>& x = e.value.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double gi = g[i];
            e.eg2[i] = rho * e.eg2[i] + (1.0 - rho) * gi * gi;
            const double dx = -lr * std::sqrt(e.ed2[i] + eps) / std::sqrt(e.eg2[i] + eps) * gi;
            e.ed2[i] = rho * e.ed2[i] + (1.0 - rho) * dx * dx;
            x[i] += dx;
        }
        check_finite("adadelta", x);
    }
}

BatchTensors assemble_batch(const WindowedDataset& ds, const std::vector<std::size_t>& indices,
                            bool need_dx, bool inputs_require_grad) {
    const int batch = static_cast<int>(indices.size());
    if (batch < 1) throw ValueError("assemble_batch: empty batch");
    BatchTensors out;
    out.x_steps.reserve(ds.lag);
    for (int t = 0; t < ds.lag; ++t) {
        Tensor row(1, batch);
        for (int b = 0; b < batch; ++b) row.at(0, b) = ds.examples[indices[b]].x[t];
        row.set_requires_grad(inputs_require_grad);
        out.x_steps.push_back(row);
    }
    if (need_dx) {
        out.dx_steps.reserve(ds.lag);
        for (int t = 0; t < ds.lag; ++t) {
            Tensor row(1, batch);
            for (int b = 0; b < batch; ++b) row.at(0, b) = ds.examples[indices[b]].dx[t];
            row.set_requires_grad(inputs_require_grad);
            out.dx_steps.push_back(row);
        }
    }
    out.targets = Tensor(ds.lead, batch);
    for (int h = 0; h < ds.lead; ++h)
        for (int b = 0; b < batch; ++b) out.targets.at(h, b) = ds.examples[indices[b]].y[h];
    return out;
}

namespace {

// per-column MSE of a forward pass, independent of batch composition
void column_mse(const Tensor& pred, const Tensor& target, std::vector<double>& out) {
    const int lead = pred.rows(), batch = pred.cols();
    out.assign(batch, 0.0);
    for (int b = 0; b < batch; ++b) {
        double s = 0.0;
        for (int h = 0; h < lead; ++h) {
            const double d = pred.at(h, b) - target.at(h, b);
            s += d * d;
        }
        out[b] = s / static_cast<double>(lead);
    }
}

}  // namespace

std::vector<double> per_example_mse(const Model& model, const WindowedDataset& ds,
                                    std::size_t begin, std::size_t count, int batch) {
    if (count == 0) throw ValueError("per_example_mse: empty split");
    const bool merged = variant_is_merged(model.variant());
    std::vector<double> losses(count, 0.0);
    std::vector<double> col;
    for (std::size_t at = 0; at < count; at += batch) {
        const std::size_t n = std::min<std::size_t>(batch, count - at);
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = begin + at + i;
        BatchTensors bt = assemble_batch(ds, idx, merged);
        Tensor pred = model.forward_steps(nullptr, bt.x_steps, bt.dx_steps);
        column_mse(pred, bt.targets, col);
        for (std::size_t i = 0; i < n; ++i) losses[at + i] = col[i];
    }
    return losses;
}

double split_mse(const Model& model, const WindowedDataset& ds, std::size_t begin,
                 std::size_t count, int batch) {
    std::vector<double> losses = per_example_mse(model, ds, begin, count, batch);
    double s = 0.0;
    for (double v : losses) s += v;
    return s / static_cast<double>(losses.size());
}

namespace {
constexpr std::uint64_t kShuffleTag = 0x73687566;
}

TrainResult train(const Model& initial, const WindowedDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (!ds.normalized) throw ValueError("train: dataset must be normalized");
    if (ds.split.train == 0) throw ValueError("train: empty train split");
    if (ds.split.val == 0) throw ValueError("train: empty validation split");

    Model model = initial.clone();
    const bool merged = variant_is_merged(model.variant());
    const std::size_t n_train = ds.split.train;

    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleTag));
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    TrainHistory history;
    std::vector<std::vector<double>> best_values;
    std::vector<double> example_loss(n_train, 0.0);
    std::vector<double> col;
    Tape tape;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.shuffle_train) {
            for (std::size_t i = n_train; i > 1; --i) {
                const std::size_t j = shuffle_rng.next_below(i);
                std::swap(order[i - 1], order[j]);
            }
        }
        for (std::size_t at = 0; at < n_train; at += cfg.batch_size) {
            const std::size_t n = std::min<std::size_t>(cfg.batch_size, n_train - at);
            std::vector<std::size_t> idx(order.begin() + at, order.begin() + at + n);
            // membership is what shuffling controls; order inside a batch is canonical
            std::sort(idx.begin(), idx.end());

            BatchTensors bt = assemble_batch(ds, idx, merged);
            tape.clear();
            Tensor pred = model.forward_steps(&tape, bt.x_steps, bt.dx_steps);
            Tensor loss = mse_loss(&tape, pred, bt.targets);
            column_mse(pred, bt.targets, col);
            for (std::size_t i = 0; i < n; ++i) example_loss[idx[i]] = col[i];

            model.params().zero_grads();
            backward(loss, tape);
            adadelta_step(model.params(), cfg.learning_rate, cfg.rho, cfg.epsilon);
        }
        tape.clear();

        double train_loss = 0.0;
        for (double v : example_loss) train_loss += v;
        train_loss /= static_cast<double>(n_train);

        const double val_loss =
            split_mse(model, ds, ds.val_begin(), ds.split.val, cfg.eval_batch);

        history.train_loss.push_back(train_loss);
        history.val_loss.push_back(val_loss);
        if (epoch == 1 || val_loss < history.best_val_loss) {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best_values = model.params().copy_values();
        }
    }

    Model best = model.clone();
    best.params().restore_values(best_values);
    return {std::move(best), std::move(history)};
}

namespace {
constexpr std::uint64_t kGridTag = 0x67726964;
}

GridResult grid_search(ModelVariant variant, const ModelConfig& model_cfg,
                       const WindowedDataset& ds, const std::vector<double>& learning_rates,
                       const std::vector<int>& batch_sizes, const TrainConfig& tmpl,
                       int workers) {
    if (learning_rates.empty() || batch_sizes.empty())
        throw ValueError("grid_search: empty grid");
    if (workers < 1) workers = 1;

    struct Job {
        double lr;
        int batch;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (double lr : learning_rates)
        for (int b : batch_sizes)
            jobs.push_back({lr, b, derive_seed(tmpl.seed, kGridTag + jobs.size())});

    GridResult result;
    result.cells.resize(jobs.size());

    auto run_cell = [&](std::size_t i) {
        ModelConfig mc = model_cfg;
        mc.seed = jobs[i].seed;
        TrainConfig tc = tmpl;
        tc.seed = jobs[i].seed;
        tc.learning_rate = jobs[i].lr;
        tc.batch_size = jobs[i].batch;
        Model model = Model::build(variant, mc);
        TrainResult r = train(model, ds, tc);
        result.cells[i] = {jobs[i].lr, jobs[i].batch, r.history.best_val_loss,
                           r.history.best_epoch, jobs[i].seed};
    };

    if (workers == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                for (std::size_t i = w; i < jobs.size(); i += static_cast<std::size_t>(workers))
                    run_cell(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    result.best_index = 0;
    for (std::size_t i = 1; i < result.cells.size(); ++i) {
        const GridCell& c = result.cells[i];
        const GridCell& best = result.cells[result.best_index];
        if (c.min_val_loss < best.min_val_loss ||
            (c.min_val_loss == best.min_val_loss &&
             (c.batch_size < best.batch_size ||
              (c.batch_size == best.batch_size && c.learning_rate < best.learning_rate))))
            result.best_index = i;
    }
    return result;
}

std::string history_to_csv(const TrainHistory& history) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < history.train_loss.size(); ++i)
        out << (i + 1) << "," << format_double(history.train_loss[i]) << ","
            << format_double(history.val_loss[i]) << "\n";
    return out.str();
}

std::string grid_to_csv(ModelVariant variant, const GridResult& grid) {
    std::ostringstream out;
    out << "model,batch_size,learning_rate,min_val_loss\n";
    for (const GridCell& c : grid.cells)
        out << variant_to_string(variant) << "," << c.batch_size << ","
            << format_double(c.learning_rate) << "," << format_double(c.min_val_loss) << "\n";
    return out.str();
}

}  // namespace flowcast
