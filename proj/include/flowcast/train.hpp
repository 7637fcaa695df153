#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowcast/data.hpp"
#include "flowcast/model.hpp"

namespace flowcast {

struct TrainConfig {
    int epochs = 300;
    int batch_size = 15;
    double learning_rate = 0.1;
    double rho = 0.95;
    double epsilon = 1e-7;
    std::uint64_t seed = 42;
    bool shuffle_train = true;
    int eval_batch = 256;  // batching for no-grad split evaluation

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;  // one entry per epoch
    std::vector<double> val_loss;
    int best_epoch = 0;  // 1-based
    double best_val_loss = 0.0;
};

// mean over all entries (lead rows x batch columns) of the squared error
Tensor mse_loss(Tape* tape, const Tensor& pred, const Tensor& target);

// Zeiler's update with a learning-rate multiplier:
//   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
//   dx      =  -lr * sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//   x       <- x + dx
void adadelta_step(ParamStore& params, double lr, double rho, double eps);

// Per-step input tensors for a set of examples placed in batch columns.
struct BatchTensors {
    std::vector<Tensor> x_steps;   // lag tensors, 1 x B
    std::vector<Tensor> dx_steps;  // empty unless requested
    Tensor targets;                // lead x B
};
BatchTensors assemble_batch(const WindowedDataset& ds, const std::vector<std::size_t>& indices,
                            bool need_dx, bool inputs_require_grad = false);

// Normalized-unit per-example MSE over examples [begin, begin+count),
// computed with no-grad batched forwards. Values are independent of the
// batching because batch columns never interact.
std::vector<double> per_example_mse(const Model& model, const WindowedDataset& ds,
                                    std::size_t begin, std::size_t count, int batch);
// canonical-order mean of the above
double split_mse(const Model& model, const WindowedDataset& ds, std::size_t begin,
                 std::size_t count, int batch);

struct TrainResult {
    Model model;  // parameter snapshot from the best validation epoch
    TrainHistory history;
};

// Mini-batch training with per-epoch seeded shuffling. Shuffling decides
// batch membership only: indices inside a batch are re-sorted so results do
// not depend on the order within a batch. Validation runs after every epoch;
// the snapshot with the lowest validation loss is returned.
TrainResult train(const Model& initial, const WindowedDataset& ds, const TrainConfig& cfg);

struct GridCell {
    double learning_rate = 0.0;
    int batch_size = 0;
    double min_val_loss = 0.0;
    int best_epoch = 0;
    std::uint64_t seed = 0;  // the derived per-cell seed (model init + shuffle)
};

struct GridResult {
    std::vector<GridCell> cells;  // learning-rate major, batch minor
    std::size_t best_index = 0;   // min val loss; ties -> smaller batch, then smaller lr
};

// One full training run per (learning rate, batch size) cell, each with its
// own derived seed. `workers` > 1 runs cells on parallel threads.
GridResult grid_search(ModelVariant variant, const ModelConfig& model_cfg,
                       const WindowedDataset& ds, const std::vector<double>& learning_rates,
                       const std::vector<int>& batch_sizes, const TrainConfig& tmpl,
                       int workers = 1);

// CSV emitters: `epoch,train_loss,val_loss` / `model,batch_size,learning_rate,min_val_loss`
std::string history_to_csv(const TrainHistory& history);
std::string grid_to_csv(ModelVariant variant, const GridResult& grid);

}  // namespace flowcast
