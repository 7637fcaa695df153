#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowcast/layers.hpp"

namespace flowcast {

enum class ModelVariant { Lstm, LstmAttn, Merged, MergedAttnFlow, MergedAttnBoth };

ModelVariant variant_from_string(const std::string& s);
const char* variant_to_string(ModelVariant v);

bool variant_is_merged(ModelVariant v);
bool variant_attends_flow(ModelVariant v);
bool variant_attends_fluct(ModelVariant v);

struct ModelConfig {
    int lag = 20;
    int lead = 5;
    int lstm1_units = 25;
    int lstm2_units = 15;
    int branch_dense_units = 15;
    int fusion_dense_units = 10;
    double leaky_slope = 0.01;
    int attn_dim = 0;      // 0 -> lstm2_units
    int attn_out_dim = 0;  // 0 -> lstm2_units
    bool attn_linear_output = false;  // skip the output tanh (ablation/test knob)
    std::uint64_t seed = 42;

    int resolved_attn_dim() const { return attn_dim > 0 ? attn_dim : lstm2_units; }
    int resolved_attn_out_dim() const { return attn_out_dim > 0 ? attn_out_dim : lstm2_units; }
    void validate() const;
};

// Named trainable tensors in registration order, with the per-parameter
// Adadelta accumulators. Iteration order is deterministic.
class ParamStore {
public:
    struct Entry {
        std::string path;
        Tensor value;
        std::vector<double> eg2;  // running E[g^2]
        std::vector<double> ed2;  // running E[dx^2]
    };

    void add(const std::string& path, const Tensor& t);
    bool has(const std::string& path) const { return index_.count(path) > 0; }
    const Tensor& get(const std::string& path) const;
    Tensor& get(const std::string& path);

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::size_t count() const { return entries_.size(); }
    std::size_t total_size() const;

    // allocate-and-zero every parameter gradient
    void zero_grads();

    std::vector<std::vector<double>> copy_values() const;
    void restore_values(const std::vector<std::vector<double>>& values);

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct BranchParams {
    LstmParams lstm1;
    LstmParams lstm2;
    bool has_attention = false;
    AttentionParams attn;
    DenseParams dense;
};

// column concatenation of the two branch features followed by the fusion dense
Tensor fuse(Tape* tape, const DenseParams& fusion, const Tensor& branch_flow,
            const Tensor& branch_fluct);

class Model {
public:
    static Model build(ModelVariant variant, const ModelConfig& cfg);

    ModelVariant variant() const { return variant_; }
    const ModelConfig& config() const { return cfg_; }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    const BranchParams& flow_branch() const { return flow_; }
    const BranchParams& fluct_branch() const { return fluct_; }
    const DenseParams& head() const { return head_; }
    const DenseParams& output_layer() const { return output_; }
    bool has_fluct_branch() const { return variant_is_merged(variant_); }

    // Optional taps captured during a forward pass.
    struct Capture {
        Tensor flow_feature;   // branch dense output, pre-concatenation
        Tensor fluct_feature;  // merged variants only
        Tensor flow_alpha;     // attention weights when the branch attends
        Tensor fluct_alpha;
    };

    // Batched forward: per-step inputs are 1 x B rows (oldest step first).
    // dx_steps must be empty for single-branch variants and lag-sized for
    // merged ones. Returns lead x B.
    Tensor forward_steps(Tape* tape, const std::vector<Tensor>& x_steps,
                         const std::vector<Tensor>& dx_steps, Capture* capture = nullptr) const;

    // Single-example prediction, no tape. Windows are lag x 1 columns in
    // normalized units, oldest step first. dx_window is required for merged
    // variants and ignored otherwise.
    Tensor predict(const Tensor& x_window) const;
    Tensor predict(const Tensor& x_window, const Tensor& dx_window) const;

    Model clone() const;

private:
    Model() = default;

    ModelVariant variant_ = ModelVariant::Lstm;
    ModelConfig cfg_;
    BranchParams flow_;
    BranchParams fluct_;
    DenseParams head_;
    DenseParams output_;
    ParamStore params_;
};

void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace flowcast
