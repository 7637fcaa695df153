#include "flowcast/model.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace flowcast {

ModelVariant variant_from_string(const std::string& s) {
    if (s == "LSTM") return ModelVariant::Lstm;
    if (s == "LSTM_ATTN") return ModelVariant::LstmAttn;
    if (s == "MERGED") return ModelVariant::Merged;
    if (s == "MERGED_ATTN_FLOW") return ModelVariant::MergedAttnFlow;
    if (s == "MERGED_ATTN_BOTH") return ModelVariant::MergedAttnBoth;
    throw ValueError("unknown model variant '" + s +
                     "' (expected LSTM, LSTM_ATTN, MERGED, MERGED_ATTN_FLOW, MERGED_ATTN_BOTH)");
}

const char* variant_to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::Lstm: return "LSTM";
        case ModelVariant::LstmAttn: return "LSTM_ATTN";
        case ModelVariant::Merged: return "MERGED";
        case ModelVariant::MergedAttnFlow: return "MERGED_ATTN_FLOW";
        case ModelVariant::MergedAttnBoth: return "MERGED_ATTN_BOTH";
    }
    return "?";
}

bool variant_is_merged(ModelVariant v) {
    return v == ModelVariant::Merged || v == ModelVariant::MergedAttnFlow ||
           v == ModelVariant::MergedAttnBoth;
}

bool variant_attends_flow(ModelVariant v) {
    return v == ModelVariant::LstmAttn || v == ModelVariant::MergedAttnFlow ||
           v == ModelVariant::MergedAttnBoth;
}

bool variant_attends_fluct(ModelVariant v) { return v == ModelVariant::MergedAttnBoth; }

void ModelConfig::validate() const {
    if (lag < 1) throw ValueError("config: lag must be >= 1");
    if (lead < 1) throw ValueError("config: lead must be >= 1");
    if (lstm1_units < 1 || lstm2_units < 1 || branch_dense_units < 1 || fusion_dense_units < 1)
        throw ValueError("config: unit counts must be >= 1");
    if (attn_dim < 0 || attn_out_dim < 0)
        throw ValueError("config: attention dims must be >= 0 (0 selects the default)");
    if (!(leaky_slope > 0.0) || leaky_slope >= 1.0)
        throw ValueError("config: leaky_slope must be in (0, 1)");
}

void ParamStore::add(const std::string& path, const Tensor& t) {
    if (index_.count(path)) throw ValueError("param '" + path + "' registered twice");
    index_[path] = entries_.size();
    Entry e;
    e.path = path;
    e.value = t;
    e.eg2.assign(t.size(), 0.0);
    e.ed2.assign(t.size(), 0.0);
    entries_.push_back(std::move(e));
}

const Tensor& ParamStore::get(const std::string& path) const {
    auto it = index_.find(path);
    if (it == index_.end()) throw ValueError("unknown param '" + path + "'");
    return entries_[it->second].value;
}

Tensor& ParamStore::get(const std::string& path) {
    auto it = index_.find(path);
    if (it == index_.end()) throw ValueError("unknown param '" + path + "'");
    return entries_[it->second].value;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) {
        e.value.grad().assign(e.value.size(), 0.0);
    }
}

std::vector<std::vector<double>> ParamStore::copy_values() const {
    std::vector<std::vector<double>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value.data());
    return out;
}

void ParamStore::restore_values(const std::vector<std::vector<double>>& values) {
    if (values.size() != entries_.size())
        throw ValueError("restore_values: entry count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != entries_[i].value.size())
            throw ShapeError("restore_values: size mismatch for '" + entries_[i].path + "'");
        entries_[i].value.data() = values[i];
    }
}

namespace {

void register_lstm(ParamStore& store, const std::string& prefix, const LstmParams& p) {
    store.add(prefix + ".W_f", p.W_f);
    store.add(prefix + ".W_i", p.W_i);
    store.add(prefix + ".W_o", p.W_o);
    store.add(prefix + ".W_c", p.W_c);
    store.add(prefix + ".b_f", p.b_f);
    store.add(prefix + ".b_i", p.b_i);
    store.add(prefix + ".b_o", p.b_o);
    store.add(prefix + ".b_c", p.b_c);
}

void register_attention(ParamStore& store, const std::string& prefix, const AttentionParams& p) {
    store.add(prefix + ".W_a", p.W_a);
    store.add(prefix + ".U_a", p.U_a);
    store.add(prefix + ".v", p.v);
    store.add(prefix + ".W_c", p.W_c);
}

void register_dense(ParamStore& store, const std::string& prefix, const DenseParams& p) {
    store.add(prefix + ".W", p.W);
    store.add(prefix + ".b", p.b);
}

BranchParams make_branch(const ModelConfig& cfg, bool with_attention, Rng& rng) {
    BranchParams b;
    b.lstm1 = make_lstm_params(cfg.lstm1_units, 1, rng);
    b.lstm2 = make_lstm_params(cfg.lstm2_units, cfg.lstm1_units, rng);
    b.has_attention = with_attention;
    if (with_attention)
        b.attn = make_attention_params(cfg.resolved_attn_dim(), cfg.lstm2_units,
                                       cfg.lstm2_units, cfg.resolved_attn_out_dim(), rng);
    const int dense_in = with_attention ? cfg.resolved_attn_out_dim() : cfg.lstm2_units;
    b.dense = make_dense_params(cfg.branch_dense_units, dense_in, Activation::LeakyRelu,
                                cfg.leaky_slope, rng);
    return b;
}

void register_branch(ParamStore& store, const std::string& prefix, const BranchParams& b) {
    register_lstm(store, prefix + ".lstm1", b.lstm1);
    register_lstm(store, prefix + ".lstm2", b.lstm2);
    if (b.has_attention) register_attention(store, prefix + ".attn", b.attn);
    register_dense(store, prefix + ".dense", b.dense);
}

constexpr std::uint64_t kModelInitTag = 0x6d6f64656c;  // seed-derivation tag

}  // namespace

Tensor fuse(Tape* tape, const DenseParams& fusion, const Tensor& branch_flow,
            const Tensor& branch_fluct) {
    return dense_forward(tape, fusion, concat_rows(tape, branch_flow, branch_fluct));
}

Model Model::build(ModelVariant variant, const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.variant_ = variant;
    m.cfg_ = cfg;

    Rng rng(derive_seed(cfg.seed, kModelInitTag));
    m.flow_ = make_branch(cfg, variant_attends_flow(variant), rng);
    register_branch(m.params_, "flow_branch", m.flow_);

    if (variant_is_merged(variant)) {
        m.fluct_ = make_branch(cfg, variant_attends_fluct(variant), rng);
        register_branch(m.params_, "fluct_branch", m.fluct_);
    }

    const int head_in =
        variant_is_merged(variant) ? 2 * cfg.branch_dense_units : cfg.branch_dense_units;
    m.head_ = make_dense_params(cfg.fusion_dense_units, head_in, Activation::LeakyRelu,
                                cfg.leaky_slope, rng);
    register_dense(m.params_, "fusion", m.head_);

    m.output_ = make_dense_params(cfg.lead, cfg.fusion_dense_units, Activation::Linear,
                                  cfg.leaky_slope, rng);
    register_dense(m.params_, "output", m.output_);
    return m;
}

namespace {

// shared per-branch encoder path: LSTM(25) -> LSTM(15) -> [attention] -> Dense(15)
Tensor run_branch(Tape* tape, const BranchParams& b, const std::vector<Tensor>& steps,
                  bool linear_attn_output, Tensor* alpha_out) {
    LstmSeqOut l1 = lstm_run_steps(tape, b.lstm1, steps);
    LstmSeqOut l2 = lstm_run_steps(tape, b.lstm2, l1.hidden);
    Tensor encoded;
    if (b.has_attention) {
        AttentionOut att = attention_batched(tape, b.attn, l2.hidden, l2.final_state.h,
                                             linear_attn_output);
        if (alpha_out) *alpha_out = att.alpha;
        encoded = att.attention;
    } else {
        encoded = l2.final_state.h;
    }
    return dense_forward(tape, b.dense, encoded);
}

}  // namespace

Tensor Model::forward_steps(Tape* tape, const std::vector<Tensor>& x_steps,
                            const std::vector<Tensor>& dx_steps, Capture* capture) const {
    if (static_cast<int>(x_steps.size()) != cfg_.lag)
        throw ShapeError("forward: expected " + std::to_string(cfg_.lag) + " input steps, got " +
                         std::to_string(x_steps.size()));
    const bool merged = variant_is_merged(variant_);
    if (merged && dx_steps.size() != x_steps.size())
        throw ValueError("forward: merged variants require a fluctuation window");

    Tensor flow_alpha, fluct_alpha;
    Tensor flow_feat =
        run_branch(tape, flow_, x_steps, cfg_.attn_linear_output, &flow_alpha);

    Tensor fused_in;
    Tensor fluct_feat;
    if (merged) {
        fluct_feat = run_branch(tape, fluct_, dx_steps, cfg_.attn_linear_output, &fluct_alpha);
        fused_in = fuse(tape, head_, flow_feat, fluct_feat);
    } else {
        fused_in = dense_forward(tape, head_, flow_feat);
    }
    Tensor pred = dense_forward(tape, output_, fused_in);

    if (capture) {
        capture->flow_feature = flow_feat;
        capture->fluct_feature = fluct_feat;
        capture->flow_alpha = flow_alpha;
        capture->fluct_alpha = fluct_alpha;
    }
    return pred;
}

namespace {

std::vector<Tensor> window_to_steps(const Tensor& window, int lag, const char* which) {
    if (window.rows() != lag || window.cols() != 1)
        throw ShapeError(std::string("predict: ") + which + " window must be " +
                         std::to_string(lag) + "x1, got " + window.shape_str());
    std::vector<Tensor> steps;
    steps.reserve(lag);
    for (int t = 0; t < lag; ++t)
        steps.push_back(Tensor::from_values(1, 1, {window.at(t, 0)}));
    return steps;
}

}  // namespace

Tensor Model::predict(const Tensor& x_window) const {
    if (variant_is_merged(variant_))
        throw ValueError("predict: merged variants require a fluctuation window");
    return forward_steps(nullptr, window_to_steps(x_window, cfg_.lag, "flow"), {});
}

Tensor Model::predict(const Tensor& x_window, const Tensor& dx_window) const {
    if (!variant_is_merged(variant_)) return predict(x_window);
    return forward_steps(nullptr, window_to_steps(x_window, cfg_.lag, "flow"),
                         window_to_steps(dx_window, cfg_.lag, "fluctuation"));
}

Model Model::clone() const {
    Model m = Model::build(variant_, cfg_);
    m.params_.restore_values(params_.copy_values());
    for (std::size_t i = 0; i < params_.entries().size(); ++i) {
        m.params_.entries()[i].eg2 = params_.entries()[i].eg2;
        m.params_.entries()[i].ed2 = params_.entries()[i].ed2;
    }
    return m;
}

namespace {

std::string format_hex(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

}  // namespace

void save_model(const std::string& path, const Model& model) {
    std::ofstream out(path);
    if (!out) throw ValueError("cannot write model file '" + path + "'");
    const ModelConfig& c = model.config();
    out << "flowcast-model v1\n";
    out << "variant " << variant_to_string(model.variant()) << "\n";
    out << "lag " << c.lag << "\n";
    out << "lead " << c.lead << "\n";
    out << "lstm1_units " << c.lstm1_units << "\n";
    out << "lstm2_units " << c.lstm2_units << "\n";
    out << "branch_dense_units " << c.branch_dense_units << "\n";
    out << "fusion_dense_units " << c.fusion_dense_units << "\n";
    out << "leaky_slope " << format_hex(c.leaky_slope) << "\n";
    out << "attn_dim " << c.attn_dim << "\n";
    out << "attn_out_dim " << c.attn_out_dim << "\n";
    out << "attn_linear_output " << (c.attn_linear_output ? 1 : 0) << "\n";
    out << "seed " << c.seed << "\n";
    out << "params " << model.params().count() << "\n";
    for (const auto& e : model.params().entries()) {
        out << "param " << e.path << " " << e.value.rows() << " " << e.value.cols() << "\n";
        for (int r = 0; r < e.value.rows(); ++r) {
            for (int cix = 0; cix < e.value.cols(); ++cix) {
                if (cix) out << ' ';
                out << format_hex(e.value.at(r, cix));
            }
            out << "\n";
        }
    }
    out << "end\n";
    if (!out) throw ValueError("failed while writing model file '" + path + "'");
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("cannot read model file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "flowcast-model v1")
        throw ValueError("'" + path + "' is not a flowcast-model v1 file");

    auto expect_key = [&](const std::string& key) -> std::string {
        std::string k, v;
        if (!(in >> k >> v) || k != key)
            throw ValueError("model file '" + path + "': expected key '" + key + "', got '" + k +
                             "'");
        return v;
    };

    const std::string variant_str = expect_key("variant");
    ModelConfig cfg;
    cfg.lag = std::stoi(expect_key("lag"));
    cfg.lead = std::stoi(expect_key("lead"));
    cfg.lstm1_units = std::stoi(expect_key("lstm1_units"));
    cfg.lstm2_units = std::stoi(expect_key("lstm2_units"));
    cfg.branch_dense_units = std::stoi(expect_key("branch_dense_units"));
    cfg.fusion_dense_units = std::stoi(expect_key("fusion_dense_units"));
    cfg.leaky_slope = std::strtod(expect_key("leaky_slope").c_str(), nullptr);
    cfg.attn_dim = std::stoi(expect_key("attn_dim"));
    cfg.attn_out_dim = std::stoi(expect_key("attn_out_dim"));
    cfg.attn_linear_output = expect_key("attn_linear_output") == "1";
    cfg.seed = std::strtoull(expect_key("seed").c_str(), nullptr, 10);
    const std::size_t n_params = std::stoull(expect_key("params"));

    Model m = Model::build(variant_from_string(variant_str), cfg);
    if (m.params().count() != n_params)
        throw ValueError("model file '" + path + "': parameter count mismatch (file " +
                         std::to_string(n_params) + ", topology " +
                         std::to_string(m.params().count()) + ")");

    for (std::size_t i = 0; i < n_params; ++i) {
        std::string tag, p_path;
        int rows = 0, cols = 0;
        if (!(in >> tag >> p_path >> rows >> cols) || tag != "param")
            throw ValueError("model file '" + path + "': malformed param header");
        Tensor& t = m.params().get(p_path);
        if (t.rows() != rows || t.cols() != cols)
            throw ShapeError("model file '" + path + "': shape mismatch for '" + p_path + "'");
        for (std::size_t j = 0; j < t.size(); ++j) {
            std::string tok;
            if (!(in >> tok))
                throw ValueError("model file '" + path + "': truncated values for '" + p_path +
                                 "'");
            t.data()[j] = std::strtod(tok.c_str(), nullptr);
        }
    }
    std::string tail;
    if (!(in >> tail) || tail != "end")
        throw ValueError("model file '" + path + "': missing end marker");
    return m;
}

}  // namespace flowcast
