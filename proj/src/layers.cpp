#include "flowcast/layers.hpp"

#include <cmath>
#include <string>

namespace flowcast {

Activation activation_from_string(const std::string& s) {
    if (s == "linear") return Activation::Linear;
    if (s == "relu") return Activation::Relu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "tanh") return Activation::Tanh;
    throw ValueError("unknown activation '" + s + "'");
}

const char* activation_to_string(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

namespace {

Tensor glorot(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    return Tensor::uniform(rows, cols, -s, s, rng).set_requires_grad(true);
}

Tensor zero_param(int rows, int cols) {
    Tensor t(rows, cols);
    t.set_requires_grad(true);
    return t;
}

}  // namespace

LstmParams make_lstm_params(int hidden_dim, int input_dim, Rng& rng) {
    if (hidden_dim < 1 || input_dim < 1)
        throw ValueError("lstm params: dims must be >= 1, got h=" + std::to_string(hidden_dim) +
                         " x=" + std::to_string(input_dim));
    const int in = hidden_dim + input_dim;
    LstmParams p;
    p.W_f = glorot(hidden_dim, in, in, hidden_dim, rng);
    p.W_i = glorot(hidden_dim, in, in, hidden_dim, rng);
    p.W_o = glorot(hidden_dim, in, in, hidden_dim, rng);
    p.W_c = glorot(hidden_dim, in, in, hidden_dim, rng);
    p.b_f = zero_param(hidden_dim, 1);
    p.b_i = zero_param(hidden_dim, 1);
    p.b_o = zero_param(hidden_dim, 1);
    p.b_c = zero_param(hidden_dim, 1);
    return p;
}

AttentionParams make_attention_params(int score_dim, int hidden_dim, int query_dim, int out_dim,
                                      Rng& rng) {
    if (score_dim < 1 || hidden_dim < 1 || query_dim < 1 || out_dim < 1)
        throw ValueError("attention params: dims must be >= 1");
    AttentionParams p;
    p.W_a = glorot(score_dim, hidden_dim, hidden_dim, score_dim, rng);
    p.U_a = glorot(score_dim, query_dim, query_dim, score_dim, rng);
    p.v = glorot(score_dim, 1, score_dim, 1, rng);
    p.W_c = glorot(out_dim, hidden_dim + query_dim, hidden_dim + query_dim, out_dim, rng);
    return p;
}

DenseParams make_dense_params(int out_dim, int in_dim, Activation act, double leaky_slope,
                              Rng& rng) {
    if (out_dim < 1 || in_dim < 1) throw ValueError("dense params: dims must be >= 1");
    DenseParams p;
    p.W = glorot(out_dim, in_dim, in_dim, out_dim, rng);
    p.b = zero_param(out_dim, 1);
    p.activation = act;
    p.leaky_slope = leaky_slope;
    return p;
}

FusedLstm fuse_lstm_params(Tape* tape, const LstmParams& p) {
    FusedLstm f;
    f.hidden_dim = p.hidden_dim();
    f.W_all = concat_rows(tape, concat_rows(tape, p.W_f, p.W_i),
                          concat_rows(tape, p.W_o, p.W_c));
    f.b_all = concat_rows(tape, concat_rows(tape, p.b_f, p.b_i),
                          concat_rows(tape, p.b_o, p.b_c));
    return f;
}

LstmState lstm_step_fused(Tape* tape, const FusedLstm& f, const Tensor& x,
                          const LstmState& prev) {
    const int h = f.hidden_dim;
    const int batch = x.cols();
    if (prev.h.rows() != h || prev.h.cols() != batch || prev.c.rows() != h ||
        prev.c.cols() != batch)
        throw ShapeError("lstm step: state shape mismatch (h " + prev.h.shape_str() + ", c " +
                         prev.c.shape_str() + ", x " + x.shape_str() + ")");

    Tensor hx = concat_rows(tape, prev.h, x);
    Tensor z = add(tape, matmul(tape, f.W_all, hx), repeat_cols(tape, f.b_all, batch));

    Tensor gates = sigmoid(tape, slice_rows(tape, z, 0, 3 * h));
    Tensor f_gate = slice_rows(tape, gates, 0, h);
    Tensor i_gate = slice_rows(tape, gates, h, 2 * h);
    Tensor o_gate = slice_rows(tape, gates, 2 * h, 3 * h);
    Tensor c_tilde = tanh(tape, slice_rows(tape, z, 3 * h, 4 * h));

    Tensor c = add(tape, mul(tape, f_gate, prev.c), mul(tape, i_gate, c_tilde));
    Tensor h_out = mul(tape, o_gate, tanh(tape, c));
    return {h_out, c};
}

LstmState lstm_cell_step(Tape* tape, const LstmParams& p, const Tensor& x, const Tensor& h_prev,
                         const Tensor& c_prev) {
    if (x.rows() != p.input_dim())
        throw ShapeError("lstm_cell_step: input dim mismatch (x " + x.shape_str() +
                         " vs params expecting " + std::to_string(p.input_dim()) + " rows)");
    FusedLstm f = fuse_lstm_params(tape, p);
    return lstm_step_fused(tape, f, x, {h_prev, c_prev});
}

LstmSeqOut lstm_run_steps(Tape* tape, const LstmParams& p, const std::vector<Tensor>& x_steps) {
    if (x_steps.empty()) throw ValueError("lstm_run: empty sequence");
    const int batch = x_steps.front().cols();
    LstmState init{Tensor::zeros(p.hidden_dim(), batch), Tensor::zeros(p.hidden_dim(), batch)};
    return lstm_run_steps(tape, p, x_steps, init);
}

LstmSeqOut lstm_run_steps(Tape* tape, const LstmParams& p, const std::vector<Tensor>& x_steps,
                          const LstmState& initial) {
    if (x_steps.empty()) throw ValueError("lstm_run: empty sequence");
    FusedLstm fused = fuse_lstm_params(tape, p);
    LstmSeqOut out;
    out.hidden.reserve(x_steps.size());
    LstmState state = initial;
    for (const Tensor& x : x_steps) {
        state = lstm_step_fused(tape, fused, x, state);
        out.hidden.push_back(state.h);
    }
    out.final_state = state;
    return out;
}

LstmRunOut lstm_run(Tape* tape, const LstmParams& p, const Tensor& seq) {
    if (seq.rows() < 1) throw ValueError("lstm_run: empty sequence");
    std::vector<Tensor> steps;
    steps.reserve(seq.rows());
    for (int t = 0; t < seq.rows(); ++t)
        steps.push_back(transpose(tape, slice_rows(tape, seq, t, t + 1)));
    LstmSeqOut seq_out = lstm_run_steps(tape, p, steps);

    Tensor hidden_seq = transpose(tape, seq_out.hidden[0]);
    for (std::size_t t = 1; t < seq_out.hidden.size(); ++t)
        hidden_seq = concat_rows(tape, hidden_seq, transpose(tape, seq_out.hidden[t]));
    return {hidden_seq, seq_out.final_state};
}

Tensor attention_scores(Tape* tape, const AttentionParams& p,
                        const std::vector<Tensor>& hidden_steps, const Tensor& query) {
    if (hidden_steps.empty()) throw ValueError("attention: empty hidden sequence");
    Tensor uq = matmul(tape, p.U_a, query);  // a x B, shared across steps
    Tensor v_t = transpose(tape, p.v);       // 1 x a
    Tensor scores;                           // T x B
    for (std::size_t t = 0; t < hidden_steps.size(); ++t) {
        Tensor m = tanh(tape, add(tape, matmul(tape, p.W_a, hidden_steps[t]), uq));
        Tensor e_t = matmul(tape, v_t, m);  // 1 x B
        scores = (t == 0) ? e_t : concat_rows(tape, scores, e_t);
    }
    return scores;
}

AttentionOut attention_batched(Tape* tape, const AttentionParams& p,
                               const std::vector<Tensor>& hidden_steps, const Tensor& query,
                               bool linear_output) {
    Tensor scores = attention_scores(tape, p, hidden_steps, query);       // T x B
    Tensor alpha = softmax_rows(tape, transpose(tape, scores));           // B x T
    Tensor alpha_t = transpose(tape, alpha);                              // T x B

    Tensor context;  // h x B, sum_t alpha[t] * hidden[t]
    for (std::size_t t = 0; t < hidden_steps.size(); ++t) {
        Tensor w_t = slice_rows(tape, alpha_t, static_cast<int>(t), static_cast<int>(t) + 1);
        Tensor term = scale_cols(tape, hidden_steps[t], w_t);
        context = (t == 0) ? term : add(tape, context, term);
    }

    Tensor combined = concat_rows(tape, context, query);  // (h + q) x B
    Tensor projected = matmul(tape, p.W_c, combined);
    Tensor attention = linear_output ? projected : tanh(tape, projected);
    return {attention, alpha, context};
}

AttentionOut bahdanau_attention(Tape* tape, const AttentionParams& p, const Tensor& hidden_seq,
                                const Tensor& query, bool linear_output) {
    if (hidden_seq.rows() < 1) throw ValueError("attention: empty hidden sequence");
    std::vector<Tensor> steps;
    steps.reserve(hidden_seq.rows());
    for (int t = 0; t < hidden_seq.rows(); ++t)
        steps.push_back(transpose(tape, slice_rows(tape, hidden_seq, t, t + 1)));
    return attention_batched(tape, p, steps, query, linear_output);
}

Tensor dense_forward(Tape* tape, const DenseParams& p, const Tensor& x) {
    if (x.rows() != p.W.cols())
        throw ShapeError("dense_forward: input dim mismatch (W " + p.W.shape_str() + " vs x " +
                         x.shape_str() + ")");
    Tensor z = add(tape, matmul(tape, p.W, x), repeat_cols(tape, p.b, x.cols()));
    switch (p.activation) {
        case Activation::Linear: return z;
        case Activation::Relu: return relu(tape, z);
        case Activation::LeakyRelu: return leaky_relu(tape, z, p.leaky_slope);
        case Activation::Tanh: return tanh(tape, z);
    }
    return z;
}

}  // namespace flowcast
