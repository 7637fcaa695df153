#pragma once

#include <vector>

#include "flowcast/tape.hpp"

namespace flowcast {

// Gate weights act on the concatenation [h_prev; x_t], in that order.
struct LstmParams {
    Tensor W_f, W_i, W_o, W_c;  // h x (h + x)
    Tensor b_f, b_i, b_o, b_c;  // h x 1

    int hidden_dim() const { return W_f.rows(); }
    int input_dim() const { return W_f.cols() - W_f.rows(); }
};

struct AttentionParams {
    Tensor W_a;  // a x h, applied to encoder hidden states
    Tensor U_a;  // a x q, applied to the query
    Tensor v;    // a x 1, score projection
    Tensor W_c;  // o x (h + q), output projection over [context; query]

    int score_dim() const { return W_a.rows(); }
    int out_dim() const { return W_c.rows(); }
};

enum class Activation { Linear, Relu, LeakyRelu, Tanh };

Activation activation_from_string(const std::string& s);
const char* activation_to_string(Activation a);

struct DenseParams {
    Tensor W;  // out x in
    Tensor b;  // out x 1
    Activation activation = Activation::Linear;
    double leaky_slope = 0.01;
};

struct LstmState {
    Tensor h;
    Tensor c;
};

// Glorot-uniform weights, zero biases.
LstmParams make_lstm_params(int hidden_dim, int input_dim, Rng& rng);
AttentionParams make_attention_params(int score_dim, int hidden_dim, int query_dim, int out_dim,
                                      Rng& rng);
DenseParams make_dense_params(int out_dim, int in_dim, Activation act, double leaky_slope,
                              Rng& rng);

// One LSTM step. x: x_dim x B, state tensors: h_dim x B (B = batch columns;
// the spec-level single-example case is B = 1).
LstmState lstm_cell_step(Tape* tape, const LstmParams& p, const Tensor& x, const Tensor& h_prev,
                         const Tensor& c_prev);

// Gate weights/biases stacked once per tape so each step runs one matmul.
// Row layout: [f; i; o; c~]. Produces bit-identical results to the unfused
// per-gate formulation.
struct FusedLstm {
    Tensor W_all;  // 4h x (h + x)
    Tensor b_all;  // 4h x 1
    int hidden_dim = 0;
};
FusedLstm fuse_lstm_params(Tape* tape, const LstmParams& p);
LstmState lstm_step_fused(Tape* tape, const FusedLstm& f, const Tensor& x,
                          const LstmState& prev);

// Iterated steps over a sequence given as per-step input tensors (x_dim x B).
struct LstmSeqOut {
    std::vector<Tensor> hidden;  // one h_dim x B tensor per step
    LstmState final_state;
};
LstmSeqOut lstm_run_steps(Tape* tape, const LstmParams& p, const std::vector<Tensor>& x_steps);
LstmSeqOut lstm_run_steps(Tape* tape, const LstmParams& p, const std::vector<Tensor>& x_steps,
                          const LstmState& initial);

// Single-example form: seq rows are time steps (T x x_dim). Returns the
// hidden sequence as T x h_dim plus the final (h, c).
struct LstmRunOut {
    Tensor hidden_seq;
    LstmState final_state;
};
LstmRunOut lstm_run(Tape* tape, const LstmParams& p, const Tensor& seq);

// Additive-attention alignment scores, one row per encoder step: T x B.
Tensor attention_scores(Tape* tape, const AttentionParams& p,
                        const std::vector<Tensor>& hidden_steps, const Tensor& query);

struct AttentionOut {
    Tensor attention;  // o x B, the projected attention vector
    Tensor alpha;      // B x T, one weight row per batch column
    Tensor context;    // h x B
};

// Batched attention over per-step hidden tensors (h x B) with query q x B.
// linear_output skips the output tanh (ablation/test knob; default follows
// the tanh projection).
AttentionOut attention_batched(Tape* tape, const AttentionParams& p,
                               const std::vector<Tensor>& hidden_steps, const Tensor& query,
                               bool linear_output = false);

// Single-example form: hidden_seq T x h, query q x 1; alpha comes back 1 x T.
AttentionOut bahdanau_attention(Tape* tape, const AttentionParams& p, const Tensor& hidden_seq,
                                const Tensor& query, bool linear_output = false);

// activation(W x + b), x: in x B
Tensor dense_forward(Tape* tape, const DenseParams& p, const Tensor& x);

}  // namespace flowcast
