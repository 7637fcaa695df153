#pragma once

#include <cstdint>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

enum class OpKind : std::uint8_t {
    MatMul,
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu,
    SoftmaxRows,
    ConcatCols,
    ConcatRows,
    Transpose,
    RepeatCols,
    SliceRows,
    ScaleCols,
    SumAll,
    Scale,
};

const char* op_name(OpKind k);

struct TapeOp {
    OpKind kind;
    std::shared_ptr<TensorNode> out;
    std::shared_ptr<TensorNode> a;
    std::shared_ptr<TensorNode> b;  // null for unary ops
    double scalar = 0.0;            // leaky slope / scale factor
    int i0 = 0;                     // slice start
};

// Ordered record of executed ops. Backward replays it once, in reverse
// execution order; execution order is a topological order by construction.
class Tape {
public:
    void record(TapeOp op) { ops_.push_back(std::move(op)); }
    std::size_t size() const { return ops_.size(); }
    bool consumed() const { return consumed_; }
    void mark_consumed() { consumed_ = true; }
    void clear() {
        ops_.clear();
        consumed_ = false;
    }
    const std::vector<TapeOp>& ops() const { return ops_; }

private:
    std::vector<TapeOp> ops_;
    bool consumed_ = false;
};

// All ops compute eagerly and check the result for NaN/Inf. When `tape` is
// non-null and any input requires grad, the op is recorded for backward;
// passing tape == nullptr gives a plain inference path.

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);

Tensor tanh(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);
Tensor relu(Tape* tape, const Tensor& x);
Tensor leaky_relu(Tape* tape, const Tensor& x, double slope);

// row-wise softmax (any row count; the 1xT case is the attention-weight use)
Tensor softmax_rows(Tape* tape, const Tensor& x);

Tensor concat_cols(Tape* tape, const Tensor& a, const Tensor& b);
Tensor concat_rows(Tape* tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape* tape, const Tensor& a);
// a: m x 1 broadcast to m x n
Tensor repeat_cols(Tape* tape, const Tensor& a, int n);
// rows [r0, r1) of a
Tensor slice_rows(Tape* tape, const Tensor& a, int r0, int r1);
// out[i][j] = a[i][j] * s[0][j], s: 1 x n
Tensor scale_cols(Tape* tape, const Tensor& a, const Tensor& s);
Tensor sum_all(Tape* tape, const Tensor& a);
Tensor scale(Tape* tape, const Tensor& a, double c);

// Populates grads of every requires_grad tensor reachable from `loss`.
// loss must be 1x1; a tape can be consumed once.
void backward(const Tensor& loss, Tape& tape);

}  // namespace flowcast
