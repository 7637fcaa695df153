#include "flowcast/tape.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "flowcast/kernels.hpp"

namespace flowcast {

void check_finite(const char* op_name, const std::vector<double>& values) {
    // x * 0 is 0 for every finite x and NaN for NaN/Inf, so one vectorizable
    // accumulation detects any non-finite entry
    double acc = 0.0;
    for (double v : values) acc += v * 0.0;
    if (!std::isfinite(acc))
        throw NumericError(std::string(op_name) + ": produced a non-finite value");
}

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Tanh: return "tanh";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Relu: return "relu";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::SoftmaxRows: return "softmax_rows";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::ConcatRows: return "concat_rows";
        case OpKind::Transpose: return "transpose";
        case OpKind::RepeatCols: return "repeat_cols";
        case OpKind::SliceRows: return "slice_rows";
        case OpKind::ScaleCols: return "scale_cols";
        case OpKind::SumAll: return "sum_all";
        case OpKind::Scale: return "scale";
    }
    return "?";
}

namespace {

void maybe_record(Tape* tape, OpKind kind, Tensor& out, const Tensor& a, const Tensor* b,
                  double scalar = 0.0, int i0 = 0) {
    const bool needs_grad = a.requires_grad() || (b && b->requires_grad());
    out.set_requires_grad(needs_grad);
    if (tape && needs_grad)
        tape->record(TapeOp{kind, out.node(), a.node(), b ? b->node() : nullptr, scalar, i0});
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch (" + a.shape_str() + " vs " +
                         b.shape_str() + ")");
}

std::vector<double>& ensure_grad(TensorNode& n) {
    if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
    return n.grad;
}

// A node's incoming gradient is final when its producing op is processed
// (every consumer sits later on the tape), so scanning out.grad once per op
// checks each buffer exactly once.
void check_out_grad_finite(OpKind kind, const TensorNode& out) {
    double acc = 0.0;
    for (double v : out.grad) acc += v * 0.0;
    if (!std::isfinite(acc))
        throw NumericError(std::string(op_name(kind)) +
                           ": backward produced a non-finite gradient");
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimension mismatch (" + a.shape_str() + " * " +
                         b.shape_str() + ")");
    Tensor out(a.rows(), b.cols());
    kernels::matmul_nn(out.data().data(), a.data().data(), b.data().data(), a.rows(), a.cols(),
                       b.cols(), false);
    check_finite("matmul", out.data());
    maybe_record(tape, OpKind::MatMul, out, a, &b);
    return out;
}

namespace {

template <typename Kernel>
Tensor binary_op(Tape* tape, OpKind kind, const Tensor& a, const Tensor& b, Kernel&& kernel) {
    require_same_shape(op_name(kind), a, b);
    Tensor out(a.rows(), a.cols());
    kernel(out.data().data(), a.data().data(), b.data().data(), a.size());
    check_finite(op_name(kind), out.data());
    maybe_record(tape, kind, out, a, &b);
    return out;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    return binary_op(tape, OpKind::Add, a, b, kernels::ew_add);
}
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    return binary_op(tape, OpKind::Sub, a, b, kernels::ew_sub);
}
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    return binary_op(tape, OpKind::Mul, a, b, kernels::ew_mul);
}

Tensor tanh(Tape* tape, const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    kernels::ew_tanh(out.data().data(), x.data().data(), x.size());
    check_finite("tanh", out.data());
    maybe_record(tape, OpKind::Tanh, out, x, nullptr);
    return out;
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    kernels::ew_sigmoid(out.data().data(), x.data().data(), x.size());
    check_finite("sigmoid", out.data());
    maybe_record(tape, OpKind::Sigmoid, out, x, nullptr);
    return out;
}

Tensor relu(Tape* tape, const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    kernels::ew_relu(out.data().data(), x.data().data(), x.size());
    check_finite("relu", out.data());
    maybe_record(tape, OpKind::Relu, out, x, nullptr);
    return out;
}

Tensor leaky_relu(Tape* tape, const Tensor& x, double slope) {
    Tensor out(x.rows(), x.cols());
    kernels::ew_leaky_relu(out.data().data(), x.data().data(), x.size(), slope);
    check_finite("leaky_relu", out.data());
    maybe_record(tape, OpKind::LeakyRelu, out, x, nullptr, slope);
    return out;
}

Tensor softmax_rows(Tape* tape, const Tensor& x) {
    if (x.cols() < 1 || x.rows() < 1)
        throw ValueError("softmax_rows: empty input (" + x.shape_str() + ")");
    Tensor out(x.rows(), x.cols());
    kernels::softmax_rows(out.data().data(), x.data().data(), x.rows(), x.cols());
    check_finite("softmax_rows", out.data());
    maybe_record(tape, OpKind::SoftmaxRows, out, x, nullptr);
    return out;
}

Tensor concat_cols(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows())
        throw ShapeError("concat_cols: row count mismatch (" + a.shape_str() + " vs " +
                         b.shape_str() + ")");
    const int m = a.rows(), p = a.cols(), q = b.cols();
    Tensor out(m, p + q);
    for (int i = 0; i < m; ++i) {
        double* dst = out.data().data() + static_cast<std::size_t>(i) * (p + q);
        std::memcpy(dst, a.data().data() + static_cast<std::size_t>(i) * p, sizeof(double) * p);
        std::memcpy(dst + p, b.data().data() + static_cast<std::size_t>(i) * q,
                    sizeof(double) * q);
    }
    check_finite("concat_cols", out.data());
    maybe_record(tape, OpKind::ConcatCols, out, a, &b);
    return out;
}

Tensor concat_rows(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw ShapeError("concat_rows: column count mismatch (" + a.shape_str() + " vs " +
                         b.shape_str() + ")");
    Tensor out(a.rows() + b.rows(), a.cols());
    std::memcpy(out.data().data(), a.data().data(), sizeof(double) * a.size());
    std::memcpy(out.data().data() + a.size(), b.data().data(), sizeof(double) * b.size());
    check_finite("concat_rows", out.data());
    maybe_record(tape, OpKind::ConcatRows, out, a, &b);
    return out;
}

Tensor transpose(Tape* tape, const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    maybe_record(tape, OpKind::Transpose, out, a, nullptr);
    return out;
}

Tensor repeat_cols(Tape* tape, const Tensor& a, int n) {
    if (a.cols() != 1)
        throw ShapeError("repeat_cols: expected a column vector, got " + a.shape_str());
    if (n < 1) throw ValueError("repeat_cols: count must be >= 1");
    Tensor out(a.rows(), n);
    for (int i = 0; i < a.rows(); ++i) {
        const double v = a.data()[i];
        double* row = out.data().data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] = v;
    }
    maybe_record(tape, OpKind::RepeatCols, out, a, nullptr);
    return out;
}

Tensor slice_rows(Tape* tape, const Tensor& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1)
        throw ShapeError("slice_rows: invalid range [" + std::to_string(r0) + ", " +
                         std::to_string(r1) + ") for " + a.shape_str());
    Tensor out(r1 - r0, a.cols());
    std::memcpy(out.data().data(), a.data().data() + static_cast<std::size_t>(r0) * a.cols(),
                sizeof(double) * out.size());
    maybe_record(tape, OpKind::SliceRows, out, a, nullptr, 0.0, r0);
    return out;
}

Tensor scale_cols(Tape* tape, const Tensor& a, const Tensor& s) {
    if (s.rows() != 1 || s.cols() != a.cols())
        throw ShapeError("scale_cols: scale must be 1x" + std::to_string(a.cols()) + ", got " +
                         s.shape_str());
    Tensor out(a.rows(), a.cols());
    const int n = a.cols();
    for (int i = 0; i < a.rows(); ++i) {
        const double* ai = a.data().data() + static_cast<std::size_t>(i) * n;
        double* oi = out.data().data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) oi[j] = ai[j] * s.data()[j];
    }
    check_finite("scale_cols", out.data());
    maybe_record(tape, OpKind::ScaleCols, out, a, &s);
    return out;
}

Tensor sum_all(Tape* tape, const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor out = Tensor::from_values(1, 1, {s});
    check_finite("sum_all", out.data());
    maybe_record(tape, OpKind::SumAll, out, a, nullptr);
    return out;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * c;
    check_finite("scale", out.data());
    maybe_record(tape, OpKind::Scale, out, a, nullptr, c);
    return out;
}

namespace {

void backward_op(const TapeOp& op) {
    TensorNode& out = *op.out;
    check_out_grad_finite(op.kind, out);
    const std::vector<double>& g = out.grad;
    TensorNode* a = op.a.get();
    TensorNode* b = op.b.get();
    const bool need_a = a && a->requires_grad;
    const bool need_b = b && b->requires_grad;

    switch (op.kind) {
        case OpKind::MatMul: {
            // out = a(m x k) * b(k x n)
            const int m = a->rows, k = a->cols, n = b->cols;
            if (need_a)
                kernels::matmul_nt(ensure_grad(*a).data(), g.data(), b->data.data(), m, n, k,
                                   true);
            if (need_b)
                kernels::matmul_tn(ensure_grad(*b).data(), a->data.data(), g.data(), k, m, n,
                                   true);
            break;
        }
        case OpKind::Add: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (need_b) {
                auto& gb = ensure_grad(*b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
            break;
        }
        case OpKind::Sub: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (need_b) {
                auto& gb = ensure_grad(*b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
            break;
        }
        case OpKind::Mul: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b->data[i];
            }
            if (need_b) {
                auto& gb = ensure_grad(*b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a->data[i];
            }
            break;
        }
        case OpKind::Tanh: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double t = out.data[i];
                    ga[i] += g[i] * (1.0 - t * t);
                }
            }
            break;
        }
        case OpKind::Sigmoid: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = out.data[i];
                    ga[i] += g[i] * s * (1.0 - s);
                }
            }
            break;
        }
        case OpKind::Relu: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (a->data[i] > 0.0) ga[i] += g[i];
            }
            break;
        }
        case OpKind::LeakyRelu: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i] * (a->data[i] > 0.0 ? 1.0 : op.scalar);
            }
            break;
        }
        case OpKind::SoftmaxRows: {
            // dx = y .* (g - (g . y) per row)
            if (need_a) {
                auto& ga = ensure_grad(*a);
                const int rows = out.rows, cols = out.cols;
                for (int r = 0; r < rows; ++r) {
                    const double* yr = out.data.data() + static_cast<std::size_t>(r) * cols;
                    const double* gr = g.data() + static_cast<std::size_t>(r) * cols;
                    double* gar = ga.data() + static_cast<std::size_t>(r) * cols;
                    double dot = 0.0;
                    for (int j = 0; j < cols; ++j) dot += gr[j] * yr[j];
                    for (int j = 0; j < cols; ++j) gar[j] += yr[j] * (gr[j] - dot);
                }
            }
            break;
        }
        case OpKind::ConcatCols: {
            const int m = out.rows, p = a->cols, q = b->cols;
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < p; ++j)
                        ga[static_cast<std::size_t>(i) * p + j] +=
                            g[static_cast<std::size_t>(i) * (p + q) + j];
            }
            if (need_b) {
                auto& gb = ensure_grad(*b);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < q; ++j)
                        gb[static_cast<std::size_t>(i) * q + j] +=
                            g[static_cast<std::size_t>(i) * (p + q) + p + j];
            }
            break;
        }
        case OpKind::ConcatRows: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < a->data.size(); ++i) ga[i] += g[i];
            }
            if (need_b) {
                auto& gb = ensure_grad(*b);
                const std::size_t off = a->data.size();
                for (std::size_t i = 0; i < b->data.size(); ++i) gb[i] += g[off + i];
            }
            break;
        }
        case OpKind::Transpose: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                const int m = a->rows, n = a->cols;
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        ga[static_cast<std::size_t>(i) * n + j] +=
                            g[static_cast<std::size_t>(j) * m + i];
            }
            break;
        }
        case OpKind::RepeatCols: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                const int m = out.rows, n = out.cols;
                for (int i = 0; i < m; ++i) {
                    const double* gi = g.data() + static_cast<std::size_t>(i) * n;
                    double s = 0.0;
                    for (int j = 0; j < n; ++j) s += gi[j];
                    ga[i] += s;
                }
            }
            break;
        }
        case OpKind::SliceRows: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                const std::size_t off = static_cast<std::size_t>(op.i0) * a->cols;
                for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
            }
            break;
        }
        case OpKind::ScaleCols: {
            const int m = a->rows, n = a->cols;
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        ga[static_cast<std::size_t>(i) * n + j] +=
                            g[static_cast<std::size_t>(i) * n + j] * b->data[j];
            }
            if (need_b) {
                auto& gb = ensure_grad(*b);
                for (int j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i)
                        s += g[static_cast<std::size_t>(i) * n + j] *
                             a->data[static_cast<std::size_t>(i) * n + j];
                    gb[j] += s;
                }
            }
            break;
        }
        case OpKind::SumAll: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                const double gv = g[0];
                for (auto& v : ga) v += gv;
            }
            break;
        }
        case OpKind::Scale: {
            if (need_a) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * op.scalar;
            }
            break;
        }
    }
}

}  // namespace

void backward(const Tensor& loss, Tape& tape) {
    if (loss.rows() != 1 || loss.cols() != 1)
        throw ShapeError("backward: loss must be 1x1, got " + loss.shape_str());
    if (tape.consumed()) throw ValueError("backward: tape already consumed");
    if (!loss.requires_grad())
        throw ValueError("backward: loss does not depend on any requires_grad tensor");

    loss.node()->grad.assign(1, 1.0);

    const auto& ops = tape.ops();
    for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
        if (it->out->grad.empty()) continue;  // not reachable from the loss
        backward_op(*it);
    }
    tape.mark_consumed();
}

}  // namespace flowcast
