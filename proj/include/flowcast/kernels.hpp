#pragma once

#include <cstddef>

// Hot numeric kernels. All loops are partitioned so each output element is
// written by exactly one thread; results are bit-identical for any thread
// count. Small problems stay serial (the `if` clauses below).

namespace flowcast::kernels {

// work thresholds below which the OpenMP fork is not worth taking
inline constexpr double kMinParallelFlops = 1.6e5;
inline constexpr std::size_t kMinParallelElems = 16384;
inline constexpr std::size_t kMinParallelMathElems = 2048;

// C (+)= A * B            A: m x k, B: k x n, C: m x n
void matmul_nn(double* c, const double* a, const double* b, int m, int k, int n, bool accumulate);
// C (+)= A * B^T          A: m x k, B: n x k, C: m x n
void matmul_nt(double* c, const double* a, const double* b, int m, int k, int n, bool accumulate);
// C (+)= A^T * B          A: k x m, B: k x n, C: m x n
void matmul_tn(double* c, const double* a, const double* b, int m, int k, int n, bool accumulate);

void ew_add(double* out, const double* a, const double* b, std::size_t n);
void ew_sub(double* out, const double* a, const double* b, std::size_t n);
void ew_mul(double* out, const double* a, const double* b, std::size_t n);

void ew_tanh(double* out, const double* x, std::size_t n);
void ew_sigmoid(double* out, const double* x, std::size_t n);
void ew_relu(double* out, const double* x, std::size_t n);
void ew_leaky_relu(double* out, const double* x, std::size_t n, double slope);

// row-wise softmax with max-subtraction, each row independent
void softmax_rows(double* out, const double* x, int rows, int cols);

}  // namespace flowcast::kernels

// Serial reference implementations, written as the obvious loops. Kept in the
// library as the oracle the kernel tests and the benchmark compare against.
namespace flowcast::ref {

// C = A * B by the definition, triple loop
void matmul(double* c, const double* a, const double* b, int m, int k, int n);

// direct formula exp(x_i) / sum exp(x_k), no stabilization
void softmax_row(double* out, const double* x, int n);

double tanh_scalar(double x);
double sigmoid_scalar(double x);
double relu_scalar(double x);
double leaky_relu_scalar(double x, double slope);

}  // namespace flowcast::ref
