#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowcast/rng.hpp"

namespace flowcast {

// Thrown on dimension mismatches; message always reports both shapes.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown on invalid argument values (bad config, empty input, ...).
class ValueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown when an operation produces NaN/Inf. Never propagated silently.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major, rows*cols
    std::vector<double> grad;  // empty until backward touches this node
    bool requires_grad = false;
};

// Dense 2-D array of 64-bit reals with an optional gradient slot. Tensor is a
// cheap shared handle: copies alias the same node. Values are written once by
// the op that creates them and treated as immutable afterwards.
class Tensor {
public:
    Tensor() = default;

    Tensor(int rows, int cols) : node_(std::make_shared<TensorNode>()) {
        if (rows < 0 || cols < 0)
            throw ValueError("Tensor: negative dimension " + std::to_string(rows) + "x" +
                             std::to_string(cols));
        node_->rows = rows;
        node_->cols = cols;
        node_->data.assign(static_cast<size_t>(rows) * cols, 0.0);
    }

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }

    static Tensor full(int rows, int cols, double v) {
        Tensor t(rows, cols);
        for (auto& x : t.data()) x = v;
        return t;
    }

    static Tensor from_values(int rows, int cols, std::vector<double> values) {
        Tensor t(rows, cols);
        if (values.size() != t.size())
            throw ShapeError("Tensor::from_values: got " + std::to_string(values.size()) +
                             " values for shape " + t.shape_str());
        t.node_->data = std::move(values);
        return t;
    }

    // column vector from a contiguous range
    static Tensor column(const std::vector<double>& v) {
        return from_values(static_cast<int>(v.size()), 1, v);
    }

    static Tensor uniform(int rows, int cols, double lo, double hi, Rng& rng) {
        Tensor t(rows, cols);
        for (auto& x : t.data()) x = rng.uniform(lo, hi);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    size_t size() const { return node_->data.size(); }

    double at(int r, int c) const { return node_->data[static_cast<size_t>(r) * cols() + c]; }
    double& at(int r, int c) { return node_->data[static_cast<size_t>(r) * cols() + c]; }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        node_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }

    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.assign(size(), 0.0);
    }
    void drop_grad() { node_->grad.clear(); }

    // deep copy of values; grad not copied
    Tensor clone() const {
        Tensor t(rows(), cols());
        t.node_->data = node_->data;
        t.node_->requires_grad = node_->requires_grad;
        return t;
    }

    std::string shape_str() const {
        return std::to_string(rows()) + "x" + std::to_string(cols());
    }

    std::shared_ptr<TensorNode> node() const { return node_; }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// Scans for NaN/Inf; throws NumericError naming the offending op.
void check_finite(const char* op_name, const std::vector<double>& values);

}  // namespace flowcast
