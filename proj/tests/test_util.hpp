#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "flowcast/tape.hpp"

namespace testutil {

inline flowcast::Tensor random_tensor(int rows, int cols, flowcast::Rng& rng, double lo = -1.0,
                                      double hi = 1.0, bool requires_grad = false) {
    flowcast::Tensor t = flowcast::Tensor::uniform(rows, cols, lo, hi, rng);
    t.set_requires_grad(requires_grad);
    return t;
}

// Central-difference gradient check: max over all parameter elements of
// |g_analytic - g_fd| / (|g_fd| + 1e-8). loss_fn must build the loss from the
// given parameter tensors; it receives a tape for the analytic pass and
// nullptr for value-only evaluations.
inline double max_rel_grad_error(const std::vector<flowcast::Tensor>& params,
                                 const std::function<flowcast::Tensor(flowcast::Tape*)>& loss_fn,
                                 double step = 1e-5) {
    using flowcast::Tape;
    using flowcast::Tensor;

    for (const Tensor& p : params) const_cast<Tensor&>(p).drop_grad();
    Tape tape;
    Tensor loss = loss_fn(&tape);
    flowcast::backward(loss, tape);

    std::vector<std::vector<double>> analytic;
    for (const Tensor& p : params)
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = const_cast<Tensor&>(params[pi]);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p.data()[i];
            p.data()[i] = saved + step;
            const double up = loss_fn(nullptr).at(0, 0);
            p.data()[i] = saved - step;
            const double down = loss_fn(nullptr).at(0, 0);
            p.data()[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double err = std::abs(analytic[pi][i] - fd) / (std::abs(fd) + 1e-8);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace testutil
