#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowcast/data.hpp"
#include "flowcast/model.hpp"

namespace flowcast {

// |d target / d input| per window and input step, row-normalized so each
// nonzero row has max exactly 1. All-zero rows are left unnormalized.
struct SaliencyMap {
    std::string feature;  // "flow" or "fluct"
    int lag = 0;
    std::vector<std::int64_t> window_times;  // one per row
    std::vector<double> values;              // rows x lag, row-major

    double at(std::size_t row, int step) const {
        return values[row * static_cast<std::size_t>(lag) + step];
    }
};

using ForwardFn =
    std::function<Tensor(Tape*, const std::vector<Tensor>&, const std::vector<Tensor>&)>;

// Core saliency over an arbitrary forward function (prediction lead x B from
// per-step inputs). The target is the sum of the selected 1-based horizons.
std::vector<SaliencyMap> saliency_for_forward(const ForwardFn& fn, bool with_dx,
                                              const WindowedDataset& ds, std::size_t begin,
                                              std::size_t count,
                                              const std::vector<int>& horizons, int batch = 256);

// Gradient saliency of a model's predictions with respect to its inputs,
// computed in normalized input space. One map for the flow feature, plus one
// for the fluctuation feature on merged variants.
std::vector<SaliencyMap> input_saliency(const Model& model, const WindowedDataset& ds,
                                        std::size_t begin, std::size_t count,
                                        const std::vector<int>& horizons, int batch = 256);

// Branch dense outputs captured immediately before concatenation.
struct BranchFeatures {
    std::string branch;  // "flow" or "fluct"
    int dims = 0;
    std::vector<std::int64_t> window_times;
    std::vector<double> values;  // rows x dims, row-major

    double at(std::size_t row, int d) const {
        return values[row * static_cast<std::size_t>(dims) + d];
    }
    std::size_t rows() const { return window_times.size(); }
};

// Merged variants only; errors for single-branch variants.
std::pair<BranchFeatures, BranchFeatures> extract_features(const Model& model,
                                                           const WindowedDataset& ds,
                                                           std::size_t begin, std::size_t count,
                                                           int batch = 256);

// Mean silhouette coefficient over the pooled rows with branch identity as
// the cluster label, Euclidean distance. Near 0 means full overlap, near 1
// well-separated branches.
double separability_score(const BranchFeatures& a, const BranchFeatures& b);

// `window_time,feature,step_index,value`
std::string saliency_to_csv(const std::vector<SaliencyMap>& maps);
// `window_time,branch,dim_0..dim_k`
std::string features_to_csv(const BranchFeatures& flow, const BranchFeatures& fluct);

}  // namespace flowcast
