#include "flowcast/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowcast/train.hpp"

namespace flowcast {

namespace {

void validate_horizons(const std::vector<int>& horizons, int lead) {
    if (horizons.empty()) throw ValueError("saliency: empty horizon set");
    for (int h : horizons)
        if (h < 1 || h > lead)
            throw ValueError("saliency: horizon " + std::to_string(h) + " outside 1.." +
                             std::to_string(lead));
}

void normalize_rows(SaliencyMap& map) {
    const std::size_t rows = map.window_times.size();
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = map.values.data() + r * static_cast<std::size_t>(map.lag);
        double mx = 0.0;
        for (int t = 0; t < map.lag; ++t) mx = std::max(mx, row[t]);
        if (mx > 0.0)
            for (int t = 0; t < map.lag; ++t) row[t] /= mx;
    }
}

}  // namespace

std::vector<SaliencyMap> saliency_for_forward(const ForwardFn& fn, bool with_dx,
                                              const WindowedDataset& ds, std::size_t begin,
                                              std::size_t count,
                                              const std::vector<int>& horizons, int batch) {
    if (count == 0) throw ValueError("saliency: no windows selected");
    validate_horizons(horizons, ds.lead);

    std::vector<SaliencyMap> maps(with_dx ? 2 : 1);
    maps[0].feature = "flow";
    if (with_dx) maps[1].feature = "fluct";
    for (auto& m : maps) {
        m.lag = ds.lag;
        m.window_times.reserve(count);
        m.values.assign(count * static_cast<std::size_t>(ds.lag), 0.0);
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::int64_t wt = ds.examples[begin + i].window_time;
        for (auto& m : maps) m.window_times.push_back(wt);
    }

    Tape tape;
    for (std::size_t at = 0; at < count; at += batch) {
        const std::size_t n = std::min<std::size_t>(batch, count - at);
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = begin + at + i;
        BatchTensors bt = assemble_batch(ds, idx, with_dx, /*inputs_require_grad=*/true);

        tape.clear();
        Tensor pred = fn(&tape, bt.x_steps, bt.dx_steps);
        // windows do not interact across batch columns, so one backward of the
        // summed selected horizons yields every per-window input gradient
        Tensor target;
        for (std::size_t k = 0; k < horizons.size(); ++k) {
            Tensor part = sum_all(&tape, slice_rows(&tape, pred, horizons[k] - 1, horizons[k]));
            target = (k == 0) ? part : add(&tape, target, part);
        }
        backward(target, tape);

        for (int t = 0; t < ds.lag; ++t) {
            const std::vector<double>& gx = bt.x_steps[t].grad();
            for (std::size_t i = 0; i < n; ++i)
                maps[0].values[(at + i) * static_cast<std::size_t>(ds.lag) + t] =
                    gx.empty() ? 0.0 : std::abs(gx[i]);
            if (with_dx) {
                const std::vector<double>& gdx = bt.dx_steps[t].grad();
                for (std::size_t i = 0; i < n; ++i)
                    maps[1].values[(at + i) * static_cast<std::size_t>(ds.lag) + t] =
                        gdx.empty() ? 0.0 : std::abs(gdx[i]);
            }
        }
    }
    for (auto& m : maps) normalize_rows(m);
    return maps;
}

std::vector<SaliencyMap> input_saliency(const Model& model, const WindowedDataset& ds,
                                        std::size_t begin, std::size_t count,
                                        const std::vector<int>& horizons, int batch) {
    const bool merged = variant_is_merged(model.variant());
    return saliency_for_forward(
        [&model](Tape* tape, const std::vector<Tensor>& xs, const std::vector<Tensor>& dxs) {
            return model.forward_steps(tape, xs, dxs);
        },
        merged, ds, begin, count, horizons, batch);
}

std::pair<BranchFeatures, BranchFeatures> extract_features(const Model& model,
                                                           const WindowedDataset& ds,
                                                           std::size_t begin, std::size_t count,
                                                           int batch) {
    if (!variant_is_merged(model.variant()))
        throw ValueError("extract_features: variant '" +
                         std::string(variant_to_string(model.variant())) +
                         "' has no concatenation point");
    if (count == 0) throw ValueError("extract_features: no windows selected");

    const int dims = model.config().branch_dense_units;
    BranchFeatures flow, fluct;
    flow.branch = "flow";
    fluct.branch = "fluct";
    flow.dims = fluct.dims = dims;
    flow.values.assign(count * static_cast<std::size_t>(dims), 0.0);
    fluct.values.assign(count * static_cast<std::size_t>(dims), 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        const std::int64_t wt = ds.examples[begin + i].window_time;
        flow.window_times.push_back(wt);
        fluct.window_times.push_back(wt);
    }

    for (std::size_t at = 0; at < count; at += batch) {
        const std::size_t n = std::min<std::size_t>(batch, count - at);
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = begin + at + i;
        BatchTensors bt = assemble_batch(ds, idx, true);
        Model::Capture cap;
        model.forward_steps(nullptr, bt.x_steps, bt.dx_steps, &cap);
        for (std::size_t i = 0; i < n; ++i)
            for (int d = 0; d < dims; ++d) {
                flow.values[(at + i) * dims + d] = cap.flow_feature.at(d, static_cast<int>(i));
                fluct.values[(at + i) * dims + d] = cap.fluct_feature.at(d, static_cast<int>(i));
            }
    }
    return {std::move(flow), std::move(fluct)};
}

double separability_score(const BranchFeatures& a, const BranchFeatures& b) {
    if (a.rows() != b.rows()) throw ShapeError("separability: row count mismatch");
    if (a.dims != b.dims) throw ShapeError("separability: dim mismatch");
    if (a.rows() < 2) throw ValueError("separability: need at least 2 rows per branch");

    const std::size_t n = a.rows();
    const int d = a.dims;
    auto row = [&](std::size_t i) -> const double* {
        return i < n ? a.values.data() + i * static_cast<std::size_t>(d)
                     : b.values.data() + (i - n) * static_cast<std::size_t>(d);
    };
    auto dist = [&](std::size_t i, std::size_t j) {
        const double *ri = row(i), *rj = row(j);
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
            const double diff = ri[k] - rj[k];
            s += diff * diff;
        }
        return std::sqrt(s);
    };

    const std::size_t total = 2 * n;
    double score = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
        const bool in_a = i < n;
        double intra = 0.0, inter = 0.0;
        for (std::size_t j = 0; j < total; ++j) {
            if (j == i) continue;
            const bool j_in_a = j < n;
            if (in_a == j_in_a)
                intra += dist(i, j);
            else
                inter += dist(i, j);
        }
        const double ai = intra / static_cast<double>(n - 1);
        const double bi = inter / static_cast<double>(n);
        const double mx = std::max(ai, bi);
        score += mx > 0.0 ? (bi - ai) / mx : 0.0;
    }
    return score / static_cast<double>(total);
}

std::string saliency_to_csv(const std::vector<SaliencyMap>& maps) {
    std::ostringstream out;
    out << "window_time,feature,step_index,value\n";
    for (const SaliencyMap& m : maps)
        for (std::size_t r = 0; r < m.window_times.size(); ++r)
            for (int t = 0; t < m.lag; ++t)
                out << format_timestamp(m.window_times[r]) << "," << m.feature << "," << t << ","
                    << format_double(m.at(r, t)) << "\n";
    return out.str();
}

std::string features_to_csv(const BranchFeatures& flow, const BranchFeatures& fluct) {
    std::ostringstream out;
    out << "window_time,branch";
    for (int k = 0; k < flow.dims; ++k) out << ",dim_" << k;
    out << "\n";
    auto emit = [&](const BranchFeatures& f) {
        for (std::size_t r = 0; r < f.rows(); ++r) {
            out << format_timestamp(f.window_times[r]) << "," << f.branch;
            for (int k = 0; k < f.dims; ++k) out << "," << format_double(f.at(r, k));
            out << "\n";
        }
    };
    emit(flow);
    emit(fluct);
    return out.str();
}

}  // namespace flowcast
