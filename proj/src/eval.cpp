#include "flowcast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowcast/train.hpp"

namespace flowcast {

double rmse(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size())
        throw ShapeError("rmse: length mismatch (" + std::to_string(y.size()) + " vs " +
                         std::to_string(yhat.size()) + ")");
    if (y.empty()) throw ValueError("rmse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - yhat[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(y.size()));
}

double mape(const std::vector<double>& y, const std::vector<double>& yhat,
            std::size_t* excluded) {
    if (y.size() != yhat.size())
        throw ShapeError("mape: length mismatch (" + std::to_string(y.size()) + " vs " +
                         std::to_string(yhat.size()) + ")");
    if (y.empty()) throw ValueError("mape: empty input");
    double s = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) continue;
        s += std::abs((y[i] - yhat[i]) / y[i]);
        ++used;
    }
    if (excluded) *excluded = y.size() - used;
    if (used == 0) throw ValueError("mape: undefined, every target is zero");
    return 100.0 * s / static_cast<double>(used);
}

double percentile_linear(std::vector<double> values, double p) {
    if (values.empty()) throw ValueError("percentile: empty input");
    if (p < 0.0 || p > 100.0)
        throw ValueError("percentile: p must be in [0, 100], got " + std::to_string(p));
    std::sort(values.begin(), values.end());
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::vector<bool> congested_mask(const std::vector<double>& flow, double percentile) {
    const double threshold = percentile_linear(flow, percentile);
    std::vector<bool> mask(flow.size());
    for (std::size_t i = 0; i < flow.size(); ++i) mask[i] = flow[i] >= threshold;
    return mask;
}

std::vector<bool> congested_mask_clock(const std::vector<std::int64_t>& timestamps,
                                       const std::vector<ClockWindow>& windows) {
    std::vector<bool> mask(timestamps.size(), false);
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        const int minute = static_cast<int>((timestamps[i] % 86400 + 86400) % 86400) / 60;
        for (const ClockWindow& w : windows)
            if (minute >= w.start_minute_of_day && minute < w.end_minute_of_day) {
                mask[i] = true;
                break;
            }
    }
    return mask;
}

std::vector<PredRow> predict_test_split(const Model& model, const WindowedDataset& ds,
                                        int batch) {
    if (ds.split.test == 0) throw ValueError("evaluate: empty test split");
    if (!ds.normalized) throw ValueError("evaluate: dataset must be normalized");
    const bool merged = variant_is_merged(model.variant());
    const std::size_t begin = ds.test_begin();
    std::vector<PredRow> rows;
    rows.reserve(ds.split.test * ds.lead);
    for (std::size_t at = 0; at < ds.split.test; at += batch) {
        const std::size_t n = std::min<std::size_t>(batch, ds.split.test - at);
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = begin + at + i;
        BatchTensors bt = assemble_batch(ds, idx, merged);
        Tensor pred = model.forward_steps(nullptr, bt.x_steps, bt.dx_steps);
        for (std::size_t i = 0; i < n; ++i) {
            for (int h = 0; h < ds.lead; ++h) {
                PredRow r;
                r.example_index = at + i;  // index within the test split
                r.horizon = h + 1;
                r.y_true = ds.norm.denorm_flow(bt.targets.at(h, static_cast<int>(i)));
                r.y_pred =
                    std::max(0.0, ds.norm.denorm_flow(pred.at(h, static_cast<int>(i))));
                rows.push_back(r);
            }
        }
    }
    return rows;
}

EvalReport report_from_predictions(const std::vector<PredRow>& rows, int lead,
                                   double percentile) {
    if (rows.empty()) throw ValueError("evaluate: no predictions");
    EvalReport rep;
    rep.lead = lead;
    rep.total_points = rows.size();
    rep.examples = rows.size() / static_cast<std::size_t>(lead);
    rep.congestion_percentile = percentile;

    std::vector<double> all_true, all_pred;
    all_true.reserve(rows.size());
    all_pred.reserve(rows.size());
    for (const PredRow& r : rows) {
        all_true.push_back(r.y_true);
        all_pred.push_back(r.y_pred);
    }
    rep.rmse_overall = rmse(all_true, all_pred);
    rep.mape_overall = mape(all_true, all_pred, &rep.mape_excluded);
    rep.congestion_threshold = percentile_linear(all_true, percentile);

    std::vector<double> ct, cp;
    for (int h = 1; h <= lead; ++h) {
        std::vector<double> yt, yp, cyt, cyp;
        for (const PredRow& r : rows) {
            if (r.horizon != h) continue;
            yt.push_back(r.y_true);
            yp.push_back(r.y_pred);
            if (r.y_true >= rep.congestion_threshold) {
                cyt.push_back(r.y_true);
                cyp.push_back(r.y_pred);
            }
        }
        rep.rmse_h.push_back(rmse(yt, yp));
        rep.mape_h.push_back(mape(yt, yp));
        rep.congested_count_h.push_back(cyt.size());
        rep.congested_rmse_h.push_back(cyt.empty() ? 0.0 : rmse(cyt, cyp));
        ct.insert(ct.end(), cyt.begin(), cyt.end());
        cp.insert(cp.end(), cyp.begin(), cyp.end());
    }
    rep.congested_count = ct.size();
    rep.congested_rmse_overall = ct.empty() ? 0.0 : rmse(ct, cp);
    return rep;
}

EvalReport evaluate(const Model& model, const WindowedDataset& ds, double percentile,
                    int batch) {
    std::vector<PredRow> rows = predict_test_split(model, ds, batch);
    EvalReport rep = report_from_predictions(rows, ds.lead, percentile);
    rep.mse_norm_overall = split_mse(model, ds, ds.test_begin(), ds.split.test, batch);
    return rep;
}

std::string predictions_to_csv(const std::vector<PredRow>& rows) {
    std::ostringstream out;
    out << "example_index,horizon,y_true,y_pred\n";
    for (const PredRow& r : rows)
        out << r.example_index << "," << r.horizon << "," << format_double(r.y_true) << ","
            << format_double(r.y_pred) << "\n";
    return out.str();
}

std::vector<PredRow> predictions_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) !=
        std::vector<std::string>{"example_index", "horizon", "y_true", "y_pred"})
        throw ParseError("bad predictions header", 1);
    std::vector<PredRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 4) throw ParseError("expected 4 fields", line_no);
        PredRow r;
        r.example_index = std::stoull(f[0]);
        r.horizon = std::stoi(f[1]);
        r.y_true = std::strtod(f[2].c_str(), nullptr);
        r.y_pred = std::strtod(f[3].c_str(), nullptr);
        rows.push_back(r);
    }
    return rows;
}

std::string report_to_text(const EvalReport& r) {
    std::ostringstream out;
    out << "lead = " << r.lead << "\n";
    out << "examples = " << r.examples << "\n";
    out << "total_points = " << r.total_points << "\n";
    out << "rmse_overall = " << format_double(r.rmse_overall) << "\n";
    out << "mape_overall = " << format_double(r.mape_overall) << "\n";
    out << "mape_excluded = " << r.mape_excluded << "\n";
    out << "mse_norm_overall = " << format_double(r.mse_norm_overall) << "\n";
    out << "congestion_percentile = " << format_double(r.congestion_percentile) << "\n";
    out << "congestion_threshold = " << format_double(r.congestion_threshold) << "\n";
    out << "congested_count = " << r.congested_count << "\n";
    out << "congested_rmse_overall = " << format_double(r.congested_rmse_overall) << "\n";
    for (int h = 1; h <= r.lead; ++h) {
        out << "rmse_h" << h << " = " << format_double(r.rmse_h[h - 1]) << "\n";
        out << "mape_h" << h << " = " << format_double(r.mape_h[h - 1]) << "\n";
        out << "congested_rmse_h" << h << " = " << format_double(r.congested_rmse_h[h - 1])
            << "\n";
        out << "congested_count_h" << h << " = " << r.congested_count_h[h - 1] << "\n";
    }
    return out.str();
}

std::string report_per_horizon_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "horizon,rmse,mape,congested_rmse,congested_count\n";
    for (int h = 1; h <= r.lead; ++h)
        out << h << "," << format_double(r.rmse_h[h - 1]) << ","
            << format_double(r.mape_h[h - 1]) << ","
            << format_double(r.congested_rmse_h[h - 1]) << "," << r.congested_count_h[h - 1]
            << "\n";
    return out.str();
}

}  // namespace flowcast
