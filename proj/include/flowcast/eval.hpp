#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowcast/data.hpp"
#include "flowcast/model.hpp"

namespace flowcast {

// sqrt(1/N sum (y_i - yhat_i)^2)
double rmse(const std::vector<double>& y, const std::vector<double>& yhat);

// 100/N' sum |(y_i - yhat_i) / y_i| over entries with y_i != 0; the excluded
// count is reported through `excluded` when given. Errors when every target
// is zero.
double mape(const std::vector<double>& y, const std::vector<double>& yhat,
            std::size_t* excluded = nullptr);

// linear-interpolation percentile of an unsorted sample, p in [0, 100]
double percentile_linear(std::vector<double> values, double p);

// mask[i] = flow[i] >= p-th percentile of the whole series
std::vector<bool> congested_mask(const std::vector<double>& flow, double percentile);
// alternative definition: timestamps falling inside fixed clock windows
struct ClockWindow {
    int start_minute_of_day = 0;  // inclusive
    int end_minute_of_day = 0;    // exclusive
};
std::vector<bool> congested_mask_clock(const std::vector<std::int64_t>& timestamps,
                                       const std::vector<ClockWindow>& windows);

struct PredRow {
    std::size_t example_index = 0;
    int horizon = 0;  // 1-based
    double y_true = 0.0;
    double y_pred = 0.0;
};

// De-normalized test-split predictions; predictions are clamped at 0.
std::vector<PredRow> predict_test_split(const Model& model, const WindowedDataset& ds,
                                        int batch = 256);

struct EvalReport {
    int lead = 0;
    std::size_t examples = 0;
    std::size_t total_points = 0;

    std::vector<double> rmse_h;  // per horizon, veh/5min
    std::vector<double> mape_h;  // per horizon, percent
    double rmse_overall = 0.0;
    double mape_overall = 0.0;
    std::size_t mape_excluded = 0;

    double congestion_percentile = 85.0;
    double congestion_threshold = 0.0;
    std::vector<double> congested_rmse_h;
    std::vector<std::size_t> congested_count_h;
    double congested_rmse_overall = 0.0;
    std::size_t congested_count = 0;

    double mse_norm_overall = 0.0;  // normalized units, Table-1-style magnitude
};

// Metrics over the test split in de-normalized units, horizon-wise and
// overall, plus the congested-subset breakdown (flow >= percentile of the
// pooled test-split true flows).
EvalReport evaluate(const Model& model, const WindowedDataset& ds, double percentile = 85.0,
                    int batch = 256);

// metrics recomputed from prediction rows (shared by evaluate and tooling)
EvalReport report_from_predictions(const std::vector<PredRow>& rows, int lead,
                                   double percentile);

std::string predictions_to_csv(const std::vector<PredRow>& rows);
std::vector<PredRow> predictions_from_csv(const std::string& text);
std::string report_to_text(const EvalReport& r);
std::string report_per_horizon_csv(const EvalReport& r);

}  // namespace flowcast
