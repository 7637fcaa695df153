#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowcast/ioutil.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast {

// Flow observations on a uniform grid. Missing samples are NaN until cleaned.
struct RawSeries {
    std::vector<std::int64_t> timestamps;  // strictly increasing, uniform spacing
    std::vector<double> flow;              // veh per interval
};

// Flow and first-difference fluctuation, co-indexed: fluct[i] corresponds to
// the same wall-clock instant as flow[i] (the first raw sample is dropped so
// fluct[i] = raw[i+1] - raw[i] pairs with flow[i] = raw[i+1]).
struct SeriesPair {
    std::vector<std::int64_t> timestamps;
    std::vector<double> flow;
    std::vector<double> fluct;
};

struct Example {
    std::vector<double> x;        // lag flow values, oldest first
    std::vector<double> dx;       // lag fluctuation values, same steps
    std::vector<double> y;        // lead flow values
    std::int64_t window_time = 0; // wall-clock time of the first forecast step
};

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    std::size_t total() const { return train + val + test; }
};

// Min-max scaling fit on the train split only; flow and fluctuation scaled
// independently. Values outside the train range are not clipped.
struct NormParams {
    double flow_min = 0.0, flow_max = 1.0;
    double fluct_min = 0.0, fluct_max = 1.0;

    double norm_flow(double v) const { return (v - flow_min) / (flow_max - flow_min); }
    double denorm_flow(double v) const { return v * (flow_max - flow_min) + flow_min; }
    double norm_fluct(double v) const { return (v - fluct_min) / (fluct_max - fluct_min); }
    double denorm_fluct(double v) const { return v * (fluct_max - fluct_min) + fluct_min; }
};

struct WindowedDataset {
    int lag = 0;
    int lead = 0;
    std::vector<Example> examples;  // chronological
    SplitCounts split;
    NormParams norm;
    bool normalized = false;

    std::size_t train_begin() const { return 0; }
    std::size_t val_begin() const { return split.train; }
    std::size_t test_begin() const { return split.train + split.val; }
};

// Sum `factor` consecutive samples into one bucket (counts are additive);
// the trailing partial bucket is dropped. Bucket timestamps are bucket starts.
RawSeries aggregate(const RawSeries& raw, int factor = 10,
                    std::int64_t spacing_tolerance_seconds = 0);

// First difference; output is one shorter than the input.
std::vector<double> differencing(const std::vector<double>& flow);

// Differencing plus the index alignment described on SeriesPair.
SeriesPair make_series_pair(const RawSeries& raw);

// Missing handling: NaN or negative flow is forward-filled for runs of at
// most `max_forward_fill` samples; longer runs split the series into
// independent segments so windows never span a gap.
std::vector<RawSeries> clean_segments(const RawSeries& raw, int max_forward_fill = 3);

// Overlapping stride-1 supervised windows; per segment the example count is
// n - lag - lead + 1 over the aligned length n.
WindowedDataset make_windows(const std::vector<SeriesPair>& segments, int lag, int lead);
WindowedDataset make_windows(const SeriesPair& pair, int lag, int lead);

SplitCounts split_chronological(std::size_t n, double train_frac, double val_frac,
                                double test_frac);
void apply_split(WindowedDataset& ds, double train_frac, double val_frac, double test_frac);

// Fit min-max on the train split, apply everywhere. Errors on a degenerate
// (constant) feature. Sets ds.norm and ds.normalized.
void normalize_fit_apply(WindowedDataset& ds);

struct SynthConfig {
    int days = 30;
    std::uint64_t seed = 1;
    double noise_sigma = 12.0;     // AR(1) innovation stddev, veh/5min
    double ar_phi = 0.7;           // AR(1) coefficient
    double events_per_day = 0.8;   // expected congestion-drop events per day
    std::int64_t start_epoch = 1735689600;  // 2025-01-01T00:00:00Z
    int step_seconds = 300;
};

// Analytic daily base profile (veh/5min) at a fraction of the day in [0, 1).
double synth_base_profile(double day_fraction);

// Daily double-peak base + AR(1) noise + seeded congestion-drop events
// (sudden flow reduction with a linear recovery ramp), clamped at 0.
// Deterministic under the seed.
RawSeries synth_generate(const SynthConfig& cfg);

// --- detector CSV and dataset directory formats ---

// Header `timestamp,flow`; ISO-8601 or epoch-second timestamps; optional
// extra columns (occupancy, speed, ...) are ignored. Null/empty/NaN flow
// fields become NaN for the cleaning pass. Malformed rows raise ParseError
// with the line number.
RawSeries load_flow_csv(const std::string& path);
void write_flow_csv(const std::string& path, const RawSeries& series);

struct DatasetManifest {
    int lag = 0;
    int lead = 0;
    int aggregate_factor = 0;  // 0 = no aggregation applied
    double train_frac = 0.6, val_frac = 0.15, test_frac = 0.25;
    SplitCounts split;
    NormParams norm;
    std::string source;
    std::string source_hash;
    std::uint64_t seed = 0;
};

void write_dataset(const std::string& dir, const WindowedDataset& ds,
                   const DatasetManifest& manifest);
WindowedDataset load_dataset(const std::string& dir, DatasetManifest* manifest_out = nullptr);

}  // namespace flowcast
