#include "flowcast/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flowcast/rng.hpp"

namespace flowcast {

namespace {

void require_uniform_spacing(const RawSeries& raw, std::int64_t tolerance) {
    if (raw.timestamps.size() != raw.flow.size())
        throw ValueError("series: timestamp/flow length mismatch");
    if (raw.timestamps.size() < 2) return;
    const std::int64_t dt = raw.timestamps[1] - raw.timestamps[0];
    if (dt <= 0) throw ValueError("series: timestamps not strictly increasing");
    for (std::size_t i = 1; i < raw.timestamps.size(); ++i) {
        const std::int64_t gap = raw.timestamps[i] - raw.timestamps[i - 1];
        if (std::llabs(gap - dt) > tolerance)
            throw ValueError("series: non-uniform spacing at index " + std::to_string(i) +
                             " (gap " + std::to_string(gap) + "s vs " + std::to_string(dt) +
                             "s)");
    }
}

}  // namespace

RawSeries aggregate(const RawSeries& raw, int factor, std::int64_t spacing_tolerance_seconds) {
    if (factor < 1) throw ValueError("aggregate: factor must be >= 1");
    require_uniform_spacing(raw, spacing_tolerance_seconds);
    RawSeries out;
    const std::size_t buckets = raw.flow.size() / factor;
    out.timestamps.reserve(buckets);
    out.flow.reserve(buckets);
    for (std::size_t b = 0; b < buckets; ++b) {
        double sum = 0.0;
        for (int j = 0; j < factor; ++j) sum += raw.flow[b * factor + j];
        out.timestamps.push_back(raw.timestamps[b * factor]);
        out.flow.push_back(sum);
    }
    return out;
}

std::vector<double> differencing(const std::vector<double>& flow) {
    if (flow.size() < 2) throw ValueError("differencing: need at least 2 samples");
    std::vector<double> out(flow.size() - 1);
    for (std::size_t i = 0; i + 1 < flow.size(); ++i) out[i] = flow[i + 1] - flow[i];
    return out;
}

SeriesPair make_series_pair(const RawSeries& raw) {
    SeriesPair pair;
    pair.fluct = differencing(raw.flow);
    pair.flow.assign(raw.flow.begin() + 1, raw.flow.end());
    pair.timestamps.assign(raw.timestamps.begin() + 1, raw.timestamps.end());
    return pair;
}

std::vector<RawSeries> clean_segments(const RawSeries& raw, int max_forward_fill) {
    if (raw.timestamps.size() != raw.flow.size())
        throw ValueError("series: timestamp/flow length mismatch");
    std::vector<RawSeries> segments;
    RawSeries cur;
    double last_good = std::nan("");
    int missing_run = 0;

    auto flush = [&]() {
        if (!cur.flow.empty()) segments.push_back(std::move(cur));
        cur = RawSeries{};
    };

    for (std::size_t i = 0; i < raw.flow.size(); ++i) {
        const double v = raw.flow[i];
        const bool missing = !std::isfinite(v) || v < 0.0;
        if (!missing) {
            missing_run = 0;
            last_good = v;
            cur.timestamps.push_back(raw.timestamps[i]);
            cur.flow.push_back(v);
            continue;
        }
        ++missing_run;
        if (std::isfinite(last_good) && missing_run <= max_forward_fill) {
            cur.timestamps.push_back(raw.timestamps[i]);
            cur.flow.push_back(last_good);
        } else {
            // gap too long (or leading): close the segment, drop any samples
            // this run already filled, and restart after the gap
            if (missing_run > 1 && static_cast<int>(cur.flow.size()) >= missing_run - 1) {
                cur.timestamps.resize(cur.timestamps.size() - (missing_run - 1));
                cur.flow.resize(cur.flow.size() - (missing_run - 1));
            }
            flush();
            last_good = std::nan("");
        }
    }
    flush();
    return segments;
}

WindowedDataset make_windows(const std::vector<SeriesPair>& segments, int lag, int lead) {
    if (lag < 1 || lead < 1) throw ValueError("make_windows: lag and lead must be >= 1");
    WindowedDataset ds;
    ds.lag = lag;
    ds.lead = lead;
    for (const SeriesPair& pair : segments) {
        const std::size_t n = pair.flow.size();
        if (pair.fluct.size() != n || pair.timestamps.size() != n)
            throw ValueError("make_windows: misaligned series pair");
        if (n < static_cast<std::size_t>(lag + lead)) continue;
        const std::size_t count = n - lag - lead + 1;
        for (std::size_t t = 0; t < count; ++t) {
            Example ex;
            ex.x.assign(pair.flow.begin() + t, pair.flow.begin() + t + lag);
            ex.dx.assign(pair.fluct.begin() + t, pair.fluct.begin() + t + lag);
            ex.y.assign(pair.flow.begin() + t + lag, pair.flow.begin() + t + lag + lead);
            ex.window_time = pair.timestamps[t + lag];
            ds.examples.push_back(std::move(ex));
        }
    }
    if (ds.examples.empty())
        throw ValueError("make_windows: no segment long enough for lag " + std::to_string(lag) +
                         " + lead " + std::to_string(lead));
    return ds;
}

WindowedDataset make_windows(const SeriesPair& pair, int lag, int lead) {
    return make_windows(std::vector<SeriesPair>{pair}, lag, lead);
}

SplitCounts split_chronological(std::size_t n, double train_frac, double val_frac,
                                double test_frac) {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
        std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ValueError("split: fractions must be non-negative and sum to 1");
    SplitCounts s;
    s.train = static_cast<std::size_t>(train_frac * static_cast<double>(n));
    s.val = static_cast<std::size_t>(val_frac * static_cast<double>(n));
    s.test = n - s.train - s.val;
    return s;
}

void apply_split(WindowedDataset& ds, double train_frac, double val_frac, double test_frac) {
    ds.split = split_chronological(ds.examples.size(), train_frac, val_frac, test_frac);
}

void normalize_fit_apply(WindowedDataset& ds) {
    if (ds.split.train == 0) throw ValueError("normalize: empty train split");
    if (ds.normalized) throw ValueError("normalize: dataset already normalized");

    NormParams p;
    p.flow_min = p.fluct_min = std::numeric_limits<double>::infinity();
    p.flow_max = p.fluct_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ds.split.train; ++i) {
        const Example& ex = ds.examples[i];
        for (double v : ex.x) {
            p.flow_min = std::min(p.flow_min, v);
            p.flow_max = std::max(p.flow_max, v);
        }
        for (double v : ex.y) {
            p.flow_min = std::min(p.flow_min, v);
            p.flow_max = std::max(p.flow_max, v);
        }
        for (double v : ex.dx) {
            p.fluct_min = std::min(p.fluct_min, v);
            p.fluct_max = std::max(p.fluct_max, v);
        }
    }
    if (!(p.flow_max > p.flow_min))
        throw ValueError("normalize: flow is constant on the train split");
    if (!(p.fluct_max > p.fluct_min))
        throw ValueError("normalize: fluctuation is constant on the train split");

    for (Example& ex : ds.examples) {
        for (double& v : ex.x) v = p.norm_flow(v);
        for (double& v : ex.y) v = p.norm_flow(v);
        for (double& v : ex.dx) v = p.norm_fluct(v);
    }
    ds.norm = p;
    ds.normalized = true;
}

double synth_base_profile(double day_fraction) {
    constexpr double kTwoPi = 2.0 * 3.141592653589793238462643383279502884;
    return 300.0 + 170.0 * std::cos(kTwoPi * (day_fraction - 12.75 / 24.0)) +
           110.0 * std::cos(2.0 * kTwoPi * (day_fraction - 8.2 / 24.0));
}

namespace {
constexpr std::uint64_t kSynthTag = 0x73796e7468;
}

RawSeries synth_generate(const SynthConfig& cfg) {
    if (cfg.days < 1) throw ValueError("synth: days must be >= 1");
    if (cfg.step_seconds < 1) throw ValueError("synth: step_seconds must be >= 1");
    const int steps_per_day = 86400 / cfg.step_seconds;
    const std::size_t n = static_cast<std::size_t>(cfg.days) * steps_per_day;

    Rng rng(derive_seed(cfg.seed, kSynthTag));

    // event schedule first so the AR draw sequence does not depend on it
    struct Event {
        std::size_t start;
        std::size_t duration;
        double depth;
    };
    std::vector<Event> events;
    for (int d = 0; d < cfg.days; ++d) {
        double expected = cfg.events_per_day;
        int n_events = static_cast<int>(expected);
        expected -= n_events;
        if (rng.next_double() < expected) ++n_events;
        for (int e = 0; e < n_events; ++e) {
            Event ev;
            // congestion drops during the active part of the day
            const double at = rng.uniform(0.25, 0.85);
            ev.start = static_cast<std::size_t>(d) * steps_per_day +
                       static_cast<std::size_t>(at * steps_per_day);
            ev.duration = static_cast<std::size_t>(rng.uniform(6.0, 18.0));  // 30-90 min
            ev.depth = rng.uniform(0.3, 0.6);
            events.push_back(ev);
        }
    }

    std::vector<double> multiplier(n, 1.0);
    for (const Event& ev : events) {
        for (std::size_t j = 0; j < ev.duration && ev.start + j < n; ++j) {
            const double recovery = static_cast<double>(j) / static_cast<double>(ev.duration);
            const double m = 1.0 - ev.depth * (1.0 - recovery);
            multiplier[ev.start + j] = std::min(multiplier[ev.start + j], m);
        }
    }

    RawSeries out;
    out.timestamps.reserve(n);
    out.flow.reserve(n);
    double noise = 0.0;
    if (cfg.noise_sigma > 0.0 && cfg.ar_phi < 1.0)
        noise = cfg.noise_sigma / std::sqrt(1.0 - cfg.ar_phi * cfg.ar_phi) * rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
        const double day_fraction =
            static_cast<double>(i % steps_per_day) / static_cast<double>(steps_per_day);
        if (i > 0) noise = cfg.ar_phi * noise + cfg.noise_sigma * rng.normal();
        const double v = synth_base_profile(day_fraction) * multiplier[i] + noise;
        out.timestamps.push_back(cfg.start_epoch + static_cast<std::int64_t>(i) *
                                                       cfg.step_seconds);
        out.flow.push_back(std::max(0.0, v));
    }
    return out;
}

RawSeries load_flow_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file '" + path + "'", 1);
    ++line_no;
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "timestamp" || header[1] != "flow")
        throw ParseError("expected header starting with 'timestamp,flow' in '" + path + "'",
                         line_no);

    RawSeries out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() < 2)
            throw ParseError("expected at least 2 fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        std::int64_t ts;
        try {
            ts = parse_timestamp(fields[0]);
        } catch (const std::exception& e) {
            throw ParseError(e.what(), line_no);
        }
        const std::string& f = fields[1];
        double v;
        if (f.empty() || f == "null" || f == "NULL" || f == "NA" || f == "nan" || f == "NaN") {
            v = std::nan("");
        } else {
            char* end = nullptr;
            v = std::strtod(f.c_str(), &end);
            if (end == f.c_str() || *end != '\0')
                throw ParseError("unparseable flow value '" + f + "'", line_no);
        }
        out.timestamps.push_back(ts);
        out.flow.push_back(v);
    }
    if (out.flow.empty()) throw ParseError("no data rows in '" + path + "'", line_no);
    return out;
}

void write_flow_csv(const std::string& path, const RawSeries& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("cannot write '" + path + "'");
    out << "timestamp,flow\n";
    for (std::size_t i = 0; i < series.flow.size(); ++i)
        out << format_timestamp(series.timestamps[i]) << "," << format_double(series.flow[i])
            << "\n";
    if (!out) throw ValueError("failed while writing '" + path + "'");
}

namespace {

std::string manifest_text(const WindowedDataset& ds, const DatasetManifest& m) {
    std::ostringstream s;
    s << "format = flowcast-dataset v1\n";
    s << "lag = " << ds.lag << "\n";
    s << "lead = " << ds.lead << "\n";
    s << "aggregate_factor = " << m.aggregate_factor << "\n";
    s << "examples = " << ds.examples.size() << "\n";
    s << "train_frac = " << format_double(m.train_frac) << "\n";
    s << "val_frac = " << format_double(m.val_frac) << "\n";
    s << "test_frac = " << format_double(m.test_frac) << "\n";
    s << "train_count = " << ds.split.train << "\n";
    s << "val_count = " << ds.split.val << "\n";
    s << "test_count = " << ds.split.test << "\n";
    s << "flow_min = " << format_double(ds.norm.flow_min) << "\n";
    s << "flow_max = " << format_double(ds.norm.flow_max) << "\n";
    s << "fluct_min = " << format_double(ds.norm.fluct_min) << "\n";
    s << "fluct_max = " << format_double(ds.norm.fluct_max) << "\n";
    s << "source = " << m.source << "\n";
    s << "source_hash = " << m.source_hash << "\n";
    s << "seed = " << m.seed << "\n";
    return s.str();
}

}  // namespace

void write_dataset(const std::string& dir, const WindowedDataset& ds,
                   const DatasetManifest& manifest) {
    if (!ds.normalized) throw ValueError("write_dataset: dataset must be normalized");
    ensure_directory(dir);
    write_text_file(dir + "/manifest.txt", manifest_text(ds, manifest));

    std::ostringstream out;
    out << "example_index,split,window_time";
    for (int i = 0; i < ds.lag; ++i) out << ",x_" << i;
    for (int i = 0; i < ds.lag; ++i) out << ",dx_" << i;
    for (int i = 0; i < ds.lead; ++i) out << ",y_" << i;
    out << "\n";
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        const Example& ex = ds.examples[i];
        const char* split = i < ds.val_begin() ? "train" : (i < ds.test_begin() ? "val" : "test");
        out << i << "," << split << "," << format_timestamp(ex.window_time);
        for (double v : ex.x) out << "," << format_double(v);
        for (double v : ex.dx) out << "," << format_double(v);
        for (double v : ex.y) out << "," << format_double(v);
        out << "\n";
    }
    write_text_file(dir + "/windows.csv", out.str());
}

namespace {

std::string manifest_value(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string k = line.substr(0, eq);
        while (!k.empty() && k.back() == ' ') k.pop_back();
        if (k == key) {
            std::string v = line.substr(eq + 1);
            while (!v.empty() && v.front() == ' ') v.erase(v.begin());
            return v;
        }
    }
    throw ValueError("manifest: missing key '" + key + "'");
}

}  // namespace

WindowedDataset load_dataset(const std::string& dir, DatasetManifest* manifest_out) {
    const std::string text = read_text_file(dir + "/manifest.txt");
    if (manifest_value(text, "format") != "flowcast-dataset v1")
        throw ValueError("'" + dir + "' is not a flowcast-dataset v1 directory");

    WindowedDataset ds;
    ds.lag = std::stoi(manifest_value(text, "lag"));
    ds.lead = std::stoi(manifest_value(text, "lead"));
    ds.split.train = std::stoull(manifest_value(text, "train_count"));
    ds.split.val = std::stoull(manifest_value(text, "val_count"));
    ds.split.test = std::stoull(manifest_value(text, "test_count"));
    ds.norm.flow_min = std::strtod(manifest_value(text, "flow_min").c_str(), nullptr);
    ds.norm.flow_max = std::strtod(manifest_value(text, "flow_max").c_str(), nullptr);
    ds.norm.fluct_min = std::strtod(manifest_value(text, "fluct_min").c_str(), nullptr);
    ds.norm.fluct_max = std::strtod(manifest_value(text, "fluct_max").c_str(), nullptr);
    ds.normalized = true;

    if (manifest_out) {
        manifest_out->lag = ds.lag;
        manifest_out->lead = ds.lead;
        manifest_out->aggregate_factor = std::stoi(manifest_value(text, "aggregate_factor"));
        manifest_out->train_frac = std::strtod(manifest_value(text, "train_frac").c_str(), nullptr);
        manifest_out->val_frac = std::strtod(manifest_value(text, "val_frac").c_str(), nullptr);
        manifest_out->test_frac = std::strtod(manifest_value(text, "test_frac").c_str(), nullptr);
        manifest_out->split = ds.split;
        manifest_out->norm = ds.norm;
        manifest_out->source = manifest_value(text, "source");
        manifest_out->source_hash = manifest_value(text, "source_hash");
        manifest_out->seed = std::stoull(manifest_value(text, "seed"));
    }

    std::ifstream in(dir + "/windows.csv");
    if (!in) throw ValueError("cannot open '" + dir + "/windows.csv'");
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty windows.csv", 1);
    ++line_no;
    const std::size_t expected_fields = 3 + 2 * static_cast<std::size_t>(ds.lag) + ds.lead;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != expected_fields)
            throw ParseError("expected " + std::to_string(expected_fields) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        Example ex;
        try {
            ex.window_time = parse_timestamp(fields[2]);
        } catch (const std::exception& e) {
            throw ParseError(e.what(), line_no);
        }
        std::size_t f = 3;
        ex.x.resize(ds.lag);
        ex.dx.resize(ds.lag);
        ex.y.resize(ds.lead);
        for (int i = 0; i < ds.lag; ++i) ex.x[i] = std::strtod(fields[f++].c_str(), nullptr);
        for (int i = 0; i < ds.lag; ++i) ex.dx[i] = std::strtod(fields[f++].c_str(), nullptr);
        for (int i = 0; i < ds.lead; ++i) ex.y[i] = std::strtod(fields[f++].c_str(), nullptr);
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.size() != ds.split.total())
        throw ValueError("dataset '" + dir + "': window count " +
                         std::to_string(ds.examples.size()) + " does not match manifest total " +
                         std::to_string(ds.split.total()));
    return ds;
}

}  // namespace flowcast
