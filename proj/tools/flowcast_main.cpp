#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowcast/data.hpp"
#include "flowcast/eval.hpp"
#include "flowcast/interpret.hpp"
#include "flowcast/model.hpp"
#include "flowcast/runconfig.hpp"
#include "flowcast/train.hpp"

namespace {

using namespace flowcast;

struct Args {
    std::string config_path;
    std::map<std::string, std::string> flags;

    RunConfig resolved() const {
        RunConfig rc;
        if (!config_path.empty()) rc = RunConfig::from_file(config_path);
        for (const auto& [k, v] : flags) rc.set(k, v);  // flags override the file
        return rc;
    }
};

void add_keys(CLI::App* sub, Args& args, const std::vector<std::string>& keys) {
    sub->add_option("--config", args.config_path,
                    "flat `key = value` configuration file; flags override it");
    for (const std::string& key : keys) {
        sub->add_option_function<std::string>(
            "--" + key, [&args, key](const std::string& v) { args.flags[key] = v; });
    }
}

std::string require_path(const RunConfig& rc, const std::string& key) {
    const std::string v = rc.get_string(key, "");
    if (v.empty()) throw ValueError("missing required option --" + key);
    return v;
}

std::string hash_dataset_dir(const std::string& dir) {
    const std::string text =
        read_text_file(dir + "/manifest.txt") + read_text_file(dir + "/windows.csv");
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
    return buf;
}

void write_provenance(const std::string& dir, const ConfigEcho& echo,
                      const std::vector<std::pair<std::string, std::string>>& inputs) {
    ensure_directory(dir);
    write_text_file(dir + "/config.txt", echo.text());
    std::string text;
    for (const auto& [path, hash] : inputs) text += path + " = " + hash + "\n";
    write_text_file(dir + "/inputs.txt", text);
}

struct SplitRange {
    std::size_t begin = 0;
    std::size_t count = 0;
};

SplitRange select_split(const WindowedDataset& ds, const std::string& name) {
    if (name == "train") return {ds.train_begin(), ds.split.train};
    if (name == "val") return {ds.val_begin(), ds.split.val};
    if (name == "test") return {ds.test_begin(), ds.split.test};
    throw ValueError("unknown split '" + name + "' (expected train, val, or test)");
}

// architecture keys shared by train and grid
ModelConfig model_config_from(const RunConfig& rc, const WindowedDataset& ds,
                              std::uint64_t seed, ConfigEcho& echo) {
    ModelConfig mc;
    mc.lag = ds.lag;
    mc.lead = ds.lead;
    mc.lstm1_units = static_cast<int>(rc.get_int("lstm1_units", 25));
    mc.lstm2_units = static_cast<int>(rc.get_int("lstm2_units", 15));
    mc.branch_dense_units = static_cast<int>(rc.get_int("branch_dense_units", 15));
    mc.fusion_dense_units = static_cast<int>(rc.get_int("fusion_dense_units", 10));
    mc.leaky_slope = rc.get_double("leaky_slope", 0.01);
    mc.attn_dim = static_cast<int>(rc.get_int("attn_dim", 0));
    mc.attn_out_dim = static_cast<int>(rc.get_int("attn_out_dim", 0));
    mc.attn_linear_output = rc.get_bool("attn_linear_output", false);
    mc.seed = seed;
    echo.put("lag", static_cast<std::int64_t>(mc.lag));
    echo.put("lead", static_cast<std::int64_t>(mc.lead));
    echo.put("lstm1_units", static_cast<std::int64_t>(mc.lstm1_units));
    echo.put("lstm2_units", static_cast<std::int64_t>(mc.lstm2_units));
    echo.put("branch_dense_units", static_cast<std::int64_t>(mc.branch_dense_units));
    echo.put("fusion_dense_units", static_cast<std::int64_t>(mc.fusion_dense_units));
    echo.put("leaky_slope", mc.leaky_slope);
    echo.put("attn_dim", static_cast<std::int64_t>(mc.attn_dim));
    echo.put("attn_out_dim", static_cast<std::int64_t>(mc.attn_out_dim));
    echo.put("attn_linear_output", std::string(mc.attn_linear_output ? "1" : "0"));
    return mc;
}

TrainConfig train_config_from(const RunConfig& rc, std::uint64_t seed, ConfigEcho& echo) {
    TrainConfig tc;
    tc.epochs = static_cast<int>(rc.get_int("epochs", 300));
    tc.batch_size = static_cast<int>(rc.get_int("batch_size", 15));
    tc.learning_rate = rc.get_double("learning_rate", 0.1);
    tc.rho = rc.get_double("rho", 0.95);
    tc.epsilon = rc.get_double("epsilon", 1e-7);
    tc.shuffle_train = rc.get_bool("shuffle_train", true);
    tc.eval_batch = static_cast<int>(rc.get_int("eval_batch", 256));
    tc.seed = seed;
    echo.put("epochs", static_cast<std::int64_t>(tc.epochs));
    echo.put("batch_size", static_cast<std::int64_t>(tc.batch_size));
    echo.put("learning_rate", tc.learning_rate);
    echo.put("rho", tc.rho);
    echo.put("epsilon", tc.epsilon);
    echo.put("shuffle_train", std::string(tc.shuffle_train ? "1" : "0"));
    echo.put("eval_batch", static_cast<std::int64_t>(tc.eval_batch));
    return tc;
}

int cmd_synth(const RunConfig& rc) {
    const std::string out = require_path(rc, "out");
    SynthConfig sc;
    sc.days = static_cast<int>(rc.get_int("days", 30));
    sc.seed = static_cast<std::uint64_t>(rc.get_int("seed", 42));
    sc.noise_sigma = rc.get_double("noise_sigma", 12.0);
    sc.ar_phi = rc.get_double("ar_phi", 0.7);
    sc.events_per_day = rc.get_double("events_per_day", 0.8);
    const std::string start = rc.get_string("start_time", "2025-01-01T00:00:00");
    sc.start_epoch = parse_timestamp(start);

    RawSeries series = synth_generate(sc);
    ensure_directory(out);
    write_flow_csv(out + "/series.csv", series);

    ConfigEcho echo;
    echo.put("command", std::string("synth"));
    echo.put("out", out);
    echo.put("days", static_cast<std::int64_t>(sc.days));
    echo.put("seed", static_cast<std::int64_t>(sc.seed));
    echo.put("noise_sigma", sc.noise_sigma);
    echo.put("ar_phi", sc.ar_phi);
    echo.put("events_per_day", sc.events_per_day);
    echo.put("start_time", start);
    write_provenance(out, echo, {});

    std::cout << "synth: wrote " << series.flow.size() << " rows to " << out << "/series.csv\n";
    return 0;
}

int cmd_prepare(const RunConfig& rc) {
    const std::string input = require_path(rc, "input");
    const std::string out = require_path(rc, "out");
    const int lag = static_cast<int>(rc.get_int("lag", 20));
    const int lead = static_cast<int>(rc.get_int("lead", 5));
    const int factor = static_cast<int>(rc.get_int("aggregate", 0));
    const int max_fill = static_cast<int>(rc.get_int("max_fill", 3));
    const double train_frac = rc.get_double("train_frac", 0.60);
    const double val_frac = rc.get_double("val_frac", 0.15);
    const double test_frac = rc.get_double("test_frac", 0.25);
    const std::uint64_t seed = static_cast<std::uint64_t>(rc.get_int("seed", 42));

    RawSeries raw = load_flow_csv(input);
    std::vector<RawSeries> segments = clean_segments(raw, max_fill);
    std::vector<SeriesPair> pairs;
    for (RawSeries& seg : segments) {
        if (factor > 1) seg = aggregate(seg, factor);
        if (seg.flow.size() >= 2) pairs.push_back(make_series_pair(seg));
    }
    if (pairs.empty()) throw ValueError("prepare: no usable data segments in '" + input + "'");
    WindowedDataset ds = make_windows(pairs, lag, lead);
    apply_split(ds, train_frac, val_frac, test_frac);
    normalize_fit_apply(ds);

    DatasetManifest manifest;
    manifest.lag = lag;
    manifest.lead = lead;
    manifest.aggregate_factor = factor;
    manifest.train_frac = train_frac;
    manifest.val_frac = val_frac;
    manifest.test_frac = test_frac;
    manifest.split = ds.split;
    manifest.norm = ds.norm;
    manifest.source = input;
    manifest.source_hash = fnv1a64_file_hex(input);
    manifest.seed = seed;
    write_dataset(out, ds, manifest);

    ConfigEcho echo;
    echo.put("command", std::string("prepare"));
    echo.put("input", input);
    echo.put("out", out);
    echo.put("lag", static_cast<std::int64_t>(lag));
    echo.put("lead", static_cast<std::int64_t>(lead));
    echo.put("aggregate", static_cast<std::int64_t>(factor));
    echo.put("max_fill", static_cast<std::int64_t>(max_fill));
    echo.put("train_frac", train_frac);
    echo.put("val_frac", val_frac);
    echo.put("test_frac", test_frac);
    echo.put("seed", static_cast<std::int64_t>(seed));
    write_provenance(out, echo, {{input, manifest.source_hash}});

    std::cout << "prepare: " << ds.examples.size() << " examples (" << ds.split.train
              << " train / " << ds.split.val << " val / " << ds.split.test << " test) in "
              << out << "\n";
    return 0;
}

int cmd_train(const RunConfig& rc) {
    const std::string dataset = require_path(rc, "dataset");
    const std::string out = require_path(rc, "out");
    const std::string variant_name = require_path(rc, "variant");
    const ModelVariant variant = variant_from_string(variant_name);
    const std::uint64_t seed = static_cast<std::uint64_t>(rc.get_int("seed", 42));

    WindowedDataset ds = load_dataset(dataset);

    ConfigEcho echo;
    echo.put("command", std::string("train"));
    echo.put("dataset", dataset);
    echo.put("out", out);
    echo.put("variant", std::string(variant_to_string(variant)));
    echo.put("seed", static_cast<std::int64_t>(seed));
    ModelConfig mc = model_config_from(rc, ds, seed, echo);
    TrainConfig tc = train_config_from(rc, seed, echo);

    Model model = Model::build(variant, mc);
    TrainResult result = train(model, ds, tc);

    ensure_directory(out);
    save_model(out + "/model.fcm", result.model);
    write_text_file(out + "/history.csv", history_to_csv(result.history));
    write_provenance(out, echo, {{dataset, hash_dataset_dir(dataset)}});

    std::cout << "train: " << variant_to_string(variant) << " best_epoch "
              << result.history.best_epoch << " best_val_loss "
              << format_double(result.history.best_val_loss) << " -> " << out << "/model.fcm\n";
    return 0;
}

int cmd_grid(const RunConfig& rc) {
    const std::string dataset = require_path(rc, "dataset");
    const std::string out = require_path(rc, "out");
    const ModelVariant variant = variant_from_string(require_path(rc, "variant"));
    const std::uint64_t seed = static_cast<std::uint64_t>(rc.get_int("seed", 42));
    const std::vector<double> lrs = rc.get_double_list("learning_rates", {0.01, 0.1, 1.0});
    const std::vector<int> batches = rc.get_int_list("batch_sizes", {15, 20, 32});
    const int workers = static_cast<int>(rc.get_int("workers", 1));

    WindowedDataset ds = load_dataset(dataset);

    ConfigEcho echo;
    echo.put("command", std::string("grid"));
    echo.put("dataset", dataset);
    echo.put("out", out);
    echo.put("variant", std::string(variant_to_string(variant)));
    echo.put("seed", static_cast<std::int64_t>(seed));
    ModelConfig mc = model_config_from(rc, ds, seed, echo);
    TrainConfig tc = train_config_from(rc, seed, echo);
    {
        std::string lr_text, batch_text;
        for (double v : lrs) lr_text += (lr_text.empty() ? "" : ",") + format_double(v);
        for (int v : batches)
            batch_text += (batch_text.empty() ? "" : ",") + std::to_string(v);
        echo.put("learning_rates", lr_text);
        echo.put("batch_sizes", batch_text);
        echo.put("workers", static_cast<std::int64_t>(workers));
    }

    GridResult grid = grid_search(variant, mc, ds, lrs, batches, tc, workers);

    ensure_directory(out);
    write_text_file(out + "/grid.csv", grid_to_csv(variant, grid));
    write_provenance(out, echo, {{dataset, hash_dataset_dir(dataset)}});

    const GridCell& best = grid.cells[grid.best_index];
    std::cout << "grid: " << grid.cells.size() << " cells; best batch_size "
              << best.batch_size << " learning_rate " << format_double(best.learning_rate)
              << " min_val_loss " << format_double(best.min_val_loss) << " -> " << out
              << "/grid.csv\n";
    return 0;
}

int cmd_eval(const RunConfig& rc) {
    const std::string model_path = require_path(rc, "model");
    const std::string dataset = require_path(rc, "dataset");
    const std::string out = require_path(rc, "out");
    const double percentile = rc.get_double("percentile", 85.0);
    const int eval_batch = static_cast<int>(rc.get_int("eval_batch", 256));

    Model model = load_model(model_path);
    WindowedDataset ds = load_dataset(dataset);
    if (model.config().lag != ds.lag || model.config().lead != ds.lead)
        throw ShapeError("eval: model was trained with lag " +
                         std::to_string(model.config().lag) + "/lead " +
                         std::to_string(model.config().lead) + " but the dataset has lag " +
                         std::to_string(ds.lag) + "/lead " + std::to_string(ds.lead));

    std::vector<PredRow> rows = predict_test_split(model, ds, eval_batch);
    EvalReport report = report_from_predictions(rows, ds.lead, percentile);
    report.mse_norm_overall = split_mse(model, ds, ds.test_begin(), ds.split.test, eval_batch);

    ensure_directory(out);
    write_text_file(out + "/report.txt", report_to_text(report));
    write_text_file(out + "/per_horizon.csv", report_per_horizon_csv(report));
    write_text_file(out + "/predictions.csv", predictions_to_csv(rows));

    ConfigEcho echo;
    echo.put("command", std::string("eval"));
    echo.put("model", model_path);
    echo.put("dataset", dataset);
    echo.put("out", out);
    echo.put("percentile", percentile);
    echo.put("eval_batch", static_cast<std::int64_t>(eval_batch));
    write_provenance(out, echo,
                     {{model_path, fnv1a64_file_hex(model_path)},
                      {dataset, hash_dataset_dir(dataset)}});

    std::cout << "eval: rmse_overall " << format_double(report.rmse_overall)
              << " mape_overall " << format_double(report.mape_overall)
              << " mse_norm_overall " << format_double(report.mse_norm_overall) << " -> "
              << out << "\n";
    return 0;
}

// contiguous example range of one civil day inside a split
SplitRange day_range(const WindowedDataset& ds, const SplitRange& split, std::int64_t day) {
    if (day < 0) return split;
    const std::int64_t first = ds.examples[split.begin].window_time;
    const std::int64_t day_start = (first / 86400) * 86400 + day * 86400;
    const std::int64_t day_end = day_start + 86400;
    std::size_t begin = split.begin + split.count, end = begin;
    for (std::size_t i = split.begin; i < split.begin + split.count; ++i) {
        const std::int64_t t = ds.examples[i].window_time;
        if (t >= day_start && t < day_end) {
            begin = std::min(begin, i);
            end = i + 1;
        }
    }
    if (begin >= end)
        throw ValueError("saliency: no windows on day " + std::to_string(day) +
                         " of the selected split");
    return {begin, end - begin};
}

int cmd_saliency(const RunConfig& rc) {
    const std::string model_path = require_path(rc, "model");
    const std::string dataset = require_path(rc, "dataset");
    const std::string out = require_path(rc, "out");
    const std::string split_name = rc.get_string("split", "test");
    const std::int64_t day = rc.get_int("day", 0);
    const std::string horizons = rc.get_string("horizons", "all");
    const int eval_batch = static_cast<int>(rc.get_int("eval_batch", 256));

    Model model = load_model(model_path);
    WindowedDataset ds = load_dataset(dataset);
    SplitRange range = day_range(ds, select_split(ds, split_name), day);

    ensure_directory(out);
    std::vector<std::string> written;
    if (horizons == "all") {
        for (int h = 1; h <= ds.lead; ++h) {
            auto maps = input_saliency(model, ds, range.begin, range.count, {h}, eval_batch);
            const std::string name = "saliency_h" + std::to_string(h) + ".csv";
            write_text_file(out + "/" + name, saliency_to_csv(maps));
            written.push_back(name);
        }
    } else {
        RunConfig tmp;
        tmp.set("horizons", horizons);
        std::vector<int> hs = tmp.get_int_list("horizons", {});
        auto maps = input_saliency(model, ds, range.begin, range.count, hs, eval_batch);
        std::string name = "saliency_sum";
        for (int h : hs) name += "_h" + std::to_string(h);
        name += ".csv";
        write_text_file(out + "/" + name, saliency_to_csv(maps));
        written.push_back(name);
    }

    ConfigEcho echo;
    echo.put("command", std::string("saliency"));
    echo.put("model", model_path);
    echo.put("dataset", dataset);
    echo.put("out", out);
    echo.put("split", split_name);
    echo.put("day", day);
    echo.put("horizons", horizons);
    echo.put("eval_batch", static_cast<std::int64_t>(eval_batch));
    write_provenance(out, echo,
                     {{model_path, fnv1a64_file_hex(model_path)},
                      {dataset, hash_dataset_dir(dataset)}});

    std::cout << "saliency: " << range.count << " windows, " << written.size()
              << " file(s) -> " << out << "\n";
    return 0;
}

int cmd_features(const RunConfig& rc) {
    const std::string model_path = require_path(rc, "model");
    const std::string dataset = require_path(rc, "dataset");
    const std::string out = require_path(rc, "out");
    const std::string split_name = rc.get_string("split", "test");
    const std::int64_t max_windows = rc.get_int("max_windows", 0);
    const int eval_batch = static_cast<int>(rc.get_int("eval_batch", 256));

    Model model = load_model(model_path);
    WindowedDataset ds = load_dataset(dataset);
    SplitRange range = select_split(ds, split_name);
    if (max_windows > 0 && static_cast<std::size_t>(max_windows) < range.count)
        range.count = static_cast<std::size_t>(max_windows);

    auto [flow, fluct] = extract_features(model, ds, range.begin, range.count, eval_batch);
    const double score = separability_score(flow, fluct);

    ensure_directory(out);
    write_text_file(out + "/features.csv", features_to_csv(flow, fluct));
    {
        std::string text;
        text += "separability_score = " + format_double(score) + "\n";
        text += "rows_per_branch = " + std::to_string(flow.rows()) + "\n";
        text += "dims = " + std::to_string(flow.dims) + "\n";
        write_text_file(out + "/separability.txt", text);
    }

    ConfigEcho echo;
    echo.put("command", std::string("features"));
    echo.put("model", model_path);
    echo.put("dataset", dataset);
    echo.put("out", out);
    echo.put("split", split_name);
    echo.put("max_windows", max_windows);
    echo.put("eval_batch", static_cast<std::int64_t>(eval_batch));
    write_provenance(out, echo,
                     {{model_path, fnv1a64_file_hex(model_path)},
                      {dataset, hash_dataset_dir(dataset)}});

    std::cout << "features: separability_score " << format_double(score) << " over "
              << flow.rows() << " windows -> " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowcast: dual-branch LSTM traffic flow forecasting toolkit"};
    app.require_subcommand(1);

    Args synth_args, prepare_args, train_args, grid_args, eval_args, saliency_args,
        features_args;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic detector series CSV");
    add_keys(synth, synth_args,
             {"out", "days", "seed", "noise_sigma", "ar_phi", "events_per_day", "start_time"});

    CLI::App* prepare = app.add_subcommand(
        "prepare", "clean, difference, window, split, and normalize a detector CSV");
    add_keys(prepare, prepare_args,
             {"input", "out", "lag", "lead", "aggregate", "max_fill", "train_frac", "val_frac",
              "test_frac", "seed"});

    const std::vector<std::string> arch_keys = {
        "lstm1_units", "lstm2_units", "branch_dense_units", "fusion_dense_units",
        "leaky_slope", "attn_dim", "attn_out_dim", "attn_linear_output"};
    const std::vector<std::string> train_keys = {
        "epochs", "batch_size", "learning_rate", "rho", "epsilon", "shuffle_train",
        "eval_batch"};

    CLI::App* train_cmd =
        app.add_subcommand("train", "train one model variant on a prepared dataset");
    {
        std::vector<std::string> keys = {"dataset", "out", "variant", "seed"};
        keys.insert(keys.end(), arch_keys.begin(), arch_keys.end());
        keys.insert(keys.end(), train_keys.begin(), train_keys.end());
        add_keys(train_cmd, train_args, keys);
    }

    CLI::App* grid =
        app.add_subcommand("grid", "grid-search learning rate and batch size for a variant");
    {
        std::vector<std::string> keys = {"dataset", "out",            "variant", "seed",
                                         "learning_rates", "batch_sizes", "workers"};
        keys.insert(keys.end(), arch_keys.begin(), arch_keys.end());
        keys.insert(keys.end(), train_keys.begin(), train_keys.end());
        add_keys(grid, grid_args, keys);
    }

    CLI::App* eval_cmd = app.add_subcommand(
        "eval", "horizon-wise RMSE/MAPE on the test split, overall and congested");
    add_keys(eval_cmd, eval_args, {"model", "dataset", "out", "percentile", "eval_batch"});

    CLI::App* saliency = app.add_subcommand(
        "saliency", "normalized input-gradient maps over a day of windows");
    add_keys(saliency, saliency_args,
             {"model", "dataset", "out", "split", "day", "horizons", "eval_batch"});

    CLI::App* features = app.add_subcommand(
        "features", "pre-concatenation branch features and their separability score");
    add_keys(features, features_args,
             {"model", "dataset", "out", "split", "max_windows", "eval_batch"});

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_args.resolved());
        if (prepare->parsed()) return cmd_prepare(prepare_args.resolved());
        if (train_cmd->parsed()) return cmd_train(train_args.resolved());
        if (grid->parsed()) return cmd_grid(grid_args.resolved());
        if (eval_cmd->parsed()) return cmd_eval(eval_args.resolved());
        if (saliency->parsed()) return cmd_saliency(saliency_args.resolved());
        if (features->parsed()) return cmd_features(features_args.resolved());
    } catch (const ParseError& e) {
        std::cerr << "error [data]: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "error [shape]: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "error [numeric]: " << e.what() << "\n";
        return 5;
    } catch (const ValueError& e) {
        std::cerr << "error [config]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error [io]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
