// Batch front door: synth -> prepare -> train/hypersearch -> predict ->
// evaluate -> regrid -> timeit. Every run writes its resolved configuration
// next to its outputs so artifacts are reproducible from the sidecar file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "updraft/config.hpp"
#include "updraft/dataprep.hpp"
#include "updraft/errors.hpp"
#include "updraft/grid.hpp"
#include "updraft/model.hpp"
#include "updraft/regrid.hpp"
#include "updraft/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace updraft;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write: " + path);
    out << text;
}

void write_resolved_config(const std::string& out_dir, const json& resolved) {
    fs::create_directories(out_dir);
    write_text(out_dir + "/resolved_config.json", resolved.dump(2) + "\n");
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::string token;
    std::istringstream stream(text);
    while (std::getline(stream, token, ','))
        if (!token.empty())
            out.push_back(std::stod(token));
    return out;
}

LevelSpec parse_levels(const std::string& text) {
    // Either "lo:hi:count" or a comma-separated list.
    if (text.find(':') != std::string::npos) {
        double lo, hi;
        std::size_t count;
        if (std::sscanf(text.c_str(), "%lf:%lf:%zu", &lo, &hi, &count) != 3)
            throw ValidationError("levels must be lo:hi:count or a comma list: " + text);
        return LevelSpec::linspace(lo, hi, count);
    }
    LevelSpec spec;
    spec.targets = parse_double_list(text);
    if (spec.targets.empty())
        throw ValidationError("empty level list: " + text);
    return spec;
}

std::pair<std::size_t, std::size_t> parse_patch(const std::string& text) {
    std::size_t h, w;
    if (std::sscanf(text.c_str(), "%zux%zu", &h, &w) != 2)
        throw ValidationError("patch size must look like 32x32: " + text);
    return {h, w};
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n";
    char buf[64];
    for (const auto& row : history) {
        out << row.epoch;
        std::snprintf(buf, sizeof buf, "%.17g", row.train_loss);
        out << "," << buf;
        std::snprintf(buf, sizeof buf, "%.17g", row.val_loss);
        out << "," << buf << "\n";
    }
    return out.str();
}

PatchSample grid_to_sample(const Grid3D& grid, const ScalerParams& scaler) {
    PatchSample sample;
    sample.h = grid.ny;
    sample.w = grid.nx;
    sample.l = grid.nz;
    sample.z_coords = grid.z_coords;
    sample.meta.source_id = grid.name;
    sample.x.resize(grid.size());
    // Missing voxels scale to 0 (no-echo floor of the training data).
    for (std::size_t i = 0; i < grid.size(); ++i)
        sample.x[i] = grid.is_missing(grid.values[i])
                          ? 0.0f
                          : static_cast<float>(scale_value(grid.values[i], scaler));
    sample.y.assign(sample.h * sample.w, 0.0f);
    return sample;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::uint64_t seed = 0;
    std::string out_dir = "synth_out";
    std::size_t count = 8;
    std::size_t ny = 96, nx = 96, nz = 12;
    std::size_t storms_min = 1, storms_max = 4;
    double peak_min = 40.0, peak_max = 65.0;
    double spacing = 3.0;
};

int run_synth(const SynthArgs& args) {
    fs::create_directories(args.out_dir);
    Rng count_rng(args.seed ^ 0x5bd1e995u);
    char name[64];
    for (std::size_t i = 0; i < args.count; ++i) {
        SynthConfig cfg;
        cfg.seed = args.seed + i;
        cfg.ny = args.ny;
        cfg.nx = args.nx;
        cfg.nz = args.nz;
        cfg.peak_dbz_min = args.peak_min;
        cfg.peak_dbz_max = args.peak_max;
        cfg.spacing_km = args.spacing;
        cfg.n_storms =
            args.storms_min + uniform_index(count_rng, args.storms_max - args.storms_min + 1);
        auto [refl, w] = synth_storms(cfg);
        std::snprintf(name, sizeof name, "refl_%04zu.zgrid", i);
        refl.name = name;
        write_grid(refl, args.out_dir + "/" + name);
        std::snprintf(name, sizeof name, "w_%04zu.zgrid", i);
        w.name = name;
        write_grid(w, args.out_dir + "/" + name);
    }
    write_resolved_config(args.out_dir,
                          json{{"subcommand", "synth"},
                               {"seed", args.seed},
                               {"count", args.count},
                               {"ny", args.ny},
                               {"nx", args.nx},
                               {"nz", args.nz},
                               {"storms_min", args.storms_min},
                               {"storms_max", args.storms_max},
                               {"peak_min", args.peak_min},
                               {"peak_max", args.peak_max},
                               {"spacing_km", args.spacing}});
    std::cout << "wrote " << args.count << " grid pairs to " << args.out_dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

struct PrepareArgs {
    std::string in_dir;
    std::string out_dir = "dataset";
    std::string patch = "32x32";
    std::size_t n_train = 512, n_val = 128, n_test = 128;
    double threshold = 10.0;
    std::uint64_t seed = 0;
};

int run_prepare(const PrepareArgs& args) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<std::string> refl_names;
    for (const auto& entry : fs::directory_iterator(args.in_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("refl_", 0) == 0 && name.size() > 5)
            refl_names.push_back(name);
    }
    std::sort(refl_names.begin(), refl_names.end());
    for (const auto& name : refl_names) {
        const std::string w_name = "w_" + name.substr(5);
        const std::string w_path = args.in_dir + "/" + w_name;
        if (!fs::exists(w_path))
            throw ValidationError("missing w grid for " + name);
        pairs.emplace_back(args.in_dir + "/" + name, w_path);
    }
    if (pairs.empty())
        throw ValidationError("no refl_*.zgrid files found in " + args.in_dir);

    PrepareConfig cfg;
    std::tie(cfg.patch_h, cfg.patch_w) = parse_patch(args.patch);
    cfg.n_train = args.n_train;
    cfg.n_val = args.n_val;
    cfg.n_test = args.n_test;
    cfg.convection_threshold = args.threshold;
    cfg.seed = args.seed;

    const SplitManifest manifest = build_dataset(pairs, args.out_dir, cfg);
    write_resolved_config(args.out_dir,
                          json{{"subcommand", "prepare"},
                               {"in", args.in_dir},
                               {"patch", args.patch},
                               {"train", args.n_train},
                               {"val", args.n_val},
                               {"test", args.n_test},
                               {"threshold", args.threshold},
                               {"seed", args.seed},
                               {"scaler",
                                {{"min", manifest.train.scaler.min_dbz},
                                 {"max", manifest.train.scaler.max_dbz}}}});
    std::cout << "dataset written to " << args.out_dir << " (train " << manifest.train.samples.size()
              << ", val " << manifest.val.samples.size() << ", test "
              << manifest.test.samples.size() << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string dataset;
    std::string out_dir = "run";
    std::string config_path;
    std::string mode = "levels_2d";
    // -1 sentinels mean "not set on the command line".
    double lr = -1.0;
    long epochs = -1, batch = -1, patience = -1, depth = -1, filters = -1, kernel = -1;
    std::string skip_style, optimizer;
    int batch_norm = -1;
    double l2 = -1.0, weight = -1.0, weight_threshold = -1.0;
    long seed = -1;
};

std::pair<ModelSpec, TrainConfig> resolve_train_config(const TrainArgs& args,
                                                       std::size_t in_levels) {
    ModelSpec spec;
    TrainConfig cfg;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in)
            throw IoError("cannot open config: " + args.config_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError("config is not valid JSON (" + std::string(e.what()) +
                              "): " + args.config_path);
        }
        if (j.contains("model"))
            spec = model_spec_from_json(j["model"]);
        if (j.contains("train"))
            cfg = train_config_from_json(j["train"]);
    }
    spec.input_mode = input_mode_from_string(args.mode);
    spec.in_levels = in_levels;
    if (args.depth >= 0)
        spec.depth = static_cast<std::size_t>(args.depth);
    if (args.filters >= 0)
        spec.base_filters = static_cast<std::size_t>(args.filters);
    if (args.kernel >= 0)
        spec.kernel_size = static_cast<std::size_t>(args.kernel);
    if (!args.skip_style.empty())
        spec.skip_style = skip_style_from_string(args.skip_style);
    if (args.batch_norm >= 0)
        spec.batch_norm = args.batch_norm != 0;
    if (args.l2 >= 0.0)
        spec.l2_reg = args.l2;
    if (!args.optimizer.empty())
        cfg.optimizer = optimizer_from_string(args.optimizer);
    if (args.lr > 0.0)
        cfg.learning_rate = args.lr;
    if (args.epochs >= 0)
        cfg.max_epochs = static_cast<std::size_t>(args.epochs);
    if (args.batch >= 0)
        cfg.batch_size = static_cast<std::size_t>(args.batch);
    if (args.patience >= 0)
        cfg.patience = static_cast<std::size_t>(args.patience);
    if (args.weight >= 0.0)
        cfg.loss.weight_policy.weight_above = args.weight;
    if (args.weight_threshold >= 0.0)
        cfg.loss.weight_policy.threshold = args.weight_threshold;
    if (args.seed >= 0)
        cfg.seed = static_cast<std::uint64_t>(args.seed);
    validate_spec(spec);
    return {spec, cfg};
}

int run_train(const TrainArgs& args) {
    DatasetReader train_reader(args.dataset, "train");
    DatasetReader val_reader(args.dataset, "val");
    const PatchSample probe = train_reader.load(0);

    auto [spec, cfg] = resolve_train_config(args, probe.l);

    fs::create_directories(args.out_dir);
    write_resolved_config(args.out_dir, json{{"subcommand", "train"},
                                             {"dataset", args.dataset},
                                             {"model", to_json(spec)},
                                             {"train", to_json(cfg)}});

    Network net(spec, cfg.seed);
    ReaderSource train_src(train_reader);
    ReaderSource val_src(val_reader);
    const TrainResult result = train(net, train_src, val_src, cfg);
    write_text(args.out_dir + "/history.csv", history_csv(result.history));

    const MedianEval val_eval = evaluate_median(net, val_src);

    Checkpoint ckpt;
    ckpt.spec = spec;
    ckpt.state = result.best_state;
    ckpt.scaler = train_reader.scaler();
    ckpt.val_loss = result.best_val_loss;
    ckpt.val_r2 = val_eval.r2;
    save_checkpoint(ckpt, args.out_dir + "/checkpoint.ckpt");

    std::cout << "trained " << result.history.size() << " epochs (best epoch "
              << result.best_epoch << ", val loss " << result.best_val_loss << ", val R2 "
              << val_eval.r2 << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// hypersearch
// ---------------------------------------------------------------------------

struct HyperArgs {
    std::string dataset;
    std::string out_dir = "search";
    std::string space_path;
    std::string mode = "levels_2d";
    std::size_t n = 8;
    std::uint64_t seed = 0;
    std::size_t max_epochs = 40;
    std::size_t threads = 1;
};

int run_hypersearch(const HyperArgs& args) {
    DatasetReader train_reader(args.dataset, "train");
    DatasetReader val_reader(args.dataset, "val");
    const PatchSample probe = train_reader.load(0);

    HyperSpace space;
    if (!args.space_path.empty()) {
        std::ifstream in(args.space_path);
        if (!in)
            throw IoError("cannot open space file: " + args.space_path);
        json j;
        in >> j;
        space = hyper_space_from_json(j);
    }

    ModelSpec base_spec;
    base_spec.input_mode = input_mode_from_string(args.mode);
    base_spec.in_levels = probe.l;
    TrainConfig base_cfg;
    base_cfg.max_epochs = args.max_epochs;
    base_cfg.seed = args.seed;

    const std::vector<HyperDraw> draws =
        sample_hyperparameters(space, args.n, args.seed, base_spec, base_cfg);

    fs::create_directories(args.out_dir);
    write_resolved_config(args.out_dir, json{{"subcommand", "hypersearch"},
                                             {"dataset", args.dataset},
                                             {"mode", args.mode},
                                             {"n", args.n},
                                             {"seed", args.seed},
                                             {"max_epochs", args.max_epochs},
                                             {"space", to_json(space)}});

    struct RunOutcome {
        bool ok = false;
        std::string error;
        double val_r2 = 0.0;
        double val_loss = 0.0;
        std::size_t epochs = 0;
        ModelState state;
    };
    std::vector<RunOutcome> outcomes(draws.size());

    auto run_one = [&](std::size_t i) {
        RunOutcome& outcome = outcomes[i];
        try {
            Network net(draws[i].spec, draws[i].cfg.seed + i);
            ReaderSource train_src(train_reader);
            ReaderSource val_src(val_reader);
            const TrainResult result = train(net, train_src, val_src, draws[i].cfg);
            const MedianEval val_eval = evaluate_median(net, val_src);
            outcome.ok = true;
            outcome.val_r2 = val_eval.r2;
            outcome.val_loss = result.best_val_loss;
            outcome.epochs = result.history.size();
            outcome.state = result.best_state;
        } catch (const std::exception& e) {
            outcome.error = e.what();
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, args.threads);
    for (std::size_t start = 0; start < draws.size(); start += workers) {
        std::vector<std::future<void>> futures;
        const std::size_t stop = std::min(start + workers, draws.size());
        for (std::size_t i = start; i < stop; ++i)
            futures.push_back(std::async(std::launch::async, run_one, i));
        for (auto& f : futures)
            f.get();
    }

    json results = json::array();
    std::size_t best = draws.size();
    for (std::size_t i = 0; i < draws.size(); ++i) {
        json row{{"draw", i},
                 {"model", to_json(draws[i].spec)},
                 {"train", to_json(draws[i].cfg)}};
        if (outcomes[i].ok) {
            row["val_r2"] = outcomes[i].val_r2;
            row["val_loss"] = outcomes[i].val_loss;
            row["epochs"] = outcomes[i].epochs;
            if (best == draws.size() || outcomes[i].val_r2 > outcomes[best].val_r2)
                best = i;
        } else {
            row["error"] = outcomes[i].error;
        }
        results.push_back(std::move(row));
        std::cout << "draw " << i << ": "
                  << (outcomes[i].ok ? "val R2 " + std::to_string(outcomes[i].val_r2)
                                     : "failed: " + outcomes[i].error)
                  << "\n";
    }
    if (best == draws.size())
        throw std::runtime_error("every hyperparameter draw failed");

    json summary{{"results", results}, {"best_draw", best}, {"best_val_r2", outcomes[best].val_r2}};
    write_text(args.out_dir + "/results.json", summary.dump(2) + "\n");

    Checkpoint ckpt;
    ckpt.spec = draws[best].spec;
    ckpt.state = outcomes[best].state;
    ckpt.scaler = train_reader.scaler();
    ckpt.val_loss = outcomes[best].val_loss;
    ckpt.val_r2 = outcomes[best].val_r2;
    save_checkpoint(ckpt, args.out_dir + "/best_checkpoint.ckpt");

    std::cout << "best draw " << best << " (val R2 " << outcomes[best].val_r2 << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string model_path;
    std::string in_path;
    std::string out_dir = "predictions";
    std::string quantiles = "0.5,0.8,0.95";
    std::string exceed = "";
};

int run_predict(const PredictArgs& args) {
    const Checkpoint ckpt = load_checkpoint(args.model_path);
    Network net(ckpt.spec, 0);
    net.restore(ckpt.state);

    const Grid3D grid = read_grid(args.in_path);
    const PatchSample sample = grid_to_sample(grid, ckpt.scaler);

    PredictProducts products;
    products.quantiles = parse_double_list(args.quantiles);
    products.exceedance_thresholds = parse_double_list(args.exceed);

    const std::vector<const PatchSample*> batch{&sample};
    const Tensor input = make_input(ckpt.spec, batch);
    const PredictionMaps maps = predict(net, input, products);

    fs::create_directories(args.out_dir);
    auto to_float = [](const std::vector<double>& v) {
        return std::vector<float>(v.begin(), v.end());
    };
    write_grid(make_level_grid(grid, to_float(maps.median), "w_median", "m/s"),
               args.out_dir + "/median.zgrid");
    char name[64];
    for (const auto& [q, map] : maps.quantile_maps) {
        std::snprintf(name, sizeof name, "quantile_%02d.zgrid", static_cast<int>(q * 100.0 + 0.5));
        write_grid(make_level_grid(grid, to_float(map), "w_quantile", "m/s"),
                   args.out_dir + "/" + name);
    }
    for (const auto& [v, map] : maps.exceedance_maps) {
        std::snprintf(name, sizeof name, "exceed_%g.zgrid", v);
        write_grid(make_level_grid(grid, to_float(map), "p_exceed", "probability"),
                   args.out_dir + "/" + name);
    }
    // Per-pixel distribution parameters so the full predicted distributions
    // can be interrogated downstream.
    std::vector<float> mu(maps.params.params.size()), sigma(mu.size()), gamma(mu.size()),
        tau(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        mu[i] = static_cast<float>(maps.params.params[i].mu);
        sigma[i] = static_cast<float>(maps.params.params[i].sigma);
        gamma[i] = static_cast<float>(maps.params.params[i].gamma);
        tau[i] = static_cast<float>(maps.params.params[i].tau);
    }
    write_grid(make_level_grid(grid, mu, "shash_mu", "m/s"), args.out_dir + "/param_mu.zgrid");
    write_grid(make_level_grid(grid, sigma, "shash_sigma", "m/s"),
               args.out_dir + "/param_sigma.zgrid");
    write_grid(make_level_grid(grid, gamma, "shash_gamma", "1"),
               args.out_dir + "/param_gamma.zgrid");
    write_grid(make_level_grid(grid, tau, "shash_tau", "1"), args.out_dir + "/param_tau.zgrid");

    write_resolved_config(args.out_dir, json{{"subcommand", "predict"},
                                             {"model", args.model_path},
                                             {"in", args.in_path},
                                             {"quantiles", args.quantiles},
                                             {"exceed", args.exceed}});
    std::cout << "prediction maps written to " << args.out_dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string model_path;
    std::string dataset;
    std::string split = "test";
    std::string thresholds = "5,10,15";
    std::string out_path = "report.json";
    std::string csv_path;
    bool baseline = false;
};

int run_evaluate(const EvaluateArgs& args) {
    const Checkpoint ckpt = load_checkpoint(args.model_path);
    Network net(ckpt.spec, 0);
    net.restore(ckpt.state);

    DatasetReader reader(args.dataset, args.split);
    ReaderSource source(reader);
    const std::vector<double> thresholds = parse_double_list(args.thresholds);

    const MedianEval eval = evaluate_median(net, source);
    EvalPairs pairs;
    pairs.truth = eval.truth;
    pairs.pred = eval.median;
    pairs.params = eval.params;

    EvalReport report;
    report.rmse = rmse(pairs);
    report.r2 = eval.r2;
    const std::vector<double> pit_values = pit(pairs);
    report.pit_hist = pit_histogram(pit_values);
    report.pitd = pitd(report.pit_hist);
    report.iqrr = iqr_rate(pairs);
    for (double t : thresholds) {
        try {
            report.crmse.emplace(t, crmse(pairs, t));
        } catch (const UndefinedMetricError&) {
        }
        try {
            report.iou.emplace(t, iou(pairs.truth, pairs.pred, t));
        } catch (const UndefinedMetricError&) {
        }
    }

    // Per-sample series (the sample index stands in for analysis time).
    const std::size_t plane = reader.load(0).y.size();
    for (std::size_t i = 0; i * plane < eval.truth.size(); ++i) {
        SeriesRow row;
        row.sample = i;
        const std::vector<double> truth_map(eval.truth.begin() + static_cast<std::ptrdiff_t>(i * plane),
                                            eval.truth.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
        const std::vector<double> pred_map(eval.median.begin() + static_cast<std::ptrdiff_t>(i * plane),
                                           eval.median.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
        for (double t : thresholds) {
            try {
                row.iou.emplace(t, iou(truth_map, pred_map, t));
            } catch (const UndefinedMetricError&) {
            }
            row.area_truth.emplace(t, area_fraction(truth_map, t));
            row.area_pred.emplace(t, area_fraction(pred_map, t));
        }
        report.series.push_back(std::move(row));
    }

    if (args.baseline) {
        // Composite reflectivity in dBZ from the archived (scaled) patches.
        std::vector<double> composite;
        composite.reserve(eval.truth.size());
        for (std::size_t i = 0; i < reader.size(); ++i) {
            const PatchSample s = reader.load(i);
            const std::size_t p = s.h * s.w;
            for (std::size_t px = 0; px < p; ++px) {
                float best = s.x[px];
                for (std::size_t k = 1; k < s.l; ++k)
                    best = std::max(best, s.x[k * p + px]);
                composite.push_back(unscale_value(best, reader.scaler()));
            }
        }
        const LinregModel model = fit_linreg(composite, eval.truth);
        std::vector<double> pred(composite.size());
        for (std::size_t i = 0; i < composite.size(); ++i)
            pred[i] = linreg_predict(model, composite[i]);
        report.has_baseline = true;
        report.baseline_r2 = r_squared(eval.truth, pred);
    }

    write_text(args.out_path, report.to_json());
    if (!args.csv_path.empty())
        write_text(args.csv_path, report.series_csv());

    std::cout << "evaluation report written to " << args.out_path << " (R2 " << report.r2
              << ", RMSE " << report.rmse << ", PITD " << report.pitd << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// regrid
// ---------------------------------------------------------------------------

struct RegridArgs {
    std::string in_path;
    std::string out_path;
    std::string terrain_path;
    std::string levels = "0.5:17:24";
    long block = -1;
    std::string dst_coords_path;
};

int run_regrid(const RegridArgs& args) {
    Grid3D grid = read_grid(args.in_path);

    if (!args.dst_coords_path.empty()) {
        std::ifstream in(args.dst_coords_path);
        if (!in)
            throw IoError("cannot open coords file: " + args.dst_coords_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError("coords file is not valid JSON (" + std::string(e.what()) +
                              "): " + args.dst_coords_path);
        }
        const auto dst_y = j.at("y_coords").get<std::vector<double>>();
        const auto dst_x = j.at("x_coords").get<std::vector<double>>();
        grid = nn_resample(grid, dst_y, dst_x);
    }
    if (args.block > 0)
        grid = block_mean(grid, static_cast<std::size_t>(args.block));
    if (!args.terrain_path.empty()) {
        const TerrainGrid terrain = read_terrain(args.terrain_path);
        grid = to_agl(grid, terrain, parse_levels(args.levels));
    }
    write_grid(grid, args.out_path);
    std::cout << "regridded " << args.in_path << " -> " << args.out_path << " (" << grid.nz
              << "x" << grid.ny << "x" << grid.nx << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// timeit
// ---------------------------------------------------------------------------

struct TimeitArgs {
    std::string model_path;
    std::size_t batch = 32;
    std::size_t batches = 30;
    std::string patch = "32x32";
    std::string out_path = "timings.json";
    std::uint64_t seed = 0;
};

int run_timeit(const TimeitArgs& args) {
    const Checkpoint ckpt = load_checkpoint(args.model_path);
    Network net(ckpt.spec, 0);
    net.restore(ckpt.state);

    auto [h, w] = parse_patch(args.patch);
    std::vector<std::size_t> shape;
    if (ckpt.spec.input_mode == InputMode::Volume3D)
        shape = {args.batch, 1, ckpt.spec.in_levels, h, w};
    else if (ckpt.spec.input_mode == InputMode::Levels2D)
        shape = {args.batch, ckpt.spec.in_levels, h, w};
    else
        shape = {args.batch, 1, h, w};

    Tensor input(shape);
    Rng rng(args.seed);
    for (double& v : input.data)
        v = uniform01(rng);

    // Only the forward pass is timed; input assembly stays outside.
    const TimingReport report =
        timeit([&] { net.forward(input, false); }, args.batches, args.batch);

    json j{{"batch_size", report.batch_size},
           {"n_batches", report.per_batch_ms.size()},
           {"per_batch_ms", report.per_batch_ms},
           {"mean_ms", report.mean_ms},
           {"std_ms", report.std_ms},
           {"param_count", net.param_count()}};
    write_text(args.out_path, j.dump(2) + "\n");
    std::cout << "mean " << report.mean_ms << " ms, std " << report.std_ms << " ms over "
              << report.per_batch_ms.size() << " batches of " << report.batch_size << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"radar-reflectivity -> maximum-updraft retrieval toolkit"};
    app.require_subcommand(1);

    std::size_t threads = 1;
    app.add_option("--threads", threads, "parallel worker cap (hypersearch draws)");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate synthetic storm grid pairs");
    synth->add_option("--seed", synth_args.seed, "base RNG seed");
    synth->add_option("--out", synth_args.out_dir, "output directory")->required();
    synth->add_option("--count", synth_args.count, "number of grid pairs");
    synth->add_option("--ny", synth_args.ny, "grid rows");
    synth->add_option("--nx", synth_args.nx, "grid cols");
    synth->add_option("--nz", synth_args.nz, "vertical levels");
    synth->add_option("--storms-min", synth_args.storms_min, "min storms per grid");
    synth->add_option("--storms-max", synth_args.storms_max, "max storms per grid");
    synth->add_option("--peak-min", synth_args.peak_min, "min storm peak dBZ");
    synth->add_option("--peak-max", synth_args.peak_max, "max storm peak dBZ");
    synth->add_option("--spacing", synth_args.spacing, "horizontal spacing, km");

    PrepareArgs prepare_args;
    auto* prepare = app.add_subcommand("prepare", "slice/filter/scale/quantize a dataset");
    prepare->add_option("--in", prepare_args.in_dir, "directory of refl_*/w_* grids")->required();
    prepare->add_option("--out", prepare_args.out_dir, "dataset output directory")->required();
    prepare->add_option("--patch", prepare_args.patch, "patch size HxW");
    prepare->add_option("--train", prepare_args.n_train, "training sample count");
    prepare->add_option("--val", prepare_args.n_val, "validation sample count");
    prepare->add_option("--test", prepare_args.n_test, "test sample count");
    prepare->add_option("--threshold", prepare_args.threshold, "convection filter m/s");
    prepare->add_option("--seed", prepare_args.seed, "RNG seed");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train an encoder-decoder model");
    train_cmd->add_option("--dataset", train_args.dataset, "dataset directory")->required();
    train_cmd->add_option("--out", train_args.out_dir, "run output directory")->required();
    train_cmd->add_option("--config", train_args.config_path, "JSON config file");
    train_cmd->add_option("--mode", train_args.mode, "composite_2d | levels_2d | volume_3d");
    train_cmd->add_option("--lr", train_args.lr, "learning rate");
    train_cmd->add_option("--epochs", train_args.epochs, "max epochs");
    train_cmd->add_option("--batch", train_args.batch, "batch size");
    train_cmd->add_option("--patience", train_args.patience, "early stop patience");
    train_cmd->add_option("--depth", train_args.depth, "pooling levels 1-3");
    train_cmd->add_option("--filters", train_args.filters, "base filter count");
    train_cmd->add_option("--kernel", train_args.kernel, "conv kernel size (odd)");
    train_cmd->add_option("--skip-style", train_args.skip_style, "unet | unet3plus");
    train_cmd->add_option("--batch-norm", train_args.batch_norm, "0 or 1");
    train_cmd->add_option("--l2", train_args.l2, "kernel L2 coefficient");
    train_cmd->add_option("--optimizer", train_args.optimizer, "adam | sgd");
    train_cmd->add_option("--weight", train_args.weight, "loss weight above threshold");
    train_cmd->add_option("--weight-threshold", train_args.weight_threshold,
                          "loss weighting threshold, m/s");
    train_cmd->add_option("--seed", train_args.seed, "RNG seed");

    HyperArgs hyper_args;
    auto* hyper = app.add_subcommand("hypersearch", "random hyperparameter search");
    hyper->add_option("--dataset", hyper_args.dataset, "dataset directory")->required();
    hyper->add_option("--out", hyper_args.out_dir, "search output directory")->required();
    hyper->add_option("--space", hyper_args.space_path, "JSON candidate lists");
    hyper->add_option("--mode", hyper_args.mode, "experiment input mode");
    hyper->add_option("--n", hyper_args.n, "number of random configurations");
    hyper->add_option("--seed", hyper_args.seed, "RNG seed");
    hyper->add_option("--epochs", hyper_args.max_epochs, "max epochs per draw");

    PredictArgs predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "emit median/quantile/exceedance maps");
    predict_cmd->add_option("--model", predict_args.model_path, "checkpoint path")->required();
    predict_cmd->add_option("--in", predict_args.in_path, "input reflectivity ZGRID")->required();
    predict_cmd->add_option("--out", predict_args.out_dir, "output directory")->required();
    predict_cmd->add_option("--quantiles", predict_args.quantiles, "comma list in (0,1)");
    predict_cmd->add_option("--exceed", predict_args.exceed, "exceedance thresholds, m/s");

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "deterministic + probabilistic verification");
    eval_cmd->add_option("--model", eval_args.model_path, "checkpoint path")->required();
    eval_cmd->add_option("--dataset", eval_args.dataset, "dataset directory")->required();
    eval_cmd->add_option("--split", eval_args.split, "train | val | test");
    eval_cmd->add_option("--thresholds", eval_args.thresholds, "comma list, m/s");
    eval_cmd->add_option("--out", eval_args.out_path, "report JSON path");
    eval_cmd->add_option("--csv", eval_args.csv_path, "optional time-series CSV path");
    eval_cmd->add_flag("--baseline", eval_args.baseline,
                       "also fit/evaluate the composite linear baseline");

    RegridArgs regrid_args;
    auto* regrid_cmd = app.add_subcommand(
        "regrid", "nearest-neighbor resample / block mean / MSL->AGL (coordinate units as given)");
    regrid_cmd->add_option("--in", regrid_args.in_path, "input ZGRID")->required();
    regrid_cmd->add_option("--out", regrid_args.out_path, "output ZGRID")->required();
    regrid_cmd->add_option("--terrain", regrid_args.terrain_path, "terrain ZGRID (enables AGL)");
    regrid_cmd->add_option("--levels", regrid_args.levels, "lo:hi:count or comma list, km AGL");
    regrid_cmd->add_option("--block-mean", regrid_args.block, "coarsening factor");
    regrid_cmd->add_option("--dst-coords", regrid_args.dst_coords_path,
                           "JSON {y_coords, x_coords} for nearest-neighbor resample");

    TimeitArgs timeit_args;
    auto* timeit_cmd = app.add_subcommand("timeit", "inference timing protocol");
    timeit_cmd->add_option("--model", timeit_args.model_path, "checkpoint path")->required();
    timeit_cmd->add_option("--batch", timeit_args.batch, "batch size");
    timeit_cmd->add_option("--batches", timeit_args.batches, "number of timed batches");
    timeit_cmd->add_option("--patch", timeit_args.patch, "input patch size HxW");
    timeit_cmd->add_option("--out", timeit_args.out_path, "timings JSON path");
    timeit_cmd->add_option("--seed", timeit_args.seed, "input RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed())
            return run_synth(synth_args);
        if (prepare->parsed())
            return run_prepare(prepare_args);
        if (train_cmd->parsed())
            return run_train(train_args);
        if (hyper->parsed()) {
            hyper_args.threads = threads;
            return run_hypersearch(hyper_args);
        }
        if (predict_cmd->parsed())
            return run_predict(predict_args);
        if (eval_cmd->parsed())
            return run_evaluate(eval_args);
        if (regrid_cmd->parsed())
            return run_regrid(regrid_args);
        if (timeit_cmd->parsed())
            return run_timeit(timeit_args);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
