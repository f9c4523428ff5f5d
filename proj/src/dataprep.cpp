#include "updraft/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"

#include "updraft/errors.hpp"
#include "updraft/half.hpp"
#include "updraft/rng.hpp"

namespace updraft {

using nlohmann::json;

namespace {

struct StormParams {
    double yc, xc;        // center, km
    double ry, rx;        // horizontal radii, km
    double angle;         // footprint rotation, rad
    double peak_dbz;
    double echo_top_km;
    double w_max;         // column-max updraft at the core, m/s
};

// Quadratic form of the rotated anisotropic footprint; exp(-q) is the shape.
double footprint_q(const StormParams& s, double y, double x) {
    const double dy = y - s.yc;
    const double dx = x - s.xc;
    const double ca = std::cos(s.angle);
    const double sa = std::sin(s.angle);
    const double u = ca * dx + sa * dy;
    const double v = -sa * dx + ca * dy;
    return 0.5 * (u * u / (s.rx * s.rx) + v * v / (s.ry * s.ry));
}

} // namespace

std::pair<Grid3D, Grid3D> synth_storms(const SynthConfig& cfg) {
    Rng rng(cfg.seed);

    Grid3D refl;
    refl.name = "reflectivity";
    refl.units = "dBZ";
    refl.nz = cfg.nz;
    refl.ny = cfg.ny;
    refl.nx = cfg.nx;
    refl.height_datum = HeightDatum::AGL;

    if (cfg.nz == 0 || cfg.ny == 0 || cfg.nx == 0)
        throw ValidationError("synth domain dims must be positive");

    refl.z_coords.resize(cfg.nz);
    if (cfg.nz == 1) {
        refl.z_coords[0] = cfg.z_bottom_km;
    } else {
        const double dz = (cfg.z_top_km - cfg.z_bottom_km) / static_cast<double>(cfg.nz - 1);
        for (std::size_t k = 0; k < cfg.nz; ++k)
            refl.z_coords[k] = cfg.z_bottom_km + dz * static_cast<double>(k);
    }
    refl.y_coords.resize(cfg.ny);
    for (std::size_t i = 0; i < cfg.ny; ++i)
        refl.y_coords[i] = cfg.spacing_km * static_cast<double>(i);
    refl.x_coords.resize(cfg.nx);
    for (std::size_t i = 0; i < cfg.nx; ++i)
        refl.x_coords[i] = cfg.spacing_km * static_cast<double>(i);

    Grid3D w = refl;
    w.name = "w";
    w.units = "m/s";

    // Storm parameters come off the engine in a fixed order so a seed pins
    // the whole scene.
    std::vector<StormParams> storms(cfg.n_storms);
    const double y_extent = refl.y_coords.back();
    const double x_extent = refl.x_coords.back();
    for (auto& s : storms) {
        s.yc = uniform(rng, 0.15 * y_extent, 0.85 * y_extent);
        s.xc = uniform(rng, 0.15 * x_extent, 0.85 * x_extent);
        s.ry = uniform(rng, 6.0, 16.0);
        s.rx = uniform(rng, 6.0, 16.0);
        s.angle = uniform(rng, 0.0, 3.14159265358979323846);
        s.peak_dbz = uniform(rng, cfg.peak_dbz_min, cfg.peak_dbz_max);
        s.echo_top_km = uniform(rng, cfg.echo_top_min_km, cfg.echo_top_max_km);
        // Stronger storms are taller and brighter; the noise keeps the link
        // statistical rather than exact.
        s.w_max = 1.3 * (s.echo_top_km - cfg.z_bottom_km) +
                  0.3 * (s.peak_dbz - cfg.peak_dbz_min) + normal01(rng);
        if (s.w_max < 1.0)
            s.w_max = 1.0;
    }

    refl.values.assign(refl.size(), 0.0f);
    w.values.assign(w.size(), 0.0f);

    const std::size_t plane = cfg.ny * cfg.nx;
    for (std::size_t k = 0; k < cfg.nz; ++k) {
        const double z = refl.z_coords[k];
        for (std::size_t iy = 0; iy < cfg.ny; ++iy) {
            for (std::size_t ix = 0; ix < cfg.nx; ++ix) {
                double best_refl = -std::numeric_limits<double>::infinity();
                double best_w = 0.0;
                for (const auto& s : storms) {
                    const double q = footprint_q(s, refl.y_coords[iy], refl.x_coords[ix]);
                    if (q > 40.0)
                        continue;

                    // Vertical envelope: core at 0.3*echo_top, sharp decay
                    // above the echo top.
                    const double zc = 0.3 * s.echo_top_km;
                    const double sz = 0.4 * s.echo_top_km;
                    double v = std::exp(-0.5 * (z - zc) * (z - zc) / (sz * sz));
                    if (z > s.echo_top_km) {
                        const double over = (z - s.echo_top_km) / 0.4;
                        v *= std::exp(-over * over);
                    }
                    const double contrib = s.peak_dbz * std::exp(-q) * v;
                    if (contrib > best_refl)
                        best_refl = contrib;

                    // Updraft column: narrower footprint, sine profile
                    // peaking mid-level and vanishing above the echo top.
                    if (z <= s.echo_top_km) {
                        const double frac =
                            (z - cfg.z_bottom_km) / (s.echo_top_km - cfg.z_bottom_km);
                        const double prof =
                            frac <= 0.0 ? 0.0 : std::sin(3.14159265358979323846 * frac);
                        const double wv = s.w_max * std::exp(-q / 0.49) * prof;
                        if (wv > best_w)
                            best_w = wv;
                    }
                }
                const std::size_t idx = k * plane + iy * cfg.nx + ix;
                refl.values[idx] = best_refl >= 1.0 ? static_cast<float>(best_refl)
                                                    : std::numeric_limits<float>::quiet_NaN();
                w.values[idx] = static_cast<float>(best_w);
            }
        }
    }

    // No-echo voxels get the quiet background; weak w noise everywhere.
    for (std::size_t idx = 0; idx < refl.size(); ++idx) {
        if (std::isnan(refl.values[idx]))
            refl.values[idx] = static_cast<float>(-10.0 + 2.0 * (uniform01(rng) - 0.5));
        w.values[idx] += static_cast<float>(0.05 * normal01(rng));
    }

    return {std::move(refl), std::move(w)};
}

PatchSample slice_patch(const Grid3D& refl, const Grid3D& w, std::size_t origin_y,
                        std::size_t origin_x, std::size_t h, std::size_t ww) {
    validate_grid(refl);
    validate_grid(w);
    if (refl.nz != w.nz || refl.ny != w.ny || refl.nx != w.nx ||
        refl.y_coords != w.y_coords || refl.x_coords != w.x_coords)
        throw ValidationError("reflectivity and w grids are not co-registered");
    if (h == 0 || ww == 0)
        throw ValidationError("patch size must be positive");
    if (origin_y + h > refl.ny || origin_x + ww > refl.nx)
        throw ValidationError("patch slice out of domain bounds");

    PatchSample sample;
    sample.h = h;
    sample.w = ww;
    sample.l = refl.nz;
    sample.z_coords = refl.z_coords;
    sample.meta.source_id = refl.name;
    sample.meta.origin_y = origin_y;
    sample.meta.origin_x = origin_x;

    sample.x.resize(sample.l * h * ww);
    const std::size_t plane = refl.ny * refl.nx;
    for (std::size_t k = 0; k < refl.nz; ++k)
        for (std::size_t iy = 0; iy < h; ++iy)
            for (std::size_t ix = 0; ix < ww; ++ix)
                sample.x[(k * h + iy) * ww + ix] =
                    refl.values[k * plane + (origin_y + iy) * refl.nx + (origin_x + ix)];

    sample.y.assign(h * ww, 0.0f);
    for (std::size_t iy = 0; iy < h; ++iy) {
        for (std::size_t ix = 0; ix < ww; ++ix) {
            float best = -std::numeric_limits<float>::infinity();
            bool any = false;
            for (std::size_t k = 0; k < w.nz; ++k) {
                const float v = w.values[k * plane + (origin_y + iy) * w.nx + (origin_x + ix)];
                if (w.is_missing(v))
                    continue;
                any = true;
                if (v > best)
                    best = v;
            }
            if (!any)
                throw ValidationError("updraft column entirely missing inside slice");
            sample.y[iy * ww + ix] = best;
        }
    }
    return sample;
}

bool convection_filter(const PatchSample& sample, double threshold) {
    for (float v : sample.y)
        if (v >= threshold)
            return true;
    return false;
}

ScalerParams fit_scaler(const std::vector<PatchSample>& train_samples,
                        const std::string& dataset_id) {
    if (train_samples.empty())
        throw ValidationError("scaler needs at least one training sample");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : train_samples) {
        for (float v : s.x) {
            if (v < lo)
                lo = v;
            if (v > hi)
                hi = v;
        }
    }
    if (!(hi > lo))
        throw ValidationError("constant training reflectivity: min-max scaler undefined");
    return ScalerParams{lo, hi, dataset_id};
}

double scale_value(double v, const ScalerParams& s) {
    const double t = (v - s.min_dbz) / (s.max_dbz - s.min_dbz);
    return std::clamp(t, 0.0, 1.0);
}

double unscale_value(double v, const ScalerParams& s) {
    return s.min_dbz + v * (s.max_dbz - s.min_dbz);
}

void apply_scaler(PatchSample& sample, const ScalerParams& s) {
    if (!(s.max_dbz > s.min_dbz))
        throw ValidationError("scaler max must exceed min");
    for (float& v : sample.x)
        v = static_cast<float>(scale_value(v, s));
}

void quantize_f16(PatchSample& sample) {
    for (float v : sample.x) {
        if (!std::isfinite(v))
            throw ValidationError("non-finite reflectivity voxel before quantization");
        if (v < 0.0f || v > 1.0f)
            throw ValidationError("scaled reflectivity outside [0,1] before quantization");
    }
    for (float v : sample.y) {
        if (!std::isfinite(v) || std::fabs(v) > 65504.0f)
            throw ValidationError("label outside half-precision range");
    }
    for (float& v : sample.x)
        v = f16_to_f32(f32_to_f16(v));
    for (float& v : sample.y)
        v = f16_to_f32(f32_to_f16(v));
}

void check_disjoint(const SplitManifest& splits) {
    auto keys = [](const DatasetManifest& m) {
        std::set<std::string> out;
        for (const auto& e : m.samples)
            out.insert(e.source_id + "@" + std::to_string(e.origin_y) + "," +
                       std::to_string(e.origin_x));
        return out;
    };
    const std::set<std::string> train = keys(splits.train);
    const std::set<std::string> val = keys(splits.val);
    const std::set<std::string> test = keys(splits.test);
    auto overlap = [](const std::set<std::string>& a, const std::set<std::string>& b,
                      const char* names) {
        for (const auto& k : a)
            if (b.count(k))
                throw ValidationError(std::string("splits share a sample (") + names + "): " + k);
    };
    overlap(train, val, "train/val");
    overlap(train, test, "train/test");
    overlap(val, test, "val/test");
}

namespace {

Grid3D patch_x_grid(const PatchSample& sample) {
    Grid3D g;
    g.name = sample.meta.source_id;
    g.units = "scaled";
    g.nz = sample.l;
    g.ny = sample.h;
    g.nx = sample.w;
    g.z_coords = sample.z_coords;
    g.y_coords.resize(sample.h);
    g.x_coords.resize(sample.w);
    for (std::size_t i = 0; i < sample.h; ++i)
        g.y_coords[i] = static_cast<double>(i);
    for (std::size_t i = 0; i < sample.w; ++i)
        g.x_coords[i] = static_cast<double>(i);
    g.height_datum = HeightDatum::AGL;
    g.dtype = GridDtype::F16;
    g.values = sample.x;
    return g;
}

Grid3D patch_y_grid(const PatchSample& sample) {
    Grid3D g = patch_x_grid(sample);
    g.units = "m/s";
    g.nz = 1;
    g.z_coords = {0.0};
    g.values = sample.y;
    return g;
}

std::string sample_name(const std::string& split, const char* kind, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%s_%05zu.zgrid", split.c_str(), kind, i);
    return buf;
}

} // namespace

void write_dataset_split(const std::string& dir, const std::string& split,
                         const std::vector<PatchSample>& samples, const ScalerParams& scaler) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["split"] = split;
    manifest["scaler"] = {{"min", scaler.min_dbz}, {"max", scaler.max_dbz},
                          {"fitted_on", scaler.fitted_on}};
    json entries = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string x_name = sample_name(split, "x", i);
        const std::string y_name = sample_name(split, "y", i);
        write_grid(patch_x_grid(samples[i]), dir + "/" + x_name);
        write_grid(patch_y_grid(samples[i]), dir + "/" + y_name);
        entries.push_back({{"x_path", x_name},
                           {"y_path", y_name},
                           {"source", samples[i].meta.source_id},
                           {"origin", {samples[i].meta.origin_y, samples[i].meta.origin_x}}});
    }
    manifest["samples"] = std::move(entries);

    std::ofstream out(dir + "/manifest_" + split + ".json");
    if (!out)
        throw IoError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& dir, const std::string& split) {
    const std::string path = dir + "/manifest_" + split + ".json";
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open manifest: " + path);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("manifest is not valid JSON (" + std::string(e.what()) + "): " + path);
    }

    DatasetManifest out;
    try {
        out.split = manifest.at("split").get<std::string>();
        out.scaler.min_dbz = manifest.at("scaler").at("min").get<double>();
        out.scaler.max_dbz = manifest.at("scaler").at("max").get<double>();
        if (manifest["scaler"].contains("fitted_on"))
            out.scaler.fitted_on = manifest["scaler"]["fitted_on"].get<std::string>();
        for (const auto& e : manifest.at("samples")) {
            ManifestEntry entry;
            entry.x_path = e.at("x_path").get<std::string>();
            entry.y_path = e.at("y_path").get<std::string>();
            if (e.contains("source"))
                entry.source_id = e["source"].get<std::string>();
            entry.origin_y = e.at("origin")[0].get<std::size_t>();
            entry.origin_x = e.at("origin")[1].get<std::size_t>();
            out.samples.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw FormatError("manifest missing/invalid key (" + std::string(e.what()) + "): " + path);
    }
    if (!(out.scaler.max_dbz > out.scaler.min_dbz))
        throw ValidationError("manifest scaler max must exceed min: " + path);
    return out;
}

DatasetReader::DatasetReader(std::string dir, const std::string& split)
    : dir_(std::move(dir)), manifest_(read_manifest(dir_, split)) {}

PatchSample DatasetReader::load(std::size_t i) const {
    if (i >= manifest_.samples.size())
        throw ValidationError("dataset sample index out of range");
    const ManifestEntry& entry = manifest_.samples[i];
    const Grid3D xg = read_grid(dir_ + "/" + entry.x_path);
    const Grid3D yg = read_grid(dir_ + "/" + entry.y_path);
    if (yg.ny != xg.ny || yg.nx != xg.nx || yg.nz != 1)
        throw ValidationError("archived label shape mismatch: " + entry.y_path);

    PatchSample sample;
    sample.h = xg.ny;
    sample.w = xg.nx;
    sample.l = xg.nz;
    sample.z_coords = xg.z_coords;
    sample.x = xg.values;
    sample.y = yg.values;
    sample.meta.source_id = entry.source_id;
    sample.meta.origin_y = entry.origin_y;
    sample.meta.origin_x = entry.origin_x;
    return sample;
}

SplitManifest build_dataset(const std::vector<std::pair<std::string, std::string>>& grid_pairs,
                            const std::string& out_dir, const PrepareConfig& cfg) {
    if (grid_pairs.size() < 3)
        throw ValidationError("need at least 3 source grid pairs (one per split)");

    Rng rng(cfg.seed);

    // Partition source grids across splits so no source feeds two splits.
    std::vector<std::size_t> order(grid_pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    shuffle(order, rng);

    const double total =
        static_cast<double>(cfg.n_train + cfg.n_val + cfg.n_test);
    std::size_t n_train_src = static_cast<std::size_t>(
        std::round(static_cast<double>(order.size()) * cfg.n_train / total));
    std::size_t n_val_src = static_cast<std::size_t>(
        std::round(static_cast<double>(order.size()) * cfg.n_val / total));
    n_train_src = std::clamp<std::size_t>(n_train_src, 1, order.size() - 2);
    n_val_src = std::clamp<std::size_t>(n_val_src, 1, order.size() - 1 - n_train_src);

    std::vector<std::vector<std::size_t>> split_sources(3);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < n_train_src)
            split_sources[0].push_back(order[i]);
        else if (i < n_train_src + n_val_src)
            split_sources[1].push_back(order[i]);
        else
            split_sources[2].push_back(order[i]);
    }

    const char* split_names[3] = {"train", "val", "test"};
    const std::size_t split_counts[3] = {cfg.n_train, cfg.n_val, cfg.n_test};
    std::vector<std::vector<PatchSample>> split_samples(3);

    for (int s = 0; s < 3; ++s) {
        const auto& sources = split_sources[static_cast<std::size_t>(s)];
        auto& samples = split_samples[static_cast<std::size_t>(s)];
        std::size_t attempts = 0;
        const std::size_t max_attempts = 200 * split_counts[s] + 200;
        // Cache the current source pair; switching pairs re-reads from disk
        // so memory holds one pair at a time.
        std::size_t cached = std::numeric_limits<std::size_t>::max();
        Grid3D refl, w;
        while (samples.size() < split_counts[s]) {
            if (++attempts > max_attempts)
                throw ValidationError(
                    "convection filter rejected too many slices; check generator settings");
            const std::size_t src = sources[uniform_index(rng, sources.size())];
            if (src != cached) {
                refl = read_grid(grid_pairs[src].first);
                w = read_grid(grid_pairs[src].second);
                cached = src;
            }
            if (refl.ny < cfg.patch_h || refl.nx < cfg.patch_w)
                throw ValidationError("source grid smaller than requested patch");
            const std::size_t oy = uniform_index(rng, refl.ny - cfg.patch_h + 1);
            const std::size_t ox = uniform_index(rng, refl.nx - cfg.patch_w + 1);
            PatchSample sample = slice_patch(refl, w, oy, ox, cfg.patch_h, cfg.patch_w);
            sample.meta.source_id = grid_pairs[src].first;
            if (!convection_filter(sample, cfg.convection_threshold))
                continue;
            samples.push_back(std::move(sample));
        }
    }

    const ScalerParams scaler = fit_scaler(split_samples[0], out_dir);
    for (auto& split : split_samples) {
        for (auto& sample : split) {
            apply_scaler(sample, scaler);
            quantize_f16(sample);
        }
    }

    SplitManifest manifest;
    for (int s = 0; s < 3; ++s)
        write_dataset_split(out_dir, split_names[s], split_samples[static_cast<std::size_t>(s)],
                            scaler);
    manifest.train = read_manifest(out_dir, "train");
    manifest.val = read_manifest(out_dir, "val");
    manifest.test = read_manifest(out_dir, "test");
    check_disjoint(manifest);
    return manifest;
}

} // namespace updraft
