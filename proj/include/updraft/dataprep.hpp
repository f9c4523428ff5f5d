#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "updraft/grid.hpp"

namespace updraft {

struct PatchMeta {
    std::string source_id;
    std::size_t origin_y = 0, origin_x = 0;
};

/// One training example: normalized reflectivity volume paired with the
/// column-max vertical velocity label. x layout is [level][y][x].
struct PatchSample {
    std::size_t h = 0, w = 0, l = 0;
    std::vector<float> x;       // l*h*w
    std::vector<float> y;       // h*w, m/s
    std::vector<double> z_coords;
    PatchMeta meta;
};

struct ScalerParams {
    double min_dbz = 0.0;
    double max_dbz = 0.0;
    std::string fitted_on;
};

/// Synthetic storm generator configuration (WoFS stand-in). Each storm is a
/// rotated anisotropic Gaussian reflectivity plume with a co-located updraft
/// whose peak follows echo-top height and core reflectivity plus noise.
struct SynthConfig {
    std::uint64_t seed = 0;
    std::size_t nz = 12, ny = 96, nx = 96;
    std::size_t n_storms = 3;
    double peak_dbz_min = 40.0, peak_dbz_max = 65.0;
    double echo_top_min_km = 6.0, echo_top_max_km = 16.0;
    double spacing_km = 3.0;
    double z_bottom_km = 0.5, z_top_km = 17.0;
};

/// Returns co-registered (reflectivity, vertical velocity) fields,
/// deterministic in cfg.seed.
std::pair<Grid3D, Grid3D> synth_storms(const SynthConfig& cfg);

/// Cuts an (unscaled) patch: x is the reflectivity sub-volume at all levels,
/// y the column max of w over the same window.
PatchSample slice_patch(const Grid3D& refl, const Grid3D& w, std::size_t origin_y,
                        std::size_t origin_x, std::size_t h, std::size_t ww);

/// Keep iff max(y) >= threshold (>= per the sampling rule's "or greater").
bool convection_filter(const PatchSample& sample, double threshold = 10.0);

/// Min-max over every reflectivity voxel of the training samples.
ScalerParams fit_scaler(const std::vector<PatchSample>& train_samples,
                        const std::string& dataset_id);

/// Maps min->0, max->1 linearly; out-of-range values clip to [0,1].
double scale_value(double v, const ScalerParams& s);
double unscale_value(double v, const ScalerParams& s);
void apply_scaler(PatchSample& sample, const ScalerParams& s);

/// Rounds sample payloads to their half-precision archived values in place.
/// Scaled x must already lie in [0,1]; y must fit the half dynamic range.
void quantize_f16(PatchSample& sample);

struct ManifestEntry {
    std::string x_path, y_path;
    std::string source_id;
    std::size_t origin_y = 0, origin_x = 0;
};

struct DatasetManifest {
    std::string split;
    std::vector<ManifestEntry> samples;
    ScalerParams scaler;
};

struct SplitManifest {
    DatasetManifest train, val, test;
};

/// Throws ValidationError if any (source, origin) identity appears in more
/// than one split.
void check_disjoint(const SplitManifest& splits);

void write_dataset_split(const std::string& dir, const std::string& split,
                         const std::vector<PatchSample>& samples, const ScalerParams& scaler);
DatasetManifest read_manifest(const std::string& dir, const std::string& split);

/// Streaming sample access: each load() reads one archived pair from disk,
/// so memory stays bounded by a single sample.
class DatasetReader {
public:
    DatasetReader(std::string dir, const std::string& split);

    std::size_t size() const { return manifest_.samples.size(); }
    const ScalerParams& scaler() const { return manifest_.scaler; }
    const DatasetManifest& manifest() const { return manifest_; }
    PatchSample load(std::size_t i) const;

private:
    std::string dir_;
    DatasetManifest manifest_;
};

/// End-to-end dataset build: slice random patches from (refl, w) grid pairs,
/// apply the convection filter, fit the scaler on the training split, scale,
/// quantize to half precision and archive with per-split manifests. Sources
/// are partitioned across splits so the splits are disjoint by construction.
struct PrepareConfig {
    std::size_t patch_h = 32, patch_w = 32;
    std::size_t n_train = 512, n_val = 128, n_test = 128;
    double convection_threshold = 10.0;
    std::uint64_t seed = 0;
};

SplitManifest build_dataset(const std::vector<std::pair<std::string, std::string>>& grid_pairs,
                            const std::string& out_dir, const PrepareConfig& cfg);

} // namespace updraft
