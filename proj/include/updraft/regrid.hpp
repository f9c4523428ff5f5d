#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "updraft/grid.hpp"

namespace updraft {

/// Exact 2-D nearest-neighbor index over (y,x) points. Ties on distance are
/// broken by the lowest source index. Immutable after construction; queries
/// are safe to run concurrently.
class KdIndex {
public:
    explicit KdIndex(std::vector<std::pair<double, double>> points, std::size_t leaf_size = 16);

    /// Index of the nearest source point to (y,x).
    std::size_t nearest(double y, double x) const;

    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        int axis = -1;        // -1 marks a leaf
        double split = 0.0;
        std::size_t begin = 0, end = 0; // leaf range into order_
        int left = -1, right = -1;
    };

    int build(std::size_t begin, std::size_t end, int depth);
    void search(int node, double y, double x, std::size_t& best, double& best_d2) const;

    std::vector<std::pair<double, double>> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_;
};

/// Target AGL heights, km. Default mirrors the 24 training levels spanning
/// 0.5-17 km above ground level.
struct LevelSpec {
    std::vector<double> targets;

    static LevelSpec default_training_levels();
    static LevelSpec linspace(double lo, double hi, std::size_t count);
};

/// Nearest-neighbor horizontal resampling onto (dst_y, dst_x), per level.
/// Distances are in raw coordinate units (no geodesy).
Grid3D nn_resample(const Grid3D& src, const std::vector<double>& dst_y,
                   const std::vector<double>& dst_x);

/// factor x factor block means, missing values excluded; an all-missing
/// block stays missing. Trailing partial blocks average what is available.
Grid3D block_mean(const Grid3D& src, std::size_t factor);

/// MSL -> AGL re-leveling: subtract terrain elevation from the height
/// profile at each pixel, then linearly interpolate onto levels.targets.
/// Targets above the top available AGL height become missing; targets below
/// the lowest take the lowest level's value.
Grid3D to_agl(const Grid3D& src, const TerrainGrid& terrain, const LevelSpec& levels);

} // namespace updraft
