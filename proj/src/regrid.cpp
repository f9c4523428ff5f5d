#include "updraft/regrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "updraft/errors.hpp"

namespace updraft {

KdIndex::KdIndex(std::vector<std::pair<double, double>> points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(leaf_size == 0 ? 1 : leaf_size) {
    if (points_.empty())
        throw ValidationError("kd-tree needs at least one source point");
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i)
        order_[i] = i;
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, points_.size(), 0);
}

int KdIndex::build(std::size_t begin, std::size_t end, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= leaf_size_) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }

    const int axis = depth % 2; // 0 = y, 1 = x
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                         return axis == 0 ? points_[a].first < points_[b].first
                                          : points_[a].second < points_[b].second;
                     });
    const auto& p = points_[order_[mid]];
    nodes_[id].axis = axis;
    nodes_[id].split = axis == 0 ? p.first : p.second;

    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

void KdIndex::search(int node, double y, double x, std::size_t& best, double& best_d2) const {
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    if (n.axis < 0) {
        for (std::size_t k = n.begin; k < n.end; ++k) {
            const std::size_t idx = order_[k];
            const double dy = points_[idx].first - y;
            const double dx = points_[idx].second - x;
            const double d2 = dy * dy + dx * dx;
            if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                best_d2 = d2;
                best = idx;
            }
        }
        return;
    }

    const double q = n.axis == 0 ? y : x;
    const int near = q < n.split ? n.left : n.right;
    const int far = q < n.split ? n.right : n.left;
    search(near, y, x, best, best_d2);
    const double diff = q - n.split;
    // <= so equal-distance candidates across the split still get visited
    // (ties break on the lowest source index).
    if (diff * diff <= best_d2)
        search(far, y, x, best, best_d2);
}

std::size_t KdIndex::nearest(double y, double x) const {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    double best_d2 = std::numeric_limits<double>::infinity();
    search(0, y, x, best, best_d2);
    return best;
}

LevelSpec LevelSpec::linspace(double lo, double hi, std::size_t count) {
    if (count == 0 || !(hi > lo))
        throw ValidationError("level spec needs ascending bounds and >= 1 level");
    LevelSpec spec;
    spec.targets.resize(count);
    if (count == 1) {
        spec.targets[0] = lo;
        return spec;
    }
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i)
        spec.targets[i] = lo + step * static_cast<double>(i);
    spec.targets.back() = hi;
    return spec;
}

LevelSpec LevelSpec::default_training_levels() {
    return linspace(0.5, 17.0, 24);
}

Grid3D nn_resample(const Grid3D& src, const std::vector<double>& dst_y,
                   const std::vector<double>& dst_x) {
    validate_grid(src);
    if (dst_y.empty() || dst_x.empty())
        throw ValidationError("destination coordinates must be nonempty");

    std::vector<std::pair<double, double>> points;
    points.reserve(src.ny * src.nx);
    for (std::size_t iy = 0; iy < src.ny; ++iy)
        for (std::size_t ix = 0; ix < src.nx; ++ix)
            points.emplace_back(src.y_coords[iy], src.x_coords[ix]);
    const KdIndex index(std::move(points));

    Grid3D out;
    out.name = src.name;
    out.units = src.units;
    out.nz = src.nz;
    out.ny = dst_y.size();
    out.nx = dst_x.size();
    out.z_coords = src.z_coords;
    out.y_coords = dst_y;
    out.x_coords = dst_x;
    out.degrees = src.degrees;
    out.height_datum = src.height_datum;
    out.dtype = src.dtype;
    out.missing_value = src.missing_value;
    out.values.resize(out.size());

    const std::size_t src_plane = src.ny * src.nx;
    const std::size_t dst_plane = out.ny * out.nx;
    for (std::size_t jy = 0; jy < out.ny; ++jy) {
        for (std::size_t jx = 0; jx < out.nx; ++jx) {
            const std::size_t s = index.nearest(dst_y[jy], dst_x[jx]);
            const std::size_t d = jy * out.nx + jx;
            for (std::size_t z = 0; z < out.nz; ++z)
                out.values[z * dst_plane + d] = src.values[z * src_plane + s];
        }
    }
    validate_grid(out);
    return out;
}

Grid3D block_mean(const Grid3D& src, std::size_t factor) {
    validate_grid(src);
    if (factor < 1)
        throw ValidationError("block_mean factor must be >= 1");

    const std::size_t out_ny = (src.ny + factor - 1) / factor;
    const std::size_t out_nx = (src.nx + factor - 1) / factor;

    Grid3D out;
    out.name = src.name;
    out.units = src.units;
    out.nz = src.nz;
    out.ny = out_ny;
    out.nx = out_nx;
    out.z_coords = src.z_coords;
    out.degrees = src.degrees;
    out.height_datum = src.height_datum;
    out.dtype = src.dtype;
    out.missing_value = src.missing_value;

    // Coarse coordinates are the mean of each block's member coordinates.
    out.y_coords.resize(out_ny);
    for (std::size_t by = 0; by < out_ny; ++by) {
        const std::size_t lo = by * factor;
        const std::size_t hi = std::min(lo + factor, src.ny);
        double sum = 0.0;
        for (std::size_t iy = lo; iy < hi; ++iy)
            sum += src.y_coords[iy];
        out.y_coords[by] = sum / static_cast<double>(hi - lo);
    }
    out.x_coords.resize(out_nx);
    for (std::size_t bx = 0; bx < out_nx; ++bx) {
        const std::size_t lo = bx * factor;
        const std::size_t hi = std::min(lo + factor, src.nx);
        double sum = 0.0;
        for (std::size_t ix = lo; ix < hi; ++ix)
            sum += src.x_coords[ix];
        out.x_coords[bx] = sum / static_cast<double>(hi - lo);
    }

    out.values.resize(out.size());
    for (std::size_t z = 0; z < src.nz; ++z) {
        const float* plane = src.values.data() + z * src.ny * src.nx;
        float* coarse = out.values.data() + z * out_ny * out_nx;
        for (std::size_t by = 0; by < out_ny; ++by) {
            for (std::size_t bx = 0; bx < out_nx; ++bx) {
                const std::size_t y_hi = std::min((by + 1) * factor, src.ny);
                const std::size_t x_hi = std::min((bx + 1) * factor, src.nx);
                double sum = 0.0;
                std::size_t count = 0;
                for (std::size_t iy = by * factor; iy < y_hi; ++iy) {
                    for (std::size_t ix = bx * factor; ix < x_hi; ++ix) {
                        const float v = plane[iy * src.nx + ix];
                        if (!src.is_missing(v)) {
                            sum += v;
                            ++count;
                        }
                    }
                }
                coarse[by * out_nx + bx] =
                    count == 0 ? out.missing_value
                               : static_cast<float>(sum / static_cast<double>(count));
            }
        }
    }
    validate_grid(out);
    return out;
}

Grid3D to_agl(const Grid3D& src, const TerrainGrid& terrain, const LevelSpec& levels) {
    validate_grid(src);
    if (src.height_datum != HeightDatum::MSL)
        throw ValidationError("to_agl input must have MSL height datum");
    if (terrain.ny != src.ny || terrain.nx != src.nx)
        throw ValidationError("terrain grid shape does not match source grid");
    if (terrain.y_coords != src.y_coords || terrain.x_coords != src.x_coords)
        throw ValidationError("terrain coordinates do not match source grid");
    if (levels.targets.empty())
        throw ValidationError("level spec must have at least one target");
    for (std::size_t i = 1; i < levels.targets.size(); ++i)
        if (!(levels.targets[i] > levels.targets[i - 1]))
            throw ValidationError("level targets must be strictly ascending");

    Grid3D out;
    out.name = src.name;
    out.units = src.units;
    out.nz = levels.targets.size();
    out.ny = src.ny;
    out.nx = src.nx;
    out.z_coords = levels.targets;
    out.y_coords = src.y_coords;
    out.x_coords = src.x_coords;
    out.degrees = src.degrees;
    out.height_datum = HeightDatum::AGL;
    out.dtype = src.dtype;
    out.missing_value = src.missing_value;
    out.values.resize(out.size());

    const std::size_t plane = src.ny * src.nx;
    const std::size_t out_plane = out.ny * out.nx;
    std::vector<double> agl(src.nz);
    for (std::size_t iy = 0; iy < src.ny; ++iy) {
        for (std::size_t ix = 0; ix < src.nx; ++ix) {
            const std::size_t pix = iy * src.nx + ix;
            const double elev = terrain.at(iy, ix);
            for (std::size_t k = 0; k < src.nz; ++k)
                agl[k] = src.z_coords[k] - elev;

            for (std::size_t m = 0; m < out.nz; ++m) {
                const double target = levels.targets[m];
                float result;
                if (target > agl.back()) {
                    result = out.missing_value; // above the observed column
                } else if (target <= agl.front()) {
                    // Constant extension below ground level.
                    result = src.values[pix];
                } else {
                    const auto it =
                        std::lower_bound(agl.begin(), agl.end(), target);
                    const std::size_t hi = static_cast<std::size_t>(it - agl.begin());
                    const float v_hi = src.values[hi * plane + pix];
                    if (agl[hi] == target) {
                        result = v_hi;
                    } else {
                        const std::size_t lo = hi - 1;
                        const float v_lo = src.values[lo * plane + pix];
                        if (src.is_missing(v_lo) || src.is_missing(v_hi)) {
                            result = out.missing_value;
                        } else {
                            const double frac = (target - agl[lo]) / (agl[hi] - agl[lo]);
                            result = static_cast<float>(v_lo + frac * (v_hi - v_lo));
                        }
                    }
                }
                out.values[m * out_plane + pix] = result;
            }
        }
    }
    validate_grid(out);
    return out;
}

} // namespace updraft
