#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace updraft {

enum class HeightDatum { MSL, AGL };

enum class GridDtype { F32, F16 };

constexpr double kDefaultMissing = -9999.0;

/// A regular 3-D scalar field on ascending coordinate vectors.
/// Values are row-major [z,y,x]; missing voxels carry `missing_value`.
struct Grid3D {
    std::string name;
    std::string units;
    std::size_t nz = 0, ny = 0, nx = 0;
    std::vector<double> z_coords; // km
    std::vector<double> y_coords; // km (or degrees, per `degrees`)
    std::vector<double> x_coords;
    bool degrees = false; // horizontal coords are degrees rather than km
    HeightDatum height_datum = HeightDatum::MSL;
    GridDtype dtype = GridDtype::F32;
    float missing_value = static_cast<float>(kDefaultMissing);
    std::vector<float> values; // nz*ny*nx

    float at(std::size_t z, std::size_t y, std::size_t x) const {
        return values[(z * ny + y) * nx + x];
    }
    float& at(std::size_t z, std::size_t y, std::size_t x) {
        return values[(z * ny + y) * nx + x];
    }
    bool is_missing(float v) const { return v == missing_value; }
    std::size_t size() const { return nz * ny * nx; }
};

/// Ground elevation above sea level, km. Same horizontal layout as Grid3D.
struct TerrainGrid {
    std::size_t ny = 0, nx = 0;
    std::vector<double> y_coords;
    std::vector<double> x_coords;
    std::vector<float> elevation; // ny*nx, km

    float at(std::size_t y, std::size_t x) const { return elevation[y * nx + x]; }
};

/// Throws ValidationError if any Grid3D invariant is broken.
void validate_grid(const Grid3D& grid);

/// ZGRID reader/writer. Header is one JSON object terminated by '\n' '\0',
/// followed by the raw little-endian payload in the declared dtype.
Grid3D read_grid(const std::string& path);
void write_grid(const Grid3D& grid, const std::string& path);

/// Terrain stored as a ZGRID with nz=1.
TerrainGrid read_terrain(const std::string& path);
void write_terrain(const TerrainGrid& terrain, const std::string& path);

/// Column maximum over z, skipping missing values. A column that is missing
/// at every level stays missing. Result is an ny*nx map.
std::vector<float> composite_max(const Grid3D& grid);

/// Wraps a 2-D map in a single-level grid sharing `like`'s horizontal coords.
Grid3D make_level_grid(const Grid3D& like, std::vector<float> map2d,
                       const std::string& name, const std::string& units);

} // namespace updraft
