#include "updraft/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "updraft/errors.hpp"
#include "updraft/half.hpp"

namespace updraft {

using nlohmann::json;

namespace {

void require_ascending(const std::vector<double>& v, const char* what) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1]))
            throw ValidationError(std::string(what) + " coordinates must be strictly ascending");
    for (double c : v)
        if (!std::isfinite(c))
            throw ValidationError(std::string(what) + " coordinates must be finite");
}

std::vector<std::uint8_t> encode_payload(const Grid3D& grid) {
    std::vector<std::uint8_t> bytes;
    if (grid.dtype == GridDtype::F32) {
        bytes.resize(grid.values.size() * 4);
        for (std::size_t i = 0; i < grid.values.size(); ++i) {
            std::uint32_t b;
            std::memcpy(&b, &grid.values[i], 4);
            bytes[4 * i + 0] = static_cast<std::uint8_t>(b);
            bytes[4 * i + 1] = static_cast<std::uint8_t>(b >> 8);
            bytes[4 * i + 2] = static_cast<std::uint8_t>(b >> 16);
            bytes[4 * i + 3] = static_cast<std::uint8_t>(b >> 24);
        }
    } else {
        bytes.resize(grid.values.size() * 2);
        for (std::size_t i = 0; i < grid.values.size(); ++i) {
            const std::uint16_t h = f32_to_f16(grid.values[i]);
            bytes[2 * i + 0] = static_cast<std::uint8_t>(h);
            bytes[2 * i + 1] = static_cast<std::uint8_t>(h >> 8);
        }
    }
    return bytes;
}

std::vector<float> decode_payload(const std::vector<std::uint8_t>& bytes, GridDtype dtype,
                                  std::size_t count) {
    std::vector<float> values(count);
    if (dtype == GridDtype::F32) {
        if (bytes.size() != count * 4)
            throw ValidationError("ZGRID payload length does not match dims");
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t b = static_cast<std::uint32_t>(bytes[4 * i]) |
                                    static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                                    static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                                    static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
            std::memcpy(&values[i], &b, 4);
        }
    } else {
        if (bytes.size() != count * 2)
            throw ValidationError("ZGRID payload length does not match dims");
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint16_t h = static_cast<std::uint16_t>(
                bytes[2 * i] | static_cast<std::uint16_t>(bytes[2 * i + 1]) << 8);
            values[i] = f16_to_f32(h);
        }
    }
    return values;
}

} // namespace

void validate_grid(const Grid3D& grid) {
    if (grid.nz == 0 || grid.ny == 0 || grid.nx == 0)
        throw ValidationError("grid dims must all be positive");
    if (grid.z_coords.size() != grid.nz || grid.y_coords.size() != grid.ny ||
        grid.x_coords.size() != grid.nx)
        throw ValidationError("coordinate vector lengths do not match dims");
    require_ascending(grid.z_coords, "z");
    require_ascending(grid.y_coords, "y");
    require_ascending(grid.x_coords, "x");
    if (grid.values.size() != grid.size())
        throw ValidationError("values length does not equal nz*ny*nx");
    if (!std::isfinite(grid.missing_value))
        throw ValidationError("missing_value must be finite");
}

void write_grid(const Grid3D& grid, const std::string& path) {
    validate_grid(grid);

    json header;
    header["name"] = grid.name;
    header["units"] = grid.units;
    header["dims"] = {grid.nz, grid.ny, grid.nx};
    header["z_coords"] = grid.z_coords;
    header["y_coords"] = grid.y_coords;
    header["x_coords"] = grid.x_coords;
    header["coord_units"] = grid.degrees ? "degrees" : "km";
    header["height_datum"] = grid.height_datum == HeightDatum::MSL ? "MSL" : "AGL";
    header["dtype"] = grid.dtype == GridDtype::F32 ? "f32" : "f16";
    header["missing_value"] = grid.missing_value;

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open for writing: " + path);
    const std::string text = header.dump();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.put('\n');
    out.put('\0');
    const std::vector<std::uint8_t> payload = encode_payload(grid);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out)
        throw IoError("write failed: " + path);
}

Grid3D read_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open for reading: " + path);

    std::string text;
    char c;
    while (in.get(c)) {
        if (c == '\0')
            break;
        text.push_back(c);
        if (text.size() > (1u << 24))
            throw FormatError("ZGRID header not terminated: " + path);
    }
    if (!in || text.empty() || text.back() != '\n')
        throw FormatError("ZGRID header must end with newline + NUL: " + path);
    text.pop_back();

    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError("ZGRID header is not valid JSON (" + std::string(e.what()) + "): " + path);
    }

    Grid3D grid;
    try {
        grid.name = header.at("name").get<std::string>();
        grid.units = header.at("units").get<std::string>();
        const auto dims = header.at("dims");
        if (!dims.is_array() || dims.size() != 3)
            throw FormatError("ZGRID dims must be [nz, ny, nx]");
        grid.nz = dims[0].get<std::size_t>();
        grid.ny = dims[1].get<std::size_t>();
        grid.nx = dims[2].get<std::size_t>();
        grid.z_coords = header.at("z_coords").get<std::vector<double>>();
        grid.y_coords = header.at("y_coords").get<std::vector<double>>();
        grid.x_coords = header.at("x_coords").get<std::vector<double>>();
        if (header.contains("coord_units"))
            grid.degrees = header["coord_units"].get<std::string>() == "degrees";
        const std::string datum = header.at("height_datum").get<std::string>();
        if (datum == "MSL")
            grid.height_datum = HeightDatum::MSL;
        else if (datum == "AGL")
            grid.height_datum = HeightDatum::AGL;
        else
            throw FormatError("height_datum must be MSL or AGL, got " + datum);
        const std::string dtype = header.at("dtype").get<std::string>();
        if (dtype == "f32")
            grid.dtype = GridDtype::F32;
        else if (dtype == "f16")
            grid.dtype = GridDtype::F16;
        else
            throw FormatError("dtype must be f32 or f16, got " + dtype);
        grid.missing_value = header.at("missing_value").get<float>();
    } catch (const json::exception& e) {
        throw FormatError("ZGRID header missing/invalid key (" + std::string(e.what()) + "): " + path);
    }

    const std::size_t count = grid.nz * grid.ny * grid.nx;
    const std::size_t elem = grid.dtype == GridDtype::F32 ? 4 : 2;
    std::vector<std::uint8_t> payload(count * elem);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
        if (in.eof())
            throw ValidationError("ZGRID payload shorter than dims declare: " + path);
        throw IoError("ZGRID payload unreadable: " + path);
    }
    in.get(c);
    if (!in.eof())
        throw ValidationError("ZGRID payload longer than dims declare: " + path);

    grid.values = decode_payload(payload, grid.dtype, count);
    validate_grid(grid);
    return grid;
}

TerrainGrid read_terrain(const std::string& path) {
    const Grid3D grid = read_grid(path);
    if (grid.nz != 1)
        throw ValidationError("terrain grid must have nz=1: " + path);
    TerrainGrid terrain;
    terrain.ny = grid.ny;
    terrain.nx = grid.nx;
    terrain.y_coords = grid.y_coords;
    terrain.x_coords = grid.x_coords;
    terrain.elevation = grid.values;
    for (float e : terrain.elevation)
        if (!std::isfinite(e))
            throw ValidationError("terrain elevation must be finite: " + path);
    return terrain;
}

void write_terrain(const TerrainGrid& terrain, const std::string& path) {
    Grid3D grid;
    grid.name = "terrain";
    grid.units = "km";
    grid.nz = 1;
    grid.ny = terrain.ny;
    grid.nx = terrain.nx;
    grid.z_coords = {0.0};
    grid.y_coords = terrain.y_coords;
    grid.x_coords = terrain.x_coords;
    grid.height_datum = HeightDatum::MSL;
    grid.values = terrain.elevation;
    write_grid(grid, path);
}

std::vector<float> composite_max(const Grid3D& grid) {
    validate_grid(grid);
    std::vector<float> out(grid.ny * grid.nx, grid.missing_value);
    for (std::size_t z = 0; z < grid.nz; ++z) {
        const float* level = grid.values.data() + z * grid.ny * grid.nx;
        for (std::size_t i = 0; i < grid.ny * grid.nx; ++i) {
            const float v = level[i];
            if (grid.is_missing(v))
                continue;
            if (grid.is_missing(out[i]) || v > out[i])
                out[i] = v;
        }
    }
    return out;
}

Grid3D make_level_grid(const Grid3D& like, std::vector<float> map2d, const std::string& name,
                       const std::string& units) {
    if (map2d.size() != like.ny * like.nx)
        throw ValidationError("map size does not match grid horizontal dims");
    Grid3D out;
    out.name = name;
    out.units = units;
    out.nz = 1;
    out.ny = like.ny;
    out.nx = like.nx;
    out.z_coords = {like.z_coords.empty() ? 0.0 : like.z_coords.front()};
    out.y_coords = like.y_coords;
    out.x_coords = like.x_coords;
    out.degrees = like.degrees;
    out.height_datum = like.height_datum;
    out.missing_value = like.missing_value;
    out.values = std::move(map2d);
    return out;
}

} // namespace updraft
