#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "updraft/errors.hpp"
#include "updraft/grid.hpp"
#include "updraft/half.hpp"
#include "updraft/rng.hpp"

using namespace updraft;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Grid3D random_grid(std::size_t nz, std::size_t ny, std::size_t nx, std::uint64_t seed,
                   double missing_fraction = 0.0) {
    Grid3D g;
    g.name = "test";
    g.units = "dBZ";
    g.nz = nz;
    g.ny = ny;
    g.nx = nx;
    Rng rng(seed);
    for (std::size_t i = 0; i < nz; ++i)
        g.z_coords.push_back(0.5 + static_cast<double>(i));
    for (std::size_t i = 0; i < ny; ++i)
        g.y_coords.push_back(3.0 * static_cast<double>(i));
    for (std::size_t i = 0; i < nx; ++i)
        g.x_coords.push_back(3.0 * static_cast<double>(i));
    g.values.resize(g.size());
    for (auto& v : g.values) {
        if (missing_fraction > 0.0 && uniform01(rng) < missing_fraction)
            v = g.missing_value;
        else
            v = static_cast<float>(uniform(rng, -20.0, 70.0));
    }
    return g;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_SUITE("grid_io") {

TEST_CASE("round trip is bit-exact") {
    const std::string path = temp_path("roundtrip.zgrid");
    const Grid3D g = random_grid(4, 6, 5, 42, 0.1);
    write_grid(g, path);
    const Grid3D back = read_grid(path);
    CHECK(back.name == g.name);
    CHECK(back.units == g.units);
    CHECK(back.nz == g.nz);
    CHECK(back.z_coords == g.z_coords);
    CHECK(back.y_coords == g.y_coords);
    CHECK(back.x_coords == g.x_coords);
    CHECK(back.height_datum == g.height_datum);
    CHECK(back.missing_value == g.missing_value);
    REQUIRE(back.values.size() == g.values.size());
    for (std::size_t i = 0; i < g.values.size(); ++i)
        CHECK(back.values[i] == g.values[i]); // bitwise for finite floats

    // Writing the same grid twice gives byte-identical files.
    const std::string path2 = temp_path("roundtrip2.zgrid");
    write_grid(back, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("1x1x1 grid holds its single value") {
    const std::string path = temp_path("single.zgrid");
    Grid3D g;
    g.name = "one";
    g.units = "dBZ";
    g.nz = g.ny = g.nx = 1;
    g.z_coords = {0.5};
    g.y_coords = {0.0};
    g.x_coords = {0.0};
    g.values = {42.0f};
    write_grid(g, path);
    const Grid3D back = read_grid(path);
    CHECK(back.values.size() == 1);
    CHECK(back.values[0] == 42.0f);
}

TEST_CASE("f16 payload round-trips values that are half-representable") {
    const std::string path = temp_path("half.zgrid");
    Grid3D g = random_grid(2, 3, 3, 7);
    g.dtype = GridDtype::F16;
    for (auto& v : g.values)
        v = f16_to_f32(f32_to_f16(v));
    write_grid(g, path);
    const Grid3D back = read_grid(path);
    CHECK(back.dtype == GridDtype::F16);
    for (std::size_t i = 0; i < g.values.size(); ++i)
        CHECK(back.values[i] == g.values[i]);
}

TEST_CASE("invalid grids are rejected before write") {
    const std::string path = temp_path("invalid.zgrid");
    Grid3D g = random_grid(2, 2, 2, 1);
    SUBCASE("descending coords") {
        g.y_coords[1] = g.y_coords[0] - 1.0;
        CHECK_THROWS_AS(write_grid(g, path), ValidationError);
    }
    SUBCASE("zero dim") {
        g.nz = 0;
        g.z_coords.clear();
        g.values.clear();
        CHECK_THROWS_AS(write_grid(g, path), ValidationError);
    }
    SUBCASE("value length mismatch") {
        g.values.pop_back();
        CHECK_THROWS_AS(write_grid(g, path), ValidationError);
    }
}

TEST_CASE("malformed header and payload mismatches fail loudly") {
    const std::string path = temp_path("good.zgrid");
    write_grid(random_grid(2, 2, 2, 3), path);
    const std::string bytes = read_bytes(path);

    SUBCASE("corrupted JSON header") {
        std::string bad = bytes;
        bad[0] = 'X';
        const std::string bad_path = temp_path("badheader.zgrid");
        write_bytes(bad_path, bad);
        CHECK_THROWS_AS(read_grid(bad_path), FormatError);
    }
    SUBCASE("payload shorter than dims declare") {
        const std::string bad_path = temp_path("short.zgrid");
        write_bytes(bad_path, bytes.substr(0, bytes.size() - 4));
        CHECK_THROWS_AS(read_grid(bad_path), ValidationError);
    }
    SUBCASE("payload longer than dims declare") {
        const std::string bad_path = temp_path("long.zgrid");
        write_bytes(bad_path, bytes + std::string(4, '\x7'));
        CHECK_THROWS_AS(read_grid(bad_path), ValidationError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_grid(temp_path("does_not_exist.zgrid")), IoError);
    }
}

TEST_CASE("composite_max worked examples") {
    Grid3D g = random_grid(3, 1, 1, 5);
    g.values = {10.0f, 35.0f, 20.0f};
    CHECK(composite_max(g)[0] == 35.0f);

    SUBCASE("all-missing column stays missing") {
        g.values = {g.missing_value, g.missing_value, g.missing_value};
        CHECK(composite_max(g)[0] == g.missing_value);
    }
    SUBCASE("missing levels are skipped") {
        g.values = {g.missing_value, 12.0f, g.missing_value};
        CHECK(composite_max(g)[0] == 12.0f);
    }
}

TEST_CASE("composite_max properties on random grids") {
    const Grid3D g = random_grid(5, 8, 7, 11, 0.2);
    const std::vector<float> comp = composite_max(g);

    // Dominates every level wherever defined.
    for (std::size_t z = 0; z < g.nz; ++z)
        for (std::size_t i = 0; i < g.ny * g.nx; ++i) {
            const float v = g.values[z * g.ny * g.nx + i];
            if (!g.is_missing(v) && !g.is_missing(comp[i]))
                CHECK(comp[i] >= v);
        }

    // Idempotent on a single-level grid built from its own output.
    Grid3D flat = g;
    flat.nz = 1;
    flat.z_coords = {g.z_coords[0]};
    flat.values = comp;
    CHECK(composite_max(flat) == comp);

    // nz=1 is the identity.
    CHECK(composite_max(flat) == flat.values);
}

TEST_CASE("terrain uses the nz=1 convention") {
    const std::string path = temp_path("terrain.zgrid");
    TerrainGrid t;
    t.ny = 2;
    t.nx = 3;
    t.y_coords = {0.0, 1.0};
    t.x_coords = {0.0, 1.0, 2.0};
    t.elevation = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 1.5f};
    write_terrain(t, path);
    const TerrainGrid back = read_terrain(path);
    CHECK(back.ny == t.ny);
    CHECK(back.elevation == t.elevation);

    // A 2-level grid is not a terrain grid.
    const std::string path2 = temp_path("notterrain.zgrid");
    write_grid(random_grid(2, 2, 2, 9), path2);
    CHECK_THROWS_AS(read_terrain(path2), ValidationError);
}

} // TEST_SUITE
