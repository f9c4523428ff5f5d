#include "doctest.h"

#include <cmath>

#include "support/oracles.hpp"
#include "updraft/errors.hpp"
#include "updraft/regrid.hpp"
#include "updraft/rng.hpp"

using namespace updraft;

namespace {

Grid3D make_grid(std::size_t nz, std::size_t ny, std::size_t nx, HeightDatum datum) {
    Grid3D g;
    g.name = "g";
    g.units = "dBZ";
    g.nz = nz;
    g.ny = ny;
    g.nx = nx;
    g.height_datum = datum;
    for (std::size_t i = 0; i < nz; ++i)
        g.z_coords.push_back(0.5 + 0.75 * static_cast<double>(i));
    for (std::size_t i = 0; i < ny; ++i)
        g.y_coords.push_back(1.5 * static_cast<double>(i));
    for (std::size_t i = 0; i < nx; ++i)
        g.x_coords.push_back(1.5 * static_cast<double>(i));
    g.values.assign(g.size(), 0.0f);
    return g;
}

} // namespace

TEST_SUITE("regrid") {

TEST_CASE("kd-tree agrees exactly with the linear-scan oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 400);
        std::vector<std::pair<double, double>> points(n);
        for (auto& p : points) {
            // Snap to a lattice so exact ties happen regularly.
            p.first = std::floor(uniform(rng, 0.0, 12.0));
            p.second = std::floor(uniform(rng, 0.0, 12.0));
        }
        const KdIndex index(points, 1 + uniform_index(rng, 8));
        for (int q = 0; q < 100; ++q) {
            const double y = uniform(rng, -2.0, 14.0);
            const double x = uniform(rng, -2.0, 14.0);
            CHECK(index.nearest(y, x) == oracles::nearest_linear_scan(points, y, x));
        }
        // Query exactly on lattice points, where duplicates force tie-breaks.
        for (int q = 0; q < 50; ++q) {
            const double y = std::floor(uniform(rng, 0.0, 12.0));
            const double x = std::floor(uniform(rng, 0.0, 12.0));
            CHECK(index.nearest(y, x) == oracles::nearest_linear_scan(points, y, x));
        }
    }
}

TEST_CASE("kd-tree rejects an empty point set") {
    CHECK_THROWS_AS(KdIndex({}), ValidationError);
}

TEST_CASE("nn_resample identity when destination equals source") {
    Grid3D g = make_grid(3, 6, 5, HeightDatum::AGL);
    Rng rng(3);
    for (auto& v : g.values)
        v = static_cast<float>(uniform(rng, -10.0, 60.0));
    const Grid3D out = nn_resample(g, g.y_coords, g.x_coords);
    CHECK(out.values == g.values);
    CHECK(out.ny == g.ny);
}

TEST_CASE("single source point floods the destination") {
    Grid3D g = make_grid(2, 1, 1, HeightDatum::AGL);
    g.values = {7.0f, 9.0f};
    const Grid3D out = nn_resample(g, {0.0, 5.0, 10.0}, {0.0, 5.0});
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(out.values[i] == 7.0f);
        CHECK(out.values[6 + i] == 9.0f);
    }
}

TEST_CASE("two-point source: x=4 takes the value at x=0") {
    Grid3D g = make_grid(1, 1, 2, HeightDatum::AGL);
    g.x_coords = {0.0, 10.0};
    g.values = {1.0f, 2.0f};
    const Grid3D out = nn_resample(g, {0.0}, {4.0});
    CHECK(out.values[0] == 1.0f);
    // And the oracle agrees.
    CHECK(oracles::nearest_linear_scan({{0.0, 0.0}, {0.0, 10.0}}, 0.0, 4.0) == 0);
}

TEST_CASE("nn_resample matches the oracle per level on random grids") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        Grid3D g = make_grid(2, 4 + uniform_index(rng, 5), 4 + uniform_index(rng, 5),
                             HeightDatum::AGL);
        for (auto& v : g.values)
            v = static_cast<float>(uniform(rng, 0.0, 100.0));
        std::vector<std::pair<double, double>> points;
        for (double yc : g.y_coords)
            for (double xc : g.x_coords)
                points.emplace_back(yc, xc);

        std::vector<double> dst_y, dst_x;
        for (int i = 0; i < 7; ++i)
            dst_y.push_back(uniform(rng, -1.0, g.y_coords.back() + 1.0));
        for (int i = 0; i < 6; ++i)
            dst_x.push_back(uniform(rng, -1.0, g.x_coords.back() + 1.0));
        std::sort(dst_y.begin(), dst_y.end());
        std::sort(dst_x.begin(), dst_x.end());
        dst_y.erase(std::unique(dst_y.begin(), dst_y.end()), dst_y.end());
        dst_x.erase(std::unique(dst_x.begin(), dst_x.end()), dst_x.end());

        const Grid3D out = nn_resample(g, dst_y, dst_x);
        for (std::size_t z = 0; z < g.nz; ++z)
            for (std::size_t jy = 0; jy < dst_y.size(); ++jy)
                for (std::size_t jx = 0; jx < dst_x.size(); ++jx) {
                    const std::size_t s =
                        oracles::nearest_linear_scan(points, dst_y[jy], dst_x[jx]);
                    CHECK(out.values[(z * dst_y.size() + jy) * dst_x.size() + jx] ==
                          g.values[z * g.ny * g.nx + s]);
                }
    }
    CHECK_THROWS_AS(nn_resample(make_grid(1, 2, 2, HeightDatum::AGL), {}, {1.0}),
                    ValidationError);
}

TEST_CASE("block_mean worked examples") {
    Grid3D g = make_grid(1, 2, 2, HeightDatum::AGL);
    g.values = {1.0f, 3.0f, 5.0f, 7.0f};
    CHECK(block_mean(g, 2).values[0] == 4.0f);

    SUBCASE("factor 1 is the identity") {
        const Grid3D out = block_mean(g, 1);
        CHECK(out.values == g.values);
        CHECK(out.y_coords == g.y_coords);
    }
    SUBCASE("constant block") {
        g.values = {1.0f, 1.0f, 1.0f, 1.0f};
        CHECK(block_mean(g, 2).values[0] == 1.0f);
    }
    SUBCASE("missing values are excluded") {
        g.values = {1.0f, g.missing_value, 5.0f, g.missing_value};
        CHECK(block_mean(g, 2).values[0] == 3.0f);
    }
    SUBCASE("all-missing block stays missing") {
        g.values.assign(4, g.missing_value);
        CHECK(block_mean(g, 2).values[0] == g.missing_value);
    }
    SUBCASE("factor 0 is invalid") {
        CHECK_THROWS_AS(block_mean(g, 0), ValidationError);
    }
}

TEST_CASE("block_mean averages partial trailing blocks over available pixels") {
    Grid3D g = make_grid(1, 3, 3, HeightDatum::AGL);
    for (std::size_t i = 0; i < 9; ++i)
        g.values[i] = static_cast<float>(i);
    const Grid3D out = block_mean(g, 2);
    CHECK(out.ny == 2);
    CHECK(out.nx == 2);
    CHECK(out.values[0] == doctest::Approx((0.0 + 1.0 + 3.0 + 4.0) / 4.0));
    CHECK(out.values[1] == doctest::Approx((2.0 + 5.0) / 2.0));
    CHECK(out.values[2] == doctest::Approx((6.0 + 7.0) / 2.0));
    CHECK(out.values[3] == doctest::Approx(8.0));
}

TEST_CASE("block_mean preserves the domain mean on exact-factor grids") {
    Rng rng(17);
    Grid3D g = make_grid(2, 8, 12, HeightDatum::AGL);
    for (auto& v : g.values)
        v = static_cast<float>(uniform(rng, -30.0, 70.0));
    const Grid3D out = block_mean(g, 4);

    for (std::size_t z = 0; z < g.nz; ++z) {
        double fine = 0.0, coarse = 0.0;
        for (std::size_t i = 0; i < g.ny * g.nx; ++i)
            fine += g.values[z * g.ny * g.nx + i];
        fine /= static_cast<double>(g.ny * g.nx);
        for (std::size_t i = 0; i < out.ny * out.nx; ++i)
            coarse += out.values[z * out.ny * out.nx + i];
        coarse /= static_cast<double>(out.ny * out.nx);
        CHECK(std::fabs(fine - coarse) / std::fabs(fine) < 1e-6); // float payload rounding
    }
}

TEST_CASE("to_agl worked example: 1.5 km terrain") {
    Grid3D g = make_grid(3, 1, 1, HeightDatum::MSL);
    g.z_coords = {2.0, 2.5, 3.0};
    g.values = {10.0f, 20.0f, 30.0f};
    TerrainGrid terrain;
    terrain.ny = terrain.nx = 1;
    terrain.y_coords = g.y_coords;
    terrain.x_coords = g.x_coords;
    terrain.elevation = {1.5f};

    LevelSpec levels;
    levels.targets = {0.5, 1.0, 1.5};
    const Grid3D out = to_agl(g, terrain, levels);
    CHECK(out.height_datum == HeightDatum::AGL);
    CHECK(out.z_coords == levels.targets);
    CHECK(out.values[0] == 10.0f);
    CHECK(out.values[1] == 20.0f);
    CHECK(out.values[2] == 30.0f);

    SUBCASE("midpoint interpolation") {
        LevelSpec mid;
        mid.targets = {0.75};
        CHECK(to_agl(g, terrain, mid).values[0] == doctest::Approx(15.0));
    }
    SUBCASE("target above the observed column is missing") {
        LevelSpec high;
        high.targets = {17.0};
        CHECK(to_agl(g, terrain, high).values[0] == g.missing_value);
    }
    SUBCASE("target below the lowest level takes the lowest value") {
        LevelSpec low;
        low.targets = {0.1};
        CHECK(to_agl(g, terrain, low).values[0] == 10.0f);
    }
    SUBCASE("already AGL is rejected") {
        Grid3D agl = g;
        agl.height_datum = HeightDatum::AGL;
        CHECK_THROWS_AS(to_agl(agl, terrain, levels), ValidationError);
    }
}

TEST_CASE("to_agl with zero terrain and matching targets is the identity") {
    Rng rng(29);
    Grid3D g = make_grid(4, 3, 3, HeightDatum::MSL);
    for (auto& v : g.values)
        v = static_cast<float>(uniform(rng, 0.0, 50.0));
    TerrainGrid terrain;
    terrain.ny = g.ny;
    terrain.nx = g.nx;
    terrain.y_coords = g.y_coords;
    terrain.x_coords = g.x_coords;
    terrain.elevation.assign(g.ny * g.nx, 0.0f);

    LevelSpec levels;
    levels.targets = g.z_coords;
    const Grid3D out = to_agl(g, terrain, levels);
    CHECK(out.values == g.values);
}

TEST_CASE("interpolated values stay within the bracketing level values") {
    Rng rng(31);
    Grid3D g = make_grid(6, 4, 4, HeightDatum::MSL);
    for (auto& v : g.values)
        v = static_cast<float>(uniform(rng, -10.0, 60.0));
    TerrainGrid terrain;
    terrain.ny = g.ny;
    terrain.nx = g.nx;
    terrain.y_coords = g.y_coords;
    terrain.x_coords = g.x_coords;
    terrain.elevation.resize(g.ny * g.nx);
    for (auto& e : terrain.elevation)
        e = static_cast<float>(uniform(rng, 0.0, 0.4));

    const LevelSpec levels = LevelSpec::linspace(0.3, 4.0, 15);
    const Grid3D out = to_agl(g, terrain, levels);

    float lo = g.values[0], hi = g.values[0];
    for (float v : g.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (float v : out.values)
        if (!out.is_missing(v)) {
            CHECK(v >= lo);
            CHECK(v <= hi);
        }
}

TEST_CASE("default training levels span 0.5-17 km in 24 steps") {
    const LevelSpec levels = LevelSpec::default_training_levels();
    REQUIRE(levels.targets.size() == 24);
    CHECK(levels.targets.front() == doctest::Approx(0.5));
    CHECK(levels.targets.back() == doctest::Approx(17.0));
    for (std::size_t i = 1; i < levels.targets.size(); ++i)
        CHECK(levels.targets[i] > levels.targets[i - 1]);
}

} // TEST_SUITE
