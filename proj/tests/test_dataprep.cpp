#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "updraft/dataprep.hpp"
#include "updraft/errors.hpp"
#include "updraft/grid.hpp"
#include "updraft/half.hpp"
#include "updraft/rng.hpp"

using namespace updraft;

namespace {

std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

PatchSample tiny_sample(std::vector<float> x, std::vector<float> y, std::size_t h,
                        std::size_t w, std::size_t l) {
    PatchSample s;
    s.h = h;
    s.w = w;
    s.l = l;
    s.x = std::move(x);
    s.y = std::move(y);
    s.z_coords.resize(l);
    for (std::size_t i = 0; i < l; ++i)
        s.z_coords[i] = 0.5 + static_cast<double>(i);
    return s;
}

} // namespace

TEST_SUITE("dataprep") {

TEST_CASE("synthetic scenes are deterministic in the seed") {
    SynthConfig cfg;
    cfg.seed = 99;
    cfg.ny = cfg.nx = 48;
    cfg.nz = 6;
    cfg.n_storms = 2;
    auto [refl_a, w_a] = synth_storms(cfg);
    auto [refl_b, w_b] = synth_storms(cfg);
    CHECK(refl_a.values == refl_b.values);
    CHECK(w_a.values == w_b.values);

    cfg.seed = 100;
    auto [refl_c, w_c] = synth_storms(cfg);
    CHECK(refl_a.values != refl_c.values);
}

TEST_CASE("empty scene has no echo and near-zero w") {
    SynthConfig cfg;
    cfg.seed = 3;
    cfg.ny = cfg.nx = 40;
    cfg.nz = 6;
    cfg.n_storms = 0;
    auto [refl, w] = synth_storms(cfg);
    for (float v : refl.values)
        CHECK(v <= 0.0f);
    for (float v : w.values)
        CHECK(std::fabs(v) < 0.5f);
}

TEST_CASE("composite reflectivity and updraft correlate over storm pixels") {
    // 100 storms across 25 scenes; the monotone echo-top/intensity link is
    // what makes the retrieval learnable at all.
    std::vector<double> comp_px, w_px;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        SynthConfig cfg;
        cfg.seed = 1000 + seed;
        cfg.ny = cfg.nx = 64;
        cfg.nz = 12;
        cfg.n_storms = 4;
        auto [refl, w] = synth_storms(cfg);
        const std::vector<float> comp = composite_max(refl);
        const std::vector<float> wmax = composite_max(w);
        for (std::size_t i = 0; i < comp.size(); ++i) {
            if (comp[i] > 10.0f) {
                comp_px.push_back(comp[i]);
                w_px.push_back(wmax[i]);
            }
        }
    }
    REQUIRE(comp_px.size() > 1000);
    double mc = 0.0, mw = 0.0;
    for (std::size_t i = 0; i < comp_px.size(); ++i) {
        mc += comp_px[i];
        mw += w_px[i];
    }
    mc /= static_cast<double>(comp_px.size());
    mw /= static_cast<double>(comp_px.size());
    double scc = 0.0, sww = 0.0, scw = 0.0;
    for (std::size_t i = 0; i < comp_px.size(); ++i) {
        scc += (comp_px[i] - mc) * (comp_px[i] - mc);
        sww += (w_px[i] - mw) * (w_px[i] - mw);
        scw += (comp_px[i] - mc) * (w_px[i] - mw);
    }
    const double corr = scw / std::sqrt(scc * sww);
    CHECK(corr > 0.5);
}

TEST_CASE("slice_patch extracts the sub-volume and the column-max label") {
    SynthConfig cfg;
    cfg.seed = 5;
    cfg.ny = cfg.nx = 32;
    cfg.nz = 4;
    cfg.n_storms = 1;
    auto [refl, w] = synth_storms(cfg);

    SUBCASE("full-domain slice is the identity") {
        const PatchSample s = slice_patch(refl, w, 0, 0, refl.ny, refl.nx);
        CHECK(s.x == refl.values);
        const std::vector<float> wmax = composite_max(w);
        CHECK(s.y == wmax);
    }
    SUBCASE("column max picks the largest w") {
        Grid3D w2 = w;
        const std::size_t plane = w.ny * w.nx;
        w2.values[0 * plane] = -3.0f;
        w2.values[1 * plane] = 5.0f;
        w2.values[2 * plane] = 12.0f;
        w2.values[3 * plane] = 1.0f;
        const PatchSample s = slice_patch(refl, w2, 0, 0, 4, 4);
        CHECK(s.y[0] == 12.0f);
    }
    SUBCASE("out-of-bounds slice is rejected") {
        CHECK_THROWS_AS(slice_patch(refl, w, 10, 10, 32, 32), ValidationError);
        CHECK_THROWS_AS(slice_patch(refl, w, 0, 0, 64, 64), ValidationError);
    }
}

TEST_CASE("convection filter threshold is >=") {
    PatchSample s = tiny_sample(std::vector<float>(4, 0.0f), {9.9f, 9.9f, 9.9f, 9.9f}, 2, 2, 1);
    CHECK_FALSE(convection_filter(s, 10.0));
    s.y[2] = 10.0f;
    CHECK(convection_filter(s, 10.0));
    s.y = {0.0f, 0.0f, 0.0f, 0.0f};
    CHECK_FALSE(convection_filter(s, 10.0));

    // Agrees with a brute-force max scan on arbitrary labels.
    s.y = {3.0f, 11.2f, -4.0f, 9.99f};
    float best = s.y[0];
    for (float v : s.y)
        best = std::max(best, v);
    CHECK(convection_filter(s, 10.0) == (best >= 10.0f));
}

TEST_CASE("min-max scaler worked values and clipping") {
    std::vector<PatchSample> train;
    train.push_back(tiny_sample({0.0f, 80.0f, 40.0f, 20.0f}, std::vector<float>(4, 0.0f), 2, 2, 1));
    const ScalerParams scaler = fit_scaler(train, "unit-test");
    CHECK(scaler.min_dbz == 0.0);
    CHECK(scaler.max_dbz == 80.0);

    CHECK(scale_value(40.0, scaler) == doctest::Approx(0.5));
    CHECK(scale_value(0.0, scaler) == 0.0);
    CHECK(scale_value(80.0, scaler) == 1.0);
    CHECK(scale_value(90.0, scaler) == 1.0);  // clipped
    CHECK(scale_value(-10.0, scaler) == 0.0); // clipped

    // Round trip for in-range values.
    for (double v : {0.0, 12.5, 40.0, 79.9})
        CHECK(unscale_value(scale_value(v, scaler), scaler) == doctest::Approx(v).epsilon(1e-6));

    SUBCASE("constant training data is rejected") {
        std::vector<PatchSample> flat;
        flat.push_back(tiny_sample({5.0f, 5.0f, 5.0f, 5.0f}, std::vector<float>(4, 0.0f), 2, 2, 1));
        CHECK_THROWS_AS(fit_scaler(flat, "flat"), ValidationError);
    }
    SUBCASE("no samples is rejected") {
        std::vector<PatchSample> none;
        CHECK_THROWS_AS(fit_scaler(none, "none"), ValidationError);
    }
}

TEST_CASE("half-precision archival rounding") {
    PatchSample s = tiny_sample({0.5f, 0.1f, 0.0f, 1.0f}, {2.0f, 0.0f, 12.25f, 30.1f}, 2, 2, 1);
    quantize_f16(s);
    CHECK(s.x[0] == 0.5f); // dyadic rational: exact
    CHECK(s.x[2] == 0.0f);
    CHECK(s.x[3] == 1.0f);
    CHECK(std::fabs(s.x[1] - 0.1) <= 0.1 * std::pow(2.0, -11));
    CHECK(s.y[2] == 12.25f);
    CHECK(std::fabs(s.y[3] - 30.1) <= 30.1 * std::pow(2.0, -11));

    SUBCASE("x outside [0,1] is rejected") {
        PatchSample bad = tiny_sample({1e6f, 0.0f, 0.0f, 0.0f}, std::vector<float>(4, 0.0f), 2, 2, 1);
        CHECK_THROWS_AS(quantize_f16(bad), ValidationError);
    }
    SUBCASE("non-finite values are rejected") {
        PatchSample bad = tiny_sample({0.5f, 0.5f, 0.5f, 0.5f},
                                      {std::numeric_limits<float>::infinity(), 0, 0, 0}, 2, 2, 1);
        CHECK_THROWS_AS(quantize_f16(bad), ValidationError);
    }
    SUBCASE("half round trip is within half-precision rounding for random values") {
        Rng rng(8);
        for (int i = 0; i < 1000; ++i) {
            const float v = static_cast<float>(uniform01(rng));
            const float back = f16_to_f32(f32_to_f16(v));
            CHECK(std::fabs(back - v) <= std::max(std::fabs(static_cast<double>(v)), 1e-4) *
                                             std::pow(2.0, -11));
        }
    }
}

TEST_CASE("build_dataset writes disjoint splits a streaming reader can load") {
    const std::string grids = temp_dir("dp_grids");
    const std::string out = temp_dir("dp_dataset");

    std::vector<std::pair<std::string, std::string>> pairs;
    for (int i = 0; i < 5; ++i) {
        SynthConfig cfg;
        cfg.seed = 40 + static_cast<std::uint64_t>(i);
        cfg.ny = cfg.nx = 48;
        cfg.nz = 8;
        cfg.n_storms = 3;
        auto [refl, w] = synth_storms(cfg);
        const std::string rp = grids + "/refl_" + std::to_string(i) + ".zgrid";
        const std::string wp = grids + "/w_" + std::to_string(i) + ".zgrid";
        refl.name = "refl_" + std::to_string(i);
        write_grid(refl, rp);
        write_grid(w, wp);
        pairs.emplace_back(rp, wp);
    }

    PrepareConfig cfg;
    cfg.patch_h = cfg.patch_w = 16;
    cfg.n_train = 24;
    cfg.n_val = 8;
    cfg.n_test = 8;
    cfg.seed = 77;
    const SplitManifest manifest = build_dataset(pairs, out, cfg);

    CHECK(manifest.train.samples.size() == 24);
    CHECK(manifest.val.samples.size() == 8);
    CHECK(manifest.test.samples.size() == 8);
    CHECK_NOTHROW(check_disjoint(manifest));
    CHECK(manifest.train.scaler.max_dbz > manifest.train.scaler.min_dbz);

    DatasetReader reader(out, "train");
    CHECK(reader.size() == 24);
    const PatchSample s = reader.load(0);
    CHECK(s.h == 16);
    CHECK(s.w == 16);
    CHECK(s.l == 8);
    // Patch dims support up to depth-4 pooling, beyond the configured 2^3.
    CHECK(s.h % 8 == 0);
    for (float v : s.x) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    // Every archived training sample passed the convection filter.
    for (std::size_t i = 0; i < reader.size(); ++i)
        CHECK(convection_filter(reader.load(i), cfg.convection_threshold));
}

TEST_CASE("check_disjoint flags a shared sample") {
    SplitManifest m;
    ManifestEntry e;
    e.x_path = "a_x.zgrid";
    e.y_path = "a_y.zgrid";
    e.source_id = "src";
    e.origin_y = 3;
    e.origin_x = 4;
    m.train.samples.push_back(e);
    m.test.samples.push_back(e);
    CHECK_THROWS_AS(check_disjoint(m), ValidationError);
}

} // TEST_SUITE
