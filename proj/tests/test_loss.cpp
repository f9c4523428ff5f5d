#include "doctest.h"

#include <cmath>

#include "support/oracles.hpp"
#include "updraft/errors.hpp"
#include "updraft/loss.hpp"

using namespace updraft;

namespace {

constexpr double kTenE = 27.182818284590452353602874713527;

double pixel_loss_of(double y1, double y2, double y3, double y4, double truth,
                     const LossConfig& cfg) {
    return nll_grad_pixel(y1, y2, y3, y4, truth, cfg).loss;
}

} // namespace

TEST_SUITE("loss") {

TEST_CASE("stabilized transform worked values") {
    CHECK(transform_pixel(0.0, 0.0, 0.0, 0.0).sigma == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(transform_pixel(0.0, kTenE, 0.0, 0.0).sigma ==
          doctest::Approx(2.718281828459045).epsilon(1e-12));
    CHECK(transform_pixel(0.0, 0.0, 0.0, kTenE).tau ==
          doctest::Approx(2.718281828459045).epsilon(1e-12));

    // The unscaled exponent overflows single precision at 700 and double
    // precision at 710; the scaled form stays finite either way.
    CHECK(std::isinf(std::exp(700.0f)));
    CHECK(std::isinf(std::exp(710.0)));
    const ShashParams p = transform_pixel(0.0, 700.0, 0.0, 0.0);
    CHECK(std::isfinite(p.sigma));
    CHECK(p.sigma == doctest::Approx(std::exp(700.0 / kTenE)).epsilon(1e-12));
    CHECK(p.sigma > 0.0);
    CHECK(std::isfinite(transform_pixel(0.0, 710.0, 0.0, 0.0).sigma));

    // sigma and tau are positive for any finite raw output.
    CHECK(transform_pixel(0.0, -500.0, 0.0, -500.0).sigma > 0.0);
    CHECK(transform_pixel(0.0, -500.0, 0.0, -500.0).tau > 0.0);
}

TEST_CASE("transform validates raw maps") {
    RawParamMaps raw;
    raw.h = 1;
    raw.w = 2;
    raw.y1 = {0.0, 1.0};
    raw.y2 = {0.0, std::nan("")};
    raw.y3 = {0.0, 0.0};
    raw.y4 = {0.0, 0.0};
    CHECK_THROWS_AS(transform(raw), ValidationError);
    raw.y2 = {0.0};
    CHECK_THROWS_AS(transform(raw), ValidationError);
}

TEST_CASE("epsilon floor pins the loss when the density underflows") {
    LossConfig cfg;
    // mu=0, sigma=1, truth far outside: p underflows to exactly 0.
    const double loss = pixel_loss_of(0.0, 0.0, 0.0, 0.0, 500.0, cfg);
    CHECK(loss == doctest::Approx(16.11809565095832).epsilon(1e-10));
    CHECK(loss == doctest::Approx(-std::log(1e-7)).epsilon(1e-12));
}

TEST_CASE("loss at the mode of the standard normal") {
    LossConfig cfg;
    const double loss = pixel_loss_of(0.0, 0.0, 0.0, 0.0, 0.0, cfg);
    CHECK(loss == doctest::Approx(-std::log(0.3989422804014327 + 1e-7)).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.918939).epsilon(1e-5));
}

TEST_CASE("weighting multiplies pixel losses above the threshold") {
    LossConfig cfg;
    cfg.weight_policy.threshold = 10.0;
    cfg.weight_policy.weight_above = 5.0;
    LossConfig unweighted;

    const double base = pixel_loss_of(12.0, 0.5, 0.0, 0.0, 12.0, unweighted);
    CHECK(pixel_loss_of(12.0, 0.5, 0.0, 0.0, 12.0, cfg) ==
          doctest::Approx(5.0 * base).epsilon(1e-12));
    // Below the threshold the weight is 1.
    const double below = pixel_loss_of(2.0, 0.5, 0.0, 0.0, 2.0, unweighted);
    CHECK(pixel_loss_of(2.0, 0.5, 0.0, 0.0, 2.0, cfg) == doctest::Approx(below).epsilon(1e-12));
    // Exactly at the threshold counts as above ("or greater").
    const double at = pixel_loss_of(10.0, 0.5, 0.0, 0.0, 10.0, unweighted);
    CHECK(pixel_loss_of(10.0, 0.5, 0.0, 0.0, 10.0, cfg) ==
          doctest::Approx(5.0 * at).epsilon(1e-12));
}

TEST_CASE("weight_above=1 reduces exactly to the unweighted loss") {
    Rng rng(88);
    LossConfig weighted;
    weighted.weight_policy.threshold = 7.0;
    weighted.weight_policy.weight_above = 1.0;
    LossConfig plain;
    for (int i = 0; i < 200; ++i) {
        const double y1 = uniform(rng, -5.0, 20.0);
        const double y2 = uniform(rng, -10.0, 30.0);
        const double y3 = uniform(rng, -1.0, 1.0);
        const double y4 = uniform(rng, -10.0, 20.0);
        const double truth = uniform(rng, -5.0, 30.0);
        CHECK(pixel_loss_of(y1, y2, y3, y4, truth, weighted) ==
              pixel_loss_of(y1, y2, y3, y4, truth, plain));
    }
}

TEST_CASE("loss is finite for any finite input") {
    Rng rng(4242);
    LossConfig cfg;
    cfg.weight_policy.threshold = 10.0;
    cfg.weight_policy.weight_above = 10.0;
    for (int i = 0; i < 10000; ++i) {
        const double y1 = uniform(rng, -1e3, 1e3);
        const double y2 = uniform(rng, -700.0, 700.0);
        const double y3 = uniform(rng, -50.0, 50.0);
        const double y4 = uniform(rng, -700.0, 700.0);
        const double truth = uniform(rng, -100.0, 100.0);
        const PixelLoss pl = nll_grad_pixel(y1, y2, y3, y4, truth, cfg);
        CHECK(std::isfinite(pl.loss));
        CHECK(std::isfinite(pl.d_y1));
        CHECK(std::isfinite(pl.d_y2));
        CHECK(std::isfinite(pl.d_y3));
        CHECK(std::isfinite(pl.d_y4));
    }
}

TEST_CASE("with p >> epsilon the loss matches -mean log_pdf within 1e-6") {
    Rng rng(777);
    LossConfig cfg;
    ShashParamMaps params;
    params.h = 1;
    params.w = 64;
    std::vector<double> truth(64);
    for (std::size_t i = 0; i < 64; ++i) {
        ShashParams p;
        p.mu = uniform(rng, -2.0, 2.0);
        p.sigma = uniform(rng, 0.5, 1.0);
        p.gamma = 0.0;
        p.tau = 1.0;
        params.params.push_back(p);
        truth[i] = p.mu + uniform(rng, -0.3, 0.3) * p.sigma; // density stays near the mode
    }
    const LossResult result = nll(params, truth, cfg);
    double mean_lp = 0.0;
    for (std::size_t i = 0; i < 64; ++i)
        mean_lp += shash_log_pdf(params.params[i], truth[i]);
    mean_lp /= 64.0;
    CHECK(result.mean == doctest::Approx(-mean_lp).epsilon(1e-6));
}

TEST_CASE("gradient vanishes at the mode of the symmetric case") {
    LossConfig cfg;
    const PixelLoss pl = nll_grad_pixel(5.0, 0.3, 0.0, 0.0, 5.0, cfg);
    CHECK(pl.d_y1 == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences on 100 random pixels") {
    Rng rng(31415);
    LossConfig cfg;
    cfg.weight_policy.threshold = 8.0;
    cfg.weight_policy.weight_above = 3.0;
    const double h = 1e-5;
    int checked = 0;
    while (checked < 100) {
        const double y1 = uniform(rng, -3.0, 15.0);
        const double y2 = uniform(rng, -15.0, 40.0);
        const double y3 = uniform(rng, -1.0, 1.0);
        const double y4 = uniform(rng, -15.0, 25.0);
        const double truth = uniform(rng, -3.0, 18.0);

        const PixelLoss pl = nll_grad_pixel(y1, y2, y3, y4, truth, cfg);

        const double raws[4] = {y1, y2, y3, y4};
        const double analytic[4] = {pl.d_y1, pl.d_y2, pl.d_y3, pl.d_y4};
        bool informative = false;
        for (int k = 0; k < 4; ++k) {
            double plus[4] = {raws[0], raws[1], raws[2], raws[3]};
            double minus[4] = {raws[0], raws[1], raws[2], raws[3]};
            plus[k] += h;
            minus[k] -= h;
            const double fd = (pixel_loss_of(plus[0], plus[1], plus[2], plus[3], truth, cfg) -
                               pixel_loss_of(minus[0], minus[1], minus[2], minus[3], truth, cfg)) /
                              (2.0 * h);
            if (std::fabs(fd) < 1e-8 && std::fabs(analytic[k]) < 1e-8)
                continue; // flat region (epsilon floor); both agree on zero
            informative = true;
            // Central differences bottom out near |loss|*eps/h ~ 1e-10, so
            // epsilon-suppressed gradients get an absolute fallback.
            const double rel =
                std::fabs(analytic[k] - fd) / std::max(std::fabs(fd), std::fabs(analytic[k]));
            const bool ok = rel < 1e-4 || std::fabs(analytic[k] - fd) < 1e-8;
            CHECK(ok);
        }
        if (informative)
            ++checked;
    }
}

TEST_CASE("doubling weight_above doubles gradients only above the threshold") {
    LossConfig w2, w4;
    w2.weight_policy.threshold = 10.0;
    w2.weight_policy.weight_above = 2.0;
    w4.weight_policy.threshold = 10.0;
    w4.weight_policy.weight_above = 4.0;

    const PixelLoss above2 = nll_grad_pixel(11.0, 15.0, 0.2, 3.0, 12.0, w2);
    const PixelLoss above4 = nll_grad_pixel(11.0, 15.0, 0.2, 3.0, 12.0, w4);
    CHECK(above4.d_y1 == doctest::Approx(2.0 * above2.d_y1).epsilon(1e-12));
    CHECK(above4.d_y2 == doctest::Approx(2.0 * above2.d_y2).epsilon(1e-12));

    const PixelLoss below2 = nll_grad_pixel(3.0, 5.0, 0.2, 3.0, 4.0, w2);
    const PixelLoss below4 = nll_grad_pixel(3.0, 5.0, 0.2, 3.0, 4.0, w4);
    CHECK(below4.d_y1 == below2.d_y1);
    CHECK(below4.d_y2 == below2.d_y2);
}

TEST_CASE("map-level nll and gradients agree with the pixel kernel") {
    Rng rng(5);
    RawParamMaps raw;
    raw.h = 4;
    raw.w = 3;
    std::vector<double> truth;
    for (int i = 0; i < 12; ++i) {
        raw.y1.push_back(uniform(rng, -2.0, 12.0));
        raw.y2.push_back(uniform(rng, -5.0, 20.0));
        raw.y3.push_back(uniform(rng, -0.5, 0.5));
        raw.y4.push_back(uniform(rng, -5.0, 10.0));
        truth.push_back(uniform(rng, 0.0, 15.0));
    }
    LossConfig cfg;
    cfg.weight_policy.threshold = 5.0;
    cfg.weight_policy.weight_above = 2.0;

    const LossGradients grads = nll_grad(raw, truth, cfg);
    const LossResult plain = nll(transform(raw), truth, cfg);
    CHECK(grads.mean_loss == doctest::Approx(plain.mean).epsilon(1e-12));

    double manual = 0.0;
    for (int i = 0; i < 12; ++i)
        manual += plain.per_pixel[static_cast<std::size_t>(i)];
    CHECK(plain.mean == doctest::Approx(manual / 12.0).epsilon(1e-12));

    // Shape mismatch fails loudly.
    truth.pop_back();
    CHECK_THROWS_AS(nll_grad(raw, truth, cfg), ValidationError);
}

} // TEST_SUITE
