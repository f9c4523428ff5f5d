#include "updraft/loss.hpp"

#include <cmath>

#include "updraft/errors.hpp"

namespace updraft {

namespace {

constexpr double kTenE = 27.182818284590452353602874713527; // 10*e

void require_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x))
            throw ValidationError(std::string("non-finite value in ") + what);
}

double pixel_weight(double truth, const WeightPolicy& wp) {
    return truth >= wp.threshold ? wp.weight_above : wp.weight_below;
}

} // namespace

ShashParams transform_pixel(double y1, double y2, double y3, double y4) {
    ShashParams p;
    p.mu = y1;
    p.sigma = std::exp(y2 / kTenE);
    p.gamma = y3;
    p.tau = std::exp(y4 / kTenE);
    return p;
}

ShashParamMaps transform(const RawParamMaps& raw) {
    const std::size_t n = raw.h * raw.w;
    if (raw.y1.size() != n || raw.y2.size() != n || raw.y3.size() != n || raw.y4.size() != n)
        throw ValidationError("raw parameter maps must all be h*w");
    require_finite(raw.y1, "y1");
    require_finite(raw.y2, "y2");
    require_finite(raw.y3, "y3");
    require_finite(raw.y4, "y4");

    ShashParamMaps out;
    out.h = raw.h;
    out.w = raw.w;
    out.params.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.params[i] = transform_pixel(raw.y1[i], raw.y2[i], raw.y3[i], raw.y4[i]);
    return out;
}

PixelLoss nll_grad_pixel(double y1, double y2, double y3, double y4, double truth,
                         const LossConfig& cfg) {
    const ShashParams p = transform_pixel(y1, y2, y3, y4);
    const double weight = pixel_weight(truth, cfg.weight_policy);

    const double lp = shash_log_pdf(p, truth);
    const double density = std::exp(lp); // underflow flushes to 0
    PixelLoss out;
    out.loss = -std::log(density + cfg.epsilon) * weight;

    // d loss / d theta = -w * p/(p+eps) * d log_pdf / d theta. When the
    // density underflows the factor is exactly 0 and the loss sits on the
    // epsilon floor, so the gradient vanishes.
    const double factor = density / (density + cfg.epsilon);
    if (factor == 0.0)
        return out;

    const double z = (truth - p.mu) / p.sigma;
    const double asinh_z = std::asinh(z);
    const double t = p.tau * asinh_z - p.gamma;
    const double s = std::sinh(t);
    const double c = std::cosh(t);
    const double one_pz2 = 1.0 + z * z;

    const double dlp_dt = std::tanh(t) - s * c;
    const double dlp_dz = dlp_dt * p.tau / std::sqrt(one_pz2) - z / one_pz2;

    const double dlp_dmu = -dlp_dz / p.sigma;
    const double dlp_dsigma = -(1.0 + dlp_dz * z) / p.sigma;
    const double dlp_dgamma = -dlp_dt;
    const double dlp_dtau = 1.0 / p.tau + dlp_dt * asinh_z;

    const double scale = -weight * factor;
    out.d_y1 = scale * dlp_dmu;
    out.d_y2 = scale * dlp_dsigma * p.sigma / kTenE; // d sigma / d y2 = sigma/(10e)
    out.d_y3 = scale * dlp_dgamma;
    out.d_y4 = scale * dlp_dtau * p.tau / kTenE;
    return out;
}

LossResult nll(const ShashParamMaps& params, const std::vector<double>& truth,
               const LossConfig& cfg) {
    const std::size_t n = params.h * params.w;
    if (params.params.size() != n || truth.size() != n)
        throw ValidationError("loss shape mismatch between params and truth");
    if (!(cfg.epsilon > 0.0))
        throw ValidationError("loss epsilon must be > 0");

    LossResult out;
    out.per_pixel.resize(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double density = std::exp(shash_log_pdf(params.params[i], truth[i]));
        const double pixel = -std::log(density + cfg.epsilon) *
                             pixel_weight(truth[i], cfg.weight_policy);
        out.per_pixel[i] = pixel;
        sum += pixel;
    }
    out.mean = sum / static_cast<double>(n);
    return out;
}

LossGradients nll_grad(const RawParamMaps& raw, const std::vector<double>& truth,
                       const LossConfig& cfg) {
    const std::size_t n = raw.h * raw.w;
    if (raw.y1.size() != n || truth.size() != n)
        throw ValidationError("loss shape mismatch between raw maps and truth");

    LossGradients out;
    out.d_raw.h = raw.h;
    out.d_raw.w = raw.w;
    out.d_raw.y1.resize(n);
    out.d_raw.y2.resize(n);
    out.d_raw.y3.resize(n);
    out.d_raw.y4.resize(n);

    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const PixelLoss pl =
            nll_grad_pixel(raw.y1[i], raw.y2[i], raw.y3[i], raw.y4[i], truth[i], cfg);
        sum += pl.loss;
        out.d_raw.y1[i] = pl.d_y1 * inv_n;
        out.d_raw.y2[i] = pl.d_y2 * inv_n;
        out.d_raw.y3[i] = pl.d_y3 * inv_n;
        out.d_raw.y4[i] = pl.d_y4 * inv_n;
    }
    out.mean_loss = sum * inv_n;
    return out;
}

} // namespace updraft
