#pragma once

#include <cstddef>
#include <vector>

#include "updraft/shash.hpp"

namespace updraft {

/// The four raw output maps of the network (one per SHASH parameter).
struct RawParamMaps {
    std::size_t h = 0, w = 0;
    std::vector<double> y1, y2, y3, y4; // each h*w
};

struct ShashParamMaps {
    std::size_t h = 0, w = 0;
    std::vector<ShashParams> params; // h*w
};

/// Pixels with truth >= threshold get weight_above, the rest weight_below.
struct WeightPolicy {
    double threshold = 10.0;  // m/s
    double weight_above = 1.0;
    double weight_below = 1.0;
};

struct LossConfig {
    double epsilon = 1e-7; // likelihood floor
    WeightPolicy weight_policy;
};

/// Raw outputs -> valid SHASH parameters:
///   mu = y1, gamma = y3, sigma = exp(y2/(10e)), tau = exp(y4/(10e)).
/// The scaled exponent keeps sigma and tau finite for any representable
/// raw output (exp(y2) alone overflows for y2 >= ~710).
ShashParams transform_pixel(double y1, double y2, double y3, double y4);
ShashParamMaps transform(const RawParamMaps& raw);

/// Per-pixel loss -ln(p + epsilon) * weight(truth), and its analytic
/// gradients with respect to the four raw outputs. p = exp(log_pdf) with
/// underflow flushed to zero, so the loss is finite for any finite input.
struct PixelLoss {
    double loss = 0.0;
    double d_y1 = 0.0, d_y2 = 0.0, d_y3 = 0.0, d_y4 = 0.0;
};
PixelLoss nll_grad_pixel(double y1, double y2, double y3, double y4, double truth,
                         const LossConfig& cfg);

struct LossResult {
    double mean = 0.0;               // mean over pixels
    std::vector<double> per_pixel;   // h*w weighted pixel losses
};

/// Weighted epsilon-floored negative log likelihood over a map.
LossResult nll(const ShashParamMaps& params, const std::vector<double>& truth,
               const LossConfig& cfg);

/// Gradients of the mean weighted loss with respect to each raw map.
struct LossGradients {
    double mean_loss = 0.0;
    RawParamMaps d_raw;
};
LossGradients nll_grad(const RawParamMaps& raw, const std::vector<double>& truth,
                       const LossConfig& cfg);

} // namespace updraft
