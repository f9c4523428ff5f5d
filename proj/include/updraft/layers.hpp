#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "updraft/rng.hpp"
#include "updraft/tensor.hpp"

namespace updraft {

/// A trainable array with its gradient. `decay` marks kernels subject to L2
/// regularization (biases and batch-norm affine terms are exempt).
struct ParamTensor {
    std::vector<double> value;
    std::vector<double> grad;
    bool decay = false;
};

/// Same-padding convolution, spatial rank 2 or 3, stride 1, odd kernel.
/// Kernels are Glorot-uniform initialized; biases start at zero.
class Conv {
public:
    Conv(int rank, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& rng);

    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

    ParamTensor weights; // (oc, ic, k^rank)
    ParamTensor bias;    // (oc)

    int rank() const { return rank_; }
    std::size_t in_channels() const { return in_ch_; }
    std::size_t out_channels() const { return out_ch_; }

private:
    int rank_;
    std::size_t in_ch_, out_ch_, k_;
    Tensor cached_x_;
};

class ReLU {
public:
    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

private:
    std::vector<std::uint8_t> active_;
};

/// Per-channel batch normalization over batch and spatial dims. Training
/// uses batch statistics and updates the running estimates; inference uses
/// the running estimates.
class BatchNorm {
public:
    explicit BatchNorm(std::size_t channels);

    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

    ParamTensor gamma, beta;
    std::vector<double> running_mean, running_var;

private:
    std::size_t channels_;
    double momentum_ = 0.1;
    double eps_ = 1e-5;
    std::vector<double> inv_std_;
    Tensor cached_xhat_;
};

/// 2x (or 2x2x2) max pooling, stride equal to the window. Spatial dims must
/// be even.
class MaxPool {
public:
    explicit MaxPool(int rank) : rank_(rank) {}

    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

private:
    int rank_;
    std::vector<std::size_t> in_shape_;
    std::vector<std::size_t> argmax_;
};

/// Nearest-neighbor 2x upsampling (inverse footprint of MaxPool).
class Upsample {
public:
    explicit Upsample(int rank) : rank_(rank) {}

    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

private:
    int rank_;
    std::vector<std::size_t> in_shape_;
};

/// Collapses the depth axis of a volume by averaging: (N,C,D,H,W)->(N,C,H,W).
class MeanOverDepth {
public:
    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

private:
    std::vector<std::size_t> in_shape_;
};

} // namespace updraft
