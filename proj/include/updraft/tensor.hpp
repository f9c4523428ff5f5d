#pragma once

#include <cstddef>
#include <vector>

#include "updraft/errors.hpp"

namespace updraft {

/// Dense row-major double tensor. Layout is (N, C, H, W) for 2-D feature
/// maps and (N, C, D, H, W) for volumes.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s)
            n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    /// Product of dims after the channel dim (spatial footprint).
    std::size_t spatial() const {
        std::size_t n = 1;
        for (std::size_t i = 2; i < shape.size(); ++i)
            n *= shape[i];
        return n;
    }
};

/// Concatenate along the channel dimension (dim 1).
Tensor concat_channels(const std::vector<const Tensor*>& parts);

/// Split a gradient back into per-part channel slices matching `parts`.
std::vector<Tensor> split_channels(const Tensor& grad,
                                   const std::vector<std::size_t>& channel_counts);

} // namespace updraft
