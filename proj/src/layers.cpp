#include "updraft/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace updraft {

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
    if (parts.empty())
        throw ValidationError("concat needs at least one input");
    std::vector<std::size_t> shape = parts[0]->shape;
    std::size_t total_ch = 0;
    for (const Tensor* p : parts) {
        if (p->shape.size() != shape.size() || p->shape[0] != shape[0] ||
            p->spatial() != parts[0]->spatial())
            throw ValidationError("concat inputs must agree on batch and spatial dims");
        total_ch += p->shape[1];
    }
    shape[1] = total_ch;
    Tensor out(shape);
    const std::size_t n_batch = shape[0];
    const std::size_t rest = parts[0]->spatial();
    for (std::size_t n = 0; n < n_batch; ++n) {
        std::size_t ch_off = 0;
        for (const Tensor* p : parts) {
            const std::size_t c = p->shape[1];
            std::memcpy(out.data.data() + (n * total_ch + ch_off) * rest,
                        p->data.data() + n * c * rest, c * rest * sizeof(double));
            ch_off += c;
        }
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& grad,
                                   const std::vector<std::size_t>& channel_counts) {
    std::size_t total = 0;
    for (std::size_t c : channel_counts)
        total += c;
    if (grad.shape.size() < 2 || grad.shape[1] != total)
        throw ValidationError("split channel counts do not match tensor");
    const std::size_t n_batch = grad.shape[0];
    const std::size_t rest = grad.spatial();

    std::vector<Tensor> parts;
    parts.reserve(channel_counts.size());
    std::size_t ch_off = 0;
    for (std::size_t c : channel_counts) {
        std::vector<std::size_t> shape = grad.shape;
        shape[1] = c;
        Tensor part(shape);
        for (std::size_t n = 0; n < n_batch; ++n)
            std::memcpy(part.data.data() + n * c * rest,
                        grad.data.data() + (n * total + ch_off) * rest,
                        c * rest * sizeof(double));
        ch_off += c;
        parts.push_back(std::move(part));
    }
    return parts;
}

// ---------------------------------------------------------------------------
// Conv
// ---------------------------------------------------------------------------

Conv::Conv(int rank, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& rng)
    : rank_(rank), in_ch_(in_ch), out_ch_(out_ch), k_(kernel) {
    if (rank != 2 && rank != 3)
        throw ValidationError("convolution rank must be 2 or 3");
    if (kernel % 2 == 0 || kernel == 0)
        throw ValidationError("convolution kernel size must be odd");

    std::size_t taps = kernel * kernel;
    if (rank == 3)
        taps *= kernel;
    const std::size_t fan_in = in_ch * taps;
    const std::size_t fan_out = out_ch * taps;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));

    weights.value.resize(out_ch * in_ch * taps);
    for (double& w : weights.value)
        w = uniform(rng, -limit, limit);
    weights.grad.assign(weights.value.size(), 0.0);
    weights.decay = true;

    bias.value.assign(out_ch, 0.0);
    bias.grad.assign(out_ch, 0.0);
}

namespace {

void conv2d_forward(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                    std::size_t ic_n, std::size_t oc_n, std::size_t k, Tensor& out) {
    const std::size_t n_batch = x.shape[0];
    const std::size_t h = x.shape[2], wd = x.shape[3];
    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t plane = h * wd;

    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t oc = 0; oc < oc_n; ++oc) {
            double* out_p = out.data.data() + (n * oc_n + oc) * plane;
            std::fill(out_p, out_p + plane, b[oc]);
            for (std::size_t ic = 0; ic < ic_n; ++ic) {
                const double* x_p = x.data.data() + (n * ic_n + ic) * plane;
                const double* w_p = w.data() + (oc * ic_n + ic) * k * k;
                for (std::size_t kh = 0; kh < k; ++kh) {
                    const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(kh) - p;
                    const std::size_t oh_lo = dh < 0 ? static_cast<std::size_t>(-dh) : 0;
                    const std::size_t oh_hi =
                        dh > 0 ? h - static_cast<std::size_t>(dh) : h;
                    for (std::size_t kw = 0; kw < k; ++kw) {
                        const double wv = w_p[kh * k + kw];
                        const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(kw) - p;
                        const std::size_t ow_lo = dw < 0 ? static_cast<std::size_t>(-dw) : 0;
                        const std::size_t ow_hi =
                            dw > 0 ? wd - static_cast<std::size_t>(dw) : wd;
                        for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const double* xrow =
                                x_p + (static_cast<std::ptrdiff_t>(oh) + dh) * wd + dw;
                            double* orow = out_p + oh * wd;
                            for (std::size_t ow = ow_lo; ow < ow_hi; ++ow)
                                orow[ow] += wv * xrow[ow];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward(const Tensor& x, const Tensor& gout, const std::vector<double>& w,
                     std::size_t ic_n, std::size_t oc_n, std::size_t k, Tensor& gx,
                     std::vector<double>& gw, std::vector<double>& gb) {
    const std::size_t n_batch = x.shape[0];
    const std::size_t h = x.shape[2], wd = x.shape[3];
    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t plane = h * wd;

    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t oc = 0; oc < oc_n; ++oc) {
            const double* g_p = gout.data.data() + (n * oc_n + oc) * plane;
            double acc_b = 0.0;
            for (std::size_t i = 0; i < plane; ++i)
                acc_b += g_p[i];
            gb[oc] += acc_b;

            for (std::size_t ic = 0; ic < ic_n; ++ic) {
                const double* x_p = x.data.data() + (n * ic_n + ic) * plane;
                double* gx_p = gx.data.data() + (n * ic_n + ic) * plane;
                const double* w_p = w.data() + (oc * ic_n + ic) * k * k;
                double* gw_p = gw.data() + (oc * ic_n + ic) * k * k;
                for (std::size_t kh = 0; kh < k; ++kh) {
                    const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(kh) - p;
                    const std::size_t oh_lo = dh < 0 ? static_cast<std::size_t>(-dh) : 0;
                    const std::size_t oh_hi = dh > 0 ? h - static_cast<std::size_t>(dh) : h;
                    for (std::size_t kw = 0; kw < k; ++kw) {
                        const double wv = w_p[kh * k + kw];
                        const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(kw) - p;
                        const std::size_t ow_lo = dw < 0 ? static_cast<std::size_t>(-dw) : 0;
                        const std::size_t ow_hi = dw > 0 ? wd - static_cast<std::size_t>(dw) : wd;
                        double acc_w = 0.0;
                        for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const double* xrow =
                                x_p + (static_cast<std::ptrdiff_t>(oh) + dh) * wd + dw;
                            double* gxrow =
                                gx_p + (static_cast<std::ptrdiff_t>(oh) + dh) * wd + dw;
                            const double* grow = g_p + oh * wd;
                            for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                                acc_w += grow[ow] * xrow[ow];
                                gxrow[ow] += wv * grow[ow];
                            }
                        }
                        gw_p[kh * k + kw] += acc_w;
                    }
                }
            }
        }
    }
}

void conv3d_forward(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                    std::size_t ic_n, std::size_t oc_n, std::size_t k, Tensor& out) {
    const std::size_t n_batch = x.shape[0];
    const std::size_t d = x.shape[2], h = x.shape[3], wd = x.shape[4];
    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t plane = h * wd;
    const std::size_t vol = d * plane;

    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t oc = 0; oc < oc_n; ++oc) {
            double* out_p = out.data.data() + (n * oc_n + oc) * vol;
            std::fill(out_p, out_p + vol, b[oc]);
            for (std::size_t ic = 0; ic < ic_n; ++ic) {
                const double* x_p = x.data.data() + (n * ic_n + ic) * vol;
                const double* w_p = w.data() + (oc * ic_n + ic) * k * k * k;
                for (std::size_t kd = 0; kd < k; ++kd) {
                    const std::ptrdiff_t dd = static_cast<std::ptrdiff_t>(kd) - p;
                    const std::size_t od_lo = dd < 0 ? static_cast<std::size_t>(-dd) : 0;
                    const std::size_t od_hi = dd > 0 ? d - static_cast<std::size_t>(dd) : d;
                    for (std::size_t kh = 0; kh < k; ++kh) {
                        const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(kh) - p;
                        const std::size_t oh_lo = dh < 0 ? static_cast<std::size_t>(-dh) : 0;
                        const std::size_t oh_hi = dh > 0 ? h - static_cast<std::size_t>(dh) : h;
                        for (std::size_t kw = 0; kw < k; ++kw) {
                            const double wv = w_p[(kd * k + kh) * k + kw];
                            const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(kw) - p;
                            const std::size_t ow_lo = dw < 0 ? static_cast<std::size_t>(-dw) : 0;
                            const std::size_t ow_hi =
                                dw > 0 ? wd - static_cast<std::size_t>(dw) : wd;
                            for (std::size_t od = od_lo; od < od_hi; ++od) {
                                const double* x_pl =
                                    x_p + (static_cast<std::ptrdiff_t>(od) + dd) * plane;
                                double* o_pl = out_p + od * plane;
                                for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                                    const double* xrow =
                                        x_pl + (static_cast<std::ptrdiff_t>(oh) + dh) * wd + dw;
                                    double* orow = o_pl + oh * wd;
                                    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow)
                                        orow[ow] += wv * xrow[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv3d_backward(const Tensor& x, const Tensor& gout, const std::vector<double>& w,
                     std::size_t ic_n, std::size_t oc_n, std::size_t k, Tensor& gx,
                     std::vector<double>& gw, std::vector<double>& gb) {
    const std::size_t n_batch = x.shape[0];
    const std::size_t d = x.shape[2], h = x.shape[3], wd = x.shape[4];
    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t plane = h * wd;
    const std::size_t vol = d * plane;

    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t oc = 0; oc < oc_n; ++oc) {
            const double* g_p = gout.data.data() + (n * oc_n + oc) * vol;
            double acc_b = 0.0;
            for (std::size_t i = 0; i < vol; ++i)
                acc_b += g_p[i];
            gb[oc] += acc_b;

            for (std::size_t ic = 0; ic < ic_n; ++ic) {
                const double* x_p = x.data.data() + (n * ic_n + ic) * vol;
                double* gx_p = gx.data.data() + (n * ic_n + ic) * vol;
                const double* w_p = w.data() + (oc * ic_n + ic) * k * k * k;
                double* gw_p = gw.data() + (oc * ic_n + ic) * k * k * k;
                for (std::size_t kd = 0; kd < k; ++kd) {
                    const std::ptrdiff_t dd = static_cast<std::ptrdiff_t>(kd) - p;
                    const std::size_t od_lo = dd < 0 ? static_cast<std::size_t>(-dd) : 0;
                    const std::size_t od_hi = dd > 0 ? d - static_cast<std::size_t>(dd) : d;
                    for (std::size_t kh = 0; kh < k; ++kh) {
                        const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(kh) - p;
                        const std::size_t oh_lo = dh < 0 ? static_cast<std::size_t>(-dh) : 0;
                        const std::size_t oh_hi = dh > 0 ? h - static_cast<std::size_t>(dh) : h;
                        for (std::size_t kw = 0; kw < k; ++kw) {
                            const double wv = w_p[(kd * k + kh) * k + kw];
                            const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(kw) - p;
                            const std::size_t ow_lo = dw < 0 ? static_cast<std::size_t>(-dw) : 0;
                            const std::size_t ow_hi =
                                dw > 0 ? wd - static_cast<std::size_t>(dw) : wd;
                            double acc_w = 0.0;
                            for (std::size_t od = od_lo; od < od_hi; ++od) {
                                const double* x_pl =
                                    x_p + (static_cast<std::ptrdiff_t>(od) + dd) * plane;
                                double* gx_pl =
                                    gx_p + (static_cast<std::ptrdiff_t>(od) + dd) * plane;
                                const double* g_pl = g_p + od * plane;
                                for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                                    const double* xrow =
                                        x_pl + (static_cast<std::ptrdiff_t>(oh) + dh) * wd + dw;
                                    double* gxrow =
                                        gx_pl + (static_cast<std::ptrdiff_t>(oh) + dh) * wd + dw;
                                    const double* grow = g_pl + oh * wd;
                                    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                                        acc_w += grow[ow] * xrow[ow];
                                        gxrow[ow] += wv * grow[ow];
                                    }
                                }
                            }
                            gw_p[(kd * k + kh) * k + kw] += acc_w;
                        }
                    }
                }
            }
        }
    }
}

} // namespace

Tensor Conv::forward(const Tensor& x, bool /*training*/) {
    const std::size_t want_dims = rank_ == 2 ? 4u : 5u;
    if (x.shape.size() != want_dims || x.shape[1] != in_ch_)
        throw ValidationError("convolution input shape mismatch");
    cached_x_ = x;

    std::vector<std::size_t> out_shape = x.shape;
    out_shape[1] = out_ch_;
    Tensor out(out_shape);
    if (rank_ == 2)
        conv2d_forward(x, weights.value, bias.value, in_ch_, out_ch_, k_, out);
    else
        conv3d_forward(x, weights.value, bias.value, in_ch_, out_ch_, k_, out);
    return out;
}

Tensor Conv::backward(const Tensor& grad_out) {
    Tensor gx(cached_x_.shape);
    if (rank_ == 2)
        conv2d_backward(cached_x_, grad_out, weights.value, in_ch_, out_ch_, k_, gx,
                        weights.grad, bias.grad);
    else
        conv3d_backward(cached_x_, grad_out, weights.value, in_ch_, out_ch_, k_, gx,
                        weights.grad, bias.grad);
    return gx;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool /*training*/) {
    Tensor out = x;
    active_.assign(x.numel(), 0);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        if (out.data[i] > 0.0)
            active_[i] = 1;
        else
            out.data[i] = 0.0;
    }
    return out;
}

Tensor ReLU::backward(const Tensor& grad_out) {
    Tensor gx = grad_out;
    for (std::size_t i = 0; i < gx.numel(); ++i)
        if (!active_[i])
            gx.data[i] = 0.0;
    return gx;
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t channels) : channels_(channels) {
    gamma.value.assign(channels, 1.0);
    gamma.grad.assign(channels, 0.0);
    beta.value.assign(channels, 0.0);
    beta.grad.assign(channels, 0.0);
    running_mean.assign(channels, 0.0);
    running_var.assign(channels, 1.0);
}

Tensor BatchNorm::forward(const Tensor& x, bool training) {
    if (x.shape.size() < 3 || x.shape[1] != channels_)
        throw ValidationError("batch norm channel mismatch");
    const std::size_t n_batch = x.shape[0];
    const std::size_t rest = x.spatial();
    const std::size_t m = n_batch * rest;

    Tensor out(x.shape);
    if (training) {
        cached_xhat_ = Tensor(x.shape);
        inv_std_.assign(channels_, 0.0);
        for (std::size_t c = 0; c < channels_; ++c) {
            double mean = 0.0;
            for (std::size_t n = 0; n < n_batch; ++n) {
                const double* xp = x.data.data() + (n * channels_ + c) * rest;
                for (std::size_t r = 0; r < rest; ++r)
                    mean += xp[r];
            }
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t n = 0; n < n_batch; ++n) {
                const double* xp = x.data.data() + (n * channels_ + c) * rest;
                for (std::size_t r = 0; r < rest; ++r) {
                    const double d = xp[r] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(m);
            const double inv = 1.0 / std::sqrt(var + eps_);
            inv_std_[c] = inv;
            running_mean[c] = (1.0 - momentum_) * running_mean[c] + momentum_ * mean;
            running_var[c] = (1.0 - momentum_) * running_var[c] + momentum_ * var;

            const double g = gamma.value[c], bt = beta.value[c];
            for (std::size_t n = 0; n < n_batch; ++n) {
                const double* xp = x.data.data() + (n * channels_ + c) * rest;
                double* hp = cached_xhat_.data.data() + (n * channels_ + c) * rest;
                double* op = out.data.data() + (n * channels_ + c) * rest;
                for (std::size_t r = 0; r < rest; ++r) {
                    const double xh = (xp[r] - mean) * inv;
                    hp[r] = xh;
                    op[r] = g * xh + bt;
                }
            }
        }
    } else {
        for (std::size_t c = 0; c < channels_; ++c) {
            const double inv = 1.0 / std::sqrt(running_var[c] + eps_);
            const double g = gamma.value[c], bt = beta.value[c];
            const double mean = running_mean[c];
            for (std::size_t n = 0; n < n_batch; ++n) {
                const double* xp = x.data.data() + (n * channels_ + c) * rest;
                double* op = out.data.data() + (n * channels_ + c) * rest;
                for (std::size_t r = 0; r < rest; ++r)
                    op[r] = g * (xp[r] - mean) * inv + bt;
            }
        }
    }
    return out;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
    const std::size_t n_batch = grad_out.shape[0];
    const std::size_t rest = grad_out.spatial();
    const double m = static_cast<double>(n_batch * rest);

    Tensor gx(grad_out.shape);
    for (std::size_t c = 0; c < channels_; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
            const double* gp = grad_out.data.data() + (n * channels_ + c) * rest;
            const double* hp = cached_xhat_.data.data() + (n * channels_ + c) * rest;
            for (std::size_t r = 0; r < rest; ++r) {
                sum_dy += gp[r];
                sum_dy_xhat += gp[r] * hp[r];
            }
        }
        gamma.grad[c] += sum_dy_xhat;
        beta.grad[c] += sum_dy;

        const double g_inv = gamma.value[c] * inv_std_[c];
        for (std::size_t n = 0; n < n_batch; ++n) {
            const double* gp = grad_out.data.data() + (n * channels_ + c) * rest;
            const double* hp = cached_xhat_.data.data() + (n * channels_ + c) * rest;
            double* op = gx.data.data() + (n * channels_ + c) * rest;
            for (std::size_t r = 0; r < rest; ++r)
                op[r] = g_inv * (gp[r] - sum_dy / m - hp[r] * sum_dy_xhat / m);
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// MaxPool / Upsample / MeanOverDepth
// ---------------------------------------------------------------------------

Tensor MaxPool::forward(const Tensor& x, bool /*training*/) {
    in_shape_ = x.shape;
    const std::size_t want_dims = rank_ == 2 ? 4u : 5u;
    if (x.shape.size() != want_dims)
        throw ValidationError("max pool input rank mismatch");
    for (std::size_t i = 2; i < x.shape.size(); ++i)
        if (x.shape[i] % 2 != 0)
            throw ValidationError("max pool needs even spatial dims");

    std::vector<std::size_t> out_shape = x.shape;
    for (std::size_t i = 2; i < out_shape.size(); ++i)
        out_shape[i] /= 2;
    Tensor out(out_shape);
    argmax_.assign(out.numel(), 0);

    const std::size_t n_maps = x.shape[0] * x.shape[1];
    if (rank_ == 2) {
        const std::size_t h = x.shape[2], w = x.shape[3];
        const std::size_t oh_n = h / 2, ow_n = w / 2;
        for (std::size_t map = 0; map < n_maps; ++map) {
            const double* xp = x.data.data() + map * h * w;
            double* op = out.data.data() + map * oh_n * ow_n;
            std::size_t* ap = argmax_.data() + map * oh_n * ow_n;
            for (std::size_t oh = 0; oh < oh_n; ++oh) {
                for (std::size_t ow = 0; ow < ow_n; ++ow) {
                    std::size_t best_idx = (2 * oh) * w + 2 * ow;
                    double best = xp[best_idx];
                    for (int a = 0; a < 2; ++a) {
                        for (int b = 0; b < 2; ++b) {
                            const std::size_t idx =
                                (2 * oh + static_cast<std::size_t>(a)) * w + 2 * ow +
                                static_cast<std::size_t>(b);
                            if (xp[idx] > best) {
                                best = xp[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    op[oh * ow_n + ow] = best;
                    ap[oh * ow_n + ow] = map * h * w + best_idx;
                }
            }
        }
    } else {
        const std::size_t d = x.shape[2], h = x.shape[3], w = x.shape[4];
        const std::size_t od_n = d / 2, oh_n = h / 2, ow_n = w / 2;
        for (std::size_t map = 0; map < n_maps; ++map) {
            const double* xp = x.data.data() + map * d * h * w;
            double* op = out.data.data() + map * od_n * oh_n * ow_n;
            std::size_t* ap = argmax_.data() + map * od_n * oh_n * ow_n;
            for (std::size_t od = 0; od < od_n; ++od) {
                for (std::size_t oh = 0; oh < oh_n; ++oh) {
                    for (std::size_t ow = 0; ow < ow_n; ++ow) {
                        std::size_t best_idx = ((2 * od) * h + 2 * oh) * w + 2 * ow;
                        double best = xp[best_idx];
                        for (int a = 0; a < 2; ++a)
                            for (int bb = 0; bb < 2; ++bb)
                                for (int cc = 0; cc < 2; ++cc) {
                                    const std::size_t idx =
                                        ((2 * od + static_cast<std::size_t>(a)) * h + 2 * oh +
                                         static_cast<std::size_t>(bb)) *
                                            w +
                                        2 * ow + static_cast<std::size_t>(cc);
                                    if (xp[idx] > best) {
                                        best = xp[idx];
                                        best_idx = idx;
                                    }
                                }
                        op[(od * oh_n + oh) * ow_n + ow] = best;
                        ap[(od * oh_n + oh) * ow_n + ow] = map * d * h * w + best_idx;
                    }
                }
            }
        }
    }
    return out;
}

Tensor MaxPool::backward(const Tensor& grad_out) {
    Tensor gx(in_shape_);
    for (std::size_t i = 0; i < grad_out.numel(); ++i)
        gx.data[argmax_[i]] += grad_out.data[i];
    return gx;
}

Tensor Upsample::forward(const Tensor& x, bool /*training*/) {
    in_shape_ = x.shape;
    const std::size_t want_dims = rank_ == 2 ? 4u : 5u;
    if (x.shape.size() != want_dims)
        throw ValidationError("upsample input rank mismatch");

    std::vector<std::size_t> out_shape = x.shape;
    for (std::size_t i = 2; i < out_shape.size(); ++i)
        out_shape[i] *= 2;
    Tensor out(out_shape);

    const std::size_t n_maps = x.shape[0] * x.shape[1];
    if (rank_ == 2) {
        const std::size_t h = x.shape[2], w = x.shape[3];
        for (std::size_t map = 0; map < n_maps; ++map) {
            const double* xp = x.data.data() + map * h * w;
            double* op = out.data.data() + map * 4 * h * w;
            for (std::size_t ih = 0; ih < h; ++ih)
                for (std::size_t iw = 0; iw < w; ++iw) {
                    const double v = xp[ih * w + iw];
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            op[(2 * ih + static_cast<std::size_t>(a)) * 2 * w + 2 * iw +
                               static_cast<std::size_t>(b)] = v;
                }
        }
    } else {
        const std::size_t d = x.shape[2], h = x.shape[3], w = x.shape[4];
        for (std::size_t map = 0; map < n_maps; ++map) {
            const double* xp = x.data.data() + map * d * h * w;
            double* op = out.data.data() + map * 8 * d * h * w;
            for (std::size_t id = 0; id < d; ++id)
                for (std::size_t ih = 0; ih < h; ++ih)
                    for (std::size_t iw = 0; iw < w; ++iw) {
                        const double v = xp[(id * h + ih) * w + iw];
                        for (int a = 0; a < 2; ++a)
                            for (int bb = 0; bb < 2; ++bb)
                                for (int cc = 0; cc < 2; ++cc)
                                    op[((2 * id + static_cast<std::size_t>(a)) * 2 * h + 2 * ih +
                                        static_cast<std::size_t>(bb)) *
                                           2 * w +
                                       2 * iw + static_cast<std::size_t>(cc)] = v;
                    }
        }
    }
    return out;
}

Tensor Upsample::backward(const Tensor& grad_out) {
    Tensor gx(in_shape_);
    const std::size_t n_maps = in_shape_[0] * in_shape_[1];
    if (rank_ == 2) {
        const std::size_t h = in_shape_[2], w = in_shape_[3];
        for (std::size_t map = 0; map < n_maps; ++map) {
            const double* gp = grad_out.data.data() + map * 4 * h * w;
            double* op = gx.data.data() + map * h * w;
            for (std::size_t ih = 0; ih < h; ++ih)
                for (std::size_t iw = 0; iw < w; ++iw) {
                    double sum = 0.0;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            sum += gp[(2 * ih + static_cast<std::size_t>(a)) * 2 * w + 2 * iw +
                                      static_cast<std::size_t>(b)];
                    op[ih * w + iw] = sum;
                }
        }
    } else {
        const std::size_t d = in_shape_[2], h = in_shape_[3], w = in_shape_[4];
        for (std::size_t map = 0; map < n_maps; ++map) {
            const double* gp = grad_out.data.data() + map * 8 * d * h * w;
            double* op = gx.data.data() + map * d * h * w;
            for (std::size_t id = 0; id < d; ++id)
                for (std::size_t ih = 0; ih < h; ++ih)
                    for (std::size_t iw = 0; iw < w; ++iw) {
                        double sum = 0.0;
                        for (int a = 0; a < 2; ++a)
                            for (int bb = 0; bb < 2; ++bb)
                                for (int cc = 0; cc < 2; ++cc)
                                    sum += gp[((2 * id + static_cast<std::size_t>(a)) * 2 * h +
                                               2 * ih + static_cast<std::size_t>(bb)) *
                                                  2 * w +
                                              2 * iw + static_cast<std::size_t>(cc)];
                        op[(id * h + ih) * w + iw] = sum;
                    }
        }
    }
    return gx;
}

Tensor MeanOverDepth::forward(const Tensor& x, bool /*training*/) {
    if (x.shape.size() != 5)
        throw ValidationError("depth mean expects a 5-D volume tensor");
    in_shape_ = x.shape;
    const std::size_t n_maps = x.shape[0] * x.shape[1];
    const std::size_t d = x.shape[2];
    const std::size_t plane = x.shape[3] * x.shape[4];

    Tensor out({x.shape[0], x.shape[1], x.shape[3], x.shape[4]});
    for (std::size_t map = 0; map < n_maps; ++map) {
        const double* xp = x.data.data() + map * d * plane;
        double* op = out.data.data() + map * plane;
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t i = 0; i < plane; ++i)
                op[i] += xp[k * plane + i];
        for (std::size_t i = 0; i < plane; ++i)
            op[i] /= static_cast<double>(d);
    }
    return out;
}

Tensor MeanOverDepth::backward(const Tensor& grad_out) {
    Tensor gx(in_shape_);
    const std::size_t n_maps = in_shape_[0] * in_shape_[1];
    const std::size_t d = in_shape_[2];
    const std::size_t plane = in_shape_[3] * in_shape_[4];
    for (std::size_t map = 0; map < n_maps; ++map) {
        const double* gp = grad_out.data.data() + map * plane;
        double* op = gx.data.data() + map * d * plane;
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t i = 0; i < plane; ++i)
                op[k * plane + i] = gp[i] / static_cast<double>(d);
    }
    return gx;
}

} // namespace updraft
