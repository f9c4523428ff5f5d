#include "updraft/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "updraft/config.hpp"
#include "updraft/verify.hpp"

namespace updraft {

using nlohmann::json;

std::string to_string(InputMode mode) {
    switch (mode) {
    case InputMode::Composite2D: return "composite_2d";
    case InputMode::Levels2D: return "levels_2d";
    case InputMode::Volume3D: return "volume_3d";
    }
    return "?";
}

InputMode input_mode_from_string(const std::string& s) {
    if (s == "composite_2d")
        return InputMode::Composite2D;
    if (s == "levels_2d")
        return InputMode::Levels2D;
    if (s == "volume_3d")
        return InputMode::Volume3D;
    throw ValidationError("unknown input mode: " + s);
}

std::string to_string(SkipStyle style) {
    return style == SkipStyle::UNet ? "unet" : "unet3plus";
}

SkipStyle skip_style_from_string(const std::string& s) {
    if (s == "unet")
        return SkipStyle::UNet;
    if (s == "unet3plus")
        return SkipStyle::UNet3Plus;
    throw ValidationError("unknown skip style: " + s);
}

std::string to_string(OptimizerKind opt) {
    return opt == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd")
        return OptimizerKind::Sgd;
    if (s == "adam")
        return OptimizerKind::Adam;
    throw ValidationError("unknown optimizer: " + s);
}

void validate_spec(const ModelSpec& spec) {
    if (spec.depth < 1 || spec.depth > 3)
        throw ValidationError("model depth must be between 1 and 3");
    if (spec.base_filters < 1)
        throw ValidationError("base_filters must be positive");
    if (spec.kernel_size % 2 == 0 || spec.kernel_size == 0)
        throw ValidationError("kernel_size must be odd");
    if (spec.l2_reg < 0.0)
        throw ValidationError("l2_reg must be >= 0");
    if (spec.in_levels < 1)
        throw ValidationError("in_levels must be positive");
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Tensor Network::ConvBlock::forward(const Tensor& x, bool training) {
    Tensor t = conv1->forward(x, training);
    if (bn1)
        t = bn1->forward(t, training);
    t = relu1.forward(t, training);
    t = conv2->forward(t, training);
    if (bn2)
        t = bn2->forward(t, training);
    return relu2.forward(t, training);
}

Tensor Network::ConvBlock::backward(const Tensor& grad) {
    Tensor g = relu2.backward(grad);
    if (bn2)
        g = bn2->backward(g);
    g = conv2->backward(g);
    g = relu1.backward(g);
    if (bn1)
        g = bn1->backward(g);
    return conv1->backward(g);
}

Network::ConvBlock Network::make_block(std::size_t in_ch, std::size_t out_ch, Rng& rng) const {
    ConvBlock block;
    block.conv1 = std::make_unique<Conv>(rank_, in_ch, out_ch, spec_.kernel_size, rng);
    block.conv2 = std::make_unique<Conv>(rank_, out_ch, out_ch, spec_.kernel_size, rng);
    if (spec_.batch_norm) {
        block.bn1.emplace(out_ch);
        block.bn2.emplace(out_ch);
    }
    return block;
}

Network::Network(const ModelSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    validate_spec(spec);
    rank_ = spec.input_mode == InputMode::Volume3D ? 3 : 2;
    Rng rng(init_seed);

    const std::size_t f = spec.base_filters;
    const std::size_t d = spec.depth;
    std::size_t in_ch = 1;
    if (spec.input_mode == InputMode::Levels2D)
        in_ch = spec.in_levels;

    for (std::size_t i = 0; i < d; ++i) {
        encoder_.push_back(make_block(i == 0 ? in_ch : f << (i - 1), f << i, rng));
        pools_.emplace_back(rank_);
    }
    bottleneck_ = make_block(f << (d - 1), f << d, rng);

    decoder_.resize(d);
    deep_ups_.reserve(d);
    for (std::size_t i = 0; i < d; ++i)
        deep_ups_.emplace_back(rank_);
    skip_down_.assign(d, {});
    skip_up_.assign(d, {});
    concat_sizes_.assign(d, {});

    // Deepest decoder level first so channel counts line up naturally.
    for (std::size_t ii = d; ii-- > 0;) {
        std::size_t cat_ch = f << (ii + 1); // upsampled deeper signal
        if (spec.skip_style == SkipStyle::UNet) {
            cat_ch += f << ii;
        } else {
            skip_down_[ii].assign(d, {});
            skip_up_[ii].assign(d, {});
            for (std::size_t j = 0; j < d; ++j) {
                cat_ch += f << j;
                if (j < ii)
                    for (std::size_t s = 0; s < ii - j; ++s)
                        skip_down_[ii][j].emplace_back(rank_);
                else if (j > ii)
                    for (std::size_t s = 0; s < j - ii; ++s)
                        skip_up_[ii][j].emplace_back(rank_);
            }
        }
        decoder_[ii] = make_block(cat_ch, f << ii, rng);
    }

    if (spec.input_mode == InputMode::Volume3D)
        depth_collapse_.emplace();
    head_ = std::make_unique<Conv>(2, f, 4, 1, rng);
}

Tensor Network::forward(const Tensor& x, bool training) {
    const std::size_t want_dims = rank_ == 2 ? 4u : 5u;
    if (x.shape.size() != want_dims)
        throw ValidationError("input tensor rank does not match the model's input mode");
    const std::size_t want_ch = spec_.input_mode == InputMode::Levels2D ? spec_.in_levels : 1;
    if (x.shape[1] != want_ch)
        throw ValidationError("input channel count does not match the model spec");
    const std::size_t div = std::size_t{1} << spec_.depth;
    for (std::size_t i = 2; i < x.shape.size(); ++i)
        if (x.shape[i] % div != 0)
            throw ValidationError("input spatial dims must be divisible by 2^depth");
    if (rank_ == 3 && x.shape[2] != spec_.in_levels)
        throw ValidationError("volume depth does not match the model's in_levels");

    const std::size_t d = spec_.depth;
    std::vector<Tensor> skips(d);
    Tensor cur = x;
    for (std::size_t i = 0; i < d; ++i) {
        skips[i] = encoder_[i].forward(cur, training);
        cur = pools_[i].forward(skips[i], training);
    }
    cur = bottleneck_.forward(cur, training);

    for (std::size_t ii = d; ii-- > 0;) {
        Tensor up = deep_ups_[ii].forward(cur, training);
        std::vector<Tensor> resampled;
        std::vector<const Tensor*> parts{&up};
        if (spec_.skip_style == SkipStyle::UNet) {
            parts.push_back(&skips[ii]);
        } else {
            resampled.reserve(d);
            for (std::size_t j = 0; j < d; ++j) {
                if (j == ii) {
                    resampled.push_back(skips[j]);
                } else if (j < ii) {
                    Tensor t = skips[j];
                    for (auto& pool : skip_down_[ii][j])
                        t = pool.forward(t, training);
                    resampled.push_back(std::move(t));
                } else {
                    Tensor t = skips[j];
                    for (auto& ups : skip_up_[ii][j])
                        t = ups.forward(t, training);
                    resampled.push_back(std::move(t));
                }
            }
            for (const Tensor& t : resampled)
                parts.push_back(&t);
        }
        concat_sizes_[ii].clear();
        for (const Tensor* p : parts)
            concat_sizes_[ii].push_back(p->shape[1]);
        const Tensor cat = concat_channels(parts);
        cur = decoder_[ii].forward(cat, training);
    }

    if (depth_collapse_)
        cur = depth_collapse_->forward(cur, training);
    return head_->forward(cur, training);
}

Tensor Network::backward(const Tensor& grad_out) {
    const std::size_t d = spec_.depth;
    Tensor g = head_->backward(grad_out);
    if (depth_collapse_)
        g = depth_collapse_->backward(g);

    std::vector<Tensor> skip_grads(d);
    for (std::size_t ii = 0; ii < d; ++ii) {
        g = decoder_[ii].backward(g);
        std::vector<Tensor> parts = split_channels(g, concat_sizes_[ii]);
        Tensor gup = deep_ups_[ii].backward(parts[0]);
        if (spec_.skip_style == SkipStyle::UNet) {
            if (skip_grads[ii].numel() == 0)
                skip_grads[ii] = std::move(parts[1]);
            else
                for (std::size_t k = 0; k < parts[1].numel(); ++k)
                    skip_grads[ii].data[k] += parts[1].data[k];
        } else {
            for (std::size_t j = 0; j < d; ++j) {
                Tensor t = std::move(parts[1 + j]);
                if (j < ii) {
                    auto& chain = skip_down_[ii][j];
                    for (std::size_t s = chain.size(); s-- > 0;)
                        t = chain[s].backward(t);
                } else if (j > ii) {
                    auto& chain = skip_up_[ii][j];
                    for (std::size_t s = chain.size(); s-- > 0;)
                        t = chain[s].backward(t);
                }
                if (skip_grads[j].numel() == 0)
                    skip_grads[j] = std::move(t);
                else
                    for (std::size_t k = 0; k < t.numel(); ++k)
                        skip_grads[j].data[k] += t.data[k];
            }
        }
        g = std::move(gup);
    }

    g = bottleneck_.backward(g);
    for (std::size_t i = d; i-- > 0;) {
        g = pools_[i].backward(g);
        for (std::size_t k = 0; k < g.numel(); ++k)
            g.data[k] += skip_grads[i].data[k];
        g = encoder_[i].backward(g);
    }
    return g;
}

std::vector<ParamTensor*> Network::parameters() {
    std::vector<ParamTensor*> out;
    auto add_block = [&out](ConvBlock& b) {
        out.push_back(&b.conv1->weights);
        out.push_back(&b.conv1->bias);
        if (b.bn1) {
            out.push_back(&b.bn1->gamma);
            out.push_back(&b.bn1->beta);
        }
        out.push_back(&b.conv2->weights);
        out.push_back(&b.conv2->bias);
        if (b.bn2) {
            out.push_back(&b.bn2->gamma);
            out.push_back(&b.bn2->beta);
        }
    };
    for (auto& b : encoder_)
        add_block(b);
    add_block(bottleneck_);
    for (auto& b : decoder_)
        add_block(b);
    out.push_back(&head_->weights);
    out.push_back(&head_->bias);
    return out;
}

std::vector<std::vector<double>*> Network::buffers() {
    std::vector<std::vector<double>*> out;
    auto add_block = [&out](ConvBlock& b) {
        if (b.bn1) {
            out.push_back(&b.bn1->running_mean);
            out.push_back(&b.bn1->running_var);
        }
        if (b.bn2) {
            out.push_back(&b.bn2->running_mean);
            out.push_back(&b.bn2->running_var);
        }
    };
    for (auto& b : encoder_)
        add_block(b);
    add_block(bottleneck_);
    for (auto& b : decoder_)
        add_block(b);
    return out;
}

void Network::zero_grads() {
    for (ParamTensor* p : parameters())
        std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::size_t Network::param_count() {
    std::size_t n = 0;
    for (ParamTensor* p : parameters())
        n += p->value.size();
    return n;
}

ModelState Network::snapshot() const {
    ModelState state;
    auto* self = const_cast<Network*>(this);
    for (ParamTensor* p : self->parameters())
        state.params.insert(state.params.end(), p->value.begin(), p->value.end());
    for (std::vector<double>* b : self->buffers())
        state.buffers.insert(state.buffers.end(), b->begin(), b->end());
    return state;
}

void Network::restore(const ModelState& state) {
    std::size_t off = 0;
    for (ParamTensor* p : parameters()) {
        if (off + p->value.size() > state.params.size())
            throw ValidationError("model state parameter payload too short");
        std::copy(state.params.begin() + static_cast<std::ptrdiff_t>(off),
                  state.params.begin() + static_cast<std::ptrdiff_t>(off + p->value.size()),
                  p->value.begin());
        off += p->value.size();
    }
    if (off != state.params.size())
        throw ValidationError("model state parameter payload size mismatch");
    off = 0;
    for (std::vector<double>* b : buffers()) {
        if (off + b->size() > state.buffers.size())
            throw ValidationError("model state buffer payload too short");
        std::copy(state.buffers.begin() + static_cast<std::ptrdiff_t>(off),
                  state.buffers.begin() + static_cast<std::ptrdiff_t>(off + b->size()),
                  b->begin());
        off += b->size();
    }
    if (off != state.buffers.size())
        throw ValidationError("model state buffer payload size mismatch");
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

Tensor make_input(const ModelSpec& spec, const std::vector<const PatchSample*>& batch) {
    if (batch.empty())
        throw ValidationError("empty batch");
    const std::size_t h = batch[0]->h, w = batch[0]->w, l = batch[0]->l;
    for (const PatchSample* s : batch)
        if (s->h != h || s->w != w || s->l != l)
            throw ValidationError("batch samples disagree on patch shape");
    if (spec.input_mode != InputMode::Composite2D && l != spec.in_levels)
        throw ValidationError("sample level count does not match model in_levels");

    const std::size_t b_n = batch.size();
    const std::size_t plane = h * w;
    if (spec.input_mode == InputMode::Levels2D) {
        Tensor t({b_n, l, h, w});
        for (std::size_t b = 0; b < b_n; ++b)
            for (std::size_t i = 0; i < l * plane; ++i)
                t.data[b * l * plane + i] = batch[b]->x[i];
        return t;
    }
    if (spec.input_mode == InputMode::Composite2D) {
        Tensor t({b_n, 1, h, w});
        for (std::size_t b = 0; b < b_n; ++b) {
            double* out = t.data.data() + b * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                float best = batch[b]->x[i];
                for (std::size_t k = 1; k < l; ++k)
                    best = std::max(best, batch[b]->x[k * plane + i]);
                out[i] = best;
            }
        }
        return t;
    }
    Tensor t({b_n, 1, l, h, w});
    for (std::size_t b = 0; b < b_n; ++b)
        for (std::size_t i = 0; i < l * plane; ++i)
            t.data[b * l * plane + i] = batch[b]->x[i];
    return t;
}

std::vector<double> make_labels(const std::vector<const PatchSample*>& batch) {
    std::vector<double> labels;
    for (const PatchSample* s : batch)
        labels.insert(labels.end(), s->y.begin(), s->y.end());
    return labels;
}

RawParamMaps to_raw_maps(const Tensor& out, std::size_t batch_index) {
    if (out.shape.size() != 4 || out.shape[1] != 4)
        throw ValidationError("expected a (B,4,H,W) output tensor");
    RawParamMaps maps;
    maps.h = out.shape[2];
    maps.w = out.shape[3];
    const std::size_t plane = maps.h * maps.w;
    const double* base = out.data.data() + batch_index * 4 * plane;
    maps.y1.assign(base, base + plane);
    maps.y2.assign(base + plane, base + 2 * plane);
    maps.y3.assign(base + 2 * plane, base + 3 * plane);
    maps.y4.assign(base + 3 * plane, base + 4 * plane);
    return maps;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

namespace {

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(const std::vector<ParamTensor*>& params) = 0;
};

class SgdOptimizer final : public Optimizer {
public:
    explicit SgdOptimizer(double lr) : lr_(lr) {}
    void step(const std::vector<ParamTensor*>& params) override {
        for (ParamTensor* p : params)
            for (std::size_t i = 0; i < p->value.size(); ++i)
                p->value[i] -= lr_ * p->grad[i];
    }

private:
    double lr_;
};

class AdamOptimizer final : public Optimizer {
public:
    explicit AdamOptimizer(double lr) : lr_(lr) {}
    void step(const std::vector<ParamTensor*>& params) override {
        if (m_.empty()) {
            for (ParamTensor* p : params) {
                m_.emplace_back(p->value.size(), 0.0);
                v_.emplace_back(p->value.size(), 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            ParamTensor* p = params[k];
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const double g = p->grad[i];
                m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * g;
                v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * g * g;
                const double mhat = m_[k][i] / bc1;
                const double vhat = v_[k][i] / bc2;
                p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    double lr_;
    double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg) {
    if (cfg.optimizer == OptimizerKind::Sgd)
        return std::make_unique<SgdOptimizer>(cfg.learning_rate);
    return std::make_unique<AdamOptimizer>(cfg.learning_rate);
}

/// Weighted NLL over a (B,4,H,W) output; fills the gradient tensor with
/// d(mean loss)/d(raw outputs) when grad is non-null.
double batch_nll(const Tensor& out, const std::vector<double>& labels, const LossConfig& cfg,
                 Tensor* grad) {
    const std::size_t b_n = out.shape[0];
    const std::size_t plane = out.shape[2] * out.shape[3];
    if (labels.size() != b_n * plane)
        throw ValidationError("label count does not match network output");

    const double inv_n = 1.0 / static_cast<double>(b_n * plane);
    double sum = 0.0;
    for (std::size_t b = 0; b < b_n; ++b) {
        const double* base = out.data.data() + b * 4 * plane;
        double* gbase = grad ? grad->data.data() + b * 4 * plane : nullptr;
        for (std::size_t i = 0; i < plane; ++i) {
            const PixelLoss pl =
                nll_grad_pixel(base[i], base[plane + i], base[2 * plane + i],
                               base[3 * plane + i], labels[b * plane + i], cfg);
            sum += pl.loss;
            if (gbase) {
                gbase[i] = pl.d_y1 * inv_n;
                gbase[plane + i] = pl.d_y2 * inv_n;
                gbase[2 * plane + i] = pl.d_y3 * inv_n;
                gbase[3 * plane + i] = pl.d_y4 * inv_n;
            }
        }
    }
    return sum * inv_n;
}

std::vector<const PatchSample*> pointer_batch(const std::vector<PatchSample>& samples) {
    std::vector<const PatchSample*> ptrs;
    ptrs.reserve(samples.size());
    for (const auto& s : samples)
        ptrs.push_back(&s);
    return ptrs;
}

} // namespace

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

double evaluate_loss(Network& net, const SampleSource& samples, const TrainConfig& cfg) {
    if (samples.size() == 0)
        throw ValidationError("cannot evaluate on an empty sample set");
    double total = 0.0;
    std::size_t total_px = 0;
    for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(start + cfg.batch_size, samples.size());
        std::vector<PatchSample> batch;
        batch.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i)
            batch.push_back(samples.get(i));
        const auto ptrs = pointer_batch(batch);
        const Tensor x = make_input(net.spec(), ptrs);
        const std::vector<double> labels = make_labels(ptrs);
        const Tensor out = net.forward(x, false);
        const std::size_t px = labels.size();
        total += batch_nll(out, labels, cfg.loss, nullptr) * static_cast<double>(px);
        total_px += px;
    }
    return total / static_cast<double>(total_px);
}

TrainResult train(Network& net, const SampleSource& train_set, const SampleSource& val_set,
                  const TrainConfig& cfg) {
    if (train_set.size() == 0 || val_set.size() == 0)
        throw ValidationError("training needs nonempty train and validation sets");
    if (cfg.batch_size < 1 || cfg.max_epochs < 1)
        throw ValidationError("batch_size and max_epochs must be >= 1");

    {
        // Patch dims must satisfy the 2^depth divisibility before training.
        const PatchSample probe = train_set.get(0);
        const std::size_t div = std::size_t{1} << net.spec().depth;
        if (probe.h % div != 0 || probe.w % div != 0)
            throw ValidationError("patch dims are not divisible by 2^depth");
        if (net.spec().input_mode == InputMode::Volume3D && probe.l % div != 0)
            throw ValidationError("patch level count is not divisible by 2^depth");
    }

    Rng shuffle_rng(cfg.seed + 0x9e3779b97f4a7c15ull);
    auto optimizer = make_optimizer(cfg);
    const auto params = net.parameters();

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle(order, shuffle_rng);

        double train_loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, order.size());
            std::vector<PatchSample> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i)
                batch.push_back(train_set.get(order[i]));
            const auto ptrs = pointer_batch(batch);
            const Tensor x = make_input(net.spec(), ptrs);
            const std::vector<double> labels = make_labels(ptrs);

            net.zero_grads();
            const Tensor out = net.forward(x, true);
            Tensor grad(out.shape);
            double loss;
            try {
                loss = batch_nll(out, labels, cfg.loss, &grad);
            } catch (const DomainError& e) {
                // Diverged weights push the transformed parameters out of
                // range; surface it as the training failure it is.
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                         ", step " + std::to_string(result.steps + 1) + ": " +
                                         e.what());
            }
            net.backward(grad);

            if (net.spec().l2_reg > 0.0) {
                const double lambda = net.spec().l2_reg;
                for (ParamTensor* p : params) {
                    if (!p->decay)
                        continue;
                    for (std::size_t i = 0; i < p->value.size(); ++i) {
                        loss += lambda * p->value[i] * p->value[i];
                        p->grad[i] += 2.0 * lambda * p->value[i];
                    }
                }
            }

            if (!std::isfinite(loss))
                throw std::runtime_error("training loss became non-finite at epoch " +
                                         std::to_string(epoch) + ", step " +
                                         std::to_string(result.steps + 1));

            optimizer->step(params);
            ++result.steps;
            train_loss_sum += loss;
            ++n_batches;
        }

        double val_loss;
        try {
            val_loss = evaluate_loss(net, val_set, cfg);
        } catch (const DomainError& e) {
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                     " (validation pass): " + e.what());
        }
        result.history.push_back(
            {epoch, train_loss_sum / static_cast<double>(n_batches), val_loss});

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.best_state = net.snapshot();
            result.best_state.epoch = epoch;
            result.best_state.val_loss = val_loss;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    net.restore(result.best_state);
    return result;
}

MedianEval evaluate_median(Network& net, const SampleSource& samples) {
    if (samples.size() == 0)
        throw ValidationError("cannot evaluate on an empty sample set");
    MedianEval eval;
    const std::size_t batch_size = 16;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t stop = std::min(start + batch_size, samples.size());
        std::vector<PatchSample> batch;
        for (std::size_t i = start; i < stop; ++i)
            batch.push_back(samples.get(i));
        const auto ptrs = pointer_batch(batch);
        const Tensor x = make_input(net.spec(), ptrs);
        const Tensor out = net.forward(x, false);
        const std::size_t plane = out.shape[2] * out.shape[3];
        for (std::size_t b = 0; b < ptrs.size(); ++b) {
            const double* base = out.data.data() + b * 4 * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const ShashParams p = transform_pixel(base[i], base[plane + i],
                                                      base[2 * plane + i], base[3 * plane + i]);
                eval.params.push_back(p);
                eval.median.push_back(shash_median(p));
                eval.truth.push_back(ptrs[b]->y[i]);
            }
        }
    }
    eval.r2 = r_squared(eval.truth, eval.median);
    return eval;
}

PredictionMaps predict(Network& net, const Tensor& input, const PredictProducts& products) {
    for (double q : products.quantiles)
        if (!(q > 0.0 && q < 1.0))
            throw DomainError("prediction quantiles must lie in (0,1)");

    const Tensor out = net.forward(input, false);
    if (out.shape[0] != 1)
        throw ValidationError("predict expects batch size 1");

    PredictionMaps maps;
    maps.h = out.shape[2];
    maps.w = out.shape[3];
    maps.params = transform(to_raw_maps(out, 0));
    const std::size_t plane = maps.h * maps.w;

    maps.median.resize(plane);
    for (std::size_t i = 0; i < plane; ++i)
        maps.median[i] = shash_median(maps.params.params[i]);
    for (double q : products.quantiles) {
        std::vector<double> m(plane);
        for (std::size_t i = 0; i < plane; ++i)
            m[i] = shash_quantile(maps.params.params[i], q);
        maps.quantile_maps.emplace(q, std::move(m));
    }
    for (double v : products.exceedance_thresholds) {
        std::vector<double> m(plane);
        for (std::size_t i = 0; i < plane; ++i)
            m[i] = 1.0 - shash_cdf(maps.params.params[i], v);
        maps.exceedance_maps.emplace(v, std::move(m));
    }
    return maps;
}

// ---------------------------------------------------------------------------
// Hyperparameter search
// ---------------------------------------------------------------------------

std::vector<HyperDraw> sample_hyperparameters(const HyperSpace& space, std::size_t n,
                                              std::uint64_t seed, const ModelSpec& base_spec,
                                              const TrainConfig& base_cfg) {
    if (n < 1)
        throw ValidationError("hyperparameter search needs n >= 1");
    if (space.kernel_size.empty() || space.base_filters.empty() || space.depth.empty() ||
        space.optimizer.empty() || space.batch_norm.empty() || space.batch_size.empty() ||
        space.loss_weight.empty() || space.weight_threshold.empty() || space.l2_reg.empty())
        throw ValidationError("every hyperparameter candidate list must be nonempty");

    Rng rng(seed);
    std::vector<HyperDraw> draws;
    draws.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        HyperDraw draw{base_spec, base_cfg};
        draw.spec.kernel_size = space.kernel_size[uniform_index(rng, space.kernel_size.size())];
        draw.spec.base_filters =
            space.base_filters[uniform_index(rng, space.base_filters.size())];
        draw.spec.depth = space.depth[uniform_index(rng, space.depth.size())];
        draw.cfg.optimizer = space.optimizer[uniform_index(rng, space.optimizer.size())];
        draw.spec.batch_norm = space.batch_norm[uniform_index(rng, space.batch_norm.size())];
        draw.cfg.batch_size = space.batch_size[uniform_index(rng, space.batch_size.size())];
        draw.cfg.loss.weight_policy.weight_above =
            space.loss_weight[uniform_index(rng, space.loss_weight.size())];
        draw.cfg.loss.weight_policy.threshold =
            space.weight_threshold[uniform_index(rng, space.weight_threshold.size())];
        draw.spec.l2_reg = space.l2_reg[uniform_index(rng, space.l2_reg.size())];
        draws.push_back(std::move(draw));
    }
    return draws;
}

// ---------------------------------------------------------------------------
// Linear baseline
// ---------------------------------------------------------------------------

LinregModel fit_linreg(const std::vector<double>& composite_dbz, const std::vector<double>& w,
                       double mask_dbz) {
    if (composite_dbz.size() != w.size())
        throw ValidationError("linreg inputs must have equal length");
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < composite_dbz.size(); ++i) {
        if (composite_dbz[i] > mask_dbz) {
            sx += composite_dbz[i];
            sy += w[i];
            ++n;
        }
    }
    if (n < 2)
        throw ValidationError("linreg needs at least 2 pairs above the dBZ mask");
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < composite_dbz.size(); ++i) {
        if (composite_dbz[i] > mask_dbz) {
            const double dx = composite_dbz[i] - mx;
            sxx += dx * dx;
            sxy += dx * (w[i] - my);
        }
    }
    if (sxx == 0.0)
        throw ValidationError("linreg design is degenerate (constant composite)");
    LinregModel model;
    model.mask_dbz = mask_dbz;
    model.slope = sxy / sxx;
    model.intercept = my - model.slope * mx;
    return model;
}

double linreg_predict(const LinregModel& model, double composite_dbz) {
    if (composite_dbz > model.mask_dbz)
        return model.slope * composite_dbz + model.intercept;
    return 0.0;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void write_f64_le(std::ofstream& out, const std::vector<double>& values) {
    std::vector<std::uint8_t> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t b;
        std::memcpy(&b, &values[i], 8);
        for (int k = 0; k < 8; ++k)
            bytes[8 * i + static_cast<std::size_t>(k)] =
                static_cast<std::uint8_t>(b >> (8 * k));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_f64_le(std::ifstream& in, std::size_t count, const std::string& path) {
    std::vector<std::uint8_t> bytes(count * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw IoError("checkpoint payload truncated: " + path);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t b = 0;
        for (int k = 0; k < 8; ++k)
            b |= static_cast<std::uint64_t>(bytes[8 * i + static_cast<std::size_t>(k)])
                 << (8 * k);
        std::memcpy(&values[i], &b, 8);
    }
    return values;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json header;
    header["format"] = "updraft-ckpt-1";
    header["spec"] = to_json(ckpt.spec);
    header["epoch"] = ckpt.state.epoch;
    header["metrics"] = {{"val_loss", ckpt.val_loss}, {"val_r2", ckpt.val_r2}};
    header["scaler"] = {{"min", ckpt.scaler.min_dbz},
                        {"max", ckpt.scaler.max_dbz},
                        {"fitted_on", ckpt.scaler.fitted_on}};
    header["n_params"] = ckpt.state.params.size();
    header["n_buffers"] = ckpt.state.buffers.size();

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open checkpoint for writing: " + path);
    const std::string text = header.dump();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.put('\n');
    out.put('\0');
    write_f64_le(out, ckpt.state.params);
    write_f64_le(out, ckpt.state.buffers);
    if (!out)
        throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint: " + path);
    std::string text;
    char c;
    while (in.get(c)) {
        if (c == '\0')
            break;
        text.push_back(c);
        if (text.size() > (1u << 24))
            throw FormatError("checkpoint header not terminated: " + path);
    }
    if (!in || text.empty() || text.back() != '\n')
        throw FormatError("checkpoint header must end with newline + NUL: " + path);
    text.pop_back();

    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError("checkpoint header is not valid JSON (" + std::string(e.what()) +
                          "): " + path);
    }

    Checkpoint ckpt;
    try {
        if (header.at("format").get<std::string>() != "updraft-ckpt-1")
            throw FormatError("unknown checkpoint format marker: " + path);
        ckpt.spec = model_spec_from_json(header.at("spec"));
        ckpt.state.epoch = header.at("epoch").get<std::size_t>();
        ckpt.val_loss = header.at("metrics").at("val_loss").get<double>();
        ckpt.val_r2 = header.at("metrics").at("val_r2").get<double>();
        ckpt.scaler.min_dbz = header.at("scaler").at("min").get<double>();
        ckpt.scaler.max_dbz = header.at("scaler").at("max").get<double>();
        ckpt.scaler.fitted_on = header.at("scaler").value("fitted_on", "");
        const std::size_t n_params = header.at("n_params").get<std::size_t>();
        const std::size_t n_buffers = header.at("n_buffers").get<std::size_t>();
        ckpt.state.params = read_f64_le(in, n_params, path);
        ckpt.state.buffers = read_f64_le(in, n_buffers, path);
    } catch (const json::exception& e) {
        throw FormatError("checkpoint header missing/invalid key (" + std::string(e.what()) +
                          "): " + path);
    }
    ckpt.state.val_loss = ckpt.val_loss;
    return ckpt;
}

} // namespace updraft
