#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "updraft/dataprep.hpp"
#include "updraft/layers.hpp"
#include "updraft/loss.hpp"
#include "updraft/tensor.hpp"

namespace updraft {

enum class InputMode { Composite2D, Levels2D, Volume3D };
enum class SkipStyle { UNet, UNet3Plus };
enum class OptimizerKind { Sgd, Adam };

std::string to_string(InputMode mode);
InputMode input_mode_from_string(const std::string& s);
std::string to_string(SkipStyle style);
SkipStyle skip_style_from_string(const std::string& s);
std::string to_string(OptimizerKind opt);
OptimizerKind optimizer_from_string(const std::string& s);

/// Encoder-decoder architecture description. `in_levels` is the number of
/// vertical levels the model consumes (channel count for levels_2d, depth
/// extent for volume_3d).
struct ModelSpec {
    InputMode input_mode = InputMode::Levels2D;
    std::size_t depth = 2;       // pooling levels, 1-3
    std::size_t base_filters = 8;
    std::size_t kernel_size = 3; // odd
    SkipStyle skip_style = SkipStyle::UNet;
    bool batch_norm = false;
    double l2_reg = 0.0;
    std::size_t in_levels = 12;
};

void validate_spec(const ModelSpec& spec);

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    LossConfig loss;
    std::uint64_t seed = 0;
};

/// Candidate lists for the random hyperparameter search. These defaults are
/// editable placeholders, not a published set.
struct HyperSpace {
    std::vector<std::size_t> kernel_size{3, 5};
    std::vector<std::size_t> base_filters{4, 8, 16};
    std::vector<std::size_t> depth{1, 2, 3};
    std::vector<OptimizerKind> optimizer{OptimizerKind::Adam, OptimizerKind::Sgd};
    std::vector<bool> batch_norm{false, true};
    std::vector<std::size_t> batch_size{8, 16, 32};
    std::vector<double> loss_weight{1.0, 2.0, 5.0, 10.0};
    std::vector<double> weight_threshold{5.0, 10.0};
    std::vector<double> l2_reg{0.0, 1e-4, 1e-3};
};

/// Snapshot of everything trainable plus the batch-norm running estimates.
struct ModelState {
    std::vector<double> params;
    std::vector<double> buffers;
    std::size_t epoch = 0;
    double val_loss = 0.0;
};

/// The encoder-decoder network. Owns its parameters; forward caches the
/// activations backward consumes, so call backward immediately after.
class Network {
public:
    Network(const ModelSpec& spec, std::uint64_t init_seed);

    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

    void zero_grads();
    std::vector<ParamTensor*> parameters();
    std::size_t param_count();

    ModelState snapshot() const;
    void restore(const ModelState& state);

    const ModelSpec& spec() const { return spec_; }

private:
    struct ConvBlock {
        std::unique_ptr<Conv> conv1, conv2;
        std::optional<BatchNorm> bn1, bn2;
        ReLU relu1, relu2;

        Tensor forward(const Tensor& x, bool training);
        Tensor backward(const Tensor& grad);
    };

    ConvBlock make_block(std::size_t in_ch, std::size_t out_ch, Rng& rng) const;
    std::vector<const ParamTensor*> parameters_const() const;
    std::vector<const std::vector<double>*> buffers_const() const;
    std::vector<std::vector<double>*> buffers();

    ModelSpec spec_;
    int rank_ = 2;
    std::vector<ConvBlock> encoder_;
    std::vector<MaxPool> pools_;
    ConvBlock bottleneck_;
    std::vector<ConvBlock> decoder_;   // [0] is full resolution
    std::vector<Upsample> deep_ups_;   // deeper-signal upsample per decoder level
    // unet3plus full-scale skip resamplers: [decoder level][encoder level]
    std::vector<std::vector<std::vector<MaxPool>>> skip_down_;
    std::vector<std::vector<std::vector<Upsample>>> skip_up_;
    std::optional<MeanOverDepth> depth_collapse_;
    std::unique_ptr<Conv> head_;

    // forward bookkeeping reused by backward
    std::vector<std::vector<std::size_t>> concat_sizes_;
};

/// Batch input assembly from archived samples, per input mode.
Tensor make_input(const ModelSpec& spec, const std::vector<const PatchSample*>& batch);
std::vector<double> make_labels(const std::vector<const PatchSample*>& batch);

/// The four raw parameter maps for one batch element of a (B,4,H,W) output.
RawParamMaps to_raw_maps(const Tensor& out, std::size_t batch_index);

/// Sample access abstraction so training can stream from disk or memory.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual std::size_t size() const = 0;
    virtual PatchSample get(std::size_t i) const = 0;
};

class MemorySource final : public SampleSource {
public:
    explicit MemorySource(std::vector<PatchSample> samples) : samples_(std::move(samples)) {}
    std::size_t size() const override { return samples_.size(); }
    PatchSample get(std::size_t i) const override { return samples_.at(i); }

private:
    std::vector<PatchSample> samples_;
};

class ReaderSource final : public SampleSource {
public:
    explicit ReaderSource(const DatasetReader& reader) : reader_(reader) {}
    std::size_t size() const override { return reader_.size(); }
    PatchSample get(std::size_t i) const override { return reader_.load(i); }

private:
    const DatasetReader& reader_;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    ModelState best_state;
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    std::size_t steps = 0;
};

/// Gradient-descent training with early stopping on validation loss; the
/// returned state is the best validation snapshot. Throws on NaN loss.
TrainResult train(Network& net, const SampleSource& train_set, const SampleSource& val_set,
                  const TrainConfig& cfg);

/// Mean weighted NLL of the network on a sample set (inference mode).
double evaluate_loss(Network& net, const SampleSource& samples, const TrainConfig& cfg);

/// Median-map predictions against truth over every pixel of a sample set.
struct MedianEval {
    std::vector<double> truth;
    std::vector<double> median;
    std::vector<ShashParams> params;
    double r2 = 0.0;
};
MedianEval evaluate_median(Network& net, const SampleSource& samples);

struct PredictProducts {
    std::vector<double> quantiles{0.5};
    std::vector<double> exceedance_thresholds;
};

struct PredictionMaps {
    std::size_t h = 0, w = 0;
    ShashParamMaps params;
    std::vector<double> median;
    std::map<double, std::vector<double>> quantile_maps;
    std::map<double, std::vector<double>> exceedance_maps; // P(Y > v)
};

/// Forward + transform + per-pixel quantile/exceedance products for one
/// assembled input tensor of batch size 1.
PredictionMaps predict(Network& net, const Tensor& input, const PredictProducts& products);

/// One random hyperparameter draw.
struct HyperDraw {
    ModelSpec spec;
    TrainConfig cfg;
};

/// n independent uniform draws from the candidate lists, reproducible by
/// seed. Base spec/cfg provide the fields the search does not vary.
std::vector<HyperDraw> sample_hyperparameters(const HyperSpace& space, std::size_t n,
                                              std::uint64_t seed, const ModelSpec& base_spec,
                                              const TrainConfig& base_cfg);

/// Composite-reflectivity linear baseline, fit only on pairs above the dBZ
/// mask; predictions below the mask are 0.
struct LinregModel {
    double slope = 0.0;
    double intercept = 0.0;
    double mask_dbz = 30.0;
};
LinregModel fit_linreg(const std::vector<double>& composite_dbz, const std::vector<double>& w,
                       double mask_dbz = 30.0);
double linreg_predict(const LinregModel& model, double composite_dbz);

/// Checkpoint: JSON header (spec, epoch, metrics, scaler) + little-endian
/// f64 payload of parameters then buffers.
struct Checkpoint {
    ModelSpec spec;
    ModelState state;
    ScalerParams scaler;
    double val_loss = 0.0;
    double val_r2 = 0.0;
};
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace updraft
