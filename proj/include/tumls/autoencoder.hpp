#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

namespace tumls::ae {

/// Dense NCHW tensor of doubles.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix;
    }
    double& at(int in, int ic, int iy, int ix) { return data[index(in, ic, iy, ix)]; }
    double at(int in, int ic, int iy, int ix) const { return data[index(in, ic, iy, ix)]; }
    double* ptr(int in, int ic) { return data.data() + index(in, ic, 0, 0); }
    const double* ptr(int in, int ic) const { return data.data() + index(in, ic, 0, 0); }
    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// 3x3 kernel, padding 1. Forward convs use `stride`; transposed convs are
/// the adjoint geometry with stride 2 and output padding 1, doubling H and W.
struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    int stride = 2;
    bool transposed = false;
    std::vector<double> weight;  // conv: [out][in][3][3]; transposed: [in][out][3][3]
    std::vector<double> bias;    // [out]
};

struct ConvGrads {
    std::vector<double> weight;
    std::vector<double> bias;
};

namespace ops {

constexpr int kKernel = 3;
constexpr int kPad = 1;

Tensor conv_forward(const ConvLayer& layer, const Tensor& x);
/// Accumulates parameter gradients into `grads` (pre-sized) and returns dL/dx.
Tensor conv_backward(const ConvLayer& layer, const Tensor& x, const Tensor& grad_out,
                     ConvGrads& grads);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);
Tensor sigmoid_forward(const Tensor& x);
/// Takes the sigmoid output y, since dy/dx = y(1-y).
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

}  // namespace ops

/// Shape of the encoder/decoder stack. The default is the 16x16x3 -> 2x2x64
/// encoder with a mirrored transposed-conv decoder.
struct Architecture {
    int input_channels = 3;
    int input_size = 16;
    std::vector<int> hidden{16, 32, 64};

    int latent_size() const { return input_size >> hidden.size(); }
    int latent_dim() const { return hidden.back() * latent_size() * latent_size(); }
    bool operator==(const Architecture&) const = default;
};

struct AEModel {
    Architecture arch;
    // Per-channel input standardization applied before the encoder.
    std::vector<double> input_mean;
    std::vector<double> input_std;
    // Encoder layers followed by decoder layers.
    std::vector<ConvLayer> layers;

    std::size_t num_encoder_layers() const { return arch.hidden.size(); }
    std::size_t parameter_count() const;
};

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
AEModel make_model(const Architecture& arch, std::uint64_t seed);

struct ForwardResult {
    Tensor reconstruction;  // same shape as input, values in (0,1)
    Tensor latent;          // n x hidden.back() x s x s
    std::vector<Tensor> activations;  // input to each layer, then final output
};

ForwardResult forward(const AEModel& model, const Tensor& batch);

/// Flattens latent tensors to one vector per sample (channel-major).
std::vector<std::vector<double>> flatten_latents(const Tensor& latent);

/// (1/n) sum (a-b)^2 over every element.
double loss_mse(const Tensor& recon, const Tensor& target);

using Gradients = std::vector<ConvGrads>;

Gradients zero_gradients(const AEModel& model);

/// Gradients of loss_scale * MSE(reconstruction, batch) for every parameter.
Gradients backward(const AEModel& model, const Tensor& batch, double loss_scale = 1.0,
                   double* loss_out = nullptr);

struct TrainConfig {
    int batch_size = 128;
    double learning_rate = 1e-3;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int early_stop_patience = 10;
    int max_epochs = 100;
    std::uint64_t rng_seed = 42;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
public:
    AdamW(const AEModel& model, const TrainConfig& cfg);
    void step(AEModel& model, const Gradients& grads);
    long long steps() const { return t_; }

private:
    TrainConfig cfg_;
    Gradients m_, v_;
    long long t_ = 0;
};

/// Tracks the best validation loss. Epochs are 1-based.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}
    /// Records an epoch; returns true when this epoch is the new best.
    bool update(double valid_loss);
    bool should_stop() const { return epoch_ - best_epoch_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_; }
    int epoch() const { return epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    double best_ = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double valid_mse = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_valid_mse = 0.0;
    bool early_stopped = false;
};

nlohmann::json to_json(const TrainHistory& h);

struct TrainResult {
    AEModel best_model;
    TrainHistory history;
};

/// Patches to [0,1] NCHW tensor (RGB order).
Tensor to_tensor(std::span<const cv::Mat> patches);

/// Sets the model's input standardization from a training tensor.
void fit_input_normalization(AEModel& model, const Tensor& train);

TrainResult train(const AEModel& initial, const Tensor& train_set, const Tensor& valid_set,
                  const TrainConfig& cfg);

struct DatasetSplit {
    std::vector<std::size_t> train, valid, test;
};

/// Seeded shuffle into 70/15/15 index sets.
DatasetSplit split_dataset(std::size_t n, std::uint64_t seed);

std::vector<std::vector<double>> embed(const AEModel& model, std::span<const cv::Mat> patches);

void save_checkpoint(const std::filesystem::path& path, const AEModel& model);
AEModel load_checkpoint(const std::filesystem::path& path);

}  // namespace tumls::ae
