#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "agni/autograd.hpp"
#include "agni/dataprep.hpp"

namespace agni {

// ---------------------------------------------------------------------------
// Losses

// L = |y_true - y_pred| * min(1e5, max(1, 10^((y_true - y_pred) * 100 / k)))
double custom_loss(double y_true, double y_pred, double k);
// dL/dy_pred. At the clamp boundaries the unclamped side's slope is used and
// the derivative is 0 at y_true == y_pred.
double custom_loss_grad(double y_true, double y_pred, double k);

double mse_loss(double y_true, double y_pred);
double mse_loss_grad(double y_true, double y_pred);

enum class LossKind { kCustom, kMse };

template <class S>
ag::Value<S> loss_value(LossKind kind, double y_true, const ag::Value<S>& y_pred, double k) {
  if (kind == LossKind::kCustom) {
    return ag::map(
        y_pred, [=](S p) { return static_cast<S>(custom_loss(y_true, p, k)); },
        [=](S p, S) { return static_cast<S>(custom_loss_grad(y_true, p, k)); });
  }
  return ag::map(
      y_pred, [=](S p) { return static_cast<S>(mse_loss(y_true, p)); },
      [=](S p, S) { return static_cast<S>(mse_loss_grad(y_true, p)); });
}

// ---------------------------------------------------------------------------
// Agni network: Conv2D(3x3) -> LSTM -> Dropout -> Dense ReLU -> Dense ReLU -> Dense sigmoid

// How each timestep's conv output reaches the LSTM.
enum class Bridge { kFlatten, kMeanPool };

struct AgniArch {
  int bands = 8;
  int bins = 32;
  int conv_channels = 64;
  int hidden = 64;
  int dense1 = 256;
  int dense2 = 32;
  double dropout = 0.3;
  Bridge bridge = Bridge::kFlatten;

  std::size_t lstm_input_width() const {
    return bridge == Bridge::kFlatten ? static_cast<std::size_t>(conv_channels) * bands * bins
                                      : static_cast<std::size_t>(conv_channels);
  }
  bool operator==(const AgniArch&) const = default;
};

template <class S>
struct AgniParams {
  AgniArch arch;
  ag::Tensor<S> conv_kernels;    // [C,1,3,3]
  ag::Tensor<S> conv_bias;       // [C]
  ag::Tensor<S> lstm_input;      // [4H, F]
  ag::Tensor<S> lstm_recurrent;  // [4H, H]
  ag::Tensor<S> lstm_bias;       // [4H]
  ag::Tensor<S> dense1_weight;   // [D1, H]
  ag::Tensor<S> dense1_bias;
  ag::Tensor<S> dense2_weight;  // [D2, D1]
  ag::Tensor<S> dense2_bias;
  ag::Tensor<S> out_weight;  // [1, D2]
  ag::Tensor<S> out_bias;

  // Every array, in serialization order.
  std::vector<std::pair<std::string, ag::Tensor<S>*>> named() {
    return {{"conv.kernels", &conv_kernels},       {"conv.bias", &conv_bias},
            {"lstm.input_weight", &lstm_input},    {"lstm.recurrent_weight", &lstm_recurrent},
            {"lstm.bias", &lstm_bias},             {"dense1.weight", &dense1_weight},
            {"dense1.bias", &dense1_bias},         {"dense2.weight", &dense2_weight},
            {"dense2.bias", &dense2_bias},         {"output.weight", &out_weight},
            {"output.bias", &out_bias}};
  }
  std::vector<std::pair<std::string, const ag::Tensor<S>*>> named() const {
    auto m = const_cast<AgniParams*>(this)->named();
    return {m.begin(), m.end()};
  }
  bool operator==(const AgniParams&) const = default;
};

// Glorot-uniform weights, zero biases, forget-gate bias 1.
template <class S>
AgniParams<S> init_agni(const AgniArch& arch, std::mt19937_64& rng);

// Logistic regression over timestep-mean normalized histograms.
template <class S>
struct LrParams {
  int bands = 8;
  int bins = 32;
  ag::Tensor<S> weight;  // [1, B*N]
  ag::Tensor<S> bias;    // [1]

  std::vector<std::pair<std::string, ag::Tensor<S>*>> named() { return {{"lr.weight", &weight}, {"lr.bias", &bias}}; }
  std::vector<std::pair<std::string, const ag::Tensor<S>*>> named() const {
    return {{"lr.weight", &weight}, {"lr.bias", &bias}};
  }
  bool operator==(const LrParams&) const = default;
};

template <class S>
LrParams<S> init_lr(int bands, int bins);

// Parameter arrays bound to a tape, in named() order.
template <class S>
std::vector<ag::Value<S>> bind_parameters(ag::Tape<S>& tape, const std::vector<std::pair<std::string, const ag::Tensor<S>*>>& params,
                                          std::vector<ag::Tensor<S>>* grads) {
  std::vector<ag::Value<S>> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(grads ? tape.parameter(*params[i].second, (*grads)[i]) : tape.constant(*params[i].second));
  }
  return out;
}

// Per-timestep network input: the B x N histogram divided by the tile's pixel count.
template <class S>
std::vector<ag::Buffer<S>> normalized_steps(const HistogramSample& sample) {
  const double pixels = sample.tile_pixels();
  const double inv = pixels > 0 ? 1.0 / pixels : 0.0;
  const std::size_t step = static_cast<std::size_t>(sample.bands) * sample.bins;
  std::vector<ag::Buffer<S>> steps(static_cast<std::size_t>(sample.timesteps));
  for (std::size_t t = 0; t < steps.size(); ++t) {
    steps[t].resize(step);
    for (std::size_t i = 0; i < step; ++i) steps[t][i] = static_cast<S>(sample.hist[t * step + i] * inv);
  }
  return steps;
}

// Builds the Agni graph over parameter values `p` (bind_parameters order).
// Returns the [1] sigmoid output.
template <class S, class Rng>
ag::Value<S> agni_graph(ag::Tape<S>& tape, const AgniArch& arch, const std::vector<ag::Value<S>>& p,
                        const HistogramSample& sample, bool training, Rng& rng) {
  if (sample.bands != arch.bands || sample.bins != arch.bins) {
    throw ShapeError("agni_forward: sample histogram [" + std::to_string(sample.bands) + "x" +
                     std::to_string(sample.bins) + "] does not match network input [" + std::to_string(arch.bands) +
                     "x" + std::to_string(arch.bins) + "]");
  }
  if (sample.timesteps < 1) throw ShapeError("agni_forward: sample has no timesteps");
  if (p.size() != 11) throw ShapeError("agni_forward: expected 11 parameter arrays");
  const auto& kernels = p[0];
  const auto& conv_bias = p[1];
  const ag::LstmWeights<S> lstm{p[2], p[3], p[4]};

  std::vector<ag::Value<S>> bridged;
  const ag::Shape image{static_cast<std::size_t>(arch.bands), static_cast<std::size_t>(arch.bins)};
  for (auto& step : normalized_steps<S>(sample)) {
    const ag::Value<S> x = tape.constant(image, std::move(step));
    const ag::Value<S> features = ag::conv2d(x, kernels, conv_bias);
    const std::size_t channels = features.shape()[0];
    if (arch.bridge == Bridge::kFlatten) {
      bridged.push_back(ag::reshape(features, {features.size()}));
    } else {
      // Per-channel mean over the B x N positions.
      const std::size_t positions = features.size() / channels;
      const ag::Value<S> pool = tape.constant({positions, 1}, ag::Buffer<S>(positions, S{1} / static_cast<S>(positions)));
      bridged.push_back(ag::reshape(ag::matmul(ag::reshape(features, {channels, positions}), pool), {channels}));
    }
  }
  // Input projection for every timestep in one product.
  const ag::Value<S> projected = ag::matmul_nt(ag::stack_rows(bridged), lstm.input_weight);
  const std::size_t hidden = static_cast<std::size_t>(arch.hidden);
  ag::Value<S> h = tape.constant(ag::Tensor<S>({hidden}));
  ag::Value<S> c = tape.constant(ag::Tensor<S>({hidden}));
  for (std::size_t t = 0; t < static_cast<std::size_t>(sample.timesteps); ++t) {
    std::tie(h, c) = ag::lstm_cell(ag::row(projected, t), h, c, lstm);
  }
  const ag::Value<S> d = ag::dropout(h, arch.dropout, training, rng);
  const ag::Value<S> z1 = ag::dense(d, p[5], p[6], ag::Activation::kRelu);
  const ag::Value<S> z2 = ag::dense(z1, p[7], p[8], ag::Activation::kRelu);
  return ag::dense(z2, p[9], p[10], ag::Activation::kSigmoid);
}

// Inference-style forward pass; returns the predicted confidence in (0, 1).
template <class S, class Rng>
double agni_forward(const AgniParams<S>& params, const HistogramSample& sample, bool training, Rng& rng) {
  ag::Tape<S> tape;
  const auto p = bind_parameters<S>(tape, params.named(), nullptr);
  return static_cast<double>(agni_graph(tape, params.arch, p, sample, training, rng).item());
}

// Timestep-mean of the normalized B x N histogram, flattened.
template <class S>
ag::Buffer<S> lr_features(const HistogramSample& sample) {
  const std::size_t width = static_cast<std::size_t>(sample.bands) * sample.bins;
  std::vector<double> acc(width, 0.0);
  for (int t = 0; t < sample.timesteps; ++t) {
    for (std::size_t i = 0; i < width; ++i) acc[i] += sample.hist[t * width + i];
  }
  const double pixels = sample.tile_pixels();
  const double scale = (sample.timesteps > 0 && pixels > 0) ? 1.0 / (sample.timesteps * pixels) : 0.0;
  ag::Buffer<S> out(width);
  for (std::size_t i = 0; i < width; ++i) out[i] = static_cast<S>(acc[i] * scale);
  return out;
}

template <class S>
ag::Value<S> lr_graph(ag::Tape<S>& tape, int bands, int bins, const std::vector<ag::Value<S>>& p,
                      const HistogramSample& sample) {
  if (sample.bands != bands || sample.bins != bins) {
    throw ShapeError("lr_forward: sample histogram [" + std::to_string(sample.bands) + "x" +
                     std::to_string(sample.bins) + "] does not match weights [" + std::to_string(bands) + "x" +
                     std::to_string(bins) + "]");
  }
  const ag::Value<S> x = tape.constant({static_cast<std::size_t>(bands) * bins}, lr_features<S>(sample));
  return ag::dense(x, p[0], p[1], ag::Activation::kSigmoid);
}

template <class S>
double lr_forward(const LrParams<S>& params, const HistogramSample& sample) {
  ag::Tape<S> tape;
  const auto p = bind_parameters<S>(tape, params.named(), nullptr);
  return static_cast<double>(lr_graph(tape, params.bands, params.bins, p, sample).item());
}

// ---------------------------------------------------------------------------
// Training

enum class Arch { kAgni, kLr };
enum class Optimizer { kAdam, kSgd };

struct TrainConfig {
  LossKind loss = LossKind::kCustom;
  double k = 30.0;
  int epochs = 10;
  double learning_rate = 1e-3;
  double ratio = 3.0;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
  AgniArch agni;

  void validate() const;
};

using Model = std::variant<AgniParams<float>, LrParams<float>>;

Arch model_arch(const Model& model);
// Inference-mode score in (0, 1).
double predict(const Model& model, const HistogramSample& sample);

struct TrainResult {
  Model model;
  std::vector<double> epoch_loss;
};

// Batch-size-1 stochastic training over shuffled epochs. Throws
// TrainingError on a non-finite loss, DataError on an empty set.
TrainResult train(std::span<const HistogramSample> samples, Arch arch, const TrainConfig& cfg);

// Keeps every non-zero-label sample and floor(ratio * #non-zero) zero-label
// samples drawn without replacement (all of them if fewer), shuffled.
std::vector<HistogramSample> resample(std::span<const HistogramSample> samples, double ratio, std::mt19937_64& rng);

// weights.json (arrays, shapes, dtype, offsets) + weights.bin (little-endian f32).
void write_weights(const std::filesystem::path& dir, const Model& model);
Model read_weights(const std::filesystem::path& dir);

void write_trace_csv(const std::filesystem::path& path, std::span<const double> epoch_loss);

std::string to_string(Arch arch);
std::string to_string(LossKind loss);
Arch parse_arch(const std::string& text);
LossKind parse_loss(const std::string& text);

}  // namespace agni
