#include "agni/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "agni/error.hpp"
#include "binary_io.hpp"

namespace agni {

// ---------------------------------------------------------------------------
// Losses

namespace {
constexpr double kLossCap = 1e5;
constexpr double kLn10 = 2.302585092994045684;

void check_k(double k) {
  if (!(k > 0.0)) throw ConfigError("train.k: must be > 0, got " + std::to_string(k));
}
}  // namespace

double custom_loss(double y_true, double y_pred, double k) {
  check_k(k);
  const double gap = y_true - y_pred;
  const double multiplier = std::min(kLossCap, std::max(1.0, std::pow(10.0, gap * 100.0 / k)));
  return std::abs(gap) * multiplier;
}

double custom_loss_grad(double y_true, double y_pred, double k) {
  check_k(k);
  const double gap = y_true - y_pred;
  if (gap == 0.0) return 0.0;
  if (gap < 0.0) return 1.0;  // multiplier clamped at 1: L = y_pred - y_true
  const double a = 100.0 / k;
  const double exponent = gap * a;
  // Unclamped while 10^(gap * a) <= 1e5; the boundary takes this side.
  if (exponent <= 5.0) {
    const double m = std::pow(10.0, exponent);
    return -(m + gap * m * a * kLn10);
  }
  return -kLossCap;
}

double mse_loss(double y_true, double y_pred) { return (y_true - y_pred) * (y_true - y_pred); }
double mse_loss_grad(double y_true, double y_pred) { return 2.0 * (y_pred - y_true); }

// ---------------------------------------------------------------------------
// Initialization

namespace {

template <class S>
ag::Tensor<S> glorot(ag::Shape shape, double fan_in, double fan_out, std::mt19937_64& rng) {
  ag::Tensor<S> t(std::move(shape));
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (S& v : t.data) v = static_cast<S>(dist(rng));
  return t;
}

}  // namespace

template <class S>
AgniParams<S> init_agni(const AgniArch& arch, std::mt19937_64& rng) {
  if (arch.bands < 3 || arch.bins < 3) throw ShapeError("init_agni: histogram must be at least 3x3 for the kernel");
  if (arch.conv_channels < 1 || arch.hidden < 1 || arch.dense1 < 1 || arch.dense2 < 1) {
    throw ConfigError("train.agni: layer widths must be >= 1");
  }
  const auto c = static_cast<std::size_t>(arch.conv_channels);
  const auto h = static_cast<std::size_t>(arch.hidden);
  const auto d1 = static_cast<std::size_t>(arch.dense1);
  const auto d2 = static_cast<std::size_t>(arch.dense2);
  const std::size_t f = arch.lstm_input_width();

  AgniParams<S> p;
  p.arch = arch;
  p.conv_kernels = glorot<S>({c, 1, 3, 3}, 9.0, 9.0 * c, rng);
  p.conv_bias = ag::Tensor<S>({c});
  p.lstm_input = glorot<S>({4 * h, f}, static_cast<double>(f), 4.0 * h, rng);
  p.lstm_recurrent = glorot<S>({4 * h, h}, static_cast<double>(h), 4.0 * h, rng);
  p.lstm_bias = ag::Tensor<S>({4 * h});
  std::fill(p.lstm_bias.data.begin() + h, p.lstm_bias.data.begin() + 2 * h, S{1});
  p.dense1_weight = glorot<S>({d1, h}, static_cast<double>(h), static_cast<double>(d1), rng);
  p.dense1_bias = ag::Tensor<S>({d1});
  p.dense2_weight = glorot<S>({d2, d1}, static_cast<double>(d1), static_cast<double>(d2), rng);
  p.dense2_bias = ag::Tensor<S>({d2});
  p.out_weight = glorot<S>({1, d2}, static_cast<double>(d2), 1.0, rng);
  p.out_bias = ag::Tensor<S>({1});
  return p;
}

template <class S>
LrParams<S> init_lr(int bands, int bins) {
  LrParams<S> p;
  p.bands = bands;
  p.bins = bins;
  p.weight = ag::Tensor<S>({1, static_cast<std::size_t>(bands) * bins});
  p.bias = ag::Tensor<S>({1});
  return p;
}

template AgniParams<float> init_agni<float>(const AgniArch&, std::mt19937_64&);
template AgniParams<double> init_agni<double>(const AgniArch&, std::mt19937_64&);
template LrParams<float> init_lr<float>(int, int);
template LrParams<double> init_lr<double>(int, int);

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("train." + field + ": " + why);
  };
  if (!(k > 0.0)) fail("k", "must be > 0");
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(ratio >= 1.0)) fail("ratio", "must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon", "must be > 0");
  if (!(clip_norm >= 0.0)) fail("clip_norm", "must be >= 0");
  if (!(agni.dropout >= 0.0 && agni.dropout < 1.0)) fail("dropout", "must be in [0, 1)");
}

Arch model_arch(const Model& model) {
  return std::holds_alternative<AgniParams<float>>(model) ? Arch::kAgni : Arch::kLr;
}

double predict(const Model& model, const HistogramSample& sample) {
  if (const auto* agni = std::get_if<AgniParams<float>>(&model)) {
    std::mt19937_64 unused(0);
    return agni_forward(*agni, sample, false, unused);
  }
  return lr_forward(std::get<LrParams<float>>(model), sample);
}

namespace {

// Adam or plain SGD over a fixed set of parameter arrays.
class Stepper {
 public:
  Stepper(const TrainConfig& cfg, const std::vector<std::pair<std::string, ag::Tensor<float>*>>& params)
      : cfg_(cfg), params_(params) {
    for (const auto& [name, t] : params_) {
      grads_.emplace_back(t->shape);
      if (cfg.optimizer == Optimizer::kAdam) {
        first_.emplace_back(t->size(), 0.0f);
        second_.emplace_back(t->size(), 0.0f);
      }
    }
  }

  std::vector<ag::Tensor<float>>& grads() { return grads_; }

  void zero_grad() {
    for (auto& g : grads_) std::fill(g.data.begin(), g.data.end(), 0.0f);
  }

  void step() {
    float scale = 1.0f;
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads_) {
        sq += Eigen::Map<const Eigen::ArrayXf>(g.data.data(), static_cast<Eigen::Index>(g.size()))
                  .cast<double>()
                  .square()
                  .sum();
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) scale = static_cast<float>(cfg_.clip_norm / norm);
    }
    ++t_;
    const auto lr = static_cast<float>(cfg_.learning_rate);
    const auto b1 = static_cast<float>(cfg_.beta1);
    const auto b2 = static_cast<float>(cfg_.beta2);
    const auto c1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, t_));
    const auto c2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, t_));
    const auto eps = static_cast<float>(cfg_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto n = static_cast<Eigen::Index>(grads_[i].size());
      Eigen::Map<Eigen::ArrayXf> w(params_[i].second->data.data(), n);
      Eigen::Map<const Eigen::ArrayXf> g(grads_[i].data.data(), n);
      if (cfg_.optimizer == Optimizer::kSgd) {
        w -= (lr * scale) * g;
        continue;
      }
      Eigen::Map<Eigen::ArrayXf> m(first_[i].data(), n);
      Eigen::Map<Eigen::ArrayXf> v(second_[i].data(), n);
      m = b1 * m + ((1.0f - b1) * scale) * g;
      v = b2 * v + ((1.0f - b2) * scale * scale) * g.square();
      w -= (lr / c1) * m / ((v / c2).sqrt() + eps);
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<std::pair<std::string, ag::Tensor<float>*>> params_;
  std::vector<ag::Tensor<float>> grads_;
  std::vector<std::vector<float>> first_;
  std::vector<std::vector<float>> second_;
  long t_ = 0;
};

template <class Params, class Forward>
std::vector<double> fit(Params& params, std::span<const HistogramSample> samples, const TrainConfig& cfg,
                        std::mt19937_64& rng, Forward forward) {
  Stepper stepper(cfg, params.named());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      const HistogramSample& sample = samples[idx];
      stepper.zero_grad();
      ag::Tape<float> tape;
      const auto p = bind_parameters<float>(tape, std::as_const(params).named(), &stepper.grads());
      const ag::Value<float> y = forward(tape, p, sample);
      const ag::Value<float> loss = ag::sum(loss_value(cfg.loss, sample.label, y, cfg.k));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                            ", sample " + std::to_string(idx));
      }
      tape.backward(loss);
      stepper.step();
      total += value;
    }
    trace.push_back(samples.empty() ? 0.0 : total / static_cast<double>(samples.size()));
  }
  return trace;
}

}  // namespace

TrainResult train(std::span<const HistogramSample> samples, Arch arch, const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw DataError("train: empty training set");
  const int bands = samples.front().bands;
  const int bins = samples.front().bins;
  for (const auto& s : samples) {
    if (s.bands != bands || s.bins != bins) throw DataError("train: samples disagree on histogram dimensions");
  }
  std::mt19937_64 rng(cfg.seed);
  if (arch == Arch::kAgni) {
    AgniArch shape = cfg.agni;
    shape.bands = bands;
    shape.bins = bins;
    auto params = init_agni<float>(shape, rng);
    auto trace = fit(params, samples, cfg, rng, [&](ag::Tape<float>& tape, const auto& p, const HistogramSample& s) {
      return agni_graph(tape, shape, p, s, true, rng);
    });
    return {std::move(params), std::move(trace)};
  }
  auto params = init_lr<float>(bands, bins);
  auto trace = fit(params, samples, cfg, rng, [&](ag::Tape<float>& tape, const auto& p, const HistogramSample& s) {
    return lr_graph(tape, bands, bins, p, s);
  });
  return {std::move(params), std::move(trace)};
}

std::vector<HistogramSample> resample(std::span<const HistogramSample> samples, double ratio, std::mt19937_64& rng) {
  if (!(ratio >= 1.0)) throw ConfigError("train.ratio: must be >= 1");
  std::vector<std::size_t> zero, nonzero;
  for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].label > 0.0f ? nonzero : zero).push_back(i);
  if (nonzero.empty()) throw DataError("resample: no non-zero labels, nothing to learn");
  const auto wanted = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(nonzero.size())));
  std::vector<std::size_t> keep = nonzero;
  if (wanted >= zero.size()) {
    keep.insert(keep.end(), zero.begin(), zero.end());
  } else {
    std::sample(zero.begin(), zero.end(), std::back_inserter(keep), wanted, rng);
  }
  std::shuffle(keep.begin(), keep.end(), rng);
  std::vector<HistogramSample> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(samples[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

nlohmann::json arch_json(const AgniArch& a) {
  return {{"bands", a.bands},   {"bins", a.bins},       {"conv_channels", a.conv_channels},
          {"hidden", a.hidden}, {"dense1", a.dense1},   {"dense2", a.dense2},
          {"dropout", a.dropout}, {"bridge", a.bridge == Bridge::kFlatten ? "flatten" : "mean_pool"}};
}

template <class Named>
void write_arrays(const std::filesystem::path& dir, nlohmann::json manifest, const Named& named) {
  std::vector<char> bin;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& [name, t] : named) {
    arrays.push_back({{"name", name}, {"shape", t->shape}, {"dtype", "f32"}, {"offset", bin.size()}, {"count", t->size()}});
    for (float v : t->data) io::put(bin, v);
  }
  manifest["arrays"] = std::move(arrays);
  std::filesystem::create_directories(dir);
  io::write_file(dir / "weights.bin", bin);
  io::write_text(dir / "weights.json", manifest.dump(1) + "\n");
}

template <class Named>
void read_arrays(const std::filesystem::path& dir, const nlohmann::json& manifest, const Named& named) {
  const auto bin_path = dir / "weights.bin";
  const auto raw = io::read_file(bin_path);
  const auto& arrays = manifest.at("arrays");
  if (arrays.size() != named.size()) throw FormatError((dir / "weights.json").string() + ": unexpected array count");
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& entry = arrays[i];
    auto& [name, t] = named[i];
    if (entry.at("name").get<std::string>() != name || entry.at("dtype").get<std::string>() != "f32" ||
        entry.at("shape").get<ag::Shape>() != t->shape) {
      throw FormatError((dir / "weights.json").string() + ": array '" + name + "' does not match the architecture");
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + t->size() * 4 > raw.size()) throw FormatError(bin_path.string() + ": truncated");
    io::Cursor cur(std::span<const char>(raw).subspan(offset, t->size() * 4), bin_path.string());
    for (float& v : t->data) {
      v = cur.get<float>();
      if (!std::isfinite(v)) throw FormatError(bin_path.string() + ": non-finite value in '" + name + "'");
    }
  }
}

}  // namespace

void write_weights(const std::filesystem::path& dir, const Model& model) {
  nlohmann::json manifest;
  manifest["format"] = "agni-weights";
  manifest["version"] = 1;
  if (const auto* agni = std::get_if<AgniParams<float>>(&model)) {
    manifest["arch"] = "agni";
    manifest["config"] = arch_json(agni->arch);
    write_arrays(dir, manifest, agni->named());
  } else {
    const auto& lr = std::get<LrParams<float>>(model);
    manifest["arch"] = "lr";
    manifest["config"] = {{"bands", lr.bands}, {"bins", lr.bins}};
    write_arrays(dir, manifest, lr.named());
  }
}

Model read_weights(const std::filesystem::path& dir) {
  const auto path = dir / "weights.json";
  try {
    const auto raw = io::read_file(path);
    const auto manifest = nlohmann::json::parse(raw.begin(), raw.end());
    if (manifest.at("format") != "agni-weights" || manifest.at("version") != 1) {
      throw FormatError(path.string() + ": not an agni weight manifest");
    }
    const auto& cfg = manifest.at("config");
    if (manifest.at("arch") == "agni") {
      AgniArch arch;
      arch.bands = cfg.at("bands");
      arch.bins = cfg.at("bins");
      arch.conv_channels = cfg.at("conv_channels");
      arch.hidden = cfg.at("hidden");
      arch.dense1 = cfg.at("dense1");
      arch.dense2 = cfg.at("dense2");
      arch.dropout = cfg.at("dropout");
      arch.bridge = cfg.at("bridge") == "flatten" ? Bridge::kFlatten : Bridge::kMeanPool;
      std::mt19937_64 rng(0);
      auto params = init_agni<float>(arch, rng);
      read_arrays(dir, manifest, params.named());
      return params;
    }
    if (manifest.at("arch") == "lr") {
      auto params = init_lr<float>(cfg.at("bands"), cfg.at("bins"));
      read_arrays(dir, manifest, params.named());
      return params;
    }
    throw FormatError(path.string() + ": unknown architecture");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_trace_csv(const std::filesystem::path& path, std::span<const double> epoch_loss) {
  std::string text = "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t i = 0; i < epoch_loss.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i + 1, epoch_loss[i]);
    text += buf;
  }
  io::write_text(path, text);
}

std::string to_string(Arch arch) { return arch == Arch::kAgni ? "agni" : "lr"; }
std::string to_string(LossKind loss) { return loss == LossKind::kCustom ? "custom" : "mse"; }

Arch parse_arch(const std::string& text) {
  if (text == "agni") return Arch::kAgni;
  if (text == "lr") return Arch::kLr;
  throw ConfigError("arch: expected 'agni' or 'lr', got '" + text + "'");
}

LossKind parse_loss(const std::string& text) {
  if (text == "custom") return LossKind::kCustom;
  if (text == "mse") return LossKind::kMse;
  throw ConfigError("loss: expected 'custom' or 'mse', got '" + text + "'");
}

}  // namespace agni
