#include "agni/run_config.hpp"

#include <charconv>
#include <set>

#include "agni/error.hpp"
#include "binary_io.hpp"

namespace agni {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object, rejecting anything it was not asked for.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(prefix_ + key + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  void date(const std::string& key, Date& out) {
    std::string text;
    get(key, text);
    if (seen_.count(key)) out = parse_as_date(key, text);
  }

  void optional_date(const std::string& key, std::optional<Date>& out) {
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      seen_.insert(key);
      out.reset();
      return;
    }
    Date d{};
    date(key, d);
    out = d;
  }

  void optional_path(const std::string& key, std::optional<std::filesystem::path>& out) {
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      seen_.insert(key);
      out.reset();
      return;
    }
    std::string text;
    get(key, text);
    out = text;
  }

  // Calls `parse` with the string value; the parser's ConfigError is re-keyed.
  template <class T, class Parse>
  void choice(const std::string& key, T& out, Parse parse) {
    std::string text;
    get(key, text);
    if (!seen_.count(key)) return;
    try {
      out = parse(text);
    } catch (const ConfigError& e) {
      throw ConfigError(prefix_ + key + ": " + e.what());
    }
  }

  std::optional<Fields> child(const std::string& key) {
    if (!j_.contains(key)) return std::nullopt;
    seen_.insert(key);
    return Fields(j_.at(key), prefix_ + key + ".");
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + prefix_ + key + "'");
    }
  }

 private:
  std::string where() const { return prefix_.empty() ? "config" : prefix_.substr(0, prefix_.size() - 1); }

  Date parse_as_date(const std::string& key, const std::string& text) const {
    try {
      return parse_date(text);
    } catch (const ConfigError& e) {
      throw ConfigError(prefix_ + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

Optimizer parse_optimizer(const std::string& text) {
  if (text == "adam") return Optimizer::kAdam;
  if (text == "sgd") return Optimizer::kSgd;
  throw ConfigError("expected 'adam' or 'sgd', got '" + text + "'");
}

Bridge parse_bridge(const std::string& text) {
  if (text == "flatten") return Bridge::kFlatten;
  if (text == "mean_pool") return Bridge::kMeanPool;
  throw ConfigError("expected 'flatten' or 'mean_pool', got '" + text + "'");
}

void read_world(Fields& f, WorldConfig& w) {
  f.get("height", w.height);
  f.get("width", w.width);
  f.get("bands", w.bands);
  f.get("scene_period_days", w.scene_period_days);
  f.get("span_days", w.span_days);
  f.date("start", w.start);
  f.get("orbit_jitter_px", w.orbit_jitter_px);
  f.get("missing_scene_probability", w.missing_scene_probability);
  f.get("slc_fraction", w.slc_fraction);
  f.get("slc_period_rows", w.slc_period_rows);
  f.get("cell_size", w.cell_size);
  f.get("latent_spacing_px", w.latent_spacing_px);
  f.get("risk_persistence", w.risk_persistence);
  f.get("seasonal_amplitude", w.seasonal_amplitude);
  f.get("seasonal_peak_doy", w.seasonal_peak_doy);
  f.get("seasonal_sharpness", w.seasonal_sharpness);
  f.get("risk_gain", w.risk_gain);
  f.get("max_ignition_probability", w.max_ignition_probability);
  f.get("zero_label_target", w.zero_label_target);
  f.get("pixel_noise", w.pixel_noise);
  f.get("dryness_band", w.dryness_band);
  f.get("dryness_convexity", w.dryness_convexity);
  f.get("dryness_gain", w.dryness_gain);
  f.finish();
}

void read_prep(Fields& f, PrepConfig& p) {
  f.get("tile_size", p.tile_size);
  f.get("window_days", p.window_days);
  f.get("label_from_days", p.label_from_days);
  f.get("label_to_days", p.label_to_days);
  f.get("bins", p.bins);
  f.optional_date("start", p.start);
  f.optional_date("end", p.end);
  f.finish();
}

void read_train(Fields& f, RunConfig& cfg) {
  TrainConfig& t = cfg.train;
  f.choice("arch", cfg.arch, parse_arch);
  f.choice("loss", t.loss, parse_loss);
  f.get("k", t.k);
  f.get("epochs", t.epochs);
  f.get("learning_rate", t.learning_rate);
  f.get("ratio", t.ratio);
  f.choice("optimizer", t.optimizer, parse_optimizer);
  f.get("beta1", t.beta1);
  f.get("beta2", t.beta2);
  f.get("epsilon", t.epsilon);
  f.get("clip_norm", t.clip_norm);
  if (auto a = f.child("agni")) {
    a->get("conv_channels", t.agni.conv_channels);
    a->get("hidden", t.agni.hidden);
    a->get("dense1", t.agni.dense1);
    a->get("dense2", t.agni.dense2);
    a->get("dropout", t.agni.dropout);
    a->choice("bridge", t.agni.bridge, parse_bridge);
    a->finish();
  }
  f.finish();
}

void read_eval(Fields& f, EvalOptions& e) {
  f.get("thresholds", e.thresholds);
  f.get("months", e.months);
  f.get("month_days", e.month_days);
  f.get("windows", e.windows);
  f.get("oracle", e.oracle);
  f.finish();
}

}  // namespace

nlohmann::json world_config_json(const WorldConfig& w) {
  json j;
  j["height"] = w.height;
  j["width"] = w.width;
  j["bands"] = w.bands;
  j["scene_period_days"] = w.scene_period_days;
  j["span_days"] = w.span_days;
  j["start"] = format_date(w.start);
  j["orbit_jitter_px"] = w.orbit_jitter_px;
  j["missing_scene_probability"] = w.missing_scene_probability;
  j["slc_fraction"] = w.slc_fraction;
  j["slc_period_rows"] = w.slc_period_rows;
  j["cell_size"] = w.cell_size;
  j["latent_spacing_px"] = w.latent_spacing_px;
  j["risk_persistence"] = w.risk_persistence;
  j["seasonal_amplitude"] = w.seasonal_amplitude;
  j["seasonal_peak_doy"] = w.seasonal_peak_doy;
  j["seasonal_sharpness"] = w.seasonal_sharpness;
  j["risk_gain"] = w.risk_gain;
  j["max_ignition_probability"] = w.max_ignition_probability;
  j["zero_label_target"] = w.zero_label_target;
  j["pixel_noise"] = w.pixel_noise;
  j["dryness_band"] = w.dryness_band;
  j["dryness_convexity"] = w.dryness_convexity;
  j["dryness_gain"] = w.dryness_gain;
  j["seed"] = w.seed;
  return j;
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig w;
  Fields f(j, "world.");
  f.get("seed", w.seed);
  read_world(f, w);
  return w;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  Fields f(j, "");
  f.get("seed", cfg.seed);
  std::string out = cfg.out.string();
  f.get("out", out);
  cfg.out = out;
  if (auto w = f.child("world")) read_world(*w, cfg.world);
  if (auto p = f.child("prep")) read_prep(*p, cfg.prep);
  if (auto t = f.child("train")) read_train(*t, cfg);
  if (auto e = f.child("eval")) read_eval(*e, cfg.eval);
  if (auto p = f.child("paths")) {
    p->optional_path("store", cfg.store_path);
    p->optional_path("dataset", cfg.dataset_path);
    p->optional_path("model", cfg.model_path);
    p->finish();
  }
  f.finish();
  return cfg;
}

nlohmann::json run_config_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json j;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out.generic_string();
  j["world"] = world_config_json(cfg.world);
  j["world"].erase("seed");
  j["prep"] = prep_config_json(cfg.prep);
  j["train"] = {{"arch", to_string(cfg.arch)},
                {"loss", to_string(t.loss)},
                {"k", t.k},
                {"epochs", t.epochs},
                {"learning_rate", t.learning_rate},
                {"ratio", t.ratio},
                {"optimizer", t.optimizer == Optimizer::kAdam ? "adam" : "sgd"},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"clip_norm", t.clip_norm},
                {"agni",
                 {{"conv_channels", t.agni.conv_channels},
                  {"hidden", t.agni.hidden},
                  {"dense1", t.agni.dense1},
                  {"dense2", t.agni.dense2},
                  {"dropout", t.agni.dropout},
                  {"bridge", t.agni.bridge == Bridge::kFlatten ? "flatten" : "mean_pool"}}}};
  j["eval"] = {{"thresholds", cfg.eval.thresholds},
               {"months", cfg.eval.months},
               {"month_days", cfg.eval.month_days},
               {"windows", cfg.eval.windows},
               {"oracle", cfg.eval.oracle}};
  auto path_json = [](const std::optional<std::filesystem::path>& p) {
    return p ? json(p->generic_string()) : json(nullptr);
  };
  j["paths"] = {{"store", path_json(cfg.store_path)},
                {"dataset", path_json(cfg.dataset_path)},
                {"model", path_json(cfg.model_path)}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::vector<char> raw;
  try {
    raw = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  json j;
  try {
    j = json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_run_config(const std::filesystem::path& dir, const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  io::write_text(dir / "run_config.json", run_config_json(cfg).dump(2) + "\n");
}

WorldConfig RunConfig::resolved_world() const {
  WorldConfig w = world;
  w.seed = seed;
  return w;
}

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.seed = derive_seed(seed, "train");
  return t;
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.prep = prep;
  e.train = resolved_train();
  e.sweep_arch = arch;
  e.months = eval.months;
  e.month_days = eval.month_days;
  e.seed = seed;
  return e;
}

void RunConfig::validate() const {
  world.validate();
  prep.validate();
  train.validate();
  if (eval.months < 1) throw ConfigError("eval.months: must be >= 1");
  if (eval.month_days < 1) throw ConfigError("eval.month_days: must be >= 1");
  if (eval.windows.empty()) throw ConfigError("eval.windows: at least one window length is required");
  for (int w : eval.windows) {
    if (w < 1) throw ConfigError("eval.windows: window lengths must be >= 1 day");
  }
}

std::vector<int> parse_windows(const std::string& csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', pos), csv.size());
    const std::string item = csv.substr(pos, comma - pos);
    int value = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc{} || end != item.data() + item.size() || value < 1) {
      throw ConfigError("--windows: expected comma-separated positive day counts, got '" + csv + "'");
    }
    out.push_back(value);
    pos = comma + 1;
  }
  return out;
}

}  // namespace agni
