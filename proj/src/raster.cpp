#include "agni/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "agni/error.hpp"
#include "binary_io.hpp"

namespace agni {

Extent Extent::intersect(const Extent& other) const {
  const std::int64_t r0 = std::max(row, other.row);
  const std::int64_t c0 = std::max(col, other.col);
  const std::int64_t r1 = std::min(row_end(), other.row_end());
  const std::int64_t c1 = std::min(col_end(), other.col_end());
  return {r0, c0, std::max<std::int64_t>(0, r1 - r0), std::max<std::int64_t>(0, c1 - c0)};
}

Scene::Scene(Date acquired_at, Extent extent, int band_count)
    : acquired_at_(acquired_at),
      extent_(extent),
      band_count_(band_count),
      pixels_(static_cast<std::size_t>(band_count) * extent.rows * extent.cols, 0),
      mask_(static_cast<std::size_t>(extent.rows * extent.cols), 0) {
  if (band_count < 1 || extent.rows < 0 || extent.cols < 0) {
    throw ContractError("Scene: invalid dimensions");
  }
}

void Scene::set_pixel(std::int64_t r, std::int64_t c, std::span<const std::uint8_t> values) {
  if (values.size() != static_cast<std::size_t>(band_count_)) {
    throw ShapeError("Scene::set_pixel: expected " + std::to_string(band_count_) + " values, got " +
                     std::to_string(values.size()));
  }
  mask_[r * extent_.cols + c] = 1;
  for (int b = 0; b < band_count_; ++b) pixels_[index(b, r, c)] = values[b];
}

void Scene::invalidate(std::int64_t r, std::int64_t c) {
  mask_[r * extent_.cols + c] = 0;
  for (int b = 0; b < band_count_; ++b) pixels_[index(b, r, c)] = 0;
}

void Scene::check_invariants() const {
  const std::int64_t n = pixel_count();
  for (std::int64_t i = 0; i < n; ++i) {
    if (mask_[i]) continue;
    for (int b = 0; b < band_count_; ++b) {
      if (pixels_[static_cast<std::size_t>(b) * n + i] != 0) {
        throw ContractError("Scene " + format_date(acquired_at_) + ": invalid pixel " + std::to_string(i) +
                            " holds a non-zero value in band " + std::to_string(b));
      }
    }
  }
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("world." + field + ": " + why);
  };
  if (height < 1) fail("height", "must be >= 1");
  if (width < 1) fail("width", "must be >= 1");
  if (bands < 1 || bands > 255) fail("bands", "must be in [1, 255]");
  if (scene_period_days < 1) fail("scene_period_days", "must be >= 1");
  if (span_days < 0) fail("span_days", "must be >= 0");
  if (orbit_jitter_px < 0) fail("orbit_jitter_px", "must be >= 0");
  if (!(missing_scene_probability >= 0.0 && missing_scene_probability <= 1.0)) {
    fail("missing_scene_probability", "must be in [0, 1]");
  }
  if (!(slc_fraction >= 0.0 && slc_fraction <= 0.5)) fail("slc_fraction", "must be in [0, 0.5]");
  if (slc_period_rows < 1) fail("slc_period_rows", "must be >= 1");
  if (cell_size < 1) fail("cell_size", "must be >= 1");
  if (latent_spacing_px < 1) fail("latent_spacing_px", "must be >= 1");
  if (!(risk_persistence >= 0.0 && risk_persistence < 1.0)) fail("risk_persistence", "must be in [0, 1)");
  if (!(seasonal_amplitude >= 0.0)) fail("seasonal_amplitude", "must be >= 0");
  if (seasonal_peak_doy < 0 || seasonal_peak_doy > 365) fail("seasonal_peak_doy", "must be in [0, 365]");
  if (!(seasonal_sharpness >= 0.0)) fail("seasonal_sharpness", "must be >= 0");
  if (!(risk_gain > 0.0)) fail("risk_gain", "must be > 0");
  if (!(max_ignition_probability > 0.0 && max_ignition_probability <= 1.0)) {
    fail("max_ignition_probability", "must be in (0, 1]");
  }
  if (!(zero_label_target >= 0.0 && zero_label_target <= 1.0)) fail("zero_label_target", "must be in [0, 1]");
  if (!(pixel_noise >= 0.0 && pixel_noise <= 64.0)) fail("pixel_noise", "must be in [0, 64]");
  if (dryness_band < 0 || dryness_band >= bands) fail("dryness_band", "must index an existing band");
  if (!(dryness_convexity >= 0.0 && dryness_convexity <= 4.0)) fail("dryness_convexity", "must be in [0, 4]");
  if (!(dryness_gain > 0.0)) fail("dryness_gain", "must be > 0");
}

Scene apply_slc_mask(const Scene& scene, int phase, const SlcGeometry& geometry) {
  if (phase < 0) throw ContractError("apply_slc_mask: phase must be >= 0");
  Scene out = scene;
  if (geometry.fraction <= 0.0 || scene.width() == 0) return out;
  const int period = std::max(1, geometry.period_rows);
  // Mean gap height over columns is half the edge height, so the edge height
  // is 2 * fraction * period.
  const double edge_height = 2.0 * geometry.fraction * period;
  const double centre = (static_cast<double>(scene.width()) - 1.0) / 2.0;
  const double half = static_cast<double>(scene.width()) / 2.0;
  for (std::int64_t c = 0; c < scene.width(); ++c) {
    const double gap = edge_height * std::abs(static_cast<double>(c) - centre) / half;
    for (std::int64_t r = 0; r < scene.height(); ++r) {
      const auto q = static_cast<double>((r + phase) % period);
      if (q + 0.5 < gap) out.invalidate(r, c);
    }
  }
  return out;
}

Scene crop_to(const Scene& scene, const Extent& extent) {
  Scene out(scene.acquired_at(), extent, scene.band_count());
  const Extent overlap = scene.extent().intersect(extent);
  if (overlap.empty()) return out;
  const Extent& src = scene.extent();
  for (int b = 0; b < scene.band_count(); ++b) {
    const auto in = scene.band(b);
    auto dst = out.mutable_band(b);
    for (std::int64_t r = overlap.row; r < overlap.row_end(); ++r) {
      const auto* from = in.data() + (r - src.row) * src.cols + (overlap.col - src.col);
      auto* to = dst.data() + (r - extent.row) * extent.cols + (overlap.col - extent.col);
      std::copy_n(from, overlap.cols, to);
    }
  }
  const auto in_mask = scene.mask();
  auto dst_mask = out.mutable_mask();
  for (std::int64_t r = overlap.row; r < overlap.row_end(); ++r) {
    const auto* from = in_mask.data() + (r - src.row) * src.cols + (overlap.col - src.col);
    auto* to = dst_mask.data() + (r - extent.row) * extent.cols + (overlap.col - extent.col);
    std::copy_n(from, overlap.cols, to);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic world

namespace {

enum class Cover : std::uint8_t { kWater = 0, kVegetation = 1, kBare = 2 };

// Per-cover band response: value = base + gain * risk. Bands follow the
// B1..B5, B6 low/high gain, B7 order. The dryness band instead responds to a
// convex function of risk, so it only lights up under drought.
constexpr std::array<std::array<double, 8>, 3> kBaseValue = {{
    {40, 35, 25, 12, 8, 90, 95, 6},
    {60, 70, 55, 150, 105, 115, 120, 70},
    {95, 100, 110, 120, 140, 140, 145, 55},
}};
constexpr std::array<double, 8> kRiskGain = {2, 3, 6, -16, 15, 10, 11, 8};
constexpr std::array<double, 3> kCoverGainScale = {0.15, 1.0, 0.5};

double band_base(Cover cover, int band) { return kBaseValue[static_cast<int>(cover)][band % 8]; }
double band_gain(Cover cover, int band, const WorldConfig& cfg) {
  const double scale = kCoverGainScale[static_cast<int>(cover)];
  if (band == cfg.dryness_band) return cfg.dryness_gain * scale;
  // Band 7 takes over the response table slot the dryness band vacated.
  const int slot = band == 7 ? cfg.dryness_band % 8 : band % 8;
  return kRiskGain[slot] * scale;
}

// Smooth random field: iid normal values on a lattice, bilinearly interpolated.
class Lattice {
 public:
  Lattice(std::int64_t rows, std::int64_t cols, int spacing)
      : rows_(rows / spacing + 2), cols_(cols / spacing + 2), spacing_(spacing), values_(rows_ * cols_) {}

  std::int64_t node_count() const { return rows_ * cols_; }
  std::vector<double>& values() { return values_; }

  double at(double r, double c) const {
    const double fr = r / spacing_;
    const double fc = c / spacing_;
    const auto r0 = std::min<std::int64_t>(static_cast<std::int64_t>(fr), rows_ - 2);
    const auto c0 = std::min<std::int64_t>(static_cast<std::int64_t>(fc), cols_ - 2);
    const double wr = fr - r0;
    const double wc = fc - c0;
    const double* v = values_.data() + r0 * cols_ + c0;
    return (1 - wr) * ((1 - wc) * v[0] + wc * v[1]) + wr * ((1 - wc) * v[cols_] + wc * v[cols_ + 1]);
  }

 private:
  std::int64_t rows_;
  std::int64_t cols_;
  int spacing_;
  std::vector<double> values_;
};

double seasonal_forcing(const WorldConfig& cfg, Date day) {
  const std::chrono::year_month_day ymd{day};
  const Date jan1{ymd.year() / std::chrono::January / 1};
  const double doy = static_cast<double>((day - jan1).count());
  const double phase = 2.0 * std::numbers::pi * (doy - cfg.seasonal_peak_doy) / 365.25;
  return cfg.seasonal_amplitude * std::pow(0.5 * (1.0 + std::cos(phase)), cfg.seasonal_sharpness);
}

class Generator {
 public:
  explicit Generator(const WorldConfig& cfg)
      : cfg_(cfg),
        rng_(cfg.seed),
        world_rows_(cfg.height + 2 * cfg.orbit_jitter_px),
        world_cols_(cfg.width + 2 * cfg.orbit_jitter_px),
        weeks_(cfg.span_days / 7 + 1) {}

  World run() {
    build_land_cover();
    build_latent_risk();
    World world;
    world.grids = build_hotspots();
    build_scenes(world);
    return world;
  }

 private:
  void build_land_cover() {
    Lattice field(world_rows_, world_cols_, 24);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : field.values()) v = normal(rng_);
    cover_.resize(static_cast<std::size_t>(world_rows_ * world_cols_));
    for (std::int64_t r = 0; r < world_rows_; ++r) {
      for (std::int64_t c = 0; c < world_cols_; ++c) {
        const double v = field.at(static_cast<double>(r), static_cast<double>(c));
        const Cover cover = v < -0.75 ? Cover::kWater : (v > 0.9 ? Cover::kBare : Cover::kVegetation);
        cover_[r * world_cols_ + c] = cover;
      }
    }
  }

  void build_latent_risk() {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double phi = cfg_.risk_persistence;
    const double innovation = std::sqrt(1.0 - phi * phi);
    Lattice first(world_rows_, world_cols_, cfg_.latent_spacing_px);
    for (double& v : first.values()) v = normal(rng_);
    anomaly_.push_back(first);
    for (int w = 1; w < weeks_; ++w) {
      Lattice next = anomaly_.back();
      for (double& v : next.values()) v = phi * v + innovation * normal(rng_);
      anomaly_.push_back(std::move(next));
    }
    for (int w = 0; w < weeks_; ++w) {
      seasonal_.push_back(seasonal_forcing(cfg_, cfg_.start + Days{7 * w + 3}));
    }
  }

  double risk(int week, double r, double c) const { return seasonal_[week] + anomaly_[week].at(r, c); }

  std::vector<HotspotGrid> build_hotspots() {
    const int cs = cfg_.cell_size;
    const std::int64_t grid_rows = (world_rows_ + cs - 1) / cs;
    const std::int64_t grid_cols = (world_cols_ + cs - 1) / cs;
    const std::size_t cells = static_cast<std::size_t>(grid_rows * grid_cols);

    std::vector<double> fuel(cells, 0.0);
    for (std::int64_t gr = 0; gr < grid_rows; ++gr) {
      for (std::int64_t gc = 0; gc < grid_cols; ++gc) {
        int n = 0, veg = 0;
        for (std::int64_t r = gr * cs; r < std::min(world_rows_, (gr + 1) * cs); ++r) {
          for (std::int64_t c = gc * cs; c < std::min(world_cols_, (gc + 1) * cs); ++c) {
            ++n;
            veg += cover_[r * world_cols_ + c] == Cover::kVegetation;
          }
        }
        fuel[gr * grid_cols + gc] = n ? static_cast<double>(veg) / n : 0.0;
      }
    }

    std::vector<double> cell_risk(cells * weeks_);
    for (int w = 0; w < weeks_; ++w) {
      for (std::int64_t gr = 0; gr < grid_rows; ++gr) {
        for (std::int64_t gc = 0; gc < grid_cols; ++gc) {
          cell_risk[w * cells + gr * grid_cols + gc] = risk(w, (gr + 0.5) * cs, (gc + 0.5) * cs);
        }
      }
    }

    // Calibrate the ignition threshold so the expected fraction of burning
    // week-cells meets the skew target.
    const double gain = cfg_.risk_gain;
    const double cap = cfg_.max_ignition_probability;
    auto ignition = [&](std::size_t i, double threshold) {
      return fuel[i % cells] * std::min(cap, std::exp(gain * (cell_risk[i] - threshold)));
    };
    const double target = 1.0 - cfg_.zero_label_target;
    double lo = -50.0, hi = 50.0;
    for (int iter = 0; iter < 60; ++iter) {
      const double mid = 0.5 * (lo + hi);
      double mean = 0.0;
      for (std::size_t i = 0; i < cell_risk.size(); ++i) mean += ignition(i, mid);
      mean /= static_cast<double>(cell_risk.size());
      (mean > target ? lo : hi) = mid;
    }
    const double threshold = target <= 0.0 ? std::numeric_limits<double>::infinity() : 0.5 * (lo + hi);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<HotspotGrid> grids;
    for (int w = 0; w < weeks_; ++w) {
      HotspotGrid grid;
      grid.week_start = cfg_.start + Days{7 * w};
      grid.cell_size = cs;
      grid.rows = grid_rows;
      grid.cols = grid_cols;
      grid.confidences.assign(cells, 0.0f);
      for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t k = w * cells + i;
        const double p = ignition(k, threshold);
        const double u = unit(rng_);
        const double jitter = normal(rng_);
        if (u < p) {
          // Confidence saturates towards 100 as risk exceeds the threshold.
          const double excess = cell_risk[k] - threshold + 2.5;
          const double conf = 100.0 * (1.0 - std::exp(-0.8 * std::max(0.0, excess))) + 5.0 * jitter;
          grid.confidences[i] = static_cast<float>(std::clamp(std::round(conf), 5.0, 100.0));
        }
      }
      grids.push_back(std::move(grid));
    }
    return grids;
  }

  void build_scenes(World& world) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> jitter(-cfg_.orbit_jitter_px, cfg_.orbit_jitter_px);
    std::uniform_int_distribution<int> slc_phase(0, cfg_.slc_period_rows - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    const SlcGeometry slc{cfg_.slc_fraction, cfg_.slc_period_rows};
    const int bands = cfg_.bands;
    std::vector<double> risk_row(static_cast<std::size_t>(cfg_.width));
    std::vector<double> dryness_row(risk_row.size());
    const double kappa = cfg_.dryness_convexity;
    std::vector<double> offsets(static_cast<std::size_t>(bands));

    for (int day = 0; day <= cfg_.span_days; day += cfg_.scene_period_days) {
      const Date date = cfg_.start + Days{day};
      const bool missing = unit(rng_) < cfg_.missing_scene_probability;
      const int dr = jitter(rng_);
      const int dc = jitter(rng_);
      const int phase = slc_phase(rng_);
      for (double& o : offsets) o = 3.0 * normal(rng_);
      if (missing) {
        world.missing_dates.push_back(date);
        continue;
      }
      const Extent extent{cfg_.orbit_jitter_px + dr, cfg_.orbit_jitter_px + dc, cfg_.height, cfg_.width};
      Scene scene(date, extent, bands);
      const int week = std::min(day / 7, weeks_ - 1);
      auto mask = scene.mutable_mask();
      std::fill(mask.begin(), mask.end(), std::uint8_t{1});
      std::uint64_t bits = 0;
      int bits_left = 0;
      auto noise = [&] {
        if (bits_left == 0) {
          bits = rng_();
          bits_left = 4;
        }
        const int a = static_cast<int>(bits & 0xff);
        const int b = static_cast<int>((bits >> 8) & 0xff);
        bits >>= 16;
        --bits_left;
        return (a - b) / 255.0 * cfg_.pixel_noise;
      };
      for (std::int64_t r = 0; r < cfg_.height; ++r) {
        const std::int64_t wr = extent.row + r;
        for (std::int64_t c = 0; c < cfg_.width; ++c) {
          risk_row[c] = risk(week, static_cast<double>(wr), static_cast<double>(extent.col + c));
          dryness_row[c] = kappa > 0.0 ? std::expm1(kappa * risk_row[c]) / kappa : risk_row[c];
        }
        for (int b = 0; b < bands; ++b) {
          auto out = scene.mutable_band(b).subspan(static_cast<std::size_t>(r * cfg_.width), cfg_.width);
          for (std::int64_t c = 0; c < cfg_.width; ++c) {
            const Cover cover = cover_[wr * world_cols_ + extent.col + c];
            const double response = b == cfg_.dryness_band ? dryness_row[c] : risk_row[c];
            const double v = band_base(cover, b) + band_gain(cover, b, cfg_) * response +
                             offsets[b] + noise();
            out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 1L, 255L));
          }
        }
      }
      world.scenes.push_back(apply_slc_mask(scene, phase, slc));
    }
  }

  const WorldConfig& cfg_;
  std::mt19937_64 rng_;
  std::int64_t world_rows_;
  std::int64_t world_cols_;
  int weeks_;
  std::vector<Cover> cover_;
  std::vector<Lattice> anomaly_;
  std::vector<double> seasonal_;
};

}  // namespace

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  return Generator(cfg).run();
}

// ---------------------------------------------------------------------------
// Scene store

namespace {

using nlohmann::json;

json encode_mask(std::span<const std::uint8_t> mask) {
  // Alternating run lengths, starting with an invalid run (possibly empty).
  json runs = json::array();
  std::uint8_t current = 0;
  std::int64_t run = 0;
  for (std::uint8_t m : mask) {
    if ((m != 0) == (current != 0)) {
      ++run;
    } else {
      runs.push_back(run);
      current = m != 0;
      run = 1;
    }
  }
  runs.push_back(run);
  return runs;
}

void decode_mask(const json& runs, std::span<std::uint8_t> mask, const std::string& source) {
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (const auto& run : runs) {
    const auto n = run.get<std::int64_t>();
    if (n < 0 || pos + static_cast<std::size_t>(n) > mask.size()) {
      throw FormatError(source + ": mask run-length encoding overflows the scene");
    }
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(pos), n, value);
    pos += static_cast<std::size_t>(n);
    value = !value;
  }
  if (pos != mask.size()) throw FormatError(source + ": mask run-length encoding does not cover the scene");
}

json extent_json(const Extent& e) { return json::array({e.row, e.col, e.rows, e.cols}); }

Extent extent_from(const json& j) {
  return {j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>(), j.at(2).get<std::int64_t>(),
          j.at(3).get<std::int64_t>()};
}

std::string band_file(Date date, int band) {
  return format_date(date) + ".band" + std::to_string(band + 1) + ".raw";
}

}  // namespace

void write_scene_store(const std::filesystem::path& root, const World& world) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "scenes");
  fs::create_directories(root / "labels");

  json manifest;
  manifest["version"] = 1;
  manifest["bands"] = world.scenes.empty() ? 0 : world.scenes.front().band_count();
  json scenes = json::array();
  for (const Scene& scene : world.scenes) {
    scene.check_invariants();
    json entry;
    entry["date"] = format_date(scene.acquired_at());
    entry["extent"] = extent_json(scene.extent());
    entry["bands"] = scene.band_count();
    entry["mask_rle"] = encode_mask(scene.mask());
    scenes.push_back(std::move(entry));
    for (int b = 0; b < scene.band_count(); ++b) {
      const auto band = scene.band(b);
      io::write_file(root / "scenes" / band_file(scene.acquired_at(), b),
                     {reinterpret_cast<const char*>(band.data()), band.size()});
    }
  }
  manifest["scenes"] = std::move(scenes);

  json weeks = json::array();
  for (const HotspotGrid& grid : world.grids) {
    weeks.push_back(format_date(grid.week_start));
    std::vector<char> buf;
    buf.reserve(grid.confidences.size() * 4);
    for (float v : grid.confidences) io::put(buf, v);
    io::write_file(root / "labels" / (format_date(grid.week_start) + ".raw"), buf);
  }
  json labels;
  labels["weeks"] = std::move(weeks);
  if (!world.grids.empty()) {
    const HotspotGrid& g = world.grids.front();
    labels["origin"] = json::array({g.origin_row, g.origin_col});
    labels["cell_size"] = g.cell_size;
    labels["rows"] = g.rows;
    labels["cols"] = g.cols;
  }
  manifest["labels"] = std::move(labels);
  json missing = json::array();
  for (Date d : world.missing_dates) missing.push_back(format_date(d));
  manifest["missing_dates"] = std::move(missing);

  io::write_text(root / "scenes" / "manifest.json", manifest.dump(1) + "\n");
}

World read_scene_store(const std::filesystem::path& root) {
  const auto manifest_path = root / "scenes" / "manifest.json";
  const std::string source = manifest_path.string();
  json manifest;
  try {
    const auto raw = io::read_file(manifest_path);
    manifest = json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  }

  World world;
  try {
    if (manifest.at("version").get<int>() != 1) throw FormatError(source + ": unsupported version");
    for (const auto& entry : manifest.at("scenes")) {
      const Date date = parse_date(entry.at("date").get<std::string>());
      const Extent extent = extent_from(entry.at("extent"));
      const int bands = entry.at("bands").get<int>();
      Scene scene(date, extent, bands);
      decode_mask(entry.at("mask_rle"), scene.mutable_mask(), source);
      for (int b = 0; b < bands; ++b) {
        const auto path = root / "scenes" / band_file(date, b);
        const auto raw = io::read_file(path);
        auto band = scene.mutable_band(b);
        if (raw.size() != band.size()) {
          throw FormatError(path.string() + ": expected " + std::to_string(band.size()) + " bytes, found " +
                            std::to_string(raw.size()));
        }
        std::copy(raw.begin(), raw.end(), reinterpret_cast<char*>(band.data()));
        const auto mask = scene.mask();
        for (std::size_t i = 0; i < band.size(); ++i) {
          if (!mask[i] && band[i] != 0) {
            throw FormatError(path.string() + ": pixel " + std::to_string(i) +
                              " is masked invalid but holds a non-zero value");
          }
        }
      }
      world.scenes.push_back(std::move(scene));
    }
    const auto& labels = manifest.at("labels");
    for (const auto& week : labels.at("weeks")) {
      HotspotGrid grid;
      grid.week_start = parse_date(week.get<std::string>());
      grid.origin_row = labels.at("origin").at(0).get<std::int64_t>();
      grid.origin_col = labels.at("origin").at(1).get<std::int64_t>();
      grid.cell_size = labels.at("cell_size").get<int>();
      grid.rows = labels.at("rows").get<std::int64_t>();
      grid.cols = labels.at("cols").get<std::int64_t>();
      const auto path = root / "labels" / (week.get<std::string>() + ".raw");
      const auto raw = io::read_file(path);
      const std::size_t cells = static_cast<std::size_t>(grid.rows * grid.cols);
      if (raw.size() != cells * 4) throw FormatError(path.string() + ": size does not match the label grid");
      io::Cursor cur(raw, path.string());
      grid.confidences.resize(cells);
      for (float& v : grid.confidences) {
        v = cur.get<float>();
        if (!(v >= 0.0f && v <= 100.0f)) throw FormatError(path.string() + ": confidence outside [0, 100]");
      }
      world.grids.push_back(std::move(grid));
    }
    for (const auto& d : manifest.at("missing_dates")) world.missing_dates.push_back(parse_date(d.get<std::string>()));
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(source + ": " + e.what());
  }
  std::sort(world.scenes.begin(), world.scenes.end(),
            [](const Scene& a, const Scene& b) { return a.acquired_at() < b.acquired_at(); });
  return world;
}

}  // namespace agni
