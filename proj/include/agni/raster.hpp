#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "agni/date.hpp"

namespace agni {

// Axis-aligned rectangle in world-grid pixel coordinates.
struct Extent {
  std::int64_t row = 0;
  std::int64_t col = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;

  std::int64_t row_end() const { return row + rows; }
  std::int64_t col_end() const { return col + cols; }
  bool empty() const { return rows <= 0 || cols <= 0; }
  Extent intersect(const Extent& other) const;
  bool operator==(const Extent&) const = default;
};

// One multi-band acquisition. Pixel storage is band-major, row-major.
// Invalid pixels always hold 0 in every band.
class Scene {
 public:
  Scene() = default;
  // All-invalid, zero-filled scene.
  Scene(Date acquired_at, Extent extent, int band_count);

  Date acquired_at() const { return acquired_at_; }
  const Extent& extent() const { return extent_; }
  int band_count() const { return band_count_; }
  std::int64_t height() const { return extent_.rows; }
  std::int64_t width() const { return extent_.cols; }
  std::int64_t pixel_count() const { return extent_.rows * extent_.cols; }

  std::uint8_t pixel(int band, std::int64_t r, std::int64_t c) const {
    return pixels_[index(band, r, c)];
  }
  bool valid(std::int64_t r, std::int64_t c) const { return mask_[r * extent_.cols + c] != 0; }

  std::span<const std::uint8_t> band(int b) const {
    return {pixels_.data() + static_cast<std::size_t>(b) * pixel_count(),
            static_cast<std::size_t>(pixel_count())};
  }
  std::span<const std::uint8_t> mask() const { return mask_; }

  // Marks the pixel valid and stores one value per band.
  void set_pixel(std::int64_t r, std::int64_t c, std::span<const std::uint8_t> values);
  // Marks the pixel invalid and zero-fills every band.
  void invalidate(std::int64_t r, std::int64_t c);

  // Raw mutable access for bulk writers (generator, store reader). Callers
  // must restore the zero-fill law; check_invariants() verifies it.
  std::span<std::uint8_t> mutable_band(int b) {
    return {pixels_.data() + static_cast<std::size_t>(b) * pixel_count(),
            static_cast<std::size_t>(pixel_count())};
  }
  std::span<std::uint8_t> mutable_mask() { return mask_; }

  // Throws ContractError if any invalid pixel carries a non-zero value.
  void check_invariants() const;

  bool operator==(const Scene&) const = default;

 private:
  std::size_t index(int band, std::int64_t r, std::int64_t c) const {
    return static_cast<std::size_t>(band) * pixel_count() + r * extent_.cols + c;
  }

  Date acquired_at_{};
  Extent extent_{};
  int band_count_ = 0;
  std::vector<std::uint8_t> pixels_;
  std::vector<std::uint8_t> mask_;
};

// Weekly hotspot confidences (0..100) on a grid of cell_size x cell_size
// pixel cells, anchored at a world-grid pixel origin.
struct HotspotGrid {
  Date week_start{};
  std::int64_t origin_row = 0;
  std::int64_t origin_col = 0;
  int cell_size = 1;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<float> confidences;

  float at(std::int64_t r, std::int64_t c) const { return confidences[r * cols + c]; }
  bool operator==(const HotspotGrid&) const = default;
};

struct WorldConfig {
  // Scene footprint in pixels.
  std::int64_t height = 1024;
  std::int64_t width = 1024;
  int bands = 8;
  int scene_period_days = 16;
  int span_days = 364;
  Date start = Date{std::chrono::year{2018} / std::chrono::January / 1};
  // Imperfect orbit: each acquisition footprint is shifted by up to this many pixels.
  int orbit_jitter_px = 4;
  double missing_scene_probability = 0.1;
  double slc_fraction = 0.22;
  int slc_period_rows = 16;
  // Label grid cell edge, in scene pixels.
  int cell_size = 8;

  // Latent risk: weekly AR(1) anomaly on a coarse lattice plus seasonal forcing.
  int latent_spacing_px = 64;
  double risk_persistence = 0.98;
  double seasonal_amplitude = 1.6;
  int seasonal_peak_doy = 285;
  double seasonal_sharpness = 2.0;
  // Ignition probability grows as exp(risk_gain * risk), capped per cell-week.
  double risk_gain = 3.0;
  double max_ignition_probability = 0.6;
  // Fraction of week-cells with zero confidence the ignition model is calibrated to.
  double zero_label_target = 0.99988;
  // Pixel noise amplitude (triangular, in pixel-value units).
  double pixel_noise = 6.0;
  // Band whose value responds most strongly to the latent risk.
  int dryness_band = 7;
  // The dryness band responds to dryness_gain * (exp(c * risk) - 1) / c,
  // c = dryness_convexity; c = 0 makes it linear in risk.
  double dryness_convexity = 1.5;
  double dryness_gain = 1.0;

  std::uint64_t seed = 1;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct World {
  std::vector<Scene> scenes;
  std::vector<HotspotGrid> grids;
  std::vector<Date> missing_dates;
};

World generate_world(const WorldConfig& cfg);

struct SlcGeometry {
  double fraction = 0.22;
  int period_rows = 16;
};

// Masks periodic wedge-shaped stripes: gap height grows linearly from zero at
// the centre column to its maximum at the scene edges.
Scene apply_slc_mask(const Scene& scene, int phase, const SlcGeometry& geometry = {});

// Re-grids a scene onto `extent`; uncovered pixels are invalid and zero.
Scene crop_to(const Scene& scene, const Extent& extent);

// Scene store: scenes/<date>.band<k>.raw (u8, k is 1-based), scenes/manifest.json,
// labels/<week_start>.raw (little-endian f32).
void write_scene_store(const std::filesystem::path& root, const World& world);
World read_scene_store(const std::filesystem::path& root);

}  // namespace agni
