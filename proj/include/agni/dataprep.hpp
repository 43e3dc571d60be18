#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agni/date.hpp"
#include "agni/raster.hpp"

namespace agni {

struct TileId {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  bool operator==(const TileId&) const = default;
};

// Histogram time series for one tile, the network input.
struct HistogramSample {
  int timesteps = 0;
  int bands = 0;
  int bins = 0;
  // timesteps x bands x bins counts, row-major.
  std::vector<float> hist;
  // Acquisition date per timestep, ascending. Not persisted by the dataset format.
  std::vector<Date> timestep_dates;
  float label = 0.0f;
  TileId tile;
  Date ref_date{};

  float at(int t, int b, int i) const { return hist[(static_cast<std::size_t>(t) * bands + b) * bins + i]; }
  // Pixels per tile, recovered from the counts of the first band.
  double tile_pixels() const;
  bool operator==(const HistogramSample&) const = default;
};

struct PrepConfig {
  int tile_size = 64;
  int window_days = 364;
  // Label window is [ref + label_from_days, ref + label_to_days).
  int label_from_days = 28;
  int label_to_days = 35;
  int bins = 32;
  // Reference-date range; unset ends cover the whole store.
  std::optional<Date> start;
  std::optional<Date> end;

  void validate() const;
};

// A tile_size x tile_size window into every scene of a series. The scenes
// must outlive the view.
struct TileView {
  TileId id;
  std::span<const Scene> series;
  std::int64_t row = 0;  // pixel offset inside each scene
  std::int64_t col = 0;
  int size = 0;
};

// Scenes with acquired_at in [t_s, t_e]. `store` must be sorted by date.
std::span<const Scene> get_ref_scenes(std::span<const Scene> store, Date t_s, Date t_e);

// Scenes in [ref - span, ref], each cropped to ref's extent, ascending.
std::vector<Scene> get_historical(std::span<const Scene> store, const Scene& ref, int span_days);

// Max confidence / 100 over grid cells intersecting `area` in weeks
// overlapping [from, to); 0 when nothing overlaps.
double get_label(std::span<const HotspotGrid> grids, const Extent& area, Date from, Date to);

std::vector<TileView> slice_tiles(std::span<const Scene> series, int tile_size);

bool is_all_zero(const TileView& tile);

// timesteps x bands x bins counts; bin i holds values in [i*w, i*w + w - 1]
// with w = 256 / bins.
std::vector<float> to_histogram(const TileView& tile, int bins = 32);

// Full dataPrep pass, ordered by reference date then tile row-major.
std::vector<HistogramSample> prepare_dataset(std::span<const Scene> store, std::span<const HotspotGrid> grids,
                                             const PrepConfig& cfg);

// Dataset directory: manifest.json + samples.bin.
struct DatasetInfo {
  int bands = 0;
  int bins = 0;
  int tile_size = 0;
  std::uint64_t seed = 0;
  nlohmann::json prep_config;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

nlohmann::json prep_config_json(const PrepConfig& cfg);
PrepConfig prep_config_from_json(const nlohmann::json& j);

void write_dataset(const std::filesystem::path& dir, std::span<const HistogramSample> samples,
                   const DatasetInfo& info);
std::vector<HistogramSample> read_dataset(const std::filesystem::path& dir, DatasetInfo* info = nullptr);

// Serialized record bytes for one sample.
std::vector<char> encode_sample(const HistogramSample& sample);

}  // namespace agni
