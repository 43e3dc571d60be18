#include "agni/dataprep.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "agni/error.hpp"
#include "binary_io.hpp"

namespace agni {

double HistogramSample::tile_pixels() const {
  if (timesteps == 0 || bands == 0) return 0.0;
  return std::accumulate(hist.begin(), hist.begin() + bins, 0.0);
}

void PrepConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("prep." + field + ": " + why);
  };
  if (tile_size < 3) fail("tile_size", "must be >= 3");
  if (window_days < 0) fail("window_days", "must be >= 0");
  if (label_from_days >= label_to_days) fail("label_from_days", "must be < label_to_days");
  if (bins < 1 || bins > 256 || 256 % bins != 0) fail("bins", "must divide 256");
  if (start && end && *start > *end) fail("start", "must not be after end");
}

std::span<const Scene> get_ref_scenes(std::span<const Scene> store, Date t_s, Date t_e) {
  if (t_s > t_e) throw ContractError("get_ref_scenes: start date after end date");
  auto first = std::lower_bound(store.begin(), store.end(), t_s,
                                [](const Scene& s, Date d) { return s.acquired_at() < d; });
  auto last = std::upper_bound(first, store.end(), t_e,
                               [](Date d, const Scene& s) { return d < s.acquired_at(); });
  return {first, last};
}

std::vector<Scene> get_historical(std::span<const Scene> store, const Scene& ref, int span_days) {
  if (span_days < 0) throw ContractError("get_historical: span must be >= 0");
  std::vector<Scene> out;
  for (const Scene& s : get_ref_scenes(store, ref.acquired_at() - Days{span_days}, ref.acquired_at())) {
    out.push_back(s.extent() == ref.extent() ? s : crop_to(s, ref.extent()));
  }
  return out;
}

double get_label(std::span<const HotspotGrid> grids, const Extent& area, Date from, Date to) {
  if (from > to) throw ContractError("get_label: from after to");
  float best = 0.0f;
  for (const HotspotGrid& g : grids) {
    if (!(g.week_start < to && g.week_start + Days{7} > from)) continue;
    const std::int64_t cs = g.cell_size;
    // Cells [r0, r1) x [c0, c1) intersect the area.
    auto floor_div = [](std::int64_t a, std::int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
    const std::int64_t r0 = std::max<std::int64_t>(0, floor_div(area.row - g.origin_row, cs));
    const std::int64_t c0 = std::max<std::int64_t>(0, floor_div(area.col - g.origin_col, cs));
    const std::int64_t r1 = std::min(g.rows, floor_div(area.row_end() - g.origin_row - 1, cs) + 1);
    const std::int64_t c1 = std::min(g.cols, floor_div(area.col_end() - g.origin_col - 1, cs) + 1);
    for (std::int64_t r = r0; r < r1; ++r) {
      for (std::int64_t c = c0; c < c1; ++c) best = std::max(best, g.at(r, c));
    }
  }
  return best / 100.0;
}

std::vector<TileView> slice_tiles(std::span<const Scene> series, int tile_size) {
  if (tile_size < 1) throw ContractError("slice_tiles: tile size must be >= 1");
  std::vector<TileView> tiles;
  if (series.empty()) return tiles;
  const Extent& extent = series.front().extent();
  for (const Scene& s : series) {
    if (!(s.extent() == extent)) throw ContractError("slice_tiles: scenes do not share the reference extent");
  }
  const std::int64_t rows = extent.rows / tile_size;
  const std::int64_t cols = extent.cols / tile_size;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      tiles.push_back({{static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)},
                       series,
                       r * tile_size,
                       c * tile_size,
                       tile_size});
    }
  }
  return tiles;
}

bool is_all_zero(const TileView& tile) {
  for (const Scene& s : tile.series) {
    for (int b = 0; b < s.band_count(); ++b) {
      const auto band = s.band(b);
      for (std::int64_t r = tile.row; r < tile.row + tile.size; ++r) {
        const auto* p = band.data() + r * s.width() + tile.col;
        if (std::any_of(p, p + tile.size, [](std::uint8_t v) { return v != 0; })) return false;
      }
    }
  }
  return true;
}

std::vector<float> to_histogram(const TileView& tile, int bins) {
  if (bins < 1 || 256 % bins != 0) throw ContractError("to_histogram: bin count must divide 256");
  const int shift = std::countr_zero(static_cast<unsigned>(256 / bins));
  const int bands = tile.series.empty() ? 0 : tile.series.front().band_count();
  std::vector<float> out(tile.series.size() * bands * bins, 0.0f);
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(bins));
  for (std::size_t t = 0; t < tile.series.size(); ++t) {
    const Scene& s = tile.series[t];
    for (int b = 0; b < bands; ++b) {
      std::fill(counts.begin(), counts.end(), 0u);
      const auto band = s.band(b);
      for (std::int64_t r = tile.row; r < tile.row + tile.size; ++r) {
        const auto* p = band.data() + r * s.width() + tile.col;
        for (int c = 0; c < tile.size; ++c) ++counts[p[c] >> shift];
      }
      std::copy(counts.begin(), counts.end(), out.begin() + (t * bands + b) * bins);
    }
  }
  return out;
}

std::vector<HistogramSample> prepare_dataset(std::span<const Scene> store, std::span<const HotspotGrid> grids,
                                             const PrepConfig& cfg) {
  cfg.validate();
  std::vector<HistogramSample> samples;
  if (store.empty()) return samples;
  const Date t_s = cfg.start.value_or(store.front().acquired_at());
  const Date t_e = cfg.end.value_or(store.back().acquired_at());
  if (t_s > t_e) return samples;

  for (const Scene& ref : get_ref_scenes(store, t_s, t_e)) {
    const std::vector<Scene> history = get_historical(store, ref, cfg.window_days);
    const Date from = ref.acquired_at() + Days{cfg.label_from_days};
    const Date to = ref.acquired_at() + Days{cfg.label_to_days};
    std::vector<Date> dates;
    for (const Scene& s : history) dates.push_back(s.acquired_at());
    for (const TileView& tile : slice_tiles(history, cfg.tile_size)) {
      if (is_all_zero(tile)) continue;
      HistogramSample sample;
      sample.timesteps = static_cast<int>(history.size());
      sample.bands = ref.band_count();
      sample.bins = cfg.bins;
      sample.hist = to_histogram(tile, cfg.bins);
      sample.timestep_dates = dates;
      const Extent area{ref.extent().row + tile.row, ref.extent().col + tile.col, tile.size, tile.size};
      sample.label = static_cast<float>(get_label(grids, area, from, to));
      sample.tile = tile.id;
      sample.ref_date = ref.acquired_at();
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Dataset format

namespace {
constexpr char kMagic[4] = {'A', 'G', 'N', 'I'};
}

nlohmann::json prep_config_json(const PrepConfig& cfg) {
  nlohmann::json j;
  j["tile_size"] = cfg.tile_size;
  j["window_days"] = cfg.window_days;
  j["label_from_days"] = cfg.label_from_days;
  j["label_to_days"] = cfg.label_to_days;
  j["bins"] = cfg.bins;
  j["start"] = cfg.start ? nlohmann::json(format_date(*cfg.start)) : nlohmann::json(nullptr);
  j["end"] = cfg.end ? nlohmann::json(format_date(*cfg.end)) : nlohmann::json(nullptr);
  return j;
}

PrepConfig prep_config_from_json(const nlohmann::json& j) {
  PrepConfig cfg;
  cfg.tile_size = j.value("tile_size", cfg.tile_size);
  cfg.window_days = j.value("window_days", cfg.window_days);
  cfg.label_from_days = j.value("label_from_days", cfg.label_from_days);
  cfg.label_to_days = j.value("label_to_days", cfg.label_to_days);
  cfg.bins = j.value("bins", cfg.bins);
  if (j.contains("start") && !j["start"].is_null()) cfg.start = parse_date(j["start"].get<std::string>());
  if (j.contains("end") && !j["end"].is_null()) cfg.end = parse_date(j["end"].get<std::string>());
  return cfg;
}

std::vector<char> encode_sample(const HistogramSample& sample) {
  std::vector<char> out;
  out.reserve(40 + sample.hist.size() * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  io::put<std::uint32_t>(out, kDatasetVersion);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(sample.timesteps));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(sample.bands));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(sample.bins));
  for (float v : sample.hist) io::put(out, v);
  io::put(out, sample.label);
  io::put<std::uint32_t>(out, sample.tile.row);
  io::put<std::uint32_t>(out, sample.tile.col);
  io::put<std::int64_t>(out, to_epoch_days(sample.ref_date));
  return out;
}

void write_dataset(const std::filesystem::path& dir, std::span<const HistogramSample> samples,
                   const DatasetInfo& info) {
  std::filesystem::create_directories(dir);
  std::vector<char> bin;
  for (const HistogramSample& s : samples) {
    const auto rec = encode_sample(s);
    bin.insert(bin.end(), rec.begin(), rec.end());
  }
  io::write_file(dir / "samples.bin", bin);

  nlohmann::json manifest;
  manifest["version"] = kDatasetVersion;
  manifest["B"] = info.bands;
  manifest["N"] = info.bins;
  manifest["s"] = info.tile_size;
  manifest["sample_count"] = samples.size();
  manifest["seed"] = info.seed;
  manifest["prep_config"] = info.prep_config;
  io::write_text(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::vector<HistogramSample> read_dataset(const std::filesystem::path& dir, DatasetInfo* info) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    const auto raw = io::read_file(manifest_path);
    manifest = nlohmann::json::parse(raw.begin(), raw.end());
    if (manifest.at("version").get<std::uint32_t>() != kDatasetVersion) {
      throw FormatError(manifest_path.string() + ": unsupported dataset version");
    }
    if (info) {
      info->bands = manifest.at("B").get<int>();
      info->bins = manifest.at("N").get<int>();
      info->tile_size = manifest.at("s").get<int>();
      info->seed = manifest.at("seed").get<std::uint64_t>();
      info->prep_config = manifest.at("prep_config");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }

  const auto bin_path = dir / "samples.bin";
  const auto raw = io::read_file(bin_path);
  io::Cursor cur(raw, bin_path.string());
  std::vector<HistogramSample> samples;
  while (!cur.at_end()) {
    const std::size_t record_start = cur.offset();
    char magic[4];
    cur.bytes(magic, 4);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
      throw FormatError(bin_path.string() + ": bad record magic at byte " + std::to_string(record_start));
    }
    if (cur.get<std::uint32_t>() != kDatasetVersion) {
      throw FormatError(bin_path.string() + ": unsupported record version at byte " + std::to_string(record_start));
    }
    HistogramSample s;
    s.timesteps = static_cast<int>(cur.get<std::uint32_t>());
    s.bands = static_cast<int>(cur.get<std::uint32_t>());
    s.bins = static_cast<int>(cur.get<std::uint32_t>());
    const std::uint64_t n = static_cast<std::uint64_t>(s.timesteps) * s.bands * s.bins;
    if (s.timesteps < 1 || n > raw.size()) {
      throw FormatError(bin_path.string() + ": implausible record dimensions at byte " + std::to_string(record_start));
    }
    s.hist.resize(n);
    for (float& v : s.hist) v = cur.get<float>();
    s.label = cur.get<float>();
    if (!(s.label >= 0.0f && s.label <= 1.0f)) {
      throw FormatError(bin_path.string() + ": label outside [0, 1] at byte " + std::to_string(record_start));
    }
    s.tile.row = cur.get<std::uint32_t>();
    s.tile.col = cur.get<std::uint32_t>();
    s.ref_date = from_epoch_days(cur.get<std::int64_t>());
    samples.push_back(std::move(s));
  }
  const auto expected = manifest.value("sample_count", samples.size());
  if (expected != samples.size()) {
    throw FormatError(bin_path.string() + ": manifest lists " + std::to_string(expected) + " samples, found " +
                      std::to_string(samples.size()));
  }
  return samples;
}

}  // namespace agni
