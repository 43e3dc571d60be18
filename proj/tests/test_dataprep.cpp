#include <doctest.h>

#include <fstream>

#include "agni/error.hpp"
#include "dataprep_oracle.hpp"

using namespace agni;
using agni::testing::day;
using agni::testing::TempDir;

namespace {

std::vector<Scene> periodic_store(int count, int period, Extent extent = {0, 0, 8, 8}, int bands = 2) {
  std::mt19937_64 rng(3);
  std::vector<Scene> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(agni::testing::random_scene(rng, day(2020, 1, 1) + Days{period * i}, extent, bands, 0.0));
  }
  return out;
}

HotspotGrid grid(Date week, std::int64_t rows, std::int64_t cols, int cell, std::vector<float> conf) {
  HotspotGrid g;
  g.week_start = week;
  g.rows = rows;
  g.cols = cols;
  g.cell_size = cell;
  g.confidences = std::move(conf);
  return g;
}

TileView whole(std::span<const Scene> series) {
  return {{0, 0}, series, 0, 0, static_cast<int>(series.front().height())};
}

}  // namespace

TEST_CASE("get_ref_scenes selects an inclusive date range") {
  const auto store = periodic_store(5, 16);
  CHECK(get_ref_scenes(store, store.front().acquired_at(), store.back().acquired_at()).size() == 5);
  const auto one = get_ref_scenes(store, store[2].acquired_at(), store[2].acquired_at());
  REQUIRE(one.size() == 1);
  CHECK(one.front().acquired_at() == store[2].acquired_at());
  CHECK(get_ref_scenes(store, day(2030, 1, 1), day(2030, 2, 1)).empty());
}

TEST_CASE("get_ref_scenes over a generated world omits exactly the missing acquisitions") {
  WorldConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.latent_spacing_px = 32;
  cfg.missing_scene_probability = 0.3;
  cfg.zero_label_target = 0.99;
  const World world = generate_world(cfg);
  REQUIRE_FALSE(world.missing_dates.empty());
  const auto got = get_ref_scenes(world.scenes, cfg.start, cfg.start + Days{cfg.span_days});
  // Oracle: every period step in the span, minus the generator's log of missing dates.
  std::vector<Date> expected;
  for (int d = 0; d <= cfg.span_days; d += cfg.scene_period_days) {
    const Date date = cfg.start + Days{d};
    if (std::find(world.missing_dates.begin(), world.missing_dates.end(), date) == world.missing_dates.end()) {
      expected.push_back(date);
    }
  }
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].acquired_at() == expected[i]);
}

TEST_CASE("get_historical: window length and cropping") {
  const auto store = periodic_store(24, 16);
  CHECK(get_historical(store, store[10], 0).size() == 1);
  // 364 days back from the 24th acquisition at 16-day spacing: days 368 - 364 = 4 .. 368.
  const auto hist = get_historical(store, store[23], 364);
  CHECK(hist.size() == 23);
  CHECK(hist.front().acquired_at() == store[1].acquired_at());
  CHECK(hist.back().acquired_at() == store[23].acquired_at());

  std::vector<Scene> shifted = periodic_store(2, 16);
  std::mt19937_64 rng(9);
  shifted[0] = agni::testing::random_scene(rng, shifted[0].acquired_at(), {2, -1, 8, 8}, 2, 0.0);
  const auto cropped = get_historical(shifted, shifted[1], 30);
  REQUIRE(cropped.size() == 2);
  CHECK(cropped[0].extent() == shifted[1].extent());
  for (std::int64_t r = 0; r < 8; ++r) {
    for (std::int64_t c = 0; c < 8; ++c) {
      const std::int64_t sr = r - 2, sc = c + 1;
      const bool inside = sr >= 0 && sc < 8;
      CHECK(cropped[0].valid(r, c) == inside);
      CHECK(cropped[0].pixel(1, r, c) == (inside ? shifted[0].pixel(1, sr, sc) : 0));
    }
  }
}

TEST_CASE("get_label: max over intersecting cells and overlapping weeks") {
  const Date w0 = day(2020, 3, 2);
  std::vector<HotspotGrid> grids{
      grid(w0, 2, 2, 4, {0, 40, 0, 0}),
      grid(w0 + Days{7}, 2, 2, 4, {0, 0, 80, 0}),
      grid(w0 + Days{14}, 2, 2, 4, {100, 100, 100, 100}),
  };
  const Extent all{0, 0, 8, 8};
  CHECK(get_label(grids, all, w0, w0 + Days{14}) == doctest::Approx(0.80).epsilon(1e-7));
  CHECK(get_label(grids, all, w0, w0 + Days{7}) == doctest::Approx(0.40).epsilon(1e-7));
  // Area touching only the top-left cell.
  CHECK(get_label(grids, {0, 0, 4, 4}, w0, w0 + Days{14}) == 0.0);
  // Area straddling all four cells by one pixel each.
  CHECK(get_label(grids, {3, 3, 2, 2}, w0 + Days{7}, w0 + Days{8}) == doctest::Approx(0.80).epsilon(1e-7));
  CHECK(get_label(grids, all, w0 - Days{30}, w0 - Days{1}) == 0.0);
  CHECK(get_label(grids, {100, 100, 4, 4}, w0, w0 + Days{21}) == 0.0);
  // Half-open window: a week starting on `to` does not count.
  CHECK(get_label(grids, all, w0 + Days{8}, w0 + Days{14}) == doctest::Approx(0.80).epsilon(1e-7));
}

TEST_CASE("slice_tiles: floor division and timestep order") {
  const auto store128 = periodic_store(2, 16, {0, 0, 128, 128}, 1);
  CHECK(slice_tiles(store128, 64).size() == 4);
  const auto store100 = periodic_store(1, 16, {0, 0, 100, 100}, 1);
  const auto tiles = slice_tiles(store100, 64);
  REQUIRE(tiles.size() == 1);
  CHECK(tiles[0].series.size() == 1);
  const auto store_odd = periodic_store(3, 16, {0, 0, 30, 50}, 1);
  const auto odd = slice_tiles(store_odd, 7);
  CHECK(odd.size() == (30 / 7) * (50 / 7));
  CHECK(odd.back().id == TileId{30 / 7 - 1, 50 / 7 - 1});
  CHECK(odd.front().series.front().acquired_at() < odd.front().series.back().acquired_at());
  CHECK(slice_tiles(store_odd, 64).empty());
}

TEST_CASE("is_all_zero scans every timestep") {
  std::vector<Scene> series;
  for (int t = 0; t < 3; ++t) series.emplace_back(day(2020, 1, 1) + Days{t}, Extent{0, 0, 4, 4}, 2);
  CHECK(is_all_zero(whole(series)));
  series[2].set_pixel(3, 3, std::vector<std::uint8_t>{0, 1});
  CHECK_FALSE(is_all_zero(whole(series)));
  // Nonzero pixel outside the tile does not count.
  std::vector<Scene> big;
  big.emplace_back(day(2020, 1, 1), Extent{0, 0, 8, 8}, 1);
  big[0].set_pixel(7, 7, std::vector<std::uint8_t>{5});
  CHECK(is_all_zero({{0, 0}, big, 0, 0, 4}));
}

TEST_CASE("to_histogram: hand-binned example and edge values") {
  std::vector<Scene> series;
  series.emplace_back(day(2020, 1, 1), Extent{0, 0, 2, 2}, 1);
  series[0].set_pixel(0, 1, std::vector<std::uint8_t>{7});
  series[0].set_pixel(1, 0, std::vector<std::uint8_t>{8});
  series[0].set_pixel(1, 1, std::vector<std::uint8_t>{255});
  const auto h = to_histogram(whole(series));
  REQUIRE(h.size() == 32);
  std::vector<float> expected(32, 0.0f);
  expected[0] = 2;
  expected[1] = 1;
  expected[31] = 1;
  CHECK(h == expected);

  std::vector<Scene> blank;
  blank.emplace_back(day(2020, 1, 1), Extent{0, 0, 6, 6}, 3);
  const auto z = to_histogram(whole(blank));
  for (int b = 0; b < 3; ++b) {
    CHECK(z[b * 32] == 36.0f);
    for (int i = 1; i < 32; ++i) CHECK(z[b * 32 + i] == 0.0f);
  }
}

TEST_CASE("to_histogram: conservation and permutation invariance") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Scene> series;
    for (int t = 0; t < 3; ++t) {
      series.push_back(agni::testing::random_scene(rng, day(2020, 1, 1) + Days{t}, {0, 0, 9, 9}, 2, 0.3));
    }
    const auto h = to_histogram(whole(series));
    for (int tb = 0; tb < 6; ++tb) {
      double sum = 0;
      for (int i = 0; i < 32; ++i) sum += h[tb * 32 + i];
      CHECK(sum == 81.0);
    }
    // Reverse pixel order in every band.
    std::vector<Scene> flipped;
    for (const Scene& s : series) {
      Scene f(s.acquired_at(), s.extent(), s.band_count());
      for (std::int64_t r = 0; r < 9; ++r) {
        for (std::int64_t c = 0; c < 9; ++c) {
          if (!s.valid(r, c)) continue;
          f.set_pixel(8 - r, 8 - c, std::vector<std::uint8_t>{s.pixel(0, r, c), s.pixel(1, r, c)});
        }
      }
      flipped.push_back(std::move(f));
    }
    CHECK(to_histogram(whole(flipped)) == h);
  }
}

TEST_CASE("prepare_dataset: counting, masking and timestep examples") {
  SUBCASE("one unmasked 128x128 reference gives 4 samples") {
    const auto store = periodic_store(1, 16, {0, 0, 128, 128}, 1);
    PrepConfig cfg;
    CHECK(prepare_dataset(store, {}, cfg).size() == 4);
  }
  SUBCASE("fully masked tile is omitted") {
    auto store = periodic_store(2, 16, {0, 0, 128, 128}, 1);
    for (Scene& s : store) {
      for (std::int64_t r = 64; r < 128; ++r) {
        for (std::int64_t c = 0; c < 64; ++c) s.invalidate(r, c);
      }
    }
    PrepConfig cfg;
    const auto samples = prepare_dataset(store, {}, cfg);
    CHECK(samples.size() == 6);
    for (const auto& s : samples) CHECK_FALSE(s.tile == TileId{1, 0});
  }
  SUBCASE("two missing acquisitions in a 364-day window give T = 21") {
    auto store = periodic_store(24, 16, {0, 0, 8, 8}, 1);
    store.erase(store.begin() + 5);
    store.erase(store.begin() + 11);
    PrepConfig cfg;
    cfg.tile_size = 8;
    cfg.start = store.back().acquired_at();
    const auto samples = prepare_dataset(store, {}, cfg);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].timesteps == 21);
    CHECK(samples[0].timestep_dates.size() == 21);
  }
  SUBCASE("empty store") {
    CHECK(prepare_dataset({}, {}, PrepConfig{}).empty());
  }
}

TEST_CASE("prepare_dataset matches the brute-force oracle on random tiny worlds") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const auto w = agni::testing::random_tiny_world(rng);
    const auto got = prepare_dataset(w.scenes, w.grids, w.prep);
    const auto want = agni::testing::brute_force_dataset(w.scenes, w.grids, w.prep);
    CAPTURE(trial);
    REQUIRE(got.size() == want.size());
    CHECK(agni::testing::dataset_bytes(got) == agni::testing::dataset_bytes(want));
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].timestep_dates == want[i].timestep_dates);
    const double s2 = static_cast<double>(w.prep.tile_size) * w.prep.tile_size;
    for (const auto& s : got) {
      for (int t = 0; t < s.timesteps; ++t) {
        for (int b = 0; b < s.bands; ++b) {
          double sum = 0;
          for (int i = 0; i < s.bins; ++i) sum += s.at(t, b, i);
          CHECK(sum == s2);
        }
      }
      CHECK((s.label >= 0.0f && s.label <= 1.0f));
    }
  }
}

TEST_CASE("prepare_dataset: enlarging the date range keeps earlier samples") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    auto w = agni::testing::random_tiny_world(rng);
    w.prep.start.reset();
    w.prep.end.reset();
    const auto full = prepare_dataset(w.scenes, w.grids, w.prep);
    PrepConfig narrow = w.prep;
    narrow.start = narrow.end = w.scenes.back().acquired_at();
    for (const auto& s : prepare_dataset(w.scenes, w.grids, narrow)) {
      CHECK(std::find(full.begin(), full.end(), s) != full.end());
    }
  }
}

TEST_CASE("prep config validation") {
  PrepConfig cfg;
  cfg.tile_size = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PrepConfig{};
  cfg.label_from_days = 35;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PrepConfig{};
  cfg.bins = 33;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dataset files round-trip and reject corruption") {
  std::mt19937_64 rng(8);
  std::vector<HistogramSample> samples;
  while (samples.size() < 5) {
    auto w = agni::testing::random_tiny_world(rng);
    for (auto& s : prepare_dataset(w.scenes, w.grids, w.prep)) {
      s.timestep_dates.clear();
      samples.push_back(std::move(s));
    }
  }
  TempDir dir("dataset");
  DatasetInfo info;
  info.bands = 3;
  info.bins = 32;
  info.tile_size = 5;
  info.seed = 42;
  write_dataset(dir.path(), samples, info);
  DatasetInfo back_info;
  const auto back = read_dataset(dir.path(), &back_info);
  CHECK(back == samples);
  CHECK(back_info.seed == 42);

  const auto bin = dir / "samples.bin";
  SUBCASE("bad magic") {
    std::fstream f(bin, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  SUBCASE("bad version") {
    std::fstream f(bin, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(static_cast<char>(9));
  }
  SUBCASE("truncated") {
    std::filesystem::resize_file(bin, std::filesystem::file_size(bin) - 3);
  }
  CHECK_THROWS_AS(read_dataset(dir.path()), FormatError);
}

TEST_CASE("empty datasets round-trip") {
  TempDir dir("empty_dataset");
  write_dataset(dir.path(), {}, DatasetInfo{});
  CHECK(read_dataset(dir.path()).empty());
}
