#pragma once

// Independent per-pixel reimplementation of the dataset pass and a generator
// of small randomized worlds to compare it against.

#include <algorithm>
#include <random>
#include <vector>

#include "agni/dataprep.hpp"
#include "test_util.hpp"

namespace agni::testing {

struct TinyWorld {
  std::vector<Scene> scenes;
  std::vector<HotspotGrid> grids;
  PrepConfig prep;
};

// Up to 4 scenes no larger than 32x32 with jittered extents, random masks,
// sparse all-zero regions and coarse random label grids.
inline TinyWorld random_tiny_world(std::mt19937_64& rng) {
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  TinyWorld w;
  const int bands = uniform(1, 3);
  const std::int64_t rows = uniform(3, 32);
  const std::int64_t cols = uniform(3, 32);
  const int scenes = uniform(1, 4);
  Date date = day(2019, 1, 1) + Days{uniform(0, 20)};
  for (int i = 0; i < scenes; ++i) {
    const Extent extent{uniform(-3, 3), uniform(-3, 3), rows, cols};
    Scene s = random_scene(rng, date, extent, bands, std::uniform_real_distribution<double>(0.0, 0.6)(rng));
    // Blank a random rectangle so some tiles end up all zero.
    if (uniform(0, 1)) {
      const std::int64_t r0 = uniform(0, static_cast<int>(rows) - 1), c0 = uniform(0, static_cast<int>(cols) - 1);
      for (std::int64_t r = r0; r < rows; ++r) {
        for (std::int64_t c = c0; c < cols; ++c) s.invalidate(r, c);
      }
    }
    w.scenes.push_back(std::move(s));
    date = date + Days{uniform(1, 20)};
  }
  const Date first_week = day(2019, 1, 1);
  const int weeks = uniform(0, 14);
  for (int k = 0; k < weeks; ++k) {
    HotspotGrid g;
    g.week_start = first_week + Days{7 * k};
    g.cell_size = uniform(1, 8);
    g.origin_row = uniform(-4, 4);
    g.origin_col = uniform(-4, 4);
    g.rows = uniform(1, 40 / g.cell_size + 1);
    g.cols = uniform(1, 40 / g.cell_size + 1);
    for (std::int64_t i = 0; i < g.rows * g.cols; ++i) {
      g.confidences.push_back(uniform(0, 3) == 0 ? static_cast<float>(uniform(0, 100)) : 0.0f);
    }
    w.grids.push_back(std::move(g));
  }
  w.prep.tile_size = uniform(3, 12);
  w.prep.window_days = uniform(0, 40);
  w.prep.label_from_days = uniform(0, 20);
  w.prep.label_to_days = w.prep.label_from_days + uniform(1, 14);
  const int bins_choice[] = {1, 2, 8, 32, 256};
  w.prep.bins = bins_choice[uniform(0, 4)];
  if (uniform(0, 2) == 0) w.prep.start = w.scenes.front().acquired_at() + Days{uniform(0, 10)};
  if (uniform(0, 2) == 0) w.prep.end = w.scenes.back().acquired_at() - Days{uniform(0, 10)};
  if (w.prep.start && w.prep.end && *w.prep.start > *w.prep.end) w.prep.end = w.prep.start;
  return w;
}

inline std::vector<HistogramSample> brute_force_dataset(const std::vector<Scene>& store,
                                                        const std::vector<HotspotGrid>& grids, const PrepConfig& cfg) {
  std::vector<HistogramSample> out;
  if (store.empty()) return out;
  const Date t_s = cfg.start.value_or(store.front().acquired_at());
  const Date t_e = cfg.end.value_or(store.back().acquired_at());
  const int width = 256 / cfg.bins;
  for (const Scene& ref : store) {
    const Date d = ref.acquired_at();
    if (d < t_s || d > t_e) continue;
    std::vector<const Scene*> history;
    for (const Scene& s : store) {
      if (s.acquired_at() >= d - Days{cfg.window_days} && s.acquired_at() <= d) history.push_back(&s);
    }
    const std::int64_t s_px = cfg.tile_size;
    const int bands = ref.band_count();
    for (std::int64_t tr = 0; (tr + 1) * s_px <= ref.height(); ++tr) {
      for (std::int64_t tc = 0; (tc + 1) * s_px <= ref.width(); ++tc) {
        const std::int64_t row0 = ref.extent().row + tr * s_px;
        const std::int64_t col0 = ref.extent().col + tc * s_px;
        HistogramSample sample;
        sample.timesteps = static_cast<int>(history.size());
        sample.bands = bands;
        sample.bins = cfg.bins;
        sample.hist.assign(history.size() * bands * cfg.bins, 0.0f);
        bool any = false;
        for (std::size_t t = 0; t < history.size(); ++t) {
          for (int b = 0; b < bands; ++b) {
            for (std::int64_t r = 0; r < s_px; ++r) {
              for (std::int64_t c = 0; c < s_px; ++c) {
                const Scene& s = *history[t];
                const std::int64_t lr = row0 + r - s.extent().row, lc = col0 + c - s.extent().col;
                const bool inside = lr >= 0 && lc >= 0 && lr < s.height() && lc < s.width();
                const std::uint8_t v = inside && s.valid(lr, lc) ? s.pixel(b, lr, lc) : 0;
                any = any || v != 0;
                sample.hist[(t * bands + b) * cfg.bins + v / width] += 1.0f;
              }
            }
          }
          sample.timestep_dates.push_back(history[t]->acquired_at());
        }
        if (!any) continue;
        const Date from = d + Days{cfg.label_from_days};
        const Date to = d + Days{cfg.label_to_days};
        float best = 0.0f;
        for (const HotspotGrid& g : grids) {
          if (g.week_start + Days{7} <= from || g.week_start >= to) continue;
          for (std::int64_t r = 0; r < g.rows; ++r) {
            for (std::int64_t c = 0; c < g.cols; ++c) {
              const std::int64_t cr = g.origin_row + r * g.cell_size;
              const std::int64_t cc = g.origin_col + c * g.cell_size;
              const bool hit = cr < row0 + s_px && cr + g.cell_size > row0 && cc < col0 + s_px && cc + g.cell_size > col0;
              if (hit) best = std::max(best, g.at(r, c));
            }
          }
        }
        sample.label = static_cast<float>(best / 100.0);
        sample.tile = {static_cast<std::uint32_t>(tr), static_cast<std::uint32_t>(tc)};
        sample.ref_date = d;
        out.push_back(std::move(sample));
      }
    }
  }
  return out;
}

inline std::vector<char> dataset_bytes(const std::vector<HistogramSample>& samples) {
  std::vector<char> bytes;
  for (const auto& s : samples) {
    const auto record = encode_sample(s);
    bytes.insert(bytes.end(), record.begin(), record.end());
  }
  return bytes;
}

}  // namespace agni::testing
