// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agni/eval.hpp"
#include "agni/run_config.hpp"
#include "auc_oracle.hpp"
#include "dataprep_oracle.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace agni;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class F>
double timed(F&& f) {
  const auto t0 = Clock::now();
  f();
  return seconds_since(t0);
}

struct Outcome {
  bool ok = true;
  std::string detail;
  double seconds = 0.0;
};

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// 1. Loss formula

Outcome loss_suite() {
  Outcome o;
  auto rel = [](double got, double want) { return want == 0.0 ? std::abs(got) : std::abs(got - want) / std::abs(want); };
  struct Point {
    double yt, yp, k, want;
  };
  const Point points[] = {{0.4, 0.4, 30, 0.0}, {0.6, 0.3, 30, 3.0}, {0.0, 0.4, 30, 0.4}, {1.0, 0.0, 10, 1e5}};
  double worst = 0;
  for (const auto& p : points) {
    const double e = rel(custom_loss(p.yt, p.yp, p.k), p.want);
    worst = std::max(worst, e);
    if (!(e <= 1e-12)) o.ok = false;
  }

  // Over-prediction costs exactly the gap; under-prediction costs at least the
  // gap and grows as the prediction falls further below the truth.
  std::size_t violations = 0;
  for (double k : {10.0, 30.0, 50.0, 100.0}) {
    for (int i = 0; i < 200; ++i) {
      const double yt = i / 199.0;
      double prev = 0;
      for (int j = 0; j < 200; ++j) {
        const double yp = j / 199.0;
        const double l = custom_loss(yt, yp, k);
        const double gap = yt - yp;
        bool good = std::isfinite(l) && l >= std::abs(gap);
        if (yp >= yt) good = good && l == -gap;
        if (gap > 0) good = good && l > gap;
        if (gap > 0 && yt + gap <= 1) good = good && l > custom_loss(yt, yt + gap, k);
        if (j > 0 && yp <= yt) good = good && l <= prev;
        if (j > 0 && (j - 1) / 199.0 >= yt) good = good && l >= prev;
        violations += !good;
        prev = l;
      }
    }
  }
  if (violations) o.ok = false;
  o.detail = "worst point error " + fmt("%.1e", worst) + ", grid violations " + std::to_string(violations);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Gradients

Outcome gradient_suite() {
  Outcome o;
  double worst = 0;
  std::string worst_name;
  std::size_t cases = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : agni::testing::gradient_cases(seed)) {
      const double e = agni::testing::max_gradient_error(c.build, c.inputs);
      ++cases;
      if (e > worst || std::isnan(e)) {
        worst = e;
        worst_name = c.name;
      }
    }
  }
  for (auto bridge : {Bridge::kFlatten, Bridge::kMeanPool}) {
    const auto c = agni::testing::tiny_network_case(4, bridge);
    const double e = agni::testing::max_gradient_error(c.build, c.inputs);
    ++cases;
    if (e > worst || std::isnan(e)) {
      worst = e;
      worst_name = bridge == Bridge::kFlatten ? "network (flatten)" : "network (mean_pool)";
    }
  }
  o.ok = worst < 1e-4;
  o.detail = std::to_string(cases) + " cases, max relative error " + fmt("%.2e", worst) + " (" + worst_name + ")";
  return o;
}

// ---------------------------------------------------------------------------
// 3. Dataprep oracle

Outcome dataprep_suite() {
  Outcome o;
  std::mt19937_64 rng(20240611);
  std::size_t mismatched = 0, samples = 0, conservation = 0;
  const int worlds = 60;
  for (int trial = 0; trial < worlds; ++trial) {
    const auto w = agni::testing::random_tiny_world(rng);
    const auto got = prepare_dataset(w.scenes, w.grids, w.prep);
    const auto want = agni::testing::brute_force_dataset(w.scenes, w.grids, w.prep);
    if (agni::testing::dataset_bytes(got) != agni::testing::dataset_bytes(want)) ++mismatched;
    const double s2 = static_cast<double>(w.prep.tile_size) * w.prep.tile_size;
    for (const auto& s : got) {
      ++samples;
      for (int t = 0; t < s.timesteps; ++t) {
        for (int b = 0; b < s.bands; ++b) {
          double sum = 0;
          for (int i = 0; i < s.bins; ++i) sum += s.at(t, b, i);
          conservation += sum != s2;
        }
      }
    }
  }
  o.ok = mismatched == 0 && conservation == 0 && samples > 0;
  o.detail = std::to_string(worlds) + " worlds, " + std::to_string(samples) + " samples, " +
             std::to_string(mismatched) + " mismatched, " + std::to_string(conservation) + " conservation failures";
  return o;
}

// ---------------------------------------------------------------------------
// 4. AUC oracle

Outcome auc_suite() {
  Outcome o;
  const bool fixed = roc_curve(std::vector<double>{0.9, 0.8, 0.2, 0.1}, {true, true, false, false}).auc == 1.0 &&
                     roc_curve(std::vector<double>{0.9, 0.2, 0.8, 0.1}, {true, true, false, false}).auc == 0.75 &&
                     roc_curve(std::vector<double>{0.4, 0.4, 0.4, 0.4}, {true, false, true, false}).auc == 0.5;
  std::mt19937_64 rng(4);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto set = agni::testing::random_scored_set(rng, i);
    const double d = std::abs(roc_curve(set.scores, set.truths).auc - agni::testing::mann_whitney_auc(set.scores, set.truths));
    worst = std::max(worst, std::isnan(d) ? INFINITY : d);
  }
  o.ok = fixed && worst <= 1e-9;
  o.detail = std::string("fixed cases ") + (fixed ? "exact" : "WRONG") + ", 1000 sets, max |AUC - MW| " + fmt("%.1e", worst);
  return o;
}

// ---------------------------------------------------------------------------
// 5. Skew handling

Outcome skew_suite() {
  Outcome o;
  // Resample counts on label sets of varied size and positive rate.
  std::mt19937_64 rng(5);
  std::size_t bad_counts = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(10, 2000)(rng);
    const double rate = std::uniform_real_distribution<double>(0.001, 0.2)(rng);
    std::vector<HistogramSample> set(static_cast<std::size_t>(n));
    std::size_t positives = 0;
    for (auto& s : set) {
      s.label = std::uniform_real_distribution<double>(0, 1)(rng) < rate ? 0.5f : 0.0f;
      positives += s.label > 0;
    }
    if (positives == 0) {
      set.front().label = 0.5f;
      positives = 1;
    }
    if (3 * positives > set.size() - positives) continue;  // not enough zeros to reach 3:1
    const auto out = resample(set, 3.0, rng);
    std::size_t p = 0, z = 0;
    for (const auto& s : out) (s.label > 0 ? p : z) += 1;
    const auto want = static_cast<long>(3 * positives);
    bad_counts += p != positives || std::labs(static_cast<long>(z) - want) > 1;
  }

  // The default world before any resampling.
  const World world = generate_world(WorldConfig{});
  const auto samples = prepare_dataset(world.scenes, world.grids, PrepConfig{});
  std::size_t zeros = 0;
  for (const auto& s : samples) zeros += s.label == 0.0f;
  const double zero_fraction = static_cast<double>(zeros) / static_cast<double>(samples.size());
  std::mt19937_64 rs(derive_seed(1, "ablation/resample"));
  const auto balanced = resample(samples, 3.0, rs);
  const std::size_t positives = samples.size() - zeros;
  const std::size_t kept_zeros = balanced.size() - positives;
  bad_counts += std::labs(static_cast<long>(kept_zeros) - static_cast<long>(3 * positives)) > 1;

  o.ok = bad_counts == 0 && zero_fraction >= 0.99;
  o.detail = "resample count errors " + std::to_string(bad_counts) + "; default world " + std::to_string(samples.size()) +
             " samples, zero labels " + fmt("%.4f", 100 * zero_fraction) + "%, resampled " +
             std::to_string(kept_zeros) + ":" + std::to_string(positives);
  return o;
}

// ---------------------------------------------------------------------------
// 6-8. Experiments on the learnable world

constexpr int kSeeds = 3;

struct Variant {
  Arch arch;
  LossKind loss;
  std::string name;
};

const Variant kVariants[] = {{Arch::kAgni, LossKind::kCustom, "agni+custom"},
                             {Arch::kAgni, LossKind::kMse, "agni+mse"},
                             {Arch::kLr, LossKind::kCustom, "lr+custom"},
                             {Arch::kLr, LossKind::kMse, "lr+mse"}};

struct Cell {
  std::vector<double> month_auc;
  double seconds = 0.0;
};

// Everything criteria 6-8 share, computed once. Seeding matches
// run_ablation, so each seed's columns equal `agni ablate --seed s`.
struct Experiments {
  RunConfig cfg;
  double world_seconds = 0.0;
  double prep_seconds = 0.0;       // 364-day window
  double short_prep_seconds = 0.0; // 91-day window
  std::vector<std::string> months;
  Cell cells[4][kSeeds];
  Cell short_window[kSeeds];
  std::string error;
};

Cell train_and_score(const Split& split, Arch arch, LossKind loss, const ExperimentConfig& ec, std::uint64_t seed) {
  Cell c;
  c.seconds = timed([&] {
    std::mt19937_64 rng(derive_seed(seed, "ablation/resample"));
    const auto train_set = resample(split.train, ec.train.ratio, rng);
    TrainConfig tc = ec.train;
    tc.loss = loss;
    tc.seed = derive_seed(seed, "ablation/train");
    const TrainResult trained = train(train_set, arch, tc);
    for (const auto& test : split.test) c.month_auc.push_back(evaluate(trained.model, test).auc);
  });
  return c;
}

void log_cell(const std::string& name, std::uint64_t seed, const Cell& c) {
  std::printf("  %-16s seed %llu (%5.1fs):", name.c_str(), static_cast<unsigned long long>(seed), c.seconds);
  for (double a : c.month_auc) std::printf(" %.4f", a);
  std::printf("  mean %.4f\n", mean(c.month_auc));
  std::fflush(stdout);
}

Split prepare(const World& world, const PrepConfig& prep, const ExperimentConfig& ec, std::vector<EvalMonth>& months) {
  auto samples = prepare_dataset(world.scenes, world.grids, prep);
  months = evaluation_months(world.scenes, world.grids, prep, ec.months, ec.month_days);
  return split_by_months(std::move(samples), months, prep, label_coverage_end(world.grids));
}

Experiments run_experiments() {
  Experiments x;
  x.cfg = load_run_config(fs::path(AGNI_SOURCE_DIR) / "configs/experiment.json");
  ExperimentConfig ec = x.cfg.experiment();
  std::optional<World> world;
  x.world_seconds = timed([&] { world = generate_world(x.cfg.resolved_world()); });
  std::printf("  experiment world: %lldx%lld, %zu scenes (%.1fs)\n", static_cast<long long>(x.cfg.world.height),
              static_cast<long long>(x.cfg.world.width), world->scenes.size(), x.world_seconds);

  {
    std::vector<EvalMonth> months;
    std::optional<Split> split;
    x.prep_seconds = timed([&] { split = prepare(*world, ec.prep, ec, months); });
    for (const auto& m : months) x.months.push_back(m.label());
    std::printf("  %d-day window: %zu training samples (%.1fs)\n", ec.prep.window_days, split->train.size(),
                x.prep_seconds);
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
      for (std::size_t v = 0; v < 4; ++v) {
        x.cells[v][seed - 1] = train_and_score(*split, kVariants[v].arch, kVariants[v].loss, ec, seed);
        log_cell(kVariants[v].name, seed, x.cells[v][seed - 1]);
      }
    }
  }

  PrepConfig short_prep = ec.prep;
  short_prep.window_days = 91;
  std::vector<EvalMonth> months;
  std::optional<Split> split;
  x.short_prep_seconds = timed([&] { split = prepare(*world, short_prep, ec, months); });
  std::printf("  91-day window: %zu training samples (%.1fs)\n", split->train.size(), x.short_prep_seconds);
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    x.short_window[seed - 1] = train_and_score(*split, Arch::kAgni, LossKind::kCustom, ec, seed);
    log_cell("agni+custom 91d", seed, x.short_window[seed - 1]);
  }
  return x;
}

const Experiments& experiments() {
  static const Experiments x = [] {
    try {
      return run_experiments();
    } catch (const std::exception& e) {
      Experiments failed;
      failed.error = e.what();
      return failed;
    }
  }();
  return x;
}

double month_median(const Cell (&cells)[kSeeds], std::size_t m) {
  std::vector<double> v;
  for (const auto& c : cells) v.push_back(c.month_auc.at(m));
  return median(v);
}

// Per seed, the mean AUC over the evaluation months; then the median over seeds.
double seed_median(const Cell (&cells)[kSeeds]) {
  std::vector<double> v;
  for (const auto& c : cells) v.push_back(mean(c.month_auc));
  return median(v);
}

double seconds_of(const Cell (&cells)[kSeeds]) {
  double s = 0;
  for (const auto& c : cells) s += c.seconds;
  return s;
}

Outcome agni_beats_baseline() {
  Outcome o;
  const Experiments& x = experiments();
  if (!x.error.empty()) return {false, x.error, 0.0};
  int good = 0;
  for (std::size_t m = 0; m < x.months.size(); ++m) {
    const double agni = month_median(x.cells[0], m);
    const double lr = month_median(x.cells[3], m);
    const bool pass = agni >= 0.80 && agni - lr >= 0.05;
    good += pass;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += x.months[m] + " agni " + fmt("%.3f", agni) + " lr+mse " + fmt("%.3f", lr) + (pass ? "" : " x");
  }
  o.ok = good >= 3;
  o.detail = std::to_string(good) + "/4 months: " + o.detail;
  o.seconds = x.world_seconds + x.prep_seconds + seconds_of(x.cells[0]) + seconds_of(x.cells[3]);
  return o;
}

Outcome custom_beats_mse() {
  Outcome o;
  const Experiments& x = experiments();
  if (!x.error.empty()) return {false, x.error, 0.0};
  double med[4];
  for (std::size_t v = 0; v < 4; ++v) med[v] = seed_median(x.cells[v]);
  o.ok = med[0] > med[1] && med[2] > med[3];
  for (std::size_t v = 0; v < 4; ++v) o.detail += (v ? ", " : "") + kVariants[v].name + " " + fmt("%.4f", med[v]);
  o.seconds = x.world_seconds + x.prep_seconds;
  for (const auto& cells : x.cells) o.seconds += seconds_of(cells);
  return o;
}

Outcome short_window_holds() {
  Outcome o;
  const Experiments& x = experiments();
  if (!x.error.empty()) return {false, x.error, 0.0};
  const double full = seed_median(x.cells[0]);
  const double short_window = seed_median(x.short_window);
  o.ok = std::abs(short_window - full) <= 0.05;
  o.detail = "91d " + fmt("%.4f", short_window) + " vs 364d " + fmt("%.4f", full);
  o.seconds = x.world_seconds + x.prep_seconds + x.short_prep_seconds + seconds_of(x.cells[0]) +
              seconds_of(x.short_window);
  return o;
}

// ---------------------------------------------------------------------------
// 9. Determinism through the command-line tool

int run_agni(const std::string& args) {
  const std::string cmd = std::string(AGNI_BINARY) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::pair<std::string, std::string>> tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), agni::testing::slurp(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism() {
  Outcome o;
  agni::testing::TempDir dir("acceptance_determinism");
  const fs::path run = dir / "run";
  const nlohmann::json j = {
      {"seed", 11},
      {"out", run.string()},
      {"world", {{"height", 384}, {"width", 384}, {"zero_label_target", 0.995}}},
      {"prep", {{"tile_size", 32}, {"window_days", 182}}},
      {"train", {{"epochs", 2}, {"agni", {{"conv_channels", 4}, {"hidden", 8}, {"dense1", 16}, {"dense2", 8}}}}},
      {"eval", {{"months", 2}, {"month_days", 56}}},
  };
  const fs::path config = dir / "config.json";
  std::ofstream(config) << j.dump(2);
  const std::string arg = " --config '" + config.string() + "'";

  std::vector<std::pair<std::string, std::string>> first;
  for (int attempt = 0; attempt < 2; ++attempt) {
    fs::remove_all(run);
    for (const char* stage : {"synth", "prep", "train", "eval"}) {
      const int code = run_agni(std::string(stage) + arg);
      if (code != 0) return {false, std::string(stage) + " exited with " + std::to_string(code), 0.0};
    }
    auto files = tree(run);
    if (attempt == 0) {
      first = std::move(files);
      continue;
    }
    std::size_t differing = 0, compared = 0;
    for (std::size_t i = 0; i < std::min(first.size(), files.size()); ++i) {
      ++compared;
      differing += first[i] != files[i];
    }
    const bool weights = fs::exists(run / "model/weights.json");
    const bool report = fs::exists(run / "eval/report.csv");
    o.ok = weights && report && differing == 0 && first.size() == files.size();
    o.detail = std::to_string(compared) + " files compared (weights, reports, store, dataset), " +
               std::to_string(differing) + " differ";
  }
  return o;
}

struct Criterion {
  int id;
  const char* title;
  double limit_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "loss formula", 1, loss_suite},
      {2, "gradients", 30, gradient_suite},
      {3, "dataprep oracle", 60, dataprep_suite},
      {4, "AUC oracle", 30, auc_suite},
      {5, "skew handling", 0, skew_suite},
      {6, "Agni vs LR+MSE per month", 600, agni_beats_baseline},
      {7, "custom loss vs MSE", 900, custom_beats_mse},
      {8, "91-day window vs 364-day window", 900, short_window_holds},
      {9, "pipeline determinism", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what(), 0.0};
    }
    // Shared experiment work reports its own attributed time.
    if (o.seconds == 0.0) o.seconds = seconds_since(t0);
    const bool in_time = c.limit_seconds == 0 || o.seconds < c.limit_seconds;
    const bool pass = o.ok && in_time;
    failures += !pass;
    std::string timing = fmt("%.1fs", o.seconds);
    if (c.limit_seconds > 0) timing += fmt(" of %.0fs", c.limit_seconds) + (in_time ? "" : " OVER LIMIT");
    std::printf("%s criterion %d (%s): %s [%s]\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
