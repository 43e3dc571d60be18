// agni: synthetic scenes -> histogram datasets -> trained hotspot models -> ROC reports.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "agni/dataprep.hpp"
#include "agni/error.hpp"
#include "agni/eval.hpp"
#include "agni/model.hpp"
#include "agni/raster.hpp"
#include "agni/run_config.hpp"

namespace fs = std::filesystem;
using namespace agni;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> arch;
  std::optional<std::string> loss;
  std::optional<double> k;
  std::optional<std::string> windows;
  std::optional<double> ratio;
  bool oracle = false;
};

RunConfig resolve(const Flags& flags) {
  RunConfig cfg = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.out = *flags.out;
  if (flags.arch) cfg.arch = parse_arch(*flags.arch);
  if (flags.loss) cfg.train.loss = parse_loss(*flags.loss);
  if (flags.k) cfg.train.k = *flags.k;
  if (flags.windows) cfg.eval.windows = parse_windows(*flags.windows);
  if (flags.ratio) cfg.train.ratio = *flags.ratio;
  if (flags.oracle) cfg.eval.oracle = true;
  cfg.validate();
  return cfg;
}

void print_skew(const char* name, std::span<const HistogramSample> samples) {
  std::size_t nonzero = 0;
  for (const auto& s : samples) nonzero += s.label > 0.0f;
  const std::size_t zero = samples.size() - nonzero;
  const double pct = samples.empty() ? 100.0 : 100.0 * static_cast<double>(zero) / samples.size();
  std::printf("%s: %zu samples, %zu zero labels (%.2f%%), %zu non-zero\n", name, samples.size(), zero, pct, nonzero);
}

void print_grid(const ExperimentGrid& grid) {
  std::printf("%-12s", "month");
  for (const auto& c : grid.columns) std::printf(" %12s", c.c_str());
  std::printf("\n");
  for (std::size_t m = 0; m < grid.months.size(); ++m) {
    std::printf("%-12s", grid.months[m].c_str());
    for (double v : grid.auc[m]) std::printf(" %12.4f", v);
    std::printf("\n");
  }
}

int cmd_synth(const RunConfig& cfg) {
  const World world = generate_world(cfg.resolved_world());
  const fs::path dir = cfg.store_dir();
  write_scene_store(dir, world);
  write_run_config(dir, cfg);
  std::printf("wrote %s: %zu scenes, %zu weekly grids, %zu missing acquisitions\n", dir.string().c_str(),
              world.scenes.size(), world.grids.size(), world.missing_dates.size());
  return 0;
}

int cmd_prep(const RunConfig& cfg) {
  const World world = read_scene_store(cfg.store_dir());
  std::vector<HistogramSample> samples = prepare_dataset(world.scenes, world.grids, cfg.prep);
  const fs::path dir = cfg.dataset_dir();
  DatasetInfo info;
  info.bands = world.scenes.empty() ? 0 : world.scenes.front().band_count();
  info.bins = cfg.prep.bins;
  info.tile_size = cfg.prep.tile_size;
  info.seed = cfg.seed;
  info.prep_config = prep_config_json(cfg.prep);

  Split split;
  if (!samples.empty()) {
    const Date label_end = label_coverage_end(world.grids);
    const auto months = evaluation_months(world.scenes, world.grids, cfg.prep, cfg.eval.months, cfg.eval.month_days);
    split = split_by_months(std::move(samples), months, cfg.prep, label_end);
    std::printf("evaluation months: %s .. %s\n", format_date(months.front().begin).c_str(),
                format_date(months.back().end - Days{1}).c_str());
  }
  std::vector<HistogramSample> test;
  for (auto& month : split.test) {
    for (auto& s : month) test.push_back(std::move(s));
  }
  write_dataset(dir / "train", split.train, info);
  write_dataset(dir / "test", test, info);
  for (const fs::path& d : {dir, dir / "train", dir / "test"}) write_run_config(d, cfg);

  std::vector<HistogramSample> all = split.train;
  all.insert(all.end(), test.begin(), test.end());
  print_skew("dataset", all);
  print_skew("train", split.train);
  print_skew("test", test);
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto samples = read_dataset(cfg.dataset_dir() / "train");
  std::size_t nonzero = 0;
  for (const auto& s : samples) nonzero += s.label > 0.0f;
  if (nonzero == 0 || nonzero == samples.size()) {
    throw DataError((cfg.dataset_dir() / "train").string() + ": training set needs both zero and non-zero labels (" +
                    std::to_string(samples.size()) + " samples, " + std::to_string(nonzero) + " non-zero)");
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, "resample"));
  const auto balanced = resample(samples, cfg.train.ratio, rng);
  const TrainConfig tc = cfg.resolved_train();
  std::printf("training %s with %s loss on %zu of %zu samples\n", to_string(cfg.arch).c_str(),
              to_string(tc.loss).c_str(), balanced.size(), samples.size());
  const TrainResult result = train(balanced, cfg.arch, tc);
  const fs::path dir = cfg.model_dir();
  write_weights(dir, result.model);
  write_trace_csv(dir / "trace.csv", result.epoch_loss);
  write_run_config(dir, cfg);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::printf("epoch %zu: mean loss %.6f\n", e + 1, result.epoch_loss[e]);
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const auto samples = read_dataset(cfg.dataset_dir() / "test");
  std::vector<double> scores;
  std::string title;
  if (cfg.eval.oracle) {
    for (const auto& s : samples) scores.push_back(s.label);
    title = "oracle scorer";
  } else {
    const Model model = read_weights(cfg.model_dir());
    scores = score_samples(model, samples);
    title = to_string(model_arch(model));
  }
  std::vector<float> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  const EvalReport report = roc_curve(scores, binarize_labels(labels), cfg.eval.thresholds);
  const fs::path dir = cfg.out / "eval";
  fs::create_directories(dir);
  write_report_csv(dir / "report.csv", report);
  write_roc_svg(dir / "roc.svg", report, title);
  write_run_config(dir, cfg);
  std::printf("%s\n", label_distribution(report).c_str());
  for (const auto& c : report.confusion) {
    std::printf("tau=%.3f: tp=%zu fp=%zu tn=%zu fn=%zu\n", c.tau, c.tp, c.fp, c.tn, c.fn);
  }
  std::printf("AUC %.6f\n", report.auc);
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  const World world = read_scene_store(cfg.store_dir());
  const ExperimentGrid grid = run_ablation(world.scenes, world.grids, cfg.experiment());
  const fs::path dir = cfg.out / "ablation";
  fs::create_directories(dir);
  write_grid_csv(dir / "grid.csv", grid);
  write_run_config(dir, cfg);
  print_grid(grid);
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const World world = read_scene_store(cfg.store_dir());
  const ExperimentGrid grid = run_window_sweep(world.scenes, world.grids, cfg.eval.windows, cfg.experiment());
  const fs::path dir = cfg.out / "sweep";
  fs::create_directories(dir);
  write_grid_csv(dir / "grid.csv", grid);
  write_run_config(dir, cfg);
  print_grid(grid);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forest-fire hotspot prediction from multispectral scene histories"};
  app.require_subcommand(1);
  Flags flags;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"synth", "Generate a synthetic scene store and weekly hotspot grids", cmd_synth},
      {"prep", "Build train/test histogram datasets from a scene store", cmd_prep},
      {"train", "Train a model on the training dataset", cmd_train},
      {"eval", "Score the test dataset and write the ROC report", cmd_eval},
      {"ablate", "Compare architectures and losses per evaluation month", cmd_ablate},
      {"sweep", "Compare historical window lengths per evaluation month", cmd_sweep},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", flags.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Master seed");
    sub->add_option("--out", flags.out, "Workspace directory");
    sub->add_option("--arch", flags.arch, "agni or lr");
    sub->add_option("--loss", flags.loss, "custom or mse");
    sub->add_option("--k", flags.k, "Custom loss steepness");
    sub->add_option("--windows", flags.windows, "Comma-separated window lengths in days");
    sub->add_option("--ratio", flags.ratio, "Zero to non-zero label ratio after resampling");
    if (std::string(c.name) == "eval") sub->add_flag("--oracle", flags.oracle, "Score each sample with its label");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    const RunConfig cfg = resolve(flags);
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) return c.run(cfg);
    }
    return static_cast<int>(ExitCode::kConfig);
  } catch (const Error& e) {
    std::cerr << "agni: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "agni: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "agni: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntime);
  }
}
