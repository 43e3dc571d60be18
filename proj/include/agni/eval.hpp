#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "agni/dataprep.hpp"
#include "agni/model.hpp"

namespace agni {

std::vector<bool> binarize_labels(std::span<const float> labels);

// A sample is predicted positive when its score is strictly greater than tau.
struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct Confusion {
  double tau = 0.5;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

struct EvalReport {
  // From (0, 0) at threshold +inf to (1, 1) at threshold -inf.
  std::vector<RocPoint> roc;
  double auc = 0.0;
  std::size_t n_total = 0;
  std::size_t n_positive = 0;
  std::vector<Confusion> confusion;
};

// One ROC step per distinct score, so tied scores earn half credit.
// Throws EvalError when `truths` holds a single class.
EvalReport roc_curve(std::span<const double> scores, const std::vector<bool>& truths,
                     std::span<const double> taus = {});

std::vector<double> score_samples(const Model& model, std::span<const HistogramSample> samples);

EvalReport evaluate(const Model& model, std::span<const HistogramSample> samples, std::span<const double> taus = {});

// "labels: total=N positive=P (x.xx%)"
std::string label_distribution(const EvalReport& report);

void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
void write_roc_svg(const std::filesystem::path& path, const EvalReport& report, const std::string& title);

// ---------------------------------------------------------------------------
// Experiment harness

// Reference dates in [begin, end).
struct EvalMonth {
  Date begin{};
  Date end{};
  std::string label() const;
};

// The last `count` disjoint `days`-long blocks of reference dates whose
// label window is fully covered by `grids`, oldest first.
std::vector<EvalMonth> evaluation_months(std::span<const Scene> store, std::span<const HotspotGrid> grids,
                                         const PrepConfig& prep, int count = 4, int days = 28);

struct Split {
  std::vector<HistogramSample> train;
  // One test set per evaluation month.
  std::vector<std::vector<HistogramSample>> test;
};

// Training refs have their whole label window before the first month;
// refs whose label window runs past `label_end` are dropped.
Split split_by_months(std::vector<HistogramSample> samples, std::span<const EvalMonth> months,
                      const PrepConfig& prep, Date label_end);

// First day after the last weekly grid.
Date label_coverage_end(std::span<const HotspotGrid> grids);

struct ExperimentConfig {
  PrepConfig prep;
  TrainConfig train;
  Arch sweep_arch = Arch::kAgni;
  int months = 4;
  int month_days = 28;
  std::uint64_t seed = 1;
};

struct ExperimentGrid {
  std::vector<std::string> months;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> auc;  // [month][column]
  bool operator==(const ExperimentGrid&) const = default;
};

// Stable per-purpose seed derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, const std::string& purpose);

// Agni+custom, Agni+MSE, LR+custom, LR+MSE on one resampled training set.
ExperimentGrid run_ablation(std::span<const Scene> store, std::span<const HotspotGrid> grids,
                            const ExperimentConfig& cfg);

// One column per window length; each re-prepares the dataset with that span.
ExperimentGrid run_window_sweep(std::span<const Scene> store, std::span<const HotspotGrid> grids,
                                std::span<const int> windows, const ExperimentConfig& cfg);

void write_grid_csv(const std::filesystem::path& path, const ExperimentGrid& grid);

}  // namespace agni
