#include "agni/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "agni/error.hpp"
#include "binary_io.hpp"

namespace agni {

std::vector<bool> binarize_labels(std::span<const float> labels) {
  std::vector<bool> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] > 0.0f;
  return out;
}

EvalReport roc_curve(std::span<const double> scores, const std::vector<bool>& truths, std::span<const double> taus) {
  if (scores.size() != truths.size()) {
    throw ShapeError("roc_curve: " + std::to_string(scores.size()) + " scores for " + std::to_string(truths.size()) +
                     " truths");
  }
  EvalReport report;
  report.n_total = truths.size();
  report.n_positive = static_cast<std::size_t>(std::count(truths.begin(), truths.end(), true));
  const std::size_t pos = report.n_positive;
  const std::size_t neg = report.n_total - pos;
  if (pos == 0 || neg == 0) {
    throw EvalError("AUC undefined: evaluation set has " + std::to_string(pos) + " positive and " +
                    std::to_string(neg) + " negative labels");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw EvalError("roc_curve: NaN score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double inf = std::numeric_limits<double>::infinity();
  report.roc.push_back({inf, 0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (truths[order[i]] ? tp : fp)++;
    // Everything scored at or above s now counts as positive, i.e. the
    // threshold sits just below s: the next distinct score, or -inf.
    const double next = i < order.size() ? scores[order[i]] : -inf;
    const RocPoint pt{next, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos};
    const RocPoint& prev = report.roc.back();
    area += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2.0;
    report.roc.push_back(pt);
  }
  report.auc = area;

  for (double tau : taus) {
    Confusion c;
    c.tau = tau;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool predicted = scores[i] > tau;
      if (predicted) {
        (truths[i] ? c.tp : c.fp)++;
      } else {
        (truths[i] ? c.fn : c.tn)++;
      }
    }
    report.confusion.push_back(c);
  }
  return report;
}

std::vector<double> score_samples(const Model& model, std::span<const HistogramSample> samples) {
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (const auto& s : samples) scores.push_back(predict(model, s));
  return scores;
}

EvalReport evaluate(const Model& model, std::span<const HistogramSample> samples, std::span<const double> taus) {
  std::vector<float> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  const auto scores = score_samples(model, samples);
  return roc_curve(scores, binarize_labels(labels), taus);
}

std::string label_distribution(const EvalReport& report) {
  const double percent = report.n_total ? 100.0 * static_cast<double>(report.n_positive) / report.n_total : 0.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "labels: total=%zu positive=%zu (%.2f%%)", report.n_total, report.n_positive,
                percent);
  return buf;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::string text = "threshold,fpr,tpr\n";
  for (const auto& p : report.roc) text += fmt(p.threshold) + "," + fmt(p.fpr) + "," + fmt(p.tpr) + "\n";
  io::write_text(path, text);
}

void write_roc_svg(const std::filesystem::path& path, const EvalReport& report, const std::string& title) {
  constexpr double kSize = 360.0;
  constexpr double kMargin = 50.0;
  auto x = [&](double fpr) { return kMargin + fpr * kSize; };
  auto y = [&](double tpr) { return kMargin + (1.0 - tpr) * kSize; };
  char buf[256];
  std::string svg;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                kSize + 2 * kMargin, kSize + 2 * kMargin);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf), "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                kMargin, kMargin, kSize, kSize);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line class=\"chance\" x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"gray\" "
                "stroke-dasharray=\"6,4\"/>\n",
                x(0), y(0), x(1), y(1));
  svg += buf;
  svg += "<polyline class=\"roc\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
  for (const auto& p : report.roc) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x(p.fpr), y(p.tpr));
    svg += buf;
  }
  svg += "\"/>\n";
  std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">False positive rate</text>\n",
                kMargin + kSize / 2, kSize + kMargin + 35);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"15\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 15 %.1f)\">True positive "
                "rate</text>\n",
                kMargin + kSize / 2, kMargin + kSize / 2);
  svg += buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"30\" text-anchor=\"middle\">", kMargin + kSize / 2);
  svg += buf;
  for (char ch : title) {
    switch (ch) {
      case '<': svg += "&lt;"; break;
      case '>': svg += "&gt;"; break;
      case '&': svg += "&amp;"; break;
      default: svg += ch;
    }
  }
  std::snprintf(buf, sizeof(buf), " (AUC %.4f)</text>\n</svg>\n", report.auc);
  svg += buf;
  io::write_text(path, svg);
}

// ---------------------------------------------------------------------------
// Experiment harness

std::string EvalMonth::label() const { return format_date(begin); }

Date label_coverage_end(std::span<const HotspotGrid> grids) {
  if (grids.empty()) throw DataError("no hotspot grids: label coverage is empty");
  Date end = grids.front().week_start;
  for (const auto& g : grids) end = std::max(end, g.week_start + Days{7});
  return end;
}

std::vector<EvalMonth> evaluation_months(std::span<const Scene> store, std::span<const HotspotGrid> grids,
                                         const PrepConfig& prep, int count, int days) {
  if (count < 1 || days < 1) throw ConfigError("eval.months: need at least one block of at least one day");
  const Date coverage_end = label_coverage_end(grids);
  std::optional<Date> last_ref;
  for (const auto& s : store) {
    if (s.acquired_at() + Days{prep.label_to_days} <= coverage_end) {
      last_ref = last_ref ? std::max(*last_ref, s.acquired_at()) : s.acquired_at();
    }
  }
  if (!last_ref) throw DataError("no scene has a fully labelled prediction window");
  std::vector<EvalMonth> months;
  const Date stop = *last_ref + Days{1};
  for (int i = count; i >= 1; --i) {
    months.push_back({stop - Days{static_cast<long>(i) * days}, stop - Days{static_cast<long>(i - 1) * days}});
  }
  return months;
}

Split split_by_months(std::vector<HistogramSample> samples, std::span<const EvalMonth> months, const PrepConfig& prep,
                      Date label_end) {
  if (months.empty()) throw ConfigError("eval.months: no evaluation months");
  Split split;
  split.test.resize(months.size());
  const Date first = months.front().begin;
  for (auto& s : samples) {
    if (s.ref_date + Days{prep.label_to_days} > label_end) continue;
    if (s.ref_date + Days{prep.label_to_days} <= first) {
      split.train.push_back(std::move(s));
      continue;
    }
    for (std::size_t m = 0; m < months.size(); ++m) {
      if (s.ref_date >= months[m].begin && s.ref_date < months[m].end) {
        split.test[m].push_back(std::move(s));
        break;
      }
    }
  }
  return split;
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& purpose) {
  // FNV-1a over the purpose, folded into a splitmix64 step.
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : purpose) h = (h ^ ch) * 1099511628211ull;
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (h | 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

template <class Fn>
auto in_cell(const std::string& cell, Fn&& fn) {
  try {
    return fn();
  } catch (const EvalError& e) {
    throw EvalError(cell + ": " + e.what());
  } catch (const TrainingError& e) {
    throw TrainingError(cell + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(cell + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(cell + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(cell + ": " + e.what());
  }
}

struct PreparedSplit {
  std::vector<EvalMonth> months;
  Split split;
};

PreparedSplit prepare_split(std::span<const Scene> store, std::span<const HotspotGrid> grids, const PrepConfig& prep,
                            const ExperimentConfig& cfg) {
  PreparedSplit out;
  out.months = evaluation_months(store, grids, prep, cfg.months, cfg.month_days);
  out.split = split_by_months(prepare_dataset(store, grids, prep), out.months, prep, label_coverage_end(grids));
  return out;
}

std::vector<double> month_aucs(const Model& model, const PreparedSplit& data) {
  std::vector<double> aucs;
  for (std::size_t m = 0; m < data.months.size(); ++m) {
    aucs.push_back(in_cell("month " + data.months[m].label(), [&] { return evaluate(model, data.split.test[m]).auc; }));
  }
  return aucs;
}

ExperimentGrid empty_grid(const std::vector<EvalMonth>& months, std::vector<std::string> columns) {
  ExperimentGrid grid;
  for (const auto& m : months) grid.months.push_back(m.label());
  grid.columns = std::move(columns);
  grid.auc.assign(months.size(), std::vector<double>(grid.columns.size(), 0.0));
  return grid;
}

}  // namespace

ExperimentGrid run_ablation(std::span<const Scene> store, std::span<const HotspotGrid> grids,
                            const ExperimentConfig& cfg) {
  cfg.train.validate();
  const PreparedSplit data = prepare_split(store, grids, cfg.prep, cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, "ablation/resample"));
  const auto train_set = in_cell("ablation", [&] { return resample(data.split.train, cfg.train.ratio, rng); });

  struct Variant {
    Arch arch;
    LossKind loss;
  };
  const Variant variants[] = {{Arch::kAgni, LossKind::kCustom},
                              {Arch::kAgni, LossKind::kMse},
                              {Arch::kLr, LossKind::kCustom},
                              {Arch::kLr, LossKind::kMse}};
  std::vector<std::string> columns;
  for (const auto& v : variants) columns.push_back(to_string(v.arch) + "+" + to_string(v.loss));
  ExperimentGrid grid = empty_grid(data.months, columns);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    TrainConfig tc = cfg.train;
    tc.loss = variants[j].loss;
    tc.seed = derive_seed(cfg.seed, "ablation/train");
    const TrainResult trained = in_cell(columns[j], [&] { return train(train_set, variants[j].arch, tc); });
    const auto aucs = in_cell(columns[j], [&] { return month_aucs(trained.model, data); });
    for (std::size_t m = 0; m < aucs.size(); ++m) grid.auc[m][j] = aucs[m];
  }
  return grid;
}

ExperimentGrid run_window_sweep(std::span<const Scene> store, std::span<const HotspotGrid> grids,
                                std::span<const int> windows, const ExperimentConfig& cfg) {
  if (windows.empty()) throw ConfigError("sweep.windows: at least one window length is required");
  cfg.train.validate();
  std::vector<std::string> columns;
  for (int w : windows) columns.push_back(std::to_string(w) + "d");
  std::optional<ExperimentGrid> grid;
  for (std::size_t j = 0; j < windows.size(); ++j) {
    const std::string cell = "window " + columns[j];
    PrepConfig prep = cfg.prep;
    prep.window_days = windows[j];
    in_cell(cell, [&] { prep.validate(); return 0; });
    const PreparedSplit data = in_cell(cell, [&] { return prepare_split(store, grids, prep, cfg); });
    if (!grid) grid = empty_grid(data.months, columns);
    std::mt19937_64 rng(derive_seed(cfg.seed, "sweep/resample"));
    const auto train_set = in_cell(cell, [&] { return resample(data.split.train, cfg.train.ratio, rng); });
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "sweep/train");
    const TrainResult trained = in_cell(cell, [&] { return train(train_set, cfg.sweep_arch, tc); });
    const auto aucs = in_cell(cell, [&] { return month_aucs(trained.model, data); });
    for (std::size_t m = 0; m < aucs.size(); ++m) grid->auc[m][j] = aucs[m];
  }
  return *grid;
}

void write_grid_csv(const std::filesystem::path& path, const ExperimentGrid& grid) {
  std::string text = "month";
  for (const auto& c : grid.columns) text += "," + c;
  text += "\n";
  for (std::size_t m = 0; m < grid.months.size(); ++m) {
    text += grid.months[m];
    for (double v : grid.auc[m]) text += "," + fmt(v);
    text += "\n";
  }
  io::write_text(path, text);
}

}  // namespace agni
