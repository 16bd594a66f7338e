#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nrssl/assignment.hpp"
#include "nrssl/dataset.hpp"
#include "nrssl/format.hpp"
#include "nrssl/losses.hpp"
#include "nrssl/uncertainty.hpp"

namespace nrssl {

// Assignment accuracy against the true category, binned by max IoU.
struct AccuracyBin {
  double iou_low = 0.0;
  double iou_high = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t correct_pos = 0;
  std::size_t correct_neg = 0;

  std::optional<double> acc_pos() const {
    if (n_pos == 0) return std::nullopt;
    return static_cast<double>(correct_pos) / static_cast<double>(n_pos);
  }
  std::optional<double> acc_neg() const {
    if (n_neg == 0) return std::nullopt;
    return static_cast<double>(correct_neg) / static_cast<double>(n_neg);
  }
};

struct AccuracyCurve {
  std::vector<AccuracyBin> bins;

  // Index of the bin whose lower edge is the first at or above `threshold`.
  std::size_t bin_above(double threshold) const {
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (bins[i].iou_low >= threshold - 1e-12) return i;
    return bins.size();
  }
};

struct LabeledAssignment {
  Assignment assignment;
  Category true_category;
};

inline std::size_t bin_index(double value, std::size_t bins) {
  const auto idx = static_cast<std::size_t>(std::floor(value * static_cast<double>(bins)));
  return std::min(idx, bins - 1);
}

// Overlaps of exactly 1 fall in the last bin.
inline AccuracyCurve accuracy_vs_iou(std::span<const LabeledAssignment> items, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("accuracy_vs_iou needs at least 2 bins");
  AccuracyCurve curve;
  curve.bins.resize(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    curve.bins[i].iou_low = static_cast<double>(i) / static_cast<double>(bins);
    curve.bins[i].iou_high = static_cast<double>(i + 1) / static_cast<double>(bins);
  }
  for (const auto& item : items) {
    auto& bin = curve.bins[bin_index(item.assignment.max_iou, bins)];
    const bool ok = item.assignment.assigned_category == item.true_category;
    if (item.assignment.is_positive) {
      ++bin.n_pos;
      bin.correct_pos += ok;
    } else {
      ++bin.n_neg;
      bin.correct_neg += ok;
    }
  }
  return curve;
}

inline std::vector<LabeledAssignment> labeled_assignments(std::span<const ProposalRecord> records,
                                                          std::optional<Split> split) {
  std::vector<LabeledAssignment> out;
  for (const auto& r : records)
    if (!split || r.split == *split) out.push_back({r.assignment, r.true_category});
  return out;
}

enum class Stage { kEarly, kMiddle, kLate };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::kEarly: return "early";
    case Stage::kMiddle: return "middle";
    case Stage::kLate: return "late";
  }
  return "unknown";
}

struct UncertaintyHistogram {
  Stage stage = Stage::kEarly;
  std::int64_t iteration = 0;
  std::vector<std::size_t> clean;
  std::vector<std::size_t> noisy;
  double clean_mean = 0.0;
  double noisy_mean = 0.0;
  // Standard errors of the two means.
  double clean_sem = 0.0;
  double noisy_sem = 0.0;
  double population_mean = 0.0;

  std::size_t bins() const { return clean.size(); }
  double bin_low(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(bins()); }
  double bin_high(std::size_t i) const { return static_cast<double>(i + 1) / static_cast<double>(bins()); }
};

struct StageIterations {
  std::int64_t early;
  std::int64_t middle;
  std::int64_t late;
};

// 5%, 50% and 95% of the schedule.
inline StageIterations default_stages(std::int64_t total) {
  auto at = [total](double f) {
    return static_cast<std::int64_t>(std::llround(f * static_cast<double>(total)));
  };
  return {at(0.05), at(0.5), at(0.95)};
}

namespace detail {

struct MeanAccumulator {
  CompensatedSum sum;
  CompensatedSum sum_sq;
  std::size_t n = 0;
  void add(double v) {
    sum.add(v);
    sum_sq.add(v * v);
    ++n;
  }
  double mean() const { return n == 0 ? 0.0 : sum.value() / static_cast<double>(n); }
  double sem() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = (sum_sq.value() - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
    return std::sqrt(std::max(0.0, var) / static_cast<double>(n));
  }
};

}  // namespace detail

// u(beta(t)) of every positive at each stage, split by whether the assigned
// category matches the true one.
inline std::vector<UncertaintyHistogram> u_histograms(std::span<const LabeledAssignment> items,
                                                      const UncertaintyConfig& cfg,
                                                      const StageIterations& stages,
                                                      std::size_t bins = 20) {
  if (bins < 1) throw std::invalid_argument("u_histograms needs at least 1 bin");
  const std::pair<Stage, std::int64_t> plan[] = {
      {Stage::kEarly, stages.early}, {Stage::kMiddle, stages.middle}, {Stage::kLate, stages.late}};
  std::vector<UncertaintyHistogram> out;
  for (const auto& [stage, t] : plan) {
    if (t < 0 || t > cfg.total_iterations)
      throw std::out_of_range("stage iteration outside [0, total_iterations]");
    UncertaintyHistogram h;
    h.stage = stage;
    h.iteration = t;
    h.clean.assign(bins, 0);
    h.noisy.assign(bins, 0);
    detail::MeanAccumulator clean, noisy, all;
    for (const auto& item : items) {
      if (!item.assignment.is_positive) continue;
      const double u = dynamic_uncertainty(item.assignment, t, cfg);
      const bool is_clean = item.assignment.assigned_category == item.true_category;
      (is_clean ? h.clean : h.noisy)[bin_index(u, bins)] += 1;
      (is_clean ? clean : noisy).add(u);
      all.add(u);
    }
    h.clean_mean = clean.mean();
    h.noisy_mean = noisy.mean();
    h.clean_sem = clean.sem();
    h.noisy_sem = noisy.sem();
    h.population_mean = all.mean();
    out.push_back(std::move(h));
  }
  return out;
}

inline void write_accuracy_csv(std::ostream& os, const AccuracyCurve& curve) {
  os << "bin_low,bin_high,n_pos,n_neg,acc_pos,acc_neg\n";
  auto opt = [](std::optional<double> v) { return v ? format_real(*v) : std::string(); };
  for (const auto& b : curve.bins) {
    os << format_real(b.iou_low) << ',' << format_real(b.iou_high) << ',' << b.n_pos << ','
       << b.n_neg << ',' << opt(b.acc_pos()) << ',' << opt(b.acc_neg()) << '\n';
  }
}

inline void write_histogram_csv(std::ostream& os, std::span<const UncertaintyHistogram> hists) {
  os << "stage,bin_low,bin_high,clean_count,noisy_count\n";
  for (const auto& h : hists) {
    for (std::size_t i = 0; i < h.bins(); ++i) {
      os << to_string(h.stage) << ',' << format_real(h.bin_low(i)) << ','
         << format_real(h.bin_high(i)) << ',' << h.clean[i] << ',' << h.noisy[i] << '\n';
    }
  }
}

}  // namespace nrssl
