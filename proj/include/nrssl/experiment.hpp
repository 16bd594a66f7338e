#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nrssl/dataset.hpp"
#include "nrssl/format.hpp"
#include "nrssl/losses.hpp"
#include "nrssl/toy_trainer.hpp"

namespace nrssl {

struct RunOutcome {
  TrainResult result;
  EvalReport report;
};

inline RunOutcome train_and_evaluate(const Dataset& data, const TrainConfig& cfg) {
  RunOutcome out{train(data, cfg), {}};
  const FeatureModel features(data.num_classes, cfg.features, cfg.seed);
  out.report = evaluate(out.result.model, features, heldout_records(data));
  return out;
}

struct GridCell {
  Head head;
  TargetMode targets;
  // Held-out clean accuracy per seed, in seed order.
  std::vector<double> accuracy;

  double mean() const {
    CompensatedSum s;
    for (double a : accuracy) s.add(a);
    return s.value() / static_cast<double>(accuracy.size());
  }

  // Sample standard deviation; 0 for a single seed.
  double stddev() const {
    if (accuracy.size() < 2) return 0.0;
    const double m = mean();
    CompensatedSum s;
    for (double a : accuracy) s.add((a - m) * (a - m));
    return std::sqrt(s.value() / static_cast<double>(accuracy.size() - 1));
  }
};

struct GridReport {
  std::vector<GridCell> cells;

  const GridCell& cell(Head h, TargetMode t) const {
    for (const auto& c : cells)
      if (c.head == h && c.targets == t) return c;
    throw std::out_of_range("no such grid cell");
  }
};

inline constexpr Head kHeads[] = {Head::kSoftmaxKL, Head::kSigmoidFocal};
inline constexpr TargetMode kTargetModes[] = {TargetMode::kHard, TargetMode::kUncertaintySoft};

// {hard, soft} x {softmax-kl, sigmoid-focal} on paired seeds: every cell of
// run i trains from seed_for(i), so cells differ only in head and targets.
inline GridReport compare_grid(const Dataset& data, const TrainConfig& base, std::size_t seeds,
                               const std::function<std::uint64_t(std::size_t)>& seed_for) {
  GridReport rep;
  for (Head h : kHeads)
    for (TargetMode t : kTargetModes) rep.cells.push_back({h, t, {}});
  for (std::size_t i = 0; i < seeds; ++i) {
    for (auto& cell : rep.cells) {
      TrainConfig cfg = base;
      cfg.head = cell.head;
      cfg.targets = cell.targets;
      cfg.seed = seed_for(i);
      cell.accuracy.push_back(train_and_evaluate(data, cfg).report.clean_accuracy);
    }
  }
  return rep;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TracePoint>& trace) {
  os << "iteration,loss,clean_accuracy,mean_u_clean,mean_u_noisy\n";
  for (const auto& p : trace) {
    os << p.iteration << ',' << format_real(p.loss) << ',' << format_real(p.clean_accuracy) << ','
       << format_real(p.mean_u_clean) << ',' << format_real(p.mean_u_noisy) << '\n';
  }
}

inline void write_grid_csv(std::ostream& os, const GridReport& rep) {
  os << "head,targets,seeds,mean_accuracy,std_accuracy\n";
  for (const auto& c : rep.cells) {
    os << to_string(c.head) << ',' << to_string(c.targets) << ',' << c.accuracy.size() << ','
       << format_real(c.mean()) << ',' << format_real(c.stddev()) << '\n';
  }
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& a : r.per_class_accuracy) per_class.push_back(a ? nlohmann::json(*a) : nullptr);
  return {{"count", r.count},
          {"clean_accuracy", r.clean_accuracy},
          {"per_class_accuracy", per_class},
          {"noisy_positive_background_mass",
           r.noisy_positive_background_mass ? nlohmann::json(*r.noisy_positive_background_mass)
                                            : nullptr},
          {"regression_l1", r.regression_l1 ? nlohmann::json(*r.regression_l1) : nullptr}};
}

inline nlohmann::json to_json(const TrainedModel& m) {
  auto linear = [](const LinearModel& l) {
    return nlohmann::json{{"inputs", l.inputs}, {"outputs", l.outputs}, {"weights", l.weights}, {"bias", l.bias}};
  };
  return {{"head", to_string(m.head)},
          {"num_classes", m.num_classes},
          {"classifier", linear(m.classifier)},
          {"regressor", linear(m.regressor)}};
}

inline nlohmann::json to_json(const GridReport& rep) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : rep.cells) {
    cells.push_back({{"head", to_string(c.head)},
                     {"targets", to_string(c.targets)},
                     {"accuracy", c.accuracy},
                     {"mean", c.mean()},
                     {"std", c.stddev()}});
  }
  return {{"cells", cells}};
}

}  // namespace nrssl
