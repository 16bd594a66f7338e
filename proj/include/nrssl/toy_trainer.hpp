#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrssl/dataset.hpp"
#include "nrssl/format.hpp"
#include "nrssl/losses.hpp"
#include "nrssl/random.hpp"
#include "nrssl/soft_target.hpp"
#include "nrssl/uncertainty.hpp"

namespace nrssl {

enum class Head { kSoftmaxKL, kSigmoidFocal };
enum class TargetMode { kHard, kUncertaintySoft };

inline std::string to_string(Head h) {
  return h == Head::kSoftmaxKL ? "softmax-kl" : "sigmoid-focal";
}
inline std::string to_string(TargetMode m) {
  return m == TargetMode::kHard ? "hard" : "soft";
}
inline Head head_from_string(const std::string& s) {
  if (s == "softmax-kl") return Head::kSoftmaxKL;
  if (s == "sigmoid-focal") return Head::kSigmoidFocal;
  throw std::invalid_argument("unknown head '" + s + "' (expected softmax-kl or sigmoid-focal)");
}
inline TargetMode target_mode_from_string(const std::string& s) {
  if (s == "hard") return TargetMode::kHard;
  if (s == "soft") return TargetMode::kUncertaintySoft;
  throw std::invalid_argument("unknown targets '" + s + "' (expected hard or soft)");
}

struct FeatureParams {
  std::size_t dim = 32;
  double prototype_scale = 1.0;
  double noise = 1.0;
  // Foreground proposals carry their clean box deltas, times this gain, in the
  // first four feature dimensions.
  double delta_gain = 1.0;

  void validate() const {
    if (dim < 4) throw std::invalid_argument("features: dim must be >= 4");
    if (!(prototype_scale > 0.0)) throw std::invalid_argument("features: prototype_scale must be > 0");
    if (!(noise >= 0.0)) throw std::invalid_argument("features: noise must be >= 0");
  }
};

// Synthetic ROI features: class prototype of the true category plus isotropic
// Gaussian noise. Prototypes and per-proposal noise are fixed by the seed.
class FeatureModel {
 public:
  FeatureModel(std::size_t num_classes, const FeatureParams& params, std::uint64_t seed)
      : num_slots_(num_classes + 1), params_(params), seed_(seed) {
    params.validate();
    Rng rng = make_stream(seed, "prototypes");
    prototypes_.resize(num_slots_ * params.dim);
    for (double& v : prototypes_) v = normal(rng, 0.0, params.prototype_scale);
  }

  std::size_t dim() const { return params_.dim; }
  std::size_t num_slots() const { return num_slots_; }

  std::span<const double> prototype(std::size_t slot) const {
    return {prototypes_.data() + slot * params_.dim, params_.dim};
  }

  std::vector<double> features(const ProposalRecord& rec) const {
    const std::size_t slot = rec.true_category.slot(num_slots_ - 1);
    Rng rng = make_stream(seed_, "features", rec.proposal_id);
    std::vector<double> x(prototype(slot).begin(), prototype(slot).end());
    for (double& v : x) v += normal(rng, 0.0, params_.noise);
    if (rec.clean_delta) {
      x[0] += params_.delta_gain * rec.clean_delta->dx;
      x[1] += params_.delta_gain * rec.clean_delta->dy;
      x[2] += params_.delta_gain * rec.clean_delta->dw;
      x[3] += params_.delta_gain * rec.clean_delta->dh;
    }
    return x;
  }

 private:
  std::size_t num_slots_;
  FeatureParams params_;
  std::uint64_t seed_;
  std::vector<double> prototypes_;
};

// Dense affine map, row-major weights (outputs x inputs).
struct LinearModel {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  LinearModel() = default;
  LinearModel(std::size_t in, std::size_t out)
      : inputs(in), outputs(out), weights(in * out, 0.0), bias(out, 0.0) {}

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(bias);
    for (std::size_t o = 0; o < outputs; ++o) {
      const double* row = weights.data() + o * inputs;
      double acc = 0.0;
      for (std::size_t i = 0; i < inputs; ++i) acc += row[i] * x[i];
      y[o] += acc;
    }
    return y;
  }
};

struct TrainConfig {
  Head head = Head::kSigmoidFocal;
  TargetMode targets = TargetMode::kUncertaintySoft;
  std::int64_t iterations = 2000;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  UncertaintyConfig uncertainty;
  double gamma = 2.0;
  double regression_weight = 1.0;
  std::int64_t trace_every = 100;
  FeatureParams features;
  // Overrides u(beta) for every positive when set; a diagnostic knob.
  std::optional<double> forced_uncertainty;

  // Uncertainty schedule bound to this run's iteration count.
  UncertaintyConfig schedule() const {
    UncertaintyConfig u = uncertainty;
    u.total_iterations = iterations;
    return u;
  }

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("train: iterations must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(gamma >= 0.0)) throw std::invalid_argument("train: gamma must be >= 0");
    if (!(regression_weight >= 0.0))
      throw std::invalid_argument("train: regression_weight must be >= 0");
    if (trace_every < 1) throw std::invalid_argument("train: trace_every must be >= 1");
    if (forced_uncertainty && !(*forced_uncertainty >= 0.0 && *forced_uncertainty <= 1.0))
      throw std::invalid_argument("train: forced_uncertainty must lie in [0, 1]");
    schedule().validate();
    features.validate();
  }
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainedModel {
  Head head = Head::kSoftmaxKL;
  std::size_t num_classes = 0;
  LinearModel classifier;
  LinearModel regressor;

  std::vector<double> probabilities(std::span<const double> x) const {
    const auto z = classifier.apply(x);
    return head == Head::kSoftmaxKL ? softmax(z) : sigmoid(z);
  }
};

struct TracePoint {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double clean_accuracy = 0.0;
  double mean_u_clean = 0.0;
  double mean_u_noisy = 0.0;
};

struct TrainResult {
  TrainedModel model;
  std::vector<TracePoint> trace;
};

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

// Per-sample classification target for iteration t.
inline std::vector<double> training_target(const Assignment& a, std::size_t num_classes,
                                           TargetMode mode, std::int64_t t,
                                           const UncertaintyConfig& schedule,
                                           std::optional<double> forced) {
  if (mode == TargetMode::kHard || !a.is_positive) return hard_target(a, num_classes).slots();
  const double u = forced ? *forced : dynamic_uncertainty(a, t, schedule);
  return build_soft_target(a, u, num_classes).slots();
}

// Regression weight 1 - u for positives, using the same u as the target.
inline double regression_certainty(const Assignment& a, TargetMode mode, std::int64_t t,
                                   const UncertaintyConfig& schedule,
                                   std::optional<double> forced) {
  if (mode == TargetMode::kHard) return 1.0;
  const double u = forced ? *forced : dynamic_uncertainty(a, t, schedule);
  return 1.0 - u;
}

namespace detail {

struct Example {
  const ProposalRecord* record;
  std::vector<double> x;
};

inline std::vector<Example> build_examples(std::span<const ProposalRecord* const> records,
                                           const FeatureModel& features) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto* r : records) out.push_back({r, features.features(*r)});
  return out;
}

inline double classification_loss(Head head, std::span<const double> target,
                                  std::span<const double> logits, double gamma) {
  return head == Head::kSoftmaxKL ? kl_from_logits(target, logits)
                                  : soft_focal_from_logits(target, logits, gamma);
}

inline std::vector<double> classification_grad(Head head, std::span<const double> target,
                                               std::span<const double> logits, double gamma) {
  return head == Head::kSoftmaxKL ? kl_from_logits_grad(target, logits)
                                  : soft_focal_from_logits_grad(target, logits, gamma);
}

}  // namespace detail

// Training inputs: sampled proposals of training scenes.
inline std::vector<const ProposalRecord*> training_records(const Dataset& data) {
  std::vector<const ProposalRecord*> out;
  for (const auto& r : data.proposals)
    if (r.split == Split::kTrain && r.sampled) out.push_back(&r);
  return out;
}

// Evaluation inputs: every proposal of held-out scenes.
inline std::vector<const ProposalRecord*> heldout_records(const Dataset& data) {
  std::vector<const ProposalRecord*> out;
  for (const auto& r : data.proposals)
    if (r.split == Split::kHeldout) out.push_back(&r);
  return out;
}

inline double mean_uncertainty(std::span<const detail::Example> examples, bool noisy,
                               std::int64_t t, const UncertaintyConfig& schedule) {
  CompensatedSum acc;
  std::size_t n = 0;
  for (const auto& ex : examples) {
    const auto& r = *ex.record;
    if (!r.assignment.is_positive || r.label_correct() == noisy) continue;
    acc.add(dynamic_uncertainty(r.assignment, t, schedule));
    ++n;
  }
  return n == 0 ? 0.0 : acc.value() / static_cast<double>(n);
}

// Mini-batch SGD on the selected head and targets. Single-threaded and fully
// determined by cfg.seed.
inline TrainResult train(std::span<const ProposalRecord* const> records, std::size_t num_classes,
                         const TrainConfig& cfg) {
  cfg.validate();
  bool any_pos = false, any_neg = false;
  for (const auto* r : records) (r->assignment.is_positive ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg)
    throw std::invalid_argument("train: dataset needs both positive and negative proposals");

  const UncertaintyConfig schedule = cfg.schedule();
  const FeatureModel features(num_classes, cfg.features, cfg.seed);
  const auto examples = detail::build_examples(records, features);
  const std::size_t d = features.dim();
  const std::size_t slots = num_classes + 1;

  TrainResult result;
  TrainedModel& model = result.model;
  model.head = cfg.head;
  model.num_classes = num_classes;
  model.classifier = LinearModel(d, slots);
  model.regressor = LinearModel(d, 4);
  Rng init_rng = make_stream(cfg.seed, "init");
  for (double& w : model.classifier.weights) w = normal(init_rng, 0.0, 0.01);

  Rng batch_rng = make_stream(cfg.seed, "batches");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  auto clean_accuracy = [&] {
    std::size_t correct = 0;
    for (const auto& ex : examples) {
      const auto p = model.probabilities(ex.x);
      correct += argmax(p) == ex.record->true_category.slot(num_classes);
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
  };

  std::vector<double> grad_w(model.classifier.weights.size());
  std::vector<double> grad_b(slots);
  std::vector<double> grad_rw(model.regressor.weights.size());
  std::vector<double> grad_rb(4);

  for (std::int64_t t = 0; t < cfg.iterations; ++t) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    std::fill(grad_rw.begin(), grad_rw.end(), 0.0);
    std::fill(grad_rb.begin(), grad_rb.end(), 0.0);
    CompensatedSum batch_loss;

    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), batch_rng);
        cursor = 0;
      }
      const auto& ex = examples[order[cursor++]];
      const auto& a = ex.record->assignment;

      const auto target =
          training_target(a, num_classes, cfg.targets, t, schedule, cfg.forced_uncertainty);
      const auto logits = model.classifier.apply(ex.x);
      batch_loss.add(detail::classification_loss(cfg.head, target, logits, cfg.gamma));
      const auto g = detail::classification_grad(cfg.head, target, logits, cfg.gamma);
      for (std::size_t o = 0; o < slots; ++o) {
        grad_b[o] += g[o];
        double* row = grad_w.data() + o * d;
        for (std::size_t i = 0; i < d; ++i) row[i] += g[o] * ex.x[i];
      }

      if (a.is_positive && ex.record->pseudo_delta && cfg.regression_weight > 0.0) {
        const double certainty =
            regression_certainty(a, cfg.targets, t, schedule, cfg.forced_uncertainty);
        const auto out = model.regressor.apply(ex.x);
        const BoxDelta pred{out[0], out[1], out[2], out[3]};
        batch_loss.add(cfg.regression_weight *
                       weighted_l1(pred, *ex.record->pseudo_delta, 1.0 - certainty));
        const BoxDelta rg = weighted_l1_grad(pred, *ex.record->pseudo_delta, 1.0 - certainty);
        const double rgs[4] = {rg.dx, rg.dy, rg.dw, rg.dh};
        for (std::size_t o = 0; o < 4; ++o) {
          const double go = cfg.regression_weight * rgs[o];
          grad_rb[o] += go;
          double* row = grad_rw.data() + o * d;
          for (std::size_t i = 0; i < d; ++i) row[i] += go * ex.x[i];
        }
      }
    }

    const double inv = 1.0 / static_cast<double>(cfg.batch_size);
    const double loss = batch_loss.value() * inv;
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("non-finite loss at iteration " + std::to_string(t) +
                             " (learning_rate=" + format_real(cfg.learning_rate) + ")");
    }
    const double step = cfg.learning_rate * inv;
    for (std::size_t i = 0; i < grad_w.size(); ++i) model.classifier.weights[i] -= step * grad_w[i];
    for (std::size_t i = 0; i < slots; ++i) model.classifier.bias[i] -= step * grad_b[i];
    for (std::size_t i = 0; i < grad_rw.size(); ++i) model.regressor.weights[i] -= step * grad_rw[i];
    for (std::size_t i = 0; i < 4; ++i) model.regressor.bias[i] -= step * grad_rb[i];

    if ((t + 1) % cfg.trace_every == 0 || t + 1 == cfg.iterations) {
      result.trace.push_back({t + 1, loss, clean_accuracy(),
                              mean_uncertainty(examples, false, t, schedule),
                              mean_uncertainty(examples, true, t, schedule)});
    }
  }
  return result;
}

inline TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  const auto records = training_records(data);
  return train(records, data.num_classes, cfg);
}

struct EvalReport {
  std::size_t count = 0;
  double clean_accuracy = 0.0;
  // Indexed by slot; background last. Absent when the slot never occurs.
  std::vector<std::optional<double>> per_class_accuracy;
  // Mean predicted background probability over positives whose assigned
  // category is wrong. Absent when there are none.
  std::optional<double> noisy_positive_background_mass;
  // Mean L1 between predicted and clean box deltas on true foreground.
  std::optional<double> regression_l1;
};

// Metrics for an arbitrary predictor of (K+1)-slot probabilities. The
// predictor may also return box deltas for the regression metric.
using ProbabilityPredictor = std::function<std::vector<double>(const ProposalRecord&)>;
using DeltaPredictor = std::function<BoxDelta(const ProposalRecord&)>;

inline EvalReport evaluate_predictor(std::span<const ProposalRecord* const> heldout,
                                     std::size_t num_classes, const ProbabilityPredictor& predict,
                                     const DeltaPredictor& regress = {}) {
  if (heldout.empty()) throw std::invalid_argument("evaluate: empty held-out set");
  const std::size_t slots = num_classes + 1;
  std::vector<std::size_t> seen(slots, 0), hit(slots, 0);
  std::size_t correct = 0;
  CompensatedSum bg_mass, reg_err;
  std::size_t n_noisy = 0, n_reg = 0;
  for (const auto* r : heldout) {
    const auto probs = predict(*r);
    if (probs.size() != slots) throw std::invalid_argument("evaluate: predictor width mismatch");
    const std::size_t truth = r->true_category.slot(num_classes);
    const bool ok = argmax(probs) == truth;
    correct += ok;
    ++seen[truth];
    hit[truth] += ok;
    if (r->assignment.is_positive && !r->label_correct()) {
      bg_mass.add(probs[num_classes]);
      ++n_noisy;
    }
    if (regress && r->clean_delta) {
      reg_err.add(l1_distance(regress(*r), *r->clean_delta));
      ++n_reg;
    }
  }
  EvalReport rep;
  rep.count = heldout.size();
  rep.clean_accuracy = static_cast<double>(correct) / static_cast<double>(heldout.size());
  rep.per_class_accuracy.resize(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    if (seen[s] > 0) rep.per_class_accuracy[s] = static_cast<double>(hit[s]) / static_cast<double>(seen[s]);
  }
  if (n_noisy > 0) rep.noisy_positive_background_mass = bg_mass.value() / static_cast<double>(n_noisy);
  if (n_reg > 0) rep.regression_l1 = reg_err.value() / static_cast<double>(n_reg);
  return rep;
}

inline EvalReport evaluate(const TrainedModel& model, const FeatureModel& features,
                           std::span<const ProposalRecord* const> heldout) {
  return evaluate_predictor(
      heldout, model.num_classes,
      [&](const ProposalRecord& r) { return model.probabilities(features.features(r)); },
      [&](const ProposalRecord& r) {
        const auto out = model.regressor.apply(features.features(r));
        return BoxDelta{out[0], out[1], out[2], out[3]};
      });
}

}  // namespace nrssl
