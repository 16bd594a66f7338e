#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "nrssl/assignment.hpp"
#include "nrssl/geometry.hpp"
#include "nrssl/random.hpp"

namespace nrssl {

struct SceneParams {
  double width = 640.0;
  double height = 480.0;
  int min_objects = 2;
  int max_objects = 6;
  double min_size = 48.0;
  double max_size = 192.0;
  std::size_t num_classes = 10;

  void validate() const {
    if (!(width > 0.0 && height > 0.0)) throw std::invalid_argument("scene: extent must be positive");
    if (min_objects < 0 || max_objects < min_objects)
      throw std::invalid_argument("scene: require 0 <= min_objects <= max_objects");
    if (!(min_size > 0.0 && max_size >= min_size && max_size <= std::min(width, height)))
      throw std::invalid_argument("scene: require 0 < min_size <= max_size <= extent");
    if (num_classes < 1) throw std::invalid_argument("scene: num_classes must be >= 1");
  }
};

struct SceneObject {
  BBox box;
  int category;
};

struct Scene {
  double width = 0.0;
  double height = 0.0;
  std::vector<SceneObject> objects;
};

// Clean annotations as perfectly confident pseudo labels.
inline std::vector<PseudoLabel> ground_truth_labels(const Scene& scene) {
  std::vector<PseudoLabel> out;
  out.reserve(scene.objects.size());
  for (const auto& obj : scene.objects) out.push_back({obj.box, obj.category, 1.0});
  return out;
}

inline Scene generate_scene(Rng& rng, const SceneParams& params) {
  params.validate();
  Scene scene{params.width, params.height, {}};
  const int count = std::uniform_int_distribution<int>(params.min_objects, params.max_objects)(rng);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(params.num_classes) - 1);
  for (int i = 0; i < count; ++i) {
    const double w = uniform(rng, params.min_size, params.max_size);
    const double h = uniform(rng, params.min_size, params.max_size);
    const double x = uniform(rng, 0.0, params.width - w);
    const double y = uniform(rng, 0.0, params.height - h);
    scene.objects.push_back({BBox(x, y, x + w, y + h), cls(rng)});
  }
  return scene;
}

// Maps corruption to the emitted confidence score. Labels that were flipped,
// or whose box lost more overlap with the true object than
// `jitter_flag_iou`, draw from the noisy Beta.
struct ScoreModel {
  double clean_a = 8.0;
  double clean_b = 2.0;
  double noisy_a = 3.0;
  double noisy_b = 3.0;
  double jitter_flag_iou = 0.7;

  void validate() const {
    if (!(clean_a > 0 && clean_b > 0 && noisy_a > 0 && noisy_b > 0))
      throw std::invalid_argument("score model: Beta parameters must be positive");
    if (!(jitter_flag_iou >= 0.0 && jitter_flag_iou <= 1.0))
      throw std::invalid_argument("score model: jitter_flag_iou must lie in [0, 1]");
  }
};

struct NoiseSpec {
  double p_miss = 0.1;
  double p_flip = 0.3;
  // Corner jitter std as a fraction of box width/height.
  double loc_sigma = 0.1;
  ScoreModel score;

  void validate() const {
    if (!(p_miss >= 0.0 && p_miss <= 1.0)) throw std::invalid_argument("noise: p_miss must lie in [0, 1]");
    if (!(p_flip >= 0.0 && p_flip <= 1.0)) throw std::invalid_argument("noise: p_flip must lie in [0, 1]");
    if (!(loc_sigma >= 0.0)) throw std::invalid_argument("noise: loc_sigma must be >= 0");
    score.validate();
  }
};

// A pseudo label together with how the simulator produced it.
struct LabelRecord {
  PseudoLabel label;
  std::size_t source_object;
  bool flipped = false;
  bool jittered = false;

  bool clean() const { return !flipped && !jittered; }
};

inline std::vector<PseudoLabel> labels_of(std::span<const LabelRecord> records) {
  std::vector<PseudoLabel> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

namespace detail {

// Per-corner Gaussian jitter, truncated by rejection to valid in-extent boxes.
inline BBox jitter_box(const BBox& box, double sigma, double width, double height, Rng& rng) {
  if (sigma <= 0.0) return box;
  const double sx = sigma * box.width();
  const double sy = sigma * box.height();
  constexpr int kMaxTries = 64;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    const double x1 = box.x1() + normal(rng, 0.0, sx);
    const double y1 = box.y1() + normal(rng, 0.0, sy);
    const double x2 = box.x2() + normal(rng, 0.0, sx);
    const double y2 = box.y2() + normal(rng, 0.0, sy);
    if (x1 >= 0.0 && y1 >= 0.0 && x2 <= width && y2 <= height && x2 - x1 >= 1.0 &&
        y2 - y1 >= 1.0) {
      return {x1, y1, x2, y2};
    }
  }
  return box;
}

inline int flip_category(int category, std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) return category;
  int other = std::uniform_int_distribution<int>(0, static_cast<int>(num_classes) - 2)(rng);
  if (other >= category) ++other;
  return other;
}

}  // namespace detail

// Drops, flips and jitters the scene's objects into pseudo labels, once per
// detection pass. Miss, flip and score draws are per object and shared by all
// passes (the same detector sees the same object); box jitter is drawn
// independently for every pass. Every object consumes the same random draws
// regardless of outcome.
inline std::vector<std::vector<LabelRecord>> corrupt_passes(const Scene& scene,
                                                            const NoiseSpec& spec,
                                                            std::size_t num_classes,
                                                            std::size_t passes, Rng& decisions,
                                                            Rng& jitter) {
  spec.validate();
  if (passes < 1) throw std::invalid_argument("corrupt: passes must be >= 1");
  struct Decision {
    bool missed;
    bool flipped;
    int category;
    double clean_score;
    double noisy_score;
  };
  std::vector<Decision> plan;
  plan.reserve(scene.objects.size());
  for (const auto& obj : scene.objects) {
    Decision d{};
    d.missed = bernoulli(decisions, spec.p_miss);
    d.flipped = num_classes > 1 && bernoulli(decisions, spec.p_flip);
    const int flipped_to = detail::flip_category(obj.category, num_classes, decisions);
    d.category = d.flipped ? flipped_to : obj.category;
    d.clean_score = beta_variate(decisions, spec.score.clean_a, spec.score.clean_b);
    d.noisy_score = beta_variate(decisions, spec.score.noisy_a, spec.score.noisy_b);
    plan.push_back(d);
  }
  std::vector<std::vector<LabelRecord>> out(passes);
  for (std::size_t p = 0; p < passes; ++p) {
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      const auto& obj = scene.objects[i];
      const auto& d = plan[i];
      const BBox box = detail::jitter_box(obj.box, spec.loc_sigma, scene.width, scene.height, jitter);
      if (d.missed) continue;
      LabelRecord rec{{box, d.category, 0.0}, i, d.flipped,
                      iou(box, obj.box) < spec.score.jitter_flag_iou};
      rec.label.score = rec.clean() ? d.clean_score : d.noisy_score;
      out[p].push_back(rec);
    }
  }
  return out;
}

// Single detection pass.
inline std::vector<LabelRecord> corrupt(const Scene& scene, const NoiseSpec& spec,
                                        std::size_t num_classes, Rng& rng) {
  return std::move(corrupt_passes(scene, spec, num_classes, 1, rng, rng).front());
}

struct ProposalParams {
  std::size_t count = 250;
  // Share of proposals placed around objects; the rest are background boxes.
  double object_fraction = 0.4;
  double min_target_iou = 0.05;
  double max_target_iou = 1.0;
  // Target IoU = min + (max - min) * U^iou_skew; values above 1 favour loose
  // proposals, as a region proposal network does.
  double iou_skew = 1.0;
  double background_max_iou = 0.3;
  double min_size = 16.0;
  double max_size = 256.0;

  void validate() const {
    if (!(object_fraction >= 0.0 && object_fraction <= 1.0))
      throw std::invalid_argument("proposals: object_fraction must lie in [0, 1]");
    if (!(min_target_iou > 0.0 && min_target_iou <= max_target_iou && max_target_iou <= 1.0))
      throw std::invalid_argument("proposals: require 0 < min_target_iou <= max_target_iou <= 1");
    if (!(iou_skew > 0.0)) throw std::invalid_argument("proposals: iou_skew must be > 0");
    if (!(background_max_iou >= 0.0 && background_max_iou < 1.0))
      throw std::invalid_argument("proposals: background_max_iou must lie in [0, 1)");
    if (!(min_size > 0.0 && max_size >= min_size))
      throw std::invalid_argument("proposals: require 0 < min_size <= max_size");
  }
};

namespace detail {

// Same-size box shifted so that its IoU with `box` equals `target` (before
// clipping to the extent). With relative shifts fx, fy the overlap fraction
// (1-fx)(1-fy) must equal 2*target/(1+target).
inline BBox shifted_to_iou(const BBox& box, double target, Rng& rng) {
  const double keep = 2.0 * target / (1.0 + target);
  const double fx = uniform(rng, 0.0, 1.0 - keep);
  const double fy = 1.0 - keep / (1.0 - fx);
  const double dx = (bernoulli(rng, 0.5) ? 1.0 : -1.0) * fx * box.width();
  const double dy = (bernoulli(rng, 0.5) ? 1.0 : -1.0) * fy * box.height();
  return box.translated(dx, dy);
}

inline std::optional<BBox> clip_box(const BBox& b, double width, double height) {
  const double x1 = std::max(0.0, b.x1());
  const double y1 = std::max(0.0, b.y1());
  const double x2 = std::min(width, b.x2());
  const double y2 = std::min(height, b.y2());
  if (x2 - x1 < 1.0 || y2 - y1 < 1.0) return std::nullopt;
  return BBox(x1, y1, x2, y2);
}

inline double max_iou_against(const BBox& b, const Scene& scene) {
  double best = 0.0;
  for (const auto& obj : scene.objects) best = std::max(best, iou(b, obj.box));
  return best;
}

}  // namespace detail

// Mixture of object-centred proposals spread over the IoU spectrum and
// background boxes. Each proposal is labelled with its category against the
// clean annotations at `lower_bound`.
inline std::vector<Proposal> generate_proposals(const Scene& scene, Rng& rng,
                                                const ProposalParams& params,
                                                double lower_bound) {
  params.validate();
  if (!(scene.width > 0.0 && scene.height > 0.0))
    throw std::invalid_argument("proposals: scene extent must be positive");
  const auto truth = ground_truth_labels(scene);
  std::vector<Proposal> out;
  out.reserve(params.count);
  constexpr int kMaxTries = 256;
  while (out.size() < params.count) {
    std::optional<BBox> box;
    const bool near_object = !scene.objects.empty() && bernoulli(rng, params.object_fraction);
    for (int attempt = 0; attempt < kMaxTries && !box; ++attempt) {
      if (near_object) {
        const auto idx = std::uniform_int_distribution<std::size_t>(0, scene.objects.size() - 1)(rng);
        const double target =
            params.min_target_iou + (params.max_target_iou - params.min_target_iou) *
                                        std::pow(uniform(rng, 0.0, 1.0), params.iou_skew);
        box = target >= 1.0 ? std::optional<BBox>(scene.objects[idx].box)
                            : detail::clip_box(detail::shifted_to_iou(scene.objects[idx].box, target, rng),
                                               scene.width, scene.height);
      } else {
        const double w = uniform(rng, params.min_size, std::min(params.max_size, scene.width));
        const double h = uniform(rng, params.min_size, std::min(params.max_size, scene.height));
        const double x = uniform(rng, 0.0, scene.width - w);
        const double y = uniform(rng, 0.0, scene.height - h);
        BBox candidate(x, y, x + w, y + h);
        if (detail::max_iou_against(candidate, scene) <= params.background_max_iou) box = candidate;
      }
    }
    if (!box) continue;
    const Assignment truth_assignment = assign(*box, truth, lower_bound);
    out.push_back({*box, truth_assignment.assigned_category});
  }
  return out;
}

// Greedy cross-pass clustering of detections: same category and IoU with the
// cluster's running mean box at least `iou_match`, at most one member per
// pass. Each cluster becomes one label with mean corners and mean score.
inline std::vector<PseudoLabel> distill(std::span<const std::vector<PseudoLabel>> passes,
                                        double iou_match) {
  if (passes.empty()) throw std::invalid_argument("distill needs at least one pass");
  if (!(iou_match > 0.0 && iou_match < 1.0))
    throw std::invalid_argument("distill: iou_match must lie in (0, 1)");
  struct Cluster {
    int category;
    double x1, y1, x2, y2, score;
    std::size_t members;
    std::size_t last_pass;
    BBox mean() const { return {x1, y1, x2, y2}; }
  };
  std::vector<Cluster> clusters;
  for (std::size_t p = 0; p < passes.size(); ++p) {
    const std::size_t first_new = clusters.size();
    for (const auto& det : passes[p]) {
      std::optional<std::size_t> best;
      double best_iou = 0.0;
      for (std::size_t c = 0; c < first_new; ++c) {
        const auto& cl = clusters[c];
        if (cl.category != det.category || cl.last_pass == p) continue;
        const double overlap = iou(cl.mean(), det.box);
        if (overlap >= iou_match && (!best || overlap > best_iou)) {
          best = c;
          best_iou = overlap;
        }
      }
      if (!best) {
        clusters.push_back({det.category, det.box.x1(), det.box.y1(), det.box.x2(), det.box.y2(),
                            det.score, 1, p});
        continue;
      }
      auto& cl = clusters[*best];
      ++cl.members;
      const double n = static_cast<double>(cl.members);
      // Incremental means keep identical inputs exact.
      cl.x1 += (det.box.x1() - cl.x1) / n;
      cl.y1 += (det.box.y1() - cl.y1) / n;
      cl.x2 += (det.box.x2() - cl.x2) / n;
      cl.y2 += (det.box.y2() - cl.y2) / n;
      cl.score += (det.score - cl.score) / n;
      cl.last_pass = p;
    }
  }
  std::vector<PseudoLabel> out;
  out.reserve(clusters.size());
  for (const auto& cl : clusters) out.push_back({cl.mean(), cl.category, cl.score});
  return out;
}

// Provenance of an arbitrary label, recovered by matching it to the
// annotation it overlaps most.
inline LabelRecord provenance_by_matching(const PseudoLabel& label, const Scene& scene,
                                          double jitter_flag_iou) {
  LabelRecord rec{label, 0, false, false};
  double best = -1.0;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const double overlap = iou(label.box, scene.objects[i].box);
    if (overlap > best) {
      best = overlap;
      rec.source_object = i;
    }
  }
  if (scene.objects.empty()) {
    rec.flipped = true;
    rec.jittered = true;
    return rec;
  }
  rec.flipped = scene.objects[rec.source_object].category != label.category;
  rec.jittered = best < jitter_flag_iou;
  return rec;
}

}  // namespace nrssl
