#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrssl/assignment.hpp"
#include "nrssl/noise_sim.hpp"
#include "nrssl/random.hpp"

namespace nrssl {

enum class Split { kTrain, kHeldout };

inline std::string to_string(Split s) { return s == Split::kTrain ? "train" : "heldout"; }

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "heldout") return Split::kHeldout;
  throw std::invalid_argument("unknown split '" + s + "'");
}

struct SamplingParams {
  std::size_t per_scene = 64;
  double positive_fraction = 0.25;

  void validate() const {
    if (per_scene < 1) throw std::invalid_argument("sampling: per_scene must be >= 1");
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
      throw std::invalid_argument("sampling: positive_fraction must lie in [0, 1]");
  }
};

struct DistillParams {
  // Detector passes averaged into each pseudo label. One pass means labels
  // come straight from a single corruption.
  std::size_t passes = 6;
  double iou_match = 0.5;

  void validate() const {
    if (passes < 1) throw std::invalid_argument("distill: passes must be >= 1");
    if (!(iou_match > 0.0 && iou_match < 1.0))
      throw std::invalid_argument("distill: iou_match must lie in (0, 1)");
  }
};

struct SimulationConfig {
  std::uint64_t seed = 42;
  std::size_t train_scenes = 200;
  std::size_t heldout_scenes = 50;
  double lower_bound = 0.5;
  SceneParams scene;
  NoiseSpec noise;
  ProposalParams proposals;
  SamplingParams sampling;
  DistillParams distill;

  void validate() const {
    scene.validate();
    noise.validate();
    proposals.validate();
    sampling.validate();
    distill.validate();
    if (!(lower_bound > 0.0 && lower_bound < 1.0))
      throw std::invalid_argument("simulation: lower_bound must lie in (0, 1)");
  }
};

struct SceneRecord {
  std::uint64_t scene_id;
  Split split;
  Scene scene;
};

struct PseudoLabelRecord {
  std::uint64_t scene_id;
  LabelRecord label;
};

struct ProposalRecord {
  std::uint64_t scene_id;
  std::uint64_t proposal_id;
  Split split;
  bool sampled = false;
  BBox box;
  Category true_category;
  Assignment assignment;
  // Regression targets toward the matched pseudo box and the true object.
  std::optional<BoxDelta> pseudo_delta;
  std::optional<BoxDelta> clean_delta;

  bool label_correct() const { return assignment.assigned_category == true_category; }
};

struct Dataset {
  std::size_t num_classes = 0;
  std::vector<SceneRecord> scenes;
  std::vector<PseudoLabelRecord> labels;
  std::vector<ProposalRecord> proposals;
};

struct SceneSimulation {
  Scene scene;
  std::vector<LabelRecord> labels;
  std::vector<Proposal> proposals;
  std::vector<Assignment> assignments;
  std::vector<bool> sampled;
};

// One scene from its own derived streams, so scenes are independent of each
// other and of generation order.
inline SceneSimulation simulate_scene(const SimulationConfig& cfg, std::uint64_t scene_id) {
  SceneSimulation out;
  Rng scene_rng = make_stream(cfg.seed, "scene", scene_id);
  out.scene = generate_scene(scene_rng, cfg.scene);

  const std::size_t k = cfg.scene.num_classes;
  Rng decision_rng = make_stream(cfg.seed, "noise", scene_id);
  Rng jitter_rng = make_stream(cfg.seed, "jitter", scene_id);
  auto passes = corrupt_passes(out.scene, cfg.noise, k, cfg.distill.passes, decision_rng, jitter_rng);
  if (passes.size() == 1) {
    out.labels = std::move(passes.front());
  } else {
    std::vector<std::vector<PseudoLabel>> detections;
    for (const auto& pass : passes) detections.push_back(labels_of(pass));
    for (const auto& label : distill(detections, cfg.distill.iou_match)) {
      out.labels.push_back(
          provenance_by_matching(label, out.scene, cfg.noise.score.jitter_flag_iou));
    }
  }

  Rng proposal_rng = make_stream(cfg.seed, "proposals", scene_id);
  out.proposals = generate_proposals(out.scene, proposal_rng, cfg.proposals, cfg.lower_bound);

  const auto pseudo = labels_of(out.labels);
  out.assignments.reserve(out.proposals.size());
  for (const auto& p : out.proposals) out.assignments.push_back(assign(p, pseudo, cfg.lower_bound));

  Rng sample_rng = make_stream(cfg.seed, "sampling", scene_id);
  out.sampled.assign(out.proposals.size(), false);
  for (std::size_t i :
       sample_proposal_indices(pseudo, out.proposals, cfg.sampling.per_scene,
                               cfg.sampling.positive_fraction, cfg.lower_bound, sample_rng)) {
    out.sampled[i] = true;
  }
  return out;
}

inline Dataset simulate_dataset(const SimulationConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.num_classes = cfg.scene.num_classes;
  const std::size_t total = cfg.train_scenes + cfg.heldout_scenes;
  std::uint64_t next_proposal = 0;
  for (std::uint64_t id = 0; id < total; ++id) {
    const Split split = id < cfg.train_scenes ? Split::kTrain : Split::kHeldout;
    SceneSimulation sim = simulate_scene(cfg, id);
    const auto truth = ground_truth_labels(sim.scene);
    for (std::size_t i = 0; i < sim.proposals.size(); ++i) {
      const auto& prop = sim.proposals[i];
      ProposalRecord rec{id, next_proposal++, split, sim.sampled[i], prop.box,
                         prop.true_category.value_or(Category::background()), sim.assignments[i],
                         std::nullopt, std::nullopt};
      if (rec.assignment.is_positive) {
        rec.pseudo_delta = encode_delta(prop.box, sim.labels[*rec.assignment.matched_index].label.box);
      }
      if (!rec.true_category.is_background()) {
        const auto clean = assign(prop.box, truth, cfg.lower_bound);
        rec.clean_delta = encode_delta(prop.box, truth[*clean.matched_index].box);
      }
      data.proposals.push_back(std::move(rec));
    }
    for (auto& label : sim.labels) data.labels.push_back({id, label});
    data.scenes.push_back({id, split, std::move(sim.scene)});
  }
  return data;
}

}  // namespace nrssl
