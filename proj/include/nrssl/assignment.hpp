#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "nrssl/geometry.hpp"
#include "nrssl/random.hpp"

namespace nrssl {

// A foreground class index in [0, K) or the background sentinel. Background
// occupies slot K of a (K+1)-wide probability vector, so foreground indices
// line up with pseudo-label categories.
class Category {
 public:
  constexpr Category() = default;
  constexpr explicit Category(int index) : index_(index) {
    if (index < 0) throw std::invalid_argument("negative class index");
  }
  static constexpr Category background() { return Category(kBackground, 0); }

  constexpr bool is_background() const { return index_ == kBackground; }
  constexpr int index() const {
    if (is_background()) throw std::logic_error("background has no class index");
    return index_;
  }
  // Position in a (K+1)-slot vector.
  constexpr std::size_t slot(std::size_t num_classes) const {
    return is_background() ? num_classes : static_cast<std::size_t>(index_);
  }
  constexpr bool valid_for(std::size_t num_classes) const {
    return is_background() || static_cast<std::size_t>(index_) < num_classes;
  }

  friend constexpr bool operator==(Category, Category) = default;

 private:
  static constexpr int kBackground = -1;
  constexpr Category(int raw, int) : index_(raw) {}
  int index_ = kBackground;
};

struct PseudoLabel {
  BBox box;
  int category;
  double score;
};

inline void validate(const PseudoLabel& label, std::size_t num_classes) {
  if (!(label.score >= 0.0 && label.score <= 1.0))
    throw std::invalid_argument("pseudo label score must lie in [0, 1]");
  if (label.category < 0 || static_cast<std::size_t>(label.category) >= num_classes)
    throw std::invalid_argument("pseudo label category out of range");
}

struct Proposal {
  BBox box;
  // Simulation ground truth; never shown to the learner.
  std::optional<Category> true_category;
};

struct Assignment {
  double max_iou = 0.0;
  std::optional<std::size_t> matched_index;
  Category assigned_category = Category::background();
  std::optional<double> matched_score;
  bool is_positive = false;
};

// Max-IoU assignment. Strictly greater than the lower bound counts as
// positive; equal maxima resolve to the lowest label index.
inline Assignment assign(const BBox& proposal, std::span<const PseudoLabel> labels,
                         double lower_bound) {
  Assignment out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double overlap = iou(proposal, labels[i].box);
    if (!best || overlap > out.max_iou) {
      best = i;
      out.max_iou = overlap;
    }
  }
  if (best && out.max_iou > lower_bound) {
    out.is_positive = true;
    out.matched_index = best;
    out.assigned_category = Category(labels[*best].category);
    out.matched_score = labels[*best].score;
  }
  return out;
}

inline Assignment assign(const Proposal& proposal, std::span<const PseudoLabel> labels,
                         double lower_bound) {
  return assign(proposal.box, labels, lower_bound);
}

// Stratified random sampling of proposals. Positives are capped at
// ceil(positive_fraction * n_total); a short stratum is back-filled from the
// other one. Selected proposals keep their input order.
inline std::vector<std::size_t> sample_proposal_indices(
    std::span<const PseudoLabel> labels, std::span<const Proposal> all,
    std::size_t n_total, double positive_fraction, double lower_bound, Rng& rng) {
  if (positive_fraction < 0.0 || positive_fraction > 1.0)
    throw std::invalid_argument("positive_fraction must lie in [0, 1]");
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < all.size(); ++i) {
    (assign(all[i], labels, lower_bound).is_positive ? positives : negatives).push_back(i);
  }
  std::shuffle(positives.begin(), positives.end(), rng);
  std::shuffle(negatives.begin(), negatives.end(), rng);

  const auto pos_cap = static_cast<std::size_t>(
      std::ceil(positive_fraction * static_cast<double>(n_total)));
  std::size_t n_pos = std::min(positives.size(), std::min(pos_cap, n_total));
  std::size_t n_neg = std::min(negatives.size(), n_total - n_pos);
  // Back-fill positives when negatives run short.
  n_pos = std::min(positives.size(), n_total - n_neg);

  std::vector<std::size_t> chosen(positives.begin(), positives.begin() + n_pos);
  chosen.insert(chosen.end(), negatives.begin(), negatives.begin() + n_neg);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline std::vector<Proposal> sample_proposals(std::span<const PseudoLabel> labels,
                                              std::span<const Proposal> all,
                                              std::size_t n_total, double positive_fraction,
                                              double lower_bound, Rng& rng) {
  std::vector<Proposal> out;
  for (std::size_t i :
       sample_proposal_indices(labels, all, n_total, positive_fraction, lower_bound, rng)) {
    out.push_back(all[i]);
  }
  return out;
}

}  // namespace nrssl
