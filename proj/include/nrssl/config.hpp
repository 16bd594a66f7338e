#pragma once

// Run configuration as a single JSON document.
//
// Precedence, lowest first: built-in defaults, the config file, `--seed`,
// then each `--override key=value` in command-line order. Keys are dotted
// paths into the document, e.g. `noise.p_flip=0.2` or `train.head="softmax-kl"`.
// Override values are parsed as JSON and fall back to a plain string.
//
// A config file must name `seed`; every other key is optional. Keys that do
// not exist in the defaults are rejected.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "nrssl/analysis.hpp"
#include "nrssl/dataset.hpp"
#include "nrssl/random.hpp"
#include "nrssl/toy_trainer.hpp"
#include "nrssl/uncertainty.hpp"

namespace nrssl {

using json = nlohmann::json;

inline constexpr const char* kArtifactVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AnalysisParams {
  std::size_t iou_bins = 10;
  std::size_t u_bins = 20;
  // Stage points as fractions of the schedule length.
  double early = 0.05;
  double middle = 0.5;
  double late = 0.95;

  void validate() const {
    if (iou_bins < 2) throw std::invalid_argument("analysis: iou_bins must be >= 2");
    if (u_bins < 1) throw std::invalid_argument("analysis: u_bins must be >= 1");
    if (!(0.0 <= early && early <= middle && middle <= late && late <= 1.0))
      throw std::invalid_argument("analysis: require 0 <= early <= middle <= late <= 1");
  }
};

struct CompareParams {
  std::size_t seeds = 5;

  void validate() const {
    if (seeds < 1) throw std::invalid_argument("compare: seeds must be >= 1");
  }
};

struct RunConfig {
  std::uint64_t seed = 42;
  SimulationConfig simulation;
  UncertaintyConfig uncertainty;
  TrainConfig train;
  AnalysisParams analysis;
  CompareParams compare;

  // The simulator's positive threshold is the uncertainty lower bound, and the
  // schedule length follows the training iteration count.
  SimulationConfig simulation_config() const {
    SimulationConfig s = simulation;
    s.seed = seed;
    s.lower_bound = uncertainty.lower_bound;
    return s;
  }

  TrainConfig train_config(std::uint64_t run_index = 0) const {
    TrainConfig t = train;
    t.uncertainty = uncertainty;
    t.seed = derive_seed(seed, "train", run_index);
    return t;
  }

  UncertaintyConfig schedule() const { return train_config().schedule(); }

  StageIterations stages() const {
    const double total = static_cast<double>(train.iterations);
    auto at = [total](double f) { return static_cast<std::int64_t>(std::llround(f * total)); };
    return {at(analysis.early), at(analysis.middle), at(analysis.late)};
  }

  void validate() const {
    try {
      simulation_config().validate();
      train_config().validate();
      analysis.validate();
      compare.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  const auto& s = c.simulation;
  const auto& u = c.uncertainty;
  const auto& t = c.train;
  return {
      {"seed", c.seed},
      {"simulation",
       {{"train_scenes", s.train_scenes}, {"heldout_scenes", s.heldout_scenes}}},
      {"scene",
       {{"width", s.scene.width},
        {"height", s.scene.height},
        {"min_objects", s.scene.min_objects},
        {"max_objects", s.scene.max_objects},
        {"min_size", s.scene.min_size},
        {"max_size", s.scene.max_size},
        {"num_classes", s.scene.num_classes}}},
      {"noise",
       {{"p_miss", s.noise.p_miss},
        {"p_flip", s.noise.p_flip},
        {"loc_sigma", s.noise.loc_sigma},
        {"score",
         {{"clean_a", s.noise.score.clean_a},
          {"clean_b", s.noise.score.clean_b},
          {"noisy_a", s.noise.score.noisy_a},
          {"noisy_b", s.noise.score.noisy_b},
          {"jitter_flag_iou", s.noise.score.jitter_flag_iou}}}}},
      {"proposals",
       {{"count", s.proposals.count},
        {"object_fraction", s.proposals.object_fraction},
        {"min_target_iou", s.proposals.min_target_iou},
        {"max_target_iou", s.proposals.max_target_iou},
        {"iou_skew", s.proposals.iou_skew},
        {"background_max_iou", s.proposals.background_max_iou},
        {"min_size", s.proposals.min_size},
        {"max_size", s.proposals.max_size}}},
      {"sampling",
       {{"per_scene", s.sampling.per_scene}, {"positive_fraction", s.sampling.positive_fraction}}},
      {"distill", {{"passes", s.distill.passes}, {"iou_match", s.distill.iou_match}}},
      {"uncertainty",
       {{"lower_bound", u.lower_bound},
        {"upper_bound", u.upper_bound},
        {"late_upper_bound", detail::opt_json(u.late_upper_bound)},
        {"switch_iteration", detail::opt_json(u.switch_iteration)},
        {"sharpness", u.sharpness},
        {"schedule_exponent", u.schedule_exponent}}},
      {"train",
       {{"head", to_string(t.head)},
        {"targets", to_string(t.targets)},
        {"iterations", t.iterations},
        {"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"gamma", t.gamma},
        {"regression_weight", t.regression_weight},
        {"trace_every", t.trace_every},
        {"forced_uncertainty", detail::opt_json(t.forced_uncertainty)},
        {"features",
         {{"dim", t.features.dim},
          {"prototype_scale", t.features.prototype_scale},
          {"noise", t.features.noise},
          {"delta_gain", t.features.delta_gain}}}}},
      {"analysis",
       {{"iou_bins", c.analysis.iou_bins},
        {"u_bins", c.analysis.u_bins},
        {"early", c.analysis.early},
        {"middle", c.analysis.middle},
        {"late", c.analysis.late}}},
      {"compare", {{"seeds", c.compare.seeds}}},
  };
}

namespace detail {

// Keys of `doc` absent from `schema`, as dotted paths.
inline void unknown_keys(const json& doc, const json& schema, const std::string& prefix,
                         std::vector<std::string>& out) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) {
      out.push_back(path);
    } else if (schema[it.key()].is_object()) {
      if (!it.value().is_object()) throw ConfigError("'" + path + "' must be an object");
      unknown_keys(it.value(), schema[it.key()], path, out);
    }
  }
}

// Unlike a JSON merge patch, null is stored rather than deleting the key.
inline void deep_merge(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {}

  template <typename T>
  void get(const std::string& path, T& out) const {
    const json& v = at(path);
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && v.get<std::int64_t>() < 0)
          throw ConfigError("'" + path + "' must be non-negative");
        if (!v.is_number_integer()) throw ConfigError("'" + path + "' must be an integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("'" + path + "' must be an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("'" + path + "' must be a number");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("'" + path + "': " + e.what());
    }
  }

  template <typename T>
  void get(const std::string& path, std::optional<T>& out) const {
    if (at(path).is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(path, v);
    out = v;
  }

 private:
  const json& at(const std::string& path) const {
    const json* node = &doc_;
    std::string_view rest = path;
    while (!rest.empty()) {
      const auto dot = rest.find('.');
      const std::string key(rest.substr(0, dot));
      if (!node->is_object() || !node->contains(key))
        throw ConfigError("missing field '" + path + "'");
      node = &(*node)[key];
      rest = dot == std::string_view::npos ? std::string_view{} : rest.substr(dot + 1);
    }
    return *node;
  }

  const json& doc_;
};

}  // namespace detail

// Builds a config from a full document, i.e. one already merged over defaults.
inline RunConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::string> unknown;
  detail::unknown_keys(doc, to_json(RunConfig{}), "", unknown);
  if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");

  const detail::Reader r(doc);
  RunConfig c;
  auto& s = c.simulation;
  auto& u = c.uncertainty;
  auto& t = c.train;
  r.get("seed", c.seed);
  r.get("simulation.train_scenes", s.train_scenes);
  r.get("simulation.heldout_scenes", s.heldout_scenes);
  r.get("scene.width", s.scene.width);
  r.get("scene.height", s.scene.height);
  r.get("scene.min_objects", s.scene.min_objects);
  r.get("scene.max_objects", s.scene.max_objects);
  r.get("scene.min_size", s.scene.min_size);
  r.get("scene.max_size", s.scene.max_size);
  r.get("scene.num_classes", s.scene.num_classes);
  r.get("noise.p_miss", s.noise.p_miss);
  r.get("noise.p_flip", s.noise.p_flip);
  r.get("noise.loc_sigma", s.noise.loc_sigma);
  r.get("noise.score.clean_a", s.noise.score.clean_a);
  r.get("noise.score.clean_b", s.noise.score.clean_b);
  r.get("noise.score.noisy_a", s.noise.score.noisy_a);
  r.get("noise.score.noisy_b", s.noise.score.noisy_b);
  r.get("noise.score.jitter_flag_iou", s.noise.score.jitter_flag_iou);
  r.get("proposals.count", s.proposals.count);
  r.get("proposals.object_fraction", s.proposals.object_fraction);
  r.get("proposals.min_target_iou", s.proposals.min_target_iou);
  r.get("proposals.max_target_iou", s.proposals.max_target_iou);
  r.get("proposals.iou_skew", s.proposals.iou_skew);
  r.get("proposals.background_max_iou", s.proposals.background_max_iou);
  r.get("proposals.min_size", s.proposals.min_size);
  r.get("proposals.max_size", s.proposals.max_size);
  r.get("sampling.per_scene", s.sampling.per_scene);
  r.get("sampling.positive_fraction", s.sampling.positive_fraction);
  r.get("distill.passes", s.distill.passes);
  r.get("distill.iou_match", s.distill.iou_match);
  r.get("uncertainty.lower_bound", u.lower_bound);
  r.get("uncertainty.upper_bound", u.upper_bound);
  r.get("uncertainty.late_upper_bound", u.late_upper_bound);
  r.get("uncertainty.switch_iteration", u.switch_iteration);
  r.get("uncertainty.sharpness", u.sharpness);
  r.get("uncertainty.schedule_exponent", u.schedule_exponent);
  std::string head, targets;
  r.get("train.head", head);
  r.get("train.targets", targets);
  try {
    t.head = head_from_string(head);
    t.targets = target_mode_from_string(targets);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  r.get("train.iterations", t.iterations);
  r.get("train.learning_rate", t.learning_rate);
  r.get("train.batch_size", t.batch_size);
  r.get("train.gamma", t.gamma);
  r.get("train.regression_weight", t.regression_weight);
  r.get("train.trace_every", t.trace_every);
  r.get("train.forced_uncertainty", t.forced_uncertainty);
  r.get("train.features.dim", t.features.dim);
  r.get("train.features.prototype_scale", t.features.prototype_scale);
  r.get("train.features.noise", t.features.noise);
  r.get("train.features.delta_gain", t.features.delta_gain);
  r.get("analysis.iou_bins", c.analysis.iou_bins);
  r.get("analysis.u_bins", c.analysis.u_bins);
  r.get("analysis.early", c.analysis.early);
  r.get("analysis.middle", c.analysis.middle);
  r.get("analysis.late", c.analysis.late);
  r.get("compare.seeds", c.compare.seeds);
  c.validate();
  return c;
}

inline constexpr const char* kRequiredKeys[] = {"seed"};

// Merges a user document over the defaults. Fields the user must state are
// checked before merging so the error names them.
inline json merge_over_defaults(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  for (const char* key : kRequiredKeys)
    if (!user.contains(key)) throw ConfigError(std::string("missing required field '") + key + "'");
  std::vector<std::string> unknown;
  json merged = to_json(RunConfig{});
  detail::unknown_keys(user, merged, "", unknown);
  if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");
  detail::deep_merge(merged, user);
  return merged;
}

inline json parse_config_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return merge_over_defaults(parse_config_text(buf.str(), path.string()));
}

// Applies one `key=value` override to a merged document.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::string_view rest = key;
  const json defaults = to_json(RunConfig{});
  const json* schema = &defaults;
  while (true) {
    const auto dot = rest.find('.');
    const std::string part(rest.substr(0, dot));
    if (!schema->is_object() || !schema->contains(part))
      throw ConfigError("unknown config key '" + key + "'");
    schema = &(*schema)[part];
    if (dot == std::string_view::npos) {
      if (schema->is_object()) throw ConfigError("override '" + key + "' names a section");
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    rest = rest.substr(dot + 1);
  }
}

inline std::string canonical_dump(const RunConfig& c) { return to_json(c).dump(); }

inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a64(canonical_dump(c)); }

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline json make_manifest(const RunConfig& c, const std::string& command,
                          const std::vector<std::string>& artifacts) {
  return {{"command", command},
          {"version", kArtifactVersion},
          {"seed", c.seed},
          {"config_hash", hex64(config_hash(c))},
          {"config", to_json(c)},
          {"artifacts", artifacts}};
}

}  // namespace nrssl
