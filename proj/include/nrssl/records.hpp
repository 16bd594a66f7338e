#pragma once

// Line-delimited JSON records for scenes, pseudo labels and proposals.
//
//   scenes.jsonl         {"scene_id", "split", "width", "height",
//                         "objects": [{"box": [x1, y1, x2, y2], "category"}]}
//   pseudo_labels.jsonl  {"scene_id", "box", "category", "score",
//                         "source_object", "clean", "flipped", "jittered"}
//   proposals.jsonl      {"scene_id", "proposal_id", "split", "sampled", "box",
//                         "true_category", "max_iou", "is_positive",
//                         "matched_index", "assigned_category", "matched_score",
//                         "pseudo_delta", "clean_delta"}
//
// Background is written as category -1. Absent optionals are null. Box deltas
// are [dx, dy, dw, dh].

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "nrssl/dataset.hpp"

namespace nrssl {

using json = nlohmann::json;

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kScenesFile = "scenes.jsonl";
inline constexpr const char* kLabelsFile = "pseudo_labels.jsonl";
inline constexpr const char* kProposalsFile = "proposals.jsonl";

namespace detail {

inline json box_json(const BBox& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

inline json delta_json(const std::optional<BoxDelta>& d) {
  if (!d) return nullptr;
  return json::array({d->dx, d->dy, d->dw, d->dh});
}

inline int category_code(Category c) { return c.is_background() ? -1 : c.index(); }

inline Category category_from_code(int code) {
  return code < 0 ? Category::background() : Category(code);
}

template <typename T>
T field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key))
    throw SchemaError("line " + std::to_string(line) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError("line " + std::to_string(line) + ": field '" + key + "': " + e.what());
  }
}

inline BBox box_field(const json& j, const char* key, std::size_t line) {
  const auto v = field<std::vector<double>>(j, key, line);
  if (v.size() != 4)
    throw SchemaError("line " + std::to_string(line) + ": field '" + key + "' needs 4 numbers");
  try {
    return {v[0], v[1], v[2], v[3]};
  } catch (const std::invalid_argument& e) {
    throw SchemaError("line " + std::to_string(line) + ": " + e.what());
  }
}

inline std::optional<BoxDelta> delta_field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw SchemaError("line " + std::to_string(line) + ": missing field '" + key + "'");
  if (j.at(key).is_null()) return std::nullopt;
  const auto v = field<std::vector<double>>(j, key, line);
  if (v.size() != 4)
    throw SchemaError("line " + std::to_string(line) + ": field '" + key + "' needs 4 numbers");
  return BoxDelta{v[0], v[1], v[2], v[3]};
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("line " + std::to_string(number) + ": " + e.what());
    }
    if (!j.is_object()) throw SchemaError("line " + std::to_string(number) + ": expected an object");
    try {
      fn(j, number);
    } catch (const std::invalid_argument& e) {
      // Out-of-domain values such as an unknown split or a negative category.
      throw SchemaError("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

}  // namespace detail

inline json to_json(const SceneRecord& s) {
  json objects = json::array();
  for (const auto& o : s.scene.objects)
    objects.push_back({{"box", detail::box_json(o.box)}, {"category", o.category}});
  return {{"scene_id", s.scene_id}, {"split", to_string(s.split)}, {"width", s.scene.width},
          {"height", s.scene.height}, {"objects", objects}};
}

inline json to_json(const PseudoLabelRecord& r) {
  const auto& l = r.label;
  return {{"scene_id", r.scene_id},       {"box", detail::box_json(l.label.box)},
          {"category", l.label.category}, {"score", l.label.score},
          {"source_object", l.source_object}, {"clean", l.clean()},
          {"flipped", l.flipped},         {"jittered", l.jittered}};
}

inline json to_json(const ProposalRecord& r) {
  const auto& a = r.assignment;
  json j = {{"scene_id", r.scene_id},
            {"proposal_id", r.proposal_id},
            {"split", to_string(r.split)},
            {"sampled", r.sampled},
            {"box", detail::box_json(r.box)},
            {"true_category", detail::category_code(r.true_category)},
            {"max_iou", a.max_iou},
            {"is_positive", a.is_positive},
            {"matched_index", nullptr},
            {"assigned_category", detail::category_code(a.assigned_category)},
            {"matched_score", nullptr},
            {"pseudo_delta", detail::delta_json(r.pseudo_delta)},
            {"clean_delta", detail::delta_json(r.clean_delta)}};
  if (a.matched_index) j["matched_index"] = *a.matched_index;
  if (a.matched_score) j["matched_score"] = *a.matched_score;
  return j;
}

inline SceneRecord scene_from_json(const json& j, std::size_t line) {
  using detail::field;
  SceneRecord s{field<std::uint64_t>(j, "scene_id", line),
                split_from_string(field<std::string>(j, "split", line)),
                Scene{field<double>(j, "width", line), field<double>(j, "height", line), {}}};
  for (const auto& o : field<json>(j, "objects", line))
    s.scene.objects.push_back({detail::box_field(o, "box", line), field<int>(o, "category", line)});
  return s;
}

inline PseudoLabelRecord label_from_json(const json& j, std::size_t line) {
  using detail::field;
  return {field<std::uint64_t>(j, "scene_id", line),
          LabelRecord{{detail::box_field(j, "box", line), field<int>(j, "category", line),
                       field<double>(j, "score", line)},
                      field<std::size_t>(j, "source_object", line),
                      field<bool>(j, "flipped", line), field<bool>(j, "jittered", line)}};
}

inline ProposalRecord proposal_from_json(const json& j, std::size_t line) {
  using detail::field;
  Assignment a;
  a.max_iou = field<double>(j, "max_iou", line);
  a.is_positive = field<bool>(j, "is_positive", line);
  a.assigned_category = detail::category_from_code(field<int>(j, "assigned_category", line));
  if (!j.contains("matched_index") || !j.contains("matched_score"))
    throw SchemaError("line " + std::to_string(line) + ": missing matched_index/matched_score");
  if (!j["matched_index"].is_null()) a.matched_index = field<std::size_t>(j, "matched_index", line);
  if (!j["matched_score"].is_null()) a.matched_score = field<double>(j, "matched_score", line);
  if (a.is_positive != a.matched_index.has_value() || a.is_positive != a.matched_score.has_value() ||
      a.is_positive == a.assigned_category.is_background()) {
    throw SchemaError("line " + std::to_string(line) + ": inconsistent assignment fields");
  }
  return {field<std::uint64_t>(j, "scene_id", line),
          field<std::uint64_t>(j, "proposal_id", line),
          split_from_string(field<std::string>(j, "split", line)),
          field<bool>(j, "sampled", line),
          detail::box_field(j, "box", line),
          detail::category_from_code(field<int>(j, "true_category", line)),
          a,
          detail::delta_field(j, "pseudo_delta", line),
          detail::delta_field(j, "clean_delta", line)};
}

template <typename Range>
void write_jsonl(std::ostream& os, const Range& records) {
  for (const auto& r : records) os << to_json(r).dump() << '\n';
}

inline std::vector<ProposalRecord> read_proposals(std::istream& in) {
  std::vector<ProposalRecord> out;
  detail::for_each_line(in, [&](const json& j, std::size_t n) { out.push_back(proposal_from_json(j, n)); });
  return out;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open(kScenesFile);
    write_jsonl(os, data.scenes);
  }
  {
    auto os = open(kLabelsFile);
    write_jsonl(os, data.labels);
  }
  {
    auto os = open(kProposalsFile);
    write_jsonl(os, data.proposals);
  }
}

inline Dataset read_dataset(const std::filesystem::path& dir, std::size_t num_classes) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw SchemaError("missing dataset file " + (dir / name).string());
    return in;
  };
  Dataset data;
  data.num_classes = num_classes;
  auto wrap = [](const char* name, auto&& body) {
    try {
      body();
    } catch (const SchemaError& e) {
      throw SchemaError(std::string(name) + ": " + e.what());
    }
  };
  wrap(kScenesFile, [&] {
    auto in = open(kScenesFile);
    detail::for_each_line(in, [&](const json& j, std::size_t n) { data.scenes.push_back(scene_from_json(j, n)); });
  });
  wrap(kLabelsFile, [&] {
    auto in = open(kLabelsFile);
    detail::for_each_line(in, [&](const json& j, std::size_t n) { data.labels.push_back(label_from_json(j, n)); });
  });
  wrap(kProposalsFile, [&] {
    auto in = open(kProposalsFile);
    data.proposals = read_proposals(in);
  });
  for (const auto& p : data.proposals) {
    if (!p.true_category.valid_for(num_classes) || !p.assignment.assigned_category.valid_for(num_classes))
      throw SchemaError(std::string(kProposalsFile) + ": category outside [0, " +
                        std::to_string(num_classes) + ")");
  }
  return data;
}

}  // namespace nrssl
