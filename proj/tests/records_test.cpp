#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "nrssl/records.hpp"

using namespace nrssl;

namespace {

Dataset tiny() {
  SimulationConfig c;
  c.seed = 3;
  c.train_scenes = 4;
  c.heldout_scenes = 2;
  return simulate_dataset(c);
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nrssl_records_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json valid_proposal() {
  std::ostringstream os;
  write_jsonl(os, std::vector<ProposalRecord>{tiny().proposals.front()});
  return json::parse(os.str());
}

}  // namespace

TEST(Records, DatasetRoundTripIsLossless) {
  const Dataset data = tiny();
  const auto dir = fresh_dir("roundtrip");
  write_dataset(dir, data);
  const Dataset back = read_dataset(dir, data.num_classes);
  ASSERT_EQ(back.scenes.size(), data.scenes.size());
  ASSERT_EQ(back.labels.size(), data.labels.size());
  ASSERT_EQ(back.proposals.size(), data.proposals.size());
  for (std::size_t i = 0; i < data.proposals.size(); ++i) {
    const auto &a = data.proposals[i], &b = back.proposals[i];
    EXPECT_EQ(a.box, b.box);
    EXPECT_EQ(a.true_category, b.true_category);
    EXPECT_EQ(a.assignment.max_iou, b.assignment.max_iou);
    EXPECT_EQ(a.assignment.matched_score, b.assignment.matched_score);
    EXPECT_EQ(a.assignment.assigned_category, b.assignment.assigned_category);
    EXPECT_EQ(a.sampled, b.sampled);
    EXPECT_EQ(a.pseudo_delta.has_value(), b.pseudo_delta.has_value());
    if (a.clean_delta) EXPECT_EQ(a.clean_delta->dw, b.clean_delta->dw);
  }
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    EXPECT_EQ(data.labels[i].label.label.score, back.labels[i].label.label.score);
    EXPECT_EQ(data.labels[i].label.flipped, back.labels[i].label.flipped);
  }
  // Writing what was read reproduces the files byte for byte.
  const auto again = fresh_dir("roundtrip_again");
  write_dataset(again, back);
  for (const char* f : {kScenesFile, kLabelsFile, kProposalsFile})
    EXPECT_EQ(slurp(dir / f), slurp(again / f)) << f;
}

TEST(Records, BackgroundAndAbsentFieldsOnTheWire) {
  const Dataset data = tiny();
  for (const auto& p : data.proposals) {
    if (p.assignment.is_positive || !p.true_category.is_background()) continue;
    const json j = to_json(p);
    EXPECT_EQ(j["true_category"], -1);
    EXPECT_EQ(j["assigned_category"], -1);
    EXPECT_TRUE(j["matched_index"].is_null());
    EXPECT_TRUE(j["matched_score"].is_null());
    EXPECT_TRUE(j["clean_delta"].is_null());
    return;
  }
  FAIL() << "no background proposal in the sample";
}

TEST(Records, SchemaErrorsNameTheLine) {
  std::istringstream broken("\n{not json}\n");
  try {
    read_proposals(broken);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Records, RejectsMalformedProposals) {
  auto check = [](json j, const std::string& fragment) {
    std::istringstream in(j.dump() + "\n");
    try {
      read_proposals(in);
      ADD_FAILURE() << "accepted: " << j.dump();
    } catch (const SchemaError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  json j = valid_proposal();
  j.erase("max_iou");
  check(j, "missing field 'max_iou'");
  j = valid_proposal();
  j["box"] = json::array({1, 2, 3});
  check(j, "needs 4 numbers");
  j = valid_proposal();
  j["box"] = json::array({5, 5, 1, 1});
  check(j, "line 1");
  j = valid_proposal();
  j["split"] = "validation";
  check(j, "unknown split");
  j = valid_proposal();
  j["is_positive"] = !j["is_positive"].get<bool>();
  check(j, "inconsistent assignment");
  j = valid_proposal();
  j["max_iou"] = "high";
  check(j, "field 'max_iou'");
  check(json::array({1, 2}), "expected an object");
}

TEST(Records, ReadDatasetChecksFilesAndCategories) {
  const auto dir = fresh_dir("categories");
  EXPECT_THROW(read_dataset(dir, 10), SchemaError);
  write_dataset(dir, tiny());
  EXPECT_NO_THROW(read_dataset(dir, 10));
  try {
    read_dataset(dir, 2);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find(kProposalsFile), std::string::npos);
  }
}
