#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "alod/records.hpp"
#include "fuzz.hpp"

namespace alod {
namespace {

using nlohmann::json;

json minimal_record() {
  return json::parse(R"({"image_id": "img1", "width": 100, "height": 100, "proposals": [[0, 0, 10, 10]],
    "reference": [{"box": [0, 0, 10, 10], "probs": [0.1, 0.7, 0.2], "proposal_index": 0}],
    "noisy": []})");
}

json full_record() {
  return json::parse(R"({"image_id": "img2", "width": 100, "height": 80,
    "proposals": [[0, 0, 10, 10], [20, 20, 40, 40]],
    "reference": [{"box": [1, 1, 11, 11], "probs": [0.6, 0.3], "background_prob": 0.1, "proposal_index": 1},
                  {"box": [50, 10, 70, 30], "probs": [0.2, 0.7]}],
    "noisy": [{"level": 2, "sigma": 16, "detections": [{"box": [2, 2, 12, 12], "probs": [0.5, 0.4]}]},
              {"level": 1, "sigma": 8, "detections": []}],
    "ground_truth": [{"box": [0, 0, 10, 10], "class": 0}, {"box": [50, 10, 70, 30], "class": 1}]})");
}

TEST(Pmax, Examples) {
  const auto a = pmax({{0.1, 0.7, 0.2}, std::nullopt});
  EXPECT_EQ(a.prob, 0.7);
  EXPECT_EQ(a.class_index, 1u);
  const auto b = pmax({{0.5, 0.5}, std::nullopt});
  EXPECT_EQ(b.prob, 0.5);
  EXPECT_EQ(b.class_index, 0u);
  const auto c = pmax({{0.2, 0.2, 0.2, 0.2, 0.2}, std::nullopt});
  EXPECT_EQ(c.prob, 0.2);
  EXPECT_EQ(c.class_index, 0u);
}

TEST(Pmax, BackgroundNeverWins) {
  const auto m = pmax({{0.1, 0.05}, 0.85});
  EXPECT_EQ(m.prob, 0.1);
  EXPECT_EQ(m.class_index, 0u);
}

TEST(Pmax, EmptyIsAnError) { EXPECT_THROW(pmax({}), ValidationError); }

TEST(ClassDistribution, Validation) {
  EXPECT_NO_THROW(validate(ClassDistribution{{0.3, 0.3}, 0.4}));
  EXPECT_NO_THROW(validate(ClassDistribution{{0.3, 0.3}, std::nullopt}));
  EXPECT_THROW(validate(ClassDistribution{{0.3, 0.3}, 0.3}), ValidationError);
  EXPECT_THROW(validate(ClassDistribution{{0.7, 0.7}, std::nullopt}), ValidationError);
  EXPECT_THROW(validate(ClassDistribution{{-0.1, 0.5}, std::nullopt}), ValidationError);
}

TEST(ParseRecord, MinimalRecord) {
  const auto r = parse_record(minimal_record().dump());
  EXPECT_EQ(r.image_id, "img1");
  EXPECT_EQ(r.reference.size(), 1u);
  EXPECT_TRUE(r.noisy.empty());
  EXPECT_FALSE(r.ground_truth.has_value());
  EXPECT_EQ(r.reference[0].proposal_index, 0u);
}

TEST(ParseRecord, NoisyPassesAreOrderedByLevel) {
  const auto r = parse_record(full_record().dump());
  ASSERT_EQ(r.noisy.size(), 2u);
  EXPECT_EQ(r.noisy[0].level, 1);
  EXPECT_EQ(r.noisy[1].level, 2);
  ASSERT_TRUE(r.ground_truth);
  EXPECT_EQ(r.ground_truth->size(), 2u);
}

TEST(ParseRecord, DuplicateNoiseLevel) {
  auto j = full_record();
  j["noisy"][1]["level"] = 2;
  try {
    parse_record(j.dump());
    FAIL() << "expected rejection";
  } catch (const RecordError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate noise level"), std::string::npos);
    EXPECT_EQ(e.image_id(), "img2");
    EXPECT_EQ(e.path(), "noisy[1].level");
  }
}

TEST(ParseRecord, ClampsBoxesIntoFrame) {
  auto j = minimal_record();
  j["reference"][0]["box"] = json::array({-5, 0, 10, 10});
  const auto r = parse_record(j.dump());
  EXPECT_EQ(r.reference[0].box, (BBox{0, 0, 10, 10}));
}

TEST(ParseRecord, ClampingThatDestroysTheBoxIsAnError) {
  auto j = minimal_record();
  j["reference"][0]["box"] = json::array({110, 0, 120, 10});
  EXPECT_THROW(parse_record(j.dump()), RecordError);
}

TEST(ParseRecord, ConfidenceFloorDropsWeakDetections) {
  auto j = minimal_record();
  j["reference"].push_back(json::parse(R"({"box": [0, 0, 5, 5], "probs": [0.02, 0.03, 0.01], "background_prob": 0.94})"));
  EXPECT_EQ(parse_record(j.dump()).reference.size(), 1u);
  ParseOptions keep_all;
  keep_all.confidence_floor = 0.0;
  EXPECT_EQ(parse_record(j.dump(), keep_all).reference.size(), 2u);
}

TEST(ParseRecord, ClassCountMustMatchManifest) {
  ParseOptions opts;
  opts.num_classes = 4;
  EXPECT_THROW(parse_record(minimal_record().dump(), opts), RecordError);
  opts.num_classes = 3;
  EXPECT_NO_THROW(parse_record(minimal_record().dump(), opts));
}

TEST(ParseRecord, MalformedJson) {
  EXPECT_THROW(parse_record("{\"image_id\": "), RecordError);
  EXPECT_THROW(parse_record("[1, 2]"), RecordError);
}

TEST(ParseRecord, ErrorsCarryFieldPath) {
  auto j = full_record();
  j["reference"][1]["probs"][0] = 1.5;
  try {
    parse_record(j.dump());
    FAIL() << "expected rejection";
  } catch (const RecordError& e) {
    EXPECT_EQ(e.image_id(), "img2");
    EXPECT_EQ(e.path(), "reference[1].probs[0]");
  }
}

// Each single-field corruption of a valid record must be rejected.
TEST(ParseRecord, RejectsEverySingleFieldCorruption) {
  const json base = full_record();
  ASSERT_NO_THROW(parse_record(base.dump()));
  std::vector<std::pair<std::string, json>> corrupted;

  // Every numeric leaf replaced by a string.
  const json flat = base.flatten();
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    if (!it->is_number()) continue;
    json f = flat;
    f[it.key()] = "corrupt";
    corrupted.emplace_back(it.key() + " -> string", f.unflatten());
  }
  // Every required key removed.
  for (const char* key : {"image_id", "width", "height", "proposals", "reference", "noisy"}) {
    json j = base;
    j.erase(key);
    corrupted.emplace_back(std::string("missing ") + key, j);
  }
  const auto edit = [&](const std::string& label, auto&& fn) {
    json j = base;
    fn(j);
    corrupted.emplace_back(label, j);
  };
  edit("empty image_id", [](json& j) { j["image_id"] = ""; });
  edit("numeric image_id", [](json& j) { j["image_id"] = 5; });
  edit("zero width", [](json& j) { j["width"] = 0; });
  edit("fractional height", [](json& j) { j["height"] = 80.5; });
  edit("degenerate proposal", [](json& j) { j["proposals"][0] = json::array({5, 5, 5, 9}); });
  edit("inverted box", [](json& j) { j["reference"][0]["box"] = json::array({11, 1, 1, 11}); });
  edit("box arity", [](json& j) { j["reference"][0]["box"] = json::array({1, 1, 11}); });
  edit("probability above 1", [](json& j) { j["reference"][0]["probs"][0] = 1.2; });
  edit("negative probability", [](json& j) { j["reference"][0]["probs"][1] = -0.1; });
  edit("probabilities sum", [](json& j) { j["reference"][0]["background_prob"] = 0.5; });
  edit("empty probs", [](json& j) { j["reference"][0]["probs"] = json::array(); });
  edit("class count drift", [](json& j) { j["reference"][1]["probs"] = json::array({0.2, 0.3, 0.4}); });
  edit("dangling proposal", [](json& j) { j["reference"][0]["proposal_index"] = 7; });
  edit("negative proposal", [](json& j) { j["reference"][0]["proposal_index"] = -1; });
  edit("duplicate level", [](json& j) { j["noisy"][0]["level"] = 1; });
  edit("level gap", [](json& j) { j["noisy"][0]["level"] = 3; });
  edit("sigma order", [](json& j) { j["noisy"][0]["sigma"] = 4; });
  edit("gt class range", [](json& j) { j["ground_truth"][0]["class"] = 2; });
  edit("gt negative class", [](json& j) { j["ground_truth"][0]["class"] = -1; });
  edit("unknown field", [](json& j) { j["extra"] = 1; });
  edit("unknown detection field", [](json& j) { j["reference"][0]["score"] = 0.5; });
  edit("noisy not array", [](json& j) { j["noisy"] = json::object(); });

  for (const auto& [label, j] : corrupted) {
    EXPECT_THROW(parse_record(j.dump()), RecordError) << label;
  }
}

TEST(SerializeRecord, RoundTripsFuzzedRecords) {
  std::mt19937_64 rng(99);
  ParseOptions opts;
  opts.confidence_floor = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto r = fuzz::random_record(rng, "r" + std::to_string(i));
    // Real-valued coordinates exercise the shortest round-trip double formatting.
    for (auto& d : r.reference) d.box.x_max -= 0.1234567890123;
    const auto back = parse_record(serialize_record(r), opts);
    EXPECT_EQ(back, r) << serialize_record(r);
  }
}

TEST(Pool, ReportsLineNumbersAndDuplicates) {
  std::stringstream ok;
  ok << minimal_record().dump() << "\n\n" << full_record().dump() << "\n";
  EXPECT_EQ(read_pool(ok).size(), 2u);

  std::stringstream dup;
  dup << minimal_record().dump() << "\n" << minimal_record().dump() << "\n";
  try {
    read_pool(dup);
    FAIL();
  } catch (const PoolError& e) {
    EXPECT_EQ(e.line(), 2u);
  }

  std::stringstream bad;
  bad << minimal_record().dump() << "\n" << full_record().dump() << "\n{oops\n";
  try {
    read_pool(bad);
    FAIL();
  } catch (const PoolError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

}  // namespace
}  // namespace alod
