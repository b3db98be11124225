#include <gtest/gtest.h>

#include "dualpatch/config.hpp"
#include "dualpatch/error.hpp"

using namespace dualpatch;

namespace {

const char* kMinimal = R"({"dataset": {"manifest": "m.jsonl"}})";

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text, "/base");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << text;
  return {};
}

}  // namespace

TEST(Config, DefaultsFillEverySection) {
  const auto c = parse_run_config(std::string(kMinimal), "/base");
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.manifest_path(), std::filesystem::path("/base/m.jsonl"));
  ASSERT_TRUE(c.visible_detector);
  ASSERT_TRUE(c.infrared_detector);
  EXPECT_EQ(c.visible_detector->type, "smooth_color");
  EXPECT_EQ(c.infrared_detector->type, "mock_coverage");
  EXPECT_EQ(c.shape_search.generations, 30);
  EXPECT_EQ(c.shape_search.population, 16);
  EXPECT_DOUBLE_EQ(c.shape_search.placement.area_fraction, 0.30);
  EXPECT_EQ(c.texture_opt.steps, 200);
  EXPECT_EQ(c.texture_policy, TexturePolicy::PerShape);
  EXPECT_TRUE(c.eval.apply_eot);
  EXPECT_EQ(c.output.formats.size(), 3u);
}

TEST(Config, UnknownKeyIsNamed) {
  const auto msg = config_error(R"({"dataset": {"manifest": "m"}, "texture_opt": {"learning_rte": 0.1}})");
  EXPECT_NE(msg.find("unknown key \"texture_opt.learning_rte\""), std::string::npos) << msg;
  EXPECT_NE(config_error(R"({"dataset": {"manifest": "m"}, "bogus": 1})").find("\"bogus\""),
            std::string::npos);
}

TEST(Config, RejectsBadValues) {
  config_error("{}");
  config_error("not json");
  config_error(R"({"dataset": {"manifest": "m"}, "shape_search": {"area_fraction": 0.5}})");
  config_error(R"({"dataset": {"manifest": "m"}, "shape_search": {"population": "many"}})");
  config_error(R"({"dataset": {"manifest": "m"}, "texture_opt": {"init": "noise"}})");
  config_error(R"({"dataset": {"manifest": "m"}, "detectors": {"visible": null, "infrared": null}})");
  config_error(R"({"dataset": {"manifest": "m"}, "detectors": {"visible": {"type": "mock_coverage"}}})");
  config_error(R"({"dataset": {"manifest": "m"}, "output": {"formats": ["pdf"]}})");
  config_error(R"({"dataset": {"manifest": "m"}, "seed": -1})");
}

TEST(Config, NullDetectorSlotDisablesModality) {
  const auto c = parse_run_config(
      std::string(R"({"dataset": {"manifest": "m"}, "detectors": {"visible": null}})"), "/b");
  EXPECT_FALSE(c.visible_detector);
  EXPECT_TRUE(c.infrared_detector);
}

TEST(Config, SubprocessDetector) {
  const auto c = parse_run_config(std::string(R"({"dataset": {"manifest": "m"},
      "detectors": {"visible": {"type": "subprocess", "command": ["det", "--x"],
                                "modality": "visible", "timeout_s": 2.5, "name": "yolo"}}})"),
                                  "/b");
  ASSERT_TRUE(c.visible_detector);
  EXPECT_EQ(c.visible_detector->subprocess.command, (std::vector<std::string>{"det", "--x"}));
  EXPECT_EQ(c.visible_detector->subprocess.timeout, std::chrono::milliseconds(2500));
  EXPECT_EQ(c.visible_detector->subprocess.name, "yolo");
  const auto det = make_detector(*c.visible_detector, Modality::Visible);
  EXPECT_EQ(det->name(), "yolo");

  const auto msg = config_error(R"({"dataset": {"manifest": "m"},
      "detectors": {"infrared": {"type": "subprocess", "command": ["d"], "modality": "visible"}}})");
  EXPECT_NE(msg.find("detectors.infrared.modality"), std::string::npos) << msg;
  config_error(R"({"dataset": {"manifest": "m"},
      "detectors": {"visible": {"type": "subprocess", "command": []}}})");
}

TEST(Config, HashIgnoresKeyOrderAndOutputDir) {
  const auto a = parse_run_config(
      std::string(R"({"seed": 3, "dataset": {"manifest": "m"}, "output": {"dir": "x"}})"), "/b");
  const auto b = parse_run_config(
      std::string(R"({"output": {"dir": "y"}, "dataset": {"manifest": "m"}, "seed": 3})"), "/b");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
  const auto c = parse_run_config(std::string(R"({"seed": 4, "dataset": {"manifest": "m"}})"), "/b");
  EXPECT_NE(config_hash(a), config_hash(c));
  // Explicit defaults hash like omitted ones.
  const auto d = parse_run_config(
      std::string(R"({"seed": 3, "dataset": {"manifest": "m"}, "texture_opt": {"steps": 200}})"), "/b");
  EXPECT_EQ(config_hash(a), config_hash(d));
}

TEST(Config, ResolvedConfigRoundTrips) {
  const auto a = parse_run_config(std::string(R"({"seed": 9, "dataset": {"manifest": "m"},
      "shape_search": {"thermal": {"mode": "additive", "delta_hot": 0.3}},
      "texture_opt": {"policy": "best_only", "eot": {"rotation_deg": [-5, 5]}}})"),
                                  "/b");
  const auto b = parse_run_config(resolved_config(a), "/b");
  EXPECT_EQ(resolved_config(a), resolved_config(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(b.shape_search.thermal.mode, ThermalMode::Additive);
  EXPECT_EQ(b.texture_policy, TexturePolicy::BestOnly);
}

TEST(Config, StageSeedsAreDistinctAndOverridable) {
  auto c = parse_run_config(std::string(R"({"seed": 5, "dataset": {"manifest": "m"}})"), "/b");
  EXPECT_NE(c.shape_search.seed, c.texture_opt.seed);
  EXPECT_NE(stage_seed(c, SeedStream::Texture, 0), stage_seed(c, SeedStream::Texture, 1));
  const auto before = config_hash(c);
  override_seed(c, 6);
  EXPECT_EQ(c.seed, 6u);
  EXPECT_EQ(c.shape_search.seed, stage_seed(c, SeedStream::ShapeSearch));
  EXPECT_NE(config_hash(c), before);
}
