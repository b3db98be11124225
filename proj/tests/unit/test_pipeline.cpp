#include <gtest/gtest.h>

#include <fstream>

#include "dualpatch/config.hpp"
#include "dualpatch/error.hpp"
#include "dualpatch/fixtures.hpp"
#include "dualpatch/pipeline.hpp"
#include "test_util.hpp"

using namespace dualpatch;

namespace {

RunConfig small_run(const std::filesystem::path& manifest, int steps = 3) {
  nlohmann::json doc = {
      {"seed", 11},
      {"dataset", {{"manifest", manifest.string()}}},
      {"shape_search", {{"generations", 2}, {"population", 4}, {"top_k", 2}}},
      {"texture_opt", {{"steps", steps}, {"texture_size", {8, 8}}, {"eot_samples", 1}}}};
  return parse_run_config(doc, manifest.parent_path());
}

}  // namespace

TEST(Pipeline, RunsAllStagesAndSkipsCompletedOnes) {
  dptest::TempDir dir("pipe");
  const auto manifest = generate_fixtures(dir / "fx", {.frames = 3});
  Pipeline p(small_run(manifest), {.out_dir = dir / "run"});
  p.run_all();
  const auto out = dir / "run";
  for (const char* f : {"config.json", "shape_search/archive.json", "shape_search/stage.json",
                        "patches/patch_00/shape.json", "patches/patch_00/texture.png",
                        "patches/patch_00/meta.json", "eval/patch_00/report.json",
                        "report/patch_00/report.json", "report/patch_00/report.csv",
                        "report/patch_00/asr_bars.png", "report/stage.json"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  const auto report = load_report(out / "eval/patch_00/report.json");
  EXPECT_EQ(report.config_hash, p.hash());
  EXPECT_EQ(report.modalities.size(), 2u);

  const auto stamp = std::filesystem::last_write_time(out / "patches/patch_00/texture.png");
  Pipeline again(small_run(manifest), {.out_dir = out});
  again.run_all();
  EXPECT_EQ(std::filesystem::last_write_time(out / "patches/patch_00/texture.png"), stamp);
}

TEST(Pipeline, CompletingAStageInvalidatesLaterOnes) {
  dptest::TempDir dir("pipe-inv");
  const auto manifest = generate_fixtures(dir / "fx", {.frames = 2});
  const auto out = dir / "run";
  Pipeline p(small_run(manifest), {.out_dir = out});
  p.run_all();
  std::filesystem::remove(out / "patches/stage.json");
  Pipeline again(small_run(manifest), {.out_dir = out});
  again.texture_opt();
  EXPECT_FALSE(std::filesystem::exists(out / "eval/stage.json"));
  EXPECT_FALSE(std::filesystem::exists(out / "report/stage.json"));
  EXPECT_TRUE(std::filesystem::exists(out / "shape_search/stage.json"));
}

TEST(Pipeline, HashMismatchIsAConfigError) {
  dptest::TempDir dir("pipe-hash");
  const auto manifest = generate_fixtures(dir / "fx", {.frames = 2});
  const auto out = dir / "run";
  Pipeline a(small_run(manifest, 3), {.out_dir = out});
  a.shape_search();
  a.texture_opt();
  Pipeline b(small_run(manifest, 4), {.out_dir = out});
  try {
    b.eval();
    FAIL() << "expected a hash mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    EXPECT_NE(std::string(e.what()).find("config hash"), std::string::npos);
  }
}

TEST(Pipeline, StagesNeedTheirInputs) {
  dptest::TempDir dir("pipe-order");
  const auto manifest = generate_fixtures(dir / "fx", {.frames = 2});
  Pipeline p(small_run(manifest), {.out_dir = dir / "run"});
  EXPECT_THROW(p.texture_opt(), Error);
  EXPECT_THROW(Pipeline(small_run(manifest), {.out_dir = dir / "run", .workers = 0}), Error);
}
