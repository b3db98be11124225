#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "dualpatch/error.hpp"
#include "dualpatch/fixtures.hpp"
#include "dualpatch/shape_search.hpp"
#include "random_shapes.hpp"
#include "test_util.hpp"

using namespace dualpatch;

namespace {

const DatasetStore& fixture() {
  static const DatasetStore store = synthesize_dataset({.frames = 12, .visible = false});
  return store;
}

SearchConfig small_config() {
  SearchConfig c;
  c.generations = 4;
  c.population = 6;
  c.top_k = 3;
  c.seed = 17;
  c.placement.area_fraction = 0.12;
  return c;
}

// Fails every call after `budget` successful ones.
class BrokenAfter final : public DetectorAdapter {
 public:
  explicit BrokenAfter(int budget) : budget_(budget) {}
  std::string name() const override { return "broken"; }
  Modality modality() const override { return Modality::Infrared; }

 protected:
  DetectionSet run(const ImagePlane& frame, std::span<const Rect> persons) override {
    if (budget_.fetch_sub(1) <= 0) throw Error(ErrorKind::Detector, "broken: gone");
    return inner_.detect(frame, persons);
  }

 private:
  std::atomic<int> budget_;
  MockCoverageDetector inner_;
};

}  // namespace

TEST(Mutate, AlwaysValidAndUnitArea) {
  Rng rng(5);
  SearchConfig cfg;
  PolygonShape s = PolygonShape::regular(6, kUnitPatchArea);
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 2000; ++i) {
    MutationOp op;
    s = mutate(s, rng, cfg, &op);
    ++counts[static_cast<int>(op)];
    ASSERT_TRUE(validate(s.vertices(), cfg.max_vertices).empty());
    ASSERT_NEAR(polygon_area(s), kUnitPatchArea, 1e-9);
    ASSERT_GE(s.size(), cfg.min_vertices);
    ASSERT_LE(s.size(), cfg.max_vertices);
  }
  for (int c : counts) EXPECT_GT(c, 0);
}

TEST(Mutate, ForcedOperators) {
  Rng rng(8);
  SearchConfig cfg;
  const PolygonShape hex = PolygonShape::regular(6, 1.0);
  MutationOp op;
  const auto ins = mutate_with(hex, MutationOp::Insert, rng, cfg, &op);
  EXPECT_EQ(op, MutationOp::Insert);
  EXPECT_EQ(ins.size(), 7u);
  // The midpoint lies on the old boundary: the polygon itself is unchanged.
  EXPECT_NEAR(polygon_area(ins), 1.0, 1e-12);
  EXPECT_EQ(rasterize(ins, {0, 0, 64, 64}, 64, 64), rasterize(hex, {0, 0, 64, 64}, 64, 64));

  const auto del = mutate_with(hex, MutationOp::Delete, rng, cfg, &op);
  EXPECT_EQ(op, MutationOp::Delete);
  EXPECT_EQ(del.size(), 5u);

  const auto tri = PolygonShape::regular(3, 1.0);
  mutate_with(tri, MutationOp::Delete, rng, cfg, &op);
  EXPECT_EQ(op, MutationOp::Radius);

  SearchConfig capped = cfg;
  capped.max_vertices = 6;
  mutate_with(hex, MutationOp::Insert, rng, capped, &op);
  EXPECT_EQ(op, MutationOp::Radius);
}

TEST(Mutate, ZeroScaleAngleMoveIsARenormalizedCopy) {
  Rng rng(1);
  SearchConfig cfg;
  cfg.sigma_angle = 0.0;
  const auto s = normalize_area(PolygonShape::regular(5, 3.0), 1.0);
  EXPECT_EQ(mutate_with(PolygonShape::regular(5, 3.0), MutationOp::Angle, rng, cfg), s);
}

TEST(SelectDiverse, DropsNearDuplicates) {
  const auto a = PolygonShape::regular(4, 1.0);
  const auto b = PolygonShape::regular(12, 1.0);
  Rng rng(3);
  const auto c = normalize_area(dptest::random_shape(rng), 1.0);
  std::vector<ShapeCandidate> pool{{a, 0.9, 0, 0}, {a, 0.8, 0, 1}, {b, 0.95, 0, 2}, {c, 0.1, 0, 3}};
  const auto out = select_diverse(pool, 3, 0.5);
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out[0].lineage_id, 2u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = i + 1; j < out.size(); ++j) {
      EXPECT_LT(mask_iou(canonical_mask(out[i].shape), canonical_mask(out[j].shape)), 0.5);
    }
    if (i > 0) EXPECT_LE(out[i].asr, out[i - 1].asr);
  }
}

TEST(EvaluateShape, BudgetDecidesOutcome) {
  MockCoverageDetector det;
  SearchConfig cfg;
  EXPECT_EQ(evaluate_shape(PolygonShape::regular(4, 1.0), fixture().frames, det, cfg), 1.0);
  cfg.placement.area_fraction = 0.02;
  EXPECT_EQ(evaluate_shape(PolygonShape::regular(4, 1.0), fixture().frames, det, cfg), 0.0);
  SmoothColorDetector vis;
  EXPECT_THROW(evaluate_shape(PolygonShape::regular(4, 1.0), fixture().frames, vis, cfg), Error);
}

TEST(Search, DeterministicAndMonotone) {
  MockCoverageDetector det;
  const auto cfg = small_config();
  const auto r1 = search(fixture().frames, det, cfg);
  auto cfg4 = cfg;
  cfg4.workers = 4;
  const auto r2 = search(fixture().frames, det, cfg4);
  EXPECT_EQ(r1.archive, r2.archive);
  EXPECT_EQ(r1.best_per_generation, r2.best_per_generation);
  ASSERT_EQ(r1.best_per_generation.size(), 4u);
  for (std::size_t g = 1; g < r1.best_per_generation.size(); ++g) {
    EXPECT_GE(r1.best_per_generation[g], r1.best_per_generation[g - 1]);
  }
  EXPECT_LE(r1.archive.size(), 3u);
  EXPECT_EQ(r1.evaluations, 24u);
  for (const auto& c : r1.archive) {
    EXPECT_NEAR(polygon_area(c.shape), kUnitPatchArea, 1e-9);
    EXPECT_GE(c.asr, 0.0);
    EXPECT_LE(c.asr, 1.0);
  }
}

TEST(Search, ResumesFromCheckpointAfterFailure) {
  const auto cfg = small_config();
  MockCoverageDetector det;
  const auto reference = search(fixture().frames, det, cfg);

  dptest::TempDir dir("ckpt");
  SearchHooks hooks;
  hooks.checkpoint_dir = dir.path();
  hooks.config_hash = "resume-test";
  // Enough budget for generation 0 and 1, then the adapter dies.
  BrokenAfter broken(static_cast<int>(fixture().size()) * cfg.population * 2 + 5);
  EXPECT_THROW(search(fixture().frames, broken, cfg, hooks), Error);
  EXPECT_TRUE(std::filesystem::exists(dir / "gen_0001.json"));

  const auto resumed = search(fixture().frames, det, cfg, hooks);
  EXPECT_EQ(resumed.resumed_from, 1);
  EXPECT_EQ(resumed.archive, reference.archive);
  EXPECT_EQ(resumed.best_per_generation, reference.best_per_generation);

  SearchHooks other = hooks;
  other.config_hash = "different";
  EXPECT_EQ(search(fixture().frames, det, cfg, other).resumed_from, -1);
}

TEST(Search, RejectsBadConfig) {
  MockCoverageDetector det;
  auto cfg = small_config();
  cfg.top_k = 10;
  EXPECT_THROW(search(fixture().frames, det, cfg), Error);
  cfg = small_config();
  cfg.min_vertices = 2;
  EXPECT_THROW(search(fixture().frames, det, cfg), Error);
}

TEST(Candidate, JsonRoundTrip) {
  const ShapeCandidate c{PolygonShape::regular(7, 1.0), 0.625, 3, 42};
  EXPECT_EQ(candidate_from_json(candidate_to_json(c), 16), c);
}
