#include <gtest/gtest.h>

#include <cmath>

#include "dualpatch/error.hpp"
#include "dualpatch/fixtures.hpp"
#include "dualpatch/texture_opt.hpp"

using namespace dualpatch;

namespace {

const DatasetStore& fixture() {
  static const DatasetStore store = synthesize_dataset({.frames = 3, .infrared = false});
  return store;
}

TextureOptConfig small_config() {
  TextureOptConfig c;
  c.texture_width = 12;
  c.texture_height = 12;
  c.eot_samples = 2;
  c.steps = 15;
  c.seed = 99;
  return c;
}

TextureGrid random_texture(int w, int h, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  TextureGrid t(w, h);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(TvLoss, ConstantTextureIsNearlyZero) {
  EXPECT_LE(tv_loss(TextureGrid(16, 16, 0.3)), 2e-4);
  EXPECT_NEAR(tv_loss(TextureGrid(16, 16, 0.3)), 1e-4, 1e-12);
}

TEST(TvLoss, TwoByTwoStep) {
  TextureGrid t(2, 2, 0.0);
  for (int y = 0; y < 2; ++y) {
    for (int c = 0; c < 3; ++c) t.at(1, y, c) = 1.0;
  }
  EXPECT_NEAR(tv_loss(t), 0.50005, 1e-4);
  EXPECT_NEAR(tv_loss(t), (2 * std::sqrt(1 + kTvEpsilon) + 2 * std::sqrt(kTvEpsilon)) / 4, 1e-15);
}

TEST(TvLoss, TransposeSymmetricExactly) {
  const TextureGrid t = random_texture(9, 9, 4, 0.0, 1.0);
  TextureGrid tt(9, 9);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) {
      for (int c = 0; c < 3; ++c) tt.at(y, x, c) = t.at(x, y, c);
    }
  }
  EXPECT_EQ(tv_loss(t), tv_loss(tt));
}

TEST(TvLoss, GradientMatchesFiniteDifferences) {
  TextureGrid t = random_texture(7, 5, 8, 0.0, 1.0);
  std::vector<double> grad(t.values().size(), 0.0);
  tv_loss_gradient(t, 1.0, grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    TextureGrid p = t, m = t;
    p.values()[i] += h;
    m.values()[i] -= h;
    ASSERT_NEAR((tv_loss(p) - tv_loss(m)) / (2 * h), grad[i], 1e-7) << i;
  }
}

TEST(ApLoss, MeanHinge) {
  const std::vector<double> s{0.9, 0.2, 0.0};
  EXPECT_NEAR(ap_loss(s), 1.1 / 3.0, 1e-15);
  EXPECT_NEAR(ap_loss(s, 0.3), 0.6 / 3.0, 1e-15);
  EXPECT_THROW(ap_loss(std::vector<double>{}), Error);
}

TEST(TextureObjective, GradientMatchesFiniteDifferences) {
  auto cfg = small_config();
  cfg.lambda_tv = 0.5;
  SmoothColorDetector det;
  const TextureObjective obj(PolygonShape::regular(6, 1.0), fixture().frames, det, cfg);
  // Values inside [0.2, 0.8]: the clamp stays inactive.
  const TextureGrid t = random_texture(12, 12, 3, 0.2, 0.8);
  Rng rng(10);
  std::vector<EotTransform> draws;
  for (int i = 0; i < 2; ++i) draws.push_back(sample_eot(rng, cfg.eot));

  std::vector<double> grad;
  const auto v = obj.evaluate(t, draws, &grad);
  ASSERT_EQ(grad.size(), t.values().size());
  EXPECT_NEAR(v.total, v.l_ap + cfg.lambda_tv * v.l_tv, 1e-15);

  // Coordinates spread over the magnitude-sorted gradient.
  std::vector<std::size_t> order(grad.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(grad[a]) > std::abs(grad[b]); });
  const double h = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = order[static_cast<std::size_t>(k) * 7 % order.size()];
    TextureGrid p = t, m = t;
    p.values()[i] += h;
    m.values()[i] -= h;
    const double fd = (obj.evaluate(p, draws).total - obj.evaluate(m, draws).total) / (2 * h);
    const double rel = std::abs(fd - grad[i]) / std::max(std::abs(fd), 1e-8);
    EXPECT_LE(rel, 1e-4) << "coord " << i << " fd " << fd << " analytic " << grad[i];
  }
}

TEST(TextureObjective, RejectsWrongModality) {
  class IrDiff final : public DifferentiableDetector {
   public:
    std::string name() const override { return "ir"; }
    Modality modality() const override { return Modality::Infrared; }
    double person_confidence(const ImagePlane&, const Rect&, double, ImagePlane*) const override {
      return 0.0;
    }

   protected:
    DetectionSet run(const ImagePlane&, std::span<const Rect>) override { return {}; }
  } ir;
  EXPECT_THROW(TextureObjective(PolygonShape::regular(4), fixture().frames, ir, small_config()),
               Error);
}

TEST(OptimizeTexture, LowersLossAndIsDeterministic) {
  auto cfg = small_config();
  SmoothColorDetector det;
  const auto shape = PolygonShape::regular(8, 1.0);
  int calls = 0;
  const auto r1 = optimize_texture(shape, fixture().frames, det, cfg,
                                   [&](const LossReport&) { ++calls; });
  EXPECT_EQ(calls, cfg.steps);
  ASSERT_EQ(r1.history.size(), static_cast<std::size_t>(cfg.steps));
  EXPECT_LT(r1.history.back().total, r1.history.front().total);
  for (double v : r1.texture.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_EQ(r1.final_confidences.size(), fixture().person_count(Modality::Visible));

  auto cfg4 = cfg;
  cfg4.workers = 4;
  const auto r2 = optimize_texture(shape, fixture().frames, det, cfg4);
  EXPECT_EQ(r1.texture, r2.texture);
  EXPECT_EQ(r1.history, r2.history);
}

TEST(OptimizeTexture, RandomInitAndFixedEot) {
  auto cfg = small_config();
  cfg.init = TextureInit::Random;
  cfg.fixed_eot = true;
  cfg.steps = 5;
  SmoothColorDetector det;
  const auto r = optimize_texture(PolygonShape::regular(4), fixture().frames, det, cfg);
  EXPECT_EQ(r.history.size(), 5u);
  for (std::size_t i = 1; i < r.history.size(); ++i) {
    // Same draws every step and backtracking: the objective never rises.
    EXPECT_LE(r.history[i].total, r.history[i - 1].total);
  }
}

TEST(OptimizeTexture, NonDifferentiableDetectorIsRejected) {
  MockCoverageDetector ir;
  EXPECT_THROW(optimize_texture(PolygonShape::regular(4), fixture().frames, ir, small_config()),
               Error);
}

TEST(TextureOptConfig, Validation) {
  auto cfg = small_config();
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = small_config();
  cfg.eot_samples = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = small_config();
  cfg.adam_beta1 = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
}
