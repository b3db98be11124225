#include "dualpatch/texture_opt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dualpatch/error.hpp"
#include "dualpatch/log.hpp"
#include "dualpatch/parallel.hpp"
#include "dualpatch/rng.hpp"

namespace dualpatch {

namespace {

// Per-site forward differences; zero past the last column/row.
struct TvSite {
  double dx;
  double dy;
  double term;
};

TvSite tv_site(const TextureGrid& t, int x, int y, int c) {
  const double v = t.at(x, y, c);
  const double dx = x + 1 < t.width() ? t.at(x + 1, y, c) - v : 0.0;
  const double dy = y + 1 < t.height() ? t.at(x, y + 1, c) - v : 0.0;
  return {dx, dy, std::sqrt(dx * dx + dy * dy + kTvEpsilon)};
}

}  // namespace

double tv_loss(const TextureGrid& texture) {
  if (texture.texel_count() == 0) {
    throw Error(ErrorKind::InvalidArgument, "tv_loss: empty texture");
  }
  std::vector<double> terms;
  terms.reserve(texture.texel_count() * 3);
  for (int y = 0; y < texture.height(); ++y) {
    for (int x = 0; x < texture.width(); ++x) {
      for (int c = 0; c < 3; ++c) terms.push_back(tv_site(texture, x, y, c).term);
    }
  }
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum / static_cast<double>(terms.size());
}

void tv_loss_gradient(const TextureGrid& texture, double scale, std::span<double> grad) {
  if (grad.size() != texture.values().size()) {
    throw Error(ErrorKind::InvalidArgument, "tv_loss_gradient: size mismatch");
  }
  const double norm = scale / static_cast<double>(texture.texel_count() * 3);
  const auto idx = [&](int x, int y, int c) {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(texture.width()) +
            static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
  };
  for (int y = 0; y < texture.height(); ++y) {
    for (int x = 0; x < texture.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const TvSite s = tv_site(texture, x, y, c);
        const double gx = norm * s.dx / s.term;
        const double gy = norm * s.dy / s.term;
        grad[idx(x, y, c)] -= gx + gy;
        if (x + 1 < texture.width()) grad[idx(x + 1, y, c)] += gx;
        if (y + 1 < texture.height()) grad[idx(x, y + 1, c)] += gy;
      }
    }
  }
}

double ap_loss(std::span<const double> confidences, double margin) {
  if (confidences.empty()) throw Error(ErrorKind::InvalidArgument, "ap_loss: no confidences");
  double sum = 0.0;
  for (double s : confidences) sum += std::max(0.0, s - margin);
  return sum / static_cast<double>(confidences.size());
}

void TextureOptConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, "texture_opt: " + m); };
  if (steps < 0) fail("steps must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (!(lambda_tv >= 0.0) || !std::isfinite(lambda_tv)) fail("lambda_tv must be >= 0");
  if (eot_samples < 1) fail("eot_samples must be >= 1");
  if (texture_width < 1 || texture_height < 1) fail("texture size must be positive");
  if (texture_width > 4096 || texture_height > 4096) fail("texture size must be <= 4096");
  if (!std::isfinite(margin)) fail("margin must be finite");
  if (max_halvings < 0) fail("max_halvings must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) fail("adam epsilon must be > 0");
  eot.validate();
  placement.validate();
}

nlohmann::json loss_report_to_json(const LossReport& r) {
  return {{"step", r.step},
          {"l_ap", r.l_ap},
          {"l_tv", r.l_tv},
          {"total", r.total},
          {"mean_confidence", r.mean_confidence},
          {"learning_rate", r.learning_rate}};
}

TextureObjective::TextureObjective(const PolygonShape& shape, std::span<const DualFrame> frames,
                                   const DifferentiableDetector& detector,
                                   const TextureOptConfig& config)
    : detector_(detector), config_(config) {
  config_.validate();
  if (detector.modality() != Modality::Visible) {
    throw Error(ErrorKind::InvalidArgument, "texture objective: detector must be visible");
  }
  for (const auto& frame : frames) {
    if (!frame.visible || frame.persons.empty()) continue;
    FrameLayers fl{&frame, {}};
    const int w = frame.visible->width();
    const int h = frame.visible->height();
    for (const auto& person : frame.persons) {
      const Placement where = placement_rect(person, config_.placement, w, h);
      fl.layers.emplace_back(shape, where.anchor, w, h, config_.texture_width,
                             config_.texture_height);
    }
    person_count_ += frame.persons.size();
    frames_.push_back(std::move(fl));
  }
  if (person_count_ == 0) {
    throw Error(ErrorKind::InvalidArgument, "texture objective: no visible persons in dataset");
  }
}

TextureObjective::Value TextureObjective::evaluate(const TextureGrid& texture,
                                                   std::span<const EotTransform> draws,
                                                   std::vector<double>* grad) const {
  if (draws.empty()) throw Error(ErrorKind::InvalidArgument, "texture objective: no EOT draws");
  if (texture.width() != config_.texture_width || texture.height() != config_.texture_height) {
    throw Error(ErrorKind::InvalidArgument, "texture objective: texture size mismatch");
  }
  const std::size_t m = draws.size();
  const std::size_t n_tex = texture.values().size();
  const double weight = 1.0 / static_cast<double>(m * person_count_);

  std::vector<std::vector<double>> conf(m);
  std::vector<std::vector<double>> grads(grad ? m : 0);

  parallel_for(m, config_.workers, [&](std::size_t d) {
    TextureWarp warp(config_.texture_width, config_.texture_height, draws[d]);
    const WarpedTexture warped = warp.forward(texture);
    std::vector<double> grad_rgb;
    if (grad) grad_rgb.assign(n_tex, 0.0);
    auto& out = conf[d];
    out.reserve(person_count_);
    for (const auto& fl : frames_) {
      ImagePlane img = *fl.frame->visible;
      for (const auto& layer : fl.layers) layer.composite(img, warped);
      ImagePlane g;
      if (grad) g = ImagePlane(img.width(), img.height(), Modality::Visible, 0.0);
      for (const auto& person : fl.frame->persons) {
        const double s = detector_.person_confidence(img, person, 0.0, nullptr);
        out.push_back(s);
        if (grad && s > config_.margin) detector_.person_confidence(img, person, weight, &g);
      }
      if (grad) {
        for (auto it = fl.layers.rbegin(); it != fl.layers.rend(); ++it) {
          it->backward(g, warped, grad_rgb);
        }
      }
    }
    if (grad) {
      grads[d].assign(n_tex, 0.0);
      warp.backward(grad_rgb, grads[d]);
    }
  });

  Value v;
  v.confidences.reserve(m * person_count_);
  for (const auto& c : conf) v.confidences.insert(v.confidences.end(), c.begin(), c.end());
  v.l_ap = ap_loss(v.confidences, config_.margin);
  v.mean_confidence = std::accumulate(v.confidences.begin(), v.confidences.end(), 0.0) /
                      static_cast<double>(v.confidences.size());
  v.l_tv = config_.lambda_tv > 0.0 ? tv_loss(texture) : 0.0;
  v.total = v.l_ap + config_.lambda_tv * v.l_tv;
  if (!std::isfinite(v.total)) throw Error(ErrorKind::Numeric, "texture objective: non-finite loss");

  if (grad) {
    grad->assign(n_tex, 0.0);
    for (const auto& gd : grads) {
      for (std::size_t i = 0; i < n_tex; ++i) (*grad)[i] += gd[i];
    }
    if (config_.lambda_tv > 0.0) tv_loss_gradient(texture, config_.lambda_tv, *grad);
    for (double g : *grad) {
      if (!std::isfinite(g)) throw Error(ErrorKind::Numeric, "texture objective: non-finite gradient");
    }
  }
  return v;
}

TextureResult optimize_texture(const PolygonShape& shape, std::span<const DualFrame> frames,
                               const DetectorAdapter& detector, const TextureOptConfig& config,
                               const std::function<void(const LossReport&)>& on_step) {
  config.validate();
  if (!detector.differentiable()) {
    throw Error(ErrorKind::InvalidArgument,
                "texture optimization needs a differentiable visible detector, got \"" +
                    detector.name() + "\"");
  }
  const auto& diff = dynamic_cast<const DifferentiableDetector&>(detector);
  const TextureObjective objective(shape, frames, diff, config);

  Rng init_rng(Rng::derive(config.seed, 0));
  Rng eot_rng(Rng::derive(config.seed, 1));

  TextureResult result;
  result.texture = TextureGrid(config.texture_width, config.texture_height, 0.5);
  if (config.init == TextureInit::Random) {
    for (double& v : result.texture.values()) v = init_rng.uniform();
  }
  TextureGrid& tex = result.texture;
  const std::size_t n = tex.values().size();

  std::vector<EotTransform> fixed;
  if (config.fixed_eot) {
    for (int i = 0; i < config.eot_samples; ++i) fixed.push_back(sample_eot(eot_rng, config.eot));
  }

  std::vector<double> m1(n, 0.0), m2(n, 0.0), dir(n), grad;
  for (int step = 1; step <= config.steps; ++step) {
    std::vector<EotTransform> draws = fixed;
    if (!config.fixed_eot) {
      for (int i = 0; i < config.eot_samples; ++i) draws.push_back(sample_eot(eot_rng, config.eot));
    }
    const auto value = objective.evaluate(tex, draws, &grad);

    const double c1 = 1.0 - std::pow(config.adam_beta1, step);
    const double c2 = 1.0 - std::pow(config.adam_beta2, step);
    for (std::size_t i = 0; i < n; ++i) {
      m1[i] = config.adam_beta1 * m1[i] + (1.0 - config.adam_beta1) * grad[i];
      m2[i] = config.adam_beta2 * m2[i] + (1.0 - config.adam_beta2) * grad[i] * grad[i];
      dir[i] = (m1[i] / c1) / (std::sqrt(m2[i] / c2) + config.adam_epsilon);
    }

    double lr = config.learning_rate;
    double accepted = 0.0;
    for (int h = 0; h <= config.max_halvings; ++h) {
      TextureGrid candidate = tex;
      auto cv = candidate.values();
      for (std::size_t i = 0; i < n; ++i) cv[i] -= lr * dir[i];
      candidate.clamp();
      if (objective.evaluate(candidate, draws).total <= value.total) {
        tex = std::move(candidate);
        accepted = lr;
        break;
      }
      lr *= 0.5;
    }

    LossReport report{step, value.l_ap, value.l_tv, value.total, value.mean_confidence, accepted};
    result.history.push_back(report);
    if (on_step) on_step(report);
  }

  const EotTransform identity{};
  const auto final_value = objective.evaluate(tex, std::span<const EotTransform>(&identity, 1));
  result.final_confidences = final_value.confidences;
  result.final_mean_confidence = final_value.mean_confidence;
  result.final_tv = tv_loss(tex);
  log(LogLevel::Info, "texture optimization done: mean confidence " +
                          std::to_string(result.final_mean_confidence));
  return result;
}

}  // namespace dualpatch
