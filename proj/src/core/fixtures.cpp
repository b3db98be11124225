#include "dualpatch/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "dualpatch/error.hpp"
#include "dualpatch/log.hpp"
#include "dualpatch/rng.hpp"

namespace dualpatch {

namespace {

double quantize(double v, double levels) { return std::round(std::clamp(v, 0.0, 1.0) * levels) / levels; }

std::vector<Rect> draw_persons(Rng& rng, int width, int height) {
  const int count = rng.uniform() < 0.5 ? 1 : 2;
  std::vector<Rect> boxes;
  const int slot = count == 1 ? width : width / 2;
  for (int i = 0; i < count; ++i) {
    const int w = std::min(28 + static_cast<int>(rng.index(13)), slot - 4);
    const int h = std::min(64 + static_cast<int>(rng.index(33)), height - 8);
    const int x0 = i * slot + 2;
    const int x = x0 + static_cast<int>(rng.index(static_cast<std::size_t>(slot - w - 3)));
    const int y = 4 + static_cast<int>(rng.index(static_cast<std::size_t>(height - h - 7)));
    boxes.push_back({static_cast<double>(x), static_cast<double>(y), static_cast<double>(w),
                     static_cast<double>(h)});
  }
  return boxes;
}

// Ellipse inscribed in the box: the body silhouette.
bool inside_body(const Rect& b, int x, int y) {
  const double u = (x + 0.5 - (b.x + 0.5 * b.w)) / (0.5 * b.w);
  const double v = (y + 0.5 - (b.y + 0.5 * b.h)) / (0.5 * b.h);
  return u * u + v * v <= 1.0;
}

}  // namespace

DatasetStore synthesize_dataset(const FixtureOptions& options) {
  if (options.frames < 1) throw Error(ErrorKind::InvalidArgument, "fixtures: frames must be >= 1");
  if (options.width < 96 || options.height < 80) {
    throw Error(ErrorKind::InvalidArgument, "fixtures: image must be at least 96x80");
  }
  if (!options.visible && !options.infrared) {
    throw Error(ErrorKind::InvalidArgument, "fixtures: at least one modality is required");
  }
  const int W = options.width;
  const int H = options.height;
  DatasetStore store;
  for (int f = 0; f < options.frames; ++f) {
    Rng rng(Rng::derive(options.seed, static_cast<std::uint64_t>(f)));
    DualFrame frame;
    char id[32];
    std::snprintf(id, sizeof(id), "frame_%03d", f);
    frame.id = id;
    frame.persons = draw_persons(rng, W, H);

    // Visible: everything stays within 0.5 +- 0.12 per channel.
    std::array<double, 3> bg{};
    for (double& c : bg) c = 0.5 + rng.uniform(-0.06, 0.06);
    std::vector<std::array<double, 3>> body(frame.persons.size());
    for (auto& col : body) {
      for (double& c : col) c = 0.5 + rng.uniform(-0.08, 0.08);
    }
    const double gx = rng.uniform(-0.03, 0.03);
    const double gy = rng.uniform(-0.03, 0.03);
    if (options.visible) {
      ImagePlane img(W, H, Modality::Visible, 0.0);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const double ramp = gx * (2.0 * x / W - 1.0) + gy * (2.0 * y / H - 1.0);
          std::array<double, 3> px{bg[0] + ramp, bg[1] + ramp, bg[2] + ramp};
          for (std::size_t p = 0; p < frame.persons.size(); ++p) {
            if (inside_body(frame.persons[p], x, y)) px = body[p];
          }
          for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(px[c] + rng.uniform(-0.01, 0.01), 0.38, 0.62);
            img.at(x, y, c) = quantize(v, 255.0);
          }
        }
      }
      frame.visible = std::move(img);
    }

    // Infrared: warm bodies on a cool background, all below the hot level.
    const double ir_bg = rng.uniform(0.15, 0.3);
    std::vector<double> ir_body(frame.persons.size());
    for (double& v : ir_body) v = rng.uniform(0.55, 0.7);
    if (options.infrared) {
      ImagePlane img(W, H, Modality::Infrared, 0.0);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double v = ir_bg + 0.03 * (static_cast<double>(y) / H);
          for (std::size_t p = 0; p < frame.persons.size(); ++p) {
            if (inside_body(frame.persons[p], x, y)) v = ir_body[p];
          }
          v = std::clamp(v + rng.uniform(-0.02, 0.02), 0.0, 0.8);
          img.at(x, y) = quantize(v, 65535.0);
        }
      }
      frame.infrared = std::move(img);
    }
    frame.validate();
    store.frames.push_back(std::move(frame));
  }
  return store;
}

std::filesystem::path generate_fixtures(const std::filesystem::path& out_dir,
                                        const FixtureOptions& options) {
  DatasetStore store = synthesize_dataset(options);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (options.visible) std::filesystem::create_directories(out_dir / "visible", ec);
  if (options.infrared) std::filesystem::create_directories(out_dir / "infrared", ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  const auto manifest = out_dir / "manifest.jsonl";
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + manifest.string());
  for (const auto& frame : store.frames) {
    nlohmann::json rec{{"id", frame.id}, {"visible", nullptr}, {"infrared", nullptr}};
    if (frame.visible) {
      const std::string rel = "visible/" + frame.id + ".png";
      save_png(*frame.visible, out_dir / rel, 8);
      rec["visible"] = rel;
    }
    if (frame.infrared) {
      const std::string rel = "infrared/" + frame.id + ".png";
      save_png(*frame.infrared, out_dir / rel, 16);
      rec["infrared"] = rel;
    }
    nlohmann::json persons = nlohmann::json::array();
    for (const auto& b : frame.persons) {
      persons.push_back({{"bbox", {static_cast<int>(b.x), static_cast<int>(b.y),
                                   static_cast<int>(b.w), static_cast<int>(b.h)}}});
    }
    rec["persons"] = persons;
    out << rec.dump() << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + manifest.string());
  store.manifest_path = manifest;
  log(LogLevel::Info, "wrote " + std::to_string(store.size()) + " fixture frames to " + out_dir.string());
  return manifest;
}

}  // namespace dualpatch
