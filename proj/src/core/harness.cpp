#include "dualpatch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dualpatch/error.hpp"
#include "dualpatch/parallel.hpp"

namespace dualpatch {

std::vector<bool> match_persons(std::span<const Rect> persons, const DetectionSet& detections,
                                const MatchConfig& config) {
  std::vector<bool> matched(persons.size(), false);
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  for (std::size_t di : order) {
    const Detection& d = detections[di];
    if (d.class_id != kPersonClass || !(d.score >= config.score_min)) continue;
    double best = -1.0;
    std::size_t best_person = persons.size();
    for (std::size_t p = 0; p < persons.size(); ++p) {
      if (matched[p]) continue;
      const double iou = rect_iou(persons[p], d.box);
      if (iou >= config.iou_min && iou > best) {
        best = iou;
        best_person = p;
      }
    }
    if (best_person < persons.size()) matched[best_person] = true;
  }
  return matched;
}

bool match_person(const Rect& person, const DetectionSet& detections, const MatchConfig& config) {
  return match_persons(std::span<const Rect>(&person, 1), detections, config)[0];
}

double asr(long n_clean, long n_patch) {
  if (n_clean <= 0) throw Error(ErrorKind::InvalidArgument, "asr: n_clean must be > 0");
  if (n_patch < 0) throw Error(ErrorKind::InvalidArgument, "asr: n_patch must be >= 0");
  return static_cast<double>(n_clean - n_patch) / static_cast<double>(n_clean);
}

namespace {

PlacementConfig patch_placement(const PatchSpec& patch, const EvalOptions& options) {
  PlacementConfig cfg = options.placement;
  cfg.area_fraction = patch.area_fraction;
  return cfg;
}

long count_matched(std::span<const Rect> persons, const DetectionSet& detections,
                   const MatchConfig& config) {
  const auto flags = match_persons(persons, detections, config);
  return static_cast<long>(std::count(flags.begin(), flags.end(), true));
}

}  // namespace

ImagePlane render_patched_visible(const DualFrame& frame, std::size_t frame_index,
                                  const PatchSpec& patch, const EvalOptions& options) {
  const PlacementConfig cfg = patch_placement(patch, options);
  Rng rng(Rng::derive(options.eot_seed, frame_index));
  ImagePlane out = *frame.visible;
  for (const auto& person : frame.persons) {
    const EotTransform t = sample_eot(rng, options.eot);
    const Placement where = placement_rect(person, cfg, out.width(), out.height());
    const PatchLayer layer(patch.shape, where.anchor, out.width(), out.height(),
                           patch.texture.width(), patch.texture.height());
    layer.composite(out, apply_transform(patch.texture, t));
  }
  return out;
}

ImagePlane render_patched_infrared(const DualFrame& frame, const PatchSpec& patch,
                                   const EvalOptions& options) {
  const PlacementConfig cfg = patch_placement(patch, options);
  ImagePlane out = *frame.infrared;
  for (const auto& person : frame.persons) {
    const Placement where = placement_rect(person, cfg, out.width(), out.height());
    paint_infrared(out, rasterize(patch.shape, where.anchor, out.width(), out.height()),
                   options.thermal);
  }
  return out;
}

EvalReport evaluate_patch(const PatchSpec& patch, const DatasetStore& store,
                          const DetectorPair& detectors, const EvalOptions& options) {
  patch.validate();
  options.eot.validate();
  options.thermal.validate();
  if (store.frames.empty()) throw Error(ErrorKind::InvalidArgument, "evaluate_patch: empty dataset");

  const bool any_visible = store.frame_count(Modality::Visible) > 0;
  const bool any_infrared = store.frame_count(Modality::Infrared) > 0;
  if (any_visible && detectors.visible == nullptr) {
    throw Error(ErrorKind::Config, "dataset has visible frames but no visible detector is configured");
  }
  if (any_infrared && detectors.infrared == nullptr) {
    throw Error(ErrorKind::Config, "dataset has infrared frames but no infrared detector is configured");
  }

  std::vector<FrameRow> rows(store.frames.size());
  parallel_for(store.frames.size(), options.workers, [&](std::size_t i) {
    const DualFrame& frame = store.frames[i];
    FrameRow row;
    row.frame_id = frame.id;
    row.persons = static_cast<long>(frame.persons.size());
    try {
      if (frame.visible) {
        const auto clean = detectors.visible->detect(*frame.visible, frame.persons);
        const auto patched_img = render_patched_visible(frame, i, patch, options);
        const auto patched = detectors.visible->detect(patched_img, frame.persons);
        row.visible_clean = count_matched(frame.persons, clean, options.match);
        row.visible_patch = count_matched(frame.persons, patched, options.match);
      }
      if (frame.infrared) {
        const auto clean = detectors.infrared->detect(*frame.infrared, frame.persons);
        const auto patched_img = render_patched_infrared(frame, patch, options);
        const auto patched = detectors.infrared->detect(patched_img, frame.persons);
        row.infrared_clean = count_matched(frame.persons, clean, options.match);
        row.infrared_patch = count_matched(frame.persons, patched, options.match);
      }
    } catch (const Error& e) {
      if (!options.keep_going || e.kind() != ErrorKind::Detector) throw;
      row.visible_clean.reset();
      row.visible_patch.reset();
      row.infrared_clean.reset();
      row.infrared_patch.reset();
      row.status = std::string("failed: ") + e.what();
    }
    rows[i] = std::move(row);
  });

  EvalReport report;
  report.config_hash = options.config_hash;
  report.patch_ref = options.patch_ref;
  auto reduce = [&](Modality m, DetectorAdapter* det) {
    ModalityResult r;
    r.detector = det->name();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const FrameRow& row = rows[i];
      const auto& clean = m == Modality::Visible ? row.visible_clean : row.infrared_clean;
      const auto& patched = m == Modality::Visible ? row.visible_patch : row.infrared_patch;
      if (!clean) continue;
      r.n_persons += row.persons;
      r.n_clean += *clean;
      r.n_patch += *patched;
    }
    if (r.n_clean == 0) {
      throw Error(ErrorKind::Numeric, "ASR undefined: no persons detected on clean " +
                                          std::string(to_string(m)) + " frames");
    }
    r.asr = asr(r.n_clean, r.n_patch);
    report.modalities[std::string(to_string(m))] = r;
  };
  if (any_visible) reduce(Modality::Visible, detectors.visible);
  if (any_infrared) reduce(Modality::Infrared, detectors.infrared);
  report.frames = std::move(rows);
  return report;
}

namespace {

nlohmann::json opt_json(const std::optional<long>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<long> opt_from(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  return doc[key].get<long>();
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json mods = nlohmann::json::object();
  for (const auto& [name, r] : report.modalities) {
    mods[name] = {{"detector", r.detector},
                  {"n_persons", r.n_persons},
                  {"n_clean", r.n_clean},
                  {"n_patch", r.n_patch},
                  {"asr", r.asr}};
  }
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : report.frames) {
    frames.push_back({{"id", f.frame_id},
                      {"persons", f.persons},
                      {"visible_clean", opt_json(f.visible_clean)},
                      {"visible_patch", opt_json(f.visible_patch)},
                      {"infrared_clean", opt_json(f.infrared_clean)},
                      {"infrared_patch", opt_json(f.infrared_patch)},
                      {"status", f.status}});
  }
  return {{"config_hash", report.config_hash},
          {"patch", report.patch_ref},
          {"modalities", mods},
          {"frames", frames}};
}

EvalReport report_from_json(const nlohmann::json& doc) {
  try {
    EvalReport report;
    report.config_hash = doc.at("config_hash").get<std::string>();
    report.patch_ref = doc.at("patch").get<std::string>();
    for (const auto& [name, r] : doc.at("modalities").items()) {
      ModalityResult m;
      m.detector = r.at("detector").get<std::string>();
      m.n_persons = r.at("n_persons").get<long>();
      m.n_clean = r.at("n_clean").get<long>();
      m.n_patch = r.at("n_patch").get<long>();
      m.asr = r.at("asr").get<double>();
      report.modalities[name] = m;
    }
    for (const auto& f : doc.at("frames")) {
      FrameRow row;
      row.frame_id = f.at("id").get<std::string>();
      row.persons = f.at("persons").get<long>();
      row.visible_clean = opt_from(f, "visible_clean");
      row.visible_patch = opt_from(f, "visible_patch");
      row.infrared_clean = opt_from(f, "infrared_clean");
      row.infrared_patch = opt_from(f, "infrared_patch");
      row.status = f.at("status").get<std::string>();
      report.frames.push_back(std::move(row));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed report: ") + e.what());
  }
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return report_from_json(nlohmann::json::parse(buf.str()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "frame_id,persons,visible_clean,visible_patch,infrared_clean,infrared_patch,status\n";
  auto cell = [](const std::optional<long>& v) { return v ? std::to_string(*v) : std::string(); };
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  for (const auto& f : report.frames) {
    out << quote(f.frame_id) << ',' << f.persons << ',' << cell(f.visible_clean) << ','
        << cell(f.visible_patch) << ',' << cell(f.infrared_clean) << ','
        << cell(f.infrared_patch) << ',' << quote(f.status) << '\n';
  }
  return out.str();
}

namespace {

// Grouped bars, one group per modality with one bar per detector. The y
// axis spans [min(0, lowest asr), 1] with gridlines every 0.25.
void write_bar_chart(const EvalReport& report, const std::filesystem::path& path) {
  constexpr int kWidth = 480, kHeight = 300, kLeft = 40, kRight = 20, kTop = 20, kBottom = 30;
  std::vector<unsigned char> px(static_cast<std::size_t>(kWidth) * kHeight * 3, 255);
  auto fill = [&](int x0, int y0, int x1, int y1, unsigned char r, unsigned char g, unsigned char b) {
    for (int y = std::max(0, y0); y < std::min(kHeight, y1); ++y) {
      for (int x = std::max(0, x0); x < std::min(kWidth, x1); ++x) {
        const std::size_t i = (static_cast<std::size_t>(y) * kWidth + x) * 3;
        px[i] = r;
        px[i + 1] = g;
        px[i + 2] = b;
      }
    }
  };
  double lo = 0.0;
  for (const auto& [_, r] : report.modalities) lo = std::min(lo, r.asr);
  lo = std::floor(lo * 4.0) / 4.0;
  const int plot_h = kHeight - kTop - kBottom;
  auto y_of = [&](double v) {
    return kTop + static_cast<int>(std::lround((1.0 - v) / (1.0 - lo) * plot_h));
  };
  for (double g = lo; g <= 1.0 + 1e-9; g += 0.25) {
    fill(kLeft, y_of(g), kWidth - kRight, y_of(g) + 1, 220, 220, 220);
  }
  fill(kLeft, kTop, kLeft + 1, kTop + plot_h + 1, 0, 0, 0);
  fill(kLeft, y_of(0.0), kWidth - kRight, y_of(0.0) + 1, 0, 0, 0);

  const int groups = std::max<int>(1, static_cast<int>(report.modalities.size()));
  const int group_w = (kWidth - kLeft - kRight) / groups;
  int gi = 0;
  for (const auto& [name, r] : report.modalities) {
    const bool ir = name == "infrared";
    const int x0 = kLeft + gi * group_w + group_w / 4;
    const int x1 = kLeft + gi * group_w + 3 * group_w / 4;
    const int ya = y_of(std::max(r.asr, lo));
    const int yz = y_of(0.0);
    fill(x0, std::min(ya, yz), x1, std::max(ya, yz) + 1, ir ? 200 : 40, ir ? 60 : 90, ir ? 40 : 200);
    // Modality swatch under the axis.
    fill(x0, kHeight - kBottom + 8, x1, kHeight - kBottom + 16, ir ? 200 : 40, ir ? 60 : 90,
         ir ? 40 : 200);
    ++gi;
  }
  write_rgb8_png(path, kWidth, kHeight, px);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const EvalReport& report,
                                               const std::filesystem::path& out_dir,
                                               std::span<const ReportFormat> formats) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (ReportFormat f : formats) {
    switch (f) {
      case ReportFormat::Json: {
        const auto p = out_dir / "report.json";
        write_text(p, report_to_json(report).dump(2) + "\n");
        written.push_back(p);
        break;
      }
      case ReportFormat::Csv: {
        const auto p = out_dir / "report.csv";
        write_text(p, report_csv(report));
        written.push_back(p);
        break;
      }
      case ReportFormat::Png: {
        const auto p = out_dir / "asr_bars.png";
        write_bar_chart(report, p);
        written.push_back(p);
        break;
      }
    }
  }
  return written;
}

}  // namespace dualpatch
