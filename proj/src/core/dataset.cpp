#include "dualpatch/dataset.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "dualpatch/error.hpp"

namespace dualpatch {

void DualFrame::validate() const {
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorKind::InvalidArgument, "frame \"" + id + "\": " + msg);
  };
  if (!visible && !infrared) fail("at least one modality must be present");
  if (visible && visible->modality() != Modality::Visible) fail("visible plane has wrong modality");
  if (infrared && infrared->modality() != Modality::Infrared) fail("infrared plane has wrong modality");
  if (visible && infrared &&
      (visible->width() != infrared->width() || visible->height() != infrared->height())) {
    fail("visible and infrared images must share dimensions");
  }
  const double w = width();
  const double h = height();
  for (const auto& b : persons) {
    if (!(b.w > 0.0) || !(b.h > 0.0)) fail("person box needs w > 0 and h > 0");
    if (b.x < 0.0 || b.y < 0.0 || b.x + b.w > w || b.y + b.h > h) {
      fail("person box exceeds image bounds");
    }
  }
}

std::size_t DatasetStore::person_count(Modality modality) const {
  std::size_t n = 0;
  for (const auto& f : frames) {
    if (f.has(modality)) n += f.persons.size();
  }
  return n;
}

std::size_t DatasetStore::frame_count(Modality modality) const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.has(modality) ? 1 : 0;
  return n;
}

DatasetStore load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();

  DatasetStore store;
  store.manifest_path = manifest_path;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
    std::string frame_id = "?";
    auto fail = [&](ErrorKind kind, const std::string& msg) {
      throw Error(kind, where + ": frame \"" + frame_id + "\": " + msg);
    };

    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::InvalidArgument, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) fail(ErrorKind::InvalidArgument, "malformed record: expected an object");
    if (rec.contains("id") && rec["id"].is_string()) frame_id = rec["id"].get<std::string>();
    for (auto it = rec.begin(); it != rec.end(); ++it) {
      const auto& k = it.key();
      if (k != "id" && k != "visible" && k != "infrared" && k != "persons") {
        fail(ErrorKind::InvalidArgument, "malformed record: unknown key \"" + k + "\"");
      }
    }
    if (!rec.contains("id") || !rec["id"].is_string() || frame_id.empty()) {
      fail(ErrorKind::InvalidArgument, "malformed record: \"id\" must be a non-empty string");
    }
    if (!seen.insert(frame_id).second) fail(ErrorKind::InvalidArgument, "ids unique: duplicate id");

    DualFrame frame;
    frame.id = frame_id;
    for (Modality m : {Modality::Visible, Modality::Infrared}) {
      const std::string key(to_string(m));
      if (!rec.contains(key) || rec[key].is_null()) continue;
      if (!rec[key].is_string()) fail(ErrorKind::InvalidArgument, "\"" + key + "\" must be a path or null");
      const auto path = base / rec[key].get<std::string>();
      if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "missing file " + path.string());
      try {
        (m == Modality::Visible ? frame.visible : frame.infrared) = load_png(path, m);
      } catch (const Error& e) {
        fail(e.kind(), e.what());
      }
    }
    if (!rec.contains("persons") || !rec["persons"].is_array()) {
      fail(ErrorKind::InvalidArgument, "malformed record: \"persons\" must be an array");
    }
    for (const auto& p : rec["persons"]) {
      if (!p.is_object() || !p.contains("bbox") || !p["bbox"].is_array() || p["bbox"].size() != 4) {
        fail(ErrorKind::InvalidArgument, "malformed record: person needs \"bbox\": [x, y, w, h]");
      }
      for (const auto& v : p["bbox"]) {
        if (!v.is_number()) fail(ErrorKind::InvalidArgument, "malformed record: bbox must be numeric");
      }
      const auto& b = p["bbox"];
      frame.persons.push_back(
          {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
    }
    try {
      frame.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::InvalidArgument, where + ": " + e.what());
    }
    store.frames.push_back(std::move(frame));
  }
  if (store.frames.empty()) {
    throw Error(ErrorKind::InvalidArgument, manifest_path.string() + ": manifest has no records");
  }
  return store;
}

}  // namespace dualpatch
