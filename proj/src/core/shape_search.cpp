#include "dualpatch/shape_search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dualpatch/error.hpp"
#include "dualpatch/hash.hpp"
#include "dualpatch/log.hpp"
#include "dualpatch/parallel.hpp"

namespace dualpatch {

void SearchConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, "shape_search: " + m); };
  if (generations < 1) fail("generations must be >= 1");
  if (population < 1) fail("population must be >= 1");
  if (top_k < 1) fail("top_k must be >= 1");
  if (top_k > population) fail("top_k must not exceed population");
  if (!(diversity_iou > 0.0 && diversity_iou <= 1.0)) fail("diversity_iou must lie in (0, 1]");
  if (!(sigma_radius >= 0.0) || !(sigma_angle >= 0.0)) fail("mutation scales must be >= 0");
  if (min_vertices < kMinVertices) fail("min_vertices must be >= 3");
  if (max_vertices < min_vertices) fail("max_vertices must be >= min_vertices");
  if (max_vertices > 64) fail("max_vertices must be <= 64");
  placement.validate();
  thermal.validate();
}

namespace {

constexpr int kMaxAttempts = 100;

bool better(const ShapeCandidate& a, const ShapeCandidate& b) {
  if (a.asr != b.asr) return a.asr > b.asr;
  return a.lineage_id < b.lineage_id;
}

std::vector<PolarVertex> copy_vertices(const PolygonShape& s) {
  return {s.vertices().begin(), s.vertices().end()};
}

PolygonShape finish(std::vector<PolarVertex> v, const SearchConfig& config) {
  return normalize_area(PolygonShape(std::move(v), config.max_vertices), kUnitPatchArea);
}

PolygonShape perturb_radius(const PolygonShape& shape, Rng& rng, const SearchConfig& config) {
  auto v = copy_vertices(shape);
  const std::size_t i = rng.index(v.size());
  v[i].radius *= std::exp(rng.normal(0.0, config.sigma_radius));
  return finish(std::move(v), config);
}

}  // namespace

PolygonShape mutate_with(const PolygonShape& shape, MutationOp op, Rng& rng,
                         const SearchConfig& config, MutationOp* applied) {
  auto report = [&](MutationOp o) {
    if (applied) *applied = o;
  };
  switch (op) {
    case MutationOp::Radius:
      break;
    case MutationOp::Angle: {
      for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        auto v = copy_vertices(shape);
        const std::size_t i = rng.index(v.size());
        v[i].angle += rng.normal(0.0, config.sigma_angle);
        if (validate(v, config.max_vertices).empty()) {
          report(MutationOp::Angle);
          return finish(std::move(v), config);
        }
      }
      break;
    }
    case MutationOp::Insert: {
      if (shape.size() >= config.max_vertices) break;
      auto v = copy_vertices(shape);
      const std::size_t i = rng.index(v.size());
      const PolarVertex& a = v[i];
      const PolarVertex& b = v[(i + 1) % v.size()];
      // Cartesian midpoint of the edge, which lies on the boundary.
      const double mx = 0.5 * (a.radius * std::cos(a.angle) + b.radius * std::cos(b.angle));
      const double my = 0.5 * (a.radius * std::sin(a.angle) + b.radius * std::sin(b.angle));
      double angle = std::atan2(my, mx);
      if (angle < 0.0) angle += kTwoPi;
      if (angle >= kTwoPi) angle -= kTwoPi;
      const PolarVertex mid{std::hypot(mx, my), angle};
      auto pos = std::upper_bound(v.begin(), v.end(), mid.angle,
                                  [](double ang, const PolarVertex& p) { return ang < p.angle; });
      v.insert(pos, mid);
      if (validate(v, config.max_vertices).empty()) {
        report(MutationOp::Insert);
        return finish(std::move(v), config);
      }
      break;
    }
    case MutationOp::Delete: {
      if (shape.size() <= config.min_vertices) break;
      for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        auto v = copy_vertices(shape);
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(rng.index(v.size())));
        if (validate(v, config.max_vertices).empty()) {
          report(MutationOp::Delete);
          return finish(std::move(v), config);
        }
      }
      break;
    }
  }
  report(MutationOp::Radius);
  return perturb_radius(shape, rng, config);
}

PolygonShape mutate(const PolygonShape& shape, Rng& rng, const SearchConfig& config,
                    MutationOp* applied) {
  std::vector<MutationOp> ops{MutationOp::Radius, MutationOp::Angle};
  if (shape.size() < config.max_vertices) ops.push_back(MutationOp::Insert);
  if (shape.size() > config.min_vertices) ops.push_back(MutationOp::Delete);
  return mutate_with(shape, ops[rng.index(ops.size())], rng, config, applied);
}

double evaluate_shape(const PolygonShape& shape, std::span<const DualFrame> frames,
                      DetectorAdapter& detector, const SearchConfig& config) {
  if (detector.modality() != Modality::Infrared) {
    throw Error(ErrorKind::InvalidArgument, "evaluate_shape: detector must be infrared");
  }
  long total = 0;
  long attacked = 0;
  for (const auto& frame : frames) {
    if (!frame.infrared || frame.persons.empty()) continue;
    ImagePlane patched = *frame.infrared;
    for (const auto& person : frame.persons) {
      const Placement where =
          placement_rect(person, config.placement, patched.width(), patched.height());
      paint_infrared(patched, rasterize(shape, where.anchor, patched.width(), patched.height()),
                     config.thermal);
    }
    const auto detections = detector.detect(patched, frame.persons);
    const auto matched = match_persons(frame.persons, detections, config.match);
    total += static_cast<long>(frame.persons.size());
    attacked += static_cast<long>(std::count(matched.begin(), matched.end(), false));
  }
  if (total == 0) {
    throw Error(ErrorKind::InvalidArgument, "evaluate_shape: empty dataset (no infrared persons)");
  }
  return static_cast<double>(attacked) / static_cast<double>(total);
}

BitMask canonical_mask(const PolygonShape& shape) {
  return rasterize(shape, Rect{16.0, 16.0, 32.0, 32.0}, 64, 64);
}

std::vector<ShapeCandidate> select_diverse(std::vector<ShapeCandidate> pool, int top_k,
                                           double diversity_iou) {
  std::sort(pool.begin(), pool.end(), better);
  std::vector<ShapeCandidate> archive;
  std::vector<BitMask> masks;
  for (auto& c : pool) {
    if (static_cast<int>(archive.size()) >= top_k) break;
    BitMask m = canonical_mask(c.shape);
    bool diverse = true;
    for (const auto& other : masks) {
      if (!(mask_iou(m, other) < diversity_iou)) {
        diverse = false;
        break;
      }
    }
    if (!diverse) continue;
    masks.push_back(std::move(m));
    archive.push_back(std::move(c));
  }
  return archive;
}

nlohmann::json candidate_to_json(const ShapeCandidate& c) {
  return {{"shape", shape_to_json(c.shape)},
          {"asr", c.asr},
          {"generation", c.generation},
          {"lineage_id", c.lineage_id}};
}

ShapeCandidate candidate_from_json(const nlohmann::json& doc, std::size_t max_vertices) {
  try {
    return ShapeCandidate{shape_from_json(doc.at("shape"), max_vertices), doc.at("asr").get<double>(),
                          doc.at("generation").get<int>(), doc.at("lineage_id").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::State, std::string("malformed candidate: ") + e.what());
  }
}

namespace {

struct SearchState {
  int generation = -1;
  std::vector<ShapeCandidate> population;
  std::vector<ShapeCandidate> history;
  std::vector<double> best;
  std::uint64_t next_lineage = 0;
  std::size_t evaluations = 0;
};

nlohmann::json candidates_json(const std::vector<ShapeCandidate>& cs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : cs) out.push_back(candidate_to_json(c));
  return out;
}

std::string search_hash(const SearchConfig& config, const SearchHooks& hooks) {
  if (!hooks.config_hash.empty()) return hooks.config_hash;
  const nlohmann::json doc{{"generations", config.generations},
                           {"population", config.population},
                           {"top_k", config.top_k},
                           {"diversity_iou", config.diversity_iou},
                           {"sigma_radius", config.sigma_radius},
                           {"sigma_angle", config.sigma_angle},
                           {"min_vertices", config.min_vertices},
                           {"max_vertices", config.max_vertices},
                           {"seed", config.seed},
                           {"area_fraction", config.placement.area_fraction},
                           {"vertical_center", config.placement.vertical_center}};
  return sha256_hex(doc.dump());
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int generation) {
  char name[32];
  std::snprintf(name, sizeof(name), "gen_%04d.json", generation);
  return dir / name;
}

void write_checkpoint(const std::filesystem::path& dir, const std::string& hash,
                      const SearchState& s, const Rng& rng, const SearchConfig& config) {
  std::filesystem::create_directories(dir);
  const nlohmann::json doc{
      {"config_hash", hash},
      {"generation", s.generation},
      {"population", candidates_json(s.population)},
      {"history", candidates_json(s.history)},
      {"archive", candidates_json(select_diverse(s.history, config.top_k, config.diversity_iou))},
      {"best_per_generation", s.best},
      {"next_lineage", s.next_lineage},
      {"evaluations", s.evaluations},
      {"rng_state", rng.state()}};
  const auto final_path = checkpoint_path(dir, s.generation);
  const auto tmp = final_path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint " + tmp);
    out << doc.dump() << '\n';
    if (!out) throw Error(ErrorKind::Io, "checkpoint write failed: " + tmp);
  }
  std::filesystem::rename(tmp, final_path);
}

bool try_resume(const std::filesystem::path& dir, const std::string& hash, SearchState& s,
                Rng& rng, const SearchConfig& config) {
  if (!std::filesystem::is_directory(dir)) return false;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("gen_", 0) == 0 && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.rbegin(), files.rend());
  for (const auto& path : files) {
    try {
      std::ifstream in(path, std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      const auto doc = nlohmann::json::parse(buf.str());
      if (doc.at("config_hash").get<std::string>() != hash) continue;
      SearchState r;
      r.generation = doc.at("generation").get<int>();
      if (r.generation >= config.generations) continue;
      for (const auto& c : doc.at("population")) r.population.push_back(candidate_from_json(c, config.max_vertices));
      for (const auto& c : doc.at("history")) r.history.push_back(candidate_from_json(c, config.max_vertices));
      r.best = doc.at("best_per_generation").get<std::vector<double>>();
      r.next_lineage = doc.at("next_lineage").get<std::uint64_t>();
      r.evaluations = doc.at("evaluations").get<std::size_t>();
      rng.restore(doc.at("rng_state").get<std::string>());
      s = std::move(r);
      return true;
    } catch (const std::exception& e) {
      log(LogLevel::Warn, "ignoring unreadable checkpoint " + path.string() + ": " + e.what());
    }
  }
  return false;
}

void evaluate_all(std::vector<ShapeCandidate>& cands, std::span<const DualFrame> frames,
                  DetectorAdapter& detector, const SearchConfig& config) {
  parallel_for(cands.size(), config.workers, [&](std::size_t i) {
    cands[i].asr = evaluate_shape(cands[i].shape, frames, detector, config);
  });
}

}  // namespace

SearchResult search(std::span<const DualFrame> frames, DetectorAdapter& detector,
                    const SearchConfig& config, const SearchHooks& hooks) {
  config.validate();
  if (detector.modality() != Modality::Infrared) {
    throw Error(ErrorKind::InvalidArgument, "search: detector must be infrared");
  }
  const std::string hash = search_hash(config, hooks);
  Rng rng(config.seed);
  SearchState state;
  SearchResult result;

  if (hooks.checkpoint_dir && try_resume(*hooks.checkpoint_dir, hash, state, rng, config)) {
    result.resumed_from = state.generation;
    log(LogLevel::Info, "shape search resumed after generation " + std::to_string(state.generation));
  } else {
    std::vector<std::size_t> templates;
    for (std::size_t k : {4u, 6u, 8u, 12u}) {
      if (k >= config.min_vertices && k <= config.max_vertices) templates.push_back(k);
    }
    if (templates.empty()) templates.push_back(config.min_vertices);
    std::vector<ShapeCandidate> gen0;
    for (int i = 0; i < config.population; ++i) {
      const std::size_t k = templates[static_cast<std::size_t>(i) % templates.size()];
      PolygonShape base = PolygonShape::regular(k, kUnitPatchArea);
      if (static_cast<std::size_t>(i) >= templates.size()) base = mutate(base, rng, config);
      gen0.push_back({std::move(base), 0.0, 0, state.next_lineage++});
    }
    evaluate_all(gen0, frames, detector, config);
    state.evaluations += gen0.size();
    state.history = gen0;
    std::sort(gen0.begin(), gen0.end(), better);
    state.population = std::move(gen0);
    state.generation = 0;
    state.best.push_back(state.population.front().asr);
    if (hooks.checkpoint_dir) write_checkpoint(*hooks.checkpoint_dir, hash, state, rng, config);
    if (hooks.on_generation) hooks.on_generation(0, state.best.back());
  }

  while (state.generation + 1 < config.generations) {
    const int g = state.generation + 1;
    std::vector<ShapeCandidate> children;
    children.reserve(static_cast<std::size_t>(config.population));
    for (int c = 0; c < config.population; ++c) {
      const auto& a = state.population[rng.index(state.population.size())];
      const auto& b = state.population[rng.index(state.population.size())];
      const auto& parent = better(a, b) ? a : b;
      children.push_back({mutate(parent.shape, rng, config), 0.0, g, state.next_lineage++});
    }
    evaluate_all(children, frames, detector, config);
    state.evaluations += children.size();
    state.history.insert(state.history.end(), children.begin(), children.end());

    std::vector<ShapeCandidate> pool = std::move(state.population);
    pool.insert(pool.end(), children.begin(), children.end());
    std::sort(pool.begin(), pool.end(), better);
    pool.erase(pool.begin() + config.population, pool.end());
    state.population = std::move(pool);
    state.generation = g;
    state.best.push_back(std::max(state.best.back(), state.population.front().asr));
    if (hooks.checkpoint_dir) write_checkpoint(*hooks.checkpoint_dir, hash, state, rng, config);
    if (hooks.on_generation) hooks.on_generation(g, state.best.back());
  }

  result.archive = select_diverse(state.history, config.top_k, config.diversity_iou);
  result.best_per_generation = state.best;
  result.evaluations = state.evaluations;
  return result;
}

}  // namespace dualpatch
