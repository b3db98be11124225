#include "dualpatch/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "dualpatch/error.hpp"
#include "dualpatch/hash.hpp"
#include "dualpatch/rng.hpp"

namespace dualpatch {

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& msg) {
  throw Error(ErrorKind::Config, key.empty() ? msg : key + ": " + msg);
}

// Strict view over one JSON object: every key read is recorded, and
// finish() rejects whatever is left.
class Section {
 public:
  Section(const nlohmann::json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) config_error(path_, "expected an object");
  }

  std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

  const nlohmann::json* get(const std::string& name) {
    seen_.insert(name);
    auto it = doc_.find(name);
    return it == doc_.end() ? nullptr : &*it;
  }

  bool has(const std::string& name) const { return doc_.contains(name); }

  void number(const std::string& name, double& out) {
    if (const auto* v = get(name)) {
      if (!v->is_number()) config_error(key(name), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) config_error(key(name), "must be finite");
    }
  }

  template <typename Int>
  void integer(const std::string& name, Int& out) {
    if (const auto* v = get(name)) {
      if (!v->is_number_integer()) config_error(key(name), "expected an integer");
      if (v->is_number_unsigned()) {
        const auto u = v->get<std::uint64_t>();
        if (!std::in_range<Int>(u)) {
          config_error(key(name), "out of range");
        }
        out = static_cast<Int>(u);
      } else {
        const auto s = v->get<std::int64_t>();
        if constexpr (std::is_unsigned_v<Int>) {
          if (s < 0) config_error(key(name), "must be >= 0");
        }
        if (!std::in_range<Int>(s)) {
          config_error(key(name), "out of range");
        }
        out = static_cast<Int>(s);
      }
    }
  }

  void boolean(const std::string& name, bool& out) {
    if (const auto* v = get(name)) {
      if (!v->is_boolean()) config_error(key(name), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& name, std::string& out) {
    if (const auto* v = get(name)) {
      if (!v->is_string()) config_error(key(name), "expected a string");
      out = v->get<std::string>();
    }
  }

  void interval(const std::string& name, Interval& out, double factor = 1.0) {
    if (const auto* v = get(name)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
        config_error(key(name), "expected [min, max]");
      }
      out = {(*v)[0].get<double>() * factor, (*v)[1].get<double>() * factor};
      if (!(out.min <= out.max)) config_error(key(name), "min must not exceed max");
    }
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) config_error("", "unknown key \"" + key(it.key()) + "\"");
    }
  }

 private:
  const nlohmann::json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

constexpr double kDeg = kPi / 180.0;

template <typename F>
void validated(const std::string& section, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    config_error(section, e.what());
  }
}

void parse_eot(Section& parent, const std::string& name, EotRanges& eot) {
  const auto* v = parent.get(name);
  if (!v) return;
  Section s(*v, parent.key(name));
  s.interval("rotation_deg", eot.rotation, kDeg);
  s.interval("scale", eot.scale);
  s.interval("brightness", eot.brightness);
  s.interval("blur_sigma", eot.blur_sigma);
  s.finish();
  validated(parent.key(name), [&] { eot.validate(); });
}

nlohmann::json eot_json(const EotRanges& e) {
  return {{"rotation_deg", {e.rotation.min / kDeg, e.rotation.max / kDeg}},
          {"scale", {e.scale.min, e.scale.max}},
          {"brightness", {e.brightness.min, e.brightness.max}},
          {"blur_sigma", {e.blur_sigma.min, e.blur_sigma.max}}};
}

std::optional<DetectorSpec> parse_detector(Section& parent, const std::string& slot,
                                           Modality modality) {
  DetectorSpec spec;
  if (!parent.has(slot)) {
    parent.get(slot);
    spec.type = modality == Modality::Visible ? "smooth_color" : "mock_coverage";
    return spec;
  }
  const auto* v = parent.get(slot);
  if (v->is_null()) return std::nullopt;
  Section s(*v, parent.key(slot));
  s.string("type", spec.type);
  if (spec.type.empty()) config_error(s.key("type"), "required");
  if (spec.type == "mock_coverage") {
    if (modality != Modality::Infrared) config_error(s.key("type"), "mock_coverage is an infrared detector");
    s.number("c0", spec.coverage.c0);
    s.number("rho", spec.coverage.rho);
    s.number("hot_threshold", spec.coverage.hot_threshold);
    validated(parent.key(slot), [&] { spec.coverage.validate(); });
  } else if (spec.type == "smooth_color") {
    if (modality != Modality::Visible) config_error(s.key("type"), "smooth_color is a visible detector");
    s.number("c0", spec.smooth.c0);
    s.number("lambda", spec.smooth.lambda);
    if (const auto* mu = s.get("mu")) {
      if (!mu->is_array() || mu->size() != 3) config_error(s.key("mu"), "expected [r, g, b]");
      for (int c = 0; c < 3; ++c) {
        if (!(*mu)[c].is_number()) config_error(s.key("mu"), "expected numbers");
        spec.smooth.mu[c] = (*mu)[c].get<double>();
      }
    }
    validated(parent.key(slot), [&] { spec.smooth.validate(); });
  } else if (spec.type == "subprocess") {
    auto& sp = spec.subprocess;
    sp.modality = modality;
    const auto* cmd = s.get("command");
    if (!cmd || !cmd->is_array() || cmd->empty()) {
      config_error(s.key("command"), "expected a non-empty array of strings");
    }
    for (const auto& part : *cmd) {
      if (!part.is_string()) config_error(s.key("command"), "expected strings");
      sp.command.push_back(part.get<std::string>());
    }
    std::string declared;
    s.string("modality", declared);
    if (!declared.empty() && declared != to_string(modality)) {
      config_error(s.key("modality"), "must match the detector slot \"" + slot + "\"");
    }
    double timeout_s = 30.0;
    s.number("timeout_s", timeout_s);
    if (!(timeout_s > 0.0)) config_error(s.key("timeout_s"), "must be > 0");
    sp.timeout = std::chrono::milliseconds(static_cast<long long>(std::llround(timeout_s * 1000.0)));
    if (sp.timeout.count() < 1) sp.timeout = std::chrono::milliseconds(1);
    s.string("name", sp.name);
    if (sp.name.empty()) config_error(s.key("name"), "must not be empty");
  } else {
    config_error(s.key("type"), "unknown detector type \"" + spec.type +
                                    "\" (expected mock_coverage, smooth_color or subprocess)");
  }
  s.finish();
  return spec;
}

nlohmann::json detector_json(const std::optional<DetectorSpec>& spec) {
  if (!spec) return nullptr;
  nlohmann::json out{{"type", spec->type}};
  if (spec->type == "mock_coverage") {
    out["c0"] = spec->coverage.c0;
    out["rho"] = spec->coverage.rho;
    out["hot_threshold"] = spec->coverage.hot_threshold;
  } else if (spec->type == "smooth_color") {
    out["c0"] = spec->smooth.c0;
    out["lambda"] = spec->smooth.lambda;
    out["mu"] = spec->smooth.mu;
  } else {
    out["command"] = spec->subprocess.command;
    out["modality"] = std::string(to_string(spec->subprocess.modality));
    out["timeout_s"] = static_cast<double>(spec->subprocess.timeout.count()) / 1000.0;
    out["name"] = spec->subprocess.name;
  }
  return out;
}

std::string format_name(ReportFormat f) {
  switch (f) {
    case ReportFormat::Json: return "json";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Png: return "png";
  }
  return "json";
}

}  // namespace

std::filesystem::path RunConfig::manifest_path() const {
  const std::filesystem::path p(manifest);
  return p.is_absolute() ? p : base_dir / p;
}

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.base_dir = base_dir;
  Section root(doc, "");
  root.integer("seed", cfg.seed);

  if (const auto* v = root.get("dataset")) {
    Section s(*v, "dataset");
    s.string("manifest", cfg.manifest);
    s.finish();
  }
  if (cfg.manifest.empty()) config_error("dataset.manifest", "required");

  {
    static const nlohmann::json empty = nlohmann::json::object();
    const auto* v = root.get("detectors");
    Section s(v ? *v : empty, "detectors");
    cfg.visible_detector = parse_detector(s, "visible", Modality::Visible);
    cfg.infrared_detector = parse_detector(s, "infrared", Modality::Infrared);
    s.finish();
  }
  if (!cfg.visible_detector && !cfg.infrared_detector) {
    config_error("detectors", "at least one detector is required");
  }

  PlacementConfig placement;
  ThermalParams thermal;
  if (const auto* v = root.get("shape_search")) {
    auto& ss = cfg.shape_search;
    Section s(*v, "shape_search");
    s.integer("generations", ss.generations);
    s.integer("population", ss.population);
    s.integer("top_k", ss.top_k);
    s.number("diversity_iou", ss.diversity_iou);
    s.number("sigma_radius", ss.sigma_radius);
    s.number("sigma_angle", ss.sigma_angle);
    s.integer("min_vertices", ss.min_vertices);
    s.integer("max_vertices", ss.max_vertices);
    s.number("area_fraction", placement.area_fraction);
    s.number("vertical_center", placement.vertical_center);
    if (const auto* t = s.get("thermal")) {
      Section ts(*t, s.key("thermal"));
      std::string mode = "fixed";
      ts.string("mode", mode);
      if (mode == "fixed") {
        thermal.mode = ThermalMode::Fixed;
      } else if (mode == "additive") {
        thermal.mode = ThermalMode::Additive;
      } else {
        config_error(ts.key("mode"), "expected \"fixed\" or \"additive\"");
      }
      ts.number("v_hot", thermal.v_hot);
      ts.number("delta_hot", thermal.delta_hot);
      ts.finish();
    }
    s.finish();
  }

  if (const auto* v = root.get("texture_opt")) {
    auto& to = cfg.texture_opt;
    Section s(*v, "texture_opt");
    s.integer("steps", to.steps);
    s.number("learning_rate", to.learning_rate);
    s.number("lambda_tv", to.lambda_tv);
    s.integer("eot_samples", to.eot_samples);
    if (const auto* ts = s.get("texture_size")) {
      if (!ts->is_array() || ts->size() != 2 || !(*ts)[0].is_number_integer() ||
          !(*ts)[1].is_number_integer()) {
        config_error(s.key("texture_size"), "expected [width, height]");
      }
      to.texture_width = (*ts)[0].get<int>();
      to.texture_height = (*ts)[1].get<int>();
    }
    s.number("margin", to.margin);
    std::string init = "gray";
    s.string("init", init);
    if (init == "gray") {
      to.init = TextureInit::Gray;
    } else if (init == "random") {
      to.init = TextureInit::Random;
    } else {
      config_error(s.key("init"), "expected \"gray\" or \"random\"");
    }
    s.boolean("fixed_eot", to.fixed_eot);
    s.integer("max_halvings", to.max_halvings);
    if (const auto* a = s.get("adam")) {
      Section as(*a, s.key("adam"));
      as.number("beta1", to.adam_beta1);
      as.number("beta2", to.adam_beta2);
      as.number("epsilon", to.adam_epsilon);
      as.finish();
    }
    std::string policy = "per_shape";
    s.string("policy", policy);
    if (policy == "per_shape") {
      cfg.texture_policy = TexturePolicy::PerShape;
    } else if (policy == "best_only") {
      cfg.texture_policy = TexturePolicy::BestOnly;
    } else {
      config_error(s.key("policy"), "expected \"per_shape\" or \"best_only\"");
    }
    parse_eot(s, "eot", to.eot);
    s.finish();
  }

  if (const auto* v = root.get("eval")) {
    Section s(*v, "eval");
    s.number("iou_min", cfg.eval.match.iou_min);
    s.number("score_min", cfg.eval.match.score_min);
    s.boolean("apply_eot", cfg.eval.apply_eot);
    parse_eot(s, "eot", cfg.eval.eot);
    s.finish();
  }
  if (!(cfg.eval.match.iou_min > 0.0 && cfg.eval.match.iou_min <= 1.0)) {
    config_error("eval.iou_min", "must lie in (0, 1]");
  }
  if (!(cfg.eval.match.score_min >= 0.0 && cfg.eval.match.score_min <= 1.0)) {
    config_error("eval.score_min", "must lie in [0, 1]");
  }

  if (const auto* v = root.get("output")) {
    Section s(*v, "output");
    s.string("dir", cfg.output.dir);
    if (cfg.output.dir.empty()) config_error("output.dir", "must not be empty");
    if (const auto* f = s.get("formats")) {
      if (!f->is_array() || f->empty()) config_error(s.key("formats"), "expected a non-empty array");
      cfg.output.formats.clear();
      for (const auto& name : *f) {
        const std::string n = name.is_string() ? name.get<std::string>() : "";
        if (n == "json") {
          cfg.output.formats.push_back(ReportFormat::Json);
        } else if (n == "csv") {
          cfg.output.formats.push_back(ReportFormat::Csv);
        } else if (n == "png") {
          cfg.output.formats.push_back(ReportFormat::Png);
        } else {
          config_error(s.key("formats"), "expected \"json\", \"csv\" or \"png\"");
        }
      }
    }
    s.finish();
  }
  root.finish();

  cfg.shape_search.placement = placement;
  cfg.shape_search.thermal = thermal;
  cfg.shape_search.match = cfg.eval.match;
  cfg.texture_opt.placement = placement;
  cfg.shape_search.seed = stage_seed(cfg, SeedStream::ShapeSearch);
  cfg.texture_opt.seed = stage_seed(cfg, SeedStream::Texture);
  validated("shape_search", [&] { cfg.shape_search.validate(); });
  validated("texture_opt", [&] { cfg.texture_opt.validate(); });
  return cfg;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(doc, base_dir);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const auto base = std::filesystem::absolute(path).parent_path();
  return parse_run_config(buf.str(), base);
}

nlohmann::json resolved_config(const RunConfig& c) {
  const auto& ss = c.shape_search;
  const auto& to = c.texture_opt;
  nlohmann::json formats = nlohmann::json::array();
  for (auto f : c.output.formats) formats.push_back(format_name(f));
  return {
      {"seed", c.seed},
      {"dataset", {{"manifest", c.manifest}}},
      {"detectors",
       {{"visible", detector_json(c.visible_detector)},
        {"infrared", detector_json(c.infrared_detector)}}},
      {"shape_search",
       {{"generations", ss.generations},
        {"population", ss.population},
        {"top_k", ss.top_k},
        {"diversity_iou", ss.diversity_iou},
        {"sigma_radius", ss.sigma_radius},
        {"sigma_angle", ss.sigma_angle},
        {"min_vertices", ss.min_vertices},
        {"max_vertices", ss.max_vertices},
        {"area_fraction", ss.placement.area_fraction},
        {"vertical_center", ss.placement.vertical_center},
        {"thermal",
         {{"mode", ss.thermal.mode == ThermalMode::Fixed ? "fixed" : "additive"},
          {"v_hot", ss.thermal.v_hot},
          {"delta_hot", ss.thermal.delta_hot}}}}},
      {"texture_opt",
       {{"steps", to.steps},
        {"learning_rate", to.learning_rate},
        {"lambda_tv", to.lambda_tv},
        {"eot_samples", to.eot_samples},
        {"texture_size", {to.texture_width, to.texture_height}},
        {"margin", to.margin},
        {"init", to.init == TextureInit::Gray ? "gray" : "random"},
        {"fixed_eot", to.fixed_eot},
        {"max_halvings", to.max_halvings},
        {"adam", {{"beta1", to.adam_beta1}, {"beta2", to.adam_beta2}, {"epsilon", to.adam_epsilon}}},
        {"policy", c.texture_policy == TexturePolicy::PerShape ? "per_shape" : "best_only"},
        {"eot", eot_json(to.eot)}}},
      {"eval",
       {{"iou_min", c.eval.match.iou_min},
        {"score_min", c.eval.match.score_min},
        {"apply_eot", c.eval.apply_eot},
        {"eot", eot_json(c.eval.eot)}}},
      {"output", {{"dir", c.output.dir}, {"formats", formats}}}};
}

std::string config_hash(const RunConfig& config) {
  nlohmann::json doc = resolved_config(config);
  doc["output"].erase("dir");
  return sha256_hex(doc.dump());
}

std::unique_ptr<DetectorAdapter> make_detector(const DetectorSpec& spec, Modality modality) {
  if (spec.type == "mock_coverage") {
    if (modality != Modality::Infrared) throw Error(ErrorKind::Config, "mock_coverage is infrared only");
    return std::make_unique<MockCoverageDetector>(spec.coverage);
  }
  if (spec.type == "smooth_color") {
    if (modality != Modality::Visible) throw Error(ErrorKind::Config, "smooth_color is visible only");
    return std::make_unique<SmoothColorDetector>(spec.smooth);
  }
  if (spec.type == "subprocess") {
    SubprocessConfig sc = spec.subprocess;
    sc.modality = modality;
    return std::make_unique<SubprocessDetector>(std::move(sc));
  }
  throw Error(ErrorKind::Config, "unknown detector type \"" + spec.type + "\"");
}

void override_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.shape_search.seed = stage_seed(config, SeedStream::ShapeSearch);
  config.texture_opt.seed = stage_seed(config, SeedStream::Texture);
}

std::uint64_t stage_seed(const RunConfig& config, SeedStream stream, std::uint64_t index) {
  return Rng::derive(Rng::derive(config.seed, static_cast<std::uint64_t>(stream)), index);
}

}  // namespace dualpatch
