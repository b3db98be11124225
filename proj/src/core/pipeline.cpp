#include "dualpatch/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dualpatch/error.hpp"
#include "dualpatch/log.hpp"

namespace dualpatch {

namespace {

const std::vector<std::string> kStages{"shape_search", "patches", "eval", "report"};

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
    out << doc.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::Io, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

std::string patch_name(std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "patch_%02zu", index);
  return name;
}

void clear_patch_dirs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("patch_", 0) == 0) {
      std::filesystem::remove_all(entry.path());
    }
  }
}

void require_hash(const nlohmann::json& doc, const std::string& expected,
                  const std::filesystem::path& source) {
  const std::string found = doc.value("config_hash", std::string());
  if (found != expected) {
    throw Error(ErrorKind::Config, source.string() + " was produced under config hash \"" + found +
                                       "\", current config hash is \"" + expected + "\"");
  }
}

}  // namespace

Pipeline::Pipeline(RunConfig config, RunOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  if (options_.out_dir.empty()) options_.out_dir = config_.output.dir;
  if (options_.workers < 1) throw Error(ErrorKind::InvalidArgument, "workers must be >= 1");
  config_.shape_search.workers = options_.workers;
  config_.texture_opt.workers = options_.workers;
  hash_ = config_hash(config_);
}

const DatasetStore& Pipeline::dataset() {
  if (!dataset_) dataset_ = load_dataset(config_.manifest_path());
  return *dataset_;
}

bool Pipeline::stage_complete(const std::string& stage) const {
  const auto path = options_.out_dir / stage / "stage.json";
  if (!std::filesystem::exists(path)) return false;
  try {
    const auto doc = read_json(path);
    return doc.value("config_hash", std::string()) == hash_ && doc.value("complete", false);
  } catch (const Error&) {
    return false;
  }
}

void Pipeline::mark_complete(const std::string& stage) const {
  write_json(options_.out_dir / stage / "stage.json",
             {{"stage", stage}, {"config_hash", hash_}, {"complete", true}});
  // Anything downstream was built from the previous outputs of this stage.
  auto it = std::find(kStages.begin(), kStages.end(), stage);
  for (++it; it != kStages.end(); ++it) {
    std::filesystem::remove(options_.out_dir / *it / "stage.json");
  }
}

std::vector<std::filesystem::path> Pipeline::patch_dirs() const {
  std::vector<std::filesystem::path> dirs;
  const auto root = options_.out_dir / "patches";
  if (std::filesystem::is_directory(root)) {
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("patch_", 0) == 0) {
        dirs.push_back(entry.path());
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

void Pipeline::write_run_config() const {
  nlohmann::json doc = resolved_config(config_);
  doc["config_hash"] = hash_;
  write_json(options_.out_dir / "config.json", doc);
}

void Pipeline::shape_search() {
  write_run_config();
  if (stage_complete("shape_search")) {
    log(LogLevel::Info, "shape_search: up to date, skipping");
    return;
  }
  if (!config_.infrared_detector) {
    throw Error(ErrorKind::Config, "shape search needs detectors.infrared");
  }
  auto detector = make_detector(*config_.infrared_detector, Modality::Infrared);
  const auto dir = options_.out_dir / "shape_search";
  SearchHooks hooks;
  hooks.checkpoint_dir = dir / "checkpoints";
  hooks.config_hash = hash_;
  hooks.on_generation = [](int g, double best) {
    log(LogLevel::Info, "shape_search: generation " + std::to_string(g) + " best asr " +
                            std::to_string(best));
  };
  const SearchResult result = search(dataset().frames, *detector, config_.shape_search, hooks);

  nlohmann::json archive = nlohmann::json::array();
  for (const auto& c : result.archive) archive.push_back(candidate_to_json(c));
  write_json(dir / "archive.json", {{"config_hash", hash_},
                                    {"archive", archive},
                                    {"best_per_generation", result.best_per_generation},
                                    {"evaluations", result.evaluations}});
  mark_complete("shape_search");
}

void Pipeline::texture_opt() {
  write_run_config();
  if (stage_complete("patches")) {
    log(LogLevel::Info, "texture_opt: up to date, skipping");
    return;
  }
  if (!stage_complete("shape_search")) {
    throw Error(ErrorKind::State, "texture optimization needs a completed shape search in " +
                                      options_.out_dir.string());
  }
  const auto archive_path = options_.out_dir / "shape_search" / "archive.json";
  const auto doc = read_json(archive_path);
  require_hash(doc, hash_, archive_path);
  std::vector<ShapeCandidate> shapes;
  for (const auto& c : doc.at("archive")) {
    shapes.push_back(candidate_from_json(c, config_.shape_search.max_vertices));
  }
  if (shapes.empty()) throw Error(ErrorKind::State, "shape archive is empty");
  if (config_.texture_policy == TexturePolicy::BestOnly) shapes.erase(shapes.begin() + 1, shapes.end());

  std::unique_ptr<DetectorAdapter> detector;
  if (config_.visible_detector) {
    detector = make_detector(*config_.visible_detector, Modality::Visible);
    if (!detector->differentiable()) {
      throw Error(ErrorKind::Config, "detectors.visible: \"" + detector->name() +
                                         "\" exposes no gradients; texture optimization needs a "
                                         "differentiable detector");
    }
  }

  const auto root = options_.out_dir / "patches";
  clear_patch_dirs(root);
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    TextureOptConfig tcfg = config_.texture_opt;
    tcfg.seed = stage_seed(config_, SeedStream::Texture, k);
    const auto dir = root / patch_name(k);
    std::filesystem::create_directories(dir);

    nlohmann::json history = nlohmann::json::array();
    nlohmann::json final_metrics;
    TextureGrid texture(tcfg.texture_width, tcfg.texture_height, 0.5);
    if (detector) {
      log(LogLevel::Info, "texture_opt: " + patch_name(k));
      TextureResult r = optimize_texture(shapes[k].shape, dataset().frames, *detector, tcfg);
      for (const auto& step : r.history) history.push_back(loss_report_to_json(step));
      final_metrics = {{"mean_confidence", r.final_mean_confidence},
                       {"confidences", r.final_confidences},
                       {"tv", r.final_tv}};
      texture = std::move(r.texture);
    } else {
      final_metrics = {{"optimized", false}};
    }
    save_shape(shapes[k].shape, dir / "shape.json");
    save_texture_png(texture, dir / "texture.png");
    write_json(dir / "meta.json", {{"config", resolved_config(config_)},
                                   {"config_hash", hash_},
                                   {"seed", tcfg.seed},
                                   {"shape_rank", k},
                                   {"shape_asr", shapes[k].asr},
                                   {"shape_lineage", shapes[k].lineage_id},
                                   {"loss_history", history},
                                   {"final", final_metrics}});
  }
  mark_complete("patches");
}

void Pipeline::eval() {
  write_run_config();
  if (stage_complete("eval")) {
    log(LogLevel::Info, "eval: up to date, skipping");
    return;
  }
  const auto dirs = patch_dirs();
  if (dirs.empty()) {
    throw Error(ErrorKind::State, "no patch artifacts under " + (options_.out_dir / "patches").string());
  }
  // Every artifact must come from this config before anything is evaluated.
  for (const auto& dir : dirs) require_hash(read_json(dir / "meta.json"), hash_, dir / "meta.json");

  std::unique_ptr<DetectorAdapter> visible;
  std::unique_ptr<DetectorAdapter> infrared;
  if (config_.visible_detector) visible = make_detector(*config_.visible_detector, Modality::Visible);
  if (config_.infrared_detector) infrared = make_detector(*config_.infrared_detector, Modality::Infrared);

  EvalOptions opts;
  opts.placement = config_.shape_search.placement;
  opts.thermal = config_.shape_search.thermal;
  opts.eot = config_.eval.apply_eot ? config_.eval.eot : EotRanges::identity();
  opts.match = config_.eval.match;
  opts.eot_seed = stage_seed(config_, SeedStream::Eval);
  opts.keep_going = options_.keep_going;
  opts.workers = options_.workers;
  opts.config_hash = hash_;

  const auto root = options_.out_dir / "eval";
  clear_patch_dirs(root);
  for (const auto& dir : dirs) {
    const std::string name = dir.filename().string();
    PatchSpec patch{load_shape(dir / "shape.json", config_.shape_search.max_vertices),
                    load_texture_png(dir / "texture.png"), opts.placement.area_fraction};
    opts.patch_ref = "patches/" + name;
    log(LogLevel::Info, "eval: " + name);
    const EvalReport report =
        evaluate_patch(patch, dataset(), DetectorPair{visible.get(), infrared.get()}, opts);
    const ReportFormat json[] = {ReportFormat::Json};
    emit_report(report, root / name, json);
  }
  mark_complete("eval");
}

void Pipeline::report() {
  write_run_config();
  if (stage_complete("report")) {
    log(LogLevel::Info, "report: up to date, skipping");
    return;
  }
  if (!stage_complete("eval")) {
    throw Error(ErrorKind::State, "report needs a completed eval in " + options_.out_dir.string());
  }
  const auto src = options_.out_dir / "eval";
  const auto root = options_.out_dir / "report";
  clear_patch_dirs(root);
  std::vector<std::filesystem::path> reports;
  for (const auto& entry : std::filesystem::directory_iterator(src)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "report.json")) {
      reports.push_back(entry.path());
    }
  }
  std::sort(reports.begin(), reports.end());
  for (const auto& dir : reports) {
    const EvalReport r = load_report(dir / "report.json");
    if (r.config_hash != hash_) {
      throw Error(ErrorKind::Config, (dir / "report.json").string() + " was produced under config hash \"" +
                                         r.config_hash + "\", current config hash is \"" + hash_ + "\"");
    }
    emit_report(r, root / dir.filename(), config_.output.formats);
  }
  mark_complete("report");
}

void Pipeline::run_all() {
  shape_search();
  texture_opt();
  eval();
  report();
}

}  // namespace dualpatch
