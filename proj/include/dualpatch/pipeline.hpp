#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dualpatch/config.hpp"
#include "dualpatch/dataset.hpp"

namespace dualpatch {

struct RunOptions {
  std::filesystem::path out_dir;
  int workers = 1;
  bool keep_going = false;
};

// Stage driver over one output directory:
//   shape_search/  checkpoints/, archive.json
//   patches/patch_NN/  shape.json, texture.png, meta.json
//   eval/patch_NN/report.json
//   report/patch_NN/  report.json, report.csv, asr_bars.png
// Each stage directory carries stage.json with the config hash; a stage
// whose stage.json matches the current hash is skipped.
class Pipeline {
 public:
  Pipeline(RunConfig config, RunOptions options);

  void shape_search();
  void texture_opt();
  void eval();
  void report();
  void run_all();

  const std::string& hash() const { return hash_; }
  const std::filesystem::path& out_dir() const { return options_.out_dir; }

 private:
  const DatasetStore& dataset();
  bool stage_complete(const std::string& stage) const;
  void mark_complete(const std::string& stage) const;
  std::vector<std::filesystem::path> patch_dirs() const;
  void write_run_config() const;

  RunConfig config_;
  RunOptions options_;
  std::string hash_;
  std::optional<DatasetStore> dataset_;
};

}  // namespace dualpatch
