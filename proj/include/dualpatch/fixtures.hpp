#pragma once

#include <cstdint>
#include <filesystem>

#include "dualpatch/dataset.hpp"

namespace dualpatch {

struct FixtureOptions {
  int frames = 50;
  int width = 160;
  int height = 120;
  std::uint64_t seed = 7;
  bool visible = true;
  bool infrared = true;
};

// Synthetic dual-modal scenes: one or two standing persons per frame on a
// smooth background. Visible person regions stay close to mid-gray and
// infrared bodies sit well below the hot-patch threshold; both built-in
// oracles detect every clean person.
DatasetStore synthesize_dataset(const FixtureOptions& options);

// Writes images (visible 8-bit RGB, infrared 16-bit gray) and manifest.jsonl
// under out_dir; returns the manifest path.
std::filesystem::path generate_fixtures(const std::filesystem::path& out_dir,
                                        const FixtureOptions& options);

}  // namespace dualpatch
