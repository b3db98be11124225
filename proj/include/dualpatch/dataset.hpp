#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualpatch/geometry.hpp"
#include "dualpatch/image.hpp"

namespace dualpatch {

// Aligned visible/infrared pair with annotated person boxes.
struct DualFrame {
  std::string id;
  std::optional<ImagePlane> visible;
  std::optional<ImagePlane> infrared;
  std::vector<Rect> persons;

  bool has(Modality modality) const {
    return modality == Modality::Visible ? visible.has_value() : infrared.has_value();
  }
  const ImagePlane& plane(Modality modality) const {
    return modality == Modality::Visible ? *visible : *infrared;
  }
  int width() const { return visible ? visible->width() : infrared->width(); }
  int height() const { return visible ? visible->height() : infrared->height(); }

  // Throws Error(InvalidArgument) naming the frame id.
  void validate() const;
};

struct DatasetStore {
  std::vector<DualFrame> frames;
  std::filesystem::path manifest_path;

  std::size_t size() const { return frames.size(); }
  std::size_t person_count(Modality modality) const;
  std::size_t frame_count(Modality modality) const;
};

// JSON Lines manifest, one record per frame:
//   {"id": str, "visible": path|null, "infrared": path|null,
//    "persons": [{"bbox": [x, y, w, h]}]}
// Paths resolve relative to the manifest directory. Errors name the frame id
// and the 1-based line number.
DatasetStore load_dataset(const std::filesystem::path& manifest_path);

}  // namespace dualpatch
