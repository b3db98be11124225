#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace dualpatch {

enum class Modality { Visible, Infrared };

std::string_view to_string(Modality modality);
Modality modality_from_string(std::string_view name);

inline int channels_for(Modality modality) {
  return modality == Modality::Visible ? 3 : 1;
}

// Planar-interleaved image with values in [0, 1]: value(x, y, c) lives at
// (y * width + x) * channels + c. Visible planes carry 3 channels, infrared 1.
class ImagePlane {
 public:
  ImagePlane() = default;
  ImagePlane(int width, int height, Modality modality, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_for(modality_); }
  Modality modality() const { return modality_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  double& at(int x, int y, int c = 0) { return values_[offset(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return values_[offset(x, y, c)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool operator==(const ImagePlane&) const = default;

 private:
  std::size_t offset(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels()) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  Modality modality_ = Modality::Visible;
  std::vector<double> values_;
};

// H x W x 3 color field; the optimized patch pixel values.
class TextureGrid {
 public:
  TextureGrid() = default;
  TextureGrid(int width, int height, double fill = 0.5);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t texel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  double& at(int x, int y, int c) { return values_[offset(x, y, c)]; }
  double at(int x, int y, int c) const { return values_[offset(x, y, c)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  void clamp();

  bool operator==(const TextureGrid&) const = default;

 private:
  std::size_t offset(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3 +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

// Visible: 8-bit RGB (palette/gray/alpha inputs are converted). Infrared:
// 8- or 16-bit grayscale, normalized by 255 or 65535.
ImagePlane load_png(const std::filesystem::path& path, Modality modality);
void save_png(const ImagePlane& image, const std::filesystem::path& path, int bit_depth = 8);

TextureGrid load_texture_png(const std::filesystem::path& path);
void save_texture_png(const TextureGrid& texture, const std::filesystem::path& path);

// Raw 8-bit RGB writer used by the report chart.
void write_rgb8_png(const std::filesystem::path& path, int width, int height,
                    std::span<const unsigned char> rgb);

}  // namespace dualpatch
