#include "dualpatch/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "dualpatch/error.hpp"

namespace dualpatch {

std::string_view to_string(Modality modality) {
  return modality == Modality::Visible ? "visible" : "infrared";
}

Modality modality_from_string(std::string_view name) {
  if (name == "visible") return Modality::Visible;
  if (name == "infrared") return Modality::Infrared;
  throw Error(ErrorKind::InvalidArgument, "unknown modality \"" + std::string(name) + "\"");
}

ImagePlane::ImagePlane(int width, int height, Modality modality, double fill)
    : width_(width), height_(height), modality_(modality) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidArgument, "image dimensions must be positive");
  }
  values_.assign(pixel_count() * static_cast<std::size_t>(channels()), fill);
}

TextureGrid::TextureGrid(int width, int height, double fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidArgument, "texture dimensions must be positive");
  }
  values_.assign(texel_count() * 3, std::clamp(fill, 0.0, 1.0));
}

void TextureGrid::clamp() {
  for (double& v : values_) v = std::clamp(v, 0.0, 1.0);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  (void)png;
  throw Error(ErrorKind::Io, std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<unsigned char> rows;  // tightly packed, big-endian for 16-bit
};

Decoded decode(const std::filesystem::path& path, bool want_rgb) {
  File f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorKind::Io, "not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw Error(ErrorKind::Io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (want_rgb) {
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_gray_to_rgb(png);
    }
  } else if (color & PNG_COLOR_MASK_COLOR) {
    throw Error(ErrorKind::InvalidArgument, "infrared image must be grayscale: " + path.string());
  }
  png_read_update_info(png, info);

  Decoded d;
  d.width = static_cast<int>(png_get_image_width(png, info));
  d.height = static_cast<int>(png_get_image_height(png, info));
  d.channels = png_get_channels(png, info);
  d.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  d.rows.resize(stride * static_cast<std::size_t>(d.height));
  std::vector<png_bytep> ptrs(static_cast<std::size_t>(d.height));
  for (int y = 0; y < d.height; ++y) ptrs[y] = d.rows.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, ptrs.data());
  png_read_end(png, nullptr);
  (void)depth;
  return d;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type,
            int bit_depth, const std::vector<unsigned char>& rows, std::size_t stride) {
  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw Error(ErrorKind::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, rows.data() + stride * static_cast<std::size_t>(y));
  }
  png_write_end(png, nullptr);
}

unsigned char to_u8(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

ImagePlane load_png(const std::filesystem::path& path, Modality modality) {
  const Decoded d = decode(path, modality == Modality::Visible);
  ImagePlane img(d.width, d.height, modality);
  auto values = img.values();
  const std::size_t n = values.size();
  if (d.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = (static_cast<unsigned>(d.rows[2 * i]) << 8) | d.rows[2 * i + 1];
      values[i] = static_cast<double>(v) / 65535.0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<double>(d.rows[i]) / 255.0;
  }
  return img;
}

void save_png(const ImagePlane& image, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw Error(ErrorKind::InvalidArgument, "bit depth must be 8 or 16");
  }
  if (bit_depth == 16 && image.modality() == Modality::Visible) {
    throw Error(ErrorKind::InvalidArgument, "visible images are stored as 8-bit RGB");
  }
  const auto values = image.values();
  const int bytes = bit_depth / 8;
  const std::size_t stride =
      static_cast<std::size_t>(image.width()) * image.channels() * static_cast<std::size_t>(bytes);
  std::vector<unsigned char> rows(stride * static_cast<std::size_t>(image.height()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (bytes == 1) {
      rows[i] = to_u8(values[i]);
    } else {
      const auto v = static_cast<unsigned>(std::lround(std::clamp(values[i], 0.0, 1.0) * 65535.0));
      rows[2 * i] = static_cast<unsigned char>(v >> 8);
      rows[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
  }
  const int color = image.modality() == Modality::Visible ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  encode(path, image.width(), image.height(), color, bit_depth, rows, stride);
}

TextureGrid load_texture_png(const std::filesystem::path& path) {
  const Decoded d = decode(path, true);
  TextureGrid tex(d.width, d.height);
  auto values = tex.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(d.rows[i]) / 255.0;
  return tex;
}

void save_texture_png(const TextureGrid& texture, const std::filesystem::path& path) {
  const auto values = texture.values();
  std::vector<unsigned char> rows(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) rows[i] = to_u8(values[i]);
  encode(path, texture.width(), texture.height(), PNG_COLOR_TYPE_RGB, 8, rows,
         static_cast<std::size_t>(texture.width()) * 3);
}

void write_rgb8_png(const std::filesystem::path& path, int width, int height,
                    std::span<const unsigned char> rgb) {
  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  if (rgb.size() != stride * static_cast<std::size_t>(height)) {
    throw Error(ErrorKind::InvalidArgument, "write_rgb8_png: buffer size mismatch");
  }
  encode(path, width, height, PNG_COLOR_TYPE_RGB, 8, std::vector<unsigned char>(rgb.begin(), rgb.end()),
         stride);
}

}  // namespace dualpatch
