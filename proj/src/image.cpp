#include "depthfill/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace depthfill {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

void open_reader(PngReader& r, FILE* f, const std::string& path) {
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f) != 8 || png_sig_cmp(sig, 0, 8))
    fail("not a PNG file", path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) fail("png_create_read_struct failed", path);
  r.info = png_create_info_struct(r.png);
  if (!r.info) fail("png_create_info_struct failed", path);
  png_init_io(r.png, f);
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);
}

}  // namespace

ImageU8 read_png_rgb8(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail("cannot open", path);
  PngReader r;
  open_reader(r, f.get(), path);
  if (setjmp(png_jmpbuf(r.png))) fail("corrupt PNG", path);

  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  if (depth == 16) png_set_strip_16(r.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(r.png);
  png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);

  ImageU8 img(static_cast<int>(h), static_cast<int>(w), 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 v = 0; v < h; ++v) rows[v] = img.data.data() + static_cast<size_t>(v) * w * 3;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

ImageU8 read_png_gray8(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail("cannot open", path);
  PngReader r;
  open_reader(r, f.get(), path);
  if (setjmp(png_jmpbuf(r.png))) fail("corrupt PNG", path);

  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(r.png, r.info) != 8)
    fail("expected an 8-bit grayscale PNG", path);

  ImageU8 img(static_cast<int>(h), static_cast<int>(w), 1);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 v = 0; v < h; ++v) rows[v] = img.data.data() + static_cast<size_t>(v) * w;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

ImageU16 read_png_gray16(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail("cannot open", path);
  PngReader r;
  open_reader(r, f.get(), path);
  if (setjmp(png_jmpbuf(r.png))) fail("corrupt PNG", path);

  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(r.png, r.info) != 16)
    fail("expected a 16-bit grayscale PNG", path);

  std::vector<uint8_t> raw(static_cast<size_t>(h) * w * 2);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 v = 0; v < h; ++v) rows[v] = raw.data() + static_cast<size_t>(v) * w * 2;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);

  ImageU16 img(static_cast<int>(h), static_cast<int>(w));
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);  // network order
  return img;
}

namespace {

void write_png(const std::string& path, int height, int width, int color_type, int bit_depth,
               const std::vector<png_bytep>& rows) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail("cannot open for writing", path);
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) fail("png_create_write_struct failed", path);
  w.info = png_create_info_struct(w.png);
  if (!w.info) fail("png_create_info_struct failed", path);
  if (setjmp(png_jmpbuf(w.png))) fail("PNG write failed", path);
  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  png_write_image(w.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(w.png, nullptr);
}

}  // namespace

void write_png_rgb8(const ImageU8& img, const std::string& path) {
  if (img.channels != 3) throw std::invalid_argument("write_png_rgb8: need 3 channels");
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int v = 0; v < img.height; ++v)
    rows[static_cast<size_t>(v)] =
        const_cast<png_bytep>(img.data.data() + static_cast<size_t>(v) * img.width * 3);
  write_png(path, img.height, img.width, PNG_COLOR_TYPE_RGB, 8, rows);
}

void write_png_gray8(const ImageU8& img, const std::string& path) {
  if (img.channels != 1) throw std::invalid_argument("write_png_gray8: need 1 channel");
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int v = 0; v < img.height; ++v)
    rows[static_cast<size_t>(v)] =
        const_cast<png_bytep>(img.data.data() + static_cast<size_t>(v) * img.width);
  write_png(path, img.height, img.width, PNG_COLOR_TYPE_GRAY, 8, rows);
}

void write_png_gray16(const ImageU16& img, const std::string& path) {
  std::vector<uint8_t> raw(static_cast<size_t>(img.height) * img.width * 2);
  for (size_t i = 0; i < img.data.size(); ++i) {
    raw[2 * i] = static_cast<uint8_t>(img.data[i] >> 8);  // network order
    raw[2 * i + 1] = static_cast<uint8_t>(img.data[i] & 0xff);
  }
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int v = 0; v < img.height; ++v)
    rows[static_cast<size_t>(v)] = raw.data() + static_cast<size_t>(v) * img.width * 2;
  write_png(path, img.height, img.width, PNG_COLOR_TYPE_GRAY, 16, rows);
}

std::vector<float> to_grayscale(const ImageU8& rgb) {
  if (rgb.channels != 3) throw std::invalid_argument("to_grayscale: need 3 channels");
  std::vector<float> gray(static_cast<size_t>(rgb.height) * rgb.width);
  for (size_t i = 0; i < gray.size(); ++i)
    gray[i] = 0.299f * rgb.data[3 * i] + 0.587f * rgb.data[3 * i + 1] +
              0.114f * rgb.data[3 * i + 2];
  return gray;
}

std::array<double, 3> rgb_to_hls(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double l = (mx + mn) / 2.0;
  if (mx == mn) return {0.0, l, 0.0};
  const double c = mx - mn;
  const double s = c / (1.0 - std::fabs(2.0 * l - 1.0));
  double h;
  if (mx == r)
    h = std::fmod((g - b) / c, 6.0);
  else if (mx == g)
    h = (b - r) / c + 2.0;
  else
    h = (r - g) / c + 4.0;
  h *= 60.0;
  if (h < 0) h += 360.0;
  return {h, l, s};
}

std::array<double, 3> hls_to_rgb(double h, double l, double s) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = (1.0 - std::fabs(2.0 * l - 1.0)) * s;
  const double x = c * (1.0 - std::fabs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = l - c / 2.0;
  double r = 0, g = 0, b = 0;
  if (h < 60) {
    r = c; g = x;
  } else if (h < 120) {
    r = x; g = c;
  } else if (h < 180) {
    g = c; b = x;
  } else if (h < 240) {
    g = x; b = c;
  } else if (h < 300) {
    r = x; b = c;
  } else {
    r = c; b = x;
  }
  return {r + m, g + m, b + m};
}

ImageU8 resize_bilinear_u8(const ImageU8& img, int new_height, int new_width) {
  ImageU8 out(new_height, new_width, img.channels);
  const double sy = static_cast<double>(img.height) / new_height;
  const double sx = static_cast<double>(img.width) / new_width;
  for (int v = 0; v < new_height; ++v) {
    const double fy = (v + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int u = 0; u < new_width; ++u) {
      const double fx = (u + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < img.channels; ++c) {
        const double val = (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
                           wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
        out.at(v, u, c) = static_cast<uint8_t>(std::lround(std::clamp(val, 0.0, 255.0)));
      }
    }
  }
  return out;
}

std::vector<float> resize_bilinear_f32(const std::vector<float>& img, int height, int width,
                                       int new_height, int new_width) {
  std::vector<float> out(static_cast<size_t>(new_height) * new_width);
  const double sy = static_cast<double>(height) / new_height;
  const double sx = static_cast<double>(width) / new_width;
  for (int v = 0; v < new_height; ++v) {
    const double fy = (v + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, height - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int u = 0; u < new_width; ++u) {
      const double fx = (u + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, width - 1);
      const int x1 = std::min(x0 + 1, width - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      const double val =
          (1 - wy) * ((1 - wx) * img[static_cast<size_t>(y0) * width + x0] +
                      wx * img[static_cast<size_t>(y0) * width + x1]) +
          wy * ((1 - wx) * img[static_cast<size_t>(y1) * width + x0] +
                wx * img[static_cast<size_t>(y1) * width + x1]);
      out[static_cast<size_t>(v) * new_width + u] = static_cast<float>(val);
    }
  }
  return out;
}

std::vector<float> resize_nearest_f32(const std::vector<float>& img, int height, int width,
                                      int new_height, int new_width) {
  std::vector<float> out(static_cast<size_t>(new_height) * new_width);
  for (int v = 0; v < new_height; ++v) {
    const int y = std::min(static_cast<int>((v + 0.5) * height / new_height), height - 1);
    for (int u = 0; u < new_width; ++u) {
      const int x = std::min(static_cast<int>((u + 0.5) * width / new_width), width - 1);
      out[static_cast<size_t>(v) * new_width + u] = img[static_cast<size_t>(y) * width + x];
    }
  }
  return out;
}

}  // namespace depthfill
