#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace depthfill {

// Interleaved 8-bit raster, channels = 1 (gray) or 3 (rgb).
struct ImageU8 {
  int height = 0, width = 0, channels = 0;
  std::vector<uint8_t> data;

  ImageU8() = default;
  ImageU8(int h, int w, int c, uint8_t fill = 0)
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, fill) {}
  uint8_t at(int v, int u, int c = 0) const {
    return data[(static_cast<size_t>(v) * width + u) * channels + c];
  }
  uint8_t& at(int v, int u, int c = 0) {
    return data[(static_cast<size_t>(v) * width + u) * channels + c];
  }
};

struct ImageU16 {
  int height = 0, width = 0;
  std::vector<uint16_t> data;

  ImageU16() = default;
  ImageU16(int h, int w, uint16_t fill = 0)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}
  uint16_t at(int v, int u) const { return data[static_cast<size_t>(v) * width + u]; }
  uint16_t& at(int v, int u) { return data[static_cast<size_t>(v) * width + u]; }
};

// PNG I/O. Readers throw std::runtime_error with the offending path on
// missing/corrupt files. read_png_rgb8 tolerates gray/palette/alpha inputs and
// converts; read_png_gray16 requires an actual 16-bit grayscale file.
ImageU8 read_png_rgb8(const std::string& path);
ImageU8 read_png_gray8(const std::string& path);
ImageU16 read_png_gray16(const std::string& path);
void write_png_rgb8(const ImageU8& img, const std::string& path);
void write_png_gray8(const ImageU8& img, const std::string& path);
void write_png_gray16(const ImageU16& img, const std::string& path);

// Rec.601 luma: 0.299 R + 0.587 G + 0.114 B, on [0,255].
std::vector<float> to_grayscale(const ImageU8& rgb);

// Hexcone HLS. rgb in [0,1], h in degrees [0,360), l and s in [0,1].
std::array<double, 3> rgb_to_hls(double r, double g, double b);
std::array<double, 3> hls_to_rgb(double h, double l, double s);

ImageU8 resize_bilinear_u8(const ImageU8& img, int new_height, int new_width);
std::vector<float> resize_bilinear_f32(const std::vector<float>& img, int height, int width,
                                       int new_height, int new_width);
std::vector<float> resize_nearest_f32(const std::vector<float>& img, int height, int width,
                                      int new_height, int new_width);

}  // namespace depthfill
