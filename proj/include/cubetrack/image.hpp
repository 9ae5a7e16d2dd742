#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cubetrack {

/// 8-bit grayscale raster, row-major. Pixel (x, y) has its center at the
/// continuous coordinate (x, y); its footprint spans [x-0.5, x+0.5).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0);

  bool empty() const { return width == 0 || height == 0; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  /// Bilinear interpolation with edge clamping.
  double sample_bilinear(double x, double y) const {
    if (x >= 0.0 && y >= 0.0 && x < width - 1 && y < height - 1) {
      const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
      const double fx = x - x0, fy = y - y0;
      const std::uint8_t* p = pixels.data() + static_cast<std::size_t>(y0) * width + x0;
      const double top = p[0] + (p[1] - p[0]) * fx;
      const double bottom = p[width] + (p[width + 1] - p[width]) * fx;
      return top + (bottom - top) * fy;
    }
    return sample_bilinear_clamped(x, y);
  }
  double sample_bilinear_clamped(double x, double y) const;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Separable box blur of the given radius (window 2r+1) with edge clamping.
GrayImage box_blur(const GrayImage& img, int radius);

/// Content moved by an integer offset; uncovered pixels take `fill`.
GrayImage translate(const GrayImage& img, int dx, int dy, std::uint8_t fill);

/// 90-degree clockwise rotation of a square or rectangular raster.
GrayImage rotate90_clockwise(const GrayImage& img);

/// Binary PGM (P5, maxval 255). Throws SchemaViolation on malformed input.
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

/// Summed-area table with one row/column of zero padding.
class IntegralImage {
 public:
  IntegralImage() = default;
  template <typename Fn>
  IntegralImage(int w, int h, Fn&& value) : width_(w), height_(h), sums_((w + 1) * std::size_t(h + 1), 0.0) {
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        row += value(x, y);
        sums_[idx(x + 1, y + 1)] = sums_[idx(x + 1, y)] + row;
      }
    }
  }
  /// Sum over the inclusive rectangle [x0, x1] x [y0, y1], clipped to the image.
  double box_sum(int x0, int y0, int x1, int y1) const;

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (width_ + 1) + x; }
  int width_ = 0;
  int height_ = 0;
  std::vector<double> sums_;
};

}  // namespace cubetrack
