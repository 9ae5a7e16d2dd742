#include "cubetrack/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "cubetrack/errors.hpp"

namespace cubetrack {

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

double GrayImage::sample_bilinear_clamped(double x, double y) const {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const int x0 = std::min(static_cast<int>(x), width - 2 < 0 ? 0 : width - 2);
  const int y0 = std::min(static_cast<int>(y), height - 2 < 0 ? 0 : height - 2);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
  const double bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

GrayImage box_blur(const GrayImage& img, int radius) {
  if (radius <= 0 || img.empty()) return img;
  const int w = img.width, h = img.height;
  const double norm = 1.0 / (2 * radius + 1);
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += img.at(std::clamp(x + k, 0, w - 1), y);
      tmp[static_cast<std::size_t>(y) * w + x] = s * norm;
    }
  }
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(s * norm, 0.0, 255.0)));
    }
  }
  return out;
}

GrayImage translate(const GrayImage& img, int dx, int dy, std::uint8_t fill) {
  GrayImage out(img.width, img.height, fill);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (out.inside(x + dx, y + dy)) out.at(x + dx, y + dy) = img.at(x, y);
  return out;
}

GrayImage rotate90_clockwise(const GrayImage& img) {
  GrayImage out(img.height, img.width);
  // (x, y) -> (h-1-y, x)
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(img.height - 1 - y, x) = img.at(x, y);
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaViolation(path.string(), 0, "cannot open file");
  if (header_token(in) != "P5") throw SchemaViolation(path.string(), 1, "not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(header_token(in));
    h = std::stoi(header_token(in));
    maxval = std::stoi(header_token(in));
  } catch (const std::exception&) {
    throw SchemaViolation(path.string(), 1, "malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw SchemaViolation(path.string(), 1, "unsupported PGM geometry or maxval");
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw SchemaViolation(path.string(), 0, "truncated PGM payload");
  return img;
}

double IntegralImage::box_sum(int x0, int y0, int x1, int y1) const {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, width_ - 1);
  y1 = std::min(y1, height_ - 1);
  if (x1 < x0 || y1 < y0) return 0.0;
  return sums_[idx(x1 + 1, y1 + 1)] - sums_[idx(x0, y1 + 1)] - sums_[idx(x1 + 1, y0)] + sums_[idx(x0, y0)];
}

}  // namespace cubetrack
