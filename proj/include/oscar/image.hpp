#pragma once

// 8-bit grayscale images, PNG/JPEG codec access and the sharpness metric
// used to pick the least blurry frame.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "oscar/errors.hpp"

namespace oscar {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, width * height

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
};

inline GrayImage make_image(int width, int height, std::uint8_t fill = 0) {
  return {width, height,
          std::vector<std::uint8_t>(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                                    fill)};
}

/// Decodes PNG or JPEG bytes to grayscale. Throws DecodeError.
inline GrayImage decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw DecodeError("empty image buffer");
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1,
                    const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat gray;
  try {
    gray = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
  } catch (const cv::Exception& e) {
    throw DecodeError(e.what());
  }
  if (gray.empty() || gray.type() != CV_8UC1) throw DecodeError("not a decodable PNG/JPEG image");
  GrayImage img = make_image(gray.cols, gray.rows);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    std::copy(row, row + gray.cols, img.pixels.begin() + static_cast<std::ptrdiff_t>(y) * gray.cols);
  }
  return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline GrayImage load_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file_bytes(path));
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

/// Encodes as PNG (format "png") or JPEG (format "jpeg"/"jpg").
inline std::vector<std::uint8_t> encode_image(const GrayImage& img, const std::string& format = "png") {
  const cv::Mat mat(img.height, img.width, CV_8UC1, const_cast<std::uint8_t*>(img.pixels.data()));
  std::vector<std::uint8_t> out;
  const std::string ext = (format == "jpeg" || format == "jpg") ? ".jpg" : ".png";
  if (!cv::imencode(ext, mat, out)) throw DecodeError("cannot encode image as " + format);
  return out;
}

inline void save_image(const GrayImage& img, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  const auto bytes = encode_image(img, ext == ".jpg" || ext == ".jpeg" ? "jpeg" : "png");
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DecodeError("cannot write " + path.string());
}

/// Variance of the 3x3 Laplacian (4-neighbour kernel) over all pixels, with
/// reflect-101 borders. Higher means sharper; a constant image scores 0.
inline double blur_score(const GrayImage& img) {
  if (img.width <= 0 || img.height <= 0 || img.pixels.size() != static_cast<std::size_t>(img.width) *
                                                                     static_cast<std::size_t>(img.height))
    throw DecodeError("image has inconsistent dimensions");
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double lap = static_cast<double>(img.at(reflect(x - 1, img.width), y)) +
                         img.at(reflect(x + 1, img.width), y) + img.at(x, reflect(y - 1, img.height)) +
                         img.at(x, reflect(y + 1, img.height)) - 4.0 * img.at(x, y);
      sum += lap;
      sum_sq += lap * lap;
    }
  }
  const double n = static_cast<double>(img.pixels.size());
  const double mean = sum / n;
  return std::max(0.0, sum_sq / n - mean * mean);
}

inline double blur_score(std::span<const std::uint8_t> encoded) { return blur_score(decode_image(encoded)); }

}  // namespace oscar
