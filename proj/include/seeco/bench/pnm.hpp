#pragma once

// Binary PPM (P6, 8-bit RGB) images and PGM (P5, 8-bit) label maps.

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "seeco/error.hpp"
#include "seeco/types.hpp"

namespace seeco::bench {

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& header, const std::vector<unsigned char>& body) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIoError, "cannot open " + path + " for writing");
  f << header;
  f.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  require(static_cast<bool>(f), ErrorCode::kIoError, "write failed: " + path);
}

struct PnmHeader {
  std::size_t width = 0, height = 0, maxval = 0, data_offset = 0;
};

inline PnmHeader parse_header(const std::vector<unsigned char>& bytes, const char* magic, const std::string& path) {
  require(bytes.size() >= 2 && bytes[0] == magic[0] && bytes[1] == magic[1], ErrorCode::kFormatError,
          path + ": expected " + magic + " header");
  std::size_t pos = 2;
  auto next_number = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    require(pos < bytes.size() && std::isdigit(bytes[pos]), ErrorCode::kFormatError, path + ": malformed header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  PnmHeader h;
  h.width = next_number();
  h.height = next_number();
  h.maxval = next_number();
  require(pos < bytes.size() && std::isspace(bytes[pos]), ErrorCode::kFormatError, path + ": malformed header");
  h.data_offset = pos + 1;
  require(h.maxval == 255, ErrorCode::kFormatError, path + ": only 8-bit maxval 255 is supported");
  return h;
}

}  // namespace detail

/// Pixel values scale to [0, 1] as byte / 255.
inline Tensor read_ppm(const std::string& path) {
  const auto bytes = detail::read_file(path);
  const auto h = detail::parse_header(bytes, "P6", path);
  const std::size_t n = h.width * h.height * 3;
  require(bytes.size() - h.data_offset == n, ErrorCode::kFormatError, path + ": pixel data size mismatch");
  Tensor img({h.height, h.width, 3});
  for (std::size_t i = 0; i < n; ++i) img[i] = static_cast<double>(bytes[h.data_offset + i]) / 255.0;
  return img;
}

inline void write_ppm(const std::string& path, const Tensor& img) {
  require(img.rank() == 3 && img.dim(2) == 3, ErrorCode::kShapeMismatch, "write_ppm expects HxWx3");
  std::vector<unsigned char> body(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    body[i] = static_cast<unsigned char>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
  detail::write_file(path, "P6\n" + std::to_string(img.dim(1)) + " " + std::to_string(img.dim(0)) + "\n255\n", body);
}

inline LabelMap read_pgm(const std::string& path) {
  const auto bytes = detail::read_file(path);
  const auto h = detail::parse_header(bytes, "P5", path);
  require(bytes.size() - h.data_offset == h.width * h.height, ErrorCode::kFormatError,
          path + ": pixel data size mismatch");
  return LabelMap{h.height, h.width, std::vector<std::uint8_t>(bytes.begin() + h.data_offset, bytes.end())};
}

inline void write_pgm(const std::string& path, const LabelMap& labels) {
  detail::write_file(path,
                     "P5\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n",
                     std::vector<unsigned char>(labels.labels.begin(), labels.labels.end()));
}

}  // namespace seeco::bench
