#pragma once

// Binary netpbm I/O: P5 (PGM) and P6 (PPM), maxval 255. Pixel values map to
// [0,1] by /255 on read and round-clamp on write.

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "mair/tensor.hpp"

namespace mair {

namespace detail {

inline int pnm_next_int(std::istream& in, const std::string& path) {
  // skips whitespace and '#' comments
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw std::runtime_error("image read: malformed header in '" + path + "'");
  return v;
}

}  // namespace detail

// Returns 3×H×W for P6 and 1×H×W for P5.
template <typename T>
Tensor<T> read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("image read: cannot open '" + path + "'");
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw std::runtime_error("image read: '" + path + "' is not a binary PGM/PPM (P5/P6)");
  const int channels = m1 == '6' ? 3 : 1;
  const int W = detail::pnm_next_int(f, path);
  const int H = detail::pnm_next_int(f, path);
  const int maxval = detail::pnm_next_int(f, path);
  if (maxval != 255)
    throw std::runtime_error("image read: '" + path + "' has maxval " + std::to_string(maxval) +
                             ", only 255 is supported");
  f.get();  // single whitespace after maxval
  std::string raw(static_cast<std::size_t>(W) * H * channels, '\0');
  f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error("image read: truncated pixel data in '" + path + "'");
  Tensor<T> out({channels, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < channels; ++c)
        out.at(c, y, x) =
            static_cast<T>(static_cast<unsigned char>(raw[(static_cast<std::size_t>(y) * W + x) * channels + c])) /
            T(255);
  return out;
}

// Writes P6 for 3-channel, P5 for 1-channel input.
template <typename T>
void write_pnm(const Tensor<T>& img, const std::string& path) {
  if (img.rank() != 3 || (img.shape[0] != 1 && img.shape[0] != 3))
    throw std::invalid_argument("image write: expected 1×H×W or 3×H×W, got " + shape_str(img.shape));
  const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("image write: cannot open '" + path + "'");
  f << (C == 3 ? "P6" : "P5") << "\n" << W << " " << H << "\n255\n";
  std::string raw;
  raw.reserve(static_cast<std::size_t>(W) * H * C);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        const double v = std::round(static_cast<double>(img.at(c, y, x)) * 255.0);
        raw.push_back(static_cast<char>(static_cast<unsigned char>(v < 0 ? 0 : (v > 255 ? 255 : v))));
      }
  f.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!f) throw std::runtime_error("image write: write failed for '" + path + "'");
}

}  // namespace mair
