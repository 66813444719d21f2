// Copyright (c) 2026, UQR contributors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "uqr/pnm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace uqr {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

// Reads the magic + dimensions (+ maxval for P5), skipping '#' comments.
struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

int next_int(std::istream& in) {
  int c;
  while ((c = in.peek()) != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value;
  if (!(in >> value)) throw std::runtime_error("malformed PNM header");
  return value;
}

PnmHeader read_header(std::istream& in, bool with_maxval) {
  PnmHeader h;
  in >> h.magic;
  h.width = next_int(in);
  h.height = next_int(in);
  if (with_maxval) h.maxval = next_int(in);
  in.get();  // single whitespace before raster
  return h;
}

}  // namespace

void write_pbm(const BinaryMask& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P4\n" << m.width << " " << m.height << "\n";
  const int row_bytes = (m.width + 7) / 8;
  std::string row(static_cast<std::size_t>(row_bytes), '\0');
  for (int y = 0; y < m.height; ++y) {
    std::fill(row.begin(), row.end(), '\0');
    for (int x = 0; x < m.width; ++x) {
      if (m.at(x, y)) row[x / 8] |= static_cast<char>(0x80 >> (x % 8));
    }
    out.write(row.data(), row_bytes);
  }
  if (!out) fail(path, "write failed");
}

BinaryMask read_pbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const PnmHeader h = read_header(in, false);
  if (h.magic != "P4") fail(path, "expected P4 magic, got " + h.magic);
  BinaryMask m(h.width, h.height);
  const int row_bytes = (h.width + 7) / 8;
  std::string row(static_cast<std::size_t>(row_bytes), '\0');
  for (int y = 0; y < h.height; ++y) {
    in.read(row.data(), row_bytes);
    if (!in) fail(path, "truncated raster");
    for (int x = 0; x < h.width; ++x) {
      m.at(x, y) = (row[x / 8] & (0x80 >> (x % 8))) ? 1 : 0;
    }
  }
  return m;
}

void write_pgm(const SoftMask& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << s.width << " " << s.height << "\n255\n";
  std::string raster(s.values.size(), '\0');
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const double v = std::clamp(s.values[i], 0.0, 1.0);
    raster[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) fail(path, "write failed");
}

SoftMask read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const PnmHeader h = read_header(in, true);
  if (h.magic != "P5") fail(path, "expected P5 magic, got " + h.magic);
  if (h.maxval != 255) fail(path, "only maxval 255 supported");
  SoftMask s(h.width, h.height);
  std::string raster(s.values.size(), '\0');
  in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!in) fail(path, "truncated raster");
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    s.values[i] = static_cast<unsigned char>(raster[i]) / 255.0;
  }
  return s;
}

}  // namespace uqr
