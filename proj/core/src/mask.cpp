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

#include "uqr/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uqr {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Bilinear lookup at a continuous source coordinate, clamped to the grid.
double sample_bilinear(const double* data, int w, int h, double u, double v) {
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  const double top = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
  const double bot = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
  return top * (1.0 - fy) + bot * fy;
}

BoxXYXY clamp_box(const BoxXYXY& box, double w, double h) {
  BoxXYXY c;
  c.x1 = std::clamp(box.x1, 0.0, w);
  c.y1 = std::clamp(box.y1, 0.0, h);
  c.x2 = std::clamp(box.x2, 0.0, w);
  c.y2 = std::clamp(box.y2, 0.0, h);
  return c;
}

}  // namespace

BinaryMask::BinaryMask(int w, int h) : width(w), height(h) {
  require(w >= 1 && h >= 1, "BinaryMask dimensions must be >= 1");
  bits.assign(static_cast<std::size_t>(w) * h, 0);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::accumulate(bits.begin(), bits.end(), std::size_t{0}));
}

SoftMask::SoftMask(int w, int h) : width(w), height(h) {
  require(w >= 1 && h >= 1, "SoftMask dimensions must be >= 1");
  values.assign(static_cast<std::size_t>(w) * h, 0.0);
}

BoxXYXY to_xyxy(const BoxCxCyWh& b, double image_w, double image_h) {
  BoxXYXY out;
  out.x1 = (b.cx - b.w * 0.5) * image_w;
  out.y1 = (b.cy - b.h * 0.5) * image_h;
  out.x2 = (b.cx + b.w * 0.5) * image_w;
  out.y2 = (b.cy + b.h * 0.5) * image_h;
  return out;
}

BoxCxCyWh to_cxcywh(const BoxXYXY& b, double image_w, double image_h) {
  require(image_w > 0 && image_h > 0, "image dimensions must be positive");
  BoxCxCyWh out;
  out.cx = (b.x1 + b.x2) * 0.5 / image_w;
  out.cy = (b.y1 + b.y2) * 0.5 / image_h;
  out.w = (b.x2 - b.x1) / image_w;
  out.h = (b.y2 - b.y1) / image_h;
  return out;
}

SoftMask to_soft(const BinaryMask& m) {
  SoftMask s(m.width, m.height);
  for (std::size_t i = 0; i < m.bits.size(); ++i) s.values[i] = m.bits[i];
  return s;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require(a.width == b.width && a.height == b.height, "mask_iou: dimension mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  if (uni == 0) return 1.0;  // both empty: agreement
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask binarize(const SoftMask& s, double threshold) {
  require(std::isfinite(threshold), "binarize: threshold must be finite");
  BinaryMask m(s.width, s.height);
  for (std::size_t i = 0; i < s.values.size(); ++i) m.bits[i] = s.values[i] >= threshold ? 1 : 0;
  return m;
}

SoftMask resize(const SoftMask& s, int out_w, int out_h) {
  require(out_w >= 1 && out_h >= 1, "resize: output dimensions must be >= 1");
  SoftMask out(out_w, out_h);
  const double sx = static_cast<double>(s.width) / out_w;
  const double sy = static_cast<double>(s.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double v = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      const double u = (x + 0.5) * sx - 0.5;
      out.at(x, y) = sample_bilinear(s.values.data(), s.width, s.height, u, v);
    }
  }
  return out;
}

SoftMask crop_resize(const BinaryMask& m, const BoxXYXY& box, int side) {
  require(side >= 2, "crop_resize: side must be >= 2");
  const BoxXYXY b = clamp_box(box, m.width, m.height);
  require(b.width() > 0 && b.height() > 0, "crop_resize: degenerate box after clamping");
  SoftMask soft = to_soft(m);
  SoftMask out(side, side);
  for (int y = 0; y < side; ++y) {
    const double v = b.y1 + (y + 0.5) * b.height() / side - 0.5;
    for (int x = 0; x < side; ++x) {
      const double u = b.x1 + (x + 0.5) * b.width() / side - 0.5;
      out.at(x, y) = sample_bilinear(soft.values.data(), m.width, m.height, u, v);
    }
  }
  return out;
}

SoftMask paste_into_box(const SoftMask& s, const BoxXYXY& box, int image_w, int image_h) {
  require(image_w >= 1 && image_h >= 1, "paste_into_box: image dimensions must be >= 1");
  const BoxXYXY b = clamp_box(box, image_w, image_h);
  require(b.width() > 0 && b.height() > 0, "paste_into_box: degenerate box after clamping");
  SoftMask out(image_w, image_h);
  const int x_begin = static_cast<int>(std::floor(b.x1));
  const int x_end = static_cast<int>(std::ceil(b.x2));
  const int y_begin = static_cast<int>(std::floor(b.y1));
  const int y_end = static_cast<int>(std::ceil(b.y2));
  for (int y = std::max(0, y_begin); y < std::min(image_h, y_end); ++y) {
    const double cy = y + 0.5;
    if (cy < b.y1 || cy > b.y2) continue;
    const double v = (cy - b.y1) * s.height / b.height() - 0.5;
    for (int x = std::max(0, x_begin); x < std::min(image_w, x_end); ++x) {
      const double cx = x + 0.5;
      if (cx < b.x1 || cx > b.x2) continue;
      const double u = (cx - b.x1) * s.width / b.width() - 0.5;
      out.at(x, y) = sample_bilinear(s.values.data(), s.width, s.height, u, v);
    }
  }
  return out;
}

BinaryMask rasterize_polygon(const Polygon& p, int width, int height) {
  require(p.vertices.size() >= 3, "rasterize_polygon: polygon needs at least 3 vertices");
  BinaryMask out(width, height);
  const std::size_t n = p.vertices.size();
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      // Even-odd crossing count against the horizontal ray to +inf.
      bool inside = false;
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto [xi, yi] = p.vertices[i];
        const auto [xj, yj] = p.vertices[j];
        if ((yi > py) != (yj > py)) {
          const double x_int = xi + (py - yi) / (yj - yi) * (xj - xi);
          if (px < x_int) inside = !inside;
        }
      }
      if (inside) out.at(x, y) = 1;
    }
  }
  return out;
}

BoxXYXY tight_box(const BinaryMask& m) {
  int min_x = m.width, min_y = m.height, max_x = -1, max_y = -1;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  require(max_x >= 0, "tight_box: empty mask");
  return BoxXYXY{static_cast<double>(min_x), static_cast<double>(min_y),
                 static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)};
}

}  // namespace uqr
