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

#ifndef UQR_MASK_HPP_
#define UQR_MASK_HPP_

#include <cstdint>
#include <utility>
#include <vector>

namespace uqr {

/// Row-major binary instance mask. Every element is 0 or 1.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h);

  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool empty_mask() const { return count() == 0; }
};

/// Row-major real-valued mask, e.g. a reconstruction before binarization.
struct SoftMask {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  SoftMask() = default;
  SoftMask(int w, int h);

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Axis-aligned box in absolute pixel coordinates, x2 >= x1, y2 >= y1.
struct BoxXYXY {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
};

/// Box as (center, size), all normalized to [0,1] by the image dimensions.
struct BoxCxCyWh {
  double cx = 0, cy = 0, w = 0, h = 0;
};

/// Simple polygon given as an ordered vertex loop in pixel coordinates.
struct Polygon {
  std::vector<std::pair<double, double>> vertices;
};

BoxXYXY to_xyxy(const BoxCxCyWh& b, double image_w, double image_h);
BoxCxCyWh to_cxcywh(const BoxXYXY& b, double image_w, double image_h);

SoftMask to_soft(const BinaryMask& m);

/// Intersection over union of two equal-sized binary masks.
/// Both empty counts as perfect agreement (1.0).
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Threshold a soft mask; the boundary value itself maps to 1.
BinaryMask binarize(const SoftMask& s, double threshold = 0.5);

/// Bilinear resize with pixel-center alignment. Exact on constant inputs
/// and an identity when the output dimensions match the input.
SoftMask resize(const SoftMask& s, int out_w, int out_h);

/// Crop `m` to `box` (clamped to the mask bounds) and resample to side x side.
SoftMask crop_resize(const BinaryMask& m, const BoxXYXY& box, int side);

/// Inverse of crop_resize: resample `s` into the box region of an
/// image_w x image_h canvas, zero outside the box.
SoftMask paste_into_box(const SoftMask& s, const BoxXYXY& box, int image_w, int image_h);

/// Even-odd rasterization; a pixel is set iff its center (x+0.5, y+0.5)
/// lies inside the polygon.
BinaryMask rasterize_polygon(const Polygon& p, int width, int height);

/// Tight bounding box of the set pixels. Throws if the mask is empty.
BoxXYXY tight_box(const BinaryMask& m);

}  // namespace uqr

#endif  // UQR_MASK_HPP_
