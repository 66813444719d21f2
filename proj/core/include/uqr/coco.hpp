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

#ifndef UQR_COCO_HPP_
#define UQR_COCO_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "uqr/mask.hpp"

namespace uqr {

struct CocoImageInfo {
  int id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
};

/// One usable annotation: category already remapped to contiguous [0, S),
/// exactly one segmentation form kept, mask rasterized at image resolution.
struct CocoAnnotationRecord {
  int annotation_id = 0;
  int image_id = 0;
  int category = 0;
  std::vector<Polygon> polygons;  // possibly several parts; empty if RLE
  std::vector<int> rle_counts;    // uncompressed, column-major; empty if polygons
  BoxXYXY bbox;
  BinaryMask mask;
};

struct CocoLoadResult {
  std::vector<CocoImageInfo> images;
  std::vector<CocoAnnotationRecord> records;
  /// annotation id -> reason, for crowd / compressed-RLE / other skips.
  std::vector<std::pair<int, std::string>> skipped;
  std::vector<std::pair<int, std::string>> warnings;
  /// original category id -> contiguous index, in file order.
  std::vector<int> category_ids;
  std::vector<std::string> category_names;
};

/// Decode uncompressed COCO RLE counts (column-major runs, starting with
/// zeros) into a binary mask.
BinaryMask decode_rle(const std::vector<int>& counts, int width, int height);

/// Parse a COCO-format annotation JSON (images / annotations / categories).
/// Polygons are rasterized; uncompressed RLE is decoded; compressed RLE
/// strings and iscrowd annotations are skipped with a reason. Image sizes
/// come from the file unless overridden through `image_sizes`.
CocoLoadResult load_coco(const std::filesystem::path& json_path,
                         const std::map<int, std::pair<int, int>>& image_sizes = {});

}  // namespace uqr

#endif  // UQR_COCO_HPP_
