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

#include "uqr/coco.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace uqr {

namespace {

using nlohmann::json;

BoxXYXY xywh_to_xyxy(double x, double y, double w, double h) {
  return BoxXYXY{x, y, x + w, y + h};
}

}  // namespace

BinaryMask decode_rle(const std::vector<int>& counts, int width, int height) {
  long long total = 0;
  for (int c : counts) {
    if (c < 0) throw std::invalid_argument("decode_rle: negative run length");
    total += c;
  }
  if (total != static_cast<long long>(width) * height) {
    throw std::invalid_argument("decode_rle: counts do not cover the image");
  }
  BinaryMask m(width, height);
  long long at = 0;
  std::uint8_t bit = 0;  // runs start with zeros
  for (int c : counts) {
    for (int i = 0; i < c; ++i, ++at) {
      if (bit) {
        // column-major: the pixel index walks down columns
        const int x = static_cast<int>(at / height);
        const int y = static_cast<int>(at % height);
        m.at(x, y) = 1;
      }
    }
    bit ^= 1;
  }
  return m;
}

CocoLoadResult load_coco(const std::filesystem::path& json_path,
                         const std::map<int, std::pair<int, int>>& image_sizes) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open annotation file: " + json_path.string());
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in " + json_path.string() + ": " + e.what());
  }

  CocoLoadResult result;
  std::map<int, int> category_remap;
  for (const json& cat : root.value("categories", json::array())) {
    const int id = cat.at("id").get<int>();
    category_remap[id] = static_cast<int>(result.category_ids.size());
    result.category_ids.push_back(id);
    result.category_names.push_back(cat.value("name", std::string()));
  }

  std::map<int, std::pair<int, int>> size_of;
  for (const json& img : root.value("images", json::array())) {
    CocoImageInfo info;
    info.id = img.at("id").get<int>();
    info.file_name = img.value("file_name", std::string());
    info.width = img.value("width", 0);
    info.height = img.value("height", 0);
    if (const auto it = image_sizes.find(info.id); it != image_sizes.end()) {
      info.width = it->second.first;
      info.height = it->second.second;
    }
    if (info.width <= 0 || info.height <= 0) {
      throw std::runtime_error("image " + std::to_string(info.id) + " has no usable size");
    }
    size_of[info.id] = {info.width, info.height};
    result.images.push_back(std::move(info));
  }

  for (const json& ann : root.value("annotations", json::array())) {
    const int ann_id = ann.value("id", -1);
    if (ann.value("iscrowd", 0) != 0) {
      result.skipped.emplace_back(ann_id, "iscrowd");
      continue;
    }
    const int image_id = ann.at("image_id").get<int>();
    const auto size_it = size_of.find(image_id);
    if (size_it == size_of.end()) {
      result.skipped.emplace_back(ann_id, "unknown image id");
      continue;
    }
    const auto [width, height] = size_it->second;

    const int raw_category = ann.at("category_id").get<int>();
    const auto cat_it = category_remap.find(raw_category);
    if (cat_it == category_remap.end()) {
      throw std::runtime_error("annotation " + std::to_string(ann_id) + ": unknown category id " +
                               std::to_string(raw_category));
    }

    if (!ann.contains("segmentation")) {
      result.skipped.emplace_back(ann_id, "no segmentation");
      continue;
    }
    const json& seg = ann.at("segmentation");

    CocoAnnotationRecord rec;
    rec.annotation_id = ann_id;
    rec.image_id = image_id;
    rec.category = cat_it->second;

    if (seg.is_object()) {
      if (!seg.contains("counts") || !seg.at("counts").is_array()) {
        // compressed RLE stores counts as a string; unsupported by design
        result.skipped.emplace_back(ann_id, "compressed RLE is not supported; "
                                            "re-export with uncompressed counts");
        continue;
      }
      rec.rle_counts = seg.at("counts").get<std::vector<int>>();
      rec.mask = decode_rle(rec.rle_counts, width, height);
    } else if (seg.is_array() && !seg.empty()) {
      rec.mask = BinaryMask(width, height);
      for (const json& part : seg) {
        const auto flat = part.get<std::vector<double>>();
        if (flat.size() < 6 || flat.size() % 2 != 0) {
          throw std::runtime_error("annotation " + std::to_string(ann_id) + ": bad polygon");
        }
        Polygon poly;
        for (std::size_t i = 0; i + 1 < flat.size(); i += 2) {
          poly.vertices.emplace_back(flat[i], flat[i + 1]);
        }
        rec.polygons.push_back(poly);
        const BinaryMask part_mask = rasterize_polygon(poly, width, height);
        for (std::size_t i = 0; i < rec.mask.bits.size(); ++i) rec.mask.bits[i] |= part_mask.bits[i];
      }
    } else {
      result.skipped.emplace_back(ann_id, "empty segmentation");
      continue;
    }

    if (rec.mask.empty_mask()) {
      result.skipped.emplace_back(ann_id, "empty mask after decoding");
      continue;
    }

    const BoxXYXY tight = tight_box(rec.mask);
    bool bbox_ok = false;
    if (ann.contains("bbox") && ann.at("bbox").is_array() && ann.at("bbox").size() == 4) {
      const auto b = ann.at("bbox").get<std::vector<double>>();
      rec.bbox = xywh_to_xyxy(b[0], b[1], b[2], b[3]);
      bbox_ok = std::abs(rec.bbox.x1 - tight.x1) <= 2.0 && std::abs(rec.bbox.y1 - tight.y1) <= 2.0 &&
                std::abs(rec.bbox.x2 - tight.x2) <= 2.0 && std::abs(rec.bbox.y2 - tight.y2) <= 2.0;
    }
    if (!bbox_ok) {
      rec.bbox = tight;
      result.warnings.emplace_back(ann_id, "bbox missing or inconsistent with mask; recomputed");
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

}  // namespace uqr
