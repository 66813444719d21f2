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

#include "uqr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "uqr/coco.hpp"
#include "uqr/pnm.hpp"

namespace uqr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

BinaryMask disk_mask(int canvas, double cx, double cy, double radius) {
  BinaryMask m(canvas, canvas);
  const double r2 = radius * radius;
  for (int y = 0; y < canvas; ++y) {
    for (int x = 0; x < canvas; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) m.at(x, y) = 1;
    }
  }
  return m;
}

struct Candidate {
  int category = 0;
  BinaryMask mask;
};

// Geometry only; the category is fixed upfront so rejection cannot skew the
// class distribution.
bool sample_candidate(std::mt19937_64& rng, const SyntheticConfig& cfg, Candidate& out) {
  switch (out.category) {
    case kCategoryDisk: {
      const double r = uniform(rng, cfg.min_size, cfg.max_size);
      const double cx = uniform(rng, r, cfg.canvas - r);
      const double cy = uniform(rng, r, cfg.canvas - r);
      out.mask = disk_mask(cfg.canvas, cx, cy, r);
      break;
    }
    case kCategoryRectangle: {
      const double w = uniform(rng, cfg.min_size, cfg.max_size);
      const double h = uniform(rng, cfg.min_size, cfg.max_size);
      const double x0 = uniform(rng, 0.0, cfg.canvas - w);
      const double y0 = uniform(rng, 0.0, cfg.canvas - h);
      Polygon poly;
      poly.vertices = {{x0, y0}, {x0 + w, y0}, {x0 + w, y0 + h}, {x0, y0 + h}};
      out.mask = rasterize_polygon(poly, cfg.canvas, cfg.canvas);
      break;
    }
    default: {
      const double s = uniform(rng, cfg.min_size, cfg.max_size);
      const double x0 = uniform(rng, 0.0, cfg.canvas - s);
      const double y0 = uniform(rng, 0.0, cfg.canvas - s);
      Polygon poly;
      for (int v = 0; v < 3; ++v) {
        poly.vertices.emplace_back(uniform(rng, x0, x0 + s), uniform(rng, y0, y0 + s));
      }
      out.mask = rasterize_polygon(poly, cfg.canvas, cfg.canvas);
      break;
    }
  }
  return static_cast<int>(out.mask.count()) >= cfg.min_pixels;
}

bool build_scene(std::mt19937_64& rng, const SyntheticConfig& cfg, Scene& scene) {
  std::uniform_int_distribution<int> count_dist(cfg.min_instances, cfg.max_instances);
  const int wanted = count_dist(rng);
  scene.instances.clear();

  std::uniform_int_distribution<int> category_dist(0, kNumShapeCategories - 1);
  for (int slot = 0; slot < wanted; ++slot) {
    const int category = category_dist(rng);
    bool placed = false;
    for (int tries = 0; tries < 64 && !placed; ++tries) {
      Candidate cand;
      cand.category = category;
      if (!sample_candidate(rng, cfg, cand)) continue;
      bool ok = true;
      for (const SceneInstance& existing : scene.instances) {
        if (mask_iou(existing.mask, cand.mask) > cfg.max_overlap_iou) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      SceneInstance inst;
      inst.category = cand.category;
      inst.box = tight_box(cand.mask);
      inst.mask = std::move(cand.mask);
      scene.instances.push_back(std::move(inst));
      placed = true;
    }
    if (!placed) return false;
  }

  // Noise background, then shapes at distinct evenly spaced intensities.
  scene.image.resize(cfg.canvas, cfg.canvas);
  for (int y = 0; y < cfg.canvas; ++y)
    for (int x = 0; x < cfg.canvas; ++x) scene.image(y, x) = uniform(rng, 0.0, cfg.noise_level);
  const int n = static_cast<int>(scene.instances.size());
  std::vector<double> levels(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) levels[static_cast<std::size_t>(k)] = 0.4 + 0.6 * (k + 0.5) / n;
  std::shuffle(levels.begin(), levels.end(), rng);
  for (int k = 0; k < n; ++k) {
    const SceneInstance& inst = scene.instances[static_cast<std::size_t>(k)];
    for (int y = 0; y < cfg.canvas; ++y) {
      for (int x = 0; x < cfg.canvas; ++x) {
        if (inst.mask.at(x, y)) scene.image(y, x) = levels[static_cast<std::size_t>(k)];
      }
    }
  }
  return true;
}

std::vector<int> rle_encode_column_major(const BinaryMask& m) {
  std::vector<int> counts;
  int run = 0;
  std::uint8_t current = 0;  // runs start with zeros
  for (int x = 0; x < m.width; ++x) {
    for (int y = 0; y < m.height; ++y) {
      const std::uint8_t bit = m.at(x, y);
      if (bit == current) {
        ++run;
      } else {
        counts.push_back(run);
        current = bit;
        run = 1;
      }
    }
  }
  counts.push_back(run);
  return counts;
}

}  // namespace

std::vector<Scene> gen_synthetic(std::uint64_t seed, int count, const SyntheticConfig& cfg) {
  if (count < 1) throw std::invalid_argument("gen_synthetic: count must be >= 1");
  if (cfg.min_instances < 1 || cfg.max_instances < cfg.min_instances) {
    throw std::invalid_argument("gen_synthetic: bad instance range");
  }
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int index = 0; index < count; ++index) {
    Scene scene;
    bool done = false;
    for (std::uint64_t attempt = 0; attempt < 256 && !done; ++attempt) {
      std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) * 4096 + attempt)));
      done = build_scene(rng, cfg, scene);
    }
    if (!done) throw std::runtime_error("gen_synthetic: rejection budget exhausted");
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

void save_dataset(const std::filesystem::path& dir, std::span<const Scene> scenes) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  nlohmann::json root;
  root["images"] = nlohmann::json::array();
  root["annotations"] = nlohmann::json::array();
  root["categories"] = nlohmann::json::array();
  const char* names[] = {"disk", "rectangle", "triangle"};
  for (int c = 0; c < kNumShapeCategories; ++c) {
    root["categories"].push_back({{"id", c + 1}, {"name", names[c]}});
  }

  int annotation_id = 1;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& scene = scenes[i];
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05zu.pgm", i);
    const int h = static_cast<int>(scene.image.rows());
    const int w = static_cast<int>(scene.image.cols());
    SoftMask img(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(x, y) = scene.image(y, x);
    write_pgm(img, dir / "images" / name);
    root["images"].push_back({{"id", static_cast<int>(i) + 1},
                              {"file_name", std::string("images/") + name},
                              {"width", w},
                              {"height", h}});

    for (const SceneInstance& inst : scene.instances) {
      nlohmann::json ann;
      ann["id"] = annotation_id++;
      ann["image_id"] = static_cast<int>(i) + 1;
      ann["category_id"] = inst.category + 1;
      ann["iscrowd"] = 0;
      ann["area"] = static_cast<double>(inst.mask.count());
      ann["bbox"] = {inst.box.x1, inst.box.y1, inst.box.width(), inst.box.height()};
      // Disks round-trip through RLE; polygonal shapes would need their
      // vertices, which the mask no longer carries, so RLE is used for all.
      ann["segmentation"] = {{"size", {h, w}}, {"counts", rle_encode_column_major(inst.mask)}};
      root["annotations"].push_back(std::move(ann));
    }
  }

  std::ofstream out(dir / "annotations.json");
  if (!out) throw std::runtime_error("cannot write dataset index: " + (dir / "annotations.json").string());
  out << root.dump(1) << '\n';
}

std::vector<Scene> load_dataset(const std::filesystem::path& dir) {
  const CocoLoadResult loaded = load_coco(dir / "annotations.json");
  std::vector<Scene> scenes(loaded.images.size());
  std::map<int, std::size_t> index_of;
  for (std::size_t i = 0; i < loaded.images.size(); ++i) {
    const CocoImageInfo& info = loaded.images[i];
    index_of[info.id] = i;
    const SoftMask img = read_pgm(dir / info.file_name);
    scenes[i].image.resize(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) scenes[i].image(y, x) = img.at(x, y);
  }
  for (const CocoAnnotationRecord& rec : loaded.records) {
    const auto it = index_of.find(rec.image_id);
    if (it == index_of.end()) throw std::runtime_error("load_dataset: annotation for unknown image");
    SceneInstance inst;
    inst.category = rec.category;
    inst.mask = rec.mask;
    inst.box = rec.bbox;
    scenes[it->second].instances.push_back(std::move(inst));
  }
  return scenes;
}

}  // namespace uqr
