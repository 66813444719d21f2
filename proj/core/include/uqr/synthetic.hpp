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

#ifndef UQR_SYNTHETIC_HPP_
#define UQR_SYNTHETIC_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uqr/mask.hpp"

namespace uqr {

inline constexpr int kCategoryDisk = 0;
inline constexpr int kCategoryRectangle = 1;
inline constexpr int kCategoryTriangle = 2;
inline constexpr int kNumShapeCategories = 3;

struct SceneInstance {
  int category = 0;
  BinaryMask mask;  // at image resolution
  BoxXYXY box;      // tight bounding box of the mask
};

struct Scene {
  Eigen::MatrixXd image;  // grayscale in [0, 1]
  std::vector<SceneInstance> instances;
};

struct SyntheticConfig {
  int canvas = 64;
  int min_instances = 1;
  int max_instances = 4;
  double min_size = 8.0;   // shape side / radius, px
  double max_size = 24.0;
  double max_overlap_iou = 0.3;
  int min_pixels = 16;
  double noise_level = 0.2;  // background amplitude
};

/// Deterministic scene sampler: shapes at distinct intensities over uniform
/// noise, inter-instance mask overlap capped by rejection.
std::vector<Scene> gen_synthetic(std::uint64_t seed, int count, const SyntheticConfig& cfg = {});

/// Persist scenes as PGM images plus a COCO-style JSON index
/// (`annotations.json`), so load_coco round-trips the output.
void save_dataset(const std::filesystem::path& dir, std::span<const Scene> scenes);
std::vector<Scene> load_dataset(const std::filesystem::path& dir);

}  // namespace uqr

#endif  // UQR_SYNTHETIC_HPP_
