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

#ifndef UQR_TARGETS_HPP_
#define UQR_TARGETS_HPP_

#include <span>
#include <vector>

#include "uqr/codec.hpp"
#include "uqr/matching.hpp"
#include "uqr/synthetic.hpp"

namespace uqr {

/// Whether the N x N codec-space mask is the instance mask cropped to its
/// tight box (default) or the full-image mask resized.
enum class CropMode { kBoxCrop, kFullImage };

CropMode crop_mode_from_string(const std::string& name);
std::string to_string(CropMode mode);

/// The binary N x N mask that feeds the codec for one instance.
SoftMask codec_space_mask(const SceneInstance& inst, int side, CropMode mode);

/// Builds the (category, normalized box, mask vector) tuple supervising one
/// instance.
GroundTruthInstance instance_to_target(const SceneInstance& inst, const MaskCodec& codec,
                                       CropMode mode, int image_w, int image_h);

/// All codec-space masks of a scene list, in scene then instance order.
std::vector<SoftMask> collect_codec_masks(std::span<const Scene> scenes, int side, CropMode mode);

/// Fit every spec on the training scenes' codec-space masks (DCT and Flatten
/// fit nothing). Deterministic given input order.
std::vector<MaskCodec> fit_codecs(std::span<const Scene> train_scenes,
                                  std::span<const CodecSpec> specs,
                                  CropMode mode = CropMode::kBoxCrop);

}  // namespace uqr

#endif  // UQR_TARGETS_HPP_
