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

#include "uqr/targets.hpp"

#include <stdexcept>

namespace uqr {

CropMode crop_mode_from_string(const std::string& name) {
  if (name == "box") return CropMode::kBoxCrop;
  if (name == "full") return CropMode::kFullImage;
  throw std::invalid_argument("unknown crop mode: " + name + " (expected box|full)");
}

std::string to_string(CropMode mode) {
  return mode == CropMode::kBoxCrop ? "box" : "full";
}

SoftMask codec_space_mask(const SceneInstance& inst, int side, CropMode mode) {
  if (inst.mask.empty_mask()) throw std::invalid_argument("codec_space_mask: degenerate instance");
  SoftMask soft = mode == CropMode::kBoxCrop ? crop_resize(inst.mask, inst.box, side)
                                             : resize(to_soft(inst.mask), side, side);
  // Codecs consume binary ground truth; the resampling softened the edges.
  return to_soft(binarize(soft, 0.5));
}

GroundTruthInstance instance_to_target(const SceneInstance& inst, const MaskCodec& codec,
                                       CropMode mode, int image_w, int image_h) {
  GroundTruthInstance target;
  target.category = inst.category;
  target.box = to_cxcywh(inst.box, image_w, image_h);
  target.raw_mask = inst.mask;
  target.mask_vector = codec.encode(codec_space_mask(inst, codec.spec().mask_side, mode));
  return target;
}

std::vector<SoftMask> collect_codec_masks(std::span<const Scene> scenes, int side, CropMode mode) {
  std::vector<SoftMask> masks;
  for (const Scene& scene : scenes) {
    for (const SceneInstance& inst : scene.instances) {
      masks.push_back(codec_space_mask(inst, side, mode));
    }
  }
  return masks;
}

std::vector<MaskCodec> fit_codecs(std::span<const Scene> train_scenes,
                                  std::span<const CodecSpec> specs, CropMode mode) {
  std::vector<MaskCodec> fitted;
  fitted.reserve(specs.size());
  for (const CodecSpec& spec : specs) {
    std::vector<SoftMask> masks;
    if (spec.kind == CodecKind::kPca || spec.kind == CodecKind::kSparse) {
      masks = collect_codec_masks(train_scenes, spec.mask_side, mode);
      if (static_cast<int>(masks.size()) < spec.vector_dim) {
        throw std::invalid_argument("fit_codecs: not enough training masks for n_k");
      }
    }
    fitted.push_back(MaskCodec::fit(spec, masks));
  }
  return fitted;
}

}  // namespace uqr
