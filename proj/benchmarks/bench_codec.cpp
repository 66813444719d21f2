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

#include <benchmark/benchmark.h>

#include <random>

#include "uqr/codec.hpp"
#include "uqr/synthetic.hpp"
#include "uqr/targets.hpp"

namespace {

std::vector<uqr::SoftMask> corpus(int count, int side) {
  const auto scenes = uqr::gen_synthetic(1, count);
  std::vector<uqr::SoftMask> masks;
  for (const uqr::Scene& scene : scenes) {
    for (const uqr::SceneInstance& inst : scene.instances) {
      if (static_cast<int>(masks.size()) < count) {
        masks.push_back(uqr::codec_space_mask(inst, side, uqr::CropMode::kBoxCrop));
      }
    }
  }
  return masks;
}

uqr::CodecSpec spec_for(uqr::CodecKind kind, int side, int dim) {
  uqr::CodecSpec spec;
  spec.kind = kind;
  spec.mask_side = side;
  spec.vector_dim = dim;
  spec.dict_iters = 5;
  return spec;
}

void BM_DctEncodeDecode(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto masks = corpus(32, side);
  const auto codec = uqr::MaskCodec::fit(spec_for(uqr::CodecKind::kDct, side, 256 <= side * side ? 256 : side * side), masks);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto recon = codec.decode(codec.encode(masks[i % masks.size()]));
    benchmark::DoNotOptimize(recon.values.data());
    ++i;
  }
}
BENCHMARK(BM_DctEncodeDecode)->Arg(32)->Arg(64)->Arg(128);

void BM_PcaEncode(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto masks = corpus(128, side);
  const auto codec = uqr::MaskCodec::fit(spec_for(uqr::CodecKind::kPca, side, 64), masks);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(codec.encode(masks[i % masks.size()]).coeffs.data());
    ++i;
  }
}
BENCHMARK(BM_PcaEncode)->Arg(32)->Arg(64);

void BM_LassoEncode(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto masks = corpus(80, side);
  auto spec = spec_for(uqr::CodecKind::kSparse, side, 64);
  const auto codec = uqr::MaskCodec::fit(spec, masks);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(codec.encode(masks[i % masks.size()]).coeffs.data());
    ++i;
  }
}
BENCHMARK(BM_LassoEncode)->Arg(32)->Arg(64);

}  // namespace
