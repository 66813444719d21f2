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

#include "uqr/matching.hpp"
#include "uqr/model.hpp"
#include "uqr/targets.hpp"

namespace {

void BM_Hungarian(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  const int cols = static_cast<int>(state.range(1));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  Eigen::MatrixXd cost(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) cost(r, c) = val(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(uqr::hungarian(cost).pairs.data());
  }
}
BENCHMARK(BM_Hungarian)->Args({4, 16})->Args({7, 7})->Args({16, 64});

void BM_TrainStep(benchmark::State& state) {
  uqr::DecoderConfig model;
  uqr::TrainConfig train;
  train.batch_size = 1;

  uqr::SyntheticConfig synth;
  const auto scenes = uqr::gen_synthetic(3, 4, synth);
  uqr::CodecSpec spec;
  spec.kind = uqr::CodecKind::kDct;
  spec.mask_side = 32;
  spec.vector_dim = model.vector_dim;
  const auto codec = uqr::MaskCodec::fit(spec, {});

  std::vector<uqr::TrainSample> samples;
  for (const uqr::Scene& scene : scenes) {
    uqr::TrainSample s;
    s.image = scene.image;
    for (const uqr::SceneInstance& inst : scene.instances) {
      s.targets.push_back(uqr::instance_to_target(inst, codec, uqr::CropMode::kBoxCrop, 64, 64));
    }
    samples.push_back(std::move(s));
  }

  uqr::Trainer trainer(model, train, uqr::CodecKind::kDct);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto loss = trainer.step(std::span(&samples[i % samples.size()], 1));
    benchmark::DoNotOptimize(loss.total);
    ++i;
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
