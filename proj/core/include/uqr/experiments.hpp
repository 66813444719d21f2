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

#ifndef UQR_EXPERIMENTS_HPP_
#define UQR_EXPERIMENTS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uqr/eval.hpp"
#include "uqr/model.hpp"
#include "uqr/targets.hpp"

namespace uqr {

/// Reconstruction sweep over (codec, N, n_k) cells. `cells` overrides the
/// sides x dims cross product when non-empty. Flatten ignores `dims` and
/// reports one lossless cell per side. PCA and sparse dictionaries are fitted
/// on a split disjoint from the masks the report is computed on.
struct SweepConfig {
  std::uint64_t seed = 0;
  int mask_count = 500;      // evaluation masks
  int fit_mask_count = 500;  // training masks for PCA / sparse fitting
  std::vector<CodecKind> codecs = {CodecKind::kDct, CodecKind::kPca, CodecKind::kFlatten};
  std::vector<int> sides = {64, 96, 128, 256};
  std::vector<int> dims = {144, 256, 300, 400};
  std::vector<std::pair<int, int>> cells;  // explicit (N, n_k) pairs
  double beta = 0.2;
  int dict_iters = 30;
  int ista_iters = 200;
  double ista_tol = 1e-6;
  CropMode crop_mode = CropMode::kBoxCrop;
  SyntheticConfig synthetic;
  std::filesystem::path out_dir;
  int threads = 0;  // 0: hardware concurrency; UQR_THREADS caps either way

  void validate() const;
};

struct SweepCell {
  CodecKind codec = CodecKind::kDct;
  int side = 0;
  int dim = 0;
  int masks = 0;
  double mean_iou = 0.0;
  double median_iou = 0.0;
  double mean_soft_err = 0.0;  // per-pixel squared reconstruction error
  double encode_ms = 0.0;      // wall clock, whole cell
  double decode_ms = 0.0;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  const SweepCell* find(CodecKind codec, int side, int dim) const;
};

SweepReport run_codec_sweep(const SweepConfig& cfg);

/// End-to-end toy training: synthetic data, codec fitting, optimization,
/// then validation metrics.
struct TrainRunConfig {
  DecoderConfig model;
  TrainConfig train;
  CodecSpec codec{CodecKind::kDct, 32, 64};
  CropMode crop_mode = CropMode::kBoxCrop;
  std::uint64_t data_seed = 0;
  int train_scenes = 300;
  int val_scenes = 100;
  /// Threshold for the CLI-facing prediction dump; AP evaluation always
  /// ranks every query (threshold 0), COCO style.
  double score_thresh = 0.5;
  std::filesystem::path out_dir;

  void validate() const;
};

struct TrainRunResult {
  ApReport val_ap;
  double mean_matched_mask_iou = 0.0;  // decoded masks pasted into gt boxes
  double first100_mean_total = 0.0;
  double last100_mean_total = 0.0;
  std::filesystem::path checkpoint_path;
  std::filesystem::path codec_path;
  std::filesystem::path log_path;
};

TrainRunResult run_train(const TrainRunConfig& cfg);

struct EvalRunConfig {
  std::filesystem::path checkpoint;
  std::filesystem::path codec_file;  // defaults to codec.uqrb next to the checkpoint
  std::uint64_t data_seed = 0;
  int train_scenes = 300;  // reproduces the original split
  int val_scenes = 100;
  double score_thresh = 0.5;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> dataset_dir;  // evaluate a saved dataset instead

  void validate() const;
};

struct EvalRunResult {
  ApReport ap;
  int images = 0;
  int detections = 0;
};

EvalRunResult run_eval(const EvalRunConfig& cfg);

struct GradcheckRunConfig {
  DecoderConfig model;
  TrainConfig train;
  CodecSpec codec{CodecKind::kDct, 32, 64};
  std::uint64_t data_seed = 0;
  int batch_scenes = 2;
  int samples = 500;
  double step = 1e-5;
  double pipeline_tol = 1e-4;
  double primitive_tol = 1e-6;
  std::filesystem::path out_dir;

  void validate() const;
};

GradCheckReport run_gradcheck(const GradcheckRunConfig& cfg);

/// Mean IoU between each ground truth's mask and its matched prediction's
/// decoded mask pasted into the ground-truth box. Isolates mask-vector
/// quality from box regression.
double mean_matched_mask_iou(const ModelParams& params, const DecoderConfig& model_cfg,
                             const TrainConfig& train_cfg, const MaskCodec& codec,
                             CropMode crop_mode, std::span<const Scene> scenes);

/// Builds training samples (targets encoded through `codec`) for scenes.
std::vector<TrainSample> make_train_samples(std::span<const Scene> scenes, const MaskCodec& codec,
                                            CropMode crop_mode);

// JSON round trips for the config structs (used by --config and the resolved
// config each command writes next to its outputs).
std::string to_json(const SweepConfig& cfg);
std::string to_json(const TrainRunConfig& cfg);
std::string to_json(const EvalRunConfig& cfg);
std::string to_json(const GradcheckRunConfig& cfg);
SweepConfig sweep_config_from_json(const std::string& text);
TrainRunConfig train_config_from_json(const std::string& text);
EvalRunConfig eval_config_from_json(const std::string& text);
GradcheckRunConfig gradcheck_config_from_json(const std::string& text);

/// Thread budget: min(requested or hardware, UQR_THREADS when set).
int sweep_thread_budget(int requested);

}  // namespace uqr

#endif  // UQR_EXPERIMENTS_HPP_
