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

#ifndef UQR_MODEL_HPP_
#define UQR_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "uqr/autodiff.hpp"
#include "uqr/codec.hpp"
#include "uqr/matching.hpp"

namespace uqr {

/// Raised when training or evaluation produces a non-finite value.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecoderConfig {
  int queries = 16;      // J
  int width = 64;        // model width (symbol C)
  int layers = 2;        // K decoder layers
  int encoder_layers = 2;
  int heads = 4;
  int classes = 3;       // S
  int image_side = 64;
  int patch_side = 4;    // stem stride
  int stem_hidden = 32;  // channels between the two stem stages
  int vector_dim = 64;   // n_k fed to the mask head
  int ffn_hidden = 256;
  int box_hidden = 256;
  int mask_hidden = 1024;

  /// Tokens after the stem: a patchify stage at `patch_side` stride followed
  /// by two unpadded 3x3 mixing stages, each shaving a 1-token border.
  int token_grid() const { return image_side / patch_side - 4; }
  int tokens() const { return token_grid() * token_grid(); }
  void validate() const;
};

struct TrainConfig {
  double lr = 2e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;  // Adam momentum
  double beta2 = 0.999;
  int steps = 2000;
  int batch_size = 4;
  std::uint64_t seed = 0;
  LossWeights weights;
  FocalParams focal;
  double lr_decay_factor = 0.1;
  double lr_decay_fraction = 0.8;  // decay once at this fraction of steps
  bool detection_only = false;
  /// How many of the last decoder layers receive the vector loss; -1 = all.
  int vector_loss_layers = -1;

  void validate() const;
};

/// Detection-only ablation: no mask head, lambda_vec = 0.
TrainConfig detection_only_mode(TrainConfig cfg);

/// One training example: grayscale image plus its target instances.
struct TrainSample {
  Eigen::MatrixXd image;  // image_side x image_side, values in [0, 1]
  std::vector<GroundTruthInstance> targets;
};

/// Named parameter tensors; iteration order is the lexicographic name order.
struct ModelParams {
  std::map<std::string, Eigen::MatrixXd> tensors;

  static ModelParams init(const DecoderConfig& cfg, std::uint64_t seed);
  std::size_t scalar_count() const;
};

/// Fixed 2-D sinusoidal position codes for a grid x grid token layout.
Eigen::MatrixXd positional_encoding(int grid, int width);

/// Non-overlapping patches flattened row-major, one token per row.
Eigen::MatrixXd patch_tokens(const Eigen::MatrixXd& image, int patch_side);

/// Per-layer head outputs on the tape. `vectors` is invalid when the mask
/// branch is detached.
struct LayerOutput {
  ad::Var logits;
  ad::Var boxes;       // sigmoid(box_logits)
  ad::Var box_logits;  // pre-sigmoid, anchor + per-layer delta
  ad::Var vectors;
};

/// Tape handles for every parameter tensor.
using ParamVars = std::map<std::string, ad::Var>;

ParamVars lift_params(ad::Tape& tape, const ModelParams& params);

/// Toy feature extractor: patchify + linear + relu, two unpadded 3x3 mixing
/// convolutions + relu, then fixed positional encodings. A zero image still
/// encodes to exactly the position codes (biases initialize to zero).
ad::Var encode_image(ad::Tape& tape, const ParamVars& vars, const Eigen::MatrixXd& image,
                     const DecoderConfig& cfg);

/// Self-attention + feed-forward refinement of the token features (pre-norm
/// residual blocks; zero weights leave the tokens untouched).
ad::Var encoder_forward(ad::Tape& tape, const ParamVars& vars, ad::Var tokens,
                        const DecoderConfig& cfg);

/// Runs K decoder layers (self-attention, cross-attention, feed-forward, all
/// residual) and returns every intermediate query state for auxiliary
/// supervision.
std::vector<ad::Var> decoder_forward(ad::Tape& tape, const ParamVars& vars, ad::Var queries,
                                     ad::Var memory, const DecoderConfig& cfg);

/// `box_anchor` (pre-sigmoid, J x 4) seeds the box head; invalid means zero.
/// Each decoder layer refines the previous layer's detached box logits.
LayerOutput heads_forward(ad::Tape& tape, const ParamVars& vars, ad::Var query_state,
                          const DecoderConfig& cfg, bool with_mask, ad::Var box_anchor = {});

/// Full forward for one image: one LayerOutput per decoder layer.
std::vector<LayerOutput> model_forward(ad::Tape& tape, const ParamVars& vars,
                                       const Eigen::MatrixXd& image, const DecoderConfig& cfg,
                                       bool with_mask);

PredictionSet read_predictions(const ad::Tape& tape, const LayerOutput& layer);

/// Matches on detached values, then rebuilds the matched loss on the tape so
/// gradients flow. Breakdown values equal the plain instance_loss.
struct TapeLoss {
  ad::Var total;
  LossBreakdown breakdown;
};
TapeLoss tape_instance_loss(ad::Tape& tape, const LayerOutput& layer,
                            const std::vector<GroundTruthInstance>& gts, const TrainConfig& cfg,
                            bool vector_term, CodecKind vector_codec);

/// Adam with decoupled weight decay and a single step-decay of the rate.
class Trainer {
 public:
  Trainer(DecoderConfig model_cfg, TrainConfig train_cfg, CodecKind vector_codec);

  /// One optimization step over a batch; returns the mean loss breakdown
  /// (averaged over decoder layers and batch images).
  LossBreakdown step(std::span<const TrainSample> batch);

  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }
  const DecoderConfig& model_config() const { return model_cfg_; }
  const TrainConfig& train_config() const { return train_cfg_; }
  int steps_taken() const { return step_count_; }
  double current_lr() const;

 private:
  DecoderConfig model_cfg_;
  TrainConfig train_cfg_;
  CodecKind vector_codec_;
  ModelParams params_;
  std::map<std::string, Eigen::MatrixXd> adam_m_;
  std::map<std::string, Eigen::MatrixXd> adam_v_;
  int step_count_ = 0;
};

/// Batch loss evaluated without touching optimizer state. Used by the
/// finite-difference checks.
double batch_loss_value(const ModelParams& params, const DecoderConfig& model_cfg,
                        const TrainConfig& train_cfg, CodecKind vector_codec,
                        std::span<const TrainSample> batch);

struct GradCheckSample {
  std::string tensor;
  int row = 0;
  int col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckSample> samples;         // full-pipeline spot checks
  double pass_fraction = 0.0;                   // rel_err < tol among samples
  std::map<std::string, double> primitive_max_err;
  bool primitives_ok = false;
  bool pipeline_ok = false;
  bool passed() const { return primitives_ok && pipeline_ok; }
};

/// Central-difference verification: every tape primitive in isolation
/// (tolerance `primitive_tol`) and `sample_count` randomly chosen parameters
/// through the full pipeline (tolerance `pipeline_tol`, 99% must pass).
GradCheckReport grad_check(const ModelParams& params, const DecoderConfig& model_cfg,
                           const TrainConfig& train_cfg, CodecKind vector_codec,
                           std::span<const TrainSample> batch, int sample_count = 500,
                           double step = 1e-5, double pipeline_tol = 1e-4,
                           double primitive_tol = 1e-6, std::uint64_t seed = 0);

struct Detection {
  int category = 0;
  double score = 0.0;
  BoxXYXY box;
  BinaryMask mask;  // empty when the mask branch is off
};

/// Inference for one image: thresholded per-query outputs, mask vectors
/// decoded through `codec`, binarized, and pasted into the predicted box.
/// No suppression of any kind.
std::vector<Detection> predict(const ModelParams& params, const DecoderConfig& cfg,
                               const Eigen::MatrixXd& image, const MaskCodec* codec,
                               double score_thresh = 0.5);

/// Flat binary checkpoint: magic "UQRM", config block, then named parameter
/// blobs (u32 name length, name, u32 rows/cols, row-major f64 LE).
void save_checkpoint(const std::filesystem::path& path, const DecoderConfig& model_cfg,
                     const CodecSpec& codec_spec, const ModelParams& params);

struct Checkpoint {
  DecoderConfig model;
  CodecSpec codec;
  ModelParams params;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace uqr

#endif  // UQR_MODEL_HPP_
