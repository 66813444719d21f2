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

#include "uqr/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "binio.hpp"

namespace uqr {

namespace {

using ad::Mat;
using ad::Tape;
using ad::Var;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Fixed enumeration of parameter tensors; initialization draws random numbers
// in exactly this order, so checkpoints are reproducible from (config, seed).
struct TensorSpec {
  std::string name;
  int rows;
  int cols;
  enum class Init { kUniformFanIn, kZero, kNormal } init;
};

std::vector<TensorSpec> tensor_specs(const DecoderConfig& cfg) {
  using Init = TensorSpec::Init;
  std::vector<TensorSpec> specs;
  const int d = cfg.width;
  specs.push_back({"query_embed", cfg.queries, d, Init::kNormal});
  specs.push_back({"stem.w1", cfg.patch_side * cfg.patch_side, cfg.stem_hidden, Init::kUniformFanIn});
  specs.push_back({"stem.b1", 1, cfg.stem_hidden, Init::kZero});
  specs.push_back({"stem.w2", 9 * cfg.stem_hidden, d, Init::kUniformFanIn});
  specs.push_back({"stem.b2", 1, d, Init::kZero});
  specs.push_back({"stem.w3", 9 * d, d, Init::kUniformFanIn});
  specs.push_back({"stem.b3", 1, d, Init::kZero});
  for (int layer = 0; layer < cfg.encoder_layers; ++layer) {
    const std::string p = "enc" + std::to_string(layer) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      specs.push_back({p + "self." + w, d, d, Init::kUniformFanIn});
    }
    specs.push_back({p + "ffn.w1", d, cfg.ffn_hidden, Init::kUniformFanIn});
    specs.push_back({p + "ffn.b1", 1, cfg.ffn_hidden, Init::kZero});
    specs.push_back({p + "ffn.w2", cfg.ffn_hidden, d, Init::kUniformFanIn});
    specs.push_back({p + "ffn.b2", 1, d, Init::kZero});
  }
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string p = "dec" + std::to_string(layer) + ".";
    for (const char* block : {"self.", "cross."}) {
      for (const char* w : {"wq", "wk", "wv", "wo"}) {
        specs.push_back({p + block + w, d, d, Init::kUniformFanIn});
      }
    }
    specs.push_back({p + "ffn.w1", d, cfg.ffn_hidden, Init::kUniformFanIn});
    specs.push_back({p + "ffn.b1", 1, cfg.ffn_hidden, Init::kZero});
    specs.push_back({p + "ffn.w2", cfg.ffn_hidden, d, Init::kUniformFanIn});
    specs.push_back({p + "ffn.b2", 1, d, Init::kZero});
  }
  specs.push_back({"head.cls.w", d, cfg.classes, Init::kUniformFanIn});
  specs.push_back({"head.cls.b", 1, cfg.classes, Init::kZero});
  const auto mlp = [&specs](const std::string& p, int in, int hidden, int out) {
    specs.push_back({p + "w0", in, hidden, TensorSpec::Init::kUniformFanIn});
    specs.push_back({p + "b0", 1, hidden, TensorSpec::Init::kZero});
    specs.push_back({p + "w1", hidden, hidden, TensorSpec::Init::kUniformFanIn});
    specs.push_back({p + "b1", 1, hidden, TensorSpec::Init::kZero});
    specs.push_back({p + "w2", hidden, out, TensorSpec::Init::kUniformFanIn});
    specs.push_back({p + "b2", 1, out, TensorSpec::Init::kZero});
  };
  mlp("head.box.", d, cfg.box_hidden, 4);
  mlp("head.mask.", d, cfg.mask_hidden, cfg.vector_dim);
  return specs;
}

Var mlp3(Tape& t, const ParamVars& vars, const std::string& p, Var x) {
  Var h = t.relu(t.add_row(t.matmul(x, vars.at(p + "w0")), vars.at(p + "b0")));
  h = t.relu(t.add_row(t.matmul(h, vars.at(p + "w1")), vars.at(p + "b1")));
  return t.add_row(t.matmul(h, vars.at(p + "w2")), vars.at(p + "b2"));
}

// Scaled dot-product attention; `query_pos` (when valid) is added to the
// attention inputs on the query side, and to the key side too when the keys
// are the queries themselves (self-attention).
Var attention(Tape& t, const ParamVars& vars, const std::string& p, Var queries, Var memory,
              int heads, Var query_pos = {}, bool pos_on_keys = false) {
  const Var q_in = query_pos.valid() ? t.add(queries, query_pos) : queries;
  const Var k_in = pos_on_keys && query_pos.valid() ? t.add(memory, query_pos) : memory;
  const Var q = t.matmul(q_in, vars.at(p + "wq"));
  const Var k = t.matmul(k_in, vars.at(p + "wk"));
  const Var v = t.matmul(memory, vars.at(p + "wv"));
  const int width = t.cols(q);
  const int head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> per_head;
  per_head.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = t.slice_cols(q, h * head_dim, head_dim);
    const Var kh = t.slice_cols(k, h * head_dim, head_dim);
    const Var vh = t.slice_cols(v, h * head_dim, head_dim);
    const Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
    per_head.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  return t.matmul(t.concat_cols(per_head), vars.at(p + "wo"));
}

// Focal loss summed over all (query, class) slots against a 0/1 target grid.
Var tape_focal_sum(Tape& t, Var logits, const Mat& targets, const FocalParams& fp) {
  const Var p = t.sigmoid(logits);
  const Var pos = t.scale(
      t.mul(t.pow_const(t.add_scalar(t.neg(p), 1.0), fp.gamma), t.softplus(t.neg(logits))), fp.alpha);
  const Var neg = t.scale(t.mul(t.pow_const(p, fp.gamma), t.softplus(logits)), 1.0 - fp.alpha);
  const Var on = t.constant(targets);
  const Var off = t.constant(Mat::Ones(targets.rows(), targets.cols()) - targets);
  return t.sum(t.add(t.mul(on, pos), t.mul(off, neg)));
}

// Sum of (1 - giou) over matched pairs; boxes in normalized cxcywh.
Var tape_giou_loss_sum(Tape& t, Var pred_boxes, const Mat& gt_xyxy) {
  const Var cx = t.slice_cols(pred_boxes, 0, 1);
  const Var cy = t.slice_cols(pred_boxes, 1, 1);
  const Var w = t.slice_cols(pred_boxes, 2, 1);
  const Var h = t.slice_cols(pred_boxes, 3, 1);
  const Var px1 = t.sub(cx, t.scale(w, 0.5));
  const Var px2 = t.add(cx, t.scale(w, 0.5));
  const Var py1 = t.sub(cy, t.scale(h, 0.5));
  const Var py2 = t.add(cy, t.scale(h, 0.5));

  const Eigen::Index n = gt_xyxy.rows();
  const Var gx1 = t.constant(gt_xyxy.col(0));
  const Var gy1 = t.constant(gt_xyxy.col(1));
  const Var gx2 = t.constant(gt_xyxy.col(2));
  const Var gy2 = t.constant(gt_xyxy.col(3));
  Mat gt_area(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    gt_area(i, 0) = (gt_xyxy(i, 2) - gt_xyxy(i, 0)) * (gt_xyxy(i, 3) - gt_xyxy(i, 1));
  }

  const Var iw = t.relu(t.sub(t.cwise_min(px2, gx2), t.cwise_max(px1, gx1)));
  const Var ih = t.relu(t.sub(t.cwise_min(py2, gy2), t.cwise_max(py1, gy1)));
  const Var inter = t.mul(iw, ih);
  const Var uni = t.sub(t.add(t.mul(w, h), t.constant(gt_area)), inter);
  const Var ew = t.sub(t.cwise_max(px2, gx2), t.cwise_min(px1, gx1));
  const Var eh = t.sub(t.cwise_max(py2, gy2), t.cwise_min(py1, gy1));
  const Var enclosing = t.mul(ew, eh);
  const Var giou = t.sub(t.div(inter, uni), t.div(t.sub(enclosing, uni), enclosing));
  return t.sum(t.sub(t.constant(Mat::Ones(n, 1)), giou));
}

// Flatten baseline: L2 on the vectors plus dice on their spatial reshape.
Var tape_flatten_vec_sum(Tape& t, Var pred_vectors, const Mat& gt_vectors) {
  const Var gt = t.constant(gt_vectors);
  const Var l2 = t.sum(t.square(t.sub(pred_vectors, gt)));
  const Var ones_col = t.constant(Mat::Ones(gt_vectors.cols(), 1));
  const Var dots = t.matmul(t.mul(pred_vectors, gt), ones_col);          // R x 1
  const Var pred_sum = t.matmul(pred_vectors, ones_col);                 // R x 1
  const Mat gt_sum = gt_vectors.rowwise().sum();
  const Var num = t.add_scalar(t.scale(dots, 2.0), 1.0);
  const Var den = t.add_scalar(t.add(pred_sum, t.constant(gt_sum)), 1.0);
  const Var dice = t.sum(t.sub(t.constant(Mat::Ones(gt_vectors.rows(), 1)), t.div(num, den)));
  return t.add(l2, dice);
}

struct BatchLoss {
  Var total;
  LossBreakdown mean;
};

BatchLoss build_batch_loss(Tape& tape, const ParamVars& vars, const DecoderConfig& model_cfg,
                           const TrainConfig& train_cfg, CodecKind vector_codec,
                           std::span<const TrainSample> batch) {
  const bool with_mask = !train_cfg.detection_only;
  std::vector<Var> totals;
  LossBreakdown agg;
  for (const TrainSample& sample : batch) {
    const auto layers = model_forward(tape, vars, sample.image, model_cfg, with_mask);
    for (int k = 0; k < static_cast<int>(layers.size()); ++k) {
      const bool vec_on = with_mask && (train_cfg.vector_loss_layers < 0 ||
                                        k >= model_cfg.layers - train_cfg.vector_loss_layers);
      TapeLoss tl = tape_instance_loss(tape, layers[static_cast<std::size_t>(k)], sample.targets,
                                       train_cfg, vec_on, vector_codec);
      totals.push_back(tl.total);
      agg.cls += tl.breakdown.cls;
      agg.l1 += tl.breakdown.l1;
      agg.giou += tl.breakdown.giou;
      agg.vec += tl.breakdown.vec;
      agg.total += tl.breakdown.total;
    }
  }
  Var sum = totals.front();
  for (std::size_t i = 1; i < totals.size(); ++i) sum = tape.add(sum, totals[i]);
  const double denom = static_cast<double>(totals.size());
  BatchLoss out{tape.scale(sum, 1.0 / denom), agg};
  out.mean.cls /= denom;
  out.mean.l1 /= denom;
  out.mean.giou /= denom;
  out.mean.vec /= denom;
  out.mean.total /= denom;
  return out;
}

}  // namespace

void DecoderConfig::validate() const {
  require(queries >= 1 && width >= 2 && layers >= 1 && encoder_layers >= 0 && heads >= 1 && classes >= 1,
          "DecoderConfig: counts must be positive");
  require(width % heads == 0, "DecoderConfig: width must be divisible by heads");
  require(width % 2 == 0, "DecoderConfig: width must be even");
  require(image_side >= 1 && patch_side >= 1 && image_side % patch_side == 0,
          "DecoderConfig: image_side must be a multiple of patch_side");
  require(image_side / patch_side >= 5, "DecoderConfig: token grid too small for the 3x3 stem");
  require(vector_dim >= 1 && stem_hidden >= 1 && ffn_hidden >= 1 && box_hidden >= 1 && mask_hidden >= 1,
          "DecoderConfig: hidden sizes must be positive");
}

void TrainConfig::validate() const {
  require(lr >= 0.0, "TrainConfig: lr must be >= 0");
  require(steps >= 1, "TrainConfig: steps must be >= 1");
  require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "TrainConfig: bad Adam betas");
  require(weight_decay >= 0.0, "TrainConfig: weight_decay must be >= 0");
  require(weights.cls >= 0 && weights.l1 >= 0 && weights.giou >= 0 && weights.vec >= 0,
          "TrainConfig: loss weights must be >= 0");
  require(lr_decay_factor > 0.0 && lr_decay_fraction > 0.0 && lr_decay_fraction <= 1.0,
          "TrainConfig: bad lr decay settings");
}

TrainConfig detection_only_mode(TrainConfig cfg) {
  cfg.detection_only = true;
  return cfg;
}

ModelParams ModelParams::init(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelParams params;
  for (const TensorSpec& spec : tensor_specs(cfg)) {
    Eigen::MatrixXd m(spec.rows, spec.cols);
    switch (spec.init) {
      case TensorSpec::Init::kZero:
        m.setZero();
        break;
      case TensorSpec::Init::kNormal:
        for (int r = 0; r < spec.rows; ++r)
          for (int c = 0; c < spec.cols; ++c) m(r, c) = normal(rng);
        break;
      case TensorSpec::Init::kUniformFanIn: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.rows));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        for (int r = 0; r < spec.rows; ++r)
          for (int c = 0; c < spec.cols; ++c) m(r, c) = uniform(rng);
        break;
      }
    }
    params.tensors.emplace(spec.name, std::move(m));
  }
  return params;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors) n += static_cast<std::size_t>(m.size());
  return n;
}

Eigen::MatrixXd positional_encoding(int grid, int width) {
  require(width % 2 == 0, "positional_encoding: width must be even");
  const int half = width / 2;
  Eigen::MatrixXd pe(grid * grid, width);
  // Positions normalized to one 2*pi cycle so the base-frequency pair carries
  // an O(1) coordinate signal; higher pairs shrink by the usual temperature.
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const int row = gy * grid + gx;
      const double ay = (gy + 0.5) / grid * 2.0 * std::numbers::pi;
      const double ax = (gx + 0.5) / grid * 2.0 * std::numbers::pi;
      for (int i = 0; i < half; ++i) {
        const double denom = std::pow(10000.0, 2.0 * (i / 2) / half);
        pe(row, i) = (i % 2 == 0) ? std::sin(ay / denom) : std::cos(ay / denom);
        pe(row, half + i) = (i % 2 == 0) ? std::sin(ax / denom) : std::cos(ax / denom);
      }
    }
  }
  return pe;
}

Eigen::MatrixXd patch_tokens(const Eigen::MatrixXd& image, int patch_side) {
  require(image.rows() == image.cols(), "patch_tokens: image must be square");
  require(image.rows() % patch_side == 0, "patch_tokens: image side not a multiple of patch side");
  const int grid = static_cast<int>(image.rows()) / patch_side;
  Eigen::MatrixXd tokens(grid * grid, patch_side * patch_side);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const int row = gy * grid + gx;
      for (int py = 0; py < patch_side; ++py) {
        for (int px = 0; px < patch_side; ++px) {
          tokens(row, py * patch_side + px) = image(gy * patch_side + py, gx * patch_side + px);
        }
      }
    }
  }
  return tokens;
}

ParamVars lift_params(Tape& tape, const ModelParams& params) {
  ParamVars vars;
  for (const auto& [name, tensor] : params.tensors) vars.emplace(name, tape.leaf(tensor));
  return vars;
}

Var encode_image(Tape& tape, const ParamVars& vars, const Eigen::MatrixXd& image,
                 const DecoderConfig& cfg) {
  require(image.rows() == cfg.image_side && image.cols() == cfg.image_side,
          "encode_image: image does not match config side");
  const int grid = cfg.image_side / cfg.patch_side;
  const Var tokens = tape.constant(patch_tokens(image, cfg.patch_side));
  Var features =
      tape.relu(tape.add_row(tape.matmul(tokens, vars.at("stem.w1")), vars.at("stem.b1")));

  // Two 3x3 valid convolutions over the token grid, written as im2col
  // gathers; each stage shaves a 1-token border.
  int g = grid;
  for (int stage = 2; stage <= 3; ++stage) {
    std::vector<Var> columns;
    columns.reserve(9);
    const int out_grid = g - 2;
    for (int dy = 0; dy < 3; ++dy) {
      for (int dx = 0; dx < 3; ++dx) {
        std::vector<int> idx;
        idx.reserve(static_cast<std::size_t>(out_grid) * out_grid);
        for (int oy = 0; oy < out_grid; ++oy) {
          for (int ox = 0; ox < out_grid; ++ox) {
            idx.push_back((oy + dy) * g + (ox + dx));
          }
        }
        columns.push_back(tape.gather_rows(features, std::move(idx)));
      }
    }
    const std::string tag = std::to_string(stage);
    features = tape.relu(tape.add_row(
        tape.matmul(tape.concat_cols(columns), vars.at("stem.w" + tag)), vars.at("stem.b" + tag)));
    g = out_grid;
  }

  const Var pe = tape.constant(positional_encoding(g, cfg.width));
  return tape.add(features, pe);
}

Var encoder_forward(Tape& tape, const ParamVars& vars, Var tokens, const DecoderConfig& cfg) {
  Var x = tokens;
  for (int layer = 0; layer < cfg.encoder_layers; ++layer) {
    const std::string p = "enc" + std::to_string(layer) + ".";
    const Var normed = tape.layernorm_rows(x);
    x = tape.add(x, attention(tape, vars, p + "self.", normed, normed, cfg.heads));
    const Var pre_ffn = tape.layernorm_rows(x);
    Var ffn = tape.relu(tape.add_row(tape.matmul(pre_ffn, vars.at(p + "ffn.w1")), vars.at(p + "ffn.b1")));
    ffn = tape.add_row(tape.matmul(ffn, vars.at(p + "ffn.w2")), vars.at(p + "ffn.b2"));
    x = tape.add(x, ffn);
  }
  return x;
}

std::vector<Var> decoder_forward(Tape& tape, const ParamVars& vars, Var queries, Var memory,
                                 const DecoderConfig& cfg) {
  std::vector<Var> states;
  states.reserve(static_cast<std::size_t>(cfg.layers));
  Var q = queries;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    // Pre-norm residual blocks: with all weights zero each layer is exactly
    // the identity on the query stream. The initial embeddings double as
    // query positional codes in every attention call.
    const std::string p = "dec" + std::to_string(layer) + ".";
    Var normed = tape.layernorm_rows(q);
    q = tape.add(q, attention(tape, vars, p + "self.", normed, normed, cfg.heads, queries, true));
    q = tape.add(q, attention(tape, vars, p + "cross.", tape.layernorm_rows(q), memory, cfg.heads, queries));
    const Var pre_ffn = tape.layernorm_rows(q);
    Var ffn = tape.relu(tape.add_row(tape.matmul(pre_ffn, vars.at(p + "ffn.w1")), vars.at(p + "ffn.b1")));
    ffn = tape.add_row(tape.matmul(ffn, vars.at(p + "ffn.w2")), vars.at(p + "ffn.b2"));
    q = tape.add(q, ffn);
    states.push_back(q);
  }
  return states;
}

LayerOutput heads_forward(Tape& tape, const ParamVars& vars, Var query_state,
                          const DecoderConfig& cfg, bool with_mask, Var box_anchor) {
  (void)cfg;
  LayerOutput out;
  out.logits = tape.add_row(tape.matmul(query_state, vars.at("head.cls.w")), vars.at("head.cls.b"));
  const Var delta = mlp3(tape, vars, "head.box.", query_state);
  out.box_logits = box_anchor.valid() ? tape.add(delta, box_anchor) : delta;
  out.boxes = tape.sigmoid(out.box_logits);
  if (with_mask) out.vectors = mlp3(tape, vars, "head.mask.", query_state);
  return out;
}

std::vector<LayerOutput> model_forward(Tape& tape, const ParamVars& vars,
                                       const Eigen::MatrixXd& image, const DecoderConfig& cfg,
                                       bool with_mask) {
  const Var memory = encoder_forward(tape, vars, encode_image(tape, vars, image, cfg), cfg);
  const auto states = decoder_forward(tape, vars, vars.at("query_embed"), memory, cfg);
  std::vector<LayerOutput> out;
  out.reserve(states.size());
  for (Var q : states) out.push_back(heads_forward(tape, vars, q, cfg, with_mask));
  return out;
}

PredictionSet read_predictions(const Tape& tape, const LayerOutput& layer) {
  PredictionSet pred;
  pred.logits = tape.value(layer.logits);
  pred.boxes = tape.value(layer.boxes);
  pred.vectors = layer.vectors.valid() ? tape.value(layer.vectors)
                                       : Eigen::MatrixXd(pred.logits.rows(), 0);
  return pred;
}

TapeLoss tape_instance_loss(Tape& tape, const LayerOutput& layer,
                            const std::vector<GroundTruthInstance>& gts, const TrainConfig& cfg,
                            bool vector_term, CodecKind vector_codec) {
  const PredictionSet detached = read_predictions(tape, layer);
  if (!detached.logits.allFinite() || !detached.boxes.allFinite() || !detached.vectors.allFinite()) {
    throw numerical_error("non-finite model outputs before matching (diverged parameters?)");
  }
  const Assignment assignment = hungarian(pairwise_cost(detached, gts, cfg.weights, cfg.focal));

  const int num_queries = detached.num_queries();
  const int num_classes = detached.num_classes();
  const int num_gt = static_cast<int>(gts.size());
  const double norm = std::max(1, num_gt);

  Mat targets = Mat::Zero(num_queries, num_classes);
  std::vector<int> matched_preds;
  matched_preds.reserve(static_cast<std::size_t>(num_gt));
  for (const auto& [j, i] : assignment.pairs) {
    targets(i, gts[static_cast<std::size_t>(j)].category) = 1.0;
    matched_preds.push_back(i);
  }

  const Var cls = tape.scale(tape_focal_sum(tape, layer.logits, targets, cfg.focal), 1.0 / norm);
  Var l1 = tape.scalar(0.0);
  Var giou = tape.scalar(0.0);
  Var vec = tape.scalar(0.0);
  if (num_gt > 0) {
    Mat gt_boxes(num_gt, 4);
    Mat gt_xyxy(num_gt, 4);
    for (int j = 0; j < num_gt; ++j) {
      const BoxCxCyWh& b = gts[static_cast<std::size_t>(j)].box;
      gt_boxes.row(j) << b.cx, b.cy, b.w, b.h;
      const BoxXYXY x = to_xyxy(b, 1.0, 1.0);
      gt_xyxy.row(j) << x.x1, x.y1, x.x2, x.y2;
    }
    const Var pred_boxes = tape.gather_rows(layer.boxes, matched_preds);
    l1 = tape.scale(tape.sum(tape.abs(tape.sub(pred_boxes, tape.constant(gt_boxes)))), 1.0 / norm);
    giou = tape.scale(tape_giou_loss_sum(tape, pred_boxes, gt_xyxy), 1.0 / norm);

    if (vector_term && layer.vectors.valid()) {
      const int dim = static_cast<int>(tape.value(layer.vectors).cols());
      Mat gt_vectors(num_gt, dim);
      for (int j = 0; j < num_gt; ++j) {
        const auto& coeffs = gts[static_cast<std::size_t>(j)].mask_vector.coeffs;
        require(static_cast<int>(coeffs.size()) == dim, "tape_instance_loss: vector dimension mismatch");
        for (int k = 0; k < dim; ++k) gt_vectors(j, k) = coeffs[static_cast<std::size_t>(k)];
      }
      const Var pred_vectors = tape.gather_rows(layer.vectors, matched_preds);
      const Var raw = vector_codec == CodecKind::kFlatten
                          ? tape_flatten_vec_sum(tape, pred_vectors, gt_vectors)
                          : tape.sum(tape.abs(tape.sub(pred_vectors, tape.constant(gt_vectors))));
      vec = tape.scale(raw, 1.0 / norm);
    }
  }

  TapeLoss out;
  out.total = tape.add(tape.add(tape.scale(cls, cfg.weights.cls), tape.scale(l1, cfg.weights.l1)),
                       tape.add(tape.scale(giou, cfg.weights.giou), tape.scale(vec, cfg.weights.vec)));
  out.breakdown.cls = tape.value(cls)(0, 0);
  out.breakdown.l1 = tape.value(l1)(0, 0);
  out.breakdown.giou = tape.value(giou)(0, 0);
  out.breakdown.vec = tape.value(vec)(0, 0);
  out.breakdown.total = tape.value(out.total)(0, 0);
  return out;
}

Trainer::Trainer(DecoderConfig model_cfg, TrainConfig train_cfg, CodecKind vector_codec)
    : model_cfg_(model_cfg), train_cfg_(train_cfg), vector_codec_(vector_codec) {
  model_cfg_.validate();
  train_cfg_.validate();
  params_ = ModelParams::init(model_cfg_, train_cfg_.seed);
  for (const auto& [name, tensor] : params_.tensors) {
    adam_m_.emplace(name, Eigen::MatrixXd::Zero(tensor.rows(), tensor.cols()));
    adam_v_.emplace(name, Eigen::MatrixXd::Zero(tensor.rows(), tensor.cols()));
  }
}

double Trainer::current_lr() const {
  const int decay_after = static_cast<int>(std::lround(train_cfg_.lr_decay_fraction * train_cfg_.steps));
  return step_count_ > decay_after ? train_cfg_.lr * train_cfg_.lr_decay_factor : train_cfg_.lr;
}

LossBreakdown Trainer::step(std::span<const TrainSample> batch) {
  require(!batch.empty(), "Trainer::step: empty batch");
  Tape tape;
  const ParamVars vars = lift_params(tape, params_);
  const BatchLoss loss = build_batch_loss(tape, vars, model_cfg_, train_cfg_, vector_codec_, batch);
  if (!std::isfinite(loss.mean.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step_count_ + 1 << ": cls=" << loss.mean.cls
        << " l1=" << loss.mean.l1 << " giou=" << loss.mean.giou << " vec=" << loss.mean.vec;
    throw numerical_error(msg.str());
  }
  tape.backward(loss.total);

  ++step_count_;
  const double lr = current_lr();
  const double bias1 = 1.0 - std::pow(train_cfg_.beta1, step_count_);
  const double bias2 = 1.0 - std::pow(train_cfg_.beta2, step_count_);
  constexpr double kEps = 1e-8;
  for (auto& [name, tensor] : params_.tensors) {
    const Eigen::MatrixXd& g = tape.grad(vars.at(name));
    Eigen::MatrixXd& m = adam_m_.at(name);
    Eigen::MatrixXd& v = adam_v_.at(name);
    m = train_cfg_.beta1 * m + (1.0 - train_cfg_.beta1) * g;
    v = train_cfg_.beta2 * v + (1.0 - train_cfg_.beta2) * g.cwiseProduct(g);
    const Eigen::MatrixXd m_hat = m / bias1;
    const Eigen::MatrixXd v_hat = v / bias2;
    tensor -= lr * (m_hat.cwiseQuotient(v_hat.cwiseSqrt().array().matrix() +
                                        Eigen::MatrixXd::Constant(v.rows(), v.cols(), kEps)) +
                    train_cfg_.weight_decay * tensor);
  }
  return loss.mean;
}

double batch_loss_value(const ModelParams& params, const DecoderConfig& model_cfg,
                        const TrainConfig& train_cfg, CodecKind vector_codec,
                        std::span<const TrainSample> batch) {
  Tape tape;
  const ParamVars vars = lift_params(tape, params);
  return build_batch_loss(tape, vars, model_cfg, train_cfg, vector_codec, batch).mean.total;
}

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Max relative error of analytic vs central-difference gradients of a scalar
// function over every entry of every input.
double check_primitive(const std::function<Var(Tape&, std::vector<Var>&)>& build,
                       const std::vector<Mat>& inputs, double h) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Mat& m : inputs) vars.push_back(tape.leaf(m));
  Var out = build(tape, vars);
  tape.backward(out);

  const auto eval = [&build](const std::vector<Mat>& points) {
    Tape t;
    std::vector<Var> vs;
    vs.reserve(points.size());
    for (const Mat& m : points) vs.push_back(t.leaf(m));
    Var o = build(t, vs);
    return t.value(o)(0, 0);
  };

  double max_rel = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index r = 0; r < inputs[k].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[k].cols(); ++c) {
        std::vector<Mat> plus = inputs, minus = inputs;
        plus[k](r, c) += h;
        minus[k](r, c) -= h;
        const double numeric = (eval(plus) - eval(minus)) / (2.0 * h);
        const double analytic = tape.grad(vars[k])(r, c);
        max_rel = std::max(max_rel, relative_error(analytic, numeric));
      }
    }
  }
  return max_rel;
}

Mat random_mat(std::mt19937_64& rng, int rows, int cols, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

// Keep entries away from the relu/abs/min/max kinks.
Mat random_mat_no_kink(std::mt19937_64& rng, int rows, int cols) {
  Mat m = random_mat(rng, rows, cols, 0.1, 1.0);
  std::uniform_int_distribution<int> sign(0, 1);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (sign(rng)) m(r, c) = -m(r, c);
  return m;
}

std::map<std::string, double> check_all_primitives(double h) {
  std::mt19937_64 rng(20260808);
  std::map<std::string, double> report;
  const Mat weight = random_mat(rng, 3, 4, -1.0, 1.0);
  const auto weighted_sum = [weight](Tape& t, Var x) {
    return t.sum(t.mul(x, t.constant(weight.topLeftCorner(t.rows(x), t.cols(x)))));
  };

  const Mat a = random_mat_no_kink(rng, 3, 4);
  Mat b = random_mat_no_kink(rng, 3, 4);
  // separate the pair so cwise min/max never tie under the FD step
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c)
      if (std::abs(a(r, c) - b(r, c)) < 0.05) b(r, c) += 0.1;

  report["add"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.add(v[0], v[1])); }, {a, b}, h);
  report["sub"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.sub(v[0], v[1])); }, {a, b}, h);
  report["mul"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.mul(v[0], v[1])); }, {a, b}, h);
  report["div"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) {
        return weighted_sum(t, t.div(v[0], t.add_scalar(t.abs(v[1]), 0.5)));
      },
      {a, b}, h);
  report["matmul"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.matmul(v[0], v[1])); },
      {random_mat(rng, 3, 5, -1, 1), random_mat(rng, 5, 4, -1, 1)}, h);
  report["transpose"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return t.sum(t.mul(t.transpose(v[0]), v[1])); },
      {random_mat(rng, 3, 4, -1, 1), random_mat(rng, 4, 3, -1, 1)}, h);
  report["add_row"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.add_row(v[0], v[1])); },
      {a, random_mat(rng, 1, 4, -1, 1)}, h);
  report["sigmoid"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.sigmoid(v[0])); }, {a}, h);
  report["softplus"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.softplus(v[0])); }, {a}, h);
  report["relu"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.relu(v[0])); }, {a}, h);
  report["abs"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.abs(v[0])); }, {a}, h);
  report["square"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.square(v[0])); }, {a}, h);
  report["pow"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.pow_const(t.abs(v[0]), 1.7)); },
      {a}, h);
  report["log"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.log(t.add_scalar(t.abs(v[0]), 0.5))); },
      {a}, h);
  report["exp"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.exp(v[0])); }, {a}, h);
  report["softmax"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.softmax_rows(v[0])); },
      {random_mat(rng, 3, 4, -2, 2)}, h);
  report["layernorm"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.layernorm_rows(v[0])); },
      {random_mat(rng, 3, 4, -2, 2)}, h);
  report["slice_concat"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) {
        std::vector<Var> parts{t.slice_cols(v[0], 2, 2), t.slice_cols(v[0], 0, 2)};
        return weighted_sum(t, t.concat_cols(parts));
      },
      {a}, h);
  report["gather_rows"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) {
        return weighted_sum(t, t.gather_rows(v[0], {2, 0, 2}));
      },
      {a}, h);
  report["cwise_min"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.cwise_min(v[0], v[1])); }, {a, b}, h);
  report["cwise_max"] = check_primitive(
      [&](Tape& t, std::vector<Var>& v) { return weighted_sum(t, t.cwise_max(v[0], v[1])); }, {a, b}, h);

  // Composites exercised exactly as the model uses them.
  {
    Mat targets = Mat::Zero(2, 3);
    targets(0, 1) = 1.0;
    targets(1, 0) = 1.0;
    const FocalParams fp;
    report["focal"] = check_primitive(
        [&](Tape& t, std::vector<Var>& v) { return tape_focal_sum(t, v[0], targets, fp); },
        {random_mat(rng, 2, 3, -2, 2)}, h);
  }
  {
    // Fixed boxes picked so every corner comparison is far from a min/max tie
    // AND every coordinate has a nonzero gradient; coordinates whose exact
    // gradient is zero only measure finite-difference cancellation noise.
    Mat gt_xyxy(2, 4);
    gt_xyxy << 0.1, 0.2, 0.5, 0.7, 0.4, 0.1, 0.9, 0.6;
    Mat pred_cxcywh(2, 4);
    pred_cxcywh << 0.45, 0.35, 0.36, 0.4, 0.6, 0.28, 0.5, 0.4;
    report["giou"] = check_primitive(
        [&](Tape& t, std::vector<Var>& v) { return tape_giou_loss_sum(t, v[0], gt_xyxy); },
        {pred_cxcywh}, h);
  }
  {
    Mat gt_vec = random_mat(rng, 2, 9, 0, 1).unaryExpr([](double x) { return x > 0.5 ? 1.0 : 0.0; });
    report["dice_l2"] = check_primitive(
        [&](Tape& t, std::vector<Var>& v) { return tape_flatten_vec_sum(t, v[0], gt_vec); },
        {random_mat(rng, 2, 9, 0.1, 0.9)}, h);
  }
  {
    const Mat gt = random_mat(rng, 2, 6, -1, 1);
    report["l1"] = check_primitive(
        [&](Tape& t, std::vector<Var>& v) { return t.sum(t.abs(t.sub(v[0], t.constant(gt)))); },
        {random_mat(rng, 2, 6, -1, 1)}, h);
  }
  {
    // single decoder-style attention block, 2 heads
    report["attention"] = check_primitive(
        [&](Tape& t, std::vector<Var>& v) {
          ParamVars vars{{"a.wq", v[1]}, {"a.wk", v[2]}, {"a.wv", v[3]}, {"a.wo", v[4]}};
          return weighted_sum(t, attention(t, vars, "a.", v[0], v[0], 2));
        },
        {random_mat(rng, 3, 4, -1, 1), random_mat(rng, 4, 4, -1, 1), random_mat(rng, 4, 4, -1, 1),
         random_mat(rng, 4, 4, -1, 1), random_mat(rng, 4, 4, -1, 1)},
        h);
  }
  return report;
}

}  // namespace

GradCheckReport grad_check(const ModelParams& params, const DecoderConfig& model_cfg,
                           const TrainConfig& train_cfg, CodecKind vector_codec,
                           std::span<const TrainSample> batch, int sample_count, double step,
                           double pipeline_tol, double primitive_tol, std::uint64_t seed) {
  GradCheckReport report;
  report.primitive_max_err = check_all_primitives(step);
  report.primitives_ok = true;
  for (const auto& [name, err] : report.primitive_max_err) {
    if (!(err < primitive_tol)) report.primitives_ok = false;
  }

  // Analytic gradients for every parameter in one reverse pass.
  Tape tape;
  const ParamVars vars = lift_params(tape, params);
  const BatchLoss loss = build_batch_loss(tape, vars, model_cfg, train_cfg, vector_codec, batch);
  tape.backward(loss.total);

  // Uniform sampling over all scalar parameters.
  std::vector<std::pair<std::string, std::size_t>> offsets;  // name -> cumulative start
  std::size_t total = 0;
  for (const auto& [name, tensor] : params.tensors) {
    offsets.emplace_back(name, total);
    total += static_cast<std::size_t>(tensor.size());
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);

  int passed = 0;
  for (int s = 0; s < sample_count; ++s) {
    const std::size_t flat = pick(rng);
    std::size_t idx = offsets.size() - 1;
    while (offsets[idx].second > flat) --idx;
    const std::string& name = offsets[idx].first;
    const Eigen::MatrixXd& tensor = params.tensors.at(name);
    const std::size_t local = flat - offsets[idx].second;
    const int r = static_cast<int>(local / static_cast<std::size_t>(tensor.cols()));
    const int c = static_cast<int>(local % static_cast<std::size_t>(tensor.cols()));

    ModelParams probe = params;
    probe.tensors.at(name)(r, c) += step;
    const double up = batch_loss_value(probe, model_cfg, train_cfg, vector_codec, batch);
    probe.tensors.at(name)(r, c) -= 2.0 * step;
    const double down = batch_loss_value(probe, model_cfg, train_cfg, vector_codec, batch);

    GradCheckSample entry;
    entry.tensor = name;
    entry.row = r;
    entry.col = c;
    entry.analytic = tape.grad(vars.at(name))(r, c);
    entry.numeric = (up - down) / (2.0 * step);
    entry.rel_err = relative_error(entry.analytic, entry.numeric);
    if (entry.rel_err < pipeline_tol) ++passed;
    report.samples.push_back(std::move(entry));
  }
  report.pass_fraction = sample_count > 0 ? static_cast<double>(passed) / sample_count : 1.0;
  report.pipeline_ok = report.pass_fraction >= 0.99;
  return report;
}

std::vector<Detection> predict(const ModelParams& params, const DecoderConfig& cfg,
                               const Eigen::MatrixXd& image, const MaskCodec* codec,
                               double score_thresh) {
  if (codec) {
    require(codec->spec().vector_dim == cfg.vector_dim, "predict: codec n_k does not match model head");
  }
  Tape tape;
  const ParamVars vars = lift_params(tape, params);
  const auto layers = model_forward(tape, vars, image, cfg, codec != nullptr);
  const PredictionSet out = read_predictions(tape, layers.back());

  const double img_w = static_cast<double>(image.cols());
  const double img_h = static_cast<double>(image.rows());
  std::vector<Detection> detections;
  for (int i = 0; i < out.num_queries(); ++i) {
    Detection det;
    det.score = 0.0;
    det.category = 0;
    for (int s = 0; s < out.num_classes(); ++s) {
      const double p = sigmoid(out.logits(i, s));
      if (p > det.score) {
        det.score = p;
        det.category = s;
      }
    }
    if (det.score < score_thresh) continue;
    const BoxCxCyWh nb{out.boxes(i, 0), out.boxes(i, 1), out.boxes(i, 2), out.boxes(i, 3)};
    det.box = to_xyxy(nb, img_w, img_h);
    det.box.x1 = std::clamp(det.box.x1, 0.0, img_w);
    det.box.x2 = std::clamp(det.box.x2, 0.0, img_w);
    det.box.y1 = std::clamp(det.box.y1, 0.0, img_h);
    det.box.y2 = std::clamp(det.box.y2, 0.0, img_h);
    if (codec) {
      const auto row = out.vectors.row(i);
      const std::vector<double> coeffs(row.data(), row.data() + row.size());
      const SoftMask decoded = codec->decode_coeffs(coeffs);
      const BinaryMask sharp = binarize(decoded, 0.5);
      if (det.box.width() > 0 && det.box.height() > 0) {
        const SoftMask pasted =
            paste_into_box(to_soft(sharp), det.box, static_cast<int>(img_w), static_cast<int>(img_h));
        det.mask = binarize(pasted, 0.5);
      } else {
        det.mask = BinaryMask(static_cast<int>(img_w), static_cast<int>(img_h));
      }
    }
    detections.push_back(std::move(det));
  }
  return detections;
}

namespace {

constexpr char kCheckpointMagic[4] = {'U', 'Q', 'R', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

void append_decoder_config(std::string& out, const DecoderConfig& cfg) {
  for (int v : {cfg.queries, cfg.width, cfg.layers, cfg.encoder_layers, cfg.heads, cfg.classes,
                cfg.image_side, cfg.patch_side, cfg.stem_hidden, cfg.vector_dim, cfg.ffn_hidden,
                cfg.box_hidden, cfg.mask_hidden}) {
    binio::append_u32(out, static_cast<std::uint32_t>(v));
  }
}

DecoderConfig read_decoder_config(std::istream& in) {
  DecoderConfig cfg;
  for (int* v : {&cfg.queries, &cfg.width, &cfg.layers, &cfg.encoder_layers, &cfg.heads,
                 &cfg.classes, &cfg.image_side, &cfg.patch_side, &cfg.stem_hidden, &cfg.vector_dim,
                 &cfg.ffn_hidden, &cfg.box_hidden, &cfg.mask_hidden}) {
    *v = static_cast<int>(binio::read_u32(in));
  }
  return cfg;
}

void append_codec_spec(std::string& out, const CodecSpec& spec) {
  out.push_back(static_cast<char>(static_cast<int>(spec.kind)));
  out.push_back(static_cast<char>(static_cast<int>(spec.sampling)));
  out.push_back(spec.pca_center ? 1 : 0);
  binio::append_u32(out, static_cast<std::uint32_t>(spec.mask_side));
  binio::append_u32(out, static_cast<std::uint32_t>(spec.vector_dim));
  binio::append_f64(out, spec.beta);
  binio::append_u32(out, static_cast<std::uint32_t>(spec.dict_iters));
  binio::append_u32(out, static_cast<std::uint32_t>(spec.ista_iters));
  binio::append_f64(out, spec.ista_tol);
}

CodecSpec read_codec_spec(std::istream& in) {
  CodecSpec spec;
  spec.kind = static_cast<CodecKind>(in.get());
  spec.sampling = static_cast<SamplingOrder>(in.get());
  spec.pca_center = in.get() != 0;
  spec.mask_side = static_cast<int>(binio::read_u32(in));
  spec.vector_dim = static_cast<int>(binio::read_u32(in));
  spec.beta = binio::read_f64(in);
  spec.dict_iters = static_cast<int>(binio::read_u32(in));
  spec.ista_iters = static_cast<int>(binio::read_u32(in));
  spec.ista_tol = binio::read_f64(in);
  return spec;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DecoderConfig& model_cfg,
                     const CodecSpec& codec_spec, const ModelParams& params) {
  std::string payload;
  payload.append(kCheckpointMagic, 4);
  binio::append_u32(payload, kCheckpointVersion);
  append_decoder_config(payload, model_cfg);
  append_codec_spec(payload, codec_spec);
  binio::append_u32(payload, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, tensor] : params.tensors) {
    binio::append_u32(payload, static_cast<std::uint32_t>(name.size()));
    payload.append(name);
    binio::append_u32(payload, static_cast<std::uint32_t>(tensor.rows()));
    binio::append_u32(payload, static_cast<std::uint32_t>(tensor.cols()));
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) binio::append_f64(payload, tensor(r, c));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path.string());
  }
  const std::uint32_t version = binio::read_u32(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version: " + path.string());
  }
  Checkpoint ckpt;
  ckpt.model = read_decoder_config(in);
  ckpt.codec = read_codec_spec(in);
  const std::uint32_t count = binio::read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = binio::read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const int rows = static_cast<int>(binio::read_u32(in));
    const int cols = static_cast<int>(binio::read_u32(in));
    Eigen::MatrixXd tensor(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) tensor(r, c) = binio::read_f64(in);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    ckpt.params.tensors.emplace(std::move(name), std::move(tensor));
  }
  return ckpt;
}

}  // namespace uqr
