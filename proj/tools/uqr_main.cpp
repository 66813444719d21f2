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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "uqr/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string codec;
  int side = 0;      // --n
  int dim = 0;       // --nk
  double lambda_vec = -1.0;
  bool det_only = false;
  std::string crop_mode;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file; flags override its fields");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "seed")->each([&flags](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--codec", flags.codec, "codec kind")->check(CLI::IsMember({"dct", "pca", "sparse", "flatten"}));
  cmd->add_option("--n", flags.side, "mask side N");
  cmd->add_option("--nk", flags.dim, "mask vector dimension n_k");
}

int run_sweep_cmd(const CommonFlags& flags, int threads) {
  uqr::SweepConfig cfg;
  if (!flags.config_path.empty()) cfg = uqr::sweep_config_from_json(slurp(flags.config_path));
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed_set) cfg.seed = flags.seed;
  if (!flags.codec.empty()) cfg.codecs = {uqr::codec_kind_from_string(flags.codec)};
  if (flags.side > 0) cfg.sides = {flags.side};
  if (flags.dim > 0) cfg.dims = {flags.dim};
  if (!flags.crop_mode.empty()) cfg.crop_mode = uqr::crop_mode_from_string(flags.crop_mode);
  if (threads > 0) cfg.threads = threads;

  const uqr::SweepReport report = uqr::run_codec_sweep(cfg);
  std::printf("codec,N,n_k,mean_iou,median_iou\n");
  for (const uqr::SweepCell& cell : report.cells) {
    std::printf("%s,%d,%d,%.6f,%.6f\n", uqr::to_string(cell.codec).c_str(), cell.side, cell.dim,
                cell.mean_iou, cell.median_iou);
  }
  return kExitOk;
}

int run_train_cmd(const CommonFlags& flags, int steps) {
  uqr::TrainRunConfig cfg;
  if (!flags.config_path.empty()) cfg = uqr::train_config_from_json(slurp(flags.config_path));
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed_set) {
    cfg.train.seed = flags.seed;
    cfg.data_seed = flags.seed;
  }
  if (!flags.codec.empty()) cfg.codec.kind = uqr::codec_kind_from_string(flags.codec);
  if (flags.side > 0) cfg.codec.mask_side = flags.side;
  if (flags.dim > 0) {
    cfg.codec.vector_dim = flags.dim;
    cfg.model.vector_dim = flags.dim;
  }
  if (flags.lambda_vec >= 0.0) cfg.train.weights.vec = flags.lambda_vec;
  if (flags.det_only) cfg.train = uqr::detection_only_mode(cfg.train);
  if (!flags.crop_mode.empty()) cfg.crop_mode = uqr::crop_mode_from_string(flags.crop_mode);
  if (steps > 0) cfg.train.steps = steps;

  const uqr::TrainRunResult result = uqr::run_train(cfg);
  std::printf("steps=%d first100=%.4f last100=%.4f\n", cfg.train.steps, result.first100_mean_total,
              result.last100_mean_total);
  std::printf("val box_ap50=%.4f box_ap=%.4f mask_ap50=%.4f mask_ap=%.4f matched_mask_iou=%.4f\n",
              result.val_ap.box_ap50, result.val_ap.box_ap, result.val_ap.mask_ap50,
              result.val_ap.mask_ap, result.mean_matched_mask_iou);
  if (!result.checkpoint_path.empty()) {
    std::printf("checkpoint=%s\n", result.checkpoint_path.string().c_str());
  }
  return kExitOk;
}

int run_eval_cmd(const CommonFlags& flags, const std::string& checkpoint, const std::string& dataset,
                 double score_thresh) {
  uqr::EvalRunConfig cfg;
  if (!flags.config_path.empty()) cfg = uqr::eval_config_from_json(slurp(flags.config_path));
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed_set) cfg.data_seed = flags.seed;
  if (!dataset.empty()) cfg.dataset_dir = dataset;
  if (score_thresh >= 0.0) cfg.score_thresh = score_thresh;

  const uqr::EvalRunResult result = uqr::run_eval(cfg);
  std::printf("images=%d detections=%d\n", result.images, result.detections);
  std::printf("box_ap50=%.4f box_ap=%.4f mask_ap50=%.4f mask_ap=%.4f\n", result.ap.box_ap50,
              result.ap.box_ap, result.ap.mask_ap50, result.ap.mask_ap);
  return kExitOk;
}

int run_gradcheck_cmd(const CommonFlags& flags) {
  uqr::GradcheckRunConfig cfg;
  if (!flags.config_path.empty()) cfg = uqr::gradcheck_config_from_json(slurp(flags.config_path));
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed_set) {
    cfg.train.seed = flags.seed;
    cfg.data_seed = flags.seed;
  }
  const uqr::GradCheckReport report = uqr::run_gradcheck(cfg);
  for (const auto& [name, err] : report.primitive_max_err) {
    std::printf("primitive %-14s max_rel_err=%.3e %s\n", name.c_str(), err,
                err < cfg.primitive_tol ? "ok" : "FAIL");
  }
  std::printf("pipeline pass_fraction=%.4f (%zu samples) %s\n", report.pass_fraction,
              report.samples.size(), report.pipeline_ok ? "ok" : "FAIL");
  if (!report.passed()) {
    std::fprintf(stderr, "gradient check failed\n");
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mask-vector instance segmentation experiments"};
  app.require_subcommand(1);

  CommonFlags sweep_flags, train_flags, eval_flags, grad_flags;
  int sweep_threads = 0;
  int train_steps = 0;
  std::string eval_checkpoint, eval_dataset;
  double eval_score_thresh = -1.0;

  CLI::App* sweep = app.add_subcommand("codec-sweep", "reconstruction quality over a (codec, N, n_k) grid");
  add_common(sweep, sweep_flags);
  sweep->add_option("--crop-mode", sweep_flags.crop_mode, "box|full")->check(CLI::IsMember({"box", "full"}));
  sweep->add_option("--threads", sweep_threads, "worker threads (UQR_THREADS caps)");

  CLI::App* train = app.add_subcommand("train", "train the toy query decoder on synthetic scenes");
  add_common(train, train_flags);
  train->add_option("--lambda-vec", train_flags.lambda_vec, "vector loss weight");
  train->add_flag("--det-only", train_flags.det_only, "detection-only ablation (no mask branch)");
  train->add_option("--crop-mode", train_flags.crop_mode, "box|full")->check(CLI::IsMember({"box", "full"}));
  train->add_option("--steps", train_steps, "optimization steps");

  CLI::App* eval = app.add_subcommand("eval", "AP evaluation of a checkpoint");
  add_common(eval, eval_flags);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file");
  eval->add_option("--dataset", eval_dataset, "saved dataset directory (default: regenerated split)");
  eval->add_option("--score-thresh", eval_score_thresh, "detection score threshold");

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(grad, grad_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (sweep->parsed()) return run_sweep_cmd(sweep_flags, sweep_threads);
    if (train->parsed()) return run_train_cmd(train_flags, train_steps);
    if (eval->parsed()) return run_eval_cmd(eval_flags, eval_checkpoint, eval_dataset, eval_score_thresh);
    if (grad->parsed()) return run_gradcheck_cmd(grad_flags);
  } catch (const uqr::numerical_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}
