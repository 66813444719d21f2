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

#include "uqr/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace uqr {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Runs fn(i) for i in [0, n) across the thread budget; results must be
// written into index-addressed slots so aggregation stays deterministic.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

int sweep_thread_budget(int requested) {
  int budget = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (budget < 1) budget = 1;
  if (const char* env = std::getenv("UQR_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) budget = std::min(budget, cap);
  }
  return budget;
}

void SweepConfig::validate() const {
  require(mask_count >= 1, "SweepConfig: mask_count must be >= 1");
  require(fit_mask_count >= 1, "SweepConfig: fit_mask_count must be >= 1");
  require(!codecs.empty(), "SweepConfig: no codecs selected");
  require(!sides.empty() || !cells.empty(), "SweepConfig: no sides or cells");
  require(cells.empty() ? !dims.empty() : true, "SweepConfig: no dims");
  require(beta >= 0.0 && dict_iters >= 1 && ista_iters >= 1 && ista_tol >= 0.0,
          "SweepConfig: bad sparse-coding settings");
}

const SweepCell* SweepReport::find(CodecKind codec, int side, int dim) const {
  for (const SweepCell& cell : cells) {
    if (cell.codec == codec && cell.side == side && cell.dim == dim) return &cell;
  }
  return nullptr;
}

SweepReport run_codec_sweep(const SweepConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const bool persist = !cfg.out_dir.empty();
  if (persist) {
    fs::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir / "config.json", to_json(cfg));
  }

  // Every scene has at least one instance, so this many scenes suffice for
  // both splits: the first fit_mask_count instances fit PCA/sparse, the next
  // mask_count are what the report measures.
  const int wanted = cfg.fit_mask_count + cfg.mask_count;
  const std::vector<Scene> scenes = gen_synthetic(cfg.seed, wanted, cfg.synthetic);
  std::vector<const SceneInstance*> fit_instances, eval_instances;
  for (const Scene& scene : scenes) {
    for (const SceneInstance& inst : scene.instances) {
      if (static_cast<int>(fit_instances.size()) < cfg.fit_mask_count) {
        fit_instances.push_back(&inst);
      } else if (static_cast<int>(eval_instances.size()) < cfg.mask_count) {
        eval_instances.push_back(&inst);
      }
    }
  }
  require(static_cast<int>(eval_instances.size()) == cfg.mask_count, "run_codec_sweep: not enough masks");

  // (N, n_k) grid, explicit cells taking precedence over the cross product.
  std::vector<std::pair<int, int>> grid = cfg.cells;
  if (grid.empty()) {
    for (int side : cfg.sides) {
      for (int dim : cfg.dims) {
        if (dim <= side * side) grid.emplace_back(side, dim);
      }
    }
  }

  const int threads = sweep_thread_budget(cfg.threads);
  SweepReport report;

  std::vector<int> sides_in_grid;
  for (const auto& [side, dim] : grid) {
    if (std::find(sides_in_grid.begin(), sides_in_grid.end(), side) == sides_in_grid.end()) {
      sides_in_grid.push_back(side);
    }
  }

  for (int side : sides_in_grid) {
    std::vector<SoftMask> fit_masks, masks;
    fit_masks.reserve(fit_instances.size());
    masks.reserve(eval_instances.size());
    for (const SceneInstance* inst : fit_instances) {
      fit_masks.push_back(codec_space_mask(*inst, side, cfg.crop_mode));
    }
    for (const SceneInstance* inst : eval_instances) {
      masks.push_back(codec_space_mask(*inst, side, cfg.crop_mode));
    }

    for (CodecKind kind : cfg.codecs) {
      std::vector<int> dims_here;
      if (kind == CodecKind::kFlatten) {
        dims_here.push_back(side * side);  // lossless by construction
      } else {
        for (const auto& [s, d] : grid) {
          if (s == side) dims_here.push_back(d);
        }
      }
      for (int dim : dims_here) {
        if (static_cast<int>(fit_masks.size()) < dim &&
            (kind == CodecKind::kPca || kind == CodecKind::kSparse)) {
          continue;  // cannot fit more components than samples
        }
        CodecSpec spec;
        spec.kind = kind;
        spec.mask_side = side;
        spec.vector_dim = dim;
        spec.beta = cfg.beta;
        spec.dict_iters = cfg.dict_iters;
        spec.ista_iters = cfg.ista_iters;
        spec.ista_tol = cfg.ista_tol;
        const MaskCodec codec = MaskCodec::fit(spec, fit_masks);
        if (persist && (kind == CodecKind::kPca || kind == CodecKind::kSparse)) {
          char name[64];
          std::snprintf(name, sizeof(name), "basis_%s_n%d_k%d.uqrb", to_string(kind).c_str(), side, dim);
          codec.save(cfg.out_dir / name);
        }

        const int n = static_cast<int>(masks.size());
        std::vector<MaskVector> encoded(static_cast<std::size_t>(n));
        const auto t0 = std::chrono::steady_clock::now();
        parallel_for(n, threads, [&](int i) {
          encoded[static_cast<std::size_t>(i)] = codec.encode(masks[static_cast<std::size_t>(i)]);
        });
        const auto t1 = std::chrono::steady_clock::now();
        std::vector<double> ious(static_cast<std::size_t>(n));
        std::vector<double> soft_errs(static_cast<std::size_t>(n));
        parallel_for(n, threads, [&](int i) {
          const SoftMask recon = codec.decode(encoded[static_cast<std::size_t>(i)]);
          const SoftMask& truth = masks[static_cast<std::size_t>(i)];
          double err = 0.0;
          for (std::size_t p = 0; p < truth.values.size(); ++p) {
            const double d = truth.values[p] - recon.values[p];
            err += d * d;
          }
          soft_errs[static_cast<std::size_t>(i)] = err / static_cast<double>(truth.values.size());
          ious[static_cast<std::size_t>(i)] = mask_iou(binarize(recon, 0.5), binarize(truth, 0.5));
        });
        const auto t2 = std::chrono::steady_clock::now();

        SweepCell cell;
        cell.codec = kind;
        cell.side = side;
        cell.dim = dim;
        cell.masks = n;
        cell.mean_iou = mean_of(ious);
        cell.median_iou = median_of(ious);
        cell.mean_soft_err = mean_of(soft_errs);
        cell.encode_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        cell.decode_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
        report.cells.push_back(cell);
      }
    }
  }

  if (persist) {
    // Wall times go to a sidecar so the result CSV stays bit-reproducible.
    std::ostringstream csv, timings;
    csv << "codec,N,n_k,masks,mean_iou,median_iou,mean_soft_err\n";
    timings << "codec,N,n_k,encode_ms,decode_ms\n";
    for (const SweepCell& c : report.cells) {
      csv << to_string(c.codec) << ',' << c.side << ',' << c.dim << ',' << c.masks << ','
          << fmt(c.mean_iou) << ',' << fmt(c.median_iou) << ',' << fmt(c.mean_soft_err) << '\n';
      timings << to_string(c.codec) << ',' << c.side << ',' << c.dim << ',' << fmt(c.encode_ms)
              << ',' << fmt(c.decode_ms) << '\n';
    }
    write_text_file(cfg.out_dir / "sweep.csv", csv.str());
    write_text_file(cfg.out_dir / "timings.csv", timings.str());
  }
  return report;
}

void TrainRunConfig::validate() const {
  model.validate();
  train.validate();
  codec.validate();
  require(train_scenes >= 1 && val_scenes >= 0, "TrainRunConfig: bad scene counts");
  require(model.vector_dim == codec.vector_dim, "TrainRunConfig: model vector_dim != codec n_k");
  require(score_thresh >= 0.0 && score_thresh <= 1.0, "TrainRunConfig: bad score threshold");
}

std::vector<TrainSample> make_train_samples(std::span<const Scene> scenes, const MaskCodec& codec,
                                            CropMode crop_mode) {
  std::vector<TrainSample> samples;
  samples.reserve(scenes.size());
  for (const Scene& scene : scenes) {
    TrainSample sample;
    sample.image = scene.image;
    const int w = static_cast<int>(scene.image.cols());
    const int h = static_cast<int>(scene.image.rows());
    for (const SceneInstance& inst : scene.instances) {
      sample.targets.push_back(instance_to_target(inst, codec, crop_mode, w, h));
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

double mean_matched_mask_iou(const ModelParams& params, const DecoderConfig& model_cfg,
                             const TrainConfig& train_cfg, const MaskCodec& codec,
                             CropMode crop_mode, std::span<const Scene> scenes) {
  double iou_sum = 0.0;
  int count = 0;
  for (const Scene& scene : scenes) {
    if (scene.instances.empty()) continue;
    const int w = static_cast<int>(scene.image.cols());
    const int h = static_cast<int>(scene.image.rows());
    std::vector<GroundTruthInstance> targets;
    for (const SceneInstance& inst : scene.instances) {
      targets.push_back(instance_to_target(inst, codec, crop_mode, w, h));
    }
    ad::Tape tape;
    const ParamVars vars = lift_params(tape, params);
    const auto layers = model_forward(tape, vars, scene.image, model_cfg, true);
    const PredictionSet pred = read_predictions(tape, layers.back());
    const Assignment assignment =
        hungarian(pairwise_cost(pred, targets, train_cfg.weights, train_cfg.focal));
    for (const auto& [j, i] : assignment.pairs) {
      const auto row = pred.vectors.row(i);
      const std::vector<double> coeffs(row.data(), row.data() + row.size());
      const BinaryMask decoded = binarize(codec.decode_coeffs(coeffs), 0.5);
      const SceneInstance& inst = scene.instances[static_cast<std::size_t>(j)];
      const SoftMask pasted = paste_into_box(to_soft(decoded), inst.box, w, h);
      iou_sum += mask_iou(binarize(pasted, 0.5), inst.mask);
      ++count;
    }
  }
  return count > 0 ? iou_sum / count : 0.0;
}

TrainRunResult run_train(const TrainRunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const bool persist = !cfg.out_dir.empty();
  if (persist) {
    fs::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir / "config.json", to_json(cfg));
  }

  SyntheticConfig synth;
  synth.canvas = cfg.model.image_side;
  const std::vector<Scene> scenes =
      gen_synthetic(cfg.data_seed, cfg.train_scenes + cfg.val_scenes, synth);
  const std::span<const Scene> train_split(scenes.data(), static_cast<std::size_t>(cfg.train_scenes));
  const std::span<const Scene> val_split(scenes.data() + cfg.train_scenes,
                                         static_cast<std::size_t>(cfg.val_scenes));

  const MaskCodec codec = fit_codecs(train_split, std::span(&cfg.codec, 1), cfg.crop_mode)[0];
  const std::vector<TrainSample> samples = make_train_samples(train_split, codec, cfg.crop_mode);

  Trainer trainer(cfg.model, cfg.train, cfg.codec.kind);

  // Epoch order is reshuffled with a dedicated stream so it cannot collide
  // with parameter initialization.
  std::mt19937_64 order_rng(splitmix64(cfg.train.seed ^ 0x8d1f5c6a2b3e4d07ULL));
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;

  std::ostringstream log;
  log << "step,cls,l1,giou,vec,total\n";
  std::vector<double> totals;
  totals.reserve(static_cast<std::size_t>(cfg.train.steps));
  std::vector<TrainSample> batch;
  for (int step = 1; step <= cfg.train.steps; ++step) {
    batch.clear();
    for (int b = 0; b < cfg.train.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(samples[static_cast<std::size_t>(order[cursor++])]);
    }
    const LossBreakdown loss = trainer.step(batch);
    totals.push_back(loss.total);
    append_loss_row(log, step, loss);
  }

  TrainRunResult result;
  const int window = std::min(100, cfg.train.steps);
  result.first100_mean_total =
      std::accumulate(totals.begin(), totals.begin() + window, 0.0) / window;
  result.last100_mean_total =
      std::accumulate(totals.end() - window, totals.end(), 0.0) / window;

  // Validation: AP over predicted boxes/masks plus the gt-box-pasted mask IoU.
  const bool with_masks = !cfg.train.detection_only;
  std::vector<ImageEval> evals;
  for (const Scene& scene : val_split) {
    ImageEval ev;
    ev.gts = scene.instances;
    ev.detections = predict(trainer.params(), cfg.model, scene.image,
                            with_masks ? &codec : nullptr, 0.0);
    evals.push_back(std::move(ev));
  }
  result.val_ap = evaluate_detections(evals, cfg.model.classes, with_masks);
  result.mean_matched_mask_iou =
      with_masks ? mean_matched_mask_iou(trainer.params(), cfg.model, cfg.train, codec,
                                         cfg.crop_mode, val_split)
                 : 0.0;

  if (persist) {
    result.checkpoint_path = cfg.out_dir / "checkpoint.uqrm";
    result.codec_path = cfg.out_dir / "codec.uqrb";
    result.log_path = cfg.out_dir / "train_log.csv";
    save_checkpoint(result.checkpoint_path, cfg.model, cfg.codec, trainer.params());
    codec.save(result.codec_path);
    write_text_file(result.log_path, log.str());

    json metrics;
    metrics["first100_mean_total"] = result.first100_mean_total;
    metrics["last100_mean_total"] = result.last100_mean_total;
    metrics["mean_matched_mask_iou"] = result.mean_matched_mask_iou;
    metrics["box_ap50"] = result.val_ap.box_ap50;
    metrics["box_ap"] = result.val_ap.box_ap;
    metrics["mask_ap50"] = result.val_ap.mask_ap50;
    metrics["mask_ap"] = result.val_ap.mask_ap;
    write_text_file(cfg.out_dir / "metrics.json", metrics.dump(1) + "\n");
  }
  return result;
}

void EvalRunConfig::validate() const {
  require(!checkpoint.empty(), "EvalRunConfig: checkpoint path required");
  require(score_thresh >= 0.0 && score_thresh <= 1.0, "EvalRunConfig: bad score threshold");
  require(val_scenes >= 1 || dataset_dir, "EvalRunConfig: nothing to evaluate");
}

EvalRunResult run_eval(const EvalRunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const bool persist = !cfg.out_dir.empty();
  if (persist) {
    fs::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir / "config.json", to_json(cfg));
  }

  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  const fs::path codec_file =
      cfg.codec_file.empty() ? cfg.checkpoint.parent_path() / "codec.uqrb" : cfg.codec_file;
  const MaskCodec codec = MaskCodec::load(codec_file, ckpt.codec);
  require(ckpt.model.vector_dim == ckpt.codec.vector_dim,
          "run_eval: checkpoint codec does not match the model head");

  std::vector<Scene> storage;
  std::span<const Scene> val;
  if (cfg.dataset_dir) {
    storage = load_dataset(*cfg.dataset_dir);
    val = storage;
  } else {
    SyntheticConfig synth;
    synth.canvas = ckpt.model.image_side;
    storage = gen_synthetic(cfg.data_seed, cfg.train_scenes + cfg.val_scenes, synth);
    val = std::span<const Scene>(storage.data() + cfg.train_scenes,
                                 static_cast<std::size_t>(cfg.val_scenes));
  }

  EvalRunResult result;
  std::vector<ImageEval> evals;
  std::ostringstream dump;
  dump << "image,detection,category,score,x1,y1,x2,y2,mask_pixels\n";
  for (std::size_t img = 0; img < val.size(); ++img) {
    ImageEval ev;
    ev.gts = val[img].instances;
    // AP ranks every query; the dump keeps only rows above score_thresh.
    ev.detections = predict(ckpt.params, ckpt.model, val[img].image, &codec, 0.0);
    for (std::size_t d = 0; d < ev.detections.size(); ++d) {
      const Detection& det = ev.detections[d];
      if (det.score < cfg.score_thresh) continue;
      ++result.detections;
      dump << img << ',' << d << ',' << det.category << ',' << fmt(det.score) << ','
           << fmt(det.box.x1) << ',' << fmt(det.box.y1) << ',' << fmt(det.box.x2) << ','
           << fmt(det.box.y2) << ',' << det.mask.count() << '\n';
    }
    evals.push_back(std::move(ev));
  }
  result.images = static_cast<int>(val.size());
  result.ap = evaluate_detections(evals, ckpt.model.classes, true);

  if (persist) {
    json report;
    report["box_ap50"] = result.ap.box_ap50;
    report["box_ap"] = result.ap.box_ap;
    report["mask_ap50"] = result.ap.mask_ap50;
    report["mask_ap"] = result.ap.mask_ap;
    report["box_ap50_per_category"] = result.ap.box_ap50_per_category;
    report["mask_ap50_per_category"] = result.ap.mask_ap50_per_category;
    report["images"] = result.images;
    report["detections"] = result.detections;
    write_text_file(cfg.out_dir / "ap_report.json", report.dump(1) + "\n");
    write_text_file(cfg.out_dir / "predictions.csv", dump.str());
  }
  return result;
}

void GradcheckRunConfig::validate() const {
  model.validate();
  train.validate();
  codec.validate();
  require(batch_scenes >= 1 && samples >= 1 && step > 0, "GradcheckRunConfig: bad settings");
  require(model.vector_dim == codec.vector_dim, "GradcheckRunConfig: model vector_dim != codec n_k");
}

GradCheckReport run_gradcheck(const GradcheckRunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const bool persist = !cfg.out_dir.empty();
  if (persist) {
    fs::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir / "config.json", to_json(cfg));
  }

  SyntheticConfig synth;
  synth.canvas = cfg.model.image_side;
  const std::vector<Scene> scenes = gen_synthetic(cfg.data_seed, cfg.batch_scenes, synth);
  const MaskCodec codec = fit_codecs(scenes, std::span(&cfg.codec, 1), CropMode::kBoxCrop)[0];
  const std::vector<TrainSample> batch = make_train_samples(scenes, codec, CropMode::kBoxCrop);

  const ModelParams params = ModelParams::init(cfg.model, cfg.train.seed);
  const GradCheckReport report =
      grad_check(params, cfg.model, cfg.train, cfg.codec.kind, batch, cfg.samples, cfg.step,
                 cfg.pipeline_tol, cfg.primitive_tol, cfg.train.seed);

  if (persist) {
    std::ostringstream csv;
    csv << "kind,name,value\n";
    for (const auto& [name, err] : report.primitive_max_err) {
      csv << "primitive," << name << ',' << fmt(err) << '\n';
    }
    csv << "pipeline,pass_fraction," << fmt(report.pass_fraction) << '\n';
    csv << "pipeline,samples," << report.samples.size() << '\n';
    csv << "pipeline,ok," << (report.pipeline_ok ? 1 : 0) << '\n';
    csv << "primitives,ok," << (report.primitives_ok ? 1 : 0) << '\n';
    write_text_file(cfg.out_dir / "gradcheck.csv", csv.str());
  }
  return report;
}

// --- JSON round trips ---

namespace {

json to_json_obj(const SyntheticConfig& c) {
  return json{{"canvas", c.canvas},
              {"min_instances", c.min_instances},
              {"max_instances", c.max_instances},
              {"min_size", c.min_size},
              {"max_size", c.max_size},
              {"max_overlap_iou", c.max_overlap_iou},
              {"min_pixels", c.min_pixels},
              {"noise_level", c.noise_level}};
}

SyntheticConfig synthetic_from(const json& j, SyntheticConfig c) {
  c.canvas = j.value("canvas", c.canvas);
  c.min_instances = j.value("min_instances", c.min_instances);
  c.max_instances = j.value("max_instances", c.max_instances);
  c.min_size = j.value("min_size", c.min_size);
  c.max_size = j.value("max_size", c.max_size);
  c.max_overlap_iou = j.value("max_overlap_iou", c.max_overlap_iou);
  c.min_pixels = j.value("min_pixels", c.min_pixels);
  c.noise_level = j.value("noise_level", c.noise_level);
  return c;
}

json to_json_obj(const DecoderConfig& c) {
  return json{{"queries", c.queries},       {"width", c.width},
              {"layers", c.layers},         {"encoder_layers", c.encoder_layers},
              {"heads", c.heads},
              {"classes", c.classes},       {"image_side", c.image_side},
              {"patch_side", c.patch_side}, {"stem_hidden", c.stem_hidden},
              {"vector_dim", c.vector_dim},
              {"ffn_hidden", c.ffn_hidden}, {"box_hidden", c.box_hidden},
              {"mask_hidden", c.mask_hidden}};
}

DecoderConfig decoder_from(const json& j, DecoderConfig c) {
  c.queries = j.value("queries", c.queries);
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.heads = j.value("heads", c.heads);
  c.classes = j.value("classes", c.classes);
  c.image_side = j.value("image_side", c.image_side);
  c.patch_side = j.value("patch_side", c.patch_side);
  c.stem_hidden = j.value("stem_hidden", c.stem_hidden);
  c.vector_dim = j.value("vector_dim", c.vector_dim);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.box_hidden = j.value("box_hidden", c.box_hidden);
  c.mask_hidden = j.value("mask_hidden", c.mask_hidden);
  return c;
}

json to_json_obj(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"steps", c.steps},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"weights", {{"cls", c.weights.cls}, {"l1", c.weights.l1}, {"giou", c.weights.giou}, {"vec", c.weights.vec}}},
              {"focal", {{"alpha", c.focal.alpha}, {"gamma", c.focal.gamma}}},
              {"lr_decay_factor", c.lr_decay_factor},
              {"lr_decay_fraction", c.lr_decay_fraction},
              {"detection_only", c.detection_only},
              {"vector_loss_layers", c.vector_loss_layers}};
}

TrainConfig train_from(const json& j, TrainConfig c) {
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    c.weights.cls = w.value("cls", c.weights.cls);
    c.weights.l1 = w.value("l1", c.weights.l1);
    c.weights.giou = w.value("giou", c.weights.giou);
    c.weights.vec = w.value("vec", c.weights.vec);
  }
  if (j.contains("focal")) {
    const json& f = j.at("focal");
    c.focal.alpha = f.value("alpha", c.focal.alpha);
    c.focal.gamma = f.value("gamma", c.focal.gamma);
  }
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.lr_decay_fraction = j.value("lr_decay_fraction", c.lr_decay_fraction);
  c.detection_only = j.value("detection_only", c.detection_only);
  c.vector_loss_layers = j.value("vector_loss_layers", c.vector_loss_layers);
  return c;
}

json to_json_obj(const CodecSpec& c) {
  return json{{"kind", to_string(c.kind)},
              {"mask_side", c.mask_side},
              {"vector_dim", c.vector_dim},
              {"sampling", c.sampling == SamplingOrder::kZigzag ? "zigzag" : "block"},
              {"pca_center", c.pca_center},
              {"beta", c.beta},
              {"dict_iters", c.dict_iters},
              {"ista_iters", c.ista_iters},
              {"ista_tol", c.ista_tol}};
}

CodecSpec codec_from(const json& j, CodecSpec c) {
  if (j.contains("kind")) c.kind = codec_kind_from_string(j.at("kind").get<std::string>());
  c.mask_side = j.value("mask_side", c.mask_side);
  c.vector_dim = j.value("vector_dim", c.vector_dim);
  if (j.contains("sampling")) {
    const std::string s = j.at("sampling").get<std::string>();
    require(s == "zigzag" || s == "block", "codec sampling must be zigzag|block");
    c.sampling = s == "zigzag" ? SamplingOrder::kZigzag : SamplingOrder::kBlock;
  }
  c.pca_center = j.value("pca_center", c.pca_center);
  c.beta = j.value("beta", c.beta);
  c.dict_iters = j.value("dict_iters", c.dict_iters);
  c.ista_iters = j.value("ista_iters", c.ista_iters);
  c.ista_tol = j.value("ista_tol", c.ista_tol);
  return c;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config JSON: ") + e.what());
  }
}

}  // namespace

std::string to_json(const SweepConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["mask_count"] = cfg.mask_count;
  j["fit_mask_count"] = cfg.fit_mask_count;
  json codecs = json::array();
  for (CodecKind k : cfg.codecs) codecs.push_back(to_string(k));
  j["codecs"] = codecs;
  j["sides"] = cfg.sides;
  j["dims"] = cfg.dims;
  json cells = json::array();
  for (const auto& [n, k] : cfg.cells) cells.push_back({n, k});
  j["cells"] = cells;
  j["beta"] = cfg.beta;
  j["dict_iters"] = cfg.dict_iters;
  j["ista_iters"] = cfg.ista_iters;
  j["ista_tol"] = cfg.ista_tol;
  j["crop_mode"] = to_string(cfg.crop_mode);
  j["synthetic"] = to_json_obj(cfg.synthetic);
  j["out_dir"] = cfg.out_dir.string();
  j["threads"] = cfg.threads;
  return j.dump(1) + "\n";
}

SweepConfig sweep_config_from_json(const std::string& text) {
  const json j = parse(text);
  SweepConfig c;
  c.seed = j.value("seed", c.seed);
  c.mask_count = j.value("mask_count", c.mask_count);
  c.fit_mask_count = j.value("fit_mask_count", c.fit_mask_count);
  if (j.contains("codecs")) {
    c.codecs.clear();
    for (const json& k : j.at("codecs")) c.codecs.push_back(codec_kind_from_string(k.get<std::string>()));
  }
  if (j.contains("sides")) c.sides = j.at("sides").get<std::vector<int>>();
  if (j.contains("dims")) c.dims = j.at("dims").get<std::vector<int>>();
  if (j.contains("cells")) {
    c.cells.clear();
    for (const json& cell : j.at("cells")) {
      c.cells.emplace_back(cell.at(0).get<int>(), cell.at(1).get<int>());
    }
  }
  c.beta = j.value("beta", c.beta);
  c.dict_iters = j.value("dict_iters", c.dict_iters);
  c.ista_iters = j.value("ista_iters", c.ista_iters);
  c.ista_tol = j.value("ista_tol", c.ista_tol);
  if (j.contains("crop_mode")) c.crop_mode = crop_mode_from_string(j.at("crop_mode").get<std::string>());
  if (j.contains("synthetic")) c.synthetic = synthetic_from(j.at("synthetic"), c.synthetic);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  c.threads = j.value("threads", c.threads);
  return c;
}

std::string to_json(const TrainRunConfig& cfg) {
  json j;
  j["model"] = to_json_obj(cfg.model);
  j["train"] = to_json_obj(cfg.train);
  j["codec"] = to_json_obj(cfg.codec);
  j["crop_mode"] = to_string(cfg.crop_mode);
  j["data_seed"] = cfg.data_seed;
  j["train_scenes"] = cfg.train_scenes;
  j["val_scenes"] = cfg.val_scenes;
  j["score_thresh"] = cfg.score_thresh;
  j["out_dir"] = cfg.out_dir.string();
  return j.dump(1) + "\n";
}

TrainRunConfig train_config_from_json(const std::string& text) {
  const json j = parse(text);
  TrainRunConfig c;
  if (j.contains("model")) c.model = decoder_from(j.at("model"), c.model);
  if (j.contains("train")) c.train = train_from(j.at("train"), c.train);
  if (j.contains("codec")) c.codec = codec_from(j.at("codec"), c.codec);
  if (j.contains("crop_mode")) c.crop_mode = crop_mode_from_string(j.at("crop_mode").get<std::string>());
  c.data_seed = j.value("data_seed", c.data_seed);
  c.train_scenes = j.value("train_scenes", c.train_scenes);
  c.val_scenes = j.value("val_scenes", c.val_scenes);
  c.score_thresh = j.value("score_thresh", c.score_thresh);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  return c;
}

std::string to_json(const EvalRunConfig& cfg) {
  json j;
  j["checkpoint"] = cfg.checkpoint.string();
  j["codec_file"] = cfg.codec_file.string();
  j["data_seed"] = cfg.data_seed;
  j["train_scenes"] = cfg.train_scenes;
  j["val_scenes"] = cfg.val_scenes;
  j["score_thresh"] = cfg.score_thresh;
  j["out_dir"] = cfg.out_dir.string();
  if (cfg.dataset_dir) j["dataset_dir"] = cfg.dataset_dir->string();
  return j.dump(1) + "\n";
}

EvalRunConfig eval_config_from_json(const std::string& text) {
  const json j = parse(text);
  EvalRunConfig c;
  if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
  if (j.contains("codec_file")) c.codec_file = j.at("codec_file").get<std::string>();
  c.data_seed = j.value("data_seed", c.data_seed);
  c.train_scenes = j.value("train_scenes", c.train_scenes);
  c.val_scenes = j.value("val_scenes", c.val_scenes);
  c.score_thresh = j.value("score_thresh", c.score_thresh);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("dataset_dir")) c.dataset_dir = std::filesystem::path(j.at("dataset_dir").get<std::string>());
  return c;
}

std::string to_json(const GradcheckRunConfig& cfg) {
  json j;
  j["model"] = to_json_obj(cfg.model);
  j["train"] = to_json_obj(cfg.train);
  j["codec"] = to_json_obj(cfg.codec);
  j["data_seed"] = cfg.data_seed;
  j["batch_scenes"] = cfg.batch_scenes;
  j["samples"] = cfg.samples;
  j["step"] = cfg.step;
  j["pipeline_tol"] = cfg.pipeline_tol;
  j["primitive_tol"] = cfg.primitive_tol;
  j["out_dir"] = cfg.out_dir.string();
  return j.dump(1) + "\n";
}

GradcheckRunConfig gradcheck_config_from_json(const std::string& text) {
  const json j = parse(text);
  GradcheckRunConfig c;
  if (j.contains("model")) c.model = decoder_from(j.at("model"), c.model);
  if (j.contains("train")) c.train = train_from(j.at("train"), c.train);
  if (j.contains("codec")) c.codec = codec_from(j.at("codec"), c.codec);
  c.data_seed = j.value("data_seed", c.data_seed);
  c.batch_scenes = j.value("batch_scenes", c.batch_scenes);
  c.samples = j.value("samples", c.samples);
  c.step = j.value("step", c.step);
  c.pipeline_tol = j.value("pipeline_tol", c.pipeline_tol);
  c.primitive_tol = j.value("primitive_tol", c.primitive_tol);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  return c;
}

}  // namespace uqr
