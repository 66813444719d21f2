#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "uqr/experiments.hpp"

using namespace uqr;

namespace {

SweepConfig small_sweep(const std::filesystem::path& out) {
  SweepConfig cfg;
  cfg.seed = 5;
  cfg.mask_count = 24;
  cfg.fit_mask_count = 24;
  cfg.codecs = {CodecKind::kDct, CodecKind::kPca, CodecKind::kFlatten};
  cfg.sides = {16};
  cfg.dims = {4, 16};
  cfg.out_dir = out;
  cfg.threads = 2;
  return cfg;
}

TrainRunConfig small_train(const std::filesystem::path& out) {
  TrainRunConfig cfg;
  cfg.model.queries = 6;
  cfg.model.width = 16;
  cfg.model.layers = 1;
  cfg.model.encoder_layers = 1;
  cfg.model.heads = 2;
  cfg.model.classes = 3;
  cfg.model.image_side = 32;
  cfg.model.patch_side = 4;
  cfg.model.vector_dim = 16;
  cfg.model.ffn_hidden = 16;
  cfg.model.box_hidden = 16;
  cfg.model.mask_hidden = 16;
  cfg.codec.kind = CodecKind::kDct;
  cfg.codec.mask_side = 16;
  cfg.codec.vector_dim = 16;
  cfg.train.steps = 6;
  cfg.train.batch_size = 2;
  cfg.train.seed = 3;
  cfg.data_seed = 3;
  cfg.train_scenes = 6;
  cfg.val_scenes = 3;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("codec sweep produces the expected cells and a monotone iou column") {
  testutil::TempDir dir("sweep");
  const SweepReport report = run_codec_sweep(small_sweep(dir.path()));

  REQUIRE(report.find(CodecKind::kDct, 16, 4) != nullptr);
  REQUIRE(report.find(CodecKind::kDct, 16, 16) != nullptr);
  REQUIRE(report.find(CodecKind::kPca, 16, 4) != nullptr);
  REQUIRE(report.find(CodecKind::kFlatten, 16, 256) != nullptr);

  CHECK(report.find(CodecKind::kDct, 16, 4)->mean_iou <=
        report.find(CodecKind::kDct, 16, 16)->mean_iou + 1e-12);
  CHECK(report.find(CodecKind::kPca, 16, 4)->mean_iou <=
        report.find(CodecKind::kPca, 16, 16)->mean_iou + 1e-12);
  CHECK(report.find(CodecKind::kFlatten, 16, 256)->mean_iou == doctest::Approx(1.0));

  CHECK(std::filesystem::exists(dir.path() / "sweep.csv"));
  CHECK(std::filesystem::exists(dir.path() / "timings.csv"));
  CHECK(std::filesystem::exists(dir.path() / "config.json"));
  CHECK(std::filesystem::exists(dir.path() / "basis_pca_n16_k4.uqrb"));
}

TEST_CASE("codec sweep is bit-reproducible across runs and thread counts") {
  testutil::TempDir a("sweep_a"), b("sweep_b");
  SweepConfig ca = small_sweep(a.path());
  SweepConfig cb = small_sweep(b.path());
  cb.threads = 1;  // parallelism must not leak into results
  run_codec_sweep(ca);
  run_codec_sweep(cb);
  CHECK(testutil::read_file(a.path() / "sweep.csv") == testutil::read_file(b.path() / "sweep.csv"));
  CHECK(testutil::read_file(a.path() / "basis_pca_n16_k16.uqrb") ==
        testutil::read_file(b.path() / "basis_pca_n16_k16.uqrb"));
}

TEST_CASE("explicit cells override the grid") {
  testutil::TempDir dir("cells");
  SweepConfig cfg = small_sweep(dir.path());
  cfg.out_dir.clear();
  cfg.codecs = {CodecKind::kDct};
  cfg.cells = {{8, 4}, {16, 9}};
  const SweepReport report = run_codec_sweep(cfg);
  REQUIRE(report.cells.size() == 2);
  CHECK(report.find(CodecKind::kDct, 8, 4) != nullptr);
  CHECK(report.find(CodecKind::kDct, 16, 9) != nullptr);
}

TEST_CASE("train run writes its artifacts and reproduces bit-exactly") {
  testutil::TempDir a("train_a"), b("train_b");
  const TrainRunResult ra = run_train(small_train(a.path()));
  const TrainRunResult rb = run_train(small_train(b.path()));

  CHECK(std::filesystem::exists(a.path() / "config.json"));
  CHECK(std::filesystem::exists(a.path() / "train_log.csv"));
  CHECK(std::filesystem::exists(a.path() / "checkpoint.uqrm"));
  CHECK(std::filesystem::exists(a.path() / "codec.uqrb"));
  CHECK(std::filesystem::exists(a.path() / "metrics.json"));

  CHECK(testutil::read_file(a.path() / "train_log.csv") == testutil::read_file(b.path() / "train_log.csv"));
  CHECK(testutil::read_file(a.path() / "checkpoint.uqrm") == testutil::read_file(b.path() / "checkpoint.uqrm"));
  CHECK(testutil::read_file(a.path() / "metrics.json") == testutil::read_file(b.path() / "metrics.json"));
  CHECK(ra.first100_mean_total == rb.first100_mean_total);

  // the log carries one row per step plus the header
  const std::string log = testutil::read_file(a.path() / "train_log.csv");
  CHECK(std::count(log.begin(), log.end(), '\n') == 7);

  SUBCASE("eval consumes the checkpoint") {
    testutil::TempDir out("eval");
    EvalRunConfig ec;
    ec.checkpoint = ra.checkpoint_path;
    ec.data_seed = 3;
    ec.train_scenes = 6;
    ec.val_scenes = 3;
    ec.out_dir = out.path();
    const EvalRunResult er = run_eval(ec);
    CHECK(er.images == 3);
    CHECK(std::filesystem::exists(out.path() / "ap_report.json"));
    CHECK(std::filesystem::exists(out.path() / "predictions.csv"));

    // a second eval into another directory is byte-identical
    testutil::TempDir out2("eval2");
    EvalRunConfig ec2 = ec;
    ec2.out_dir = out2.path();
    run_eval(ec2);
    CHECK(testutil::read_file(out.path() / "ap_report.json") ==
          testutil::read_file(out2.path() / "ap_report.json"));
    CHECK(testutil::read_file(out.path() / "predictions.csv") ==
          testutil::read_file(out2.path() / "predictions.csv"));
  }
}

TEST_CASE("detection-only training logs a zero vec column") {
  testutil::TempDir dir("detonly");
  TrainRunConfig cfg = small_train(dir.path());
  cfg.train = detection_only_mode(cfg.train);
  run_train(cfg);
  const std::string log = testutil::read_file(dir.path() / "train_log.csv");
  std::istringstream lines(log);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    // fifth column is vec
    std::size_t pos = 0;
    for (int comma = 0; comma < 4; ++comma) pos = line.find(',', pos) + 1;
    CHECK(line.substr(pos, line.find(',', pos) - pos) == "0");
  }
}

TEST_CASE("gradcheck run on a tiny model passes and writes a report") {
  testutil::TempDir dir("gradrun");
  GradcheckRunConfig cfg;
  cfg.model.queries = 4;
  cfg.model.width = 8;
  cfg.model.layers = 1;
  cfg.model.encoder_layers = 1;
  cfg.model.heads = 2;
  cfg.model.classes = 3;
  cfg.model.image_side = 24;
  cfg.model.patch_side = 4;
  cfg.model.vector_dim = 9;
  cfg.model.ffn_hidden = 8;
  cfg.model.box_hidden = 8;
  cfg.model.mask_hidden = 8;
  cfg.codec.kind = CodecKind::kDct;
  cfg.codec.mask_side = 8;
  cfg.codec.vector_dim = 9;
  cfg.batch_scenes = 1;
  cfg.samples = 40;
  cfg.out_dir = dir.path();
  const GradCheckReport report = run_gradcheck(cfg);
  CHECK(report.passed());
  const std::string csv = testutil::read_file(dir.path() / "gradcheck.csv");
  CHECK(csv.find("primitive,matmul,") != std::string::npos);
  CHECK(csv.find("pipeline,pass_fraction,") != std::string::npos);
}

TEST_CASE("config json round trips") {
  TrainRunConfig cfg;
  cfg.train.steps = 123;
  cfg.train.weights.vec = 1.5;
  cfg.codec.kind = CodecKind::kSparse;
  cfg.codec.beta = 0.7;
  cfg.crop_mode = CropMode::kFullImage;
  cfg.out_dir = "/tmp/somewhere";
  const TrainRunConfig back = train_config_from_json(to_json(cfg));
  CHECK(back.train.steps == 123);
  CHECK(back.train.weights.vec == 1.5);
  CHECK(back.codec.kind == CodecKind::kSparse);
  CHECK(back.codec.beta == 0.7);
  CHECK(back.crop_mode == CropMode::kFullImage);
  CHECK(back.out_dir == "/tmp/somewhere");
  CHECK(to_json(back) == to_json(cfg));

  SweepConfig sc;
  sc.cells = {{64, 64}, {96, 144}};
  sc.codecs = {CodecKind::kSparse};
  const SweepConfig sback = sweep_config_from_json(to_json(sc));
  CHECK(sback.cells == sc.cells);
  CHECK(sback.codecs == sc.codecs);
  CHECK(to_json(sback) == to_json(sc));

  EvalRunConfig ec;
  ec.checkpoint = "/x/ckpt.uqrm";
  ec.dataset_dir = "/y/data";
  const EvalRunConfig eback = eval_config_from_json(to_json(ec));
  CHECK(eback.checkpoint == ec.checkpoint);
  REQUIRE(eback.dataset_dir.has_value());
  CHECK(*eback.dataset_dir == *ec.dataset_dir);

  CHECK_THROWS_AS(train_config_from_json("{"), std::invalid_argument);
}

TEST_CASE("UQR_THREADS caps the ladder") {
  setenv("UQR_THREADS", "1", 1);
  CHECK(sweep_thread_budget(8) == 1);
  setenv("UQR_THREADS", "3", 1);
  CHECK(sweep_thread_budget(8) == 3);
  CHECK(sweep_thread_budget(2) == 2);
  unsetenv("UQR_THREADS");
  CHECK(sweep_thread_budget(4) == 4);
}

TEST_CASE("paper defaults are wired in") {
  // matching / loss weights
  const LossWeights w;
  CHECK(w.cls == 2.0);
  CHECK(w.l1 == 5.0);
  CHECK(w.giou == 2.0);
  CHECK(w.vec == 3.0);
  // codec sweep defaults
  const CodecSpec spec;
  CHECK(spec.mask_side == 128);
  CHECK(spec.vector_dim == 256);
  const SweepConfig sweep;
  CHECK(sweep.sides == std::vector<int>{64, 96, 128, 256});
  CHECK(sweep.dims == std::vector<int>{144, 256, 300, 400});
  // optimizer defaults
  const TrainConfig tc;
  CHECK(tc.lr == 2e-4);
  CHECK(tc.beta1 == 0.9);
  CHECK(tc.weight_decay == 1e-4);
  // mask head hidden width
  const DecoderConfig dc;
  CHECK(dc.mask_hidden == 1024);
  CHECK(dc.box_hidden == 256);
}
