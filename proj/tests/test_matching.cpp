#include <stdexcept>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "uqr/matching.hpp"

using namespace uqr;

namespace {

// Exhaustive minimum over all injections of rows into columns. Row-ordered
// sums, fully independent of the production algorithm.
double brute_force_min_cost(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> chosen(static_cast<std::size_t>(rows), -1);
  std::vector<char> used(static_cast<std::size_t>(cols), 0);
  const std::function<void(int, double)> walk = [&](int row, double acc) {
    if (row == rows) {
      best = std::min(best, acc);
      return;
    }
    for (int c = 0; c < cols; ++c) {
      if (used[static_cast<std::size_t>(c)]) continue;
      used[static_cast<std::size_t>(c)] = 1;
      walk(row + 1, acc + cost(row, c));
      used[static_cast<std::size_t>(c)] = 0;
    }
  };
  walk(0, 0.0);
  return best;
}

PredictionSet make_predictions(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& boxes,
                               const Eigen::MatrixXd& vectors) {
  PredictionSet p;
  p.logits = logits;
  p.boxes = boxes;
  p.vectors = vectors;
  return p;
}

GroundTruthInstance make_gt(int category, BoxCxCyWh box, std::vector<double> coeffs = {}) {
  GroundTruthInstance gt;
  gt.category = category;
  gt.box = box;
  gt.mask_vector.coeffs = std::move(coeffs);
  return gt;
}

}  // namespace

TEST_CASE("hungarian small fixtures") {
  Eigen::MatrixXd one(1, 1);
  one << 3.0;
  const Assignment a = hungarian(one);
  REQUIRE(a.pairs.size() == 1);
  CHECK(a.pairs[0] == std::pair<int, int>(0, 0));

  Eigen::MatrixXd two(2, 2);
  two << 0, 1, 1, 0;
  const Assignment d = hungarian(two);
  CHECK(d.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});

  // all-equal costs: lexicographically smallest pair sequence
  Eigen::MatrixXd flat(2, 3);
  flat.setConstant(2.0);
  const Assignment lex = hungarian(flat);
  CHECK(lex.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});

  // tie between (0,0),(1,1) and (0,1),(1,0); both cost 2
  Eigen::MatrixXd tie(2, 2);
  tie << 1, 1, 1, 1;
  CHECK(hungarian(tie).pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});

  const Assignment empty = hungarian(Eigen::MatrixXd(0, 4));
  CHECK(empty.pairs.empty());

  Eigen::MatrixXd wide(3, 2);
  wide.setZero();
  CHECK_THROWS_AS(hungarian(wide), std::invalid_argument);

  Eigen::MatrixXd inf(1, 1);
  inf << std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian(inf), std::invalid_argument);
}

TEST_CASE("hungarian equals the exhaustive oracle on random matrices") {
  std::mt19937_64 rng(79);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  std::uniform_int_distribution<int> rdist(1, 7);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = rdist(rng);
    std::uniform_int_distribution<int> cdist(rows, 7);
    const int cols = cdist(rng);
    Eigen::MatrixXd cost(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) cost(r, c) = val(rng);
    const Assignment a = hungarian(cost);
    REQUIRE(static_cast<int>(a.pairs.size()) == rows);
    CHECK(assignment_cost(cost, a) == brute_force_min_cost(cost));
  }
}

TEST_CASE("hungarian scale invariance and dominated-column property") {
  std::mt19937_64 rng(83);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd cost(4, 6);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 6; ++c) cost(r, c) = val(rng);
    const Assignment base = hungarian(cost);
    const Assignment scaled = hungarian((3.7 * cost).eval());
    CHECK(base.pairs == scaled.pairs);
  }

  // single row: a strictly dominated column never wins
  Eigen::MatrixXd row(1, 3);
  row << 0.5, 0.2, 0.9;
  CHECK(hungarian(row).pairs[0].second == 1);
}

TEST_CASE("pairwise cost matches a scalar recomputation") {
  const LossWeights w;  // paper defaults 2/5/2
  CHECK(w.cls == 2.0);
  CHECK(w.l1 == 5.0);
  CHECK(w.giou == 2.0);
  const FocalParams fp;

  Eigen::MatrixXd logits(3, 2);
  logits << 1.5, -0.5, -2.0, 0.75, 0.0, 0.25;
  Eigen::MatrixXd boxes(3, 4);
  boxes << 0.5, 0.5, 0.25, 0.3, 0.2, 0.7, 0.4, 0.2, 0.8, 0.3, 0.1, 0.5;
  const PredictionSet pred = make_predictions(logits, boxes, Eigen::MatrixXd(3, 0));

  std::vector<GroundTruthInstance> gts;
  gts.push_back(make_gt(0, BoxCxCyWh{0.45, 0.55, 0.3, 0.25}));
  gts.push_back(make_gt(1, BoxCxCyWh{0.25, 0.65, 0.35, 0.25}));

  const Eigen::MatrixXd cost = pairwise_cost(pred, gts, w, fp);
  REQUIRE(cost.rows() == 2);
  REQUIRE(cost.cols() == 3);

  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 3; ++i) {
      const double z = logits(i, gts[static_cast<std::size_t>(j)].category);
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double fl_pos = fp.alpha * std::pow(1.0 - p, fp.gamma) * (-std::log(p));
      const double fl_neg = (1.0 - fp.alpha) * std::pow(p, fp.gamma) * (-std::log(1.0 - p));
      const auto& g = gts[static_cast<std::size_t>(j)].box;
      const double l1 = std::abs(g.cx - boxes(i, 0)) + std::abs(g.cy - boxes(i, 1)) +
                        std::abs(g.w - boxes(i, 2)) + std::abs(g.h - boxes(i, 3));
      const BoxCxCyWh pb{boxes(i, 0), boxes(i, 1), boxes(i, 2), boxes(i, 3)};
      const double gv = giou(to_xyxy(g, 1, 1), to_xyxy(pb, 1, 1));
      const double expected = w.cls * (fl_pos - fl_neg) + w.l1 * l1 + w.giou * (1.0 - gv);
      CHECK(cost(j, i) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("exact prediction wins the matching") {
  std::mt19937_64 rng(89);
  std::uniform_real_distribution<double> noise(0.1, 0.9);
  std::vector<GroundTruthInstance> gts;
  gts.push_back(make_gt(1, BoxCxCyWh{0.4, 0.6, 0.2, 0.3}));

  Eigen::MatrixXd logits(4, 3);
  Eigen::MatrixXd boxes(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int s = 0; s < 3; ++s) logits(i, s) = noise(rng) - 2.0;
    boxes.row(i) << noise(rng), noise(rng), noise(rng) * 0.3, noise(rng) * 0.3;
  }
  logits.row(2) << -30.0, 30.0, -30.0;  // query 2 is the perfect one
  boxes.row(2) << 0.4, 0.6, 0.2, 0.3;

  const PredictionSet pred = make_predictions(logits, boxes, Eigen::MatrixXd(4, 0));
  const Eigen::MatrixXd cost = pairwise_cost(pred, gts);
  // The classification cost is FL_pos - FL_neg, so a saturated correct logit
  // drives the cost strongly negative rather than to zero.
  CHECK(cost(0, 2) < 0.0);
  for (int i = 0; i < 4; ++i) {
    if (i != 2) CHECK(cost(0, i) > cost(0, 2));
  }
  CHECK(hungarian(cost).pairs[0].second == 2);
}

TEST_CASE("instance loss: perfect predictions vanish") {
  std::vector<GroundTruthInstance> gts;
  gts.push_back(make_gt(0, BoxCxCyWh{0.5, 0.5, 0.4, 0.4}, {0.3, -0.2}));

  Eigen::MatrixXd logits(2, 2);
  logits << 30.0, -30.0, -30.0, -30.0;
  Eigen::MatrixXd boxes(2, 4);
  boxes << 0.5, 0.5, 0.4, 0.4, 0.9, 0.9, 0.05, 0.05;
  Eigen::MatrixXd vectors(2, 2);
  vectors << 0.3, -0.2, 0.0, 0.0;

  Assignment a;
  a.pairs = {{0, 0}};
  const LossBreakdown loss = instance_loss(make_predictions(logits, boxes, vectors), gts, a);
  CHECK(loss.l1 == 0.0);
  CHECK(loss.giou == doctest::Approx(0.0));
  CHECK(loss.vec == 0.0);
  CHECK(loss.cls <= 1e-10);
  CHECK(loss.total <= 1e-9);
}

TEST_CASE("instance loss: zero ground truths leaves only background terms") {
  Eigen::MatrixXd logits(3, 2);
  logits << 0.5, -1.0, 2.0, 0.0, -3.0, 1.0;
  Eigen::MatrixXd boxes = Eigen::MatrixXd::Constant(3, 4, 0.5);
  const PredictionSet pred = make_predictions(logits, boxes, Eigen::MatrixXd(3, 0));

  const LossBreakdown loss = instance_loss(pred, {}, Assignment{});
  double expected = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int s = 0; s < 2; ++s) expected += sigmoid_focal_loss(logits(i, s), 0);
  CHECK(loss.cls == doctest::Approx(expected).epsilon(1e-12));
  CHECK(loss.l1 == 0.0);
  CHECK(loss.giou == 0.0);
  CHECK(loss.vec == 0.0);
  CHECK(loss.total == doctest::Approx(2.0 * expected).epsilon(1e-12));
}

TEST_CASE("instance loss equals a hand-built weighted sum on a 1-gt/2-pred fixture") {
  const LossWeights w{2.0, 5.0, 2.0, 3.0};
  const FocalParams fp;
  std::vector<GroundTruthInstance> gts;
  gts.push_back(make_gt(1, BoxCxCyWh{0.4, 0.5, 0.2, 0.2}, {1.0, -1.0, 0.5}));

  Eigen::MatrixXd logits(2, 3);
  logits << 0.3, 1.2, -0.7, -1.1, 0.4, 0.9;
  Eigen::MatrixXd boxes(2, 4);
  boxes << 0.45, 0.48, 0.25, 0.18, 0.7, 0.2, 0.1, 0.4;
  Eigen::MatrixXd vectors(2, 3);
  vectors << 0.8, -0.6, 0.9, 0.0, 0.0, 0.0;

  Assignment a;
  a.pairs = {{0, 0}};
  const LossBreakdown loss =
      instance_loss(make_predictions(logits, boxes, vectors), gts, a, w, fp);

  // classification: matched slot positive, every other slot background
  double cls = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int s = 0; s < 3; ++s) {
      const int target = (i == 0 && s == 1) ? 1 : 0;
      const double z = logits(i, s);
      const double p = 1.0 / (1.0 + std::exp(-z));
      cls += target ? fp.alpha * std::pow(1 - p, fp.gamma) * (-std::log(p))
                    : (1 - fp.alpha) * std::pow(p, fp.gamma) * (-std::log(1 - p));
    }
  }
  const double l1 = std::abs(0.4 - 0.45) + std::abs(0.5 - 0.48) + std::abs(0.2 - 0.25) +
                    std::abs(0.2 - 0.18);
  const double gv = giou(to_xyxy(gts[0].box, 1, 1), to_xyxy(BoxCxCyWh{0.45, 0.48, 0.25, 0.18}, 1, 1));
  const double vec = std::abs(1.0 - 0.8) + std::abs(-1.0 + 0.6) + std::abs(0.5 - 0.9);

  CHECK(loss.cls == doctest::Approx(cls).epsilon(1e-12));
  CHECK(loss.l1 == doctest::Approx(l1).epsilon(1e-12));
  CHECK(loss.giou == doctest::Approx(1.0 - gv).epsilon(1e-12));
  CHECK(loss.vec == doctest::Approx(vec).epsilon(1e-12));
  CHECK(loss.total ==
        doctest::Approx(2.0 * cls + 5.0 * l1 + 2.0 * (1.0 - gv) + 3.0 * vec).epsilon(1e-12));
}

TEST_CASE("lambda_vec = 0 reduces the total to the detection composite") {
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> val(0.05, 0.95);
  std::vector<GroundTruthInstance> gts;
  gts.push_back(make_gt(0, BoxCxCyWh{0.3, 0.3, 0.2, 0.2}, {0.5}));
  gts.push_back(make_gt(2, BoxCxCyWh{0.7, 0.6, 0.3, 0.3}, {-0.5}));

  Eigen::MatrixXd logits(4, 3);
  Eigen::MatrixXd boxes(4, 4);
  Eigen::MatrixXd vectors(4, 1);
  for (int i = 0; i < 4; ++i) {
    for (int s = 0; s < 3; ++s) logits(i, s) = val(rng) * 4 - 2;
    boxes.row(i) << val(rng), val(rng), val(rng) * 0.5, val(rng) * 0.5;
    vectors(i, 0) = val(rng);
  }
  const PredictionSet pred = make_predictions(logits, boxes, vectors);
  const Assignment a = hungarian(pairwise_cost(pred, gts));

  LossWeights no_vec;
  no_vec.vec = 0.0;
  const LossBreakdown loss = instance_loss(pred, gts, a, no_vec);
  const double det_composite = no_vec.cls * loss.cls + no_vec.l1 * loss.l1 + no_vec.giou * loss.giou;
  CHECK(loss.total == doctest::Approx(det_composite).epsilon(1e-12));
  CHECK(loss.vec > 0.0);  // the component is still reported, just unweighted
}

TEST_CASE("instance loss rejects malformed assignments") {
  std::vector<GroundTruthInstance> gts;
  gts.push_back(make_gt(0, BoxCxCyWh{0.5, 0.5, 0.2, 0.2}));
  gts.push_back(make_gt(1, BoxCxCyWh{0.2, 0.2, 0.1, 0.1}));
  const PredictionSet pred = make_predictions(Eigen::MatrixXd::Zero(3, 2),
                                              Eigen::MatrixXd::Constant(3, 4, 0.4),
                                              Eigen::MatrixXd(3, 0));
  Assignment duplicate;
  duplicate.pairs = {{0, 1}, {1, 1}};
  CHECK_THROWS_AS(instance_loss(pred, gts, duplicate), std::invalid_argument);

  Assignment missing;
  missing.pairs = {{0, 0}};
  CHECK_THROWS_AS(instance_loss(pred, gts, missing), std::invalid_argument);
}

TEST_CASE("loss csv row format") {
  LossBreakdown loss;
  loss.cls = 0.5;
  loss.l1 = 0.25;
  loss.giou = 1.0;
  loss.vec = 2.0;
  loss.total = 9.75;
  std::ostringstream out;
  append_loss_row(out, 42, loss);
  CHECK(out.str() == "42,0.5,0.25,1,2,9.75\n");
}
