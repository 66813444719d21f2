#include <stdexcept>
#include <cmath>
#include <random>

#include "doctest.h"
#include "uqr/losses.hpp"

using namespace uqr;

TEST_CASE("focal loss fixtures") {
  // gamma=0, alpha=0.5 is half the binary cross entropy
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> logits(-8.0, 8.0);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 1000; ++i) {
    const double z = logits(rng);
    const int target = coin(rng) ? 1 : 0;
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double bce = target ? -std::log(p) : -std::log(1.0 - p);
    CHECK(sigmoid_focal_loss(z, target, 0.5, 0.0) == doctest::Approx(0.5 * bce).epsilon(1e-10));
  }

  // saturated positive logit is effectively free
  CHECK(sigmoid_focal_loss(30.0, 1) <= 1e-10);

  // direct evaluation: alpha (1-p)^2 (-log p) at p = 0.5
  const double expected = 0.25 * 0.25 * std::log(2.0);
  CHECK(sigmoid_focal_loss(0.0, 1, 0.25, 2.0) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected == doctest::Approx(0.043322).epsilon(1e-4));

  // stays finite at extreme logits
  CHECK(std::isfinite(sigmoid_focal_loss(500.0, 0)));
  CHECK(std::isfinite(sigmoid_focal_loss(-500.0, 1)));

  CHECK_THROWS_AS(sigmoid_focal_loss(0.0, 1, 1.5, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(sigmoid_focal_loss(0.0, 1, 0.5, -1.0), std::invalid_argument);
}

TEST_CASE("l1 loss is a plain sum") {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  CHECK(l1_loss(a, a) == 0.0);
  const std::vector<double> zeros(4, 0.0), ones(4, 1.0);
  CHECK(l1_loss(zeros, ones) == 4.0);
  const std::vector<double> x{0.2, 0.5}, y{0.1, 0.9};
  CHECK(l1_loss(x, y) == doctest::Approx(0.5));
  const std::vector<double> shorter{1.0};
  CHECK_THROWS_AS(l1_loss(a, shorter), std::invalid_argument);
}

TEST_CASE("giou fixtures and range") {
  const BoxXYXY unit{0, 0, 1, 1};
  CHECK(giou(unit, unit) == doctest::Approx(1.0));

  // touching boxes: IoU 0 and the enclosing box equals the union
  CHECK(giou(unit, BoxXYXY{1, 0, 2, 1}) == doctest::Approx(0.0));

  // separated: IoU 0, union 2, enclosing 3
  CHECK(giou(unit, BoxXYXY{2, 0, 3, 1}) == doctest::Approx(-1.0 / 3.0));

  bool degenerate = false;
  CHECK(giou(BoxXYXY{1, 1, 1, 1}, BoxXYXY{1, 1, 1, 1}, &degenerate) == 0.0);
  CHECK(degenerate);

  CHECK_THROWS_AS(giou(BoxXYXY{1, 0, 0, 1}, unit), std::invalid_argument);

  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> coord(0.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    const auto make = [&]() {
      const double x1 = coord(rng), y1 = coord(rng);
      return BoxXYXY{x1, y1, x1 + coord(rng) * 0.5 + 0.01, y1 + coord(rng) * 0.5 + 0.01};
    };
    const BoxXYXY a = make(), b = make();
    const double g = giou(a, b);
    CHECK(g >= -1.0);
    CHECK(g <= 1.0);
    CHECK(g == doctest::Approx(giou(b, a)));  // symmetry
  }

  // nested boxes: enclosing box equals the outer box, giou reduces to IoU
  const BoxXYXY outer{0, 0, 4, 4}, inner{1, 1, 2, 2};
  CHECK(giou(outer, inner) == doctest::Approx(box_iou(outer, inner)));
}

TEST_CASE("dice loss") {
  BinaryMask gt(2, 2);
  gt.bits = {1, 1, 0, 0};

  SoftMask perfect(2, 2);
  perfect.values = {1, 1, 0, 0};
  CHECK(dice_loss(perfect, gt) == doctest::Approx(0.0).epsilon(1e-6));

  // with eps=1: 1 - (2*1 + 1) / (2 + 2 + 1) = 0.4 for a uniform 0.5 guess
  SoftMask half(2, 2);
  half.values.assign(4, 0.5);
  CHECK(dice_loss(half, gt) == doctest::Approx(0.4));

  // large disjoint masks approach loss 1
  BinaryMask big_gt(64, 64);
  SoftMask big_pred(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      big_gt.at(x, y) = x < 32 ? 1 : 0;
      big_pred.at(x, y) = x < 32 ? 0.0 : 1.0;
    }
  CHECK(dice_loss(big_pred, big_gt) >= 0.999);

  SoftMask wrong(3, 2);
  CHECK_THROWS_AS(dice_loss(wrong, gt), std::invalid_argument);
}
