#include <catch2/catch_amalgamated.hpp>

#include "iddr/detector_math.hpp"

using namespace iddr;

namespace {

BBox make_box(double x0, double y0, double x1, double y1) {
  BBox box;
  box.x0 = x0;
  box.y0 = y0;
  box.x1 = x1;
  box.y1 = y1;
  return box;
}

FcosTargets offsets(double x0s, double x1s, double y0s, double y1s) {
  FcosTargets t;
  t.x0s = x0s;
  t.x1s = x1s;
  t.y0s = y0s;
  t.y1s = y1s;
  t.positive = x0s >= 0 && x1s >= 0 && y0s >= 0 && y1s >= 0;
  return t;
}

}  // namespace

TEST_CASE("regression targets of feature-map locations") {
  SECTION("box center") {
    const FcosTargets t = fcos_targets(5, 5, make_box(0, 0, 10, 10));
    CHECK(t.x0s == 5);
    CHECK(t.x1s == 5);
    CHECK(t.y0s == 5);
    CHECK(t.y1s == 5);
    CHECK(t.positive);
  }
  SECTION("location outside the box is negative") {
    const FcosTargets t = fcos_targets(12, 5, make_box(0, 0, 10, 10));
    CHECK(t.x1s == -2);
    CHECK_FALSE(t.positive);
  }
  SECTION("asymmetric box, hand-evaluated") {
    const FcosTargets t = fcos_targets(6, 6, make_box(2, 4, 10, 8));
    CHECK(t.x0s == 4);
    CHECK(t.x1s == 4);
    CHECK(t.y0s == 2);
    CHECK(t.y1s == 2);
  }
  SECTION("round trip reconstructs the box") {
    StreamRng rng(3);
    for (int i = 0; i < 100; ++i) {
      const double x0 = rng.next_double(0, 50), y0 = rng.next_double(0, 50);
      const BBox box = make_box(x0, y0, x0 + rng.next_double(1, 40), y0 + rng.next_double(1, 40));
      const double x = rng.next_double(box.x0, box.x1);
      const double y = rng.next_double(box.y0, box.y1);
      const FcosTargets t = fcos_targets(x, y, box);
      CHECK(x - t.x0s == Catch::Approx(box.x0).epsilon(1e-12));
      CHECK(y - t.y0s == Catch::Approx(box.y0).epsilon(1e-12));
      CHECK(x + t.x1s == Catch::Approx(box.x1).epsilon(1e-12));
      CHECK(y + t.y1s == Catch::Approx(box.y1).epsilon(1e-12));
    }
  }
}

TEST_CASE("centerness") {
  SECTION("hand-evaluated examples") {
    CHECK(fcos_centerness(offsets(5, 5, 5, 5)) == Catch::Approx(1.0));
    CHECK(fcos_centerness(offsets(4, 4, 2, 2)) == Catch::Approx(1.0));
    CHECK(fcos_centerness(offsets(1, 9, 1, 9)) == Catch::Approx(1.0 / 9.0).epsilon(1e-12));
  }
  SECTION("bounded in [0,1], 1 only at the bisector") {
    StreamRng rng(7);
    for (int i = 0; i < 200; ++i) {
      const FcosTargets t = offsets(rng.next_double(0.01, 10), rng.next_double(0.01, 10),
                                    rng.next_double(0.01, 10), rng.next_double(0.01, 10));
      const double c = fcos_centerness(t);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
      if (c == 1.0) {
        CHECK(t.x0s == t.x1s);
        CHECK(t.y0s == t.y1s);
      }
    }
  }
  SECTION("invariant under swapping opposite offsets") {
    StreamRng rng(8);
    for (int i = 0; i < 100; ++i) {
      const double a = rng.next_double(0.1, 9), b = rng.next_double(0.1, 9);
      const double c = rng.next_double(0.1, 9), d = rng.next_double(0.1, 9);
      CHECK(fcos_centerness(offsets(a, b, c, d)) ==
            Catch::Approx(fcos_centerness(offsets(b, a, c, d))).epsilon(1e-12));
      CHECK(fcos_centerness(offsets(a, b, c, d)) ==
            Catch::Approx(fcos_centerness(offsets(a, b, d, c))).epsilon(1e-12));
    }
  }
  SECTION("degenerate axes are fatal") {
    CHECK_THROWS_AS(fcos_centerness(offsets(0, 0, 1, 1)), NumericError);
  }
}

TEST_CASE("focal loss") {
  SECTION("confident correct predictions cost nearly nothing") {
    CHECK(focal_loss(1.0 - 1e-7, 1) <= 1e-13);
  }
  SECTION("gamma 0 and alpha 1 reduce to cross-entropy") {
    StreamRng rng(9);
    for (int i = 0; i < 50; ++i) {
      const double p = rng.next_double(0.05, 0.95);
      CHECK(focal_loss(p, 1, 1.0, 0.0) == Catch::Approx(-std::log(p)).epsilon(1e-12));
      CHECK(focal_loss(p, 0, 0.0, 0.0) == Catch::Approx(-std::log(1 - p)).epsilon(1e-12));
    }
  }
  SECTION("hand-evaluated midpoint value") {
    const double expect = 0.25 * 0.25 * std::log(2.0);  // 0.04332...
    CHECK(focal_loss(0.5, 1) == Catch::Approx(expect).margin(1e-9));
    CHECK(focal_loss(0.5, 1) == Catch::Approx(0.0433).margin(1e-4));
  }
  SECTION("exact 0/1 probabilities are clamped, not fatal") {
    CHECK(std::isfinite(focal_loss(0.0, 1)));
    CHECK(std::isfinite(focal_loss(1.0, 0)));
  }
}

TEST_CASE("iou loss") {
  SECTION("identical boxes have zero loss") {
    const FcosTargets t = offsets(2, 3, 1, 4);
    CHECK(iou_loss(t, t) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("half-overlap hand oracle") {
    // per-axis overlap: x contributes min/max (1+1)/(1+1), y contributes
    // (1+1)/(1+3); summed extents give 4/6 and loss ln(1.5)
    const double loss = iou_loss(offsets(1, 1, 1, 1), offsets(1, 1, 1, 3));
    CHECK(loss == Catch::Approx(std::log(1.5)).epsilon(1e-9));
  }
  SECTION("symmetry") {
    StreamRng rng(10);
    for (int i = 0; i < 100; ++i) {
      const FcosTargets a = offsets(rng.next_double(0.1, 5), rng.next_double(0.1, 5),
                                    rng.next_double(0.1, 5), rng.next_double(0.1, 5));
      const FcosTargets b = offsets(rng.next_double(0.1, 5), rng.next_double(0.1, 5),
                                    rng.next_double(0.1, 5), rng.next_double(0.1, 5));
      CHECK(iou_loss(a, b) == Catch::Approx(iou_loss(b, a)).epsilon(1e-12));
      CHECK(iou_loss(a, b) >= 0.0);
    }
  }
  SECTION("zero-area target is fatal") {
    CHECK_THROWS_AS(iou_loss(offsets(1, 1, 1, 1), offsets(0, 0, 1, 1)), NumericError);
  }
}

TEST_CASE("composite detection loss") {
  SECTION("combine matches the stated normalization") {
    CHECK(combine_detection_loss(0.1, 0.4, 0.2, 1, 1.0) == Catch::Approx(0.7).epsilon(1e-12));
    CHECK(combine_detection_loss(0.1, 0.4, 0.2, 1, 0.0) == Catch::Approx(0.3).epsilon(1e-12));
    CHECK(combine_detection_loss(0.5, 0.0, 0.0, 0, 1.0) == Catch::Approx(0.5).epsilon(1e-12));
  }

  const BBox box = make_box(2, 2, 12, 12);
  std::vector<FcosTargets> targets;
  std::vector<LocationPrediction> predictions;
  for (int y = 0; y < 16; y += 2) {
    for (int x = 0; x < 16; x += 2) {
      targets.push_back(fcos_targets(x, y, box));
      LocationPrediction p;
      p.class_prob = targets.back().positive ? 0.97 : 0.03;
      p.offsets = targets.back().positive ? targets.back() : offsets(1, 1, 1, 1);
      p.centerness = targets.back().positive ? targets.back().centerness : 0.5;
      predictions.push_back(p);
    }
  }

  SECTION("near-perfect predictions give a near-zero loss") {
    // a single positive at the exact box center, where the centerness target
    // is 1 and its cross entropy can reach 0
    std::vector<FcosTargets> single = {fcos_targets(7, 7, make_box(2, 2, 12, 12)),
                                       fcos_targets(20, 20, make_box(2, 2, 12, 12))};
    std::vector<LocationPrediction> good(2);
    good[0].class_prob = 0.999;
    good[0].offsets = single[0];
    good[0].centerness = 0.999999;
    good[1].class_prob = 0.001;
    const DetectionLossTerms terms = detection_loss(good, single, 1.0);
    CHECK(terms.n_pos == 1);
    CHECK(terms.total < 0.05);
    CHECK(terms.reg == Catch::Approx(0.0).margin(1e-9));
  }

  SECTION("lambda scales only the regression term") {
    auto noisy = predictions;
    for (auto& p : noisy) {
      if (p.offsets.positive) p.offsets.x0s += 1.0;
    }
    const DetectionLossTerms at1 = detection_loss(noisy, targets, 1.0);
    const DetectionLossTerms at0 = detection_loss(noisy, targets, 0.0);
    CHECK(at0.total == Catch::Approx(at1.total - at1.reg / at1.n_pos).epsilon(1e-9));
  }

  SECTION("no positives normalizes the classification term by one") {
    std::vector<FcosTargets> neg = {fcos_targets(20, 20, box)};
    std::vector<LocationPrediction> pred(1);
    pred[0].class_prob = 0.25;
    const DetectionLossTerms terms = detection_loss(pred, neg, 1.0);
    CHECK(terms.n_pos == 0);
    CHECK(terms.total == Catch::Approx(focal_loss(0.25, 0)).epsilon(1e-12));
  }
}
