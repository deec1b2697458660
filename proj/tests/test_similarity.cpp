#include "fluoro/random.hpp"
#include "fluoro/similarity.hpp"

#include <doctest.h>

using namespace fluoro;

namespace {

Image2D blob_image(int n, double cx, double cy, double seed_phase = 0.0) {
  Image2D img(n, n, 1.0, n / 10.0);
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) {
      const double r2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
      img(u, v) = static_cast<float>(std::exp(-r2 / 40.0) + 0.3 * std::exp(-((u - 8) * (u - 8) + (v - 20) * (v - 20)) / 12.0) +
                                     0.05 * std::sin(0.4 * u + seed_phase));
    }
  // Multiples of 2^-12 below 2: adding small integers stays exact in float.
  img.data() = (img.data() * 4096.0f).round() / 4096.0f;
  return img;
}

}  // namespace

TEST_SUITE("similarity") {
  TEST_CASE("gradient images") {
    Image2D c(6, 5, 1.0, 1.0);
    c.data().setConstant(3.0f);
    const GradientImages gc = gradient_images(c);
    CHECK(gc.gx.data().abs().maxCoeff() == 0.0f);
    CHECK(gc.gy.data().abs().maxCoeff() == 0.0f);

    Image2D ramp(6, 5, 1.0, 1.0);
    for (int v = 0; v < 5; ++v)
      for (int u = 0; u < 6; ++u) ramp(u, v) = static_cast<float>(u);
    const GradientImages gr = gradient_images(ramp);
    for (int v = 1; v < 4; ++v)
      for (int u = 1; u < 5; ++u) {
        CHECK(gr.gx(u, v) == 1.0f);
        CHECK(gr.gy(u, v) == 0.0f);
      }
    CHECK(gr.gx(0, 2) == 0.0f);

    Image2D spike(3, 3, 1.0, 1.0);
    spike.data().setZero();
    spike(1, 1) = 2.0f;
    const GradientImages gs = gradient_images(spike);
    CHECK(gs.gx(1, 1) == 0.0f);
    CHECK(gs.gy(1, 1) == 0.0f);
    CHECK(gs.gx(0, 1) == 0.0f);
  }

  TEST_CASE("identical images reach the upper bound") {
    const Image2D a = blob_image(32, 15, 16);
    SimilarityConfig fixed_cfg;
    fixed_cfg.scale_mode = SimilarityConfig::ScaleMode::Fixed;
    const GradientDifference gd(a, fixed_cfg);
    CHECK(gd.score_at(a, 1.0) == gd.max_score());
    CHECK(gd.max_score() == 2.0 * 30 * 30);
    CHECK(gradient_difference(a, a, 1.0) == 2.0 * 30 * 30);
    const GradientDifference searched(a);
    CHECK(searched.score(a) == doctest::Approx(searched.max_score()).epsilon(1e-6));
    CHECK(std::abs(searched.best(a).second - 1.0) < 1e-3);
  }

  TEST_CASE("all-zero moving image against direct summation") {
    Image2D f(5, 5, 1.0, 0.5);
    Rng rng(3);
    for (Eigen::Index i = 0; i < f.data().size(); ++i) f.data()(i) = static_cast<float>(rng.uniform());
    Image2D zero(5, 5, 1.0, 0.5);
    zero.data().setZero();
    // Direct evaluation of the definition.
    std::vector<double> gx, gy;
    for (int v = 1; v < 4; ++v)
      for (int u = 1; u < 4; ++u) {
        gx.push_back(0.5 * (double(f(u + 1, v)) - f(u - 1, v)));
        gy.push_back(0.5 * (double(f(u, v + 1)) - f(u, v - 1)));
      }
    auto variance = [](const std::vector<double>& x) {
      double m = 0, s = 0;
      for (double e : x) m += e;
      m /= x.size();
      for (double e : x) s += (e - m) * (e - m);
      return s / x.size();
    };
    const double vh = variance(gx), vv = variance(gy);
    double expected = 0;
    for (std::size_t i = 0; i < gx.size(); ++i) expected += vh / (vh + gx[i] * gx[i]) + vv / (vv + gy[i] * gy[i]);
    for (double s : {0.5, 1.0, 7.0}) CHECK(gradient_difference(f, zero, s) == doctest::Approx(expected).epsilon(1e-9));
  }

  TEST_CASE("offset invariance and scale coupling") {
    const Image2D f = blob_image(32, 15, 16);
    const Image2D m = blob_image(32, 17, 15, 0.3);
    Image2D shifted = m;
    shifted.data() += 5.0f;
    for (double s : {0.5, 1.0, 2.0}) CHECK(gradient_difference(f, shifted, s) == gradient_difference(f, m, s));
    // Scaling the moving image by k is the same as scaling s by k.
    Image2D scaled = m;
    scaled.data() *= 4.0f;
    for (double s : {0.25, 0.5, 1.0}) CHECK(gradient_difference(f, scaled, s) == gradient_difference(f, m, 4.0 * s));
  }

  TEST_CASE("score never exceeds the bound") {
    const Image2D f = blob_image(24, 10, 12);
    const GradientDifference gd(f);
    Rng rng(9);
    for (int i = 0; i < 20; ++i) {
      Image2D m = f;
      for (Eigen::Index k = 0; k < m.data().size(); ++k) m.data()(k) += static_cast<float>(rng.normal(0, 0.05));
      CHECK(gd.score(m) <= gd.max_score());
    }
  }

  TEST_CASE("golden-section scale beats nearby scales") {
    const Image2D f = blob_image(32, 15, 16);
    Image2D m = blob_image(32, 16, 16, 0.2);
    m.data() *= 0.6f;
    const GradientDifference gd(f);
    const auto [best, s] = gd.best(m);
    CHECK(best >= gd.score_at(m, 0.9 * s));
    CHECK(best >= gd.score_at(m, 1.1 * s));
    // 1D scan oracle.
    double scan_best = 0;
    for (double t = 0.05; t < 20.0; t *= 1.01) scan_best = std::max(scan_best, gd.score_at(m, t));
    CHECK(best >= scan_best - 1e-6 * scan_best);
  }

  TEST_CASE("shifted image scores lower") {
    const Image2D f = blob_image(32, 15, 16);
    const Image2D moved = blob_image(32, 20, 16);
    CHECK(evaluate(f, moved) < evaluate(f, f));
  }

  TEST_CASE("degenerate fixed image") {
    Image2D flat(16, 16, 1.0, 1.0);
    flat.data().setConstant(1.0f);
    CHECK_THROWS_AS(GradientDifference{flat}, DegenerateImageError);
    Image2D tiny(2, 2, 1.0, 1.0);
    CHECK_THROWS(GradientDifference{tiny});
  }
}
