#include "fluoro/similarity.hpp"

#include <cmath>

namespace fluoro {

void SimilarityConfig::validate() const {
  if (scale_mode == ScaleMode::GoldenSection) {
    if (!(scale_lo < scale_hi)) throw std::invalid_argument("scale search needs lo < hi");
    if (scale_iterations < 1) throw std::invalid_argument("scale search needs at least one iteration");
  }
  if (epsilon < 0) throw std::invalid_argument("epsilon must be positive");
}

namespace {

void require_min_size(const Image2D& img) {
  if (img.nu() < 3 || img.nv() < 3) throw std::invalid_argument("image must be at least 3x3");
}

// Interior central differences, flattened u-fastest over the interior.
void interior_gradients(const Image2D& img, Eigen::ArrayXd& gx, Eigen::ArrayXd& gy) {
  const int nu = img.nu(), nv = img.nv();
  gx.resize(static_cast<Eigen::Index>(nu - 2) * (nv - 2));
  gy.resize(gx.size());
  const auto& d = img.data();
  Eigen::Index n = 0;
  for (int v = 1; v < nv - 1; ++v) {
    for (int u = 1; u < nu - 1; ++u, ++n) {
      gx[n] = 0.5 * (static_cast<double>(d(u + 1, v)) - static_cast<double>(d(u - 1, v)));
      gy[n] = 0.5 * (static_cast<double>(d(u, v + 1)) - static_cast<double>(d(u, v - 1)));
    }
  }
}

double population_variance(const Eigen::ArrayXd& a) {
  const double mean = a.mean();
  return (a - mean).square().mean();
}

}  // namespace

GradientImages gradient_images(const Image2D& img) {
  require_min_size(img);
  GradientImages g{Image2D(img.nu(), img.nv(), img.pitch_mm(), img.fov_diameter_cm()),
                   Image2D(img.nu(), img.nv(), img.pitch_mm(), img.fov_diameter_cm())};
  const auto& d = img.data();
  for (int v = 1; v < img.nv() - 1; ++v) {
    for (int u = 1; u < img.nu() - 1; ++u) {
      g.gx(u, v) = static_cast<float>(0.5 * (static_cast<double>(d(u + 1, v)) - d(u - 1, v)));
      g.gy(u, v) = static_cast<float>(0.5 * (static_cast<double>(d(u, v + 1)) - d(u, v - 1)));
    }
  }
  return g;
}

struct GradientDifference::MovingGradients {
  Eigen::ArrayXd gx;
  Eigen::ArrayXd gy;
};

GradientDifference::GradientDifference(const Image2D& fixed, const SimilarityConfig& cfg)
    : cfg_(cfg), nu_(fixed.nu()), nv_(fixed.nv()) {
  cfg.validate();
  require_min_size(fixed);
  interior_gradients(fixed, gx_, gy_);
  double eps = cfg.epsilon;
  if (eps == 0.0) {
    const double range = static_cast<double>(fixed.data().maxCoeff()) - fixed.data().minCoeff();
    eps = 1e-12 * range * range;
  }
  const double vh = population_variance(gx_);
  const double vv = population_variance(gy_);
  if (!(vh > eps) || !(vv > eps))
    throw DegenerateImageError("fixed image has no gradient content (insufficient landmarks)");
  var_h_ = std::max(vh, eps);
  var_v_ = std::max(vv, eps);
}

GradientDifference::MovingGradients GradientDifference::moving_gradients(const Image2D& moving) const {
  if (moving.nu() != nu_ || moving.nv() != nv_)
    throw std::invalid_argument("gradient difference: image dimensions differ");
  MovingGradients m;
  interior_gradients(moving, m.gx, m.gy);
  return m;
}

double GradientDifference::sum(const MovingGradients& m, double s) const {
  // Serial accumulation in a fixed order keeps scores bit-stable.
  double acc = 0.0;
  const Eigen::Index n = gx_.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = gx_[i] - s * m.gx[i];
    const double dy = gy_[i] - s * m.gy[i];
    acc += var_h_ / (var_h_ + dx * dx) + var_v_ / (var_v_ + dy * dy);
  }
  return acc;
}

double GradientDifference::score_at(const Image2D& moving, double s) const { return sum(moving_gradients(moving), s); }

std::pair<double, double> GradientDifference::best(const Image2D& moving) const {
  const MovingGradients m = moving_gradients(moving);
  if (cfg_.scale_mode == SimilarityConfig::ScaleMode::Fixed) return {sum(m, cfg_.fixed_scale), cfg_.fixed_scale};

  constexpr double g = 0.6180339887498949;
  double a = cfg_.scale_lo, b = cfg_.scale_hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = sum(m, c), fd = sum(m, d);
  double best_score = fc >= fd ? fc : fd;
  double best_s = fc >= fd ? c : d;
  for (int it = 0; it < cfg_.scale_iterations; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = sum(m, c);
      if (fc > best_score) best_score = fc, best_s = c;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = sum(m, d);
      if (fd > best_score) best_score = fd, best_s = d;
    }
  }
  return {best_score, best_s};
}

double GradientDifference::score(const Image2D& moving) const { return best(moving).first; }

double gradient_difference(const Image2D& fixed, const Image2D& moving, double s, const SimilarityConfig& cfg) {
  return GradientDifference(fixed, cfg).score_at(moving, s);
}

double evaluate(const Image2D& fixed, const Image2D& moving, const SimilarityConfig& cfg) {
  return GradientDifference(fixed, cfg).score(moving);
}

}  // namespace fluoro
