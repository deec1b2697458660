#pragma once

// Gradient-difference similarity between a fixed X-ray image and a DRR.
//
//   GD(s) = sum_interior  var_h / (var_h + (dI/du - s dD/du)^2)
//         + sum_interior  var_v / (var_v + (dI/dv - s dD/dv)^2)
//
// var_h and var_v are the variances of the fixed image's gradient images;
// s is an intensity scale between the two images. Higher is more similar;
// the maximum is 2 * (number of interior pixels).

#include "fluoro/core.hpp"

#include <stdexcept>

namespace fluoro {

struct SimilarityConfig {
  enum class ScaleMode { Fixed, GoldenSection };
  ScaleMode scale_mode = ScaleMode::GoldenSection;
  double fixed_scale = 1.0;
  double scale_lo = 0.05;
  double scale_hi = 20.0;
  int scale_iterations = 24;
  /// Floor for the gradient variances; 0 selects 1e-12 * (dynamic range)^2
  /// of the fixed image.
  double epsilon = 0.0;

  void validate() const;
};

/// Thrown when the fixed image has no gradient content to register against.
class DegenerateImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradientImages {
  Image2D gx;  // along u
  Image2D gy;  // along v
};

/// Central differences on interior pixels; border pixels are zero.
GradientImages gradient_images(const Image2D& img);

double gradient_difference(const Image2D& fixed, const Image2D& moving, double s, const SimilarityConfig& cfg = {});

/// Gradient difference at the configured scale, or the best scale found by
/// golden-section search.
double evaluate(const Image2D& fixed, const Image2D& moving, const SimilarityConfig& cfg = {});

/// Fixed-image side of the measure, precomputed for repeated evaluation.
class GradientDifference {
 public:
  /// Throws DegenerateImageError if either gradient variance is not above
  /// the epsilon floor.
  GradientDifference(const Image2D& fixed, const SimilarityConfig& cfg = {});

  double score(const Image2D& moving) const;
  double score_at(const Image2D& moving, double s) const;
  /// Best score and the scale it was found at.
  std::pair<double, double> best(const Image2D& moving) const;

  double variance_h() const { return var_h_; }
  double variance_v() const { return var_v_; }
  long interior_count() const { return static_cast<long>(nu_ - 2) * (nv_ - 2); }
  double max_score() const { return 2.0 * static_cast<double>(interior_count()); }

 private:
  struct MovingGradients;
  MovingGradients moving_gradients(const Image2D& moving) const;
  double sum(const MovingGradients& m, double s) const;

  SimilarityConfig cfg_;
  int nu_;
  int nv_;
  Eigen::ArrayXd gx_;
  Eigen::ArrayXd gy_;
  double var_h_;
  double var_v_;
};

}  // namespace fluoro
