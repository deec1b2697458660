#pragma once

#include "fluoro/core.hpp"
#include "fluoro/phantom.hpp"

#include <cmath>

namespace fluoro::testing {

// Small head phantom for tests that need anatomy but not resolution.
inline Volume small_head(int n = 48, double fov_cm = 27.0) {
  return generate_phantom(head_phantom_for_fov(fov_cm, n));
}

inline Volume cube(int n, double spacing, float mu) {
  Volume v = Volume::centered(n, spacing, n * spacing / 10.0);
  v.data().setConstant(mu);
  return v;
}

inline double rms(const Eigen::ArrayXXf& a) {
  return std::sqrt(a.cast<double>().square().mean());
}

// ||a - b|| / ||b|| over all pixels.
inline double relative_rms(const Eigen::ArrayXXf& a, const Eigen::ArrayXXf& b) {
  return std::sqrt((a.cast<double>() - b.cast<double>()).square().sum() / b.cast<double>().square().sum());
}

}  // namespace fluoro::testing
