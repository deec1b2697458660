#pragma once

// Rotational acquisitions and their FDK reconstruction. A frame of the run
// and the reconstruction share one coordinate frame by construction, which
// makes the run a ground-truth source for registration experiments.

#include "fluoro/core.hpp"
#include "fluoro/projector.hpp"

#include <cstdint>
#include <vector>

namespace fluoro {

struct Trajectory {
  int n_frames = 120;
  double arc_deg = 200.0;
  /// Rotation of frame 0; the default centres the arc on rotation 0.
  double start_deg = -100.0;
  double angulation_deg = 0.0;
  CArmCamera base;

  static Trajectory centered(const CArmCamera& base, int n_frames = 120, double arc_deg = 200.0);

  double rotation_deg(int frame) const { return start_deg + frame * arc_deg / (n_frames - 1); }
  CArmCamera camera(int frame) const;
  void validate() const;
};

struct NoiseModel {
  /// Photons per pixel before attenuation; 0 disables noise.
  double photons = 0.0;

  static NoiseModel none() { return {}; }
  static NoiseModel poisson(double photons);
  bool enabled() const { return photons > 0; }
};

/// Poisson counts drawn on I0 exp(-p) and converted back to -ln(n / I0).
/// Zero counts are read as 0.5 photons. Rows use independent streams, so
/// the result does not depend on the thread count.
Image2D apply_poisson_noise(const Image2D& line_integrals, double photons, std::uint64_t seed);

struct Frame {
  Image2D image;
  CArmCamera camera;
};

std::vector<Frame> simulate_rotational_run(const Volume& volume, const Trajectory& trajectory,
                                           const DrrConfig& drr = {}, const NoiseModel& noise = {},
                                           std::uint64_t seed = 0);

struct FdkConfig {
  enum class Window { None, Hann };
  Window window = Window::None;
  /// Short-scan weighting for arcs below 360 degrees.
  bool parker = true;
  /// FDK produces small negative values near edges; volumes store
  /// attenuation, which is non-negative.
  bool clamp_negative = true;
};

/// Ram-Lak spatial kernel for sample spacing tau: h[0] = 1/(4 tau^2),
/// h[k odd] = -1/(k^2 pi^2 tau^2), h[k even] = 0, laid out circularly in a
/// buffer of `length` (index -k at length - k).
Eigen::ArrayXd ramp_kernel(int length, double tau);

/// Frequency response of the (windowed) ramp kernel for a padded length.
Eigen::ArrayXcd ramp_response(int length, double tau, FdkConfig::Window window = FdkConfig::Window::None);

/// Convolves each row along u with the ramp kernel (zero padded, via FFT).
Image2D ramp_filter(const Image2D& image, double tau, FdkConfig::Window window = FdkConfig::Window::None);

/// Short-scan weight for source angle beta (measured from the start of the
/// arc) and fan angle gamma (positive towards +u), with delta the half
/// excess of the arc over 180 degrees. All angles in radians.
double parker_weight(double beta, double gamma, double delta);

/// FDK onto the voxel grid of `grid` (its data are ignored). Frames must
/// share detector size; cameras may differ arbitrarily.
Volume fdk_reconstruct(const std::vector<Frame>& frames, const Volume& grid, const FdkConfig& cfg = {});

struct GroundTruthDataset {
  Volume reconstruction;
  std::vector<Frame> frames;
  /// Pose of the reconstruction relative to the frames' world: identity,
  /// since the same cameras both produced and reconstructed the frames.
  RigidTransformd truth;
};

struct GroundTruthOptions {
  int recon_voxels = 96;
  double recon_fov_cm = 25.6;
  DrrConfig drr;
  NoiseModel noise = NoiseModel::poisson(1e6);
  FdkConfig fdk;
  std::uint64_t seed = 0;
};

/// Simulates the run from `phantom` and reconstructs it.
GroundTruthDataset ground_truth_pairs(const Volume& phantom, const Trajectory& trajectory,
                                      const GroundTruthOptions& options = {});

}  // namespace fluoro
