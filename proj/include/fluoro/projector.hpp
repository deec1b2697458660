#pragma once

// Digitally reconstructed radiographs: line integrals of attenuation from the
// X-ray source through each detector pixel centre.

#include "fluoro/core.hpp"

#include <optional>
#include <vector>

namespace fluoro {

enum class Interpolation { Trilinear, Nearest };

struct DrrConfig {
  /// Ray sampling step in mm; 0 selects half the smallest voxel spacing.
  double step_mm = 0.0;
  Interpolation interpolation = Interpolation::Trilinear;
  /// Render at detector_dims / downsample.
  int downsample = 1;

  double resolved_step(const Volume& volume) const;
  void validate() const;
};

struct RayInterval {
  double t_near;
  double t_far;
};

/// Slab test for origin + t * direction against [box_min, box_max].
std::optional<RayInterval> ray_box_intersect(const Vector3d& origin, const Vector3d& direction,
                                             const Vector3d& box_min, const Vector3d& box_max);

/// Volume prepared for repeated rendering.
///
/// Samples sit at t = (k + 1/2) * step along each ray measured from the
/// source, so their physical positions do not depend on the grid extent.
/// Trilinear reads treat the voxels just outside the grid as zero; the
/// integration domain is the grid box grown by one voxel, which keeps the
/// integral of a block of constant voxels equal to its physical mass.
/// Samples outside the bounding box of non-zero voxels are skipped.
class DrrRenderer {
 public:
  explicit DrrRenderer(const Volume& volume);

  /// Pixel values are sum(mu [1/cm] * step [mm]) / 10, i.e. dimensionless
  /// path attenuation. Output is independent of the thread count.
  Image2D render(const CArmCamera& camera, const RigidTransformd& patient, const DrrConfig& cfg) const;

  /// Exact adjoint of render() (same rays, samples and weights).
  Volume backproject(const Image2D& image, const CArmCamera& camera, const RigidTransformd& patient,
                     const DrrConfig& cfg) const;

  const std::array<int, 3>& dims() const { return dims_; }

 private:
  struct RaySetup;
  RaySetup setup(const CArmCamera& camera, const RigidTransformd& patient, const DrrConfig& cfg) const;

  std::array<int, 3> dims_;
  std::array<int, 3> padded_dims_;
  Vector3d spacing_;
  Vector3d origin_;
  double fov_;
  double min_spacing_;
  std::vector<float> padded_;
  bool empty_ = true;
  Vector3d content_min_ = Vector3d::Zero();
  Vector3d content_max_ = Vector3d::Zero();
};

Image2D render_drr(const Volume& volume, const CArmCamera& camera, const RigidTransformd& patient,
                   const DrrConfig& cfg = {});

}  // namespace fluoro
