#pragma once

// Procedural head phantom: a soft-tissue head, an ellipsoidal skull shell,
// air-filled sinuses, optional anterior facial bone structures and an
// optional branching vessel tree that carries contrast agent when enabled.
//
// Anatomical frame in world coordinates: superior along +y (the C-arm
// propeller axis), anterior along +x, left-right along z. A C-arm at
// rotation 0 therefore sees a lateral view.

#include "fluoro/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fluoro {

struct Ellipsoid {
  Vector3d center = Vector3d::Zero();
  Vector3d semi_axes = Vector3d::Ones();
  /// Body axes in world coordinates (columns).
  Matrix3d axes = Matrix3d::Identity();

  bool contains(const Vector3d& p) const;
  /// Conservative axis-aligned bounds.
  void bounds(Vector3d& lo, Vector3d& hi) const;
};

/// Cylinder with hemispherical caps around segment a-b.
struct Tube {
  Vector3d a = Vector3d::Zero();
  Vector3d b = Vector3d::Zero();
  double radius = 1.0;
  int generation = 0;

  bool contains(const Vector3d& p) const;
  double distance(const Vector3d& p) const;
};

struct VesselTreeSpec {
  Vector3d root = Vector3d(-5.0, -55.0, 0.0);
  Vector3d direction = Vector3d(0.15, 1.0, 0.0);
  double root_length_mm = 35.0;
  int generations = 3;
  double root_radius_mm = 2.0;
  double leaf_radius_mm = 0.7;
  double length_ratio = 0.75;
  double branch_angle_deg = 35.0;
};

struct PhantomSpec {
  std::array<int, 3> dims{128, 128, 128};
  Vector3d spacing_mm = Vector3d::Constant(2.0);
  /// Nominal field of view recorded in the volume header.
  double fov_diameter_cm = 25.6;

  std::optional<Ellipsoid> head;  // soft tissue / PMMA envelope
  std::optional<Ellipsoid> skull_outer;
  std::optional<Ellipsoid> skull_inner;
  std::vector<Ellipsoid> skull_base;  // bone inside the cranial cavity
  std::vector<Ellipsoid> sinuses;
  bool facial_structures = false;
  std::vector<Ellipsoid> facial_bones;  // used when facial_structures is on
  std::optional<VesselTreeSpec> vessel_tree;
  bool contrast = false;

  double mu_bone = 0.55;
  double mu_soft = 0.21;
  double mu_contrast = 1.2;
  double mu_air = 0.0;

  std::uint64_t seed = 1;
  /// Shapes extending past the grid are an error unless clipping is allowed.
  bool clip_to_grid = false;

  void validate() const;
};

/// Head phantom with skull, sinuses, facial bones and vessel tree, on a cube
/// of `n` voxels spanning `extent_mm`.
PhantomSpec default_head_phantom(int n = 128, double extent_mm = 256.0, bool facial_structures = true,
                                 bool vessels = false, bool contrast = false, std::uint64_t seed = 1);

/// Same anatomy on a grid matching a field-of-view format (n^3 voxels over
/// fov_cm); shapes are clipped to the grid.
PhantomSpec head_phantom_for_fov(double fov_cm, int n, bool facial_structures = true, bool vessels = false,
                                 bool contrast = false, std::uint64_t seed = 1);

/// Vessel tubes generated for a spec (deterministic in seed).
std::vector<Tube> vessel_tubes(const PhantomSpec& spec);

/// Attenuation of the analytic model at a point (no anti-aliasing).
double phantom_attenuation(const PhantomSpec& spec, const std::vector<Tube>& tubes, const Vector3d& p);

/// Voxelises the spec with 2x2x2 supersampling per voxel.
Volume generate_phantom(const PhantomSpec& spec);

/// Zeroes voxels outside a cylinder of the given diameter about the y axis
/// through the volume centre, and records the new field of view.
Volume crop_to_fov(const Volume& volume, double fov_diameter_cm);

}  // namespace fluoro
