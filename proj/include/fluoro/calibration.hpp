#pragma once

// Machine-based registration: a dodecahedron of lead markers is imaged at
// every node of a 20-degree grid over (rotation, angulation); a projection
// matrix is estimated per node by the direct linear transform and split into
// source position and detector pose. Poses between nodes are interpolated.
//
// The C-arm sag that calibration measures is simulated by SagModel.

#include "fluoro/core.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fluoro {

struct MarkerPhantom {
  std::vector<Vector3d> points;
  double circumradius_mm = 0.0;
};

/// Vertices of a regular dodecahedron centred at the origin.
MarkerPhantom dodecahedron_vertices(double circumradius_mm);

/// Displacement of source and detector with C-arm pose, per world axis:
///   d(rot, ang) = offset + a sin(rot) + b sin(ang) + c sin(rot) cos(ang)
///               + lin_rot * rot + lin_ang * ang
/// with angles in degrees for the linear terms.
struct SagTerms {
  Vector3d offset = Vector3d::Zero();
  Vector3d sin_rot = Vector3d::Zero();
  Vector3d sin_ang = Vector3d::Zero();
  Vector3d sin_rot_cos_ang = Vector3d::Zero();
  Vector3d lin_rot = Vector3d::Zero();
  Vector3d lin_ang = Vector3d::Zero();

  Vector3d operator()(double rotation_deg, double angulation_deg) const;
};

struct SagModel {
  SagTerms source;
  SagTerms detector;

  static SagModel none() { return {}; }
  /// Smooth gravity-like bending with amplitudes of at most 2 mm.
  static SagModel default_model();

  /// Nominal camera with the displacements for its pose applied.
  CArmCamera apply(const CArmCamera& nominal) const;
};

class DegenerateConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Correspondence {
  Vector3d world;
  Vector2d pixel;
};

/// Projects the markers through `camera` for a phantom placed at `pose`,
/// adding N(0, sigma^2) pixel noise per coordinate. Throws if a marker is
/// not in front of the source.
std::vector<Correspondence> project_markers(const MarkerPhantom& phantom, const CArmCamera& camera,
                                            const RigidTransformd& pose, double noise_px_sigma,
                                            std::uint64_t seed);

struct DltResult {
  /// Scaled so that the third row of the left 3x3 block has unit norm and
  /// that block has positive determinant.
  Matrix34d projection;
  Vector3d source_mm;
  Matrix3d intrinsics;  // K with K(2,2) = 1
  Matrix3d orientation;  // columns u, v, view axis in world coordinates
  double rms_residual_px = 0.0;
};

/// Hartley-normalised DLT. Needs at least 6 correspondences that are not
/// coplanar.
DltResult estimate_projection_dlt(const std::vector<Correspondence>& correspondences);

/// Camera with the pose of the DLT result. rotation/angulation are the
/// nominal angles; the measured differences go into the correction fields.
/// Pixel pitch and detector size are taken from `reference`.
CArmCamera camera_from_dlt(const DltResult& dlt, const CArmCamera& reference);

struct GridRange {
  double rotation_min_deg = -100.0;
  double rotation_max_deg = 100.0;
  double angulation_min_deg = -40.0;
  double angulation_max_deg = 40.0;
  double spacing_deg = 20.0;

  int rotation_nodes() const;
  int angulation_nodes() const;
  void validate() const;
};

struct CalibrationOptions {
  double marker_circumradius_mm = 100.0;
  double marker_noise_px = 0.25;
  std::uint64_t seed = 0;
};

struct CalibrationGrid {
  GridRange range;
  /// Nominal geometry shared by all nodes.
  CArmCamera base;
  /// Row-major over (angulation, rotation): node (i_rot, i_ang) at
  /// i_ang * rotation_nodes + i_rot.
  std::vector<CArmCamera> nodes;

  const CArmCamera& node(int i_rot, int i_ang) const;
};

/// Simulates a marker acquisition with the sagged camera at every node and
/// stores the DLT estimate.
CalibrationGrid build_calibration_grid(const SagModel& sag, const GridRange& range, const CArmCamera& base,
                                       const CalibrationOptions& options = {});

/// Bilinear interpolation of the node corrections (source offset, detector
/// offset, orientation rotation vector). Throws std::out_of_range outside
/// the grid.
CArmCamera interpolate_camera(const CalibrationGrid& grid, double rotation_deg, double angulation_deg);

/// Patient transform that makes the nominal camera see what `actual` sees,
/// to first order at the iso-center: the inverse of the rigid motion taking
/// the nominal source/detector assembly to the actual one. The translation
/// is the displacement of the ray through the iso-center.
RigidTransformd camera_alignment(const CArmCamera& actual);

/// Machine-based initial pose for the given C-arm angles.
RigidTransformd machine_register(const CalibrationGrid& grid, double rotation_deg, double angulation_deg);

/// Error of the machine-based pose against the pose implied by the true
/// (sagged) camera, measured at the iso-center. The in-plane component is
/// what an overlay shows.
PoseError machine_registration_error(const CalibrationGrid& grid, const SagModel& sag, double rotation_deg,
                                     double angulation_deg);

nlohmann::json to_json(const CalibrationGrid& grid);
CalibrationGrid calibration_grid_from_json(const nlohmann::json& j);

}  // namespace fluoro
