#pragma once

// Domain types shared by every module: volumes, projection images, rigid
// transforms, the C-arm cone-beam camera and registration error metrics.
//
// World frame: the iso-center sits at the origin. With rotation and
// angulation at zero the X-ray source is at (0, 0, -SOD), the viewing axis
// is +z and the detector u/v axes run along +x/+y.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fluoro {

using Vector2d = Eigen::Vector2d;
using Vector3d = Eigen::Vector3d;
using Matrix3d = Eigen::Matrix3d;
using Matrix4d = Eigen::Matrix4d;
using Matrix34d = Eigen::Matrix<double, 3, 4>;

template <typename Scalar>
constexpr Scalar deg2rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

template <typename Scalar>
constexpr Scalar rad2deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

/// Rotation about the fixed x, then y, then z axis (extrinsic x-y-z), angles
/// in degrees. This is the parameterization used for search increments.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> euler_xyz_deg(Scalar rx, Scalar ry, Scalar rz) {
  using AA = Eigen::AngleAxis<Scalar>;
  using V3 = Eigen::Matrix<Scalar, 3, 1>;
  return (AA(deg2rad(rz), V3::UnitZ()) * AA(deg2rad(ry), V3::UnitY()) *
          AA(deg2rad(rx), V3::UnitX()))
      .toRotationMatrix();
}

/// Rotation from a rotation vector (axis * angle, radians).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_from_vector(const Eigen::Matrix<Scalar, 3, 1>& w) {
  const Scalar angle = w.norm();
  if (angle == Scalar(0)) return Eigen::Matrix<Scalar, 3, 3>::Identity();
  return Eigen::AngleAxis<Scalar>(angle, w / angle).toRotationMatrix();
}

/// Inverse of rotation_from_vector for angles below pi.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> rotation_to_vector(const Eigen::Matrix<Scalar, 3, 3>& r) {
  const Eigen::AngleAxis<Scalar> aa(r);
  return aa.axis() * aa.angle();
}

/// Rigid body transform x -> R x + t (millimetres).
template <typename Scalar>
class RigidTransform {
 public:
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;

  RigidTransform() : rotation_(Matrix3::Identity()), translation_(Vector3::Zero()) {}
  RigidTransform(const Matrix3& rotation, const Vector3& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vector3& t) { return {Matrix3::Identity(), t}; }
  static RigidTransform from_rotation(const Matrix3& r) { return {r, Vector3::Zero()}; }

  /// Rotation by extrinsic x-y-z Euler angles (degrees) about the origin,
  /// followed by translation t.
  static RigidTransform from_euler_deg(const Vector3& t, Scalar rx, Scalar ry, Scalar rz) {
    return {euler_xyz_deg(rx, ry, rz), t};
  }

  const Matrix3& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Vector3 operator()(const Vector3& p) const { return rotation_ * p + translation_; }

  Matrix4 matrix() const {
    Matrix4 m = Matrix4::Identity();
    m.template topLeftCorner<3, 3>() = rotation_;
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

  /// Applies `rhs` first, then `*this`.
  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
  }

  RigidTransform inverse() const {
    const Matrix3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }

  /// Geodesic angle of the rotation part in degrees.
  Scalar rotation_angle_deg() const {
    const Eigen::Quaternion<Scalar> q(rotation_);
    return rad2deg(Scalar(2) * std::atan2(q.vec().norm(), std::abs(q.w())));
  }

  template <typename Other>
  RigidTransform<Other> cast() const {
    return {rotation_.template cast<Other>(), translation_.template cast<Other>()};
  }

  /// Largest deviation of RᵀR from identity and of det(R) from +1.
  Scalar orthonormality_error() const {
    const Scalar ortho = (rotation_.transpose() * rotation_ - Matrix3::Identity()).cwiseAbs().maxCoeff();
    return std::max(ortho, std::abs(rotation_.determinant() - Scalar(1)));
  }

 private:
  Matrix3 rotation_;
  Vector3 translation_;
};

using RigidTransformd = RigidTransform<double>;

template <typename Scalar>
RigidTransform<Scalar> compose(const RigidTransform<Scalar>& a, const RigidTransform<Scalar>& b) {
  return a * b;
}

template <typename Scalar>
RigidTransform<Scalar> invert(const RigidTransform<Scalar>& t) {
  return t.inverse();
}

/// 3D voxel grid of linear attenuation (1/cm). Voxel (i,j,k) has its centre
/// at origin + (i,j,k) * spacing; storage is x-fastest.
class Volume {
 public:
  Volume() = default;
  Volume(std::array<int, 3> dims, Vector3d spacing_mm, Vector3d origin_mm, double fov_diameter_cm);
  Volume(std::array<int, 3> dims, Vector3d spacing_mm, Vector3d origin_mm, double fov_diameter_cm,
         Eigen::ArrayXf data);

  /// Cube of n^3 voxels centred on the iso-center.
  static Volume centered(int n, double spacing_mm, double fov_diameter_cm);
  static Volume centered(std::array<int, 3> dims, Vector3d spacing_mm, double fov_diameter_cm);

  const std::array<int, 3>& dims() const { return dims_; }
  const Vector3d& spacing() const { return spacing_; }
  const Vector3d& origin() const { return origin_; }
  double fov_diameter_cm() const { return fov_diameter_cm_; }
  void set_fov_diameter_cm(double fov);

  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
  }
  float& at(int i, int j, int k) { return data_[static_cast<Eigen::Index>(index(i, j, k))]; }
  float at(int i, int j, int k) const { return data_[static_cast<Eigen::Index>(index(i, j, k))]; }

  Eigen::ArrayXf& data() { return data_; }
  const Eigen::ArrayXf& data() const { return data_; }

  Vector3d voxel_center(int i, int j, int k) const {
    return origin_ + spacing_.cwiseProduct(Vector3d(i, j, k));
  }
  /// Physical extent [min, max] of the voxel boxes (not the centres).
  Vector3d box_min() const { return origin_ - 0.5 * spacing_; }
  Vector3d box_max() const {
    return origin_ + spacing_.cwiseProduct(Vector3d(dims_[0] - 0.5, dims_[1] - 0.5, dims_[2] - 0.5));
  }
  double voxel_volume_mm3() const { return spacing_.prod(); }

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  Vector3d spacing_ = Vector3d::Ones();
  Vector3d origin_ = Vector3d::Zero();
  double fov_diameter_cm_ = 1.0;
  Eigen::ArrayXf data_;
};

/// 2D projection image; pixel (u, v) stored at data(u, v), u-fastest.
class Image2D {
 public:
  Image2D() = default;
  Image2D(int nu, int nv, double pitch_mm, double fov_diameter_cm);
  Image2D(Eigen::ArrayXXf data, double pitch_mm, double fov_diameter_cm);

  int nu() const { return static_cast<int>(data_.rows()); }
  int nv() const { return static_cast<int>(data_.cols()); }
  double pitch_mm() const { return pitch_mm_; }
  double fov_diameter_cm() const { return fov_diameter_cm_; }

  float& operator()(int u, int v) { return data_(u, v); }
  float operator()(int u, int v) const { return data_(u, v); }

  Eigen::ArrayXXf& data() { return data_; }
  const Eigen::ArrayXXf& data() const { return data_; }

  void validate() const;

 private:
  Eigen::ArrayXXf data_;
  double pitch_mm_ = 1.0;
  double fov_diameter_cm_ = 1.0;
};

/// Averages non-overlapping factor x factor blocks. Dimensions must divide.
Image2D downsample(const Image2D& img, int factor);

/// Cone-beam C-arm acquisition geometry.
///
/// The nominal pose is given by rotation (propeller, about world y) followed
/// by angulation (about world x), both about the iso-center. The correction
/// fields carry what calibration measures on top of the nominal pose:
/// displacements of source and detector centre, and a small rotation of the
/// detector frame.
struct CArmCamera {
  double source_to_iso_mm = 810.0;
  double source_to_detector_mm = 1195.0;
  std::array<int, 2> detector_dims{256, 256};
  double pixel_pitch_mm = 1.0;
  double carm_rotation_deg = 0.0;
  double carm_angulation_deg = 0.0;
  double fov_diameter_cm = 22.0;

  Vector3d source_offset_mm = Vector3d::Zero();
  Vector3d detector_offset_mm = Vector3d::Zero();
  Vector3d orientation_correction = Vector3d::Zero();  // rotation vector, radians

  /// Default geometry with the pitch chosen so that the field of view
  /// (measured at the iso-center plane) spans the detector.
  static CArmCamera with_fov(double fov_diameter_cm, int detector_pixels,
                             double rotation_deg = 0.0, double angulation_deg = 0.0);

  double magnification() const { return source_to_detector_mm / source_to_iso_mm; }

  /// Columns: detector u axis, detector v axis, viewing axis (source to detector).
  Matrix3d nominal_orientation() const;
  Matrix3d orientation() const;
  Vector3d u_axis() const { return orientation().col(0); }
  Vector3d v_axis() const { return orientation().col(1); }
  Vector3d view_axis() const { return orientation().col(2); }

  Vector3d nominal_source() const;
  Vector3d nominal_detector_center() const;
  Vector3d source_position() const { return nominal_source() + source_offset_mm; }
  Vector3d detector_center() const { return nominal_detector_center() + detector_offset_mm; }

  /// Principal point in pixel units when the detector is centred on the
  /// principal ray.
  Vector2d nominal_principal_point() const {
    return {0.5 * (detector_dims[0] - 1), 0.5 * (detector_dims[1] - 1)};
  }

  /// World position of the centre of pixel (u, v) (fractional allowed).
  Vector3d pixel_position(double u, double v) const;

  /// Same geometry rendered at dims / factor with pitch * factor. Pixel k of
  /// the result is centred on the block of original pixels it covers.
  CArmCamera downsampled(int factor) const;

  /// Copy without calibration corrections.
  CArmCamera nominal() const;

  void validate() const;
};

/// Residual registration error measured at the iso-center.
struct PoseError {
  double translation_mm = 0.0;
  double rotation_deg = 0.0;
  double in_plane_mm = 0.0;
  double out_of_plane_mm = 0.0;
};

/// Error transform E = estimated^-1 * truth evaluated at `iso_center`.
/// In/out-of-plane split is taken against `view_axis`.
PoseError pose_error(const RigidTransformd& estimated, const RigidTransformd& truth,
                     const Vector3d& iso_center = Vector3d::Zero(),
                     const Vector3d& view_axis = Vector3d::UnitZ());

struct PlaneSplit {
  double in_plane_mm = 0.0;
  double out_of_plane_mm = 0.0;
};

PlaneSplit decompose_in_plane(const Vector3d& error_translation, const Vector3d& view_axis);
PlaneSplit decompose_in_plane(const Vector3d& error_translation, const CArmCamera& camera);

/// Intrinsic matrix K (pixels) of the camera.
Eigen::Matrix3d camera_intrinsics(const CArmCamera& camera);

/// 3x4 matrix mapping homogeneous patient-frame points (mm) to homogeneous
/// detector pixel coordinates: K [Rᵀ | -Rᵀ s] * patient.
Matrix34d projection_map(const CArmCamera& camera, const RigidTransformd& patient = {});

/// Dehomogenised projection of a single point.
Vector2d project_point(const Matrix34d& p, const Vector3d& x);

/// Source position recovered as the right null vector of a projection matrix.
Vector3d projection_center(const Matrix34d& p);

}  // namespace fluoro
