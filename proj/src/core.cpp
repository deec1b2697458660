#include "fluoro/core.hpp"

#include <string>

namespace fluoro {

Volume::Volume(std::array<int, 3> dims, Vector3d spacing_mm, Vector3d origin_mm, double fov_diameter_cm)
    : dims_(dims), spacing_(spacing_mm), origin_(origin_mm), fov_diameter_cm_(fov_diameter_cm) {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) throw std::invalid_argument("volume dims must be positive");
  data_ = Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(dims[0]) * dims[1] * dims[2]);
  validate();
}

Volume::Volume(std::array<int, 3> dims, Vector3d spacing_mm, Vector3d origin_mm, double fov_diameter_cm,
               Eigen::ArrayXf data)
    : dims_(dims), spacing_(spacing_mm), origin_(origin_mm), fov_diameter_cm_(fov_diameter_cm),
      data_(std::move(data)) {
  validate();
}

Volume Volume::centered(int n, double spacing_mm, double fov_diameter_cm) {
  return centered({n, n, n}, Vector3d::Constant(spacing_mm), fov_diameter_cm);
}

Volume Volume::centered(std::array<int, 3> dims, Vector3d spacing_mm, double fov_diameter_cm) {
  const Vector3d half(0.5 * (dims[0] - 1), 0.5 * (dims[1] - 1), 0.5 * (dims[2] - 1));
  return Volume(dims, spacing_mm, -spacing_mm.cwiseProduct(half), fov_diameter_cm);
}

void Volume::set_fov_diameter_cm(double fov) {
  if (!(fov > 0)) throw std::invalid_argument("fov_diameter_cm must be positive");
  fov_diameter_cm_ = fov;
}

void Volume::validate() const {
  if (dims_[0] <= 0 || dims_[1] <= 0 || dims_[2] <= 0) throw std::invalid_argument("volume dims must be positive");
  if (static_cast<std::size_t>(data_.size()) !=
      static_cast<std::size_t>(dims_[0]) * static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(dims_[2]))
    throw std::invalid_argument("volume data length does not match dims");
  if (!(spacing_.array() > 0).all()) throw std::invalid_argument("volume spacing must be positive");
  if (!(fov_diameter_cm_ > 0)) throw std::invalid_argument("fov_diameter_cm must be positive");
  if (data_.size() > 0 && data_.minCoeff() < 0.0f) throw std::invalid_argument("attenuation must be non-negative");
}

Image2D::Image2D(int nu, int nv, double pitch_mm, double fov_diameter_cm)
    : data_(Eigen::ArrayXXf::Zero(nu, nv)), pitch_mm_(pitch_mm), fov_diameter_cm_(fov_diameter_cm) {
  validate();
}

Image2D::Image2D(Eigen::ArrayXXf data, double pitch_mm, double fov_diameter_cm)
    : data_(std::move(data)), pitch_mm_(pitch_mm), fov_diameter_cm_(fov_diameter_cm) {
  validate();
}

void Image2D::validate() const {
  if (data_.rows() <= 0 || data_.cols() <= 0) throw std::invalid_argument("image dims must be positive");
  if (!(pitch_mm_ > 0)) throw std::invalid_argument("pixel pitch must be positive");
  if (!(fov_diameter_cm_ > 0)) throw std::invalid_argument("fov_diameter_cm must be positive");
}

Image2D downsample(const Image2D& img, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (factor == 1) return img;
  if (img.nu() % factor != 0 || img.nv() % factor != 0)
    throw std::invalid_argument("image dims are not divisible by the downsample factor");
  const int nu = img.nu() / factor;
  const int nv = img.nv() / factor;
  Eigen::ArrayXXf out(nu, nv);
  const double norm = 1.0 / (factor * factor);
  for (int v = 0; v < nv; ++v) {
    for (int u = 0; u < nu; ++u) {
      double acc = 0.0;
      for (int dv = 0; dv < factor; ++dv)
        for (int du = 0; du < factor; ++du) acc += img(u * factor + du, v * factor + dv);
      out(u, v) = static_cast<float>(acc * norm);
    }
  }
  return Image2D(std::move(out), img.pitch_mm() * factor, img.fov_diameter_cm());
}

CArmCamera CArmCamera::with_fov(double fov_diameter_cm, int detector_pixels, double rotation_deg,
                                double angulation_deg) {
  CArmCamera c;
  c.detector_dims = {detector_pixels, detector_pixels};
  c.fov_diameter_cm = fov_diameter_cm;
  c.pixel_pitch_mm = fov_diameter_cm * 10.0 * c.magnification() / detector_pixels;
  c.carm_rotation_deg = rotation_deg;
  c.carm_angulation_deg = angulation_deg;
  return c;
}

Matrix3d CArmCamera::nominal_orientation() const {
  const Eigen::AngleAxisd rot(deg2rad(carm_rotation_deg), Vector3d::UnitY());
  const Eigen::AngleAxisd ang(deg2rad(carm_angulation_deg), Vector3d::UnitX());
  return (ang * rot).toRotationMatrix();
}

Matrix3d CArmCamera::orientation() const {
  return rotation_from_vector(orientation_correction) * nominal_orientation();
}

Vector3d CArmCamera::nominal_source() const {
  return nominal_orientation() * Vector3d(0, 0, -source_to_iso_mm);
}

Vector3d CArmCamera::nominal_detector_center() const {
  return nominal_orientation() * Vector3d(0, 0, source_to_detector_mm - source_to_iso_mm);
}

Vector3d CArmCamera::pixel_position(double u, double v) const {
  const Matrix3d r = orientation();
  const Vector2d c = nominal_principal_point();
  return detector_center() + (u - c.x()) * pixel_pitch_mm * r.col(0) + (v - c.y()) * pixel_pitch_mm * r.col(1);
}

CArmCamera CArmCamera::downsampled(int factor) const {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (detector_dims[0] % factor != 0 || detector_dims[1] % factor != 0)
    throw std::invalid_argument("detector dims are not divisible by the downsample factor");
  CArmCamera c = *this;
  c.detector_dims = {detector_dims[0] / factor, detector_dims[1] / factor};
  c.pixel_pitch_mm = pixel_pitch_mm * factor;
  return c;
}

CArmCamera CArmCamera::nominal() const {
  CArmCamera c = *this;
  c.source_offset_mm.setZero();
  c.detector_offset_mm.setZero();
  c.orientation_correction.setZero();
  return c;
}

void CArmCamera::validate() const {
  if (!(source_to_iso_mm > 0)) throw std::invalid_argument("SOD must be positive");
  if (!(source_to_detector_mm > source_to_iso_mm)) throw std::invalid_argument("SID must exceed SOD");
  if (detector_dims[0] <= 0 || detector_dims[1] <= 0) throw std::invalid_argument("detector dims must be positive");
  if (!(pixel_pitch_mm > 0)) throw std::invalid_argument("pixel pitch must be positive");
  if (!(fov_diameter_cm > 0)) throw std::invalid_argument("fov_diameter_cm must be positive");
}

PlaneSplit decompose_in_plane(const Vector3d& error_translation, const Vector3d& view_axis) {
  const Vector3d n = view_axis.normalized();
  const double along = error_translation.dot(n);
  return {(error_translation - along * n).norm(), std::abs(along)};
}

PlaneSplit decompose_in_plane(const Vector3d& error_translation, const CArmCamera& camera) {
  return decompose_in_plane(error_translation, camera.view_axis());
}

PoseError pose_error(const RigidTransformd& estimated, const RigidTransformd& truth, const Vector3d& iso_center,
                     const Vector3d& view_axis) {
  const RigidTransformd e = compose(invert(estimated), truth);
  const Vector3d d = e(iso_center) - iso_center;
  const PlaneSplit split = decompose_in_plane(d, view_axis);
  PoseError out;
  out.translation_mm = d.norm();
  out.rotation_deg = e.rotation_angle_deg();
  out.in_plane_mm = split.in_plane_mm;
  out.out_of_plane_mm = split.out_of_plane_mm;
  return out;
}

Eigen::Matrix3d camera_intrinsics(const CArmCamera& camera) {
  const Matrix3d r = camera.orientation();
  const Vector3d sd = camera.detector_center() - camera.source_position();
  const double f = sd.dot(r.col(2)) / camera.pixel_pitch_mm;
  const Vector2d c0 = camera.nominal_principal_point();
  Matrix3d k = Matrix3d::Identity();
  k(0, 0) = f;
  k(1, 1) = f;
  k(0, 2) = c0.x() - sd.dot(r.col(0)) / camera.pixel_pitch_mm;
  k(1, 2) = c0.y() - sd.dot(r.col(1)) / camera.pixel_pitch_mm;
  return k;
}

Matrix34d projection_map(const CArmCamera& camera, const RigidTransformd& patient) {
  const Matrix3d rt = camera.orientation().transpose();
  Matrix34d extrinsic;
  extrinsic.leftCols<3>() = rt;
  extrinsic.col(3) = -(rt * camera.source_position());
  return camera_intrinsics(camera) * extrinsic * patient.matrix();
}

Vector2d project_point(const Matrix34d& p, const Vector3d& x) {
  const Vector3d h = p * x.homogeneous();
  return h.hnormalized();
}

Vector3d projection_center(const Matrix34d& p) {
  const Matrix3d m = p.leftCols<3>();
  return -(m.inverse() * p.col(3));
}

}  // namespace fluoro
