#include "fluoro/calibration.hpp"

#include "fluoro/io.hpp"
#include "fluoro/parallel.hpp"
#include "fluoro/random.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>

namespace fluoro {

MarkerPhantom dodecahedron_vertices(double circumradius_mm) {
  if (!(circumradius_mm > 0)) throw std::invalid_argument("circumradius must be positive");
  const double phi = std::numbers::phi;
  const double iphi = 1.0 / phi;
  std::vector<Vector3d> pts;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) pts.emplace_back(sx, sy, sz);
  for (int a : {-1, 1})
    for (int b : {-1, 1}) {
      pts.emplace_back(0.0, a * iphi, b * phi);
      pts.emplace_back(a * iphi, b * phi, 0.0);
      pts.emplace_back(a * phi, 0.0, b * iphi);
    }
  // Canonical coordinates have circumradius sqrt(3).
  const double scale = circumradius_mm / std::sqrt(3.0);
  for (auto& p : pts) p *= scale;
  return {std::move(pts), circumradius_mm};
}

Vector3d SagTerms::operator()(double rotation_deg, double angulation_deg) const {
  const double sr = std::sin(deg2rad(rotation_deg));
  const double sa = std::sin(deg2rad(angulation_deg));
  const double ca = std::cos(deg2rad(angulation_deg));
  return offset + sin_rot * sr + sin_ang * sa + sin_rot_cos_ang * (sr * ca) + lin_rot * rotation_deg +
         lin_ang * angulation_deg;
}

SagModel SagModel::default_model() {
  SagModel m;
  // The heavier detector bends more than the source.
  m.source.sin_rot = Vector3d(0.0, -0.8, 0.3);
  m.source.sin_ang = Vector3d(0.2, 0.0, -0.6);
  m.source.sin_rot_cos_ang = Vector3d(0.4, 0.3, 0.0);
  m.detector.sin_rot = Vector3d(0.5, -2.0, 0.0);
  m.detector.sin_ang = Vector3d(0.0, 0.6, 1.5);
  m.detector.sin_rot_cos_ang = Vector3d(1.0, -0.7, 0.4);
  return m;
}

CArmCamera SagModel::apply(const CArmCamera& nominal) const {
  CArmCamera c = nominal;
  c.source_offset_mm += source(c.carm_rotation_deg, c.carm_angulation_deg);
  c.detector_offset_mm += detector(c.carm_rotation_deg, c.carm_angulation_deg);
  return c;
}

std::vector<Correspondence> project_markers(const MarkerPhantom& phantom, const CArmCamera& camera,
                                            const RigidTransformd& pose, double noise_px_sigma,
                                            std::uint64_t seed) {
  if (noise_px_sigma < 0) throw std::invalid_argument("marker noise must be non-negative");
  const Matrix34d p = projection_map(camera);
  const Vector3d view = camera.view_axis();
  const Vector3d src = camera.source_position();
  Rng rng(seed);
  std::vector<Correspondence> out;
  out.reserve(phantom.points.size());
  for (const auto& m : phantom.points) {
    const Vector3d x = pose(m);
    if ((x - src).dot(view) <= 0) throw std::invalid_argument("marker lies behind the X-ray source");
    Vector2d px = project_point(p, x);
    if (noise_px_sigma > 0) {
      px.x() += rng.normal(0.0, noise_px_sigma);
      px.y() += rng.normal(0.0, noise_px_sigma);
    }
    out.push_back({x, px});
  }
  return out;
}

namespace {

template <int D>
Eigen::Matrix<double, D + 1, D + 1> normalizing_transform(const std::vector<Eigen::Matrix<double, D, 1>>& pts) {
  Eigen::Matrix<double, D, 1> c = Eigen::Matrix<double, D, 1>::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0)) throw DegenerateConfigurationError("DLT: all points coincide");
  const double s = std::sqrt(static_cast<double>(D)) / mean_dist;
  Eigen::Matrix<double, D + 1, D + 1> t = Eigen::Matrix<double, D + 1, D + 1>::Identity();
  t.template topLeftCorner<D, D>() *= s;
  t.template topRightCorner<D, 1>() = -s * c;
  return t;
}

// M = K Q with K upper triangular (positive diagonal) and Q orthonormal.
void rq_decompose(const Matrix3d& m, Matrix3d& k, Matrix3d& q) {
  Matrix3d j = Matrix3d::Zero();
  j(0, 2) = j(1, 1) = j(2, 0) = 1.0;
  const Eigen::HouseholderQR<Matrix3d> qr((j * m).transpose());
  const Matrix3d qt = qr.householderQ();
  const Matrix3d rt = qr.matrixQR().triangularView<Eigen::Upper>();
  k = j * rt.transpose() * j;
  q = j * qt.transpose();
  for (int i = 0; i < 3; ++i) {
    if (k(i, i) < 0) {
      k.col(i) *= -1.0;
      q.row(i) *= -1.0;
    }
  }
}

}  // namespace

DltResult estimate_projection_dlt(const std::vector<Correspondence>& correspondences) {
  const std::size_t n = correspondences.size();
  if (n < 6) throw std::invalid_argument("DLT needs at least 6 correspondences");
  std::vector<Vector3d> world;
  std::vector<Vector2d> pixel;
  for (const auto& c : correspondences) {
    world.push_back(c.world);
    pixel.push_back(c.pixel);
  }

  // Coplanar or collinear marker sets do not determine P.
  {
    Vector3d c = Vector3d::Zero();
    for (const auto& w : world) c += w;
    c /= static_cast<double>(n);
    Eigen::MatrixXd centered(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) centered.row(static_cast<Eigen::Index>(i)) = (world[i] - c).transpose();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const auto sv = svd.singularValues();
    if (!(sv[0] > 0) || sv[2] < 1e-6 * sv[0]) throw DegenerateConfigurationError("DLT: marker points are coplanar");
  }

  const Eigen::Matrix4d t3 = normalizing_transform<3>(world);
  const Eigen::Matrix3d t2 = normalizing_transform<2>(pixel);

  Eigen::MatrixXd a(static_cast<Eigen::Index>(2 * n), 12);
  a.setZero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector4d x = t3 * world[i].homogeneous();
    const Vector3d u = t2 * pixel[i].homogeneous();
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.block<1, 4>(r, 0) = x.transpose();
    a.block<1, 4>(r, 8) = -u.x() / u.z() * x.transpose();
    a.block<1, 4>(r + 1, 4) = x.transpose();
    a.block<1, 4>(r + 1, 8) = -u.y() / u.z() * x.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(11);
  Matrix34d pn;
  pn.row(0) = h.segment<4>(0).transpose();
  pn.row(1) = h.segment<4>(4).transpose();
  pn.row(2) = h.segment<4>(8).transpose();

  Matrix34d p = t2.inverse() * pn * t3;
  Matrix3d m = p.leftCols<3>();
  if (m.determinant() < 0) p = -p;
  p /= p.block<1, 3>(2, 0).norm();

  DltResult out;
  out.projection = p;
  out.source_mm = projection_center(p);
  Matrix3d k, q;
  rq_decompose(p.leftCols<3>(), k, q);
  out.intrinsics = k / k(2, 2);
  out.orientation = q.transpose();

  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) ss += (project_point(p, world[i]) - pixel[i]).squaredNorm();
  out.rms_residual_px = std::sqrt(ss / static_cast<double>(n));
  return out;
}

CArmCamera camera_from_dlt(const DltResult& dlt, const CArmCamera& reference) {
  CArmCamera c = reference.nominal();
  const Matrix3d r = dlt.orientation;
  c.orientation_correction = rotation_to_vector(Matrix3d(r * c.nominal_orientation().transpose()));
  c.source_offset_mm = dlt.source_mm - c.nominal_source();
  const Vector2d c0 = c.nominal_principal_point();
  const double f = 0.5 * (dlt.intrinsics(0, 0) + dlt.intrinsics(1, 1));
  const Vector3d sd_local((c0.x() - dlt.intrinsics(0, 2)) * c.pixel_pitch_mm,
                          (c0.y() - dlt.intrinsics(1, 2)) * c.pixel_pitch_mm, f * c.pixel_pitch_mm);
  c.detector_offset_mm = dlt.source_mm + r * sd_local - c.nominal_detector_center();
  return c;
}

int GridRange::rotation_nodes() const {
  return static_cast<int>(std::lround((rotation_max_deg - rotation_min_deg) / spacing_deg)) + 1;
}

int GridRange::angulation_nodes() const {
  return static_cast<int>(std::lround((angulation_max_deg - angulation_min_deg) / spacing_deg)) + 1;
}

void GridRange::validate() const {
  if (!(spacing_deg > 0)) throw std::invalid_argument("grid spacing must be positive");
  if (!(rotation_max_deg > rotation_min_deg) || !(angulation_max_deg > angulation_min_deg))
    throw std::invalid_argument("grid range must be non-empty");
  auto whole = [&](double span) {
    const double k = span / spacing_deg;
    return std::abs(k - std::round(k)) < 1e-9;
  };
  if (!whole(rotation_max_deg - rotation_min_deg) || !whole(angulation_max_deg - angulation_min_deg))
    throw std::invalid_argument("grid range must be a whole number of spacings");
}

const CArmCamera& CalibrationGrid::node(int i_rot, int i_ang) const {
  return nodes.at(static_cast<std::size_t>(i_ang * range.rotation_nodes() + i_rot));
}

CalibrationGrid build_calibration_grid(const SagModel& sag, const GridRange& range, const CArmCamera& base,
                                       const CalibrationOptions& options) {
  range.validate();
  base.validate();
  CalibrationGrid grid;
  grid.range = range;
  grid.base = base.nominal();
  const int nr = range.rotation_nodes();
  const int na = range.angulation_nodes();
  grid.nodes.resize(static_cast<std::size_t>(nr * na));
  const MarkerPhantom markers = dodecahedron_vertices(options.marker_circumradius_mm);
  parallel_for(grid.nodes.size(), [&](std::size_t idx) {
    const int i_rot = static_cast<int>(idx) % nr;
    const int i_ang = static_cast<int>(idx) / nr;
    CArmCamera nominal = grid.base;
    nominal.carm_rotation_deg = range.rotation_min_deg + i_rot * range.spacing_deg;
    nominal.carm_angulation_deg = range.angulation_min_deg + i_ang * range.spacing_deg;
    const CArmCamera actual = sag.apply(nominal);
    const auto obs = project_markers(markers, actual, RigidTransformd(), options.marker_noise_px,
                                     derive_seed({options.seed, static_cast<std::uint64_t>(idx)}));
    grid.nodes[idx] = camera_from_dlt(estimate_projection_dlt(obs), nominal);
  });
  return grid;
}

CArmCamera interpolate_camera(const CalibrationGrid& grid, double rotation_deg, double angulation_deg) {
  const GridRange& r = grid.range;
  const double tol = 1e-9;
  if (rotation_deg < r.rotation_min_deg - tol || rotation_deg > r.rotation_max_deg + tol ||
      angulation_deg < r.angulation_min_deg - tol || angulation_deg > r.angulation_max_deg + tol)
    throw std::out_of_range("requested C-arm angles lie outside the calibration grid");
  const int nr = r.rotation_nodes();
  const int na = r.angulation_nodes();
  const double fr = std::clamp((rotation_deg - r.rotation_min_deg) / r.spacing_deg, 0.0, nr - 1.0);
  const double fa = std::clamp((angulation_deg - r.angulation_min_deg) / r.spacing_deg, 0.0, na - 1.0);
  const int i0 = std::min(static_cast<int>(fr), nr - 2);
  const int j0 = std::min(static_cast<int>(fa), na - 2);
  const double wr = fr - i0;
  const double wa = fa - j0;

  CArmCamera c = grid.base;
  c.carm_rotation_deg = rotation_deg;
  c.carm_angulation_deg = angulation_deg;
  const double w[4] = {(1 - wr) * (1 - wa), wr * (1 - wa), (1 - wr) * wa, wr * wa};
  const CArmCamera* n[4] = {&grid.node(i0, j0), &grid.node(i0 + 1, j0), &grid.node(i0, j0 + 1),
                            &grid.node(i0 + 1, j0 + 1)};
  for (int k = 0; k < 4; ++k) {
    c.source_offset_mm += w[k] * n[k]->source_offset_mm;
    c.detector_offset_mm += w[k] * n[k]->detector_offset_mm;
    c.orientation_correction += w[k] * n[k]->orientation_correction;
  }
  return c;
}

RigidTransformd camera_alignment(const CArmCamera& actual) {
  const CArmCamera nominal = actual.nominal();
  const Matrix3d rg = actual.orientation() * nominal.orientation().transpose();
  const double ws = (actual.source_to_detector_mm - actual.source_to_iso_mm) / actual.source_to_detector_mm;
  const double wd = actual.source_to_iso_mm / actual.source_to_detector_mm;
  const Vector3d t = ws * (actual.source_position() - rg * nominal.source_position()) +
                     wd * (actual.detector_center() - rg * nominal.detector_center());
  return RigidTransformd(rg, t).inverse();
}

RigidTransformd machine_register(const CalibrationGrid& grid, double rotation_deg, double angulation_deg) {
  return camera_alignment(interpolate_camera(grid, rotation_deg, angulation_deg));
}

PoseError machine_registration_error(const CalibrationGrid& grid, const SagModel& sag, double rotation_deg,
                                     double angulation_deg) {
  CArmCamera actual = grid.base;
  actual.carm_rotation_deg = rotation_deg;
  actual.carm_angulation_deg = angulation_deg;
  actual = sag.apply(actual);
  return pose_error(machine_register(grid, rotation_deg, angulation_deg), camera_alignment(actual), Vector3d::Zero(),
                    actual.view_axis());
}

nlohmann::json to_json(const CalibrationGrid& grid) {
  nlohmann::json j;
  j["range"] = {{"rotation_min_deg", grid.range.rotation_min_deg},
                {"rotation_max_deg", grid.range.rotation_max_deg},
                {"angulation_min_deg", grid.range.angulation_min_deg},
                {"angulation_max_deg", grid.range.angulation_max_deg},
                {"spacing_deg", grid.range.spacing_deg}};
  j["base"] = to_json(grid.base);
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : grid.nodes) j["nodes"].push_back(to_json(n));
  return j;
}

CalibrationGrid calibration_grid_from_json(const nlohmann::json& j) {
  try {
    CalibrationGrid g;
    const auto& r = j.at("range");
    g.range.rotation_min_deg = r.at("rotation_min_deg").get<double>();
    g.range.rotation_max_deg = r.at("rotation_max_deg").get<double>();
    g.range.angulation_min_deg = r.at("angulation_min_deg").get<double>();
    g.range.angulation_max_deg = r.at("angulation_max_deg").get<double>();
    g.range.spacing_deg = r.at("spacing_deg").get<double>();
    g.range.validate();
    g.base = camera_from_json(j.at("base"));
    for (const auto& n : j.at("nodes")) g.nodes.push_back(camera_from_json(n));
    if (g.nodes.size() != static_cast<std::size_t>(g.range.rotation_nodes() * g.range.angulation_nodes()))
      throw IoError(IoError::Kind::SizeMismatch, "calibration grid: node count does not match the range");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::MalformedHeader, std::string("calibration grid: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(IoError::Kind::MalformedHeader, std::string("calibration grid: ") + e.what());
  }
}

}  // namespace fluoro
