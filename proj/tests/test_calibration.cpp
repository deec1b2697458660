#include "fluoro/calibration.hpp"
#include "fluoro/random.hpp"

#include <doctest.h>

#include <cmath>

using namespace fluoro;

namespace {

std::vector<Correspondence> markers(const CArmCamera& cam, double sigma, std::uint64_t seed) {
  return project_markers(dodecahedron_vertices(100.0), cam, {}, sigma, seed);
}

}  // namespace

TEST_SUITE("calibration") {
  TEST_CASE("dodecahedron") {
    const MarkerPhantom d = dodecahedron_vertices(std::sqrt(3.0));
    REQUIRE(d.points.size() == 20);
    bool corner = false;
    for (const auto& p : d.points) {
      CHECK(p.norm() == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
      corner |= (p - Vector3d(1, 1, 1)).norm() < 1e-12;
    }
    CHECK(corner);
    double dmin = 1e9;
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = i + 1; j < 20; ++j) dmin = std::min(dmin, (d.points[i] - d.points[j]).norm());
    int edges = 0;
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = i + 1; j < 20; ++j) edges += (d.points[i] - d.points[j]).norm() < dmin + 1e-9;
    CHECK(edges == 30);
  }

  TEST_CASE("marker projection") {
    const CArmCamera cam = CArmCamera::with_fov(27, 256, 30, 10);
    const auto a = markers(cam, 0.0, 1);
    const auto b = markers(cam, 0.0, 2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].pixel == b[i].pixel);
    const DltResult dlt = estimate_projection_dlt(a);
    CHECK(dlt.rms_residual_px < 1e-9);
    CHECK((dlt.source_mm - cam.source_position()).norm() < 1e-6);
    CHECK((dlt.orientation - cam.orientation()).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("DLT residual matches the noise level") {
    // rms is over 2D point distances; with N = 20 points and 11 parameters
    // E[rms^2] = 2 sigma^2 (2N - 11) / (2N).
    const CArmCamera cam = CArmCamera::with_fov(27, 256, -50, 20);
    const double sigma = 0.5;
    double mean_sq = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const double r = estimate_projection_dlt(markers(cam, sigma, seed)).rms_residual_px;
      mean_sq += r * r / 100.0;
    }
    CHECK(mean_sq == doctest::Approx(2.0 * sigma * sigma * 29.0 / 40.0).epsilon(0.1));
  }

  TEST_CASE("DLT preconditions") {
    const CArmCamera cam = CArmCamera::with_fov(27, 256);
    auto c = markers(cam, 0.0, 0);
    c.resize(5);
    CHECK_THROWS_AS(estimate_projection_dlt(c), std::invalid_argument);
    std::vector<Correspondence> flat;
    const Matrix34d p = projection_map(cam);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const Vector3d x(20.0 * i, 15.0 * j, 0.0);
        flat.push_back({x, project_point(p, x)});
      }
    CHECK_THROWS_AS(estimate_projection_dlt(flat), DegenerateConfigurationError);
  }

  TEST_CASE("DLT is invariant to the choice of world and image frame") {
    // Moving the marker frame rigidly moves the recovered source with it.
    const CArmCamera cam = CArmCamera::with_fov(27, 256, 10, 5);
    const auto c = markers(cam, 0.0, 0);
    const RigidTransformd g = RigidTransformd::from_euler_deg({5, -3, 2}, 3, 4, 5);
    std::vector<Correspondence> moved;
    for (const auto& e : c) moved.push_back({g(e.world), e.pixel});
    const DltResult a = estimate_projection_dlt(c);
    const DltResult b = estimate_projection_dlt(moved);
    CHECK((b.source_mm - g(a.source_mm)).norm() < 1e-6);
    CHECK((a.intrinsics - b.intrinsics).cwiseAbs().maxCoeff() < 1e-6);
    // Reordering the correspondences changes nothing.
    std::vector<Correspondence> reversed(c.rbegin(), c.rend());
    CHECK((estimate_projection_dlt(reversed).projection - a.projection).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("camera recovered from the DLT") {
    CArmCamera cam = CArmCamera::with_fov(27, 256, -60, 25);
    cam = SagModel::default_model().apply(cam);
    const CArmCamera rec = camera_from_dlt(estimate_projection_dlt(markers(cam, 0.0, 0)), cam.nominal());
    CHECK((rec.source_position() - cam.source_position()).norm() < 1e-6);
    CHECK((rec.detector_center() - cam.detector_center()).norm() < 1e-6);
    CHECK((rec.orientation() - cam.orientation()).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("grid nodes and interpolation") {
    const CArmCamera base = CArmCamera::with_fov(27, 256);
    CalibrationOptions opt;
    opt.marker_noise_px = 0.0;
    const SagModel sag = SagModel::default_model();
    const CalibrationGrid grid = build_calibration_grid(sag, GridRange{}, base, opt);
    CHECK(grid.nodes.size() == 11u * 5u);
    const CArmCamera at = interpolate_camera(grid, 20.0, -20.0);
    const CArmCamera& node = grid.node(6, 1);
    CHECK((projection_map(at) - projection_map(node)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(machine_registration_error(grid, sag, 20.0, -20.0).translation_mm < 1e-6);
    CHECK_THROWS_AS(interpolate_camera(grid, 101.0, 0.0), std::out_of_range);
    CHECK_THROWS_AS(interpolate_camera(grid, 0.0, -41.0), std::out_of_range);
  }

  TEST_CASE("bilinear interpolation reproduces a linear sag") {
    SagModel sag;
    sag.source.offset = {0.3, -0.2, 0.1};
    sag.source.lin_rot = {0.01, -0.005, 0.002};
    sag.source.lin_ang = {-0.004, 0.008, 0.0};
    sag.detector.lin_rot = {0.012, 0.0, -0.01};
    sag.detector.lin_ang = {0.0, -0.015, 0.006};
    const CArmCamera base = CArmCamera::with_fov(27, 256);
    CalibrationOptions opt;
    opt.marker_noise_px = 0.0;
    const CalibrationGrid grid = build_calibration_grid(sag, GridRange{}, base, opt);
    for (auto [r, a] : {std::pair{10.0, -30.0}, {-55.0, 5.0}, {87.5, 33.0}}) {
      CArmCamera truth = base;
      truth.carm_rotation_deg = r;
      truth.carm_angulation_deg = a;
      truth = sag.apply(truth);
      const CArmCamera c = interpolate_camera(grid, r, a);
      CHECK((c.source_position() - truth.source_position()).norm() < 1e-9);
      CHECK((c.detector_center() - truth.detector_center()).norm() < 1e-9);
      CHECK((c.orientation() - truth.orientation()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("no sag gives the identity") {
    const CArmCamera base = CArmCamera::with_fov(27, 256);
    CalibrationOptions opt;
    opt.marker_noise_px = 0.0;
    const CalibrationGrid grid = build_calibration_grid(SagModel::none(), GridRange{}, base, opt);
    for (auto [r, a] : {std::pair{13.0, 7.0}, {-91.0, -39.0}}) {
      const RigidTransformd t = machine_register(grid, r, a);
      CHECK(t.translation().norm() < 1e-6);
      CHECK(t.rotation_angle_deg() < 1e-6);
    }
  }

  TEST_CASE("camera alignment makes the nominal camera see the actual image") {
    CArmCamera actual = CArmCamera::with_fov(27, 256, 35, -12);
    actual = SagModel::default_model().apply(actual);
    const RigidTransformd g = camera_alignment(actual);
    // The iso-center lands on the same pixel, up to second-order terms.
    const Vector2d a = project_point(projection_map(actual), Vector3d::Zero());
    const Vector2d b = project_point(projection_map(actual.nominal(), g), Vector3d::Zero());
    CHECK((a - b).norm() * actual.pixel_pitch_mm / actual.magnification() < 0.05);
  }

  TEST_CASE("mid-cell accuracy with noisy markers") {
    const CArmCamera base = CArmCamera::with_fov(27, 256);
    const SagModel sag = SagModel::default_model();
    int below = 0;
    const int draws = 40;
    for (int d = 0; d < draws; ++d) {
      CalibrationOptions opt;
      opt.seed = derive_seed({123, static_cast<std::uint64_t>(d)});
      const CalibrationGrid grid = build_calibration_grid(sag, GridRange{}, base, opt);
      Rng rng(derive_seed({124, static_cast<std::uint64_t>(d)}));
      const double r = rng.uniform(-100, 100), a = rng.uniform(-40, 40);
      below += machine_registration_error(grid, sag, r, a).in_plane_mm < 0.2;
    }
    CHECK(below >= 0.95 * draws);
  }

  TEST_CASE("grid JSON round trip and validation") {
    const CArmCamera base = CArmCamera::with_fov(27, 128);
    GridRange range{-20, 20, -20, 20, 20};
    const CalibrationGrid grid = build_calibration_grid(SagModel::default_model(), range, base);
    const CalibrationGrid back = calibration_grid_from_json(to_json(grid));
    REQUIRE(back.nodes.size() == grid.nodes.size());
    CHECK((projection_map(back.nodes[4]) - projection_map(grid.nodes[4])).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS((GridRange{-100, 100, -40, 40, 0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((GridRange{10, -10, -40, 40, 20}.validate()), std::invalid_argument);
  }
}
