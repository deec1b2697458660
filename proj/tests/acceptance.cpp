// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `fluoro_acceptance 4 8` runs a subset. Experiment rows
// are kept in acceptance_results/ under the working directory.

#include "fluoro/anneal.hpp"
#include "fluoro/calibration.hpp"
#include "fluoro/harness.hpp"
#include "fluoro/io.hpp"
#include "fluoro/parallel.hpp"
#include "fluoro/phantom.hpp"
#include "fluoro/projector.hpp"
#include "fluoro/random.hpp"
#include "fluoro/recon.hpp"
#include "fluoro/registration.hpp"
#include "fluoro/similarity.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

using namespace fluoro;

namespace {

// Pinned tolerances.
constexpr double kMatrixSuccess = 0.90;
constexpr double kSuccessMeanResidualMm = 0.5;
constexpr double kParityPoints = 0.10;
constexpr double kClinicalPass = 0.75;
constexpr int kClinicalMinTrials = 200;
constexpr double kCalibErrorMm = 0.2;
constexpr double kCalibFraction = 0.95;
constexpr int kCalibDraws = 200;
constexpr int kOffsetDraws = 100000;
constexpr double kOffsetTolMm = 0.1;
constexpr double kOffsetTolDeg = 0.05;
constexpr double kDrrRelRms = 0.01;
constexpr int kDrrPairs = 20;
constexpr double kChordRel = 0.01;
constexpr int kLandscapeSteps = 33;
constexpr double kLandscapeRangeMm = 15.0;
constexpr double kLandscapeSeconds = 120.0;
constexpr double kSphereCenterRel = 0.15;
constexpr double kSphereExteriorRel = 0.10;
constexpr double kSphereNcc = 0.9;
constexpr double kAlgebraTol = 1e-9;
constexpr double kRampDcRel = 1e-3;
constexpr double kLinearityRel = 1e-6;

constexpr std::uint64_t kSeed = 20240601;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rate(const std::vector<ResultRow>& rows, const std::function<bool(const ResultRow&)>& in,
            const std::function<bool(const ResultRow&)>& ok, long* n = nullptr) {
  long total = 0, good = 0;
  for (const auto& r : rows)
    if (in(r)) {
      ++total;
      good += ok(r);
    }
  if (n) *n = total;
  return total ? static_cast<double>(good) / total : 0.0;
}

void keep_rows(const std::vector<ResultRow>& rows, const std::string& name) {
  std::filesystem::create_directories("acceptance_results");
  write_text(results_csv(rows), std::filesystem::path("acceptance_results") / name);
}

// ---- criteria 1-3 -----------------------------------------------------------

struct MatrixRuns {
  std::vector<ResultRow> exposure;
  std::vector<ResultRow> fluoroscopy;
  double seconds = 0.0;
};

const MatrixRuns& matrix_runs() {
  static const MatrixRuns runs = [] {
    const auto t0 = std::chrono::steady_clock::now();
    MatrixRuns m;
    PhantomMatrixPlan p;
    p.trials_per_cell = 1;
    p.seed = kSeed;
    p.run_types = {RunType::Exposure};
    long done = 0;
    const auto progress = [&](const ResultRow&) {
      if (++done % 32 == 0) std::cerr << "  matrix: " << done << " trials, " << elapsed_s(t0) << " s\n";
    };
    m.exposure = run_phantom_matrix(p, progress);
    // Parity only concerns the clinically relevant cells, all of which lie
    // in the 22..48 cm block.
    p.run_types = {RunType::Fluoroscopy};
    p.volume_fovs_cm = {22, 27, 31, 37, 42, 48};
    p.image_fovs_cm = p.volume_fovs_cm;
    m.fluoroscopy = run_phantom_matrix(p, progress);
    m.seconds = elapsed_s(t0);
    keep_rows(m.exposure, "matrix_exposure.csv");
    keep_rows(m.fluoroscopy, "matrix_fluoroscopy.csv");
    return m;
  }();
  return runs;
}

bool relevant(const ResultRow& r) { return r.clinically_relevant; }
bool success(const ResultRow& r) { return r.passed.both; }

Verdict criterion1() {
  const auto& m = matrix_runs();
  long n = 0;
  const double r = rate(m.exposure, relevant, success, &n);
  long n_all = 0;
  const double r_all = rate(m.exposure, [](const ResultRow&) { return true; }, success, &n_all);
  return {r >= kMatrixSuccess && n == 84,
          fmt("relevant success %.3f over %ld trials (need >= %.2f); all cells %.3f over %ld; matrix time %.0f s",
              r, n, kMatrixSuccess, r_all, n_all, m.seconds)};
}

Verdict criterion2() {
  const auto& m = matrix_runs();
  std::vector<double> t;
  for (const auto& r : m.exposure)
    if (relevant(r) && success(r)) t.push_back(r.error.translation_mm);
  if (t.empty()) return {false, "no successful relevant trials"};
  const Moments mo = moments(t);
  return {mo.mean <= kSuccessMeanResidualMm,
          fmt("mean translation residual %.3f mm (sd %.3f, n %ld), need <= %.2f", mo.mean, mo.stddev, mo.count,
              kSuccessMeanResidualMm)};
}

Verdict criterion3() {
  const auto& m = matrix_runs();
  long ne = 0, nf = 0;
  const double re = rate(m.exposure, relevant, success, &ne);
  const double rf = rate(m.fluoroscopy, relevant, success, &nf);
  return {std::abs(re - rf) <= kParityPoints && ne == nf,
          fmt("exposure %.3f (n %ld) vs fluoroscopy %.3f (n %ld), difference %.3f, need <= %.2f", re, ne, rf, nf,
              std::abs(re - rf), kParityPoints)};
}

// ---- criterion 4 ------------------------------------------------------------

Verdict criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  ClinicalPlan p;
  p.seed = kSeed;
  long done = 0;
  const auto rows = run_clinical_style(p, [&](const ResultRow&) {
    if (++done % 25 == 0) std::cerr << "  clinical: " << done << " trials, " << elapsed_s(t0) << " s\n";
  });
  keep_rows(rows, "clinical.csv");
  const auto all = [](const ResultRow&) { return true; };
  const auto tpass = [](const ResultRow& r) { return r.passed.translation; };
  long n = 0, n_on = 0, n_off = 0;
  const double r = rate(rows, all, tpass, &n);
  const double on = rate(rows, [](const ResultRow& x) { return x.contrast; }, tpass, &n_on);
  const double off = rate(rows, [](const ResultRow& x) { return !x.contrast; }, tpass, &n_off);
  const double both = rate(rows, all, success);
  return {n >= kClinicalMinTrials && r >= kClinicalPass && on >= off && n_on > 0 && n_off > 0,
          fmt("in-plane translation pass %.3f over %ld trials (need >= %.2f); contrast on %.3f vs off %.3f; "
              "both criteria %.3f; %.0f s",
              r, n, kClinicalPass, on, off, both, elapsed_s(t0))};
}

// ---- criterion 5 ------------------------------------------------------------

Verdict criterion5() {
  const CArmCamera base = CArmCamera::with_fov(27, 256);
  const SagModel sag = SagModel::default_model();
  const GridRange range;
  int below = 0;
  double worst = 0.0;
  for (int d = 0; d < kCalibDraws; ++d) {
    CalibrationOptions opt;
    opt.marker_noise_px = 0.25;
    opt.seed = derive_seed({kSeed, 5, static_cast<std::uint64_t>(d)});
    const CalibrationGrid grid = build_calibration_grid(sag, range, base, opt);
    // Centre of a random grid cell: farthest from every calibrated node.
    Rng rng(derive_seed({kSeed, 6, static_cast<std::uint64_t>(d)}));
    const int ci = static_cast<int>(rng.uniform(0, range.rotation_nodes() - 1));
    const int cj = static_cast<int>(rng.uniform(0, range.angulation_nodes() - 1));
    const double rot = range.rotation_min_deg + (ci + 0.5) * range.spacing_deg;
    const double ang = range.angulation_min_deg + (cj + 0.5) * range.spacing_deg;
    const double e = machine_registration_error(grid, sag, rot, ang).in_plane_mm;
    below += e < kCalibErrorMm;
    worst = std::max(worst, e);
  }
  const double frac = static_cast<double>(below) / kCalibDraws;
  return {frac >= kCalibFraction, fmt("%d/%d mid-cell draws below %.1f mm at the iso-center (need >= %.0f%%), worst %.3f mm",
                                      below, kCalibDraws, kCalibErrorMm, 100 * kCalibFraction, worst)};
}

// ---- criterion 6 ------------------------------------------------------------

Verdict criterion6() {
  const OffsetDistribution dist;
  double len = 0, in_plane = 0, out = 0, ang = 0;
  for (int i = 0; i < kOffsetDraws; ++i) {
    const RigidTransformd o = sample_offset(dist, derive_seed({kSeed, 7, static_cast<std::uint64_t>(i)}));
    const Vector3d t = o.translation();
    len += t.norm();
    in_plane += std::hypot(t.x(), t.y());
    out += std::abs(t.z());
    ang += rad2deg(rotation_to_vector(o.rotation()).norm());
  }
  len /= kOffsetDraws;
  in_plane /= kOffsetDraws;
  out /= kOffsetDraws;
  ang /= kOffsetDraws;
  const double ip_ref = 12.5 * std::numbers::pi / 4.0;
  const bool ok = std::abs(len - 12.5) <= kOffsetTolMm && std::abs(in_plane - ip_ref) <= kOffsetTolMm &&
                  std::abs(out - 6.25) <= kOffsetTolMm && std::abs(ang - 5.0) <= kOffsetTolDeg;
  return {ok, fmt("length %.3f, in-plane %.3f, out-of-plane %.3f mm, rotation %.3f deg", len, in_plane, out, ang)};
}

// ---- criterion 7 ------------------------------------------------------------

Verdict criterion7() {
  double worst = 0.0;
  Rng rng(derive_seed({kSeed, 8}));
  for (int k = 0; k < kDrrPairs; ++k) {
    const Volume v = generate_phantom(
        default_head_phantom(48, 256.0, k % 2 == 0, k % 3 == 0, k % 3 == 0, static_cast<std::uint64_t>(k + 1)));
    const DrrRenderer r(v);
    const CArmCamera cam = CArmCamera::with_fov(rng.uniform(15, 48), 48, rng.uniform(-90, 90), rng.uniform(-30, 30));
    const RigidTransformd pose = RigidTransformd::from_euler_deg(
        {rng.normal(0, 8), rng.normal(0, 8), rng.normal(0, 8)}, rng.normal(0, 5), rng.normal(0, 5), rng.normal(0, 5));
    DrrConfig coarse;
    DrrConfig fine;
    fine.step_mm = coarse.resolved_step(v) / 16.0;
    const Eigen::ArrayXXd a = r.render(cam, pose, coarse).data().cast<double>();
    const Eigen::ArrayXXd b = r.render(cam, pose, fine).data().cast<double>();
    worst = std::max(worst, std::sqrt((a - b).square().sum() / b.square().sum()));
  }
  // Homogeneous cube, 80 mm wide at 0.2 /cm.
  Volume cube = Volume::centered(40, 2.0, 8.0);
  cube.data().setConstant(0.2f);
  const CArmCamera cam = CArmCamera::with_fov(20, 65);
  const Image2D img = render_drr(cube, cam, {});
  double chord_err = 0.0;
  for (auto [u, v] : {std::pair{32, 32}, std::pair{40, 28}, std::pair{20, 45}}) {
    const Vector3d s = cam.source_position();
    const Vector3d d = (cam.pixel_position(u, v) - s).normalized();
    const auto hit = ray_box_intersect(s, d, Vector3d::Constant(-40), Vector3d::Constant(40));
    if (!hit) return {false, "cube ray missed"};
    const double expect = 0.2 * (hit->t_far - hit->t_near) / 10.0;
    chord_err = std::max(chord_err, std::abs(img(u, v) - expect) / expect);
  }
  return {worst <= kDrrRelRms && chord_err <= kChordRel,
          fmt("worst relative RMS vs 16x finer step %.4f over %d pairs; cube chord error %.4f", worst, kDrrPairs,
              chord_err)};
}

// ---- criterion 8 ------------------------------------------------------------

Verdict criterion8() {
  const Resolution res;
  const CArmCamera cam = CArmCamera::with_fov(27, res.detector_pixels);
  Image2D fixed;
  {
    const DrrRenderer ref(reference_volume(res));
    fixed = apply_poisson_noise(ref.render(cam, RigidTransformd(), {}), run_type_photons(RunType::Exposure),
                                derive_seed({kSeed, 9}));
  }
  const DrrRenderer renderer(format_volume(27, res.volume_voxels));
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<LandscapeAxis> axes{{0, -kLandscapeRangeMm, kLandscapeRangeMm, kLandscapeSteps},
                                        {1, -kLandscapeRangeMm, kLandscapeRangeMm, kLandscapeSteps}};
  const auto pts = similarity_landscape(renderer, fixed, cam, RigidTransformd(), axes);
  const double secs = elapsed_s(t0);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].score > pts[arg].score) arg = i;
  const bool at_zero = std::abs(pts[arg].coords[0]) < 1e-9 && std::abs(pts[arg].coords[1]) < 1e-9;
  return {at_zero && pts.size() == kLandscapeSteps * kLandscapeSteps && secs <= kLandscapeSeconds,
          fmt("grid maximum at (%.3f, %.3f) mm over %zu points; %.1f s (need <= %.0f)", pts[arg].coords[0],
              pts[arg].coords[1], pts.size(), secs, kLandscapeSeconds)};
}

// ---- criterion 9 ------------------------------------------------------------

Volume sphere(int n, double fov_cm, double radius_mm, float mu) {
  PhantomSpec spec;
  spec.dims = {n, n, n};
  spec.spacing_mm = Vector3d::Constant(fov_cm * 10.0 / n);
  spec.fov_diameter_cm = fov_cm;
  Ellipsoid e;
  e.semi_axes = Vector3d::Constant(radius_mm);
  spec.head = e;
  spec.mu_soft = mu;
  return generate_phantom(spec);
}

double ncc(const Volume& a, const Volume& b) {
  Eigen::ArrayXd x = a.data().cast<double>(), y = b.data().cast<double>();
  x -= x.mean();
  y -= y.mean();
  return (x * y).sum() / std::sqrt((x * x).sum() * (y * y).sum());
}

Verdict criterion9() {
  const float mu = 0.3f;
  const auto frames = simulate_rotational_run(sphere(128, 25.6, 20.0, mu),
                                              Trajectory::centered(CArmCamera::with_fov(25.6, 128)));
  const Volume rec = fdk_reconstruct(frames, Volume::centered(96, 256.0 / 96, 25.6));
  double center = 0;
  for (int k = 47; k <= 48; ++k)
    for (int j = 47; j <= 48; ++j)
      for (int i = 47; i <= 48; ++i) center += rec.at(i, j, k) / 8.0;
  double ext = 0;
  long count = 0;
  for (int k = 0; k < 96; ++k)
    for (int j = 0; j < 96; ++j)
      for (int i = 0; i < 96; ++i) {
        const Vector3d p = rec.voxel_center(i, j, k);
        if (p.norm() > 25.0 && std::hypot(p.x(), p.z()) < 100.0) {
          ext += std::abs(rec.at(i, j, k));
          ++count;
        }
      }
  ext /= count;
  const double c = ncc(rec, sphere(96, 25.6, 20.0, mu));
  const bool ok = std::abs(center - mu) <= kSphereCenterRel * mu && ext <= kSphereExteriorRel * mu && c > kSphereNcc;
  return {ok, fmt("center %.4f (mu %.2f), mean |exterior| %.5f, NCC %.4f", center, mu, ext, c)};
}

// ---- criterion 10 -----------------------------------------------------------

template <class F>
bool same_across_threads(F&& f) {
  const int saved = thread_count();
  set_thread_count(1);
  const auto a = f();
  set_thread_count(4);
  const auto b = f();
  set_thread_count(saved);
  return a == b;
}

Verdict criterion10() {
  std::vector<std::string> failed;
  const auto check = [&](const char* name, bool ok) {
    if (!ok) failed.emplace_back(name);
  };

  check("anneal", same_across_threads([] {
          const Objective f = [](const Eigen::VectorXd& x) {
            double s = 10.0 * x.size();
            for (double v : x) s += v * v - 10.0 * std::cos(2 * std::numbers::pi * v);
            return s;
          };
          AnnealConfig cfg;
          cfg.seed = kSeed;
          cfg.max_evaluations = 5000;
          const auto r = anneal(f, Eigen::VectorXd::Constant(4, 3.0),
                                Bounds::symmetric(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Constant(4, 5.12)), cfg);
          return trace_csv(r.trace);
        }));

  const Volume head = generate_phantom(head_phantom_for_fov(27, 48));
  const CArmCamera cam = CArmCamera::with_fov(27, 64, 20, 5);
  check("drr", same_across_threads([&] {
          const Image2D img = render_drr(head, cam, RigidTransformd::from_euler_deg({3, 1, -2}, 2, 1, 0));
          return std::vector<float>(img.data().data(), img.data().data() + img.data().size());
        }));
  check("noise", same_across_threads([&] {
          const Image2D img = apply_poisson_noise(render_drr(head, cam, {}), 5e4, kSeed);
          return std::vector<float>(img.data().data(), img.data().data() + img.data().size());
        }));
  check("recon", same_across_threads([&] {
          const auto frames = simulate_rotational_run(head, Trajectory::centered(CArmCamera::with_fov(27, 48), 24),
                                                      {}, NoiseModel::poisson(1e6), kSeed);
          const Volume v = fdk_reconstruct(frames, Volume::centered(32, 270.0 / 32, 27));
          return std::vector<float>(v.data().data(), v.data().data() + v.data().size());
        }));
  check("registration", same_across_threads([&] {
          const DrrRenderer r(head);
          const Image2D fixed = apply_poisson_noise(r.render(cam, RigidTransformd::from_translation({4, -3, 0}), {}),
                                                    1e6, kSeed);
          const auto res = two_stage_register(r, fixed, cam, RigidTransformd(), SearchSpace{},
                                              trial_settings(kSeed, {200, 40}));
          std::ostringstream os;
          os.precision(17);
          os << res.recovered.matrix() << ' ' << res.score << ' ' << res.evaluations;
          return os.str();
        }));
  check("phantom-matrix", same_across_threads([] {
          PhantomMatrixPlan p;
          p.volume_fovs_cm = {27};
          p.image_fovs_cm = {22, 27};
          p.offsets = {0, 3};
          p.trials_per_cell = 2;
          p.seed = kSeed;
          p.resolution = {32, 32, 48, 256.0};
          p.budget = {80, 20};
          return results_csv(run_phantom_matrix(p));
        }));
  check("clinical-style", same_across_threads([] {
          ClinicalPlan p;
          p.trials_per_patient = 2;
          p.n_frames = 24;
          p.seed = kSeed;
          p.resolution = {32, 32, 48, 256.0};
          p.budget = {80, 20};
          return results_csv(run_clinical_style(p));
        }));

  std::string names;
  for (const auto& f : failed) names += " " + f;
  return {failed.empty(), failed.empty() ? "anneal, drr, noise, recon, registration, phantom-matrix, clinical-style "
                                           "identical at 1 and 4 threads"
                                         : "differs:" + names};
}

// ---- criterion 11 -----------------------------------------------------------

Image2D dyadic_image(int n, double cx, double cy, double phase) {
  Image2D img(n, n, 1.0, n / 10.0);
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u)
      img(u, v) = static_cast<float>(std::exp(-((u - cx) * (u - cx) + (v - cy) * (v - cy)) / 40.0) +
                                     0.05 * std::sin(0.4 * u + phase));
  img.data() = (img.data() * 4096.0f).round() / 4096.0f;
  return img;
}

Verdict criterion11() {
  std::vector<std::string> failed;
  const auto check = [&](const char* name, bool ok) {
    if (!ok) failed.emplace_back(name);
  };

  // Transform algebra.
  Rng rng(derive_seed({kSeed, 11}));
  const auto random_transform = [&] {
    return RigidTransformd(rotation_from_vector(Vector3d(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1))),
                           Vector3d(rng.normal(0, 50), rng.normal(0, 50), rng.normal(0, 50)));
  };
  double algebra = 0.0;
  for (int i = 0; i < 100; ++i) {
    const RigidTransformd a = random_transform(), b = random_transform(), c = random_transform();
    const Vector3d p(rng.normal(0, 100), rng.normal(0, 100), rng.normal(0, 100));
    algebra = std::max(algebra, ((a * a.inverse())(p) - p).norm());
    algebra = std::max(algebra, (((a * b) * c)(p) - (a * (b * c))(p)).norm());
    algebra = std::max(algebra, ((a * b)(p) - a(b(p))).norm());
    const Vector3d w = rotation_to_vector(a.rotation());
    algebra = std::max(algebra, (rotation_from_vector(w) - a.rotation()).norm());
  }
  check("transform algebra", algebra <= kAlgebraTol);

  // Similarity.
  const Image2D f = dyadic_image(32, 15, 16, 0.0);
  const Image2D m = dyadic_image(32, 17, 15, 0.3);
  const GradientDifference gd(f);
  check("upper bound reached", gd.score_at(f, 1.0) == gd.max_score());
  bool below = true;
  for (int i = 0; i < 20; ++i) {
    Image2D x = f;
    for (Eigen::Index k = 0; k < x.data().size(); ++k) x.data()(k) += static_cast<float>(rng.normal(0, 0.05));
    below &= gd.best(x).first <= gd.max_score();
  }
  check("upper bound", below);
  Image2D shifted = m;
  shifted.data() += 5.0f;
  Image2D scaled = m;
  scaled.data() *= 4.0f;
  bool offset = true, scale = true;
  for (double s : {0.25, 0.5, 1.0}) {
    offset &= gradient_difference(f, shifted, s) == gradient_difference(f, m, s);
    scale &= gradient_difference(f, scaled, s) == gradient_difference(f, m, 4.0 * s);
  }
  check("offset invariance", offset);
  check("scale coupling", scale);

  // Ramp filter at the padded length of a 256-pixel detector row.
  const Eigen::ArrayXcd h = ramp_response(512, 1.0);
  check("ramp DC", std::abs(h(0)) <= kRampDcRel * h.abs().maxCoeff());

  // Projector linearity.
  const Volume a = generate_phantom(head_phantom_for_fov(27, 32));
  Volume b = Volume::centered(32, a.spacing().x(), 27);
  b.data().setConstant(0.1f);
  Volume c = a;
  c.data() = 2.0f * a.data() + 3.0f * b.data();
  const CArmCamera cam = CArmCamera::with_fov(27, 40, 30, 10);
  const RigidTransformd pose = RigidTransformd::from_euler_deg({2, 3, -1}, 1, 2, 3);
  const Eigen::ArrayXXf combo = 2.0f * render_drr(a, cam, pose).data() + 3.0f * render_drr(b, cam, pose).data();
  const double lin = (render_drr(c, cam, pose).data() - combo).abs().maxCoeff() / combo.abs().maxCoeff();
  check("projector linearity", lin <= kLinearityRel);

  std::string names;
  for (const auto& n : failed) names += " " + n;
  return {failed.empty(), failed.empty() ? fmt("algebra %.2e, ramp DC %.2e, linearity %.2e", algebra,
                                               std::abs(h(0)) / h.abs().maxCoeff(), lin)
                                         : "failed:" + names};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"phantom-matrix success rate", criterion1},
      {"residual on successful trials", criterion2},
      {"fluoroscopy vs exposure parity", criterion3},
      {"clinical-style loop", criterion4},
      {"machine-based calibration accuracy", criterion5},
      {"offset distribution moments", criterion6},
      {"DRR oracle", criterion7},
      {"similarity landscape", criterion8},
      {"FDK fidelity", criterion9},
      {"determinism across thread counts", criterion10},
      {"property suites", criterion11},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << v.detail
              << fmt(" [%.1f s]", elapsed_s(t0)) << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << "(" << failures << " failing)" << std::endl;
  return failures ? 1 : 0;
}
