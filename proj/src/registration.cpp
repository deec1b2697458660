#include "fluoro/registration.hpp"

#include "fluoro/io.hpp"
#include "fluoro/random.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace fluoro {

void SearchSpace::validate() const {
  if (!(t_bounds_mm > 0) || !(r_bounds_deg > 0)) throw std::invalid_argument("search bounds must be positive");
}

RigidTransformd apply_search_offset(const RigidTransformd& init, const SearchVector& x, const CArmCamera& camera) {
  const Matrix3d rc = camera.orientation();
  const Matrix3d delta = rc * euler_xyz_deg(x[2], x[3], x[4]) * rc.transpose();
  // Rotating about the moved iso-center leaves init's translation alone; the
  // in-plane shift then has no component along the view axis.
  const Vector3d t = init.translation() + x[0] * rc.col(0) + x[1] * rc.col(1);
  return {delta * init.rotation(), t};
}

RegistrationSettings default_registration_settings(std::uint64_t seed) {
  RegistrationSettings s;
  s.drr.downsample = 1;
  s.anneal.seed = seed;
  s.anneal.record_trace = false;
  // Scores are normalised to [-1, 0]; a low start temperature keeps the walk
  // near the machine-based pose, where the optimum is.
  s.anneal.initial_temperature = 0.002;
  s.anneal.temperature_reduction = 0.5;
  s.anneal.steps_per_cycle = 6;
  s.anneal.cycles_per_temperature = 2;
  s.anneal.termination_epsilon = 1e-5;
  s.anneal.termination_levels = 3;
  s.anneal.max_evaluations = 1500;
  return s;
}

TwoStageSettings default_two_stage_settings(std::uint64_t seed) {
  TwoStageSettings s;
  s.coarse = default_registration_settings(seed);
  s.coarse.drr.downsample = 4;
  s.middle = default_registration_settings(derive_seed({seed, 3}));
  s.middle.drr.downsample = 2;
  s.middle.anneal.max_evaluations = 200;
  s.middle.anneal.initial_temperature = 0.001;
  s.fine = default_registration_settings(derive_seed({seed, 2}));
  s.fine.drr.downsample = 1;
  s.fine.anneal.max_evaluations = 600;
  s.fine.anneal.initial_temperature = 0.0005;
  return s;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void attach_truth(RegistrationResult& r, const CArmCamera& camera, const std::optional<RigidTransformd>& truth,
                  const SuccessCriteria& criteria) {
  if (!truth) return;
  r.error = pose_error(r.recovered, *truth, Vector3d::Zero(), camera.view_axis());
  r.passed = evaluate_success(*r.error, criteria);
  if (r.insufficient_landmarks) r.passed = SuccessFlags{};
}

}  // namespace

RegistrationResult register_image(const DrrRenderer& renderer, const Image2D& fixed, const CArmCamera& camera,
                                  const RigidTransformd& init, const SearchSpace& space,
                                  const RegistrationSettings& settings, const std::optional<RigidTransformd>& truth,
                                  const SuccessCriteria& criteria) {
  const auto start = std::chrono::steady_clock::now();
  space.validate();
  settings.drr.validate();
  settings.similarity.validate();
  camera.validate();
  if (fixed.nu() != camera.detector_dims[0] || fixed.nv() != camera.detector_dims[1])
    throw std::invalid_argument("register: fixed image does not match the camera detector");
  const int ds = settings.drr.downsample;
  if (camera.detector_dims[0] % ds != 0 || camera.detector_dims[1] % ds != 0)
    throw std::invalid_argument("register: detector dimensions are not divisible by the downsample factor");

  const CArmCamera cam = camera.downsampled(ds);
  DrrConfig drr = settings.drr;
  drr.downsample = 1;
  const Image2D target = ds == 1 ? fixed : downsample(fixed, ds);

  RegistrationResult result;
  result.recovered = init;

  std::optional<GradientDifference> metric;
  try {
    metric.emplace(target, settings.similarity);
  } catch (const DegenerateImageError&) {
    // No landmarks to register against: report the machine-based pose.
    renderer.render(cam, init, drr);
    result.insufficient_landmarks = true;
    result.evaluations = 1;
    result.wall_time_s = seconds_since(start);
    attach_truth(result, camera, truth, criteria);
    return result;
  }

  const double norm = metric->max_score();
  auto objective = [&](const Eigen::VectorXd& x) {
    const SearchVector sx = x;
    const Image2D moving = renderer.render(cam, apply_search_offset(init, sx, camera), drr);
    return -metric->score(moving) / norm;
  };

  SearchVector half;
  half << space.t_bounds_mm, space.t_bounds_mm, space.r_bounds_deg, space.r_bounds_deg, space.r_bounds_deg;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(5);
  const Bounds bounds = Bounds::symmetric(zero, half);
  AnnealConfig acfg = settings.anneal;
  if (acfg.initial_step.empty()) {
    acfg.initial_step.resize(5);
    for (int i = 0; i < 5; ++i) acfg.initial_step[static_cast<std::size_t>(i)] = 0.5 * half[i];
  }
  const AnnealResult ar = anneal(objective, zero, bounds, acfg);

  result.recovered = apply_search_offset(init, ar.x_best, camera);
  result.score = -ar.score_best * norm;
  result.initial_score =
      ar.trace.empty() ? metric->score(renderer.render(cam, init, drr)) : -ar.trace.front().score * norm;
  result.evaluations = ar.evaluations;
  result.wall_time_s = seconds_since(start);
  attach_truth(result, camera, truth, criteria);
  return result;
}

RegistrationResult register_image(const Volume& volume, const Image2D& fixed, const CArmCamera& camera,
                                  const RigidTransformd& init, const SearchSpace& space,
                                  const RegistrationSettings& settings, const std::optional<RigidTransformd>& truth,
                                  const SuccessCriteria& criteria) {
  const DrrRenderer renderer(volume);
  return register_image(renderer, fixed, camera, init, space, settings, truth, criteria);
}

RegistrationResult two_stage_register(const DrrRenderer& renderer, const Image2D& fixed, const CArmCamera& camera,
                                      const RigidTransformd& init, const SearchSpace& space,
                                      const TwoStageSettings& settings, const std::optional<RigidTransformd>& truth,
                                      const SuccessCriteria& criteria) {
  const RegistrationResult coarse = register_image(renderer, fixed, camera, init, space, settings.coarse);
  if (coarse.insufficient_landmarks) {
    RegistrationResult r = coarse;
    attach_truth(r, camera, truth, criteria);
    return r;
  }
  // The coarse optimum can sit slightly off the full-resolution one (block
  // averages against rays through block centres), so the starting pose is
  // scored at full resolution too and the better of the two is kept. The
  // probe is paid for out of the fine budget.
  RegistrationSettings probe_settings = settings.fine;
  probe_settings.anneal.max_evaluations = 1;
  const RegistrationResult probe =
      register_image(renderer, fixed, camera, init, settings.fine_space, probe_settings, truth, criteria);
  RegistrationSettings fine_settings = settings.fine;
  fine_settings.anneal.max_evaluations = std::max(1L, settings.fine.anneal.max_evaluations - 1);
  RigidTransformd start = coarse.recovered;
  long middle_evaluations = 0;
  double middle_time = 0.0;
  if (settings.middle.anneal.max_evaluations > 0) {
    const RegistrationResult middle =
        register_image(renderer, fixed, camera, start, settings.middle_space, settings.middle);
    start = middle.recovered;
    middle_evaluations = middle.evaluations;
    middle_time = middle.wall_time_s;
  }
  RegistrationResult fine =
      register_image(renderer, fixed, camera, start, settings.fine_space, fine_settings, truth, criteria);
  if (probe.score > fine.score) {
    const double initial = fine.initial_score;
    fine = probe;
    fine.initial_score = initial;
  }
  fine.evaluations += coarse.evaluations + middle_evaluations + probe.evaluations;
  fine.wall_time_s += coarse.wall_time_s + middle_time + probe.wall_time_s;
  return fine;
}

SuccessFlags evaluate_success(const PoseError& error, const SuccessCriteria& criteria) {
  SuccessFlags f;
  f.translation = (criteria.in_plane_translation ? error.in_plane_mm : error.translation_mm) < criteria.t_max_mm;
  f.rotation = error.rotation_deg < criteria.r_max_deg;
  f.both = f.translation && f.rotation;
  return f;
}

SuccessFlags evaluate_success(const RegistrationResult& result, const SuccessCriteria& criteria) {
  if (!result.error) throw std::logic_error("evaluate_success: result has no ground-truth error");
  return evaluate_success(*result.error, criteria);
}

nlohmann::json to_json(const RegistrationResult& r) {
  nlohmann::json j;
  j["recovered"] = to_json(r.recovered);
  j["score"] = r.score;
  j["initial_score"] = r.initial_score;
  j["evaluations"] = r.evaluations;
  j["wall_time_s"] = r.wall_time_s;
  j["insufficient_landmarks"] = r.insufficient_landmarks;
  if (r.error) j["error"] = to_json(*r.error);
  if (r.passed) j["passed"] = {{"t", r.passed->translation}, {"r", r.passed->rotation}, {"both", r.passed->both}};
  return j;
}

}  // namespace fluoro
