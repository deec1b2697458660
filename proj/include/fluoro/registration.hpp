#pragma once

// Image-based 2D/3D registration: starting from the machine-based pose,
// search five degrees of freedom of the patient transform (in-plane
// translation and three rotations) for the pose whose DRR best matches the
// X-ray image under gradient difference. Translation along the viewing axis
// is not searched.

#include "fluoro/anneal.hpp"
#include "fluoro/core.hpp"
#include "fluoro/projector.hpp"
#include "fluoro/similarity.hpp"

#include <json.hpp>

#include <optional>

namespace fluoro {

using SearchVector = Eigen::Matrix<double, 5, 1>;  // tx, ty [mm], rx, ry, rz [deg]

struct SearchSpace {
  double t_bounds_mm = 30.0;
  double r_bounds_deg = 12.0;

  void validate() const;
};

struct SuccessCriteria {
  double t_max_mm = 1.0;
  double r_max_deg = 3.0;
  /// Judge translation on the component parallel to the detector only. The
  /// out-of-plane translation is not searched, so an induced out-of-plane
  /// offset survives registration unchanged.
  bool in_plane_translation = false;
};

struct SuccessFlags {
  bool translation = false;
  bool rotation = false;
  bool both = false;
};

struct RegistrationSettings {
  DrrConfig drr;
  SimilarityConfig similarity;
  AnnealConfig anneal;
};

struct RegistrationResult {
  RigidTransformd recovered;
  /// Similarity at the recovered pose, at the resolution of the last stage.
  double score = 0.0;
  /// Similarity at the starting pose of the last stage.
  double initial_score = 0.0;
  long evaluations = 0;
  double wall_time_s = 0.0;
  std::optional<PoseError> error;
  std::optional<SuccessFlags> passed;
  bool insufficient_landmarks = false;
};

/// Candidate pose for search vector x around `init`: the rotation
/// euler_xyz(rx, ry, rz), expressed in the detector frame, is applied about
/// the patient's current iso-center position t_init, then the translation
/// tx * u + ty * v is added. The out-of-plane translation of init is kept.
RigidTransformd apply_search_offset(const RigidTransformd& init, const SearchVector& x, const CArmCamera& camera);

/// Registration with settings tuned for the desk-scale phantom.
RegistrationSettings default_registration_settings(std::uint64_t seed = 0);

/// Single-stage registration (DRR at settings.drr.downsample).
RegistrationResult register_image(const DrrRenderer& renderer, const Image2D& fixed, const CArmCamera& camera,
                                  const RigidTransformd& init, const SearchSpace& space,
                                  const RegistrationSettings& settings,
                                  const std::optional<RigidTransformd>& truth = std::nullopt,
                                  const SuccessCriteria& criteria = {});

RegistrationResult register_image(const Volume& volume, const Image2D& fixed, const CArmCamera& camera,
                                  const RigidTransformd& init, const SearchSpace& space,
                                  const RegistrationSettings& settings,
                                  const std::optional<RigidTransformd>& truth = std::nullopt,
                                  const SuccessCriteria& criteria = {});

struct TwoStageSettings {
  RegistrationSettings coarse;
  /// Intermediate search at moderate resolution; skipped when its budget is
  /// 0. At large formats the coarse stage sees too few pixels to pin down
  /// out-of-plane rotations and can stop a few degrees off.
  RegistrationSettings middle;
  SearchSpace middle_space{5.0, 6.0};
  RegistrationSettings fine;
  SearchSpace fine_space{2.0, 2.0};
};

TwoStageSettings default_two_stage_settings(std::uint64_t seed = 0);

/// Coarse search over `space`, then (optionally) a middle search within
/// middle_space and a refinement within fine_space, each around the previous
/// optimum. If `init` scores better at full resolution than the
/// refined pose, init is returned. Evaluations and wall time are summed over
/// stages and stay within the two budgets.
RegistrationResult two_stage_register(const DrrRenderer& renderer, const Image2D& fixed, const CArmCamera& camera,
                                      const RigidTransformd& init, const SearchSpace& space,
                                      const TwoStageSettings& settings,
                                      const std::optional<RigidTransformd>& truth = std::nullopt,
                                      const SuccessCriteria& criteria = {});

/// Strict comparisons against the criteria. Throws std::logic_error when the
/// result carries no ground-truth error.
SuccessFlags evaluate_success(const RegistrationResult& result, const SuccessCriteria& criteria = {});
SuccessFlags evaluate_success(const PoseError& error, const SuccessCriteria& criteria = {});

nlohmann::json to_json(const RegistrationResult& r);

}  // namespace fluoro
