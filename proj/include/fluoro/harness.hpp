#pragma once

// Experiment orchestration: the phantom format matrix (volume format x image
// format x induced offset), the clinical-style loop on reconstructed
// rotational runs, residual statistics, histograms and similarity
// landscapes.

#include "fluoro/recon.hpp"
#include "fluoro/registration.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace fluoro {

/// Format diameters in cm shared by volumes and images.
const std::vector<double>& format_ladder();

/// T1..T4: in-plane shift of 1 cm along x, a 1 cm shift split over x and y,
/// a 5 degree rotation about x, and a mixed shift and rotation. Axes are the
/// detector axes at C-arm rotation 0.
std::vector<RigidTransformd> standard_offsets();

bool clinically_relevant(double volume_fov_cm, double image_fov_cm);

struct OffsetDistribution {
  double max_translation_mm = 25.0;
  double max_rotation_deg = 10.0;
};

/// Translation: length U[0, max] along a uniform direction. Rotation about
/// the iso-center: angle U[0, max] about a uniform axis.
RigidTransformd sample_offset(const OffsetDistribution& dist, std::uint64_t seed);

enum class RunType { Exposure, Fluoroscopy };

std::string to_string(RunType t);
RunType run_type_from_string(const std::string& s);
/// Photons per pixel of the noise preset.
double run_type_photons(RunType t);

/// Grid sizes for desk-scale runs.
struct Resolution {
  int volume_voxels = 96;
  int detector_pixels = 128;
  /// Fine phantom that the X-ray images are rendered from.
  int reference_voxels = 192;
  double reference_extent_mm = 256.0;
};

struct RegistrationBudget {
  long coarse_evaluations = 1500;
  long fine_evaluations = 150;
  long middle_evaluations = 200;  // 0 skips the middle stage
};

struct PhantomMatrixPlan {
  std::vector<double> volume_fovs_cm = format_ladder();
  std::vector<double> image_fovs_cm = format_ladder();
  /// Indices into standard_offsets().
  std::vector<int> offsets{0, 1, 2, 3};
  std::vector<RunType> run_types{RunType::Exposure, RunType::Fluoroscopy};
  int trials_per_cell = 3;
  std::uint64_t seed = 0;
  SuccessCriteria criteria;
  SearchSpace space;
  Resolution resolution;
  RegistrationBudget budget;
  bool facial_structures = true;

  void validate() const;
};

struct ClinicalPlan {
  /// One simulated patient per entry; the flag switches vessel contrast.
  std::vector<bool> contrast{true, false};
  int trials_per_patient = 100;
  int n_frames = 120;
  double arc_deg = 200.0;
  double fov_cm = 27.0;
  /// Noise of the rotational run.
  double run_photons = 1e6;
  OffsetDistribution offsets;
  std::uint64_t seed = 0;
  SuccessCriteria criteria{1.0, 3.0, true};
  SearchSpace space;
  Resolution resolution;
  RegistrationBudget budget;

  void validate() const;
};

nlohmann::json to_json(const PhantomMatrixPlan& p);
PhantomMatrixPlan phantom_matrix_plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClinicalPlan& p);
ClinicalPlan clinical_plan_from_json(const nlohmann::json& j);

struct ResultRow {
  std::string experiment;
  std::string run_type;
  int cell = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double volume_fov_cm = 0.0;
  double image_fov_cm = 0.0;
  std::string offset_label;
  int frame = -1;
  bool contrast = false;
  bool clinically_relevant = true;
  RigidTransformd offset;
  RigidTransformd truth;
  RigidTransformd recovered;
  PoseError error;
  SuccessFlags passed;
  double score = 0.0;
  long evaluations = 0;
  double wall_time_s = 0.0;
  bool insufficient_landmarks = false;
  /// Non-empty when the trial threw; the other outcome fields are then
  /// those of the machine-based pose.
  std::string failure;
};

using RowCallback = std::function<void(const ResultRow&)>;

std::vector<ResultRow> run_phantom_matrix(const PhantomMatrixPlan& plan, const RowCallback& on_row = {});
std::vector<ResultRow> run_clinical_style(const ClinicalPlan& plan, const RowCallback& on_row = {});

/// Registration settings for a trial seed and budget.
TwoStageSettings trial_settings(std::uint64_t seed, const RegistrationBudget& budget);

/// One row per trial; transforms as rotation vectors (deg) plus
/// translations, written with round-trip precision. Wall time is left out
/// so that reruns produce identical files.
std::string results_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(const std::string& text);

struct Moments {
  long count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single value
  double min = 0.0;
  double max = 0.0;
};

Moments moments(const std::vector<double>& values);

struct StatsBlock {
  Moments translation;
  Moments in_plane;
  Moments rotation;
};

/// Residual statistics in the shape of a results table: every trial or only
/// successful ones (both criteria), over all cells or the clinically
/// relevant ones.
struct Summary {
  StatsBlock all;
  StatsBlock all_relevant;
  StatsBlock successful;
  StatsBlock successful_relevant;
  long trials = 0;
  long relevant_trials = 0;
  double success_rate = 0.0;
  double relevant_success_rate = 0.0;
  double translation_pass_rate = 0.0;
  double rotation_pass_rate = 0.0;
};

/// Throws std::invalid_argument on empty input.
Summary summarize(const std::vector<ResultRow>& rows);

struct Histogram {
  /// Bin i covers [edges[i], edges[i+1]); the last edge may be infinity.
  std::vector<double> edges;
  std::vector<long> counts;
};

/// 0.1 mm bins on [0, 1], then [1, 2], [2, 5] and an open-ended bin.
std::vector<double> translation_bin_edges();
/// 0.5 degree bins on [0, 3], then [3, 5], [5, 10] and an open-ended bin.
std::vector<double> rotation_bin_edges();
Histogram histogram(const std::vector<double>& values, const std::vector<double>& edges);

nlohmann::json to_json(const Moments& m);
nlohmann::json to_json(const Summary& s);
nlohmann::json to_json(const Histogram& h);

/// Summary, pass rates split by run type and contrast, and histograms.
nlohmann::json report_json(const std::vector<ResultRow>& rows);
std::string report_text(const std::vector<ResultRow>& rows);

struct LandscapeAxis {
  int dof = 0;  // index into (tx, ty, rx, ry, rz)
  double lo = 0.0;
  double hi = 0.0;
  int steps = 1;
};

struct LandscapePoint {
  std::vector<double> coords;
  double score;
};

/// Gradient difference between `fixed` and DRRs at
/// apply_search_offset(base, x) over the grid; dofs not on an axis stay 0.
/// A single-step axis samples the midpoint of its range. The first axis
/// varies slowest.
std::vector<LandscapePoint> similarity_landscape(const DrrRenderer& renderer, const Image2D& fixed,
                                                 const CArmCamera& camera, const RigidTransformd& base,
                                                 const std::vector<LandscapeAxis>& axes,
                                                 const SimilarityConfig& sim = {}, const DrrConfig& drr = {});

std::string landscape_csv(const std::vector<LandscapeAxis>& axes, const std::vector<LandscapePoint>& points);

/// Phantom volume for a format: n^3 voxels over fov_cm, cropped to the
/// cylindrical field of view.
Volume format_volume(double fov_cm, int voxels, bool facial_structures = true, bool vessels = false,
                     bool contrast = false, std::uint64_t seed = 1);

/// Fine phantom covering the whole head, used to render X-ray images.
Volume reference_volume(const Resolution& res, bool facial_structures = true, bool vessels = false,
                        bool contrast = false, std::uint64_t seed = 1);

}  // namespace fluoro
