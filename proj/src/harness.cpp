#include "fluoro/harness.hpp"

#include "fluoro/io.hpp"
#include "fluoro/phantom.hpp"
#include "fluoro/random.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace fluoro {

const std::vector<double>& format_ladder() {
  static const std::vector<double> ladder{15, 19, 22, 27, 31, 37, 42, 48};
  return ladder;
}

std::vector<RigidTransformd> standard_offsets() {
  return {RigidTransformd::from_translation(Vector3d(10, 0, 0)),
          RigidTransformd::from_translation(Vector3d(-8, 6, 0)),
          RigidTransformd::from_euler_deg(Vector3d::Zero(), 5, 0, 0),
          RigidTransformd::from_euler_deg(Vector3d(4, 4, 0), 2, 3, 4)};
}

bool clinically_relevant(double volume_fov_cm, double image_fov_cm) {
  return volume_fov_cm >= 22.0 && image_fov_cm >= 22.0 && volume_fov_cm >= image_fov_cm;
}

RigidTransformd sample_offset(const OffsetDistribution& dist, std::uint64_t seed) {
  Rng rng(seed);
  const double length = rng.uniform(0.0, dist.max_translation_mm);
  const Vector3d t = length * rng.unit_vector();
  const double angle = rng.uniform(0.0, dist.max_rotation_deg);
  const Vector3d axis = rng.unit_vector();
  return {rotation_from_vector(Vector3d(deg2rad(angle) * axis)), t};
}

std::string to_string(RunType t) { return t == RunType::Exposure ? "exposure" : "fluoroscopy"; }

RunType run_type_from_string(const std::string& s) {
  if (s == "exposure") return RunType::Exposure;
  if (s == "fluoroscopy") return RunType::Fluoroscopy;
  throw std::invalid_argument("unknown run type '" + s + "'");
}

double run_type_photons(RunType t) { return t == RunType::Exposure ? 1e6 : 5e4; }

namespace {

void validate_resolution(const Resolution& r) {
  if (r.volume_voxels < 8 || r.detector_pixels < 16 || r.reference_voxels < 8 || !(r.reference_extent_mm > 0))
    throw std::invalid_argument("resolution settings are too small");
  if (r.detector_pixels % 4 != 0) throw std::invalid_argument("detector pixels must be divisible by 4");
}

void validate_budget(const RegistrationBudget& b) {
  if (b.coarse_evaluations < 1 || b.fine_evaluations < 1) throw std::invalid_argument("evaluation budgets must be positive");
  if (b.middle_evaluations < 0) throw std::invalid_argument("middle evaluation budget must be non-negative");
}

void validate_ladder(const std::vector<double>& fovs) {
  if (fovs.empty()) throw std::invalid_argument("format list is empty");
  for (double f : fovs)
    if (std::find(format_ladder().begin(), format_ladder().end(), f) == format_ladder().end())
      throw std::invalid_argument("format " + std::to_string(f) + " cm is not on the format ladder");
}

}  // namespace

void PhantomMatrixPlan::validate() const {
  validate_ladder(volume_fovs_cm);
  validate_ladder(image_fovs_cm);
  if (offsets.empty()) throw std::invalid_argument("offset list is empty");
  for (int o : offsets)
    if (o < 0 || o > 3) throw std::invalid_argument("offset index must lie in 0..3");
  if (run_types.empty()) throw std::invalid_argument("run type list is empty");
  if (trials_per_cell < 1) throw std::invalid_argument("trials per cell must be at least 1");
  space.validate();
  validate_resolution(resolution);
  validate_budget(budget);
}

void ClinicalPlan::validate() const {
  if (contrast.empty()) throw std::invalid_argument("clinical plan needs at least one patient");
  if (trials_per_patient < 1) throw std::invalid_argument("trials per patient must be at least 1");
  if (n_frames < 2) throw std::invalid_argument("a run needs at least 2 frames");
  if (!(arc_deg > 0 && arc_deg <= 360)) throw std::invalid_argument("arc must lie in (0, 360]");
  if (!(fov_cm > 0)) throw std::invalid_argument("fov must be positive");
  if (!(run_photons > 0)) throw std::invalid_argument("run photons must be positive");
  if (offsets.max_translation_mm < 0 || offsets.max_rotation_deg < 0)
    throw std::invalid_argument("offset maxima must be non-negative");
  space.validate();
  validate_resolution(resolution);
  validate_budget(budget);
}

namespace {

nlohmann::json to_json(const Resolution& r) {
  return {{"volume_voxels", r.volume_voxels},
          {"detector_pixels", r.detector_pixels},
          {"reference_voxels", r.reference_voxels},
          {"reference_extent_mm", r.reference_extent_mm}};
}

Resolution resolution_from_json(const nlohmann::json& j, Resolution r) {
  r.volume_voxels = j.value("volume_voxels", r.volume_voxels);
  r.detector_pixels = j.value("detector_pixels", r.detector_pixels);
  r.reference_voxels = j.value("reference_voxels", r.reference_voxels);
  r.reference_extent_mm = j.value("reference_extent_mm", r.reference_extent_mm);
  return r;
}

nlohmann::json to_json(const SuccessCriteria& c) {
  return {{"t_max_mm", c.t_max_mm}, {"r_max_deg", c.r_max_deg}, {"in_plane_translation", c.in_plane_translation}};
}

SuccessCriteria criteria_from_json(const nlohmann::json& j, SuccessCriteria c) {
  c.t_max_mm = j.value("t_max_mm", c.t_max_mm);
  c.r_max_deg = j.value("r_max_deg", c.r_max_deg);
  c.in_plane_translation = j.value("in_plane_translation", c.in_plane_translation);
  return c;
}

nlohmann::json to_json(const SearchSpace& s) { return {{"t_bounds_mm", s.t_bounds_mm}, {"r_bounds_deg", s.r_bounds_deg}}; }

SearchSpace space_from_json(const nlohmann::json& j, SearchSpace s) {
  s.t_bounds_mm = j.value("t_bounds_mm", s.t_bounds_mm);
  s.r_bounds_deg = j.value("r_bounds_deg", s.r_bounds_deg);
  return s;
}

nlohmann::json to_json(const RegistrationBudget& b) {
  return {{"coarse_evaluations", b.coarse_evaluations},
          {"middle_evaluations", b.middle_evaluations},
          {"fine_evaluations", b.fine_evaluations}};
}

RegistrationBudget budget_from_json(const nlohmann::json& j, RegistrationBudget b) {
  b.coarse_evaluations = j.value("coarse_evaluations", b.coarse_evaluations);
  b.fine_evaluations = j.value("fine_evaluations", b.fine_evaluations);
  b.middle_evaluations = j.value("middle_evaluations", b.middle_evaluations);
  return b;
}

template <typename F>
auto parse_plan(const char* what, F&& body) {
  try {
    return body();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string(what) + ": " + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const PhantomMatrixPlan& p) {
  nlohmann::json runs = nlohmann::json::array();
  for (RunType t : p.run_types) runs.push_back(to_string(t));
  return {{"volume_fovs_cm", p.volume_fovs_cm},
          {"image_fovs_cm", p.image_fovs_cm},
          {"offsets", p.offsets},
          {"run_types", runs},
          {"trials_per_cell", p.trials_per_cell},
          {"seed", p.seed},
          {"criteria", to_json(p.criteria)},
          {"space", to_json(p.space)},
          {"resolution", to_json(p.resolution)},
          {"budget", to_json(p.budget)},
          {"facial_structures", p.facial_structures}};
}

PhantomMatrixPlan phantom_matrix_plan_from_json(const nlohmann::json& j) {
  return parse_plan("phantom-matrix plan", [&] {
    PhantomMatrixPlan p;
    p.volume_fovs_cm = j.value("volume_fovs_cm", p.volume_fovs_cm);
    p.image_fovs_cm = j.value("image_fovs_cm", p.image_fovs_cm);
    p.offsets = j.value("offsets", p.offsets);
    if (j.contains("run_types")) {
      p.run_types.clear();
      for (const auto& s : j.at("run_types")) p.run_types.push_back(run_type_from_string(s.get<std::string>()));
    }
    p.trials_per_cell = j.value("trials_per_cell", p.trials_per_cell);
    p.seed = j.value("seed", p.seed);
    if (j.contains("criteria")) p.criteria = criteria_from_json(j.at("criteria"), p.criteria);
    if (j.contains("space")) p.space = space_from_json(j.at("space"), p.space);
    if (j.contains("resolution")) p.resolution = resolution_from_json(j.at("resolution"), p.resolution);
    if (j.contains("budget")) p.budget = budget_from_json(j.at("budget"), p.budget);
    p.facial_structures = j.value("facial_structures", p.facial_structures);
    p.validate();
    return p;
  });
}

nlohmann::json to_json(const ClinicalPlan& p) {
  return {{"contrast", p.contrast},
          {"trials_per_patient", p.trials_per_patient},
          {"n_frames", p.n_frames},
          {"arc_deg", p.arc_deg},
          {"fov_cm", p.fov_cm},
          {"run_photons", p.run_photons},
          {"offsets", {{"max_translation_mm", p.offsets.max_translation_mm}, {"max_rotation_deg", p.offsets.max_rotation_deg}}},
          {"seed", p.seed},
          {"criteria", to_json(p.criteria)},
          {"space", to_json(p.space)},
          {"resolution", to_json(p.resolution)},
          {"budget", to_json(p.budget)}};
}

ClinicalPlan clinical_plan_from_json(const nlohmann::json& j) {
  return parse_plan("clinical-style plan", [&] {
    ClinicalPlan p;
    p.contrast = j.value("contrast", p.contrast);
    p.trials_per_patient = j.value("trials_per_patient", p.trials_per_patient);
    p.n_frames = j.value("n_frames", p.n_frames);
    p.arc_deg = j.value("arc_deg", p.arc_deg);
    p.fov_cm = j.value("fov_cm", p.fov_cm);
    p.run_photons = j.value("run_photons", p.run_photons);
    if (j.contains("offsets")) {
      p.offsets.max_translation_mm = j.at("offsets").value("max_translation_mm", p.offsets.max_translation_mm);
      p.offsets.max_rotation_deg = j.at("offsets").value("max_rotation_deg", p.offsets.max_rotation_deg);
    }
    p.seed = j.value("seed", p.seed);
    if (j.contains("criteria")) p.criteria = criteria_from_json(j.at("criteria"), p.criteria);
    if (j.contains("space")) p.space = space_from_json(j.at("space"), p.space);
    if (j.contains("resolution")) p.resolution = resolution_from_json(j.at("resolution"), p.resolution);
    if (j.contains("budget")) p.budget = budget_from_json(j.at("budget"), p.budget);
    p.validate();
    return p;
  });
}

TwoStageSettings trial_settings(std::uint64_t seed, const RegistrationBudget& budget) {
  TwoStageSettings s = default_two_stage_settings(seed);
  s.coarse.anneal.max_evaluations = budget.coarse_evaluations;
  s.middle.anneal.max_evaluations = budget.middle_evaluations;
  s.fine.anneal.max_evaluations = budget.fine_evaluations;
  return s;
}

Volume format_volume(double fov_cm, int voxels, bool facial_structures, bool vessels, bool contrast,
                     std::uint64_t seed) {
  const PhantomSpec spec = head_phantom_for_fov(fov_cm, voxels, facial_structures, vessels, contrast, seed);
  return crop_to_fov(generate_phantom(spec), fov_cm);
}

Volume reference_volume(const Resolution& res, bool facial_structures, bool vessels, bool contrast,
                        std::uint64_t seed) {
  return generate_phantom(
      default_head_phantom(res.reference_voxels, res.reference_extent_mm, facial_structures, vessels, contrast, seed));
}

namespace {

void fill_outcome(ResultRow& row, const RegistrationResult& r) {
  row.recovered = r.recovered;
  row.error = *r.error;
  row.passed = *r.passed;
  row.score = r.score;
  row.evaluations = r.evaluations;
  row.wall_time_s = r.wall_time_s;
  row.insufficient_landmarks = r.insufficient_landmarks;
}

// A trial that throws keeps the machine-based pose and fails.
void fill_failure(ResultRow& row, const RigidTransformd& init, const CArmCamera& camera, const std::string& what) {
  row.recovered = init;
  row.error = pose_error(init, row.truth, Vector3d::Zero(), camera.view_axis());
  row.passed = SuccessFlags{};
  row.failure = what;
}

void run_trial(ResultRow& row, const DrrRenderer& renderer, const Image2D& fixed, const CArmCamera& camera,
               const SearchSpace& space, const RegistrationBudget& budget, const SuccessCriteria& criteria,
               std::uint64_t settings_seed) {
  const RigidTransformd init = row.truth * row.offset;
  try {
    const RegistrationResult r = two_stage_register(renderer, fixed, camera, init, space,
                                                    trial_settings(settings_seed, budget), row.truth, criteria);
    fill_outcome(row, r);
  } catch (const std::exception& e) {
    fill_failure(row, init, camera, e.what());
  }
}

bool row_order(const ResultRow& a, const ResultRow& b) {
  return a.cell != b.cell ? a.cell < b.cell : a.trial < b.trial;
}

}  // namespace

std::vector<ResultRow> run_phantom_matrix(const PhantomMatrixPlan& plan, const RowCallback& on_row) {
  plan.validate();
  const Resolution& res = plan.resolution;
  const auto offsets = standard_offsets();
  const std::size_t n_vol = plan.volume_fovs_cm.size();
  const std::size_t n_img = plan.image_fovs_cm.size();
  const std::size_t n_off = plan.offsets.size();

  std::vector<CArmCamera> cameras;
  std::vector<Image2D> clean;
  {
    const Volume ref = reference_volume(res, plan.facial_structures);
    const DrrRenderer ref_renderer(ref);
    for (double g : plan.image_fovs_cm) {
      cameras.push_back(CArmCamera::with_fov(g, res.detector_pixels));
      clean.push_back(ref_renderer.render(cameras.back(), RigidTransformd(), {}));
    }
  }

  std::vector<ResultRow> rows;
  for (std::size_t f = 0; f < n_vol; ++f) {
    const double vol_fov = plan.volume_fovs_cm[f];
    const DrrRenderer renderer(format_volume(vol_fov, res.volume_voxels, plan.facial_structures));
    for (std::size_t rt = 0; rt < plan.run_types.size(); ++rt) {
      const RunType run = plan.run_types[rt];
      for (std::size_t g = 0; g < n_img; ++g) {
        for (std::size_t o = 0; o < n_off; ++o) {
          const int cell = static_cast<int>(((rt * n_vol + f) * n_img + g) * n_off + o);
          for (int trial = 0; trial < plan.trials_per_cell; ++trial) {
            ResultRow row;
            row.experiment = "phantom-matrix";
            row.run_type = to_string(run);
            row.cell = cell;
            row.trial = trial;
            row.seed = derive_seed({plan.seed, static_cast<std::uint64_t>(cell), static_cast<std::uint64_t>(trial)});
            row.volume_fov_cm = vol_fov;
            row.image_fov_cm = plan.image_fovs_cm[g];
            row.offset_label = "T" + std::to_string(plan.offsets[o] + 1);
            row.clinically_relevant = clinically_relevant(vol_fov, row.image_fov_cm);
            row.offset = offsets[static_cast<std::size_t>(plan.offsets[o])];
            row.truth = RigidTransformd();
            const Image2D fixed = apply_poisson_noise(clean[g], run_type_photons(run), derive_seed({row.seed, 1}));
            run_trial(row, renderer, fixed, cameras[g], plan.space, plan.budget, plan.criteria,
                      derive_seed({row.seed, 2}));
            if (on_row) on_row(row);
            rows.push_back(std::move(row));
          }
        }
      }
    }
  }
  std::sort(rows.begin(), rows.end(), row_order);
  return rows;
}

std::vector<ResultRow> run_clinical_style(const ClinicalPlan& plan, const RowCallback& on_row) {
  plan.validate();
  const Resolution& res = plan.resolution;
  std::vector<ResultRow> rows;
  for (std::size_t p = 0; p < plan.contrast.size(); ++p) {
    const bool contrast = plan.contrast[p];
    GroundTruthDataset data;
    {
      const Volume patient = reference_volume(res, true, true, contrast, plan.seed);
      const Trajectory traj =
          Trajectory::centered(CArmCamera::with_fov(plan.fov_cm, res.detector_pixels), plan.n_frames, plan.arc_deg);
      GroundTruthOptions opt;
      opt.recon_voxels = res.volume_voxels;
      opt.recon_fov_cm = plan.fov_cm;
      opt.noise = NoiseModel::poisson(plan.run_photons);
      opt.seed = derive_seed({plan.seed, static_cast<std::uint64_t>(p), 7});
      data = ground_truth_pairs(patient, traj, opt);
    }
    const DrrRenderer renderer(data.reconstruction);
    for (int trial = 0; trial < plan.trials_per_patient; ++trial) {
      ResultRow row;
      row.experiment = "clinical-style";
      row.run_type = "rotational";
      row.cell = static_cast<int>(p);
      row.trial = trial;
      // Shared across patients so contrast on/off see the same draws.
      row.seed = derive_seed({plan.seed, static_cast<std::uint64_t>(trial)});
      row.volume_fov_cm = plan.fov_cm;
      row.image_fov_cm = plan.fov_cm;
      row.offset_label = "random";
      row.contrast = contrast;
      row.clinically_relevant = clinically_relevant(plan.fov_cm, plan.fov_cm);
      Rng frame_rng(derive_seed({row.seed, 1}));
      row.frame = static_cast<int>(frame_rng.uniform_index(static_cast<std::uint64_t>(plan.n_frames)));
      row.offset = sample_offset(plan.offsets, derive_seed({row.seed, 2}));
      row.truth = data.truth;
      const Frame& frame = data.frames[static_cast<std::size_t>(row.frame)];
      run_trial(row, renderer, frame.image, frame.camera, plan.space, plan.budget, plan.criteria,
                derive_seed({row.seed, 3}));
      if (on_row) on_row(row);
      rows.push_back(std::move(row));
    }
  }
  std::sort(rows.begin(), rows.end(), row_order);
  return rows;
}

namespace {

const char* kColumns[] = {"experiment", "run_type", "cell", "trial", "seed", "volume_fov_cm", "image_fov_cm",
                          "offset", "frame", "contrast", "clinically_relevant", "offset_tx", "offset_ty",
                          "offset_tz", "offset_rx", "offset_ry", "offset_rz", "truth_tx", "truth_ty", "truth_tz",
                          "truth_rx", "truth_ry", "truth_rz", "recovered_tx", "recovered_ty", "recovered_tz",
                          "recovered_rx", "recovered_ry", "recovered_rz", "t_mm", "r_deg", "in_plane_mm",
                          "out_of_plane_mm", "pass_t", "pass_r", "pass_both", "score", "evaluations",
                          "insufficient_landmarks", "failure"};
constexpr std::size_t kColumnCount = sizeof(kColumns) / sizeof(kColumns[0]);

void write_transform(std::ostream& os, const RigidTransformd& t) {
  const Vector3d r = rad2deg(1.0) * rotation_to_vector(t.rotation());
  os << ',' << t.translation().x() << ',' << t.translation().y() << ',' << t.translation().z() << ',' << r.x() << ','
     << r.y() << ',' << r.z();
}

RigidTransformd read_transform(const std::vector<std::string>& f, std::size_t at) {
  const Vector3d t(std::stod(f[at]), std::stod(f[at + 1]), std::stod(f[at + 2]));
  const Vector3d r(std::stod(f[at + 3]), std::stod(f[at + 4]), std::stod(f[at + 5]));
  return {rotation_from_vector(Vector3d(deg2rad(1.0) * r)), t};
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < kColumnCount; ++i) os << (i ? "," : "") << kColumns[i];
  os << '\n';
  for (const auto& r : rows) {
    os << r.experiment << ',' << r.run_type << ',' << r.cell << ',' << r.trial << ',' << r.seed << ','
       << r.volume_fov_cm << ',' << r.image_fov_cm << ',' << r.offset_label << ',' << r.frame << ','
       << int(r.contrast) << ',' << int(r.clinically_relevant);
    write_transform(os, r.offset);
    write_transform(os, r.truth);
    write_transform(os, r.recovered);
    os << ',' << r.error.translation_mm << ',' << r.error.rotation_deg << ',' << r.error.in_plane_mm << ','
       << r.error.out_of_plane_mm << ',' << int(r.passed.translation) << ',' << int(r.passed.rotation) << ','
       << int(r.passed.both) << ',' << r.score << ',' << r.evaluations << ','
       << int(r.insufficient_landmarks) << ',' << sanitize(r.failure) << '\n';
  }
  return os.str();
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw IoError(IoError::Kind::MalformedHeader, "results CSV is empty");
  std::vector<ResultRow> rows;
  long line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != kColumnCount)
      throw IoError(IoError::Kind::MalformedHeader, "results CSV line " + std::to_string(line_no) +
                                                        " has " + std::to_string(f.size()) + " fields");
    try {
      ResultRow r;
      r.experiment = f[0];
      r.run_type = f[1];
      r.cell = std::stoi(f[2]);
      r.trial = std::stoi(f[3]);
      r.seed = std::stoull(f[4]);
      r.volume_fov_cm = std::stod(f[5]);
      r.image_fov_cm = std::stod(f[6]);
      r.offset_label = f[7];
      r.frame = std::stoi(f[8]);
      r.contrast = f[9] == "1";
      r.clinically_relevant = f[10] == "1";
      r.offset = read_transform(f, 11);
      r.truth = read_transform(f, 17);
      r.recovered = read_transform(f, 23);
      r.error.translation_mm = std::stod(f[29]);
      r.error.rotation_deg = std::stod(f[30]);
      r.error.in_plane_mm = std::stod(f[31]);
      r.error.out_of_plane_mm = std::stod(f[32]);
      r.passed.translation = f[33] == "1";
      r.passed.rotation = f[34] == "1";
      r.passed.both = f[35] == "1";
      r.score = std::stod(f[36]);
      r.evaluations = std::stol(f[37]);
      r.insufficient_landmarks = f[38] == "1";
      r.failure = f[39];
      rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw IoError(IoError::Kind::MalformedHeader,
                    "results CSV line " + std::to_string(line_no) + ": bad number (" + e.what() + ")");
    }
  }
  return rows;
}

Moments moments(const std::vector<double>& values) {
  Moments m;
  m.count = static_cast<long>(values.size());
  if (values.empty()) return m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.stddev = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  m.min = *lo;
  m.max = *hi;
  return m;
}

namespace {

StatsBlock block(const std::vector<const ResultRow*>& rows) {
  std::vector<double> t, ip, r;
  for (const auto* row : rows) {
    t.push_back(row->error.translation_mm);
    ip.push_back(row->error.in_plane_mm);
    r.push_back(row->error.rotation_deg);
  }
  return {moments(t), moments(ip), moments(r)};
}

}  // namespace

Summary summarize(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("summarize: no results");
  std::vector<const ResultRow*> all, relevant, ok, ok_relevant;
  long pass_t = 0;
  long pass_r = 0;
  for (const auto& r : rows) {
    all.push_back(&r);
    if (r.clinically_relevant) relevant.push_back(&r);
    if (r.passed.both) ok.push_back(&r);
    if (r.passed.both && r.clinically_relevant) ok_relevant.push_back(&r);
    pass_t += r.passed.translation;
    pass_r += r.passed.rotation;
  }
  Summary s;
  s.all = block(all);
  s.all_relevant = block(relevant);
  s.successful = block(ok);
  s.successful_relevant = block(ok_relevant);
  s.trials = static_cast<long>(all.size());
  s.relevant_trials = static_cast<long>(relevant.size());
  s.success_rate = static_cast<double>(ok.size()) / static_cast<double>(s.trials);
  s.relevant_success_rate =
      relevant.empty() ? 0.0 : static_cast<double>(ok_relevant.size()) / static_cast<double>(relevant.size());
  s.translation_pass_rate = static_cast<double>(pass_t) / static_cast<double>(s.trials);
  s.rotation_pass_rate = static_cast<double>(pass_r) / static_cast<double>(s.trials);
  return s;
}

std::vector<double> translation_bin_edges() {
  std::vector<double> e;
  for (int i = 0; i <= 10; ++i) e.push_back(i / 10.0);
  e.push_back(2.0);
  e.push_back(5.0);
  e.push_back(std::numeric_limits<double>::infinity());
  return e;
}

std::vector<double> rotation_bin_edges() {
  std::vector<double> e;
  for (int i = 0; i <= 6; ++i) e.push_back(i * 0.5);
  e.push_back(5.0);
  e.push_back(10.0);
  e.push_back(std::numeric_limits<double>::infinity());
  return e;
}

Histogram histogram(const std::vector<double>& values, const std::vector<double>& edges) {
  if (edges.size() < 2) throw std::invalid_argument("histogram needs at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("histogram edges must increase");
  Histogram h{edges, std::vector<long>(edges.size() - 1, 0)};
  for (double v : values) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), v);
    if (it == edges.begin() || it == edges.end()) continue;
    ++h.counts[static_cast<std::size_t>(it - edges.begin() - 1)];
  }
  return h;
}

nlohmann::json to_json(const Moments& m) {
  return {{"count", m.count}, {"mean", m.mean}, {"stddev", m.stddev}, {"min", m.min}, {"max", m.max}};
}

namespace {

nlohmann::json to_json(const StatsBlock& b) {
  return {{"translation_mm", to_json(b.translation)},
          {"in_plane_mm", to_json(b.in_plane)},
          {"rotation_deg", to_json(b.rotation)}};
}

}  // namespace

nlohmann::json to_json(const Summary& s) {
  return {{"trials", s.trials},
          {"relevant_trials", s.relevant_trials},
          {"success_rate", s.success_rate},
          {"relevant_success_rate", s.relevant_success_rate},
          {"translation_pass_rate", s.translation_pass_rate},
          {"rotation_pass_rate", s.rotation_pass_rate},
          {"all", to_json(s.all)},
          {"all_relevant", to_json(s.all_relevant)},
          {"successful", to_json(s.successful)},
          {"successful_relevant", to_json(s.successful_relevant)}};
}

nlohmann::json to_json(const Histogram& h) {
  nlohmann::json edges = nlohmann::json::array();
  for (double e : h.edges) {
    if (std::isinf(e))
      edges.push_back("More");
    else
      edges.push_back(e);
  }
  return {{"edges", edges}, {"counts", h.counts}};
}

namespace {

std::map<std::string, std::vector<ResultRow>> group_by(const std::vector<ResultRow>& rows,
                                                       const std::function<std::string(const ResultRow&)>& key) {
  std::map<std::string, std::vector<ResultRow>> groups;
  for (const auto& r : rows) groups[key(r)].push_back(r);
  return groups;
}

nlohmann::json histograms(const std::vector<ResultRow>& rows, bool relevant_only) {
  std::vector<double> t, r;
  for (const auto& row : rows) {
    if (relevant_only && !row.clinically_relevant) continue;
    t.push_back(row.error.translation_mm);
    r.push_back(row.error.rotation_deg);
  }
  return {{"translation_mm", to_json(histogram(t, translation_bin_edges()))},
          {"rotation_deg", to_json(histogram(r, rotation_bin_edges()))}};
}

}  // namespace

nlohmann::json report_json(const std::vector<ResultRow>& rows) {
  nlohmann::json j;
  j["summary"] = to_json(summarize(rows));
  j["histograms"] = {{"all", histograms(rows, false)}, {"relevant", histograms(rows, true)}};
  for (const auto& [key, group] : group_by(rows, [](const ResultRow& r) { return r.experiment + "/" + r.run_type; })) {
    j["by_run"][key] = {{"summary", to_json(summarize(group))},
                        {"histograms", {{"all", histograms(group, false)}, {"relevant", histograms(group, true)}}}};
  }
  const bool clinical = std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.experiment == "clinical-style"; });
  if (clinical) {
    for (const auto& [key, group] :
         group_by(rows, [](const ResultRow& r) { return std::string(r.contrast ? "contrast" : "no_contrast"); })) {
      const Summary s = summarize(group);
      j["by_contrast"][key] = {{"translation_pass_rate", s.translation_pass_rate},
                               {"rotation_pass_rate", s.rotation_pass_rate},
                               {"trials", s.trials}};
    }
  }
  return j;
}

std::string report_text(const std::vector<ResultRow>& rows) {
  const Summary s = summarize(rows);
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  auto line = [&](const char* name, const StatsBlock& b) {
    os << "  " << std::left << std::setw(22) << name << std::right << " n=" << std::setw(5) << b.translation.count
       << "  t mean " << b.translation.mean << " sd " << b.translation.stddev << " min " << b.translation.min
       << " max " << b.translation.max << " | r mean " << b.rotation.mean << " sd " << b.rotation.stddev << " min "
       << b.rotation.min << " max " << b.rotation.max << '\n';
  };
  os << "trials " << s.trials << ", clinically relevant " << s.relevant_trials << '\n';
  os << "success rate " << 100 * s.success_rate << "%, relevant subset " << 100 * s.relevant_success_rate << "%\n";
  os << "translation pass " << 100 * s.translation_pass_rate << "%, rotation pass " << 100 * s.rotation_pass_rate
     << "%\n";
  os << "residuals (t mm, r deg):\n";
  line("all", s.all);
  line("all, relevant", s.all_relevant);
  line("successful", s.successful);
  line("successful, relevant", s.successful_relevant);
  for (const auto& [key, group] : group_by(rows, [](const ResultRow& r) { return r.experiment + "/" + r.run_type; })) {
    const Summary g = summarize(group);
    os << key << ": success " << 100 * g.success_rate << "%, relevant " << 100 * g.relevant_success_rate << "% of "
       << g.relevant_trials << '\n';
  }
  for (const auto& [key, group] :
       group_by(rows, [](const ResultRow& r) { return r.experiment == "clinical-style" ? std::string(r.contrast ? "contrast" : "no contrast") : std::string(); })) {
    if (key.empty()) continue;
    const Summary g = summarize(group);
    os << key << ": translation pass " << 100 * g.translation_pass_rate << "%, rotation pass "
       << 100 * g.rotation_pass_rate << "%\n";
  }
  return os.str();
}

std::vector<LandscapePoint> similarity_landscape(const DrrRenderer& renderer, const Image2D& fixed,
                                                 const CArmCamera& camera, const RigidTransformd& base,
                                                 const std::vector<LandscapeAxis>& axes, const SimilarityConfig& sim,
                                                 const DrrConfig& drr) {
  if (axes.empty()) throw std::invalid_argument("landscape needs at least one axis");
  std::size_t total = 1;
  for (const auto& a : axes) {
    if (a.steps < 1) throw std::invalid_argument("landscape axis needs at least one step");
    if (a.dof < 0 || a.dof > 4) throw std::invalid_argument("landscape dof must lie in 0..4");
    if (a.hi < a.lo) throw std::invalid_argument("landscape axis range is reversed");
    total *= static_cast<std::size_t>(a.steps);
  }
  const GradientDifference metric(fixed, sim);
  std::vector<LandscapePoint> points;
  points.reserve(total);
  std::vector<int> idx(axes.size(), 0);
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t rem = n;
    for (std::size_t a = axes.size(); a-- > 0;) {
      idx[a] = static_cast<int>(rem % static_cast<std::size_t>(axes[a].steps));
      rem /= static_cast<std::size_t>(axes[a].steps);
    }
    SearchVector x = SearchVector::Zero();
    LandscapePoint p;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& ax = axes[a];
      const double c = ax.steps == 1 ? 0.5 * (ax.lo + ax.hi) : ax.lo + (ax.hi - ax.lo) * idx[a] / (ax.steps - 1);
      x[ax.dof] = c;
      p.coords.push_back(c);
    }
    p.score = metric.score(renderer.render(camera, apply_search_offset(base, x, camera), drr));
    points.push_back(std::move(p));
  }
  return points;
}

std::string landscape_csv(const std::vector<LandscapeAxis>& axes, const std::vector<LandscapePoint>& points) {
  static const char* names[] = {"tx_mm", "ty_mm", "rx_deg", "ry_deg", "rz_deg"};
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& a : axes) os << names[a.dof] << ',';
  os << "score\n";
  for (const auto& p : points) {
    for (double c : p.coords) os << c << ',';
    os << p.score << '\n';
  }
  return os.str();
}

}  // namespace fluoro
