#include "fluoro/cli.hpp"

#include "fluoro/calibration.hpp"
#include "fluoro/harness.hpp"
#include "fluoro/io.hpp"
#include "fluoro/parallel.hpp"
#include "fluoro/phantom.hpp"
#include "fluoro/random.hpp"
#include "fluoro/recon.hpp"
#include "fluoro/registration.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;

namespace fluoro::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void append_value(std::vector<std::string>& out, const std::string& flag, const nlohmann::json& v) {
  if (v.is_boolean()) {
    out.push_back(flag + "=" + (v.get<bool>() ? "true" : "false"));
  } else if (v.is_array()) {
    out.push_back(flag);
    for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
  } else if (v.is_string()) {
    out.push_back(flag);
    out.push_back(v.get<std::string>());
  } else if (v.is_number()) {
    out.push_back(flag);
    out.push_back(v.dump());
  } else {
    throw UsageError("config: unsupported value for '" + flag + "'");
  }
}

bool informational_key(const std::string& k) {
  return k == "argv" || k == "options" || k == "subcommand" || k == "tool" || (!k.empty() && k[0] == '_');
}

void flatten(const nlohmann::json& obj, const std::vector<std::string>& tokens, std::vector<std::string>& out) {
  for (const auto& [key, value] : obj.items()) {
    if (informational_key(key)) continue;
    if (value.is_object()) {
      // Section for a subcommand: only applies when that subcommand runs.
      if (std::find(tokens.begin(), tokens.end(), key) != tokens.end()) flatten(value, tokens, out);
      continue;
    }
    append_value(out, "--" + key, value);
  }
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> base;
  std::vector<fs::path> configs;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      configs.emplace_back(args[++i]);
    } else if (a.rfind("--config=", 0) == 0) {
      configs.emplace_back(a.substr(9));
    } else {
      base.push_back(a);
    }
  }
  for (const auto& path : configs) {
    nlohmann::json j;
    try {
      j = read_json(path);
    } catch (const std::exception& e) {
      throw UsageError(std::string("cannot read config: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    if (j.contains("argv")) {
      for (const auto& a : j.at("argv")) {
        if (!a.is_string()) throw UsageError("config argv entries must be strings");
        base.push_back(a.get<std::string>());
      }
    }
    std::vector<std::string> extra;
    flatten(j, base, extra);
    base.insert(base.end(), extra.begin(), extra.end());
  }
  return base;
}

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir = "out";
  bool verbose = false;
};

struct Context {
  Globals g;
  std::ostream& out;
  std::ostream& err;
  fs::path dir() const { return fs::path(g.out_dir); }
  void log(const std::string& msg) const {
    if (g.verbose) err << msg << std::endl;
  }
};

// ---- option structs -------------------------------------------------------

struct PhantomOpts {
  double fov_cm = 27.0;
  int voxels = 96;
  bool facial = true;
  bool vessels = false;
  bool contrast = false;
  bool reference = false;
  double extent_mm = 256.0;
  std::string name = "phantom";
};

struct CameraOpts {
  std::string camera;
  double fov_cm = 27.0;
  int pixels = 128;
  double rotation_deg = 0.0;
  double angulation_deg = 0.0;

  CArmCamera resolve() const {
    if (!camera.empty()) return load_camera(camera);
    CArmCamera c = CArmCamera::with_fov(fov_cm, pixels, rotation_deg, angulation_deg);
    return c;
  }
  void validate() const {
    if (camera.empty()) {
      if (!(fov_cm > 0)) throw UsageError("--fov must be positive");
      if (pixels < 2) throw UsageError("--pixels must be at least 2");
    }
  }
};

struct DrrOpts {
  std::string volume;
  CameraOpts cam;
  std::string transform;
  double step_mm = 0.0;
  int downsample = 1;
  std::string interpolation = "trilinear";
  double photons = 0.0;
  std::string name = "drr";
};

struct RunOpts {
  std::string volume;
  CameraOpts cam;
  int frames = 120;
  double arc_deg = 200.0;
  double photons = 0.0;
};

struct ReconOpts {
  std::string run;
  int voxels = 96;
  double fov_cm = 25.6;
  std::string window = "none";
  bool parker = true;
  bool clamp = true;
  std::string name = "recon";
};

struct CalibOpts {
  std::string sag = "default";
  double noise_px = 0.25;
  double radius_mm = 100.0;
  double spacing_deg = 20.0;
  std::vector<double> rotation_range{-100.0, 100.0};
  std::vector<double> angulation_range{-40.0, 40.0};
  std::vector<double> query;
  int draws = 0;
  double fov_cm = 27.0;
  int pixels = 256;
};

struct RegisterOpts {
  std::string volume;
  std::string image;
  std::string camera;
  std::string init;
  std::string truth;
  double t_bounds = 30.0;
  double r_bounds = 12.0;
  bool single_stage = false;
  int downsample = 1;
  long coarse_evals = 1500;
  long mid_evals = 200;
  long fine_evals = 150;
  double t_max = 1.0;
  double r_max = 3.0;
  bool in_plane = false;
};

struct MatrixOpts {
  std::string plan = "default";
  int trials = 0;
  std::vector<double> volume_fovs;
  std::vector<double> image_fovs;
  std::vector<int> offsets;
  std::vector<std::string> run_types;
  int voxels = 0;
  int pixels = 0;
  int reference_voxels = 0;
  long coarse_evals = 0;
  long mid_evals = -1;
  long fine_evals = 0;
};

struct ClinicalOpts {
  std::string plan = "default";
  int trials = 0;
  double fov_cm = 0.0;
  int frames = 0;
  double arc_deg = 0.0;
  int voxels = 0;
  int pixels = 0;
  int reference_voxels = 0;
  double run_photons = 0.0;
  long coarse_evals = 0;
  long mid_evals = -1;
  long fine_evals = 0;
};

struct LandscapeOpts {
  std::string volume;
  std::string image;
  std::string camera;
  std::string base;
  std::vector<std::string> axes{"tx:-15:15:33", "ty:-15:15:33"};
};

struct ReportOpts {
  std::string results;
};

// ---- helpers --------------------------------------------------------------

RigidTransformd load_optional_transform(const std::string& path) {
  return path.empty() ? RigidTransformd() : load_transform(path);
}

void write_manifest(const Context& ctx, const std::vector<std::string>& effective, const CLI::App* sub) {
  nlohmann::json m;
  m["tool"] = "fluoro";
  // Output location, thread count and verbosity do not affect results and
  // are left to the replaying command line.
  std::vector<std::string> replay;
  for (std::size_t i = 0; i < effective.size(); ++i) {
    const std::string& a = effective[i];
    if (a == "--out-dir" || a == "--threads") {
      ++i;
      continue;
    }
    if (a.rfind("--out-dir=", 0) == 0 || a.rfind("--threads=", 0) == 0 || a == "--verbose" || a == "-v") continue;
    replay.push_back(a);
  }
  if (std::find(replay.begin(), replay.end(), "--seed") == replay.end()) {
    replay.insert(replay.begin(), {"--seed", std::to_string(ctx.g.seed)});
  }
  m["argv"] = replay;
  std::string path;
  nlohmann::json options = nlohmann::json::object();
  for (const CLI::App* a = sub; a != nullptr; a = a->get_parent()) {
    if (a->get_parent() != nullptr) path = a->get_name() + (path.empty() ? "" : " " + path);
    for (const CLI::Option* opt : a->get_options()) {
      if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
      const std::string key = opt->get_single_name();
      if (key == "config" || key == "out-dir" || key == "threads" || key == "verbose") continue;
      const auto& res = opt->results();
      if (!res.empty())
        options[key] = res.size() == 1 ? nlohmann::json(res.front()) : nlohmann::json(res);
      else if (opt->get_default_str().empty() && opt->get_expected_max() == 0)
        options[key] = "false";  // plain flag left unset
      else
        options[key] = opt->get_default_str();
    }
  }
  m["subcommand"] = path;
  m["options"] = options;
  write_json(m, ctx.dir() / "manifest.json");
}

CLI::App* add_camera_options(CLI::App* app, CameraOpts& c) {
  app->add_option("--camera", c.camera, "camera JSON (overrides the geometry flags)");
  app->add_option("--fov", c.fov_cm, "image format diameter in cm")->capture_default_str();
  app->add_option("--pixels", c.pixels, "detector pixels per side")->capture_default_str();
  app->add_option("--rotation", c.rotation_deg, "C-arm rotation in degrees")->capture_default_str();
  app->add_option("--angulation", c.angulation_deg, "C-arm angulation in degrees")->capture_default_str();
  return app;
}

// ---- subcommands ----------------------------------------------------------

void cmd_phantom(const Context& ctx, const PhantomOpts& o) {
  Volume v;
  if (o.reference) {
    v = generate_phantom(default_head_phantom(o.voxels, o.extent_mm, o.facial, o.vessels, o.contrast, ctx.g.seed));
  } else {
    v = format_volume(o.fov_cm, o.voxels, o.facial, o.vessels, o.contrast, ctx.g.seed);
  }
  save_volume(v, ctx.dir() / o.name);
  ctx.out << "wrote " << (ctx.dir() / (o.name + ".vol.json")).string() << '\n';
}

void cmd_drr(const Context& ctx, const DrrOpts& o) {
  const Volume vol = load_volume(o.volume);
  const CArmCamera cam = o.cam.resolve();
  DrrConfig cfg;
  cfg.step_mm = o.step_mm;
  cfg.downsample = o.downsample;
  cfg.interpolation = o.interpolation == "nearest" ? Interpolation::Nearest : Interpolation::Trilinear;
  Image2D img = render_drr(vol, cam, load_optional_transform(o.transform), cfg);
  if (o.photons > 0) img = apply_poisson_noise(img, o.photons, ctx.g.seed);
  save_image(img, ctx.dir() / o.name);
  save_pgm(img, ctx.dir() / (o.name + ".pgm"));
  save_camera(cam.downsampled(o.downsample), ctx.dir() / (o.name + ".cam.json"));
  ctx.out << "wrote " << (ctx.dir() / (o.name + ".img.json")).string() << '\n';
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d", i);
  return buf;
}

void cmd_simulate_run(const Context& ctx, const RunOpts& o) {
  const Volume vol = load_volume(o.volume);
  const Trajectory traj = Trajectory::centered(o.cam.resolve(), o.frames, o.arc_deg);
  const NoiseModel noise = o.photons > 0 ? NoiseModel::poisson(o.photons) : NoiseModel::none();
  const auto frames = simulate_rotational_run(vol, traj, {}, noise, ctx.g.seed);
  const fs::path run = ctx.dir() / "run";
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string n = frame_name(static_cast<int>(i));
    save_image(frames[i].image, run / n);
    save_camera(frames[i].camera, run / (n + ".cam.json"));
  }
  ctx.out << "wrote " << frames.size() << " frames to " << run.string() << '\n';
}

std::vector<Frame> load_run(const fs::path& dir) {
  std::vector<Frame> frames;
  for (int i = 0;; ++i) {
    const fs::path img = dir / (frame_name(i) + ".img.json");
    if (!fs::exists(img)) break;
    frames.push_back({load_image(img), load_camera(dir / (frame_name(i) + ".cam.json"))});
  }
  if (frames.empty()) throw IoError(IoError::Kind::Unreadable, "no frames found in " + dir.string());
  return frames;
}

void cmd_reconstruct(const Context& ctx, const ReconOpts& o) {
  const auto frames = load_run(o.run);
  FdkConfig cfg;
  cfg.window = o.window == "hann" ? FdkConfig::Window::Hann : FdkConfig::Window::None;
  cfg.parker = o.parker;
  cfg.clamp_negative = o.clamp;
  const Volume grid = Volume::centered(o.voxels, o.fov_cm * 10.0 / o.voxels, o.fov_cm);
  Volume rec = fdk_reconstruct(frames, grid, cfg);
  if (o.clamp) rec = crop_to_fov(rec, o.fov_cm);
  save_volume(rec, ctx.dir() / o.name);
  ctx.out << "wrote " << (ctx.dir() / (o.name + ".vol.json")).string() << '\n';
}

void cmd_calibrate(const Context& ctx, const CalibOpts& o) {
  const SagModel sag = o.sag == "none" ? SagModel::none() : SagModel::default_model();
  GridRange range;
  range.rotation_min_deg = o.rotation_range[0];
  range.rotation_max_deg = o.rotation_range[1];
  range.angulation_min_deg = o.angulation_range[0];
  range.angulation_max_deg = o.angulation_range[1];
  range.spacing_deg = o.spacing_deg;
  CalibrationOptions copt;
  copt.marker_circumradius_mm = o.radius_mm;
  copt.marker_noise_px = o.noise_px;
  copt.seed = ctx.g.seed;
  const CArmCamera base = CArmCamera::with_fov(o.fov_cm, o.pixels);
  const CalibrationGrid grid = build_calibration_grid(sag, range, base, copt);
  write_json(to_json(grid), ctx.dir() / "grid.json");
  if (o.query.size() == 2) {
    save_transform(machine_register(grid, o.query[0], o.query[1]), ctx.dir() / "machine_init.json");
    write_json(to_json(machine_registration_error(grid, sag, o.query[0], o.query[1])),
               ctx.dir() / "machine_init_error.json");
  }
  if (o.draws > 0) {
    nlohmann::json rows = nlohmann::json::array();
    long below = 0;
    for (int d = 0; d < o.draws; ++d) {
      const std::uint64_t s = derive_seed({ctx.g.seed, static_cast<std::uint64_t>(d)});
      CalibrationOptions dopt = copt;
      dopt.seed = derive_seed({s, 1});
      const CalibrationGrid g = build_calibration_grid(sag, range, base, dopt);
      Rng rng(derive_seed({s, 2}));
      const double rot = rng.uniform(range.rotation_min_deg, range.rotation_max_deg);
      const double ang = rng.uniform(range.angulation_min_deg, range.angulation_max_deg);
      const PoseError e = machine_registration_error(g, sag, rot, ang);
      below += e.in_plane_mm < 0.2;
      rows.push_back({{"rotation_deg", rot}, {"angulation_deg", ang}, {"error", to_json(e)}});
    }
    write_json({{"draws", rows}, {"fraction_in_plane_below_0_2mm", static_cast<double>(below) / o.draws}},
               ctx.dir() / "accuracy.json");
  }
  ctx.out << "wrote " << (ctx.dir() / "grid.json").string() << '\n';
}

void cmd_register(const Context& ctx, const RegisterOpts& o) {
  const Volume vol = load_volume(o.volume);
  const Image2D fixed = load_image(o.image);
  const CArmCamera cam = load_camera(o.camera);
  const RigidTransformd init = load_optional_transform(o.init);
  std::optional<RigidTransformd> truth;
  if (!o.truth.empty()) truth = load_transform(o.truth);
  const SearchSpace space{o.t_bounds, o.r_bounds};
  const SuccessCriteria criteria{o.t_max, o.r_max, o.in_plane};
  const DrrRenderer renderer(vol);
  RegistrationResult r;
  if (o.single_stage) {
    RegistrationSettings s = default_registration_settings(ctx.g.seed);
    s.drr.downsample = o.downsample;
    s.anneal.max_evaluations = o.coarse_evals;
    r = register_image(renderer, fixed, cam, init, space, s, truth, criteria);
  } else {
    r = two_stage_register(renderer, fixed, cam, init, space,
                           trial_settings(ctx.g.seed, {o.coarse_evals, o.fine_evals, o.mid_evals}), truth, criteria);
  }
  // Wall time stays out of the files so that a replay reproduces them.
  nlohmann::json j = to_json(r);
  j.erase("wall_time_s");
  write_json(j, ctx.dir() / "result.json");
  save_transform(r.recovered, ctx.dir() / "recovered.json");
  ctx.out << j.dump(2) << "\nwall time " << r.wall_time_s << " s\n";
}

void write_experiment(const Context& ctx, const nlohmann::json& plan, const std::vector<ResultRow>& rows) {
  write_json(plan, ctx.dir() / "plan.json");
  write_text(results_csv(rows), ctx.dir() / "results.csv");
  write_json(report_json(rows), ctx.dir() / "summary.json");
  const std::string text = report_text(rows);
  write_text(text, ctx.dir() / "report.txt");
  ctx.out << text;
}

RowCallback progress(const Context& ctx) {
  return [&ctx](const ResultRow& r) {
    std::ostringstream os;
    os.precision(4);
    os << r.experiment << ' ' << r.run_type << " cell " << r.cell << " trial " << r.trial << ": t "
       << r.error.translation_mm << " mm, r " << r.error.rotation_deg << " deg" << (r.passed.both ? "" : " FAIL");
    ctx.log(os.str());
  };
}

PhantomMatrixPlan resolve_matrix_plan(const MatrixOpts& o, const CLI::App* app, const Globals& g) {
  PhantomMatrixPlan p;
  if (o.plan == "default") {
    p.trials_per_cell = 1;
  } else if (o.plan == "desk") {
    p.trials_per_cell = 3;
  } else {
    p = phantom_matrix_plan_from_json(read_json(o.plan));
  }
  if (o.trials > 0) p.trials_per_cell = o.trials;
  if (!o.volume_fovs.empty()) p.volume_fovs_cm = o.volume_fovs;
  if (!o.image_fovs.empty()) p.image_fovs_cm = o.image_fovs;
  if (!o.offsets.empty()) {
    p.offsets.clear();
    for (int k : o.offsets) p.offsets.push_back(k - 1);
  }
  if (!o.run_types.empty()) {
    p.run_types.clear();
    for (const auto& s : o.run_types) p.run_types.push_back(run_type_from_string(s));
  }
  if (o.voxels > 0) p.resolution.volume_voxels = o.voxels;
  if (o.pixels > 0) p.resolution.detector_pixels = o.pixels;
  if (o.reference_voxels > 0) p.resolution.reference_voxels = o.reference_voxels;
  if (o.coarse_evals > 0) p.budget.coarse_evaluations = o.coarse_evals;
  if (o.fine_evals > 0) p.budget.fine_evaluations = o.fine_evals;
  if (o.mid_evals >= 0) p.budget.middle_evaluations = o.mid_evals;
  if (app->get_parent()->get_parent()->count("--seed") > 0 || o.plan == "default" || o.plan == "desk") p.seed = g.seed;
  p.validate();
  return p;
}

ClinicalPlan resolve_clinical_plan(const ClinicalOpts& o, const CLI::App* app, const Globals& g) {
  ClinicalPlan p;
  if (o.plan != "default") p = clinical_plan_from_json(read_json(o.plan));
  if (o.trials > 0) p.trials_per_patient = o.trials;
  if (o.fov_cm > 0) p.fov_cm = o.fov_cm;
  if (o.frames > 0) p.n_frames = o.frames;
  if (o.arc_deg > 0) p.arc_deg = o.arc_deg;
  if (o.voxels > 0) p.resolution.volume_voxels = o.voxels;
  if (o.pixels > 0) p.resolution.detector_pixels = o.pixels;
  if (o.reference_voxels > 0) p.resolution.reference_voxels = o.reference_voxels;
  if (o.run_photons > 0) p.run_photons = o.run_photons;
  if (o.coarse_evals > 0) p.budget.coarse_evaluations = o.coarse_evals;
  if (o.fine_evals > 0) p.budget.fine_evaluations = o.fine_evals;
  if (o.mid_evals >= 0) p.budget.middle_evaluations = o.mid_evals;
  if (app->get_parent()->get_parent()->count("--seed") > 0 || o.plan == "default") p.seed = g.seed;
  p.validate();
  return p;
}

std::vector<LandscapeAxis> parse_axes(const std::vector<std::string>& specs) {
  static const std::vector<std::string> names{"tx", "ty", "rx", "ry", "rz"};
  std::vector<LandscapeAxis> axes;
  for (const auto& s : specs) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() != 4) throw UsageError("axis '" + s + "' must look like name:lo:hi:steps");
    const auto it = std::find(names.begin(), names.end(), parts[0]);
    if (it == names.end()) throw UsageError("axis name must be one of tx, ty, rx, ry, rz");
    LandscapeAxis a;
    a.dof = static_cast<int>(it - names.begin());
    try {
      a.lo = std::stod(parts[1]);
      a.hi = std::stod(parts[2]);
      a.steps = std::stoi(parts[3]);
    } catch (const std::logic_error&) {
      throw UsageError("axis '" + s + "' has a malformed number");
    }
    if (a.steps < 1) throw UsageError("axis steps must be at least 1");
    if (a.hi < a.lo) throw UsageError("axis range is reversed");
    axes.push_back(a);
  }
  if (axes.empty()) throw UsageError("at least one --axis is needed");
  return axes;
}

void cmd_landscape(const Context& ctx, const LandscapeOpts& o, const std::vector<LandscapeAxis>& axes) {
  const Volume vol = load_volume(o.volume);
  const Image2D fixed = load_image(o.image);
  const CArmCamera cam = load_camera(o.camera);
  const DrrRenderer renderer(vol);
  const auto points = similarity_landscape(renderer, fixed, cam, load_optional_transform(o.base), axes);
  write_text(landscape_csv(axes, points), ctx.dir() / "landscape.csv");
  ctx.out << "wrote " << points.size() << " grid points to " << (ctx.dir() / "landscape.csv").string() << '\n';
}

void cmd_report(const Context& ctx, const ReportOpts& o) {
  std::ifstream in(o.results);
  if (!in) throw IoError(IoError::Kind::Unreadable, "cannot open " + o.results);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto rows = parse_results_csv(ss.str());
  write_json(report_json(rows), ctx.dir() / "summary.json");
  const std::string text = report_text(rows);
  write_text(text, ctx.dir() / "report.txt");
  ctx.out << text;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"2D/3D registration of X-ray images to rotational reconstructions", "fluoro"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "seed for every stochastic step")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)")->capture_default_str()->check(CLI::NonNegativeNumber);
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "progress on stderr");
  app.add_option("--config", "JSON file whose values override flags");  // consumed by expand_config

  PhantomOpts phantom;
  auto* c_phantom = app.add_subcommand("phantom", "voxelise the head phantom")->fallthrough();
  c_phantom->add_option("--fov", phantom.fov_cm, "volume format diameter in cm")->capture_default_str();
  c_phantom->add_option("--voxels", phantom.voxels, "voxels per side")->capture_default_str();
  c_phantom->add_flag("--facial,!--no-facial", phantom.facial, "facial bones and sinuses")->default_str("true");
  c_phantom->add_flag("--vessels", phantom.vessels, "add the vessel tree");
  c_phantom->add_flag("--contrast", phantom.contrast, "fill vessels with contrast agent");
  c_phantom->add_flag("--reference", phantom.reference, "whole-head grid instead of a format volume");
  c_phantom->add_option("--extent-mm", phantom.extent_mm, "grid extent for --reference")->capture_default_str();
  c_phantom->add_option("--name", phantom.name, "output base name")->capture_default_str();

  DrrOpts drr;
  auto* c_drr = app.add_subcommand("drr", "render a DRR")->fallthrough();
  c_drr->add_option("--volume", drr.volume, "volume (.vol.json)")->required();
  add_camera_options(c_drr, drr.cam);
  c_drr->add_option("--transform", drr.transform, "patient transform JSON");
  c_drr->add_option("--step", drr.step_mm, "ray step in mm (0 = half a voxel)")->capture_default_str();
  c_drr->add_option("--downsample", drr.downsample, "render at dims / factor")->capture_default_str();
  c_drr->add_option("--interpolation", drr.interpolation, "trilinear or nearest")
      ->check(CLI::IsMember({"trilinear", "nearest"}))
      ->capture_default_str();
  c_drr->add_option("--photons", drr.photons, "Poisson noise level (0 = none)")->capture_default_str();
  c_drr->add_option("--name", drr.name, "output base name")->capture_default_str();

  RunOpts run_o;
  auto* c_run = app.add_subcommand("simulate-run", "simulate a rotational acquisition")->fallthrough();
  c_run->add_option("--volume", run_o.volume, "volume (.vol.json)")->required();
  add_camera_options(c_run, run_o.cam);
  c_run->add_option("--frames", run_o.frames, "frames in the run")->capture_default_str();
  c_run->add_option("--arc", run_o.arc_deg, "arc in degrees")->capture_default_str();
  c_run->add_option("--photons", run_o.photons, "Poisson noise level (0 = none)")->capture_default_str();

  ReconOpts recon;
  auto* c_recon = app.add_subcommand("reconstruct", "FDK reconstruction of a run directory")->fallthrough();
  c_recon->add_option("--run", recon.run, "directory with frame_NNNN files")->required();
  c_recon->add_option("--voxels", recon.voxels, "voxels per side")->capture_default_str();
  c_recon->add_option("--fov", recon.fov_cm, "reconstruction diameter in cm")->capture_default_str();
  c_recon->add_option("--window", recon.window, "ramp window")->check(CLI::IsMember({"none", "hann"}))->capture_default_str();
  c_recon->add_flag("--parker,!--no-parker", recon.parker, "short-scan weighting")->default_str("true");
  c_recon->add_flag("--clamp,!--no-clamp", recon.clamp, "clamp negatives and crop to the field of view")->default_str("true");
  c_recon->add_option("--name", recon.name, "output base name")->capture_default_str();

  CalibOpts calib;
  auto* c_calib = app.add_subcommand("calibrate", "build a calibration grid from simulated marker images")->fallthrough();
  c_calib->add_option("--sag", calib.sag, "sag model")->check(CLI::IsMember({"default", "none"}))->capture_default_str();
  c_calib->add_option("--noise-px", calib.noise_px, "marker position noise (pixels)")->capture_default_str();
  c_calib->add_option("--radius-mm", calib.radius_mm, "dodecahedron circumradius")->capture_default_str();
  c_calib->add_option("--spacing", calib.spacing_deg, "grid spacing in degrees")->capture_default_str();
  c_calib->add_option("--rotation-range", calib.rotation_range, "min max rotation")->expected(2)->capture_default_str();
  c_calib->add_option("--angulation-range", calib.angulation_range, "min max angulation")->expected(2)->capture_default_str();
  c_calib->add_option("--query", calib.query, "rotation angulation for a machine-based pose")->expected(2);
  c_calib->add_option("--draws", calib.draws, "Monte-Carlo accuracy draws")->capture_default_str();
  c_calib->add_option("--fov", calib.fov_cm, "image format in cm")->capture_default_str();
  c_calib->add_option("--pixels", calib.pixels, "detector pixels per side")->capture_default_str();

  RegisterOpts reg;
  auto* c_reg = app.add_subcommand("register", "register an image to a volume")->fallthrough();
  c_reg->add_option("--volume", reg.volume, "volume (.vol.json)")->required();
  c_reg->add_option("--image", reg.image, "X-ray image (.img.json)")->required();
  c_reg->add_option("--camera", reg.camera, "camera JSON of the image")->required();
  c_reg->add_option("--init", reg.init, "initial patient transform JSON (default identity)");
  c_reg->add_option("--truth", reg.truth, "ground-truth transform JSON");
  c_reg->add_option("--t-bounds", reg.t_bounds, "translation search bound (mm)")->capture_default_str();
  c_reg->add_option("--r-bounds", reg.r_bounds, "rotation search bound (deg)")->capture_default_str();
  c_reg->add_flag("--single-stage", reg.single_stage, "one anneal at --downsample");
  c_reg->add_option("--downsample", reg.downsample, "single-stage DRR downsample")->capture_default_str();
  c_reg->add_option("--coarse-evals", reg.coarse_evals, "evaluation budget, first stage")->capture_default_str();
  c_reg->add_option("--mid-evals", reg.mid_evals, "evaluation budget, middle stage (0 skips it)")->capture_default_str();
  c_reg->add_option("--fine-evals", reg.fine_evals, "evaluation budget, refinement")->capture_default_str();
  c_reg->add_option("--t-max", reg.t_max, "translation success threshold (mm)")->capture_default_str();
  c_reg->add_option("--r-max", reg.r_max, "rotation success threshold (deg)")->capture_default_str();
  c_reg->add_flag("--in-plane", reg.in_plane, "judge the in-plane translation only");

  auto* c_exp = app.add_subcommand("experiment", "run an experiment plan")->fallthrough();
  c_exp->require_subcommand(1);
  MatrixOpts matrix;
  auto* c_matrix = c_exp->add_subcommand("phantom-matrix", "format matrix with the four fixed offsets")->fallthrough();
  c_matrix->add_option("--plan", matrix.plan, "default (1 trial per cell), desk (3) or a plan JSON")->capture_default_str();
  c_matrix->add_option("--trials", matrix.trials, "trials per cell");
  c_matrix->add_option("--volume-fovs", matrix.volume_fovs, "volume formats in cm");
  c_matrix->add_option("--image-fovs", matrix.image_fovs, "image formats in cm");
  c_matrix->add_option("--offsets", matrix.offsets, "offsets 1..4");
  c_matrix->add_option("--run-types", matrix.run_types, "exposure and/or fluoroscopy");
  c_matrix->add_option("--voxels", matrix.voxels, "volume voxels per side");
  c_matrix->add_option("--pixels", matrix.pixels, "detector pixels per side");
  c_matrix->add_option("--reference-voxels", matrix.reference_voxels, "voxels of the image-source phantom");
  c_matrix->add_option("--coarse-evals", matrix.coarse_evals, "evaluation budget, first stage");
  c_matrix->add_option("--mid-evals", matrix.mid_evals, "evaluation budget, middle stage (0 skips it)");
  c_matrix->add_option("--fine-evals", matrix.fine_evals, "evaluation budget, refinement");
  ClinicalOpts clinical;
  auto* c_clin = c_exp->add_subcommand("clinical-style", "random offsets on reconstructed runs")->fallthrough();
  c_clin->add_option("--plan", clinical.plan, "default or a plan JSON")->capture_default_str();
  c_clin->add_option("--trials", clinical.trials, "trials per patient");
  c_clin->add_option("--fov", clinical.fov_cm, "image format in cm");
  c_clin->add_option("--frames", clinical.frames, "frames per run");
  c_clin->add_option("--arc", clinical.arc_deg, "arc in degrees");
  c_clin->add_option("--voxels", clinical.voxels, "reconstruction voxels per side");
  c_clin->add_option("--pixels", clinical.pixels, "detector pixels per side");
  c_clin->add_option("--reference-voxels", clinical.reference_voxels, "voxels of the patient phantom");
  c_clin->add_option("--run-photons", clinical.run_photons, "noise level of the runs");
  c_clin->add_option("--coarse-evals", clinical.coarse_evals, "evaluation budget, first stage");
  c_clin->add_option("--mid-evals", clinical.mid_evals, "evaluation budget, middle stage (0 skips it)");
  c_clin->add_option("--fine-evals", clinical.fine_evals, "evaluation budget, refinement");

  LandscapeOpts land;
  auto* c_land = app.add_subcommand("landscape", "similarity over a grid of offsets")->fallthrough();
  c_land->add_option("--volume", land.volume, "volume (.vol.json)")->required();
  c_land->add_option("--image", land.image, "X-ray image (.img.json)")->required();
  c_land->add_option("--camera", land.camera, "camera JSON")->required();
  c_land->add_option("--base", land.base, "transform at the grid origin (default identity)");
  c_land->add_option("--axis", land.axes, "name:lo:hi:steps, name in tx ty rx ry rz")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();

  ReportOpts report;
  auto* c_report = app.add_subcommand("report", "summarise a results CSV")->fallthrough();
  c_report->add_option("--results", report.results, "results.csv")->required();

  // CLI11 wants a C-style argv.
  std::vector<std::string> owned{"fluoro"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : owned) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  Context ctx{g, out, err};
  const CLI::App* sub = nullptr;
  std::vector<LandscapeAxis> axes;
  std::optional<PhantomMatrixPlan> matrix_plan;
  std::optional<ClinicalPlan> clinical_plan;
  // Validation happens before any output is written.
  try {
    if (c_phantom->parsed()) {
      sub = c_phantom;
      if (phantom.voxels < 2 || !(phantom.fov_cm > 0) || !(phantom.extent_mm > 0))
        throw UsageError("phantom sizes must be positive");
    } else if (c_drr->parsed()) {
      sub = c_drr;
      drr.cam.validate();
      if (drr.downsample < 1) throw UsageError("--downsample must be at least 1");
      if (drr.step_mm < 0 || drr.photons < 0) throw UsageError("--step and --photons must be non-negative");
    } else if (c_run->parsed()) {
      sub = c_run;
      run_o.cam.validate();
      if (run_o.frames < 2) throw UsageError("--frames must be at least 2");
      if (!(run_o.arc_deg > 0 && run_o.arc_deg <= 360)) throw UsageError("--arc must lie in (0, 360]");
      if (run_o.photons < 0) throw UsageError("--photons must be non-negative");
    } else if (c_recon->parsed()) {
      sub = c_recon;
      if (recon.voxels < 2 || !(recon.fov_cm > 0)) throw UsageError("reconstruction sizes must be positive");
    } else if (c_calib->parsed()) {
      sub = c_calib;
      if (calib.noise_px < 0 || !(calib.radius_mm > 0) || calib.draws < 0 || calib.pixels < 2 || !(calib.fov_cm > 0))
        throw UsageError("calibration options out of range");
      GridRange r{calib.rotation_range[0], calib.rotation_range[1], calib.angulation_range[0],
                  calib.angulation_range[1], calib.spacing_deg};
      try {
        r.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    } else if (c_reg->parsed()) {
      sub = c_reg;
      if (!(reg.t_bounds > 0) || !(reg.r_bounds > 0)) throw UsageError("search bounds must be positive");
      if (reg.downsample < 1 || reg.coarse_evals < 1 || reg.fine_evals < 1 || reg.mid_evals < 0)
        throw UsageError("--downsample and budgets must be positive");
    } else if (c_matrix->parsed()) {
      sub = c_matrix;
      matrix_plan = resolve_matrix_plan(matrix, c_matrix, g);
    } else if (c_clin->parsed()) {
      sub = c_clin;
      clinical_plan = resolve_clinical_plan(clinical, c_clin, g);
    } else if (c_land->parsed()) {
      sub = c_land;
      axes = parse_axes(land.axes);
    } else if (c_report->parsed()) {
      sub = c_report;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  set_thread_count(g.threads);
  try {
    fs::create_directories(ctx.dir());
    write_manifest(ctx, args, sub);
    if (sub == c_phantom) cmd_phantom(ctx, phantom);
    else if (sub == c_drr) cmd_drr(ctx, drr);
    else if (sub == c_run) cmd_simulate_run(ctx, run_o);
    else if (sub == c_recon) cmd_reconstruct(ctx, recon);
    else if (sub == c_calib) cmd_calibrate(ctx, calib);
    else if (sub == c_reg) cmd_register(ctx, reg);
    else if (sub == c_matrix)
      write_experiment(ctx, to_json(*matrix_plan), run_phantom_matrix(*matrix_plan, progress(ctx)));
    else if (sub == c_clin)
      write_experiment(ctx, to_json(*clinical_plan), run_clinical_style(*clinical_plan, progress(ctx)));
    else if (sub == c_land) cmd_landscape(ctx, land, axes);
    else if (sub == c_report) cmd_report(ctx, report);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace fluoro::cli
