#include "fluoro/recon.hpp"

#include "fluoro/parallel.hpp"
#include "fluoro/phantom.hpp"
#include "fluoro/random.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>

namespace fluoro {

Trajectory Trajectory::centered(const CArmCamera& base, int n_frames, double arc_deg) {
  Trajectory t;
  t.base = base;
  t.n_frames = n_frames;
  t.arc_deg = arc_deg;
  t.start_deg = base.carm_rotation_deg - 0.5 * arc_deg;
  t.angulation_deg = base.carm_angulation_deg;
  return t;
}

CArmCamera Trajectory::camera(int frame) const {
  CArmCamera c = base;
  c.carm_rotation_deg = rotation_deg(frame);
  c.carm_angulation_deg = angulation_deg;
  return c;
}

void Trajectory::validate() const {
  if (n_frames < 2) throw std::invalid_argument("trajectory needs at least 2 frames");
  if (!(arc_deg > 0 && arc_deg <= 360)) throw std::invalid_argument("trajectory arc must lie in (0, 360]");
  base.validate();
}

NoiseModel NoiseModel::poisson(double photons) {
  if (!(photons > 0)) throw std::invalid_argument("photon count must be positive");
  return {photons};
}

Image2D apply_poisson_noise(const Image2D& line_integrals, double photons, std::uint64_t seed) {
  if (!(photons > 0)) throw std::invalid_argument("photon count must be positive");
  Image2D out = line_integrals;
  parallel_for(static_cast<std::size_t>(out.nv()), [&](std::size_t v) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(v)}));
    for (int u = 0; u < out.nu(); ++u) {
      const double expected = photons * std::exp(-static_cast<double>(line_integrals(u, static_cast<int>(v))));
      const double counts = std::max(0.5, static_cast<double>(rng.poisson(expected)));
      out(u, static_cast<int>(v)) = static_cast<float>(-std::log(counts / photons));
    }
  });
  return out;
}

std::vector<Frame> simulate_rotational_run(const Volume& volume, const Trajectory& trajectory, const DrrConfig& drr,
                                           const NoiseModel& noise, std::uint64_t seed) {
  trajectory.validate();
  volume.validate();
  const DrrRenderer renderer(volume);
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(trajectory.n_frames));
  for (int i = 0; i < trajectory.n_frames; ++i) {
    const CArmCamera cam = trajectory.camera(i);
    Image2D img = renderer.render(cam, RigidTransformd(), drr);
    if (noise.enabled()) img = apply_poisson_noise(img, noise.photons, derive_seed({seed, static_cast<std::uint64_t>(i)}));
    frames.push_back({std::move(img), cam.downsampled(drr.downsample)});
  }
  return frames;
}

Eigen::ArrayXd ramp_kernel(int length, double tau) {
  if (length < 2) throw std::invalid_argument("ramp kernel length must be at least 2");
  Eigen::ArrayXd h = Eigen::ArrayXd::Zero(length);
  h[0] = 1.0 / (4.0 * tau * tau);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  for (int k = 1; k <= length / 2; k += 2) {
    const double value = -1.0 / (k * k * pi2 * tau * tau);
    h[k] = value;
    h[length - k] = value;
  }
  return h;
}

Eigen::ArrayXcd ramp_response(int length, double tau, FdkConfig::Window window) {
  Eigen::FFT<double> fft;
  const Eigen::VectorXd h = ramp_kernel(length, tau).matrix();
  Eigen::VectorXcd spectrum;
  fft.fwd(spectrum, h);
  Eigen::ArrayXcd response = spectrum.array() * tau;
  if (window == FdkConfig::Window::Hann) {
    for (int k = 0; k < length; ++k) {
      const double f = static_cast<double>(std::min(k, length - k)) / length;
      response[k] *= 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * f));
    }
  }
  return response;
}

namespace {

int padded_length(int n) {
  int length = 1;
  while (length < 2 * n) length *= 2;
  return length;
}

}  // namespace

Image2D ramp_filter(const Image2D& image, double tau, FdkConfig::Window window) {
  if (!(tau > 0)) throw std::invalid_argument("ramp filter spacing must be positive");
  const int nu = image.nu();
  const int length = padded_length(nu);
  const Eigen::ArrayXcd response = ramp_response(length, tau, window);
  Image2D out = image;
  parallel_for(static_cast<std::size_t>(image.nv()), [&](std::size_t v) {
    Eigen::FFT<double> fft;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(length);
    for (int u = 0; u < nu; ++u) row[u] = image(u, static_cast<int>(v));
    Eigen::VectorXcd spectrum;
    fft.fwd(spectrum, row);
    spectrum.array() *= response;
    Eigen::VectorXd filtered;
    fft.inv(filtered, spectrum);
    for (int u = 0; u < nu; ++u) out(u, static_cast<int>(v)) = static_cast<float>(filtered[u]);
  });
  return out;
}

double parker_weight(double beta, double gamma, double delta) {
  constexpr double pi = std::numbers::pi;
  if (delta <= 0) return 1.0;
  gamma = std::clamp(gamma, -delta + 1e-12, delta - 1e-12);
  // Conjugate of (beta, gamma) is (beta + pi + 2 gamma, -gamma): rays with
  // beta < 2 (delta - gamma) or beta > pi - 2 gamma are measured twice.
  if (beta < 0 || beta > pi + 2 * delta) return 0.0;
  if (beta < 2 * (delta - gamma)) {
    const double s = std::sin(pi / 4 * beta / (delta - gamma));
    return s * s;
  }
  if (beta <= pi - 2 * gamma) return 1.0;
  const double s = std::sin(pi / 4 * (pi + 2 * delta - beta) / (delta + gamma));
  return s * s;
}

Volume fdk_reconstruct(const std::vector<Frame>& frames, const Volume& grid, const FdkConfig& cfg) {
  if (frames.size() < 2) throw std::invalid_argument("FDK needs at least 2 frames");
  const int nu = frames.front().image.nu();
  const int nv = frames.front().image.nv();
  for (const auto& f : frames)
    if (f.image.nu() != nu || f.image.nv() != nv || f.camera.detector_dims[0] != nu || f.camera.detector_dims[1] != nv)
      throw std::invalid_argument("FDK: frames have inconsistent detector dimensions");

  // Angular sampling from the nominal rotation angles.
  const double first = frames.front().camera.carm_rotation_deg;
  const double last = frames.back().camera.carm_rotation_deg;
  const double arc = std::abs(last - first);
  if (!(arc > 0)) throw std::invalid_argument("FDK: frames do not span an arc");
  const double direction = last > first ? 1.0 : -1.0;
  const double dbeta = deg2rad(arc) / static_cast<double>(frames.size() - 1);
  const bool short_scan = cfg.parker && arc < 360.0 - 1e-9;
  const double delta = short_scan ? 0.5 * (deg2rad(arc) - std::numbers::pi) : 0.0;
  // A full circle counts every ray twice.
  const double scan_factor = short_scan ? 1.0 : 0.5;

  struct Prepared {
    Image2D filtered;
    Matrix34d p;
    double weight;
  };
  std::vector<Prepared> prep(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& fr = frames[i];
    const CArmCamera& c = fr.camera;
    const Matrix3d k = camera_intrinsics(c);
    const double pitch = c.pixel_pitch_mm;
    const double dd = k(0, 0) * pitch;
    const double iso_depth = -c.source_position().dot(c.view_axis());
    const double beta = direction * deg2rad(c.carm_rotation_deg - first);
    Image2D weighted = fr.image;
    for (int v = 0; v < nv; ++v) {
      const double b = (v - k(1, 2)) * pitch;
      for (int u = 0; u < nu; ++u) {
        const double a = (u - k(0, 2)) * pitch;
        double w = dd / std::sqrt(dd * dd + a * a + b * b);
        // Fan angle sign follows the rotation direction.
        if (short_scan) w *= parker_weight(beta, direction * std::atan(a / dd), delta);
        weighted(u, v) = static_cast<float>(weighted(u, v) * w);
      }
    }
    const double tau = pitch * iso_depth / dd;
    prep[i] = {ramp_filter(weighted, tau, cfg.window), projection_map(c), iso_depth * iso_depth * dbeta * scan_factor};
  }

  Volume out(grid.dims(), grid.spacing(), grid.origin(), grid.fov_diameter_cm());
  const auto dims = grid.dims();
  parallel_for(static_cast<std::size_t>(dims[2]), [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Eigen::Vector4d x = out.voxel_center(i, j, k).homogeneous();
        double sum = 0.0;
        for (const auto& f : prep) {
          const Vector3d h = f.p * x;
          if (h.z() <= 0) continue;
          const double u = h.x() / h.z();
          const double v = h.y() / h.z();
          const int u0 = static_cast<int>(std::floor(u));
          const int v0 = static_cast<int>(std::floor(v));
          if (u0 < -1 || v0 < -1 || u0 >= nu || v0 >= nv) continue;
          const double fu = u - u0;
          const double fv = v - v0;
          auto px = [&](int a, int b) -> double {
            return (a < 0 || b < 0 || a >= nu || b >= nv) ? 0.0 : f.filtered(a, b);
          };
          const double val = (1 - fv) * ((1 - fu) * px(u0, v0) + fu * px(u0 + 1, v0)) +
                             fv * ((1 - fu) * px(u0, v0 + 1) + fu * px(u0 + 1, v0 + 1));
          sum += val * f.weight / (h.z() * h.z());
        }
        // Line integrals are in cm-weighted units; distances here are mm.
        double mu = 10.0 * sum;
        if (cfg.clamp_negative) mu = std::max(mu, 0.0);
        out.at(i, j, k) = static_cast<float>(mu);
      }
    }
  });
  return out;
}

GroundTruthDataset ground_truth_pairs(const Volume& phantom, const Trajectory& trajectory,
                                      const GroundTruthOptions& options) {
  GroundTruthDataset ds;
  ds.frames = simulate_rotational_run(phantom, trajectory, options.drr, options.noise, options.seed);
  const int n = options.recon_voxels;
  const Volume grid = Volume::centered(n, options.recon_fov_cm * 10.0 / n, options.recon_fov_cm);
  ds.reconstruction = crop_to_fov(fdk_reconstruct(ds.frames, grid, options.fdk), options.recon_fov_cm);
  ds.truth = RigidTransformd();
  return ds;
}

}  // namespace fluoro
