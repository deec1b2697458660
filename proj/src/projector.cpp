#include "fluoro/projector.hpp"

#include "fluoro/parallel.hpp"

#include <cmath>
#include <limits>

namespace fluoro {

double DrrConfig::resolved_step(const Volume& volume) const {
  return step_mm > 0 ? step_mm : 0.5 * volume.spacing().minCoeff();
}

void DrrConfig::validate() const {
  if (step_mm < 0) throw std::invalid_argument("step_mm must be positive");
  if (downsample < 1) throw std::invalid_argument("downsample must be >= 1");
}

std::optional<RayInterval> ray_box_intersect(const Vector3d& origin, const Vector3d& direction,
                                             const Vector3d& box_min, const Vector3d& box_max) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (direction[a] == 0.0) {
      if (origin[a] < box_min[a] || origin[a] > box_max[a]) return std::nullopt;
      continue;
    }
    double t0 = (box_min[a] - origin[a]) / direction[a];
    double t1 = (box_max[a] - origin[a]) / direction[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  return RayInterval{t_near, t_far};
}

DrrRenderer::DrrRenderer(const Volume& volume)
    : dims_(volume.dims()),
      padded_dims_{volume.dims()[0] + 3, volume.dims()[1] + 3, volume.dims()[2] + 3},
      spacing_(volume.spacing()),
      origin_(volume.origin()),
      fov_(volume.fov_diameter_cm()),
      min_spacing_(volume.spacing().minCoeff()) {
  volume.validate();
  const std::size_t px = padded_dims_[0];
  const std::size_t pxy = px * padded_dims_[1];
  padded_.assign(pxy * padded_dims_[2], 0.0f);
  std::array<int, 3> lo{dims_[0], dims_[1], dims_[2]};
  std::array<int, 3> hi{-1, -1, -1};
  for (int k = 0; k < dims_[2]; ++k) {
    for (int j = 0; j < dims_[1]; ++j) {
      for (int i = 0; i < dims_[0]; ++i) {
        const float value = volume.at(i, j, k);
        if (value == 0.0f) continue;
        padded_[static_cast<std::size_t>(i + 1) + px * (j + 1) + pxy * (k + 1)] = value;
        lo = {std::min(lo[0], i), std::min(lo[1], j), std::min(lo[2], k)};
        hi = {std::max(hi[0], i), std::max(hi[1], j), std::max(hi[2], k)};
      }
    }
  }
  empty_ = hi[0] < 0;
  if (!empty_) {
    content_min_ = origin_ + spacing_.cwiseProduct(Vector3d(lo[0] - 1, lo[1] - 1, lo[2] - 1));
    content_max_ = origin_ + spacing_.cwiseProduct(Vector3d(hi[0] + 1, hi[1] + 1, hi[2] + 1));
  }
}

struct DrrRenderer::RaySetup {
  CArmCamera camera;
  RigidTransformd to_volume;  // world -> volume frame
  Vector3d source;            // in volume frame
  double step;
  Vector3d box_min;
  Vector3d box_max;
};

DrrRenderer::RaySetup DrrRenderer::setup(const CArmCamera& camera, const RigidTransformd& patient,
                                         const DrrConfig& cfg) const {
  cfg.validate();
  camera.validate();
  RaySetup s{camera.downsampled(cfg.downsample), patient.inverse(), Vector3d::Zero(),
             cfg.step_mm > 0 ? cfg.step_mm : 0.5 * min_spacing_, origin_ - spacing_,
             origin_ + spacing_.cwiseProduct(Vector3d(dims_[0], dims_[1], dims_[2]))};
  s.source = s.to_volume(s.camera.source_position());
  if ((s.source.array() >= s.box_min.array()).all() && (s.source.array() <= s.box_max.array()).all())
    throw std::invalid_argument("X-ray source lies inside the volume box");
  return s;
}

namespace {

struct Sampler {
  const float* data;
  int px;
  int pxy;
  float max_x, max_y, max_z;

  float trilinear(double xd, double yd, double zd) const {
    const float x = std::clamp(static_cast<float>(xd), 0.0f, max_x);
    const float y = std::clamp(static_cast<float>(yd), 0.0f, max_y);
    const float z = std::clamp(static_cast<float>(zd), 0.0f, max_z);
    const int i = static_cast<int>(x);
    const int j = static_cast<int>(y);
    const int k = static_cast<int>(z);
    const float fx = x - i, fy = y - j, fz = z - k;
    const float* p = data + i + px * j + pxy * k;
    const float c00 = p[0] + fx * (p[1] - p[0]);
    const float c10 = p[px] + fx * (p[px + 1] - p[px]);
    const float c01 = p[pxy] + fx * (p[pxy + 1] - p[pxy]);
    const float c11 = p[pxy + px] + fx * (p[pxy + px + 1] - p[pxy + px]);
    const float c0 = c00 + fy * (c10 - c00);
    const float c1 = c01 + fy * (c11 - c01);
    return c0 + fz * (c1 - c0);
  }

  float nearest(double xd, double yd, double zd) const {
    const int i = static_cast<int>(std::lround(std::clamp(xd, 0.0, static_cast<double>(max_x))));
    const int j = static_cast<int>(std::lround(std::clamp(yd, 0.0, static_cast<double>(max_y))));
    const int k = static_cast<int>(std::lround(std::clamp(zd, 0.0, static_cast<double>(max_z))));
    return data[i + px * j + pxy * k];
  }
};

// Sample index range [k0, k1] for samples t_k = (k + 1/2) step inside [t0, t1].
bool sample_range(double t0, double t1, double step, long& k0, long& k1) {
  k0 = static_cast<long>(std::ceil(t0 / step - 0.5));
  k1 = static_cast<long>(std::floor(t1 / step - 0.5));
  return k1 >= k0;
}

}  // namespace

Image2D DrrRenderer::render(const CArmCamera& camera, const RigidTransformd& patient, const DrrConfig& cfg) const {
  const RaySetup s = setup(camera, patient, cfg);
  const int nu = s.camera.detector_dims[0];
  const int nv = s.camera.detector_dims[1];
  Image2D out(nu, nv, s.camera.pixel_pitch_mm, s.camera.fov_diameter_cm);
  if (empty_) return out;

  const Sampler sampler{padded_.data(), padded_dims_[0], padded_dims_[0] * padded_dims_[1],
                        static_cast<float>(dims_[0] + 1), static_cast<float>(dims_[1] + 1),
                        static_cast<float>(dims_[2] + 1)};
  const Vector3d inv_spacing = spacing_.cwiseInverse();
  const bool nearest = cfg.interpolation == Interpolation::Nearest;
  const double scale = s.step / 10.0;

  parallel_for(static_cast<std::size_t>(nv), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < nu; ++u) {
      const Vector3d target = s.to_volume(s.camera.pixel_position(u, v));
      const Vector3d dir = (target - s.source).normalized();
      const auto hit = ray_box_intersect(s.source, dir, content_min_, content_max_);
      long k0, k1;
      if (!hit || !sample_range(std::max(hit->t_near, 0.0), hit->t_far, s.step, k0, k1)) continue;
      // Padded index coordinates of the source and per-step increment.
      const Vector3d base = (s.source - origin_).cwiseProduct(inv_spacing).array() + 1.0;
      const Vector3d inc = (dir * s.step).cwiseProduct(inv_spacing);
      double acc = 0.0;
      for (long k = k0; k <= k1; ++k) {
        const double t = static_cast<double>(k) + 0.5;
        const double x = base.x() + t * inc.x();
        const double y = base.y() + t * inc.y();
        const double z = base.z() + t * inc.z();
        acc += nearest ? sampler.nearest(x, y, z) : sampler.trilinear(x, y, z);
      }
      out(u, v) = static_cast<float>(acc * scale);
    }
  });
  return out;
}

Volume DrrRenderer::backproject(const Image2D& image, const CArmCamera& camera, const RigidTransformd& patient,
                                const DrrConfig& cfg) const {
  const RaySetup s = setup(camera, patient, cfg);
  const int nu = s.camera.detector_dims[0];
  const int nv = s.camera.detector_dims[1];
  if (image.nu() != nu || image.nv() != nv) throw std::invalid_argument("backproject: image dims do not match");
  const int px = padded_dims_[0];
  const int pxy = padded_dims_[0] * padded_dims_[1];
  std::vector<double> acc(padded_.size(), 0.0);
  const Vector3d inv_spacing = spacing_.cwiseInverse();
  const Vector3d box_min = origin_ - spacing_;
  const Vector3d box_max = origin_ + spacing_.cwiseProduct(Vector3d(dims_[0], dims_[1], dims_[2]));
  const double scale = s.step / 10.0;
  const Vector3d max_idx(dims_[0] + 1, dims_[1] + 1, dims_[2] + 1);

  // Serial: rays overlap in the output.
  for (int v = 0; v < nv; ++v) {
    for (int u = 0; u < nu; ++u) {
      const double value = image(u, v) * scale;
      if (value == 0.0) continue;
      const Vector3d target = s.to_volume(s.camera.pixel_position(u, v));
      const Vector3d dir = (target - s.source).normalized();
      // Same sample set as render(): the content box only skips zero reads,
      // so the adjoint must cover the full grid box.
      const auto hit = ray_box_intersect(s.source, dir, box_min, box_max);
      long k0, k1;
      if (!hit || !sample_range(std::max(hit->t_near, 0.0), hit->t_far, s.step, k0, k1)) continue;
      const Vector3d base = (s.source - origin_).cwiseProduct(inv_spacing).array() + 1.0;
      const Vector3d inc = (dir * s.step).cwiseProduct(inv_spacing);
      for (long k = k0; k <= k1; ++k) {
        const double t = static_cast<double>(k) + 0.5;
        Vector3d p = base + t * inc;
        if (cfg.interpolation == Interpolation::Nearest) {
          p = p.cwiseMax(Vector3d::Zero()).cwiseMin(max_idx);
          const int i = static_cast<int>(std::lround(p.x()));
          const int j = static_cast<int>(std::lround(p.y()));
          const int kk = static_cast<int>(std::lround(p.z()));
          acc[static_cast<std::size_t>(i + px * j + pxy * kk)] += value;
          continue;
        }
        const float x = std::clamp(static_cast<float>(p.x()), 0.0f, static_cast<float>(max_idx.x()));
        const float y = std::clamp(static_cast<float>(p.y()), 0.0f, static_cast<float>(max_idx.y()));
        const float z = std::clamp(static_cast<float>(p.z()), 0.0f, static_cast<float>(max_idx.z()));
        const int i = static_cast<int>(x), j = static_cast<int>(y), kk = static_cast<int>(z);
        const double fx = x - i, fy = y - j, fz = z - kk;
        const std::size_t b = static_cast<std::size_t>(i + px * j + pxy * kk);
        acc[b] += value * (1 - fx) * (1 - fy) * (1 - fz);
        acc[b + 1] += value * fx * (1 - fy) * (1 - fz);
        acc[b + px] += value * (1 - fx) * fy * (1 - fz);
        acc[b + px + 1] += value * fx * fy * (1 - fz);
        acc[b + pxy] += value * (1 - fx) * (1 - fy) * fz;
        acc[b + pxy + 1] += value * fx * (1 - fy) * fz;
        acc[b + pxy + px] += value * (1 - fx) * fy * fz;
        acc[b + pxy + px + 1] += value * fx * fy * fz;
      }
    }
  }
  Volume out(dims_, spacing_, origin_, fov_);
  for (int k = 0; k < dims_[2]; ++k)
    for (int j = 0; j < dims_[1]; ++j)
      for (int i = 0; i < dims_[0]; ++i)
        out.at(i, j, k) = static_cast<float>(acc[static_cast<std::size_t>(i + 1 + px * (j + 1) + pxy * (k + 1))]);
  return out;
}

Image2D render_drr(const Volume& volume, const CArmCamera& camera, const RigidTransformd& patient,
                   const DrrConfig& cfg) {
  return DrrRenderer(volume).render(camera, patient, cfg);
}

}  // namespace fluoro
