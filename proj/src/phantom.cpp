#include "fluoro/phantom.hpp"

#include "fluoro/parallel.hpp"
#include "fluoro/random.hpp"

#include <cmath>
#include <sstream>

namespace fluoro {

bool Ellipsoid::contains(const Vector3d& p) const {
  const Vector3d local = axes.transpose() * (p - center);
  return local.cwiseQuotient(semi_axes).squaredNorm() <= 1.0;
}

void Ellipsoid::bounds(Vector3d& lo, Vector3d& hi) const {
  // Half extent along world axis i: sqrt(sum_j (axes(i,j) * semi_j)^2).
  Vector3d half;
  for (int i = 0; i < 3; ++i) half[i] = axes.row(i).cwiseProduct(semi_axes.transpose()).norm();
  lo = center - half;
  hi = center + half;
}

double Tube::distance(const Vector3d& p) const {
  const Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

bool Tube::contains(const Vector3d& p) const { return distance(p) <= radius; }

namespace {

Ellipsoid ellipsoid(Vector3d c, Vector3d s) { return {c, s, Matrix3d::Identity()}; }

void tube_bounds(const Tube& t, Vector3d& lo, Vector3d& hi) {
  lo = t.a.cwiseMin(t.b).array() - t.radius;
  hi = t.a.cwiseMax(t.b).array() + t.radius;
}

// Any unit vector perpendicular to d.
Vector3d perpendicular(const Vector3d& d) {
  const Vector3d helper = std::abs(d.x()) < 0.9 ? Vector3d::UnitX() : Vector3d::UnitY();
  return d.cross(helper).normalized();
}

void grow_tree(const VesselTreeSpec& tree, Rng& rng, const Vector3d& start, const Vector3d& dir, double length,
               int generation, std::vector<Tube>& out) {
  const double frac = tree.generations > 1 ? static_cast<double>(generation) / (tree.generations - 1) : 0.0;
  const double radius = tree.root_radius_mm * std::pow(tree.leaf_radius_mm / tree.root_radius_mm, frac);
  const Vector3d end = start + length * dir;
  out.push_back({start, end, radius, generation});
  if (generation + 1 >= tree.generations) return;
  // Bifurcate in a random plane containing the parent direction.
  const double spin = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Vector3d axis = Eigen::AngleAxisd(spin, dir) * perpendicular(dir);
  for (const double sign : {1.0, -1.0}) {
    const double angle = deg2rad(tree.branch_angle_deg * rng.uniform(0.7, 1.3)) * sign;
    const Vector3d child = (Eigen::AngleAxisd(angle, axis) * dir).normalized();
    grow_tree(tree, rng, end, child, length * tree.length_ratio * rng.uniform(0.85, 1.15), generation + 1, out);
  }
}

struct Shape {
  enum class Kind { Ellipsoid, Tube } kind;
  const Ellipsoid* ellipsoid = nullptr;
  const Tube* tube = nullptr;
  float value;
  Vector3d lo, hi;
  bool axis_aligned = true;

  bool contains(const Vector3d& p) const {
    if ((p.array() < lo.array()).any() || (p.array() > hi.array()).any()) return false;
    if (kind == Kind::Tube) return tube->contains(p);
    if (axis_aligned) return (p - ellipsoid->center).cwiseQuotient(ellipsoid->semi_axes).squaredNorm() <= 1.0;
    return ellipsoid->contains(p);
  }
};

// Painter's order: later shapes overwrite earlier ones.
std::vector<Shape> paint_list(const PhantomSpec& spec, const std::vector<Tube>& tubes) {
  std::vector<Shape> shapes;
  auto add = [&](const Ellipsoid& e, double mu) {
    Shape s{Shape::Kind::Ellipsoid, &e, nullptr, static_cast<float>(mu), {}, {}, e.axes.isIdentity(0.0)};
    e.bounds(s.lo, s.hi);
    shapes.push_back(s);
  };
  if (spec.head) add(*spec.head, spec.mu_soft);
  if (spec.skull_outer) add(*spec.skull_outer, spec.mu_bone);
  if (spec.skull_inner) add(*spec.skull_inner, spec.mu_soft);
  for (const auto& e : spec.skull_base) add(e, spec.mu_bone);
  if (spec.facial_structures)
    for (const auto& e : spec.facial_bones) add(e, spec.mu_bone);
  for (const auto& e : spec.sinuses) add(e, spec.mu_air);
  for (const auto& t : tubes) {
    Shape s{Shape::Kind::Tube, nullptr, &t, static_cast<float>(spec.contrast ? spec.mu_contrast : spec.mu_soft), {}, {},
            true};
    tube_bounds(t, s.lo, s.hi);
    shapes.push_back(s);
  }
  return shapes;
}

float paint(const std::vector<const Shape*>& active, const Vector3d& p) {
  float value = 0.0f;
  for (const Shape* s : active)
    if (s->contains(p)) value = s->value;
  return value;
}

}  // namespace

void PhantomSpec::validate() const {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) throw std::invalid_argument("phantom dims must be positive");
  if (!(spacing_mm.array() > 0).all()) throw std::invalid_argument("phantom spacing must be positive");
  if (mu_bone < 0 || mu_soft < 0 || mu_contrast < 0 || mu_air < 0)
    throw std::invalid_argument("attenuation values must be non-negative");
  if (skull_outer.has_value() != skull_inner.has_value())
    throw std::invalid_argument("skull needs both outer and inner surfaces");
  if (skull_outer && !(skull_outer->semi_axes.array() > skull_inner->semi_axes.array()).all())
    throw std::invalid_argument("skull outer semi-axes must exceed the inner ones");
  if (vessel_tree) {
    if (!skull_inner) throw std::invalid_argument("vessel tree requires a skull interior");
    if (vessel_tree->generations < 1) throw std::invalid_argument("vessel tree needs at least one generation");
    for (const Tube& t : vessel_tubes(*this)) {
      for (const Vector3d& end : {t.a, t.b}) {
        Ellipsoid shrunk = *skull_inner;
        shrunk.semi_axes.array() -= t.radius;
        if (!shrunk.contains(end)) throw std::invalid_argument("vessel tube leaves the skull interior");
      }
    }
  }
}

std::vector<Tube> vessel_tubes(const PhantomSpec& spec) {
  std::vector<Tube> tubes;
  if (!spec.vessel_tree) return tubes;
  Rng rng(derive_seed({spec.seed, 0x7e55e1}));
  const VesselTreeSpec& t = *spec.vessel_tree;
  grow_tree(t, rng, t.root, t.direction.normalized(), t.root_length_mm, 0, tubes);
  return tubes;
}

double phantom_attenuation(const PhantomSpec& spec, const std::vector<Tube>& tubes, const Vector3d& p) {
  const std::vector<Shape> shapes = paint_list(spec, tubes);
  std::vector<const Shape*> active;
  for (const auto& s : shapes) active.push_back(&s);
  return paint(active, p);
}

PhantomSpec default_head_phantom(int n, double extent_mm, bool facial_structures, bool vessels, bool contrast,
                                 std::uint64_t seed) {
  PhantomSpec s;
  s.dims = {n, n, n};
  s.spacing_mm = Vector3d::Constant(extent_mm / n);
  s.fov_diameter_cm = extent_mm / 10.0;
  s.seed = seed;

  s.head = ellipsoid({0, 0, 0}, {112, 118, 84});
  s.skull_outer = ellipsoid({-5, 12, 0}, {92, 100, 74});
  s.skull_inner = ellipsoid({-5, 14, 0}, {85, 93, 67});
  s.sinuses = {
      ellipsoid({80, 28, 0}, {7, 12, 16}),      // frontal
      ellipsoid({74, -42, 24}, {14, 15, 11}),   // maxillary left
      ellipsoid({74, -42, -24}, {14, 15, 11}),  // maxillary right
      ellipsoid({38, -28, 0}, {11, 9, 12}),     // sphenoid
      ellipsoid({62, -12, 12}, {9, 8, 6}),      // ethmoid cells
      ellipsoid({62, -12, -12}, {9, 8, 6}),
  };
  s.facial_structures = facial_structures;
  s.facial_bones = {
      ellipsoid({101, -22, 0}, {7, 20, 6}),     // nasal bones
      ellipsoid({90, -5, 30}, {9, 17, 14}),     // orbital rims
      ellipsoid({90, -5, -30}, {9, 17, 14}),
      ellipsoid({80, -32, 56}, {11, 9, 16}),    // zygomatic arches
      ellipsoid({80, -32, -56}, {11, 9, 16}),
      ellipsoid({90, -62, 0}, {13, 15, 36}),    // maxilla
      ellipsoid({72, -88, 0}, {12, 8, 40}),     // mandible
  };
  s.skull_base = {
      ellipsoid({10, -36, 0}, {48, 7, 46}),     // cranial base plate
      ellipsoid({-20, -30, 34}, {22, 8, 10}),   // petrous ridges
      ellipsoid({-20, -30, -34}, {22, 8, 10}),
  };
  if (vessels) {
    VesselTreeSpec tree;
    tree.root = Vector3d(-5, -15, 0);
    s.vessel_tree = tree;
  }
  s.contrast = contrast;
  return s;
}

PhantomSpec head_phantom_for_fov(double fov_cm, int n, bool facial_structures, bool vessels, bool contrast,
                                 std::uint64_t seed) {
  PhantomSpec s = default_head_phantom(n, fov_cm * 10.0, facial_structures, vessels, contrast, seed);
  s.fov_diameter_cm = fov_cm;
  s.clip_to_grid = true;
  return s;
}

Volume generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Volume vol = Volume::centered(spec.dims, spec.spacing_mm, spec.fov_diameter_cm);
  const std::vector<Tube> tubes = vessel_tubes(spec);
  const std::vector<Shape> shapes = paint_list(spec, tubes);

  if (!spec.clip_to_grid) {
    const Vector3d gmin = vol.box_min(), gmax = vol.box_max();
    std::ostringstream offenders;
    int count = 0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if ((shapes[i].lo.array() < gmin.array()).any() || (shapes[i].hi.array() > gmax.array()).any()) {
        offenders << (count++ ? ", " : "") << "shape #" << i
                  << (shapes[i].kind == Shape::Kind::Tube ? " (vessel)" : " (ellipsoid)");
      }
    }
    if (count) throw std::invalid_argument("phantom shapes exceed the grid: " + offenders.str());
  }

  const auto [nx, ny, nz] = spec.dims;
  const Vector3d quarter = 0.25 * spec.spacing_mm;
  parallel_for(static_cast<std::size_t>(nz), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    std::vector<const Shape*> slab, row;
    const double z = vol.voxel_center(0, 0, k).z();
    for (const auto& s : shapes)
      if (s.lo.z() <= z + quarter.z() && s.hi.z() >= z - quarter.z()) slab.push_back(&s);
    for (int j = 0; j < ny; ++j) {
      const double y = vol.voxel_center(0, j, 0).y();
      row.clear();
      for (const Shape* s : slab)
        if (s->lo.y() <= y + quarter.y() && s->hi.y() >= y - quarter.y()) row.push_back(s);
      if (row.empty()) continue;
      for (int i = 0; i < nx; ++i) {
        const Vector3d c = vol.voxel_center(i, j, k);
        double acc = 0.0;
        for (int sub = 0; sub < 8; ++sub) {
          const Vector3d offset((sub & 1 ? 1 : -1) * quarter.x(), (sub & 2 ? 1 : -1) * quarter.y(),
                                (sub & 4 ? 1 : -1) * quarter.z());
          acc += paint(row, c + offset);
        }
        vol.at(i, j, k) = static_cast<float>(acc / 8.0);
      }
    }
  });
  return vol;
}

Volume crop_to_fov(const Volume& volume, double fov_diameter_cm) {
  if (!(fov_diameter_cm > 0)) throw std::invalid_argument("fov must be positive");
  const Vector3d lo = volume.box_min(), hi = volume.box_max();
  const double wx = hi.x() - lo.x(), wz = hi.z() - lo.z();
  // The largest meaningful cylinder circumscribes the axial cross-section.
  const double extent = std::hypot(wx, wz);
  const double diameter = fov_diameter_cm * 10.0;
  if (diameter > extent * (1.0 + 1e-12))
    throw std::invalid_argument("fov exceeds the volume extent");
  const double cx = 0.5 * (lo.x() + hi.x()), cz = 0.5 * (lo.z() + hi.z());
  const double r2 = 0.25 * diameter * diameter;
  Volume out = volume;
  const auto [nx, ny, nz] = volume.dims();
  for (int k = 0; k < nz; ++k) {
    for (int i = 0; i < nx; ++i) {
      const Vector3d c = volume.voxel_center(i, 0, k);
      const double dx = c.x() - cx, dz = c.z() - cz;
      if (dx * dx + dz * dz <= r2) continue;
      for (int j = 0; j < ny; ++j) out.at(i, j, k) = 0.0f;
    }
  }
  out.set_fov_diameter_cm(fov_diameter_cm);
  return out;
}

}  // namespace fluoro
