#include "fluoro/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fluoro {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Strip ".vol.json" / ".img.json" / ".vol.raw" / ... to get the base name.
fs::path base_name(const fs::path& path, const std::string& kind) {
  std::string s = path.string();
  for (const std::string& suffix : {"." + kind + ".json", "." + kind + ".raw"}) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
      return s.substr(0, s.size() - suffix.size());
  }
  return path;
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) { return fs::path(base.string() + suffix); }

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_f32le(const float* data, std::size_t n, const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoError::Kind::Unreadable, "cannot open for writing: " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, data + i, 4);
      bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!out) throw IoError(IoError::Kind::Unreadable, "write failed: " + path.string());
}

void read_f32le(float* data, std::size_t n, const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError(IoError::Kind::Unreadable, "cannot open: " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != n * sizeof(float))
    throw IoError(IoError::Kind::SizeMismatch, path.string() + ": expected " + std::to_string(n) +
                                                   " values, found " + std::to_string(bytes / sizeof(float)) +
                                                   (bytes % sizeof(float) ? " (plus trailing bytes)" : ""));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError(IoError::Kind::Unreadable, "read failed: " + path.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, data + i, 4);
      bits = __builtin_bswap32(bits);
      std::memcpy(data + i, &bits, 4);
    }
  }
}

json vec_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename T>
T header_field(const json& j, const char* key, const fs::path& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedHeader, path.string() + ": field '" + key + "': " + e.what());
  }
}

Vector3d header_vec3(const json& j, const char* key, const fs::path& path) {
  const auto v = header_field<std::vector<double>>(j, key, path);
  if (v.size() != 3) throw IoError(IoError::Kind::MalformedHeader, path.string() + ": field '" + key + "' needs 3 values");
  return {v[0], v[1], v[2]};
}

}  // namespace

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::Unreadable, "cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(IoError::Kind::MalformedHeader, path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) { write_text(j.dump(2) + "\n", path); }

void write_text(const std::string& text, const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw IoError(IoError::Kind::Unreadable, "cannot open for writing: " + path.string());
  out << text;
}

void save_volume(const Volume& volume, const fs::path& path) {
  const fs::path base = base_name(path, "vol");
  json h;
  h["dims"] = volume.dims();
  h["spacing_mm"] = vec_json(volume.spacing());
  h["origin_mm"] = vec_json(volume.origin());
  h["fov_diameter_cm"] = volume.fov_diameter_cm();
  h["dtype"] = "f32le";
  write_json(h, with_suffix(base, ".vol.json"));
  write_f32le(volume.data().data(), volume.size(), with_suffix(base, ".vol.raw"));
}

Volume load_volume(const fs::path& path) {
  const fs::path base = base_name(path, "vol");
  const fs::path header = with_suffix(base, ".vol.json");
  const json h = read_json(header);
  const auto dims = header_field<std::array<int, 3>>(h, "dims", header);
  const Vector3d spacing = header_vec3(h, "spacing_mm", header);
  const Vector3d origin = header_vec3(h, "origin_mm", header);
  const auto fov = header_field<double>(h, "fov_diameter_cm", header);
  if (header_field<std::string>(h, "dtype", header) != "f32le")
    throw IoError(IoError::Kind::MalformedHeader, header.string() + ": unsupported dtype");
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0 || !(spacing.array() > 0).all() || !(fov > 0))
    throw IoError(IoError::Kind::MalformedHeader, header.string() + ": invalid dims/spacing/fov");
  Eigen::ArrayXf data(static_cast<Eigen::Index>(dims[0]) * dims[1] * dims[2]);
  read_f32le(data.data(), static_cast<std::size_t>(data.size()), with_suffix(base, ".vol.raw"));
  return Volume(dims, spacing, origin, fov, std::move(data));
}

void save_image(const Image2D& image, const fs::path& path) {
  const fs::path base = base_name(path, "img");
  json h;
  h["dims"] = {image.nu(), image.nv()};
  h["pitch_mm"] = image.pitch_mm();
  h["fov_diameter_cm"] = image.fov_diameter_cm();
  h["dtype"] = "f32le";
  write_json(h, with_suffix(base, ".img.json"));
  write_f32le(image.data().data(), static_cast<std::size_t>(image.data().size()), with_suffix(base, ".img.raw"));
}

Image2D load_image(const fs::path& path) {
  const fs::path base = base_name(path, "img");
  const fs::path header = with_suffix(base, ".img.json");
  const json h = read_json(header);
  const auto dims = header_field<std::array<int, 2>>(h, "dims", header);
  const auto pitch = header_field<double>(h, "pitch_mm", header);
  const auto fov = header_field<double>(h, "fov_diameter_cm", header);
  if (header_field<std::string>(h, "dtype", header) != "f32le")
    throw IoError(IoError::Kind::MalformedHeader, header.string() + ": unsupported dtype");
  if (dims[0] <= 0 || dims[1] <= 0 || !(pitch > 0) || !(fov > 0))
    throw IoError(IoError::Kind::MalformedHeader, header.string() + ": invalid dims/pitch/fov");
  Eigen::ArrayXXf data(dims[0], dims[1]);
  read_f32le(data.data(), static_cast<std::size_t>(data.size()), with_suffix(base, ".img.raw"));
  return Image2D(std::move(data), pitch, fov);
}

void save_pgm(const Image2D& image, const fs::path& path, double lo, double hi) {
  if (lo == hi) {
    lo = image.data().minCoeff();
    hi = image.data().maxCoeff();
    if (lo == hi) hi = lo + 1.0;
  }
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoError::Kind::Unreadable, "cannot open for writing: " + path.string());
  out << "P5\n" << image.nu() << " " << image.nv() << "\n65535\n";
  for (int v = 0; v < image.nv(); ++v) {
    for (int u = 0; u < image.nu(); ++u) {
      const double t = std::clamp((image(u, v) - lo) / (hi - lo), 0.0, 1.0);
      const auto value = static_cast<std::uint16_t>(std::lround(t * 65535.0));
      const unsigned char be[2] = {static_cast<unsigned char>(value >> 8), static_cast<unsigned char>(value & 0xff)};
      out.write(reinterpret_cast<const char*>(be), 2);
    }
  }
}

json to_json(const RigidTransformd& t) {
  json j;
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(t.rotation()(i, k));
  j["rotation"] = r;
  j["translation_mm"] = vec_json(t.translation());
  return j;
}

RigidTransformd transform_from_json(const json& j) {
  const fs::path where("<transform>");
  const auto r = header_field<std::vector<double>>(j, "rotation", where);
  if (r.size() != 9) throw IoError(IoError::Kind::MalformedHeader, "transform rotation needs 9 values");
  Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) m(i, k) = r[static_cast<std::size_t>(3 * i + k)];
  const RigidTransformd t(m, header_vec3(j, "translation_mm", where));
  if (t.orthonormality_error() > 1e-9)
    throw IoError(IoError::Kind::MalformedHeader, "transform rotation is not orthonormal");
  return t;
}

json to_json(const CArmCamera& c) {
  json j;
  j["source_to_iso_mm"] = c.source_to_iso_mm;
  j["source_to_detector_mm"] = c.source_to_detector_mm;
  j["detector_dims"] = c.detector_dims;
  j["pixel_pitch_mm"] = c.pixel_pitch_mm;
  j["carm_rotation_deg"] = c.carm_rotation_deg;
  j["carm_angulation_deg"] = c.carm_angulation_deg;
  j["fov_diameter_cm"] = c.fov_diameter_cm;
  j["source_offset_mm"] = vec_json(c.source_offset_mm);
  j["detector_offset_mm"] = vec_json(c.detector_offset_mm);
  j["orientation_correction"] = vec_json(c.orientation_correction);
  return j;
}

CArmCamera camera_from_json(const json& j) {
  const fs::path where("<camera>");
  CArmCamera c;
  c.source_to_iso_mm = header_field<double>(j, "source_to_iso_mm", where);
  c.source_to_detector_mm = header_field<double>(j, "source_to_detector_mm", where);
  c.detector_dims = header_field<std::array<int, 2>>(j, "detector_dims", where);
  c.pixel_pitch_mm = header_field<double>(j, "pixel_pitch_mm", where);
  c.carm_rotation_deg = header_field<double>(j, "carm_rotation_deg", where);
  c.carm_angulation_deg = header_field<double>(j, "carm_angulation_deg", where);
  c.fov_diameter_cm = header_field<double>(j, "fov_diameter_cm", where);
  if (j.contains("source_offset_mm")) c.source_offset_mm = header_vec3(j, "source_offset_mm", where);
  if (j.contains("detector_offset_mm")) c.detector_offset_mm = header_vec3(j, "detector_offset_mm", where);
  if (j.contains("orientation_correction"))
    c.orientation_correction = header_vec3(j, "orientation_correction", where);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(IoError::Kind::MalformedHeader, std::string("camera: ") + e.what());
  }
  return c;
}

json to_json(const PoseError& e) {
  return {{"t_mm", e.translation_mm},
          {"r_deg", e.rotation_deg},
          {"in_plane", e.in_plane_mm},
          {"out_of_plane", e.out_of_plane_mm}};
}

void save_transform(const RigidTransformd& t, const fs::path& path) { write_json(to_json(t), path); }
RigidTransformd load_transform(const fs::path& path) { return transform_from_json(read_json(path)); }
void save_camera(const CArmCamera& c, const fs::path& path) { write_json(to_json(c), path); }
CArmCamera load_camera(const fs::path& path) { return camera_from_json(read_json(path)); }

}  // namespace fluoro
