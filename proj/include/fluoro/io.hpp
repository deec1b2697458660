#pragma once

// File formats.
//
//   <name>.vol.json + <name>.vol.raw   volume header + f32le voxels, x-fastest
//   <name>.img.json + <name>.img.raw   image header + f32le pixels, u-fastest
//   *.json                             transforms and cameras
//
// Functions taking a volume/image path accept either the base name or the
// path of the .json header.

#include "fluoro/core.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace fluoro {

class IoError : public std::runtime_error {
 public:
  enum class Kind { MalformedHeader, SizeMismatch, Unreadable };

  IoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_volume(const Volume& volume, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

void save_image(const Image2D& image, const std::filesystem::path& path);
Image2D load_image(const std::filesystem::path& path);

/// 16-bit binary PGM, linearly windowed to [lo, hi]; lo == hi picks the
/// image range.
void save_pgm(const Image2D& image, const std::filesystem::path& path, double lo = 0.0, double hi = 0.0);

void save_transform(const RigidTransformd& t, const std::filesystem::path& path);
RigidTransformd load_transform(const std::filesystem::path& path);

void save_camera(const CArmCamera& c, const std::filesystem::path& path);
CArmCamera load_camera(const std::filesystem::path& path);

nlohmann::json to_json(const RigidTransformd& t);
RigidTransformd transform_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CArmCamera& c);
CArmCamera camera_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PoseError& e);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace fluoro
