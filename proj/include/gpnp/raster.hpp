#pragma once

// Little-endian float32 rasters with JSON sidecars.

#include "gpnp/core.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace gpnp::raster {

namespace fs = std::filesystem;

class IoError : public Error {
public:
  using Error::Error;
};

inline std::vector<char> encode_f32(std::span<const double> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int k = 0; k < 4; ++k)
      bytes[4 * i + k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
  }
  return bytes;
}

inline std::vector<double> decode_f32(std::span<const char> bytes) {
  if (bytes.size() % 4 != 0)
    throw IoError("float32 raster length is not a multiple of 4 bytes");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + k])) << (8 * k);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

inline void write_f32(const fs::path &path, std::span<const double> values) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw IoError("cannot open " + path.string() + " for writing");
  const auto bytes = encode_f32(values);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os)
    throw IoError("short write to " + path.string());
}

inline std::vector<double> read_f32(const fs::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_f32(bytes);
}

inline void write_json(const fs::path &path, const nlohmann::json &j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os)
    throw IoError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path &path) {
  std::ifstream is(path);
  if (!is)
    throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error &e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline fs::path sidecar_path(const fs::path &raster) {
  fs::path p = raster;
  p.replace_extension(".json");
  return p;
}

/// Writes `<name>.f32` and `<name>.json` with {"height","width","channels"}.
inline void write_image(const fs::path &path, const ImageTensor &img) {
  write_f32(path, img.data());
  write_json(sidecar_path(path), {{"height", img.height()},
                                  {"width", img.width()},
                                  {"channels", img.channels()}});
}

inline ImageTensor read_image(const fs::path &path) {
  const auto meta = read_json(sidecar_path(path));
  Shape shape;
  try {
    shape = {meta.at("height").get<std::size_t>(), meta.at("width").get<std::size_t>(),
             meta.at("channels").get<std::size_t>()};
  } catch (const nlohmann::json::exception &e) {
    throw IoError(sidecar_path(path).string() + ": " + e.what());
  }
  auto values = read_f32(path);
  if (values.size() != shape.size())
    throw IoError(path.string() + ": expected " + std::to_string(shape.size()) +
                  " values, found " + std::to_string(values.size()));
  return ImageTensor(shape, std::move(values));
}

struct Sinogram {
  std::size_t views = 0;
  std::size_t bins = 0;
  double sigma_y = 0.0;
  std::vector<double> values; ///< view-major: values[view * bins + bin]
};

inline void write_sinogram(const fs::path &path, const Sinogram &s) {
  if (s.values.size() != s.views * s.bins)
    throw IoError("sinogram size does not match views x bins");
  write_f32(path, s.values);
  write_json(sidecar_path(path), {{"views", s.views}, {"bins", s.bins}, {"sigma_y", s.sigma_y}});
}

inline Sinogram read_sinogram(const fs::path &path) {
  const auto meta = read_json(sidecar_path(path));
  Sinogram s;
  try {
    s.views = meta.at("views").get<std::size_t>();
    s.bins = meta.at("bins").get<std::size_t>();
    s.sigma_y = meta.at("sigma_y").get<double>();
  } catch (const nlohmann::json::exception &e) {
    throw IoError(sidecar_path(path).string() + ": " + e.what());
  }
  s.values = read_f32(path);
  if (s.values.size() != s.views * s.bins)
    throw IoError(path.string() + ": sinogram length does not match sidecar");
  return s;
}

} // namespace gpnp::raster
