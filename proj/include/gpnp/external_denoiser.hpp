#pragma once

#include "gpnp/core.hpp"
#include "gpnp/raster.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

namespace gpnp {

/// Bridges to a denoiser running as a child process.
///
/// Each call writes `input.f32` (little-endian float32, storage order) and
/// `manifest.json` = {"height","width","channels","sigma"} into the exchange
/// directory, runs `<command> <exchange_dir>`, and expects the child to write
/// `output.f32` with the same number of values and exit with status 0.
///
/// Calls are serialized; the exchange directory is shared between them.
class ExternalDenoiser {
public:
  ExternalDenoiser(std::string command, std::filesystem::path exchange_dir)
      : command_(std::move(command)), dir_(std::move(exchange_dir)),
        mutex_(std::make_shared<std::mutex>()) {
    if (command_.empty())
      throw ParameterError("external denoiser: empty command");
  }

  const std::string &command() const noexcept { return command_; }
  const std::filesystem::path &exchange_dir() const noexcept { return dir_; }

  ImageTensor denoise(const ImageTensor &x, double sigma) const {
    namespace fs = std::filesystem;
    std::lock_guard lock(*mutex_);
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec)
      throw DenoiserError("external denoiser: cannot create " + dir_.string());
    const fs::path input = dir_ / "input.f32";
    const fs::path output = dir_ / "output.f32";
    fs::remove(output, ec);
    try {
      raster::write_f32(input, x.data());
      raster::write_json(dir_ / "manifest.json", {{"height", x.height()},
                                                  {"width", x.width()},
                                                  {"channels", x.channels()},
                                                  {"sigma", sigma}});
    } catch (const raster::IoError &e) {
      throw DenoiserError(std::string("external denoiser: ") + e.what());
    }

    const std::string cmd = command_ + " " + quote(dir_.string());
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw DenoiserError("external denoiser: '" + cmd + "' failed with status " +
                          std::to_string(status));

    std::vector<double> values;
    try {
      values = raster::read_f32(output);
    } catch (const raster::IoError &e) {
      throw DenoiserError(std::string("external denoiser: malformed output: ") + e.what());
    }
    if (values.size() != x.size())
      throw DenoiserError("external denoiser: output has " + std::to_string(values.size()) +
                          " values, expected " + std::to_string(x.size()));
    for (double v : values)
      if (!std::isfinite(v))
        throw DenoiserError("external denoiser: output contains non-finite values");
    return ImageTensor(x.shape(), std::move(values));
  }

private:
  static std::string quote(const std::string &s) {
    std::string out = "'";
    for (char c : s) {
      if (c == '\'')
        out += "'\\''";
      else
        out += c;
    }
    return out + "'";
  }

  std::string command_;
  std::filesystem::path dir_;
  std::shared_ptr<std::mutex> mutex_;
};

} // namespace gpnp
