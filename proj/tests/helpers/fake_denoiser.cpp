// Stand-in external denoiser for the bridge tests.
// usage: fake_denoiser [--fail | --short | --nan] <exchange-dir>
// Writes output = input / (1 + sigma) and appends sigma to calls.log.

#include "gpnp/raster.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

int main(int argc, char **argv) {
  if (argc < 2)
    return 2;
  const std::string mode = argc > 2 ? argv[1] : "";
  const std::filesystem::path dir = argv[argc - 1];
  if (mode == "--fail")
    return 3;
  namespace r = gpnp::raster;
  const auto meta = r::read_json(dir / "manifest.json");
  const auto n = meta.at("height").get<std::size_t>() * meta.at("width").get<std::size_t>() *
                 meta.at("channels").get<std::size_t>();
  const double sigma = meta.at("sigma").get<double>();
  auto x = r::read_f32(dir / "input.f32");
  if (x.size() != n)
    return 4;
  for (double &v : x)
    v /= 1.0 + sigma;
  if (mode == "--short")
    x.pop_back();
  if (mode == "--nan")
    x[0] = std::numeric_limits<double>::quiet_NaN();
  r::write_f32(dir / "output.f32", x);
  std::ofstream(dir / "calls.log", std::ios::app) << sigma << "\n";
  return 0;
}
