#pragma once

// Experiment configuration and the batch runners behind the command-line tool.

#include "gpnp/core.hpp"
#include "gpnp/errors.hpp"
#include "gpnp/external_denoiser.hpp"
#include "gpnp/forward.hpp"
#include "gpnp/images.hpp"
#include "gpnp/oracle.hpp"
#include "gpnp/png.hpp"
#include "gpnp/prior.hpp"
#include "gpnp/raster.hpp"
#include "gpnp/sampler.hpp"
#include "gpnp/tomography.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace gpnp {

enum class ExperimentKind { prior, interpolate, tomo, verify };

inline const char *to_string(ExperimentKind k) {
  switch (k) {
  case ExperimentKind::prior:
    return "prior";
  case ExperimentKind::interpolate:
    return "interpolate";
  case ExperimentKind::tomo:
    return "tomo";
  case ExperimentKind::verify:
    return "verify";
  }
  return "?";
}

inline std::optional<ExperimentKind> parse_kind(std::string_view s) {
  for (auto k : {ExperimentKind::prior, ExperimentKind::interpolate, ExperimentKind::tomo,
                 ExperimentKind::verify})
    if (s == to_string(k))
      return k;
  return std::nullopt;
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::interpolate;
  GPnPParams params;
  double sigma_y = 0.005;
  double sample_fraction = 0.1;
  std::size_t views = 16;
  std::string denoiser = "dct"; ///< gaussian | dct | external:<command>
  double gaussian_mu0 = 0.5;
  double gaussian_tau = 0.2;
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::string input;        ///< PNG or .f32 raster; empty selects the built-in test image
  std::size_t size = 128;   ///< side of the built-in test image / prior sample
  std::string out = "out";
  std::string init = "noise"; ///< noise | nearest
  std::vector<double> checkpoints{0.5, 0.107, 0.023, 0.005};
  std::size_t n_inner = 1;  ///< Langevin iterations per level (prior only)
  double edge_threshold = 0.1;
};

/// Defaults for one experiment kind.
inline ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
  case ExperimentKind::interpolate:
    c.sigma_y = 0.005;
    c.size = 128;
    break;
  case ExperimentKind::tomo:
    c.sigma_y = 0.25;
    c.size = 64;
    break;
  case ExperimentKind::prior:
    c.size = 64;
    break;
  case ExperimentKind::verify:
    break;
  }
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig &c) {
  return {{"experiment", to_string(c.kind)},
          {"alpha", c.params.alpha},
          {"beta", c.params.beta},
          {"sigma_max", c.params.sigma_max},
          {"sigma_min", c.params.sigma_min},
          {"steps", c.params.n_steps},
          {"sigma_y", c.sigma_y},
          {"sample_fraction", c.sample_fraction},
          {"views", c.views},
          {"denoiser", c.denoiser},
          {"gaussian_mu0", c.gaussian_mu0},
          {"gaussian_tau", c.gaussian_tau},
          {"trials", c.trials},
          {"seed", c.seed},
          {"input", c.input},
          {"size", c.size},
          {"out", c.out},
          {"init", c.init},
          {"checkpoints", c.checkpoints},
          {"n_inner", c.n_inner},
          {"edge_threshold", c.edge_threshold}};
}

namespace detail {

template <class T> T field(const nlohmann::json &j, const std::string &key) {
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (j.is_number_integer() && j.get<long long>() < 0)
        throw ConfigError(key, "must be non-negative");
      if (!j.is_number_integer())
        throw ConfigError(key, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number())
        throw ConfigError(key, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string())
        throw ConfigError(key, "expected a string");
    }
    return j.get<T>();
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(key, e.what());
  }
}

inline void apply(ExperimentConfig &c, const nlohmann::json &obj) {
  if (!obj.is_object())
    throw ConfigError("<root>", "expected a JSON object");
  for (const auto &[key, v] : obj.items()) {
    if (key == "experiment") {
      const auto k = parse_kind(field<std::string>(v, key));
      if (!k)
        throw ConfigError(key, "unknown experiment '" + v.get<std::string>() + "'");
      if (*k != c.kind)
        throw ConfigError(key, std::string("config is for '") + to_string(*k) +
                                   "' but the command is '" + to_string(c.kind) + "'");
    } else if (key == "alpha") {
      c.params.alpha = field<double>(v, key);
    } else if (key == "beta") {
      c.params.beta = field<double>(v, key);
    } else if (key == "sigma_max") {
      c.params.sigma_max = field<double>(v, key);
    } else if (key == "sigma_min") {
      c.params.sigma_min = field<double>(v, key);
    } else if (key == "steps") {
      c.params.n_steps = field<std::size_t>(v, key);
    } else if (key == "sigma_y") {
      c.sigma_y = field<double>(v, key);
    } else if (key == "sample_fraction") {
      c.sample_fraction = field<double>(v, key);
    } else if (key == "views") {
      c.views = field<std::size_t>(v, key);
    } else if (key == "denoiser") {
      c.denoiser = field<std::string>(v, key);
    } else if (key == "gaussian_mu0") {
      c.gaussian_mu0 = field<double>(v, key);
    } else if (key == "gaussian_tau") {
      c.gaussian_tau = field<double>(v, key);
    } else if (key == "trials") {
      c.trials = field<std::size_t>(v, key);
    } else if (key == "seed") {
      c.seed = field<std::uint64_t>(v, key);
    } else if (key == "input") {
      c.input = field<std::string>(v, key);
    } else if (key == "size") {
      c.size = field<std::size_t>(v, key);
    } else if (key == "out") {
      c.out = field<std::string>(v, key);
    } else if (key == "init") {
      c.init = field<std::string>(v, key);
    } else if (key == "checkpoints") {
      if (!v.is_array())
        throw ConfigError(key, "expected an array of numbers");
      c.checkpoints.clear();
      for (const auto &e : v)
        c.checkpoints.push_back(field<double>(e, key));
    } else if (key == "n_inner") {
      c.n_inner = field<std::size_t>(v, key);
    } else if (key == "edge_threshold") {
      c.edge_threshold = field<double>(v, key);
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
}

} // namespace detail

inline void validate(const ExperimentConfig &c) {
  const auto &p = c.params;
  if (!(p.beta > 0.0 && p.beta < 1.0))
    throw ConfigError("beta", "must satisfy 0 < beta < 1");
  if (!(p.alpha >= 1.0) || !std::isfinite(p.alpha))
    throw ConfigError("alpha", "must be >= 1");
  if (!(p.sigma_min > 0.0))
    throw ConfigError("sigma_min", "must be > 0");
  if (!(p.sigma_max >= p.sigma_min) || !std::isfinite(p.sigma_max))
    throw ConfigError("sigma_max", "must be >= sigma_min");
  if (p.n_steps < 1)
    throw ConfigError("steps", "must be >= 1");
  if (c.trials < 1)
    throw ConfigError("trials", "must be >= 1");
  if (c.kind == ExperimentKind::tomo ? !(c.sigma_y > 0.0) : !(c.sigma_y >= 0.0))
    throw ConfigError("sigma_y", c.kind == ExperimentKind::tomo ? "must be > 0" : "must be >= 0");
  if (!(c.sample_fraction > 0.0 && c.sample_fraction <= 1.0))
    throw ConfigError("sample_fraction", "must be in (0, 1]");
  if (c.views < 1)
    throw ConfigError("views", "must be >= 1");
  if (c.denoiser != "gaussian" && c.denoiser != "dct" &&
      !(c.denoiser.starts_with("external:") && c.denoiser.size() > 9))
    throw ConfigError("denoiser", "expected gaussian, dct or external:<command>");
  if (!(c.gaussian_tau > 0.0))
    throw ConfigError("gaussian_tau", "must be > 0");
  if (!std::isfinite(c.gaussian_mu0))
    throw ConfigError("gaussian_mu0", "must be finite");
  if (c.size < 1)
    throw ConfigError("size", "must be >= 1");
  if (c.init != "noise" && c.init != "nearest")
    throw ConfigError("init", "expected noise or nearest");
  if (c.init == "nearest" && c.kind != ExperimentKind::interpolate)
    throw ConfigError("init", "nearest-fill initialization applies to interpolate only");
  for (double s : c.checkpoints)
    if (!(s > 0.0))
      throw ConfigError("checkpoints", "levels must be > 0");
  if (c.n_inner < 1)
    throw ConfigError("n_inner", "must be >= 1");
  if (!(c.edge_threshold >= 0.0))
    throw ConfigError("edge_threshold", "must be >= 0");
  if (c.out.empty())
    throw ConfigError("out", "must not be empty");
  if (!c.input.empty() && !std::filesystem::is_regular_file(c.input))
    throw ConfigError("input", "file not found: " + c.input);
}

/// Builds a validated config: defaults for `kind`, then the file (a config
/// object or a run manifest with a "config" member), then `overrides`.
inline ExperimentConfig parse_config(ExperimentKind kind, const nlohmann::json &file,
                                     const nlohmann::json &overrides = nlohmann::json::object()) {
  ExperimentConfig c = default_config(kind);
  if (!file.is_null()) {
    if (file.is_object() && file.contains("config") && file.contains("artifacts"))
      detail::apply(c, file.at("config"));
    else
      detail::apply(c, file);
  }
  detail::apply(c, overrides);
  validate(c);
  return c;
}

inline ExperimentConfig load_config(ExperimentKind kind, const std::optional<std::string> &path,
                                    const nlohmann::json &overrides = nlohmann::json::object()) {
  nlohmann::json file;
  if (path) {
    std::ifstream in(*path);
    if (!in)
      throw ConfigError("config", "cannot read " + *path);
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error &e) {
      throw ConfigError("config", std::string("malformed JSON: ") + e.what());
    }
  }
  return parse_config(kind, file, overrides);
}

// ---------------------------------------------------------------------------

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct ExperimentResult {
  int exit_code = kExitOk;
  std::string message;
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<std::string> artifacts;
};

namespace detail {

namespace fs = std::filesystem;

/// Stream for data generation (sampling sites, measurement noise); trials use 0..trials-1.
inline RandomSource measurement_stream(std::uint64_t seed) {
  return RandomSource::child(seed, std::numeric_limits<std::uint64_t>::max());
}

inline AnyDenoiser make_denoiser(const ExperimentConfig &c) {
  if (c.denoiser == "gaussian")
    return GaussianConjugateDenoiser(c.gaussian_mu0, c.gaussian_tau);
  if (c.denoiser == "dct")
    return DctThresholdDenoiser();
  return AnyDenoiser(std::make_shared<ExternalDenoiser>(c.denoiser.substr(9),
                                                        fs::path(c.out) / "exchange"));
}

inline ImageTensor load_truth(const ExperimentConfig &c) {
  if (c.input.empty())
    return c.kind == ExperimentKind::tomo ? images::shepp_logan(c.size)
                                          : images::shaded_shapes(c.size);
  const fs::path p(c.input);
  ImageTensor img = p.extension() == ".f32" ? raster::read_image(p) : png::read_png(p);
  return png::to_gray(img);
}

class Writer {
public:
  explicit Writer(fs::path root) : root_(std::move(root)) {}

  const fs::path &root() const { return root_; }

  void image(const std::string &name, const ImageTensor &img, double lo = 0.0, double hi = 1.0,
             const nlohmann::json &extra = {}) {
    const fs::path f32 = root_ / (name + ".f32");
    fs::create_directories(f32.parent_path());
    raster::write_image(f32, img);
    if (!extra.is_null()) {
      auto meta = raster::read_json(raster::sidecar_path(f32));
      meta.update(extra);
      raster::write_json(raster::sidecar_path(f32), meta);
    }
    png::write_preview(root_ / (name + ".png"), img, lo, hi);
    add(name + ".f32");
    add(name + ".json");
    add(name + ".png");
  }

  void add(const std::string &rel) { artifacts_.push_back(rel); }
  const std::vector<std::string> &artifacts() const { return artifacts_; }

private:
  fs::path root_;
  std::vector<std::string> artifacts_;
};

inline std::string trial_name(std::size_t i) {
  std::ostringstream s;
  s << "trial_" << std::setw(3) << std::setfill('0') << i;
  return s.str();
}

inline double max_value(const ImageTensor &img) {
  double m = 0.0;
  for (double v : img.data())
    m = std::max(m, v);
  return m;
}

/// Schedule indices nearest each checkpoint level, deduplicated, ascending.
inline std::vector<std::size_t> checkpoint_steps(const ExperimentConfig &c) {
  const SigmaSchedule s = geometric_schedule(c.params);
  std::set<std::size_t> steps;
  for (double level : c.checkpoints)
    steps.insert(s.nearest(level));
  return {steps.begin(), steps.end()};
}

struct SampledRun {
  TrialStats stats;
  std::vector<std::vector<ChainState>> snapshots; ///< [trial][checkpoint]
};

template <class SampleFn>
SampledRun sample_with_snapshots(const ExperimentConfig &c, SampleFn sample) {
  const auto steps = checkpoint_steps(c);
  SampledRun run;
  run.snapshots.resize(c.trials);
  run.stats = run_trials(c.trials, c.seed, [&](RandomSource &rng, std::size_t trial) {
    SampleOptions opts;
    auto &mine = run.snapshots[trial];
    opts.observer = [&](const ChainState &st) {
      if (std::binary_search(steps.begin(), steps.end(), st.step))
        mine.push_back(st);
    };
    return sample(rng, opts);
  });
  return run;
}

inline void write_samples(Writer &w, const ExperimentConfig &c, const SampledRun &run,
                          double lo, double hi) {
  for (std::size_t t = 0; t < run.stats.trials.size(); ++t) {
    w.image("trials/" + trial_name(t), run.stats.trials[t], lo, hi);
    for (const auto &snap : run.snapshots[t]) {
      std::ostringstream name;
      name << "snapshots/" << trial_name(t) << "_step_" << std::setw(3) << std::setfill('0')
           << snap.step;
      w.image(name.str(), snap.x, lo, hi, {{"step", snap.step}, {"sigma", snap.sigma}});
    }
  }
  w.image("mean", run.stats.mean, lo, hi);
  const double top = max_value(run.stats.std);
  w.image("std", run.stats.std, 0.0, top > 0.0 ? top : 1.0);
  (void)c;
}

inline void edge_metrics(nlohmann::json &m, const ImageTensor &truth, const ImageTensor &std_img,
                         double threshold) {
  const auto mask = images::edge_mask(truth, threshold);
  const auto mm = images::masked_means(std_img, mask);
  m["std_edge"] = mm.inside;
  m["std_flat"] = mm.outside;
  m["edge_ratio"] = mm.outside > 0.0 ? mm.inside / mm.outside
                                     : std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (double v : std_img.data())
    lo = std::min(lo, v);
  m["std_min"] = lo;
}

inline ExperimentResult run_interpolate(const ExperimentConfig &c, Writer &w) {
  ExperimentResult res;
  const ImageTensor truth = load_truth(c);
  const Shape shape = truth.shape();
  const std::size_t p = shape.size();
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(c.sample_fraction * static_cast<double>(p))));

  RandomSource data_rng = measurement_stream(c.seed);
  std::vector<std::size_t> order(p);
  for (std::size_t i = 0; i < p; ++i)
    order[i] = i;
  auto &eng = data_rng.engine();
  for (std::size_t i = 0; i < m; ++i) { // partial Fisher-Yates
    const std::size_t j = i + static_cast<std::size_t>(eng() % (p - i));
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> sites(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(sites.begin(), sites.end());
  std::vector<double> y(m);
  for (std::size_t k = 0; k < m; ++k)
    y[k] = truth[sites[k]] + c.sigma_y * data_rng.normal();

  ImageTensor mask(shape);
  for (auto s : sites)
    mask[s] = 1.0;
  const ImageTensor baseline = images::nearest_fill(shape, sites, y);

  const SubsamplingModel model(shape, sites, y, c.sigma_y);
  const AnyDenoiser den = make_denoiser(c);
  std::optional<ImageTensor> init;
  if (c.init == "nearest")
    init = baseline;
  auto run = sample_with_snapshots(c, [&](RandomSource &rng, SampleOptions &opts) {
    opts.init_mean = init;
    return gpnp_sample(c.params, model, den, shape, rng, opts);
  });

  w.image("ground_truth", truth);
  w.image("mask", mask);
  w.image("baseline_nearest", baseline);
  write_samples(w, c, run, 0.0, 1.0);

  auto &mt = res.metrics;
  mt["samples"] = m;
  mt["rmse_mean"] = images::rmse(run.stats.mean, truth);
  mt["rmse_baseline"] = images::rmse(baseline, truth);
  mt["improvement"] = 1.0 - mt["rmse_mean"].get<double>() / mt["rmse_baseline"].get<double>();
  edge_metrics(mt, truth, run.stats.std, c.edge_threshold);
  return res;
}

inline ExperimentResult run_tomo(const ExperimentConfig &c, Writer &w) {
  ExperimentResult res;
  const ImageTensor truth = load_truth(c);
  if (truth.height() != truth.width())
    throw GeometryError("tomo: input image must be square, got " + to_string(truth.shape()));
  ParallelBeamProjector projector(truth.height(), c.views);
  RandomSource data_rng = measurement_stream(c.seed);
  Eigen::VectorXd y = projector.project(truth);
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y[i] += c.sigma_y * data_rng.normal();

  const TomographyModel model = make_tomography_model(projector, y, c.sigma_y);
  const AnyDenoiser den = make_denoiser(c);
  const Shape shape = truth.shape();
  auto run = sample_with_snapshots(c, [&](RandomSource &rng, SampleOptions &opts) {
    return gpnp_sample(c.params, model, den, shape, rng, opts);
  });

  double lo = 0.0, hi = 1.0;
  for (double v : truth.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  w.image("ground_truth", truth, lo, hi);
  raster::write_sinogram(w.root() / "sinogram.f32",
                         {c.views, projector.n_bins(), c.sigma_y,
                          std::vector<double>(y.data(), y.data() + y.size())});
  w.add("sinogram.f32");
  w.add("sinogram.json");
  write_samples(w, c, run, lo, hi);

  const Eigen::VectorXd resid = projector.project(run.stats.mean) - y;
  auto &mt = res.metrics;
  mt["residual_rms"] = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));
  mt["residual_ratio"] = mt["residual_rms"].get<double>() / c.sigma_y;
  mt["rmse_mean"] = images::rmse(run.stats.mean, truth);
  edge_metrics(mt, truth, run.stats.std, c.edge_threshold);
  return res;
}

inline ExperimentResult run_prior(const ExperimentConfig &c, Writer &w) {
  ExperimentResult res;
  const Shape shape{c.size, c.size, 1};
  const AnyDenoiser den = make_denoiser(c);
  auto run = sample_with_snapshots(c, [&](RandomSource &rng, SampleOptions &opts) {
    return langevin_prior_sample(c.params, den, shape, rng, c.n_inner, opts);
  });
  write_samples(w, c, run, 0.0, 1.0);
  double s = 0.0, s2 = 0.0;
  for (double v : run.stats.mean.data())
    s += v;
  for (double v : run.stats.std.data())
    s2 += v;
  res.metrics["mean_of_mean"] = s / static_cast<double>(shape.size());
  res.metrics["mean_of_std"] = s2 / static_cast<double>(shape.size());
  return res;
}

inline ExperimentResult run_verify(const ExperimentConfig &, Writer &w) {
  ExperimentResult res;
  const auto rows = oracle::run_battery();
  {
    std::ofstream os(w.root() / "report.csv");
    oracle::write_csv(os, rows);
    if (!os)
      throw raster::IoError("cannot write report.csv");
  }
  w.add("report.csv");
  bool ok = true;
  for (const auto &r : rows)
    ok = ok && r.passed;
  res.metrics["cases"] = rows.size();
  res.metrics["all_passed"] = ok;
  if (!ok) {
    res.exit_code = kExitCheckFailed;
    res.message = "oracle battery: at least one check failed (see report.csv)";
  }
  return res;
}

} // namespace detail

/// Runs one experiment, writing artifacts and manifest.json under cfg.out.
/// Never throws: failures are reported through the exit code and message.
inline ExperimentResult run_experiment(const ExperimentConfig &cfg) {
  namespace fs = std::filesystem;
  try {
    validate(cfg);
  } catch (const ConfigError &e) {
    return {kExitConfig, e.what(), {}, {}};
  }
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out))
    return {kExitConfig, "out: cannot create " + cfg.out, {}, {}};

  detail::Writer writer{fs::path(cfg.out)};
  ExperimentResult res;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    switch (cfg.kind) {
    case ExperimentKind::interpolate:
      res = detail::run_interpolate(cfg, writer);
      break;
    case ExperimentKind::tomo:
      res = detail::run_tomo(cfg, writer);
      break;
    case ExperimentKind::prior:
      res = detail::run_prior(cfg, writer);
      break;
    case ExperimentKind::verify:
      res = detail::run_verify(cfg, writer);
      break;
    }
  } catch (const std::exception &e) {
    return {kExitRuntime, e.what(), {}, writer.artifacts()};
  }
  res.metrics["runtime_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.artifacts = writer.artifacts();
  try {
    raster::write_json(fs::path(cfg.out) / "manifest.json", {{"config", to_json(cfg)},
                                                             {"metrics", res.metrics},
                                                             {"artifacts", res.artifacts}});
  } catch (const std::exception &e) {
    return {kExitRuntime, e.what(), res.metrics, res.artifacts};
  }
  res.artifacts.push_back("manifest.json");
  return res;
}

} // namespace gpnp
