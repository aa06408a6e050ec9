#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gpnp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside its admissible domain (beta not in (0,1), sigma <= 0, ...).
class ParameterError : public Error {
public:
  using Error::Error;
};

/// Tensor shapes or tomography geometry do not fit together.
class GeometryError : public Error {
public:
  using Error::Error;
};

/// A linear solve or factorization failed.
class SolverError : public Error {
public:
  SolverError(const std::string &what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// A denoiser (typically an external process) did not produce a valid output.
class DenoiserError : public Error {
public:
  using Error::Error;
};

/// An iterative oracle computation did not converge.
class IterationError : public Error {
public:
  using Error::Error;
};

/// The 1D oracle grid is too coarse for the requested kernel width.
class ResolutionError : public Error {
public:
  using Error::Error;
};

/// Configuration file or flag problem; `field()` names the offending key.
class ConfigError : public Error {
public:
  ConfigError(std::string field, const std::string &what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string &field() const noexcept { return field_; }

private:
  std::string field_;
};

/// A component failure inside a Markov chain, tagged with the annealing step.
class ChainError : public Error {
public:
  ChainError(std::size_t step, const std::string &what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

/// A failure inside one trial of a multi-trial run.
class TrialError : public Error {
public:
  TrialError(std::size_t trial, const std::string &what)
      : Error("trial " + std::to_string(trial) + ": " + what), trial_(trial) {}
  std::size_t trial() const noexcept { return trial_; }

private:
  std::size_t trial_;
};

} // namespace gpnp
