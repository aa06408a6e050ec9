#pragma once

#include "gpnp/core.hpp"
#include "gpnp/forward.hpp"
#include "gpnp/prior.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace gpnp {

struct ChainState {
  ImageTensor x;
  std::size_t step = 0;
  double sigma = 0.0;
};

struct SampleOptions {
  /// Chain starts at init_mean + sigma_max W instead of 1/2 + sigma_max W.
  std::optional<ImageTensor> init_mean;
  /// Called after every annealing level with the state at the end of that level.
  std::function<void(const ChainState &)> observer;
};

namespace detail {

inline ImageTensor initial_state(const GPnPParams &params, Shape shape, RandomSource &rng,
                                 const SampleOptions &opts) {
  if (!opts.init_mean)
    return init_state(params.sigma_max, shape, rng);
  if (opts.init_mean->shape() != shape)
    throw GeometryError("initial mean has shape " + to_string(opts.init_mean->shape()) +
                        ", expected " + to_string(shape));
  ImageTensor x = *opts.init_mean;
  for (double &v : x.data())
    v += params.sigma_max * rng.normal();
  return x;
}

template <class Fn> decltype(auto) at_step(std::size_t n, Fn &&fn) {
  try {
    return fn();
  } catch (const ChainError &) {
    throw;
  } catch (const std::exception &e) {
    throw ChainError(n, e.what());
  }
}

} // namespace detail

/// Annealed GPnP chain. For n = 0..N-1 with sigma = a^n sigma_max and
/// gamma = sqrt(beta) sigma:
///   X <- (1 - beta) X + beta Denoise(X; alpha sigma) + gamma W
///   X <- F1(X; gamma)
/// Any component failure aborts the chain with a ChainError carrying n.
template <ForwardModel M, Denoiser D>
ImageTensor gpnp_sample(const GPnPParams &params, const M &model, const D &denoiser, Shape shape,
                        RandomSource &rng, const SampleOptions &opts = {}) {
  const SigmaSchedule schedule = geometric_schedule(params);
  ImageTensor x = detail::initial_state(params, shape, rng, opts);
  const double root_beta = std::sqrt(params.beta);
  for (std::size_t n = 0; n < schedule.size(); ++n) {
    const double sigma = schedule[n];
    const double gamma = root_beta * sigma;
    x = detail::at_step(n, [&] {
      ImageTensor v = prior_proximal_generator(denoiser, x, sigma, params.beta, params.alpha, rng);
      ImageTensor out = model.generate(v, gamma, rng);
      if (out.shape() != shape)
        throw GeometryError("forward generator changed the image shape");
      return out;
    });
    if (opts.observer)
      opts.observer(ChainState{x, n, sigma});
  }
  return x;
}

/// Denoiser-driven Langevin recursion
///   X <- (1 - beta) X + beta Denoise(X; sigma) + sqrt(2 beta) sigma W,
/// run `n_inner` times at each level of the schedule.
///
/// The sqrt(2 beta) sigma W term is realized as two independent
/// sqrt(beta) sigma draws (one full tensor each, in storage order), so with
/// n_inner = 1 and alpha = 1 the trajectory is bitwise identical to
/// gpnp_sample under NullForwardModel with the same seed.
template <Denoiser D>
ImageTensor langevin_prior_sample(const GPnPParams &params, const D &denoiser, Shape shape,
                                  RandomSource &rng, std::size_t n_inner = 1,
                                  const SampleOptions &opts = {}) {
  if (n_inner < 1)
    throw ParameterError("langevin: n_inner must be >= 1");
  const SigmaSchedule schedule = geometric_schedule(params);
  ImageTensor x = detail::initial_state(params, shape, rng, opts);
  const double beta = params.beta;
  const double root_beta = std::sqrt(beta);
  for (std::size_t n = 0; n < schedule.size(); ++n) {
    const double sigma = schedule[n];
    const double noise = root_beta * sigma;
    for (std::size_t k = 0; k < n_inner; ++k) {
      detail::at_step(n, [&] {
        const ImageTensor den = denoiser.denoise(x, sigma);
        require_same_shape(den, x, "langevin");
        for (std::size_t i = 0; i < x.size(); ++i)
          x[i] = (1.0 - beta) * x[i] + beta * den[i] + noise * rng.normal();
        for (std::size_t i = 0; i < x.size(); ++i)
          x[i] = x[i] + noise * rng.normal();
      });
    }
    if (opts.observer)
      opts.observer(ChainState{x, n, sigma});
  }
  return x;
}

// ---------------------------------------------------------------------------
// Two-block Gibbs chain [x0, x1] -> [V, F1(V)], V = F0(x1).

struct TwoBlockState {
  ImageTensor x0;
  ImageTensor x1;
};

template <class G>
concept ProximalGenerator =
    requires(const G &g, const ImageTensor &v, double gamma, RandomSource &rng) {
      { g(v, gamma, rng) } -> std::convertible_to<ImageTensor>;
    };

/// Wraps a forward model's `generate` as a proximal generator.
template <ForwardModel M> auto generator_of(const M &model) {
  return [&model](const ImageTensor &v, double gamma, RandomSource &rng) {
    return model.generate(v, gamma, rng);
  };
}

template <ProximalGenerator G0, ProximalGenerator G1>
TwoBlockState gibbs_two_block_step(const TwoBlockState &state, const G0 &f0, const G1 &f1,
                                   double gamma, RandomSource &rng) {
  require_same_shape(state.x0, state.x1, "two-block state");
  ImageTensor v = f0(state.x1, gamma, rng);
  ImageTensor x1 = f1(v, gamma, rng);
  return {std::move(v), std::move(x1)};
}

// ---------------------------------------------------------------------------
// Multi-trial runner

struct TrialStats {
  ImageTensor mean;
  ImageTensor std; ///< population (1/n) standard deviation
  std::vector<ImageTensor> trials;
  std::size_t count() const noexcept { return trials.size(); }
};

/// Trial parallelism: GPNP_THREADS if set (>= 1), else the hardware concurrency.
inline std::size_t default_thread_count() {
  if (const char *env = std::getenv("GPNP_THREADS")) {
    char *end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1)
      return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline TrialStats reduce_trials(std::vector<ImageTensor> trials) {
  if (trials.empty())
    throw ParameterError("reduce_trials: no trials");
  const Shape shape = trials.front().shape();
  TrialStats st;
  st.mean = ImageTensor(shape);
  st.std = ImageTensor(shape);
  const double n = static_cast<double>(trials.size());
  for (const auto &t : trials) {
    require_same_shape(t, trials.front(), "reduce_trials");
    for (std::size_t i = 0; i < t.size(); ++i)
      st.mean[i] += t[i];
  }
  for (std::size_t i = 0; i < shape.size(); ++i)
    st.mean[i] /= n;
  for (const auto &t : trials)
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double d = t[i] - st.mean[i];
      st.std[i] += d * d;
    }
  for (std::size_t i = 0; i < shape.size(); ++i)
    st.std[i] = std::sqrt(st.std[i] / n);
  st.trials = std::move(trials);
  return st;
}

/// Runs `trial(rng, index)` for index = 0..n_trials-1, each with
/// RandomSource::child(base_seed, index). Trials may run concurrently; the
/// reduction is always in trial order. The first failing trial (by index)
/// is rethrown as a TrialError.
template <class TrialFn>
  requires std::invocable<TrialFn &, RandomSource &, std::size_t>
TrialStats run_trials(std::size_t n_trials, std::uint64_t base_seed, TrialFn trial,
                      std::size_t threads = default_thread_count()) {
  if (n_trials < 1)
    throw ParameterError("run_trials: n_trials must be >= 1");
  std::vector<std::optional<ImageTensor>> results(n_trials);
  std::vector<std::string> errors(n_trials);
  std::vector<char> failed(n_trials, 0); // not vector<bool>: written concurrently

  auto run_one = [&](std::size_t i) {
    try {
      RandomSource rng = RandomSource::child(base_seed, i);
      results[i] = trial(rng, i);
    } catch (const std::exception &e) {
      failed[i] = 1;
      errors[i] = e.what();
    }
  };

  threads = std::clamp<std::size_t>(threads, 1, n_trials);
  if (threads == 1) {
    for (std::size_t i = 0; i < n_trials; ++i) {
      run_one(i);
      if (failed[i])
        break;
    }
  } else {
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(m);
            if (next >= n_trials)
              return;
            i = next++;
          }
          run_one(i);
        }
      });
  }
  for (std::size_t i = 0; i < n_trials; ++i)
    if (failed[i])
      throw TrialError(i, errors[i]);

  std::vector<ImageTensor> out;
  out.reserve(n_trials);
  for (auto &r : results)
    out.push_back(std::move(*r));
  return reduce_trials(std::move(out));
}

/// run_trials over gpnp_sample.
template <ForwardModel M, Denoiser D>
TrialStats run_gpnp_trials(std::size_t n_trials, const GPnPParams &params, const M &model,
                           const D &denoiser, Shape shape, std::uint64_t base_seed,
                           const SampleOptions &opts = {},
                           std::size_t threads = default_thread_count()) {
  return run_trials(
      n_trials, base_seed,
      [&](RandomSource &rng, std::size_t) {
        return gpnp_sample(params, model, denoiser, shape, rng, opts);
      },
      threads);
}

} // namespace gpnp
