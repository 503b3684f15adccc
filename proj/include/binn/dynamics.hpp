#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "binn/numerics.hpp"
#include "binn/rng.hpp"

namespace binn {

inline constexpr double kDivergenceLimit = 1e12;

/// Uniformly sampled state sequence; timestamps are implicit as t0 + k*h.
struct Trajectory {
  double t0 = 0.0;
  double h = 0.0;
  std::vector<Vector> states;

  Eigen::Index dim() const { return states.empty() ? 0 : states.front().size(); }
  std::size_t size() const { return states.size(); }
  double time_at(std::size_t k) const { return t0 + static_cast<double>(k) * h; }
};

// ---------------------------------------------------------------------------
// Reference systems
// ---------------------------------------------------------------------------

inline Vector lorenz63_field(const Vector& x, double sigma, double rho, double beta) {
  if (x.size() != 3) {
    throw std::invalid_argument("lorenz63_field: state must be 3-dimensional");
  }
  Vector f(3);
  f[0] = sigma * (x[1] - x[0]);
  f[1] = rho * x[0] - x[1] - x[0] * x[2];
  f[2] = x[0] * x[1] - beta * x[2];
  return f;
}

inline Vector oregonator_field(const Vector& x, double alpha, double beta, double sigma) {
  if (x.size() != 3) {
    throw std::invalid_argument("oregonator_field: state must be 3-dimensional");
  }
  Vector f(3);
  f[0] = alpha * (x[1] + x[0] * (1.0 - beta * x[0] - x[1]));
  f[1] = (x[2] - (1.0 + x[0]) * x[1]) / alpha;
  f[2] = sigma * (x[0] - x[2]);
  return f;
}

/// Lorenz-96 with periodic index wraparound and linear damping.
inline Vector lorenz96_field(const Vector& x, double forcing) {
  const Eigen::Index n = x.size();
  if (n < 4) {
    throw std::invalid_argument("lorenz96_field: state must have at least 4 components");
  }
  Vector f(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index ip1 = (i + 1) % n;
    const Eigen::Index im1 = (i + n - 1) % n;
    const Eigen::Index im2 = (i + n - 2) % n;
    f[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + forcing;
  }
  return f;
}

enum class SystemName { Lorenz63, Oregonator, Lorenz96 };

/// One of the three reference ODE systems together with its parameters.
struct OdeSystem {
  SystemName name = SystemName::Lorenz63;
  std::map<std::string, double> params;
  int dim = 3;

  static OdeSystem lorenz63() {
    return {SystemName::Lorenz63, {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}}, 3};
  }
  static OdeSystem oregonator() {
    return {SystemName::Oregonator, {{"alpha", 77.27}, {"beta", 8.375e-6}, {"sigma", 0.161}}, 3};
  }
  static OdeSystem lorenz96() { return {SystemName::Lorenz96, {{"A", 9.0}}, 40}; }

  double param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) {
      throw std::invalid_argument("OdeSystem: missing parameter '" + key + "'");
    }
    return it->second;
  }

  Vector field(const Vector& x) const {
    if (x.size() != dim) {
      throw std::invalid_argument("OdeSystem::field: expected dimension " + std::to_string(dim) +
                                  ", got " + std::to_string(x.size()));
    }
    switch (name) {
      case SystemName::Lorenz63:
        return lorenz63_field(x, param("sigma"), param("rho"), param("beta"));
      case SystemName::Oregonator:
        return oregonator_field(x, param("alpha"), param("beta"), param("sigma"));
      case SystemName::Lorenz96:
        return lorenz96_field(x, param("A"));
    }
    throw std::logic_error("OdeSystem::field: unknown system");
  }

  /// Sampling step of the published experiments for this system.
  double default_step() const {
    switch (name) {
      case SystemName::Lorenz63: return 0.01;
      case SystemName::Oregonator: return 0.1;
      case SystemName::Lorenz96: return 0.05;
    }
    return 0.01;
  }

  /// Fixed, documented starting point; spinup moves it onto the attractor.
  Vector default_initial_state() const {
    switch (name) {
      case SystemName::Lorenz63: {
        Vector x(3);
        x << 1.0, 1.0, 1.0;
        return x;
      }
      case SystemName::Oregonator: {
        Vector x(3);
        x << 1.0, 2.0, 3.0;
        return x;
      }
      case SystemName::Lorenz96: {
        Vector x = Vector::Constant(dim, param("A"));
        x[0] += 0.01;  // uniform state is a fixed point; nudge off it
        return x;
      }
    }
    return Vector::Zero(dim);
  }
};

inline std::vector<std::string> system_names() { return {"lorenz63", "oregonator", "lorenz96"}; }

inline std::optional<OdeSystem> system_from_name(const std::string& name) {
  if (name == "lorenz63") return OdeSystem::lorenz63();
  if (name == "oregonator") return OdeSystem::oregonator();
  if (name == "lorenz96") return OdeSystem::lorenz96();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Fixed-step integration
// ---------------------------------------------------------------------------

template <class Field>
Vector euler_step(Field&& field, const Vector& x, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("euler_step: dt must be positive");
  Vector f = field(x);
  if (!all_finite(f)) throw std::runtime_error("euler_step: non-finite field value");
  return x + dt * f;
}

/// Classic fourth-order Runge-Kutta update: x + dt * sum_i alpha_i * k_i with
/// k_1 = f(x), k_i = f(x + beta_i * dt * k_{i-1}), alpha = (1,2,2,1)/6 and
/// beta = (1, 1/2, 1/2, 1).
template <class Field>
Vector rk4_step(Field&& field, const Vector& x, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be positive");
  Vector k1 = field(x);
  Vector k2 = field(x + 0.5 * dt * k1);
  Vector k3 = field(x + 0.5 * dt * k2);
  Vector k4 = field(x + dt * k3);
  if (!all_finite(k1) || !all_finite(k2) || !all_finite(k3) || !all_finite(k4)) {
    throw std::runtime_error("rk4_step: non-finite stage value");
  }
  return x + dt * ((1.0 / 6.0) * k1 + (2.0 / 6.0) * k2 + (2.0 / 6.0) * k3 + (1.0 / 6.0) * k4);
}

enum class Scheme { Euler, Rk4 };

template <class Field>
Trajectory integrate_fixed(Field&& field, const Vector& x0, double dt, std::size_t n_steps,
                           Scheme scheme = Scheme::Rk4) {
  if (n_steps < 1) throw std::invalid_argument("integrate_fixed: n_steps must be >= 1");
  Trajectory traj;
  traj.t0 = 0.0;
  traj.h = dt;
  traj.states.reserve(n_steps + 1);
  traj.states.push_back(x0);
  Vector x = x0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    x = scheme == Scheme::Euler ? euler_step(field, x, dt) : rk4_step(field, x, dt);
    if (x.cwiseAbs().maxCoeff() > kDivergenceLimit) {
      throw DivergenceError("integrate_fixed: divergence at step " + std::to_string(k + 1), k + 1);
    }
    traj.states.push_back(x);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Adaptive integration (Dormand-Prince 5(4) with dense output)
// ---------------------------------------------------------------------------

struct AdaptiveConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  // The stiff Oregonator needs ~4e7 substeps for its full 5100-unit series;
  // the budget exists to surface runaways, not to starve legitimate work.
  std::size_t max_substeps = 200'000'000;
};

namespace detail {
// Butcher tableau of the Dormand-Prince 5(4) pair (FSAL).
inline constexpr double kDp_c[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
inline constexpr double kDp_a[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
// y5 - y4 error weights.
inline constexpr double kDp_e[7] = {71.0 / 57600,       0.0,         -71.0 / 16695, 71.0 / 1920,
                                    -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
// Dense-output weights for the quartic interpolant.
inline constexpr double kDp_d[7] = {-12715105075.0 / 11282082432.0,
                                    0.0,
                                    87487479700.0 / 32700410799.0,
                                    -10690763975.0 / 1880347072.0,
                                    701980252875.0 / 199316789632.0,
                                    -1453857185.0 / 822651844.0,
                                    69997945.0 / 29380423.0};
}  // namespace detail

/// Integrates from t0, emitting states exactly at t0 + k*h_out for
/// k = 0 .. floor((t_end - t0)/h_out), using the embedded 5(4) error estimate
/// for step control and the quartic continuous extension for sampling.
template <class Field>
Trajectory integrate_adaptive(Field&& field, const Vector& x0, double t0, double t_end,
                              double h_out, const AdaptiveConfig& cfg = {}) {
  if (h_out <= 0.0) throw std::invalid_argument("integrate_adaptive: h_out must be positive");
  if (cfg.rel_tol <= 0.0 || cfg.abs_tol <= 0.0) {
    throw std::invalid_argument("integrate_adaptive: tolerances must be positive");
  }
  if (t_end < t0) throw std::invalid_argument("integrate_adaptive: t_end < t0");

  const std::size_t n_out = static_cast<std::size_t>(std::floor((t_end - t0) / h_out + 1e-9)) + 1;
  Trajectory traj;
  traj.t0 = t0;
  traj.h = h_out;
  traj.states.reserve(n_out);
  traj.states.push_back(x0);
  if (n_out == 1) return traj;

  const Eigen::Index d = x0.size();
  const double t_last = t0 + static_cast<double>(n_out - 1) * h_out;

  Vector y = x0;
  double t = t0;
  Vector k[7];
  k[0] = field(y);
  if (!all_finite(k[0])) throw std::runtime_error("integrate_adaptive: non-finite field at t0");

  auto error_norm = [&](const Vector& err, const Vector& y_old, const Vector& y_new) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y_old[i]), std::abs(y_new[i]));
      const double r = err[i] / sc;
      acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(d));
  };

  // Initial step from the local scale of y and f.
  double h = h_out;
  {
    const double dy = y.norm() + cfg.abs_tol;
    const double df = k[0].norm() + cfg.abs_tol;
    h = std::min(h_out, 0.01 * dy / df);
    h = std::max(h, 1e-10);
  }

  std::size_t next_out = 1;
  std::size_t n_substeps = 0;
  Vector y_new(d), err(d), y_stage(d);

  while (next_out < n_out) {
    if (++n_substeps > cfg.max_substeps) {
      throw std::runtime_error("integrate_adaptive: exceeded max_substeps at t=" + std::to_string(t));
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      throw std::runtime_error("integrate_adaptive: step underflow (stiff failure) at t=" +
                               std::to_string(t));
    }
    const double h_left = t_last - t;
    if (h_left <= 1e-12 * std::max(std::abs(t_last), h_out)) {
      // Roundoff left pending outputs within epsilon of t_last.
      while (next_out < n_out) {
        traj.states.push_back(y);
        ++next_out;
      }
      break;
    }
    h = std::min(h, h_left);

    for (int s = 1; s < 7; ++s) {
      y_stage = y;
      for (int j = 0; j < s; ++j) {
        if (detail::kDp_a[s][j] != 0.0) y_stage += (h * detail::kDp_a[s][j]) * k[j];
      }
      k[s] = field(y_stage);
    }
    // Stage 7 uses the b-row, so y_stage already equals the 5th-order result.
    y_new = y_stage;
    err.setZero();
    for (int s = 0; s < 7; ++s) {
      if (detail::kDp_e[s] != 0.0) err += (h * detail::kDp_e[s]) * k[s];
    }
    if (!all_finite(y_new) || !all_finite(k[6])) {
      h *= 0.25;
      continue;
    }

    const double en = error_norm(err, y, y_new);
    if (en <= 1.0) {
      // Accepted: fill the dense output inside [t, t+h].
      Vector rcont5 = Vector::Zero(d);
      for (int s = 0; s < 7; ++s) {
        if (detail::kDp_d[s] != 0.0) rcont5 += (h * detail::kDp_d[s]) * k[s];
      }
      const Vector ydiff = y_new - y;
      const Vector bspl = h * k[0] - ydiff;
      const Vector rcont4 = ydiff - h * k[6] - bspl;
      while (next_out < n_out) {
        const double t_out = t0 + static_cast<double>(next_out) * h_out;
        if (t_out > t + h + 1e-12 * std::max(std::abs(t) + h, h_out)) break;
        const double th = std::clamp((t_out - t) / h, 0.0, 1.0);
        Vector u = y + th * (ydiff + (1.0 - th) * (bspl + th * (rcont4 + (1.0 - th) * rcont5)));
        traj.states.push_back(std::move(u));
        ++next_out;
      }
      t += h;
      y = y_new;
      k[0] = k[6];  // FSAL
      if (y.cwiseAbs().maxCoeff() > kDivergenceLimit) {
        throw DivergenceError("integrate_adaptive: divergence at t=" + std::to_string(t), next_out);
      }
      const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      h *= std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.9);
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct Dataset {
  Trajectory train;
  Trajectory test;
};

/// One long adaptive integration sampled at step h: `spinup` states are
/// discarded, the next n_train form the training series and the following
/// n_test the test series, so the two segments are disjoint in time.
/// The seed perturbs the documented initial state so different seeds yield
/// different (but reproducible) attractor samples.
inline Dataset generate_dataset(const OdeSystem& system, std::size_t n_train = 50000,
                                std::size_t n_test = 1000, double h = 0.0,
                                std::size_t spinup = 1000, std::uint64_t seed = 0,
                                const AdaptiveConfig& cfg = {}) {
  if (n_train < 1 || n_test < 1) {
    throw std::invalid_argument("generate_dataset: need at least one train and test state");
  }
  if (h <= 0.0) h = system.default_step();

  SeededRng rng(derive_seed(seed, "data"));
  Vector x0 = system.default_initial_state();
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    x0[i] += 1e-3 * (1.0 + std::abs(x0[i])) * rng.normal();
  }

  const std::size_t n_total = spinup + n_train + n_test;
  const double t_end = static_cast<double>(n_total - 1) * h;
  Trajectory full = integrate_adaptive([&](const Vector& x) { return system.field(x); }, x0, 0.0,
                                       t_end, h, cfg);

  Dataset out;
  out.train.t0 = full.time_at(spinup);
  out.train.h = h;
  out.train.states.assign(full.states.begin() + static_cast<std::ptrdiff_t>(spinup),
                          full.states.begin() + static_cast<std::ptrdiff_t>(spinup + n_train));
  out.test.t0 = full.time_at(spinup + n_train);
  out.test.h = h;
  out.test.states.assign(full.states.begin() + static_cast<std::ptrdiff_t>(spinup + n_train),
                         full.states.end());
  return out;
}

}  // namespace binn
