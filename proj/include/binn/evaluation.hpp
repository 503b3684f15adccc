#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "binn/bilinear.hpp"
#include "binn/dynamics.hpp"
#include "binn/numerics.hpp"
#include "binn/sparse_regression.hpp"
#include "binn/trajectory_io.hpp"

namespace binn {

using StepFn = std::function<Vector(const Vector&)>;

struct RolloutResult {
  Trajectory traj;
  bool diverged = false;
  std::size_t steps_completed = 0;
};

/// Iterates a one-step predictor. Divergence is flagged in the result (with
/// the partial trajectory kept), never silently swallowed.
inline RolloutResult rollout(const StepFn& step_fn, const Vector& x0, std::size_t n_steps,
                             double h = 0.0, double t0 = 0.0) {
  if (n_steps < 1) throw std::invalid_argument("rollout: n_steps must be >= 1");
  RolloutResult res;
  res.traj.t0 = t0;
  res.traj.h = h;
  res.traj.states.reserve(n_steps + 1);
  res.traj.states.push_back(x0);
  Vector x = x0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    x = step_fn(x);
    if (!all_finite(x) || x.cwiseAbs().maxCoeff() > kDivergenceLimit) {
      res.diverged = true;
      return res;
    }
    res.traj.states.push_back(x);
    res.steps_completed = k + 1;
  }
  return res;
}

/// De-normalized vector field represented by a trained block: the operator
/// that plug-and-play forecasting hands to a classic ODE solver.
inline StepFn binn_field_fn(const BiNNModel& model) {
  return [model](const Vector& x) -> Vector {
    if (!model.norm) return block_forward(model.block, x);
    const Vector z = ((x - model.norm->mean).array() / model.norm->stdev.array()).matrix();
    const Vector f = block_forward(model.block, z);
    return (f.array() * model.norm->stdev.array()).matrix();
  };
}

/// Uses the trained block as the field of a fixed-step RK4 integration. For
/// four-block models this reproduces the recurrent rollout to round-off.
inline Trajectory forecast_via_solver(const BiNNModel& model, const Vector& x0, double t_end) {
  model.validate();
  const auto n_steps = static_cast<std::size_t>(std::llround(t_end / model.dt));
  if (n_steps < 1) throw std::invalid_argument("forecast_via_solver: t_end shorter than one step");
  const StepFn field = binn_field_fn(model);
  return integrate_fixed([&field](const Vector& x) { return field(x); }, x0, model.dt, n_steps,
                         Scheme::Rk4);
}

// ---------------------------------------------------------------------------
// Horizon RMSE (Table-1-style evaluation)
// ---------------------------------------------------------------------------

struct ForecastReport {
  std::vector<int> horizons;
  std::vector<double> rmse;
  std::vector<std::size_t> n_diverged;
  std::size_t n_starts = 0;
  double h = 0.0;
  std::string model_id;
};

/// Mean RMSE of m-step forecasts over every admissible start index of the
/// test series, for each horizon. Diverged forecasts are excluded from the
/// mean and counted separately.
inline ForecastReport rmse_at_horizons(const StepFn& predictor, const Trajectory& test,
                                       std::vector<int> horizons = {1, 4, 8}, int threads = 1,
                                       std::string model_id = "") {
  if (horizons.empty()) throw std::invalid_argument("rmse_at_horizons: no horizons");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (horizons[i] < 1 || (i > 0 && horizons[i] <= horizons[i - 1])) {
      throw std::invalid_argument("rmse_at_horizons: horizons must be strictly increasing and >= 1");
    }
  }
  const int max_h = horizons.back();
  if (test.size() <= static_cast<std::size_t>(max_h)) {
    throw std::invalid_argument("rmse_at_horizons: test series shorter than max horizon");
  }
  const std::size_t n_starts = test.size() - static_cast<std::size_t>(max_h);
  const Eigen::Index d = test.dim();

  struct Partial {
    std::vector<double> sq;
    std::vector<std::size_t> count;
    std::vector<std::size_t> diverged;
  };
  const int n_chunks = std::max(1, threads);
  std::vector<Partial> partials(static_cast<std::size_t>(n_chunks));
  for (auto& p : partials) {
    p.sq.assign(horizons.size(), 0.0);
    p.count.assign(horizons.size(), 0);
    p.diverged.assign(horizons.size(), 0);
  }

  auto work = [&](int chunk) {
    Partial& p = partials[static_cast<std::size_t>(chunk)];
    const std::size_t lo = n_starts * static_cast<std::size_t>(chunk) / static_cast<std::size_t>(n_chunks);
    const std::size_t hi = n_starts * (static_cast<std::size_t>(chunk) + 1) / static_cast<std::size_t>(n_chunks);
    for (std::size_t k = lo; k < hi; ++k) {
      Vector x = test.states[k];
      bool dead = false;
      std::size_t hidx = 0;
      for (int s = 1; s <= max_h && hidx < horizons.size(); ++s) {
        if (!dead) {
          x = predictor(x);
          if (!all_finite(x) || x.cwiseAbs().maxCoeff() > kDivergenceLimit) dead = true;
        }
        if (s == horizons[hidx]) {
          if (dead) {
            p.diverged[hidx] += 1;
          } else {
            p.sq[hidx] += (x - test.states[k + static_cast<std::size_t>(s)]).squaredNorm();
            p.count[hidx] += 1;
          }
          ++hidx;
        }
      }
    }
  };

  if (n_chunks == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_chunks));
    for (int c = 0; c < n_chunks; ++c) pool.emplace_back(work, c);
    for (auto& th : pool) th.join();
  }

  ForecastReport report;
  report.horizons = horizons;
  report.n_starts = n_starts;
  report.h = test.h;
  report.model_id = std::move(model_id);
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    double sq = 0.0;
    std::size_t count = 0, diverged = 0;
    for (const Partial& p : partials) {
      sq += p.sq[i];
      count += p.count[i];
      diverged += p.diverged[i];
    }
    report.rmse.push_back(count == 0 ? std::numeric_limits<double>::quiet_NaN()
                                     : std::sqrt(sq / (static_cast<double>(count) * static_cast<double>(d))));
    report.n_diverged.push_back(diverged);
  }
  return report;
}

inline void write_forecast_csv(const ForecastReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "horizon_steps,horizon_time,rmse,n_starts,n_diverged\n";
  for (std::size_t i = 0; i < report.horizons.size(); ++i) {
    out << report.horizons[i] << "," << format_double(report.horizons[i] * report.h) << ","
        << format_double(report.rmse[i]) << "," << report.n_starts << "," << report.n_diverged[i]
        << "\n";
  }
}

/// Plain-text table mirroring the published layout (one row per horizon).
inline std::string format_forecast_table(const ForecastReport& report) {
  std::string s;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "forecast RMSE%s%s\n", report.model_id.empty() ? "" : " - ",
                report.model_id.c_str());
  s += buf;
  std::snprintf(buf, sizeof(buf), "%-10s %-14s %-12s %s\n", "horizon", "lead time", "rmse",
                "diverged");
  s += buf;
  for (std::size_t i = 0; i < report.horizons.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "t0+%-7d %-14.6g %-12.4e %zu\n", report.horizons[i],
                  report.horizons[i] * report.h, report.rmse[i], report.n_diverged[i]);
    s += buf;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Parameter identification (Table-2-style evaluation)
// ---------------------------------------------------------------------------

struct CoefficientRow {
  std::string name;
  double truth = 0.0;
  double estimate = 0.0;
};

struct IdentificationReport {
  double mse = 0.0;
  std::vector<CoefficientRow> rows;
};

/// Flattens a polynomial field into named monomial coefficients: constant,
/// linear, then upper-triangular quadratic monomials (off-diagonal Q entries
/// appear as 2*Q_ij, the coefficient of the monomial x_i*x_j).
inline std::vector<std::pair<std::string, double>> polynomial_coefficient_list(
    const PolynomialCoefficients& poly) {
  std::vector<std::pair<std::string, double>> out;
  const Eigen::Index d = poly.dim();
  for (Eigen::Index k = 0; k < d; ++k) {
    const std::string fk = "f" + std::to_string(k);
    out.emplace_back(fk + ":1", poly.c[k]);
  }
  for (Eigen::Index k = 0; k < d; ++k) {
    const std::string fk = "f" + std::to_string(k);
    for (Eigen::Index i = 0; i < d; ++i) {
      out.emplace_back(fk + ":x" + std::to_string(i), poly.L(k, i));
    }
  }
  for (Eigen::Index k = 0; k < d; ++k) {
    const std::string fk = "f" + std::to_string(k);
    const Matrix& Q = poly.Q[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = i; j < d; ++j) {
        const double coef = i == j ? Q(i, i) : 2.0 * Q(i, j);
        out.emplace_back(fk + ":x" + std::to_string(i) + "*x" + std::to_string(j), coef);
      }
    }
  }
  return out;
}

/// The Lorenz-63 vector field written as polynomial coefficients.
inline PolynomialCoefficients lorenz63_polynomial(double sigma, double rho, double beta) {
  PolynomialCoefficients poly;
  poly.c = Vector::Zero(3);
  poly.L = Matrix::Zero(3, 3);
  poly.Q.assign(3, Matrix::Zero(3, 3));
  poly.L(0, 0) = -sigma;
  poly.L(0, 1) = sigma;
  poly.L(1, 0) = rho;
  poly.L(1, 1) = -1.0;
  poly.L(2, 2) = -beta;
  poly.Q[1](0, 2) = poly.Q[1](2, 0) = -0.5;  // -x0*x2
  poly.Q[2](0, 1) = poly.Q[2](1, 0) = 0.5;   //  x0*x1
  return poly;
}

/// Converts a fitted sparse model over the full quadratic dictionary into
/// polynomial coefficients (the shared basis of the identification report).
inline PolynomialCoefficients sparse_to_polynomial(const SparseModel& model) {
  const Eigen::Index d = model.dim();
  if (!model.spec.include_constant || !model.spec.include_linear || !model.spec.include_quadratic) {
    throw std::invalid_argument("sparse_to_polynomial: needs the full quadratic dictionary");
  }
  PolynomialCoefficients poly;
  poly.c = Vector::Zero(d);
  poly.L = Matrix::Zero(d, d);
  poly.Q.assign(static_cast<std::size_t>(d), Matrix::Zero(d, d));
  for (Eigen::Index k = 0; k < d; ++k) {
    Eigen::Index col = 0;
    poly.c[k] = model.xi(col++, k);
    for (Eigen::Index i = 0; i < d; ++i) poly.L(k, i) = model.xi(col++, k);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = i; j < d; ++j) {
        const double coef = model.xi(col++, k);
        auto& Q = poly.Q[static_cast<std::size_t>(k)];
        if (i == j) {
          Q(i, i) = coef;
        } else {
          Q(i, j) = Q(j, i) = 0.5 * coef;
        }
      }
    }
  }
  return poly;
}

/// MSE between an identified polynomial field and the true coefficients of
/// the named system, over the full coefficient set (30 values for d=3).
inline IdentificationReport parameter_mse(const PolynomialCoefficients& poly,
                                          const OdeSystem& system) {
  if (system.name != SystemName::Lorenz63) {
    throw std::invalid_argument("parameter_mse: reference coefficients only exist for lorenz63");
  }
  if (poly.dim() != system.dim) {
    throw std::invalid_argument("parameter_mse: dimension mismatch");
  }
  const PolynomialCoefficients truth =
      lorenz63_polynomial(system.param("sigma"), system.param("rho"), system.param("beta"));
  const auto t = polynomial_coefficient_list(truth);
  const auto e = polynomial_coefficient_list(poly);

  IdentificationReport report;
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    CoefficientRow row;
    row.name = t[i].first;
    row.truth = t[i].second;
    row.estimate = e[i].second;
    acc += (row.estimate - row.truth) * (row.estimate - row.truth);
    report.rows.push_back(std::move(row));
  }
  report.mse = acc / static_cast<double>(t.size());
  return report;
}

inline void write_identification_csv(const IdentificationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "coefficient,truth,estimate\n";
  for (const CoefficientRow& row : report.rows) {
    out << row.name << "," << format_double(row.truth) << "," << format_double(row.estimate)
        << "\n";
  }
  out << "mse," << format_double(report.mse) << ",\n";
}

inline std::string format_identification_table(const IdentificationReport& report) {
  std::string s = "parameter identification (coefficient basis)\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %-14s %s\n", "coefficient", "truth", "estimate");
  s += buf;
  for (const CoefficientRow& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %-14.6g %.6g\n", row.name.c_str(), row.truth,
                  row.estimate);
    s += buf;
  }
  std::snprintf(buf, sizeof(buf), "MSE %.6e\n", report.mse);
  s += buf;
  return s;
}

}  // namespace binn
