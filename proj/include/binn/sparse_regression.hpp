#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "binn/dynamics.hpp"
#include "binn/numerics.hpp"

namespace binn {

/// Which monomial families enter the regression dictionary. Quadratic terms
/// are the upper-triangular products x_i * x_j with i <= j.
struct DictionarySpec {
  bool include_constant = true;
  bool include_linear = true;
  bool include_quadratic = true;

  void validate() const {
    if (!include_constant && !include_linear && !include_quadratic) {
      throw std::invalid_argument("DictionarySpec: at least one family must be enabled");
    }
  }

  Eigen::Index n_columns(Eigen::Index d) const {
    Eigen::Index n = 0;
    if (include_constant) n += 1;
    if (include_linear) n += d;
    if (include_quadratic) n += d * (d + 1) / 2;
    return n;
  }

  std::vector<std::string> column_names(Eigen::Index d) const {
    std::vector<std::string> names;
    if (include_constant) names.push_back("1");
    if (include_linear) {
      for (Eigen::Index i = 0; i < d; ++i) names.push_back("x" + std::to_string(i));
    }
    if (include_quadratic) {
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j) {
          names.push_back("x" + std::to_string(i) + "*x" + std::to_string(j));
        }
      }
    }
    return names;
  }
};

/// One row per state: [1 | x_0..x_{d-1} | x_i*x_j, i <= j], restricted to the
/// enabled families. Column order is fixed and part of the serialization
/// contract.
inline Matrix build_dictionary(const std::vector<Vector>& states, const DictionarySpec& spec) {
  spec.validate();
  if (states.empty()) throw std::invalid_argument("build_dictionary: empty input");
  const Eigen::Index d = states.front().size();
  Matrix dict(static_cast<Eigen::Index>(states.size()), spec.n_columns(d));
  for (Eigen::Index r = 0; r < dict.rows(); ++r) {
    const Vector& x = states[static_cast<std::size_t>(r)];
    Eigen::Index col = 0;
    if (spec.include_constant) dict(r, col++) = 1.0;
    if (spec.include_linear) {
      for (Eigen::Index i = 0; i < d; ++i) dict(r, col++) = x[i];
    }
    if (spec.include_quadratic) {
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j) dict(r, col++) = x[i] * x[j];
      }
    }
  }
  return dict;
}

/// Central differences (x_{k+1} - x_{k-1}) / (2h); endpoints are dropped, so
/// the result aligns with states[1 .. n-2].
inline std::vector<Vector> estimate_derivatives(const Trajectory& traj) {
  if (traj.size() < 3) {
    throw std::invalid_argument("estimate_derivatives: need at least 3 states");
  }
  if (traj.h <= 0.0) throw std::invalid_argument("estimate_derivatives: step must be positive");
  std::vector<Vector> derivs;
  derivs.reserve(traj.size() - 2);
  for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
    derivs.push_back((traj.states[k + 1] - traj.states[k - 1]) / (2.0 * traj.h));
  }
  return derivs;
}

/// Sparse vector-field model: column k of xi holds the dictionary weights of
/// output dimension k.
struct SparseModel {
  Matrix xi;  // n_columns x d
  DictionarySpec spec;
  double threshold = 0.05;

  Eigen::Index dim() const { return xi.cols(); }

  Vector field(const Vector& x) const {
    const Matrix row = build_dictionary({x}, spec);
    return (row * xi).transpose().col(0);
  }
};

/// Sequentially thresholded least squares: alternate a (slightly ridged)
/// least-squares fit with pruning of coefficients below the threshold,
/// refitting on the surviving support of each output dimension.
inline SparseModel stlsq_fit(const Matrix& dictionary, const Matrix& derivatives,
                             const DictionarySpec& spec, double threshold, int iters = 10,
                             double ridge = 1e-10) {
  spec.validate();
  if (dictionary.rows() != derivatives.rows()) {
    throw std::invalid_argument("stlsq_fit: row counts differ");
  }
  if (threshold <= 0.0) throw std::invalid_argument("stlsq_fit: threshold must be positive");

  const Eigen::Index n_cols = dictionary.cols();
  const Eigen::Index d = derivatives.cols();
  SparseModel model;
  model.spec = spec;
  model.threshold = threshold;
  model.xi = Matrix::Zero(n_cols, d);

  for (Eigen::Index dim = 0; dim < d; ++dim) {
    std::vector<Eigen::Index> active(static_cast<std::size_t>(n_cols));
    for (Eigen::Index i = 0; i < n_cols; ++i) active[static_cast<std::size_t>(i)] = i;
    Vector coef;

    for (int it = 0; it < iters; ++it) {
      Matrix sub(dictionary.rows(), static_cast<Eigen::Index>(active.size()));
      for (std::size_t j = 0; j < active.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = dictionary.col(active[j]);
      coef = ridge_least_squares(sub, derivatives.col(dim), ridge).col(0);

      std::vector<Eigen::Index> survivors;
      for (std::size_t j = 0; j < active.size(); ++j) {
        if (std::abs(coef[static_cast<Eigen::Index>(j)]) >= threshold) survivors.push_back(active[j]);
      }
      if (survivors.empty()) {
        if (derivatives.col(dim).cwiseAbs().maxCoeff() <= 1e-12) {
          active.clear();  // all-zero target: the empty model is exact
          break;
        }
        throw std::runtime_error("stlsq_fit: empty support for output dimension " +
                                 std::to_string(dim));
      }
      if (survivors.size() == active.size()) break;  // support settled
      active = std::move(survivors);
    }

    if (!active.empty()) {
      Matrix sub(dictionary.rows(), static_cast<Eigen::Index>(active.size()));
      for (std::size_t j = 0; j < active.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = dictionary.col(active[j]);
      coef = ridge_least_squares(sub, derivatives.col(dim), ridge).col(0);
      for (std::size_t j = 0; j < active.size(); ++j) {
        const double c = coef[static_cast<Eigen::Index>(j)];
        // keep the fitted-vs-zero invariant even when iters ran out mid-shrink
        model.xi(active[j], dim) = std::abs(c) >= threshold ? c : 0.0;
      }
    }
  }
  return model;
}

/// Forecast by integrating the identified field one RK4 step.
inline Vector sparse_forecast_step(const SparseModel& model, const Vector& x, double dt) {
  return rk4_step([&model](const Vector& s) { return model.field(s); }, x, dt);
}

}  // namespace binn
