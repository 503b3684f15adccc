#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "binn/numerics.hpp"
#include "binn/training.hpp"

namespace binn {

enum class BandwidthRule { MedianDistance, Fixed };

/// Instance-based forecaster: k nearest neighbours, Gaussian kernel weights,
/// weighted locally-affine regression.
struct AnalogConfig {
  int k = 50;
  BandwidthRule bandwidth_rule = BandwidthRule::MedianDistance;
  double fixed_bandwidth = 1.0;
  double ridge = 1e-6;

  void validate() const {
    if (k < 1) throw std::invalid_argument("AnalogConfig: k must be >= 1");
    if (ridge < 0) throw std::invalid_argument("AnalogConfig: ridge must be >= 0");
    if (bandwidth_rule == BandwidthRule::Fixed && fixed_bandwidth <= 0) {
      throw std::invalid_argument("AnalogConfig: fixed bandwidth must be positive");
    }
  }
};

/// One analog forecast. Neighbours are retrieved by Euclidean distance (ties
/// broken by lower index), weighted with exp(-d^2/sigma^2), and a weighted
/// ridge affine map fitted in query-centered coordinates; its intercept is
/// the prediction. Centering keeps the forecast translation-consistent and
/// makes an exact-match query with k=1 return the stored successor exactly
/// (only the affine part is penalized).
inline Vector analog_forecast_step(const PairDataset& train, const Vector& x,
                                   const AnalogConfig& cfg) {
  cfg.validate();
  const std::size_t n = train.size();
  if (static_cast<std::size_t>(cfg.k) > n) {
    throw std::invalid_argument("analog_forecast_step: k=" + std::to_string(cfg.k) +
                                " exceeds dataset size " + std::to_string(n));
  }
  if (train.dim() != x.size()) {
    throw std::invalid_argument("analog_forecast_step: query dimension mismatch");
  }
  const Eigen::Index d = x.size();
  const auto k = static_cast<std::size_t>(cfg.k);

  std::vector<double> dist2(n);
  for (std::size_t i = 0; i < n; ++i) dist2[i] = (train.inputs[i] - x).squaredNorm();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&dist2](std::size_t a, std::size_t b) {
                      return dist2[a] != dist2[b] ? dist2[a] < dist2[b] : a < b;
                    });

  std::vector<double> dist(k);
  for (std::size_t j = 0; j < k; ++j) dist[j] = std::sqrt(dist2[order[j]]);

  double sigma = 0.0;
  if (cfg.bandwidth_rule == BandwidthRule::MedianDistance) {
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    sigma = k % 2 == 1 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  } else {
    sigma = cfg.fixed_bandwidth;
  }
  sigma = std::max(sigma, 1e-12);

  Eigen::ArrayXd w(static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) w[static_cast<Eigen::Index>(j)] = std::exp(-dist2[order[j]] / (sigma * sigma));
  w /= w.sum();

  // Weighted rows [1 | (x_i - x)'] -> y_i; augmented rows penalize the
  // affine part only, so the intercept (= prediction at x) is unbiased.
  const Eigen::Index rows = static_cast<Eigen::Index>(k) + (cfg.ridge > 0 ? d : 0);
  Matrix design = Matrix::Zero(rows, d + 1);
  Matrix target = Matrix::Zero(rows, d);
  for (std::size_t j = 0; j < k; ++j) {
    const double sw = std::sqrt(w[static_cast<Eigen::Index>(j)]);
    const auto r = static_cast<Eigen::Index>(j);
    design(r, 0) = sw;
    design.row(r).tail(d) = sw * (train.inputs[order[j]] - x).transpose();
    target.row(r) = sw * train.targets[order[j]].transpose();
  }
  if (cfg.ridge > 0) {
    const double sr = std::sqrt(cfg.ridge);
    for (Eigen::Index i = 0; i < d; ++i) design(static_cast<Eigen::Index>(k) + i, 1 + i) = sr;
  }
  const Matrix coef = design.colPivHouseholderQr().solve(target);  // (d+1) x d
  return coef.row(0).transpose();
}

}  // namespace binn
