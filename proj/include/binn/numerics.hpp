#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace binn {

// All state and parameter arithmetic is double precision; reported errors in
// the regimes we care about reach 1e-5, which is unsafe in single precision.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a trajectory or rollout leaves the representable range.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.size()) {
    throw std::invalid_argument("matvec: matrix has " + std::to_string(m.cols()) +
                                " columns but vector has " + std::to_string(v.size()) +
                                " entries");
  }
  return m * v;
}

/// Minimizes ||a*x - b||^2 + lambda*||x||^2 column-wise over x.
///
/// lambda == 0 solves the plain least-squares problem and refuses
/// rank-deficient systems; lambda > 0 solves the Tikhonov-augmented system
/// [a; sqrt(lambda)*I] which is always full rank.
inline Matrix ridge_least_squares(const Matrix& a, const Matrix& b, double lambda) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("ridge_least_squares: a has " + std::to_string(a.rows()) +
                                " rows, b has " + std::to_string(b.rows()));
  }
  if (lambda < 0.0) {
    throw std::invalid_argument("ridge_least_squares: negative lambda");
  }
  const Eigen::Index p = a.cols();
  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    if (qr.rank() < p) {
      throw std::runtime_error("ridge_least_squares: rank-deficient system (rank " +
                               std::to_string(qr.rank()) + " < " + std::to_string(p) +
                               " columns) with lambda == 0");
    }
    return qr.solve(b);
  }
  Matrix aug(a.rows() + p, p);
  aug.topRows(a.rows()) = a;
  aug.bottomRows(p) = std::sqrt(lambda) * Matrix::Identity(p, p);
  Matrix rhs = Matrix::Zero(aug.rows(), b.cols());
  rhs.topRows(b.rows()) = b;
  return aug.colPivHouseholderQr().solve(rhs);
}

/// Per-dimension mean and population standard deviation; zero deviations are
/// floored to 1 so standardization never divides by zero.
inline std::pair<Vector, Vector> standardize_stats(const std::vector<Vector>& data) {
  if (data.empty()) {
    throw std::invalid_argument("standardize_stats: empty input");
  }
  const Eigen::Index d = data.front().size();
  Vector mean = Vector::Zero(d);
  for (const Vector& v : data) {
    if (v.size() != d) {
      throw std::invalid_argument("standardize_stats: inconsistent dimensions");
    }
    mean += v;
  }
  mean /= static_cast<double>(data.size());
  Vector var = Vector::Zero(d);
  for (const Vector& v : data) {
    var.array() += (v - mean).array().square();
  }
  var /= static_cast<double>(data.size());
  Vector stdev = var.array().sqrt();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (stdev[i] == 0.0) stdev[i] = 1.0;
  }
  return {mean, stdev};
}

}  // namespace binn
