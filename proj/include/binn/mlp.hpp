#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "binn/bilinear.hpp"
#include "binn/numerics.hpp"
#include "binn/rng.hpp"

namespace binn {

enum class Activation { Tanh, Relu };

/// Plain dense network: hidden layers share one activation, output is linear.
struct MlpParams {
  std::vector<Matrix> W;  // W[l]: width[l+1] x width[l]
  std::vector<Vector> b;
  Activation act = Activation::Tanh;

  Eigen::Index dim_in() const { return W.front().cols(); }
  Eigen::Index dim_out() const { return W.back().rows(); }
  std::size_t n_layers() const { return W.size(); }

  void validate() const {
    if (W.empty() || W.size() != b.size()) {
      throw std::invalid_argument("MlpParams: empty or mismatched layer lists");
    }
    for (std::size_t l = 0; l < W.size(); ++l) {
      if (b[l].size() != W[l].rows()) {
        throw std::invalid_argument("MlpParams: bias/weight mismatch in layer " + std::to_string(l));
      }
      if (l > 0 && W[l].cols() != W[l - 1].rows()) {
        throw std::invalid_argument("MlpParams: consecutive layer dims inconsistent at layer " +
                                    std::to_string(l));
      }
    }
  }

  static MlpParams zeros_like(const MlpParams& other) {
    MlpParams g;
    g.act = other.act;
    for (const Matrix& w : other.W) g.W.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const Vector& v : other.b) g.b.push_back(Vector::Zero(v.size()));
    return g;
  }

  void set_zero() {
    for (Matrix& w : W) w.setZero();
    for (Vector& v : b) v.setZero();
  }
};

/// widths = {in, hidden..., out}; Glorot-uniform weights, zero biases.
inline MlpParams init_mlp(const std::vector<Eigen::Index>& widths, Activation act, SeededRng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("init_mlp: need at least in/out widths");
  MlpParams p;
  p.act = act;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Eigen::Index rows = widths[l + 1];
    const Eigen::Index cols = widths[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    p.W.push_back(std::move(w));
    p.b.push_back(Vector::Zero(rows));
  }
  return p;
}

struct MlpCache {
  Matrix X;
  std::vector<Matrix> A;  // post-activation output of each layer
};

inline Matrix mlp_forward_batch(const MlpParams& p, const Matrix& X, MlpCache* cache) {
  if (X.rows() != p.dim_in()) {
    throw std::invalid_argument("mlp_forward: input dimension " + std::to_string(X.rows()) +
                                " != " + std::to_string(p.dim_in()));
  }
  if (cache) {
    cache->X = X;
    cache->A.clear();
    cache->A.reserve(p.n_layers());
  }
  Matrix a = X;
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    a = (p.W[l] * a).colwise() + p.b[l];
    if (l + 1 < p.n_layers()) {
      if (p.act == Activation::Tanh) {
        a = a.array().tanh().matrix();
      } else {
        a = a.cwiseMax(0.0);
      }
    }
    if (cache) cache->A.push_back(a);
  }
  return a;
}

inline Vector mlp_forward(const MlpParams& p, const Vector& x) {
  return mlp_forward_batch(p, x, nullptr).col(0);
}

/// Accumulates parameter gradients into `grads`; returns input gradients.
inline Matrix mlp_backward_batch(const MlpParams& p, const MlpCache& c, const Matrix& G,
                                 MlpParams& grads) {
  Matrix g = G;
  for (std::size_t l = p.n_layers(); l-- > 0;) {
    if (l + 1 < p.n_layers()) {
      // undo the activation using its stored output
      const Matrix& a = c.A[l];
      if (p.act == Activation::Tanh) {
        g = (g.array() * (1.0 - a.array().square())).matrix();
      } else {
        g = (g.array() * (a.array() > 0.0).cast<double>()).matrix();
      }
    }
    const Matrix& input = l == 0 ? c.X : c.A[l - 1];
    grads.W[l].noalias() += g * input.transpose();
    grads.b[l] += g.rowwise().sum();
    g = p.W[l].transpose() * g;
  }
  return g;
}

/// Field adapter so the MLP can sit inside the shared RK residual graph.
struct MlpField {
  const MlpParams* params;
  using Cache = MlpCache;
  using Grads = MlpParams;
  Eigen::Index dim() const { return params->dim_in(); }
  Matrix forward(const Matrix& X, Cache& c) const { return mlp_forward_batch(*params, X, &c); }
  Matrix backward(const Cache& c, const Matrix& G, Grads& g) const {
    return mlp_backward_batch(*params, c, G, g);
  }
};

/// Four-block residual composition with the MLP as the shared stage field:
/// the MLP-SL(4) baseline.
struct ResidualMlpModel {
  MlpParams mlp;
  RKCoefficients rk;
  double dt = 0.01;

  Eigen::Index dim() const { return mlp.dim_in(); }

  void validate() const {
    mlp.validate();
    if (mlp.dim_in() != mlp.dim_out()) {
      throw std::invalid_argument("ResidualMlpModel: stage field must map d -> d");
    }
    if (dt <= 0.0) throw std::invalid_argument("ResidualMlpModel: dt must be positive");
  }
};

inline ResidualMlpModel make_mlp_sl4(MlpParams mlp_block, double dt) {
  ResidualMlpModel m;
  m.mlp = std::move(mlp_block);
  m.dt = dt;
  m.validate();
  return m;
}

struct ResidualMlpCache {
  Matrix X;
  ComboCache<MlpField> combo;
};

inline Matrix residual_mlp_forward_batch(const ResidualMlpModel& m, const Matrix& X,
                                         ResidualMlpCache* cache) {
  if (X.rows() != m.dim()) {
    throw std::invalid_argument("residual_mlp_forward: dimension mismatch");
  }
  ResidualMlpCache local;
  ResidualMlpCache& c = cache ? *cache : local;
  c.X = X;
  const MlpField field{&m.mlp};
  Matrix combo = rk_combo_forward(field, m.rk, 4, m.dt, X, c.combo);
  if (!all_finite(combo)) {
    throw std::runtime_error("residual_mlp_forward: non-finite intermediate value");
  }
  return X + m.dt * combo;
}

inline Vector residual_mlp_forward(const ResidualMlpModel& m, const Vector& x) {
  return residual_mlp_forward_batch(m, x, nullptr).col(0);
}

inline Matrix residual_mlp_backward_batch(const ResidualMlpModel& m, const ResidualMlpCache& c,
                                          const Matrix& G, MlpParams& grads) {
  const MlpField field{&m.mlp};
  Matrix gCombo = m.dt * G;
  Matrix gX = rk_combo_backward(field, m.rk, m.dt, c.combo, gCombo, grads);
  gX += G;
  return gX;
}

}  // namespace binn
