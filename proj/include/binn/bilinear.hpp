#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "binn/numerics.hpp"
#include "binn/rng.hpp"

namespace binn {

// ---------------------------------------------------------------------------
// Bilinear block: F(x) = W4 * [W1*x + b1 ; (W2*x + b2) .* (W3*x + b3)] + b4.
// The element-wise product branch embeds a full second-order polynomial in x.
// ---------------------------------------------------------------------------

struct BlockParams {
  Matrix W1;  // p_lin  x d
  Matrix W2;  // p_bil  x d
  Matrix W3;  // p_bil  x d
  Matrix W4;  // d x (p_lin + p_bil)
  Vector b1, b2, b3, b4;

  Eigen::Index d() const { return W1.cols(); }
  Eigen::Index p_lin() const { return W1.rows(); }
  Eigen::Index p_bil() const { return W2.rows(); }

  static BlockParams zeros(Eigen::Index d, Eigen::Index p_lin, Eigen::Index p_bil) {
    BlockParams p;
    p.W1 = Matrix::Zero(p_lin, d);
    p.W2 = Matrix::Zero(p_bil, d);
    p.W3 = Matrix::Zero(p_bil, d);
    p.W4 = Matrix::Zero(d, p_lin + p_bil);
    p.b1 = Vector::Zero(p_lin);
    p.b2 = Vector::Zero(p_bil);
    p.b3 = Vector::Zero(p_bil);
    p.b4 = Vector::Zero(d);
    return p;
  }

  void validate() const {
    if (W1.cols() < 1 || W1.rows() < 1 || W2.rows() < 1) {
      throw std::invalid_argument("BlockParams: dimensions must be positive");
    }
    if (W3.rows() != W2.rows() || W2.cols() != W1.cols() || W3.cols() != W1.cols() ||
        W4.rows() != W1.cols() || W4.cols() != W1.rows() + W2.rows() ||
        b1.size() != W1.rows() || b2.size() != W2.rows() || b3.size() != W3.rows() ||
        b4.size() != W4.rows()) {
      throw std::invalid_argument("BlockParams: inconsistent tensor shapes");
    }
  }
};

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
inline BlockParams init_block(Eigen::Index d, Eigen::Index p_lin, Eigen::Index p_bil,
                              SeededRng& rng) {
  if (d < 1 || p_lin < 1 || p_bil < 1) {
    throw std::invalid_argument("init_block: dimensions must be >= 1");
  }
  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    return m;
  };
  BlockParams p = BlockParams::zeros(d, p_lin, p_bil);
  p.W1 = glorot(p_lin, d);
  p.W2 = glorot(p_bil, d);
  p.W3 = glorot(p_bil, d);
  p.W4 = glorot(d, p_lin + p_bil);
  return p;
}

/// Layer intermediates kept for the backward pass. Batches are stored one
/// column per sample.
struct BlockCache {
  Matrix X;   // d x B
  Matrix L1;  // p_lin x B
  Matrix L2;  // p_bil x B
  Matrix L3;  // p_bil x B
};

inline Matrix block_forward_batch(const BlockParams& p, const Matrix& X, BlockCache* cache) {
  if (X.rows() != p.d()) {
    throw std::invalid_argument("block_forward: input dimension " + std::to_string(X.rows()) +
                                " != block dimension " + std::to_string(p.d()));
  }
  Matrix l1 = (p.W1 * X).colwise() + p.b1;
  Matrix l2 = (p.W2 * X).colwise() + p.b2;
  Matrix l3 = (p.W3 * X).colwise() + p.b3;
  Matrix out = p.W4.leftCols(p.p_lin()) * l1;
  out.noalias() += p.W4.rightCols(p.p_bil()) * (l2.array() * l3.array()).matrix();
  out.colwise() += p.b4;
  if (cache) {
    cache->X = X;
    cache->L1 = std::move(l1);
    cache->L2 = std::move(l2);
    cache->L3 = std::move(l3);
  }
  return out;
}

inline Vector block_forward(const BlockParams& p, const Vector& x) {
  return block_forward_batch(p, x, nullptr).col(0);
}

/// Reverse-mode pass. Accumulates parameter gradients into `grads` (which
/// must be zero-initialized by the caller for a fresh gradient) and returns
/// the gradient with respect to the input batch.
inline Matrix block_backward_batch(const BlockParams& p, const BlockCache& c, const Matrix& G,
                                   BlockParams& grads) {
  const Eigen::Index pl = p.p_lin();
  const Eigen::Index pb = p.p_bil();
  const Matrix prod = (c.L2.array() * c.L3.array()).matrix();

  grads.W4.leftCols(pl).noalias() += G * c.L1.transpose();
  grads.W4.rightCols(pb).noalias() += G * prod.transpose();
  grads.b4 += G.rowwise().sum();

  const Matrix gL1 = p.W4.leftCols(pl).transpose() * G;
  const Matrix gP = p.W4.rightCols(pb).transpose() * G;
  const Matrix gL2 = (gP.array() * c.L3.array()).matrix();
  const Matrix gL3 = (gP.array() * c.L2.array()).matrix();

  grads.W1.noalias() += gL1 * c.X.transpose();
  grads.W2.noalias() += gL2 * c.X.transpose();
  grads.W3.noalias() += gL3 * c.X.transpose();
  grads.b1 += gL1.rowwise().sum();
  grads.b2 += gL2.rowwise().sum();
  grads.b3 += gL3.rowwise().sum();

  Matrix gX = p.W1.transpose() * gL1;
  gX.noalias() += p.W2.transpose() * gL2;
  gX.noalias() += p.W3.transpose() * gL3;
  return gX;
}

// ---------------------------------------------------------------------------
// Runge-Kutta combination of a shared field
// ---------------------------------------------------------------------------

struct RKCoefficients {
  std::array<double, 4> alpha{1.0 / 6, 2.0 / 6, 2.0 / 6, 1.0 / 6};
  std::array<double, 4> beta{1.0, 0.5, 0.5, 1.0};
  bool trainable = false;

  static RKCoefficients classic_rk4() { return {}; }
};

/// Field adapters wrap a parameter struct with a uniform forward/backward
/// surface so the four-stage combination below can be shared between the
/// bilinear block and the MLP baseline.
struct BilinearField {
  const BlockParams* params;
  using Cache = BlockCache;
  using Grads = BlockParams;
  Eigen::Index dim() const { return params->d(); }
  Matrix forward(const Matrix& X, Cache& c) const { return block_forward_batch(*params, X, &c); }
  Matrix backward(const Cache& c, const Matrix& G, Grads& g) const {
    return block_backward_batch(*params, c, G, g);
  }
};

template <class Field>
struct ComboCache {
  int n_stages = 0;
  std::array<typename Field::Cache, 4> stage;
  std::array<Matrix, 4> k;
};

/// C(z) = sum_i alpha_i * k_i with k_1 = F(z), k_i = F(z + beta_i*dt*k_{i-1});
/// for n_stages == 1 it degenerates to F(z) (explicit-Euler shape).
template <class Field>
Matrix rk_combo_forward(const Field& field, const RKCoefficients& rk, int n_stages, double dt,
                        const Matrix& Z, ComboCache<Field>& cache) {
  if (n_stages != 1 && n_stages != 4) {
    throw std::invalid_argument("rk_combo_forward: n_stages must be 1 or 4");
  }
  cache.n_stages = n_stages;
  cache.k[0] = field.forward(Z, cache.stage[0]);
  if (n_stages == 1) return cache.k[0];
  Matrix combo = rk.alpha[0] * cache.k[0];
  for (int i = 1; i < 4; ++i) {
    const Matrix zi = Z + (rk.beta[static_cast<std::size_t>(i)] * dt) * cache.k[i - 1];
    cache.k[i] = field.forward(zi, cache.stage[static_cast<std::size_t>(i)]);
    combo += rk.alpha[static_cast<std::size_t>(i)] * cache.k[i];
  }
  return combo;
}

/// Reverse pass of rk_combo_forward. Parameter gradients accumulate into the
/// single shared `pgrads` (one field evaluated four times). When alpha/beta
/// gradient arrays are supplied they are accumulated as well.
template <class Field>
Matrix rk_combo_backward(const Field& field, const RKCoefficients& rk, double dt,
                         const ComboCache<Field>& cache, const Matrix& G,
                         typename Field::Grads& pgrads, std::array<double, 4>* alpha_grad = nullptr,
                         std::array<double, 4>* beta_grad = nullptr) {
  if (cache.n_stages == 1) {
    return field.backward(cache.stage[0], G, pgrads);
  }
  Matrix gZ = Matrix::Zero(G.rows(), G.cols());
  Matrix gk;  // adjoint of k_i while walking stages backwards
  for (int i = 3; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    Matrix gki = rk.alpha[ui] * G;
    if (i < 3 && gk.size() > 0) gki += gk;
    if (alpha_grad) (*alpha_grad)[ui] += (G.array() * cache.k[ui].array()).sum();
    const Matrix gzi = field.backward(cache.stage[ui], gki, pgrads);
    gZ += gzi;
    if (i > 0) {
      if (beta_grad) (*beta_grad)[ui] += dt * (gzi.array() * cache.k[ui - 1].array()).sum();
      gk = (rk.beta[ui] * dt) * gzi;
    }
  }
  return gZ;
}

// ---------------------------------------------------------------------------
// Full model: residual composition, optional per-dimension normalization
// ---------------------------------------------------------------------------

struct Normalization {
  Vector mean;
  Vector stdev;
};

/// The learned surrogate integrator. `n_blocks` selects the Euler-shaped
/// (1 block) or RK4-shaped (4 blocks) residual composition; all blocks share
/// the single BlockParams instance, so weight sharing holds by construction.
struct BiNNModel {
  BlockParams block;
  int n_blocks = 4;
  RKCoefficients rk;
  double dt = 0.01;
  std::optional<Normalization> norm;

  Eigen::Index dim() const { return block.d(); }

  void validate() const {
    block.validate();
    if (n_blocks != 1 && n_blocks != 4) {
      throw std::invalid_argument("BiNNModel: n_blocks must be 1 or 4, got " +
                                  std::to_string(n_blocks));
    }
    if (dt <= 0.0) throw std::invalid_argument("BiNNModel: dt must be positive");
    if (norm) {
      if (norm->mean.size() != dim() || norm->stdev.size() != dim()) {
        throw std::invalid_argument("BiNNModel: normalization stats do not match dimension");
      }
      if ((norm->stdev.array() <= 0.0).any()) {
        throw std::invalid_argument("BiNNModel: normalization stdev entries must be positive");
      }
    }
  }
};

struct BiNNCache {
  Matrix Z;  // standardized input batch
  ComboCache<BilinearField> combo;
};

inline Matrix model_forward_batch(const BiNNModel& m, const Matrix& X, BiNNCache* cache) {
  if (X.rows() != m.dim()) {
    throw std::invalid_argument("model_forward: input dimension " + std::to_string(X.rows()) +
                                " != model dimension " + std::to_string(m.dim()));
  }
  BiNNCache local;
  BiNNCache& c = cache ? *cache : local;
  if (m.norm) {
    c.Z = m.norm->stdev.cwiseInverse().asDiagonal() * (X.colwise() - m.norm->mean);
  } else {
    c.Z = X;
  }
  const BilinearField field{&m.block};
  Matrix combo = rk_combo_forward(field, m.rk, m.n_blocks, m.dt, c.Z, c.combo);
  if (!all_finite(combo)) {
    throw std::runtime_error("model_forward: non-finite intermediate value");
  }
  Matrix out = c.Z + m.dt * combo;
  if (m.norm) {
    out = (m.norm->stdev.asDiagonal() * out).colwise() + m.norm->mean;
  }
  return out;
}

inline Vector model_forward(const BiNNModel& m, const Vector& x) {
  return model_forward_batch(m, x, nullptr).col(0);
}

struct ModelGrads {
  BlockParams block;
  std::array<double, 4> alpha{};
  std::array<double, 4> beta{};

  static ModelGrads zeros_like(const BiNNModel& m) {
    ModelGrads g;
    g.block = BlockParams::zeros(m.block.d(), m.block.p_lin(), m.block.p_bil());
    return g;
  }

  void set_zero() {
    block.W1.setZero();
    block.W2.setZero();
    block.W3.setZero();
    block.W4.setZero();
    block.b1.setZero();
    block.b2.setZero();
    block.b3.setZero();
    block.b4.setZero();
    alpha.fill(0.0);
    beta.fill(0.0);
  }
};

/// Accumulates parameter gradients into `grads` and returns the input-batch
/// gradient, exactly reversing model_forward_batch.
inline Matrix model_backward_batch(const BiNNModel& m, const BiNNCache& c, const Matrix& G,
                                   ModelGrads& grads) {
  Matrix gOut = G;
  if (m.norm) {
    gOut = m.norm->stdev.asDiagonal() * gOut;
  }
  const BilinearField field{&m.block};
  Matrix gCombo = m.dt * gOut;
  Matrix gZ = rk_combo_backward(field, m.rk, m.dt, c.combo, gCombo, grads.block,
                                m.rk.trainable ? &grads.alpha : nullptr,
                                m.rk.trainable ? &grads.beta : nullptr);
  gZ += gOut;  // residual skip
  if (m.norm) {
    gZ = m.norm->stdev.cwiseInverse().asDiagonal() * gZ;
  }
  return gZ;
}

/// Single-sample convenience mirroring the batched pass.
inline std::pair<ModelGrads, Vector> model_backward(const BiNNModel& m, const Vector& x,
                                                    const Vector& upstream_grad) {
  BiNNCache cache;
  model_forward_batch(m, x, &cache);
  ModelGrads grads = ModelGrads::zeros_like(m);
  Matrix gX = model_backward_batch(m, cache, upstream_grad, grads);
  return {std::move(grads), gX.col(0)};
}

// ---------------------------------------------------------------------------
// Second-order polynomial expansion of a trained block
// ---------------------------------------------------------------------------

/// F_k(x) = c[k] + L.row(k)*x + x'*Q[k]*x with each Q[k] symmetric.
struct PolynomialCoefficients {
  Vector c;
  Matrix L;
  std::vector<Matrix> Q;

  Eigen::Index dim() const { return c.size(); }

  Vector evaluate(const Vector& x) const {
    Vector out = c + L * x;
    for (Eigen::Index k = 0; k < dim(); ++k) {
      out[k] += x.dot(Q[static_cast<std::size_t>(k)] * x);
    }
    return out;
  }
};

/// Exact closed-form expansion of the bilinear block. When normalization
/// stats are supplied the result is expressed in raw state coordinates, i.e.
/// it expands sigma .* F((x - mu) ./ sigma).
inline PolynomialCoefficients expand_to_polynomial(
    const BlockParams& p, const std::optional<Normalization>& norm = std::nullopt) {
  const Eigen::Index d = p.d();
  const Eigen::Index pl = p.p_lin();
  const Eigen::Index pb = p.p_bil();
  const Matrix A = p.W4.leftCols(pl);
  const Matrix B = p.W4.rightCols(pb);

  PolynomialCoefficients poly;
  poly.c = p.b4 + A * p.b1;
  poly.L = A * p.W1;
  poly.Q.assign(static_cast<std::size_t>(d), Matrix::Zero(d, d));
  for (Eigen::Index j = 0; j < pb; ++j) {
    poly.c += (p.b2[j] * p.b3[j]) * B.col(j);
    const Matrix cross = p.b3[j] * p.W2.row(j) + p.b2[j] * p.W3.row(j);  // 1 x d
    const Matrix quad =
        0.5 * (p.W2.row(j).transpose() * p.W3.row(j) + p.W3.row(j).transpose() * p.W2.row(j));
    poly.L += B.col(j) * cross;
    for (Eigen::Index k = 0; k < d; ++k) poly.Q[static_cast<std::size_t>(k)] += B(k, j) * quad;
  }

  if (norm) {
    // z = S (x - mu):  sigma_k F_k(z) = const'(x) + lin'(x) + quad'(x).
    const Vector s_inv = norm->stdev.cwiseInverse();
    const Vector& mu = norm->mean;
    PolynomialCoefficients raw;
    raw.c = Vector::Zero(d);
    raw.L = Matrix::Zero(d, d);
    raw.Q.assign(static_cast<std::size_t>(d), Matrix::Zero(d, d));
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      const double sk = norm->stdev[k];
      const Matrix SQS =
          s_inv.asDiagonal() * poly.Q[uk] * s_inv.asDiagonal();
      const Vector Ls = (poly.L.row(k).transpose().array() * s_inv.array()).matrix();
      raw.c[k] = sk * (poly.c[k] - Ls.dot(mu) + mu.dot(SQS * mu));
      raw.L.row(k) = sk * (Ls - 2.0 * (SQS * mu)).transpose();
      raw.Q[uk] = sk * SQS;
    }
    return raw;
  }
  return poly;
}

}  // namespace binn
