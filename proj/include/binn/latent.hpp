#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "binn/bilinear.hpp"
#include "binn/dynamics.hpp"
#include "binn/numerics.hpp"
#include "binn/rng.hpp"
#include "binn/training.hpp"

namespace binn {

// ---------------------------------------------------------------------------
// Linear observation of a latent state: Y = H X
// ---------------------------------------------------------------------------

/// Observation operator from latent space into a higher-dimensional one.
struct LatentObservationMap {
  Matrix H;  // obs_dim x latent_dim

  explicit LatentObservationMap(Matrix h) : H(std::move(h)) {
    if (H.rows() <= H.cols()) {
      throw std::invalid_argument("LatentObservationMap: obs dim must exceed latent dim");
    }
    Eigen::JacobiSVD<Matrix> svd(H);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 1e-10 * smax) {
      throw std::invalid_argument("LatentObservationMap: H is not full column rank");
    }
  }
};

/// Entries uniform in [-1, 1], re-drawn until the smallest singular value
/// exceeds 0.1 so the latent state stays recoverable.
inline Matrix draw_observation_map(Eigen::Index obs_dim, Eigen::Index latent_dim, SeededRng& rng) {
  if (obs_dim <= latent_dim) {
    throw std::invalid_argument("draw_observation_map: obs dim must exceed latent dim");
  }
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix h(obs_dim, latent_dim);
    for (Eigen::Index i = 0; i < obs_dim; ++i) {
      for (Eigen::Index j = 0; j < latent_dim; ++j) h(i, j) = rng.uniform(-1.0, 1.0);
    }
    Eigen::JacobiSVD<Matrix> svd(h);
    if (svd.singularValues().minCoeff() > 0.1) return h;
  }
  throw std::runtime_error("draw_observation_map: could not draw a well-conditioned map");
}

inline Trajectory synthesize_observations(const Trajectory& latent, const Matrix& H) {
  if (latent.dim() != H.cols()) {
    throw std::invalid_argument("synthesize_observations: H has " + std::to_string(H.cols()) +
                                " columns, latent dimension is " + std::to_string(latent.dim()));
  }
  Trajectory obs;
  obs.t0 = latent.t0;
  obs.h = latent.h;
  obs.states.reserve(latent.size());
  for (const Vector& x : latent.states) obs.states.push_back(H * x);
  return obs;
}

inline std::pair<Trajectory, Matrix> synthesize_observations(const Trajectory& latent,
                                                             Eigen::Index obs_dim,
                                                             std::uint64_t seed) {
  SeededRng rng(seed);
  Matrix H = draw_observation_map(obs_dim, latent.dim(), rng);
  return {synthesize_observations(latent, H), std::move(H)};
}

// ---------------------------------------------------------------------------
// Latent model: linear encoder -> bilinear RK dynamics -> linear decoder,
// with the residual connection in observation space.
// ---------------------------------------------------------------------------

struct LatentModel {
  Matrix encoder_w;  // latent_dim x obs_dim
  Vector encoder_b;  // latent_dim
  BiNNModel dynamics;
  Matrix decoder_w;  // obs_dim x latent_dim
  Vector decoder_b;  // obs_dim

  Eigen::Index obs_dim() const { return encoder_w.cols(); }
  Eigen::Index latent_dim() const { return encoder_w.rows(); }

  void validate() const {
    dynamics.validate();
    if (dynamics.norm) {
      throw std::invalid_argument("LatentModel: latent dynamics must not carry normalization");
    }
    if (encoder_b.size() != latent_dim() || decoder_w.cols() != latent_dim() ||
        decoder_w.rows() != obs_dim() || decoder_b.size() != obs_dim() ||
        dynamics.dim() != latent_dim()) {
      throw std::invalid_argument("LatentModel: dimension chain is inconsistent");
    }
  }
};

inline LatentModel init_latent_model(Eigen::Index obs_dim, Eigen::Index latent_dim,
                                     Eigen::Index p_lin, Eigen::Index p_bil, int n_blocks,
                                     double dt, SeededRng& rng) {
  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    return m;
  };
  LatentModel m;
  m.encoder_w = glorot(latent_dim, obs_dim);
  m.encoder_b = Vector::Zero(latent_dim);
  m.dynamics.block = init_block(latent_dim, p_lin, p_bil, rng);
  m.dynamics.n_blocks = n_blocks;
  m.dynamics.dt = dt;
  m.decoder_w = glorot(obs_dim, latent_dim);
  m.decoder_b = Vector::Zero(obs_dim);
  m.validate();
  return m;
}

struct LatentCache {
  Matrix Y;
  Matrix Z;  // encoded batch
  ComboCache<BilinearField> combo;
  Matrix C;  // combination output
};

/// y + dt * decoder(RK-combination of the latent block at encoder(y)).
inline Matrix latent_forward_batch(const LatentModel& m, const Matrix& Y, LatentCache* cache) {
  if (Y.rows() != m.obs_dim()) {
    throw std::invalid_argument("latent_forward: observation dimension mismatch");
  }
  LatentCache local;
  LatentCache& c = cache ? *cache : local;
  c.Y = Y;
  c.Z = (m.encoder_w * Y).colwise() + m.encoder_b;
  const BilinearField field{&m.dynamics.block};
  c.C = rk_combo_forward(field, m.dynamics.rk, m.dynamics.n_blocks, m.dynamics.dt, c.Z, c.combo);
  if (!all_finite(c.C)) throw std::runtime_error("latent_forward: non-finite intermediate value");
  return Y + m.dynamics.dt * (((m.decoder_w * c.C).colwise() + m.decoder_b));
}

inline Vector latent_forward(const LatentModel& m, const Vector& y) {
  return latent_forward_batch(m, y, nullptr).col(0);
}

struct LatentGrads {
  Matrix encoder_w;
  Vector encoder_b;
  ModelGrads dynamics;
  Matrix decoder_w;
  Vector decoder_b;

  static LatentGrads zeros_like(const LatentModel& m) {
    LatentGrads g;
    g.encoder_w = Matrix::Zero(m.encoder_w.rows(), m.encoder_w.cols());
    g.encoder_b = Vector::Zero(m.encoder_b.size());
    g.dynamics = ModelGrads::zeros_like(m.dynamics);
    g.decoder_w = Matrix::Zero(m.decoder_w.rows(), m.decoder_w.cols());
    g.decoder_b = Vector::Zero(m.decoder_b.size());
    return g;
  }

  void set_zero() {
    encoder_w.setZero();
    encoder_b.setZero();
    dynamics.set_zero();
    decoder_w.setZero();
    decoder_b.setZero();
  }
};

inline Matrix latent_backward_batch(const LatentModel& m, const LatentCache& c, const Matrix& G,
                                    LatentGrads& grads) {
  const double dt = m.dynamics.dt;
  const Matrix gDec = dt * G;  // gradient at decoder output
  grads.decoder_w.noalias() += gDec * c.C.transpose();
  grads.decoder_b += gDec.rowwise().sum();
  const Matrix gC = m.decoder_w.transpose() * gDec;

  const BilinearField field{&m.dynamics.block};
  const bool train_rk = m.dynamics.rk.trainable;
  Matrix gZ = rk_combo_backward(field, m.dynamics.rk, dt, c.combo, gC, grads.dynamics.block,
                                train_rk ? &grads.dynamics.alpha : nullptr,
                                train_rk ? &grads.dynamics.beta : nullptr);

  grads.encoder_w.noalias() += gZ * c.Y.transpose();
  grads.encoder_b += gZ.rowwise().sum();
  Matrix gY = m.encoder_w.transpose() * gZ;
  gY += G;  // residual skip in observation space
  return gY;
}

struct LatentTrainable {
  explicit LatentTrainable(LatentModel& m) : model(&m), grad_store(LatentGrads::zeros_like(m)) {
    append_view(params_, model->encoder_w);
    append_view(params_, model->encoder_b);
    for (auto& v : block_param_views(model->dynamics.block)) params_.push_back(v);
    append_view(params_, model->decoder_w);
    append_view(params_, model->decoder_b);

    append_view(grads_, grad_store.encoder_w);
    append_view(grads_, grad_store.encoder_b);
    for (auto& v : block_param_views(grad_store.dynamics.block)) grads_.push_back(v);
    append_view(grads_, grad_store.decoder_w);
    append_view(grads_, grad_store.decoder_b);
  }
  Matrix forward(const Matrix& X) { return latent_forward_batch(*model, X, &cache); }
  void backward(const Matrix& G) { latent_backward_batch(*model, cache, G, grad_store); }
  ParamViews& params() { return params_; }
  ParamViews& grads() { return grads_; }
  void zero_grads() { grad_store.set_zero(); }

  LatentModel* model;
  LatentCache cache;
  LatentGrads grad_store;
  ParamViews params_, grads_;
};

/// Same loop as train_binn, on one-step observation prediction.
inline TrainResult train_latent(LatentModel& model, const PairDataset& observed_pairs,
                                const TrainConfig& cfg) {
  model.validate();
  if (observed_pairs.dim() != model.obs_dim()) {
    throw std::invalid_argument("train_latent: observation dimension mismatch");
  }
  LatentTrainable t(model);
  return train_loop(t, observed_pairs, cfg);
}

inline double gradcheck_report(LatentModel& model, const PairDataset& sample,
                               std::size_t max_samples = 16) {
  LatentTrainable t(model);
  return gradcheck_max_rel_error(t, pairs_to_matrix(sample.inputs, max_samples),
                                 pairs_to_matrix(sample.targets, max_samples));
}

/// Encodes a trajectory of observations into the model's latent coordinates.
inline std::vector<Vector> encode_series(const LatentModel& m, const Trajectory& obs) {
  std::vector<Vector> out;
  out.reserve(obs.size());
  for (const Vector& y : obs.states) out.push_back(m.encoder_w * y + m.encoder_b);
  return out;
}

// ---------------------------------------------------------------------------
// Affine alignment of a learned latent series against the true one
// ---------------------------------------------------------------------------

struct AlignmentResult {
  Matrix A;
  Vector b;
  double rmse = 0.0;
};

/// Least-squares affine map (A, b) minimizing sum ||A*learned_k + b - truth_k||^2.
/// A general affine family absorbs the rotation/scale/shear ambiguity of a
/// linear encoder.
inline AlignmentResult align_latent(const std::vector<Vector>& learned,
                                    const std::vector<Vector>& truth) {
  if (learned.size() != truth.size() || learned.size() < 4) {
    throw std::invalid_argument("align_latent: need equal lengths >= 4");
  }
  const Eigen::Index d = learned.front().size();
  const Eigen::Index n = static_cast<Eigen::Index>(learned.size());
  Matrix design(n, d + 1);
  Matrix target(n, truth.front().size());
  for (Eigen::Index i = 0; i < n; ++i) {
    design.row(i).head(d) = learned[static_cast<std::size_t>(i)].transpose();
    design(i, d) = 1.0;
    target.row(i) = truth[static_cast<std::size_t>(i)].transpose();
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < d + 1) {
    throw std::runtime_error("align_latent: learned cloud is degenerate (rank " +
                             std::to_string(qr.rank() > 0 ? qr.rank() - 1 : 0) + " < " +
                             std::to_string(d) + ")");
  }
  const Matrix coef = qr.solve(target);  // (d+1) x d_out
  AlignmentResult res;
  res.A = coef.topRows(d).transpose();
  res.b = coef.row(d).transpose();
  const Matrix residual = design * coef - target;
  res.rmse = std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size()));
  return res;
}

}  // namespace binn
