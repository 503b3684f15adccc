#pragma once

#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "binn/bilinear.hpp"
#include "binn/dynamics.hpp"
#include "binn/mlp.hpp"
#include "binn/numerics.hpp"
#include "binn/rng.hpp"

namespace binn {

// ---------------------------------------------------------------------------
// Supervised one-step pairs
// ---------------------------------------------------------------------------

struct PairDataset {
  std::vector<Vector> inputs;
  std::vector<Vector> targets;
  double h = 0.0;

  std::size_t size() const { return inputs.size(); }
  Eigen::Index dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
};

/// Consecutive (X_t, X_{t+h}) pairs from a trajectory, in order.
inline PairDataset make_pairs(const Trajectory& traj) {
  if (traj.size() < 2) {
    throw std::invalid_argument("make_pairs: trajectory needs at least 2 states");
  }
  PairDataset ds;
  ds.h = traj.h;
  ds.inputs.assign(traj.states.begin(), traj.states.end() - 1);
  ds.targets.assign(traj.states.begin() + 1, traj.states.end());
  return ds;
}

inline double mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse_loss: shape mismatch");
  }
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

inline double mse_loss(const std::vector<Vector>& pred, const std::vector<Vector>& target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw std::invalid_argument("mse_loss: shape mismatch");
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != target[i].size()) throw std::invalid_argument("mse_loss: shape mismatch");
    acc += (pred[i] - target[i]).squaredNorm();
    count += static_cast<std::size_t>(pred[i].size());
  }
  return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Adam over flat parameter views
// ---------------------------------------------------------------------------

using ParamView = Eigen::Map<Eigen::ArrayXd>;
using ParamViews = std::vector<ParamView>;

inline void append_view(ParamViews& views, Matrix& m) { views.emplace_back(m.data(), m.size()); }
inline void append_view(ParamViews& views, Vector& v) { views.emplace_back(v.data(), v.size()); }

inline ParamViews block_param_views(BlockParams& p) {
  ParamViews v;
  append_view(v, p.W1);
  append_view(v, p.b1);
  append_view(v, p.W2);
  append_view(v, p.b2);
  append_view(v, p.W3);
  append_view(v, p.b3);
  append_view(v, p.W4);
  append_view(v, p.b4);
  return v;
}

inline ParamViews mlp_param_views(MlpParams& p) {
  ParamViews v;
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    append_view(v, p.W[l]);
    append_view(v, p.b[l]);
  }
  return v;
}

inline std::size_t total_size(const ParamViews& views) {
  std::size_t n = 0;
  for (const auto& v : views) n += static_cast<std::size_t>(v.size());
  return n;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 256;
  int epochs = 100;
  std::uint64_t seed = 0;
  bool incremental = false;
  bool shuffle = true;
  double val_fraction = 0.05;

  void validate() const {
    if (learning_rate <= 0 || adam_beta1 <= 0 || adam_beta2 <= 0 || adam_eps <= 0) {
      throw std::invalid_argument("TrainConfig: rates must be positive");
    }
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (val_fraction < 0 || val_fraction >= 1) {
      throw std::invalid_argument("TrainConfig: val_fraction must be in [0,1)");
    }
  }
};

struct AdamState {
  std::vector<Eigen::ArrayXd> m;
  std::vector<Eigen::ArrayXd> v;
  long step = 0;
};

inline AdamState make_adam_state(const ParamViews& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(Eigen::ArrayXd::Zero(p.size()));
    s.v.emplace_back(Eigen::ArrayXd::Zero(p.size()));
  }
  return s;
}

/// Standard bias-corrected Adam step.
inline void adam_update(ParamViews& params, const ParamViews& grads, AdamState& state,
                        const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_update: shape mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grads[i];
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grads[i].square();
    params[i] -= cfg.learning_rate * (m / bc1) / ((v / bc2).sqrt() + cfg.adam_eps);
  }
}

// ---------------------------------------------------------------------------
// Trainable adapters: one per model family, exposing a uniform surface.
// ---------------------------------------------------------------------------

template <class T>
concept Trainable = requires(T t, const Matrix& x, const Matrix& g) {
  { t.forward(x) } -> std::same_as<Matrix>;
  { t.backward(g) };
  { t.params() } -> std::same_as<ParamViews&>;
  { t.grads() } -> std::same_as<ParamViews&>;
  { t.zero_grads() };
};

struct BinnTrainable {
  explicit BinnTrainable(BiNNModel& m) : model(&m), grad_store(ModelGrads::zeros_like(m)) {
    params_ = block_param_views(model->block);
    grads_ = block_param_views(grad_store.block);
    if (model->rk.trainable) {
      params_.emplace_back(model->rk.alpha.data(), 4);
      params_.emplace_back(model->rk.beta.data(), 4);
      grads_.emplace_back(grad_store.alpha.data(), 4);
      grads_.emplace_back(grad_store.beta.data(), 4);
    }
  }
  Matrix forward(const Matrix& X) { return model_forward_batch(*model, X, &cache); }
  void backward(const Matrix& G) { model_backward_batch(*model, cache, G, grad_store); }
  ParamViews& params() { return params_; }
  ParamViews& grads() { return grads_; }
  void zero_grads() { grad_store.set_zero(); }

  BiNNModel* model;
  BiNNCache cache;
  ModelGrads grad_store;
  ParamViews params_, grads_;
};

struct MlpTrainable {
  explicit MlpTrainable(MlpParams& m) : mlp(&m), grad_store(MlpParams::zeros_like(m)) {
    params_ = mlp_param_views(*mlp);
    grads_ = mlp_param_views(grad_store);
  }
  Matrix forward(const Matrix& X) { return mlp_forward_batch(*mlp, X, &cache); }
  void backward(const Matrix& G) { mlp_backward_batch(*mlp, cache, G, grad_store); }
  ParamViews& params() { return params_; }
  ParamViews& grads() { return grads_; }
  void zero_grads() { grad_store.set_zero(); }

  MlpParams* mlp;
  MlpCache cache;
  MlpParams grad_store;
  ParamViews params_, grads_;
};

struct ResidualMlpTrainable {
  explicit ResidualMlpTrainable(ResidualMlpModel& m)
      : model(&m), grad_store(MlpParams::zeros_like(m.mlp)) {
    params_ = mlp_param_views(model->mlp);
    grads_ = mlp_param_views(grad_store);
  }
  Matrix forward(const Matrix& X) { return residual_mlp_forward_batch(*model, X, &cache); }
  void backward(const Matrix& G) { residual_mlp_backward_batch(*model, cache, G, grad_store); }
  ParamViews& params() { return params_; }
  ParamViews& grads() { return grads_; }
  void zero_grads() { grad_store.set_zero(); }

  ResidualMlpModel* model;
  ResidualMlpCache cache;
  MlpParams grad_store;
  ParamViews params_, grads_;
};

// ---------------------------------------------------------------------------
// Minibatch training loop
// ---------------------------------------------------------------------------

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch, int batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_, batch_;
};

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  double initial_train_mse = std::numeric_limits<double>::quiet_NaN();
  double final_train_mse = std::numeric_limits<double>::quiet_NaN();
  double best_val_mse = std::numeric_limits<double>::quiet_NaN();
  // Incremental strategy bookkeeping (zero / NaN when not used).
  std::size_t phase1_epochs = 0;
  double phase1_final_train_mse = std::numeric_limits<double>::quiet_NaN();
  double phase2_initial_train_mse = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void gather_batch(const PairDataset& data, const std::vector<std::size_t>& idx,
                         std::size_t begin, std::size_t end, Matrix& X, Matrix& Y) {
  const Eigen::Index d = data.dim();
  const Eigen::Index B = static_cast<Eigen::Index>(end - begin);
  X.resize(d, B);
  Y.resize(d, B);
  for (std::size_t j = begin; j < end; ++j) {
    X.col(static_cast<Eigen::Index>(j - begin)) = data.inputs[idx[j]];
    Y.col(static_cast<Eigen::Index>(j - begin)) = data.targets[idx[j]];
  }
}

template <Trainable T>
double eval_mse(T& t, const PairDataset& data, std::size_t begin, std::size_t end,
                int batch_size) {
  if (end <= begin) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  Matrix X, Y;
  double acc = 0.0;
  for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(idx.size(), at + static_cast<std::size_t>(batch_size));
    gather_batch(data, idx, at, stop, X, Y);
    acc += (t.forward(X) - Y).squaredNorm();
  }
  return acc / (static_cast<double>(end - begin) * static_cast<double>(data.dim()));
}

inline std::vector<Eigen::ArrayXd> snapshot(const ParamViews& params) {
  std::vector<Eigen::ArrayXd> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p);
  return out;
}

inline void restore(ParamViews& params, const std::vector<Eigen::ArrayXd>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] = snap[i];
}

}  // namespace detail

/// Minibatch Adam on one-step-forecast MSE. The last `val_fraction` of the
/// pairs are held out; the best-validation parameters are restored at the
/// end. Deterministic for a fixed (seed, config, data).
template <Trainable T>
TrainResult train_loop(T& trainable, const PairDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train_loop: empty dataset");

  const std::size_t n_total = data.size();
  std::size_t n_val = cfg.val_fraction > 0.0 && n_total >= 20
                          ? static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(n_total)))
                          : 0;
  const std::size_t n_train = n_total - n_val;

  SeededRng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> idx(n_train);
  std::iota(idx.begin(), idx.end(), 0);

  TrainResult result;
  result.initial_train_mse = detail::eval_mse(trainable, data, 0, n_train, cfg.batch_size);
  result.final_train_mse = result.initial_train_mse;

  std::vector<Eigen::ArrayXd> best_params;
  double best_val = std::numeric_limits<double>::infinity();

  AdamState adam = make_adam_state(trainable.params());
  Matrix X, Y;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto tic = std::chrono::steady_clock::now();
    if (cfg.shuffle) shuffle_rng.shuffle(idx);
    double epoch_acc = 0.0;
    int batch_index = 0;
    for (std::size_t at = 0; at < n_train; at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n_train, at + static_cast<std::size_t>(cfg.batch_size));
      detail::gather_batch(data, idx, at, stop, X, Y);
      Matrix pred = trainable.forward(X);
      const double loss = mse_loss(pred, Y);
      if (!std::isfinite(loss)) {
        throw TrainingError("train_loop: non-finite loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(batch_index),
                            epoch, batch_index);
      }
      epoch_acc += (pred - Y).squaredNorm();
      Matrix G = (2.0 / static_cast<double>(pred.size())) * (pred - Y);
      trainable.zero_grads();
      trainable.backward(G);
      adam_update(trainable.params(), trainable.grads(), adam, cfg);
      ++batch_index;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_mse = epoch_acc / (static_cast<double>(n_train) * static_cast<double>(data.dim()));
    if (n_val > 0) {
      log.val_mse = detail::eval_mse(trainable, data, n_train, n_total, cfg.batch_size);
      if (log.val_mse < best_val) {
        best_val = log.val_mse;
        best_params = detail::snapshot(trainable.params());
      }
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    result.history.push_back(log);
    result.final_train_mse = log.train_mse;
  }

  if (!best_params.empty()) {
    detail::restore(trainable.params(), best_params);
    result.best_val_mse = best_val;
  }
  return result;
}

/// Trains a BiNNModel. With cfg.incremental and a 4-block model, a one-block
/// copy is trained for the first half of the epoch budget and its shared
/// block seeds the four-block phase.
inline TrainResult train_binn(BiNNModel& model, const PairDataset& data, const TrainConfig& cfg) {
  model.validate();
  if (data.size() == 0) throw std::invalid_argument("train_binn: empty dataset");
  if (data.dim() != model.dim()) {
    throw std::invalid_argument("train_binn: data dimension " + std::to_string(data.dim()) +
                                " != model dimension " + std::to_string(model.dim()));
  }
  if (std::abs(data.h - model.dt) > 1e-12 * std::max(1.0, std::abs(model.dt))) {
    throw std::invalid_argument("train_binn: dataset step h=" + std::to_string(data.h) +
                                " does not match model dt=" + std::to_string(model.dt));
  }

  if (model.norm) {
    // Normalized models optimize the one-step MSE in standardized
    // coordinates; a raw-unit loss would let the largest-scale dimension
    // swamp the rest, which is what normalization exists to prevent.
    PairDataset zdata;
    zdata.h = data.h;
    zdata.inputs.reserve(data.size());
    zdata.targets.reserve(data.size());
    const Vector inv = model.norm->stdev.cwiseInverse();
    for (std::size_t i = 0; i < data.size(); ++i) {
      zdata.inputs.push_back((data.inputs[i] - model.norm->mean).cwiseProduct(inv));
      zdata.targets.push_back((data.targets[i] - model.norm->mean).cwiseProduct(inv));
    }
    BiNNModel core = model;
    core.norm.reset();
    TrainResult result = train_binn(core, zdata, cfg);
    model.block = std::move(core.block);
    model.rk = core.rk;
    return result;
  }

  if (cfg.incremental && model.n_blocks == 4 && cfg.epochs > 1) {
    const int phase1_epochs = cfg.epochs / 2;
    TrainConfig c1 = cfg;
    c1.epochs = phase1_epochs;
    c1.seed = derive_seed(cfg.seed, "phase1");
    BiNNModel one_block = model;
    one_block.n_blocks = 1;
    BinnTrainable t1(one_block);
    TrainResult r1 = train_loop(t1, data, c1);

    model.block = one_block.block;
    model.rk = one_block.rk;
    TrainConfig c2 = cfg;
    c2.epochs = cfg.epochs - phase1_epochs;
    c2.seed = derive_seed(cfg.seed, "phase2");
    BinnTrainable t2(model);
    TrainResult r2 = train_loop(t2, data, c2);

    TrainResult merged;
    merged.initial_train_mse = r1.initial_train_mse;
    merged.final_train_mse = r2.final_train_mse;
    merged.best_val_mse = r2.best_val_mse;
    merged.phase1_epochs = static_cast<std::size_t>(phase1_epochs);
    merged.phase1_final_train_mse = r1.final_train_mse;
    merged.phase2_initial_train_mse = r2.initial_train_mse;
    merged.history = std::move(r1.history);
    for (EpochLog log : r2.history) {
      log.epoch += phase1_epochs;
      merged.history.push_back(log);
    }
    return merged;
  }

  BinnTrainable t(model);
  return train_loop(t, data, cfg);
}

/// Training-log CSV: `epoch,train_mse,val_mse,seconds`.
inline void write_training_log(const std::vector<EpochLog>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "epoch,train_mse,val_mse,seconds\n";
  char buf[128];
  for (const EpochLog& log : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.3f\n", log.epoch, log.train_mse, log.val_mse,
                  log.seconds);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

/// Max relative error between analytic and central finite-difference
/// gradients of the batch MSE loss, over every parameter entry.
template <Trainable T>
double gradcheck_max_rel_error(T& trainable, const Matrix& X, const Matrix& Y,
                               double fd_step = 1e-5) {
  if (total_size(trainable.params()) > 1000) {
    throw std::invalid_argument("gradcheck: model too large (> 1e3 parameters)");
  }
  Matrix pred = trainable.forward(X);
  Matrix G = (2.0 / static_cast<double>(pred.size())) * (pred - Y);
  trainable.zero_grads();
  trainable.backward(G);
  std::vector<Eigen::ArrayXd> analytic = detail::snapshot(trainable.grads());

  double worst = 0.0;
  ParamViews& params = trainable.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i].size(); ++j) {
      const double saved = params[i][j];
      params[i][j] = saved + fd_step;
      const double lp = mse_loss(trainable.forward(X), Y);
      params[i][j] = saved - fd_step;
      const double lm = mse_loss(trainable.forward(X), Y);
      params[i][j] = saved;
      const double numeric = (lp - lm) / (2.0 * fd_step);
      const double a = analytic[i][j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

inline Matrix pairs_to_matrix(const std::vector<Vector>& vs, std::size_t limit) {
  const std::size_t n = std::min(vs.size(), limit);
  Matrix out(vs.front().size(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.col(static_cast<Eigen::Index>(i)) = vs[i];
  return out;
}

inline double gradcheck_report(BiNNModel& model, const PairDataset& sample,
                               std::size_t max_samples = 16) {
  BinnTrainable t(model);
  return gradcheck_max_rel_error(t, pairs_to_matrix(sample.inputs, max_samples),
                                 pairs_to_matrix(sample.targets, max_samples));
}

inline double gradcheck_report(MlpParams& mlp, const PairDataset& sample,
                               std::size_t max_samples = 16) {
  MlpTrainable t(mlp);
  return gradcheck_max_rel_error(t, pairs_to_matrix(sample.inputs, max_samples),
                                 pairs_to_matrix(sample.targets, max_samples));
}

inline double gradcheck_report(ResidualMlpModel& model, const PairDataset& sample,
                               std::size_t max_samples = 16) {
  ResidualMlpTrainable t(model);
  return gradcheck_max_rel_error(t, pairs_to_matrix(sample.inputs, max_samples),
                                 pairs_to_matrix(sample.targets, max_samples));
}

}  // namespace binn
