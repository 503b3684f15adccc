#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "binn/bilinear.hpp"
#include "binn/latent.hpp"
#include "binn/mlp.hpp"
#include "binn/numerics.hpp"
#include "binn/sparse_regression.hpp"
#include "binn/trajectory_io.hpp"

namespace binn {

inline constexpr int kCheckpointVersion = 1;

/// Checkpoint problems carry a kind so callers (and the CLI) can distinguish
/// unreadable files, wrong container versions, and models violating their
/// own invariants.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { VersionMismatch, Malformed, InvalidModel };

  CheckpointError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

using Json = nlohmann::json;

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Matrix matrix_from_json(const Json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: " + name + " is not a 2d array");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw CheckpointError(CheckpointError::Kind::Malformed,
                            "checkpoint: ragged rows in " + name);
    }
    for (Eigen::Index jj = 0; jj < cols; ++jj) {
      const Json& cell = row[static_cast<std::size_t>(jj)];
      if (!cell.is_number()) {
        throw CheckpointError(CheckpointError::Kind::Malformed,
                              "checkpoint: non-numeric entry in " + name);
      }
      m(i, jj) = cell.get<double>();
    }
  }
  return m;
}

inline Vector vector_from_json(const Json& j, const std::string& name) {
  if (!j.is_array()) {
    throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: " + name + " is not an array");
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw CheckpointError(CheckpointError::Kind::Malformed,
                            "checkpoint: non-numeric entry in " + name);
    }
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline const Json& require(const Json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: missing key '" + key + "'");
  }
  return *it;
}

/// Runs a JSON-reading body, mapping type errors to Malformed.
template <class F>
auto guard_malformed(F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Malformed,
                          std::string("checkpoint: malformed content (") + e.what() + ")");
  }
}

inline Json read_container(const std::string& path, const std::string& expected_kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw CheckpointError(CheckpointError::Kind::Malformed,
                          "checkpoint: malformed file " + path + " (" + e.what() + ")");
  }
  return guard_malformed([&]() {
    if (!j.is_object() || require(j, "format").get<std::string>() != "binn-checkpoint") {
      throw CheckpointError(CheckpointError::Kind::Malformed,
                            "checkpoint: not a binn checkpoint: " + path);
    }
    const int version = require(j, "version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                            "checkpoint: version " + std::to_string(version) + " != supported " +
                                std::to_string(kCheckpointVersion));
    }
    const std::string kind = require(j, "kind").get<std::string>();
    if (!expected_kind.empty() && kind != expected_kind) {
      throw CheckpointError(CheckpointError::Kind::InvalidModel,
                            "checkpoint: kind '" + kind + "' where '" + expected_kind + "' expected");
    }
    return j;
  });
}

inline void write_container(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline Json block_to_json(const BlockParams& p) {
  Json j;
  j["W1"] = matrix_to_json(p.W1);
  j["b1"] = vector_to_json(p.b1);
  j["W2"] = matrix_to_json(p.W2);
  j["b2"] = vector_to_json(p.b2);
  j["W3"] = matrix_to_json(p.W3);
  j["b3"] = vector_to_json(p.b3);
  j["W4"] = matrix_to_json(p.W4);
  j["b4"] = vector_to_json(p.b4);
  return j;
}

inline BlockParams block_from_json(const Json& j) {
  BlockParams p;
  p.W1 = matrix_from_json(require(j, "W1"), "W1");
  p.b1 = vector_from_json(require(j, "b1"), "b1");
  p.W2 = matrix_from_json(require(j, "W2"), "W2");
  p.b2 = vector_from_json(require(j, "b2"), "b2");
  p.W3 = matrix_from_json(require(j, "W3"), "W3");
  p.b3 = vector_from_json(require(j, "b3"), "b3");
  p.W4 = matrix_from_json(require(j, "W4"), "W4");
  p.b4 = vector_from_json(require(j, "b4"), "b4");
  return p;
}

inline Json rk_to_json(const RKCoefficients& rk) {
  Json j;
  j["alpha"] = {rk.alpha[0], rk.alpha[1], rk.alpha[2], rk.alpha[3]};
  j["beta"] = {rk.beta[0], rk.beta[1], rk.beta[2], rk.beta[3]};
  j["trainable"] = rk.trainable;
  return j;
}

inline RKCoefficients rk_from_json(const Json& j) {
  RKCoefficients rk;
  const Vector a = vector_from_json(require(j, "alpha"), "alpha");
  const Vector b = vector_from_json(require(j, "beta"), "beta");
  if (a.size() != 4 || b.size() != 4) {
    throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: alpha/beta must have 4 entries");
  }
  for (int i = 0; i < 4; ++i) {
    rk.alpha[static_cast<std::size_t>(i)] = a[i];
    rk.beta[static_cast<std::size_t>(i)] = b[i];
  }
  rk.trainable = require(j, "trainable").get<bool>();
  return rk;
}

inline Json binn_to_json(const BiNNModel& m) {
  Json j;
  j["format"] = "binn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = "binn";
  j["dim"] = m.dim();
  j["p_lin"] = m.block.p_lin();
  j["p_bil"] = m.block.p_bil();
  j["n_blocks"] = m.n_blocks;
  j["dt"] = m.dt;
  j["rk"] = rk_to_json(m.rk);
  j["block"] = block_to_json(m.block);
  if (m.norm) {
    j["norm"] = {{"mean", vector_to_json(m.norm->mean)}, {"stdev", vector_to_json(m.norm->stdev)}};
  } else {
    j["norm"] = nullptr;
  }
  return j;
}

inline BiNNModel binn_from_json(const Json& j) {
  BiNNModel m;
  m.block = block_from_json(require(j, "block"));
  m.n_blocks = require(j, "n_blocks").get<int>();
  m.dt = require(j, "dt").get<double>();
  m.rk = rk_from_json(require(j, "rk"));
  const Json& norm = require(j, "norm");
  if (!norm.is_null()) {
    Normalization n;
    n.mean = vector_from_json(require(norm, "mean"), "norm.mean");
    n.stdev = vector_from_json(require(norm, "stdev"), "norm.stdev");
    m.norm = std::move(n);
  }
  const auto dim = require(j, "dim").get<Eigen::Index>();
  const auto p_lin = require(j, "p_lin").get<Eigen::Index>();
  const auto p_bil = require(j, "p_bil").get<Eigen::Index>();
  try {
    m.validate();
    if (m.dim() != dim || m.block.p_lin() != p_lin || m.block.p_bil() != p_bil) {
      throw std::invalid_argument("declared dims disagree with tensor shapes");
    }
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::InvalidModel,
                          std::string("checkpoint: invalid model: ") + e.what());
  }
  return m;
}

}  // namespace detail

inline void save_checkpoint(const BiNNModel& model, const std::string& path) {
  detail::write_container(detail::binn_to_json(model), path);
}

inline BiNNModel load_binn_checkpoint(const std::string& path) {
  const detail::Json j = detail::read_container(path, "binn");
  return detail::guard_malformed([&] { return detail::binn_from_json(j); });
}

inline void save_checkpoint(const SparseModel& model, const std::string& path) {
  detail::Json j;
  j["format"] = "binn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = "sparse";
  j["dim"] = model.dim();
  j["threshold"] = model.threshold;
  j["spec"] = {{"constant", model.spec.include_constant},
               {"linear", model.spec.include_linear},
               {"quadratic", model.spec.include_quadratic}};
  j["columns"] = model.spec.column_names(model.dim());
  j["xi"] = detail::matrix_to_json(model.xi);
  detail::write_container(j, path);
}

inline SparseModel load_sparse_checkpoint(const std::string& path) {
  const detail::Json j = detail::read_container(path, "sparse");
  return detail::guard_malformed([&] {
  SparseModel m;
  const detail::Json& spec = detail::require(j, "spec");
  m.spec.include_constant = detail::require(spec, "constant").get<bool>();
  m.spec.include_linear = detail::require(spec, "linear").get<bool>();
  m.spec.include_quadratic = detail::require(spec, "quadratic").get<bool>();
  m.threshold = detail::require(j, "threshold").get<double>();
  m.xi = detail::matrix_from_json(detail::require(j, "xi"), "xi");
  const auto dim = detail::require(j, "dim").get<Eigen::Index>();
  if (m.xi.cols() != dim || m.xi.rows() != m.spec.n_columns(dim)) {
    throw CheckpointError(CheckpointError::Kind::InvalidModel,
                          "checkpoint: sparse coefficient shape disagrees with spec");
  }
  return m;
  });
}

namespace detail {

inline Json mlp_to_json(const MlpParams& p) {
  Json j;
  j["activation"] = p.act == Activation::Tanh ? "tanh" : "relu";
  Json layers = Json::array();
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    layers.push_back({{"W", matrix_to_json(p.W[l])}, {"b", vector_to_json(p.b[l])}});
  }
  j["layers"] = std::move(layers);
  return j;
}

inline MlpParams mlp_from_json(const Json& j) {
  MlpParams p;
  const std::string act = require(j, "activation").get<std::string>();
  if (act == "tanh") {
    p.act = Activation::Tanh;
  } else if (act == "relu") {
    p.act = Activation::Relu;
  } else {
    throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: unknown activation " + act);
  }
  for (const Json& layer : require(j, "layers")) {
    p.W.push_back(matrix_from_json(require(layer, "W"), "W"));
    p.b.push_back(vector_from_json(require(layer, "b"), "b"));
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::InvalidModel,
                          std::string("checkpoint: invalid mlp: ") + e.what());
  }
  return p;
}

}  // namespace detail

inline void save_checkpoint(const MlpParams& mlp, const std::string& path) {
  detail::Json j = detail::mlp_to_json(mlp);
  j["format"] = "binn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = "mlp";
  detail::write_container(j, path);
}

inline MlpParams load_mlp_checkpoint(const std::string& path) {
  const detail::Json j = detail::read_container(path, "mlp");
  return detail::guard_malformed([&] { return detail::mlp_from_json(j); });
}

inline void save_checkpoint(const ResidualMlpModel& model, const std::string& path) {
  detail::Json j;
  j["format"] = "binn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = "mlp_sl4";
  j["dt"] = model.dt;
  j["rk"] = detail::rk_to_json(model.rk);
  j["mlp"] = detail::mlp_to_json(model.mlp);
  detail::write_container(j, path);
}

inline ResidualMlpModel load_mlp_sl4_checkpoint(const std::string& path) {
  const detail::Json j = detail::read_container(path, "mlp_sl4");
  return detail::guard_malformed([&] {
  ResidualMlpModel m;
  m.dt = detail::require(j, "dt").get<double>();
  m.rk = detail::rk_from_json(detail::require(j, "rk"));
  m.mlp = detail::mlp_from_json(detail::require(j, "mlp"));
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::InvalidModel,
                          std::string("checkpoint: invalid mlp_sl4: ") + e.what());
  }
  return m;
  });
}

inline void save_checkpoint(const LatentModel& model, const std::string& path) {
  detail::Json j;
  j["format"] = "binn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = "latent";
  j["obs_dim"] = model.obs_dim();
  j["latent_dim"] = model.latent_dim();
  j["encoder_w"] = detail::matrix_to_json(model.encoder_w);
  j["encoder_b"] = detail::vector_to_json(model.encoder_b);
  j["decoder_w"] = detail::matrix_to_json(model.decoder_w);
  j["decoder_b"] = detail::vector_to_json(model.decoder_b);
  detail::Json dyn = detail::binn_to_json(model.dynamics);
  dyn.erase("format");
  dyn.erase("version");
  dyn.erase("kind");
  j["dynamics"] = std::move(dyn);
  detail::write_container(j, path);
}

inline LatentModel load_latent_checkpoint(const std::string& path) {
  const detail::Json j = detail::read_container(path, "latent");
  return detail::guard_malformed([&] {
  LatentModel m;
  m.encoder_w = detail::matrix_from_json(detail::require(j, "encoder_w"), "encoder_w");
  m.encoder_b = detail::vector_from_json(detail::require(j, "encoder_b"), "encoder_b");
  m.decoder_w = detail::matrix_from_json(detail::require(j, "decoder_w"), "decoder_w");
  m.decoder_b = detail::vector_from_json(detail::require(j, "decoder_b"), "decoder_b");
  m.dynamics = detail::binn_from_json(detail::require(j, "dynamics"));
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::InvalidModel,
                          std::string("checkpoint: invalid latent model: ") + e.what());
  }
  return m;
  });
}

/// Peeks at the kind field so the CLI can dispatch on checkpoint contents.
inline std::string checkpoint_kind(const std::string& path) {
  const detail::Json j = detail::read_container(path, "");
  return detail::guard_malformed([&] { return detail::require(j, "kind").get<std::string>(); });
}

}  // namespace binn
