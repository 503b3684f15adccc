#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "binn/analog.hpp"
#include "binn/binn.hpp"

namespace binn {

// Exit codes, documented in --help and the README.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitDivergence = 4,
};

/// Everything a run needs, merged from a JSON config file and CLI flags.
struct RunConfig {
  std::string system = "lorenz63";
  std::uint64_t seed = 42;

  // data generation
  int n_train = 50000;
  int n_test = 1000;
  int spinup = 1000;
  double h = 0.0;  // 0 -> system default
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;

  // model
  std::string model_kind = "binn4";  // binn1|binn4|mlp|mlp_sl4|sr|af (oracle: evaluate-only hook)
  int p_lin = 0;                     // 0 -> state dimension
  int p_bil = 0;
  int normalize = -1;  // -1 auto (on for oregonator), 0 off, 1 on
  bool rk_trainable = false;
  std::vector<int> mlp_hidden;  // empty -> per-system default
  std::string activation = "tanh";

  // training
  double learning_rate = 1e-3;
  int batch_size = 256;
  int epochs = 100;
  bool incremental = false;
  bool shuffle = true;
  double val_fraction = 0.05;

  // sparse regression
  double sr_threshold = 0.05;
  double sr_ridge = 1e-10;
  int sr_iters = 10;
  bool sr_exact_derivatives = false;

  // analog forecasting
  int af_k = 50;
  double af_ridge = 1e-6;
  std::string af_bandwidth = "median";  // median | fixed
  double af_fixed_bandwidth = 1.0;

  // latent experiment
  int obs_dim = 5;
  int latent_dim = 3;
  int latent_blocks = 1;
  std::string h_mode = "random";  // random | identity_padded

  // evaluation
  std::vector<int> horizons{1, 4, 8};
  int threads = 1;

  // paths
  std::string out_dir = "runs/out";
  std::string data_dir;
  std::string checkpoint;
};

namespace cli_detail {

using Json = nlohmann::json;

inline void apply_json(RunConfig& cfg, const Json& j) {
  auto get = [&j](const char* key, auto& field) {
    auto it = j.find(key);
    if (it != j.end()) field = it->get<std::decay_t<decltype(field)>>();
  };
  get("system", cfg.system);
  get("seed", cfg.seed);
  get("n_train", cfg.n_train);
  get("n_test", cfg.n_test);
  get("spinup", cfg.spinup);
  get("h", cfg.h);
  get("rel_tol", cfg.rel_tol);
  get("abs_tol", cfg.abs_tol);
  get("model_kind", cfg.model_kind);
  get("p_lin", cfg.p_lin);
  get("p_bil", cfg.p_bil);
  get("normalize", cfg.normalize);
  get("rk_trainable", cfg.rk_trainable);
  get("mlp_hidden", cfg.mlp_hidden);
  get("activation", cfg.activation);
  get("learning_rate", cfg.learning_rate);
  get("batch_size", cfg.batch_size);
  get("epochs", cfg.epochs);
  get("incremental", cfg.incremental);
  get("shuffle", cfg.shuffle);
  get("val_fraction", cfg.val_fraction);
  get("sr_threshold", cfg.sr_threshold);
  get("sr_ridge", cfg.sr_ridge);
  get("sr_iters", cfg.sr_iters);
  get("sr_exact_derivatives", cfg.sr_exact_derivatives);
  get("af_k", cfg.af_k);
  get("af_ridge", cfg.af_ridge);
  get("af_bandwidth", cfg.af_bandwidth);
  get("af_fixed_bandwidth", cfg.af_fixed_bandwidth);
  get("obs_dim", cfg.obs_dim);
  get("latent_dim", cfg.latent_dim);
  get("latent_blocks", cfg.latent_blocks);
  get("h_mode", cfg.h_mode);
  get("horizons", cfg.horizons);
  get("threads", cfg.threads);
  get("out_dir", cfg.out_dir);
  get("data_dir", cfg.data_dir);
  get("checkpoint", cfg.checkpoint);
}

inline Json to_json(const RunConfig& cfg) {
  Json j;
  j["system"] = cfg.system;
  j["seed"] = cfg.seed;
  j["n_train"] = cfg.n_train;
  j["n_test"] = cfg.n_test;
  j["spinup"] = cfg.spinup;
  j["h"] = cfg.h;
  j["rel_tol"] = cfg.rel_tol;
  j["abs_tol"] = cfg.abs_tol;
  j["model_kind"] = cfg.model_kind;
  j["p_lin"] = cfg.p_lin;
  j["p_bil"] = cfg.p_bil;
  j["normalize"] = cfg.normalize;
  j["rk_trainable"] = cfg.rk_trainable;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["activation"] = cfg.activation;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["incremental"] = cfg.incremental;
  j["shuffle"] = cfg.shuffle;
  j["val_fraction"] = cfg.val_fraction;
  j["sr_threshold"] = cfg.sr_threshold;
  j["sr_ridge"] = cfg.sr_ridge;
  j["sr_iters"] = cfg.sr_iters;
  j["sr_exact_derivatives"] = cfg.sr_exact_derivatives;
  j["af_k"] = cfg.af_k;
  j["af_ridge"] = cfg.af_ridge;
  j["af_bandwidth"] = cfg.af_bandwidth;
  j["af_fixed_bandwidth"] = cfg.af_fixed_bandwidth;
  j["obs_dim"] = cfg.obs_dim;
  j["latent_dim"] = cfg.latent_dim;
  j["latent_blocks"] = cfg.latent_blocks;
  j["h_mode"] = cfg.h_mode;
  j["horizons"] = cfg.horizons;
  j["threads"] = cfg.threads;
  j["out_dir"] = cfg.out_dir;
  j["data_dir"] = cfg.data_dir;
  j["checkpoint"] = cfg.checkpoint;
  return j;
}

}  // namespace cli_detail

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  cli_detail::Json j;
  try {
    in >> j;
  } catch (const cli_detail::Json::parse_error& e) {
    throw std::invalid_argument("config: malformed JSON in " + path + " (" + e.what() + ")");
  }
  RunConfig cfg;
  try {
    cli_detail::apply_json(cfg, j);
  } catch (const cli_detail::Json::exception& e) {
    throw std::invalid_argument("config: bad value in " + path + " (" + e.what() + ")");
  }
  return cfg;
}

namespace cli_detail {

inline OdeSystem resolve_system(const RunConfig& cfg) {
  auto sys = system_from_name(cfg.system);
  if (!sys) {
    std::string names;
    for (const auto& n : system_names()) names += (names.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown system '" + cfg.system + "' (valid: " + names + ")");
  }
  return *sys;
}

inline double resolve_step(const RunConfig& cfg, const OdeSystem& sys) {
  return cfg.h > 0.0 ? cfg.h : sys.default_step();
}

inline bool resolve_normalize(const RunConfig& cfg) {
  if (cfg.normalize >= 0) return cfg.normalize != 0;
  return cfg.system == "oregonator";  // state scales span orders of magnitude
}

inline std::vector<Eigen::Index> mlp_widths(const RunConfig& cfg, Eigen::Index d, bool residual) {
  std::vector<Eigen::Index> widths{d};
  if (!cfg.mlp_hidden.empty()) {
    for (int w : cfg.mlp_hidden) widths.push_back(w);
  } else if (d >= 40) {
    // published Lorenz-96 settings: 10 hidden layers of 80 (direct MLP),
    // 11 hidden layers of 80 (residual stage field)
    const int layers = residual ? 11 : 10;
    for (int l = 0; l < layers; ++l) widths.push_back(80);
  } else {
    for (int l = 0; l < 5; ++l) widths.push_back(6);
  }
  widths.push_back(d);
  return widths;
}

inline Activation resolve_activation(const RunConfig& cfg) {
  if (cfg.activation == "tanh") return Activation::Tanh;
  if (cfg.activation == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + cfg.activation + "' (valid: tanh, relu)");
}

inline TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.learning_rate;
  t.batch_size = cfg.batch_size;
  t.epochs = cfg.epochs;
  t.seed = derive_seed(cfg.seed, "train");
  t.incremental = cfg.incremental;
  t.shuffle = cfg.shuffle;
  t.val_fraction = cfg.val_fraction;
  return t;
}

inline AnalogConfig analog_config(const RunConfig& cfg) {
  AnalogConfig a;
  a.k = cfg.af_k;
  a.ridge = cfg.af_ridge;
  if (cfg.af_bandwidth == "median") {
    a.bandwidth_rule = BandwidthRule::MedianDistance;
  } else if (cfg.af_bandwidth == "fixed") {
    a.bandwidth_rule = BandwidthRule::Fixed;
    a.fixed_bandwidth = cfg.af_fixed_bandwidth;
  } else {
    throw std::invalid_argument("unknown bandwidth rule '" + cfg.af_bandwidth +
                                "' (valid: median, fixed)");
  }
  return a;
}

inline void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
}

inline std::string data_path(const RunConfig& cfg, const std::string& file) {
  const std::string dir = cfg.data_dir.empty() ? cfg.out_dir : cfg.data_dir;
  return (std::filesystem::path(dir) / file).string();
}

inline std::string out_path(const RunConfig& cfg, const std::string& file) {
  return (std::filesystem::path(cfg.out_dir) / file).string();
}

/// Every command records its effective config and outputs; the timestamp
/// lives only here so reruns stay byte-identical elsewhere.
inline void write_manifest(const RunConfig& cfg, const std::string& command,
                           const std::vector<std::string>& outputs) {
  Json j;
  j["command"] = command;
  j["config"] = to_json(cfg);
  j["outputs"] = outputs;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  j["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(now).count();
  std::ofstream out(out_path(cfg, "manifest.json"));
  if (!out) throw IoError("cannot write manifest in " + cfg.out_dir);
  out << j.dump(2) << "\n";
}

inline Trajectory load_required_trajectory(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("data file not found: " + path);
  return read_trajectory_csv(path);
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// Subcommands (callable in-process; the binary is a thin wrapper)
// ---------------------------------------------------------------------------

inline int cmd_generate(const RunConfig& cfg) {
  const OdeSystem sys = cli_detail::resolve_system(cfg);
  const double h = cli_detail::resolve_step(cfg, sys);
  AdaptiveConfig ac;
  ac.rel_tol = cfg.rel_tol;
  ac.abs_tol = cfg.abs_tol;
  const Dataset ds = generate_dataset(sys, static_cast<std::size_t>(cfg.n_train),
                                      static_cast<std::size_t>(cfg.n_test), h,
                                      static_cast<std::size_t>(cfg.spinup), cfg.seed, ac);
  cli_detail::ensure_out_dir(cfg);
  const std::string train_path = cli_detail::out_path(cfg, "train.csv");
  const std::string test_path = cli_detail::out_path(cfg, "test.csv");
  write_trajectory_csv(ds.train, train_path);
  write_trajectory_csv(ds.test, test_path);
  cli_detail::write_manifest(cfg, "generate", {train_path, test_path});
  std::cout << "wrote " << ds.train.size() << " train states to " << train_path << "\n"
            << "wrote " << ds.test.size() << " test states to " << test_path << "\n";
  return kExitOk;
}

inline int cmd_train(const RunConfig& cfg) {
  const OdeSystem sys = cli_detail::resolve_system(cfg);
  const Trajectory train = cli_detail::load_required_trajectory(cli_detail::data_path(cfg, "train.csv"));
  if (train.dim() != sys.dim) {
    throw std::invalid_argument("training data dimension " + std::to_string(train.dim()) +
                                " does not match system dimension " + std::to_string(sys.dim));
  }
  const PairDataset pairs = make_pairs(train);
  const Eigen::Index d = train.dim();
  cli_detail::ensure_out_dir(cfg);
  const std::string ckpt_path = cli_detail::out_path(cfg, "checkpoint.json");
  const std::string log_path = cli_detail::out_path(cfg, "training_log.csv");
  SeededRng init_rng(derive_seed(cfg.seed, "init"));

  if (cfg.model_kind == "binn1" || cfg.model_kind == "binn4") {
    BiNNModel model;
    model.block = init_block(d, cfg.p_lin > 0 ? cfg.p_lin : d, cfg.p_bil > 0 ? cfg.p_bil : d,
                             init_rng);
    model.n_blocks = cfg.model_kind == "binn4" ? 4 : 1;
    model.dt = pairs.h;
    model.rk.trainable = cfg.rk_trainable;
    if (cli_detail::resolve_normalize(cfg)) {
      auto [mean, stdev] = standardize_stats(train.states);
      model.norm = Normalization{mean, stdev};
    }
    const TrainResult result = train_binn(model, pairs, cli_detail::train_config(cfg));
    save_checkpoint(model, ckpt_path);
    write_training_log(result.history, log_path);
    std::cout << "final train RMSE " << std::sqrt(result.final_train_mse) << ", val RMSE "
              << std::sqrt(result.best_val_mse) << "\n";
  } else if (cfg.model_kind == "mlp") {
    MlpParams mlp = init_mlp(cli_detail::mlp_widths(cfg, d, false),
                             cli_detail::resolve_activation(cfg), init_rng);
    MlpTrainable t(mlp);
    const TrainResult result = train_loop(t, pairs, cli_detail::train_config(cfg));
    save_checkpoint(mlp, ckpt_path);
    write_training_log(result.history, log_path);
    std::cout << "final train RMSE " << std::sqrt(result.final_train_mse) << ", val RMSE "
              << std::sqrt(result.best_val_mse) << "\n";
  } else if (cfg.model_kind == "mlp_sl4") {
    ResidualMlpModel model = make_mlp_sl4(
        init_mlp(cli_detail::mlp_widths(cfg, d, true), cli_detail::resolve_activation(cfg), init_rng),
        pairs.h);
    ResidualMlpTrainable t(model);
    const TrainResult result = train_loop(t, pairs, cli_detail::train_config(cfg));
    save_checkpoint(model, ckpt_path);
    write_training_log(result.history, log_path);
    std::cout << "final train RMSE " << std::sqrt(result.final_train_mse) << ", val RMSE "
              << std::sqrt(result.best_val_mse) << "\n";
  } else if (cfg.model_kind == "sr") {
    DictionarySpec spec;
    Matrix dict;
    Matrix derivs;
    if (cfg.sr_exact_derivatives) {
      dict = build_dictionary(train.states, spec);
      derivs.resize(dict.rows(), d);
      for (std::size_t i = 0; i < train.size(); ++i) {
        derivs.row(static_cast<Eigen::Index>(i)) = sys.field(train.states[i]).transpose();
      }
    } else {
      const std::vector<Vector> dx = estimate_derivatives(train);
      const std::vector<Vector> interior(train.states.begin() + 1, train.states.end() - 1);
      dict = build_dictionary(interior, spec);
      derivs.resize(dict.rows(), d);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        derivs.row(static_cast<Eigen::Index>(i)) = dx[i].transpose();
      }
    }
    const SparseModel model = stlsq_fit(dict, derivs, spec, cfg.sr_threshold, cfg.sr_iters,
                                        cfg.sr_ridge);
    save_checkpoint(model, ckpt_path);
    std::cout << "sparse model with " << (model.xi.array() != 0.0).count() << " active terms\n";
  } else if (cfg.model_kind == "af") {
    throw std::invalid_argument("model kind 'af' is instance-based and has no training phase; "
                                "run evaluate directly");
  } else {
    throw std::invalid_argument("unknown model kind '" + cfg.model_kind +
                                "' (valid: binn1, binn4, mlp, mlp_sl4, sr, af)");
  }
  cli_detail::write_manifest(cfg, "train", {ckpt_path, log_path});
  return kExitOk;
}

inline int cmd_evaluate(const RunConfig& cfg) {
  const Trajectory test = cli_detail::load_required_trajectory(cli_detail::data_path(cfg, "test.csv"));
  const double h = test.h;
  StepFn predictor;
  bool identifiable = false;
  PolynomialCoefficients poly;
  PairDataset train_pairs;  // kept alive for af

  if (cfg.model_kind == "binn1" || cfg.model_kind == "binn4") {
    if (cfg.checkpoint.empty()) throw std::invalid_argument("evaluate: --checkpoint required");
    const BiNNModel model = load_binn_checkpoint(cfg.checkpoint);
    if (model.dim() != test.dim()) {
      throw std::invalid_argument("checkpoint dimension does not match test data");
    }
    predictor = [model](const Vector& x) { return model_forward(model, x); };
    poly = expand_to_polynomial(model.block, model.norm);
    identifiable = true;
  } else if (cfg.model_kind == "mlp") {
    const MlpParams mlp = load_mlp_checkpoint(cfg.checkpoint);
    predictor = [mlp](const Vector& x) { return mlp_forward(mlp, x); };
  } else if (cfg.model_kind == "mlp_sl4") {
    const ResidualMlpModel model = load_mlp_sl4_checkpoint(cfg.checkpoint);
    predictor = [model](const Vector& x) { return residual_mlp_forward(model, x); };
  } else if (cfg.model_kind == "sr") {
    const SparseModel model = load_sparse_checkpoint(cfg.checkpoint);
    predictor = [model, h](const Vector& x) { return sparse_forecast_step(model, x, h); };
    poly = sparse_to_polynomial(model);
    identifiable = true;
  } else if (cfg.model_kind == "af") {
    const Trajectory train = cli_detail::load_required_trajectory(cli_detail::data_path(cfg, "train.csv"));
    train_pairs = make_pairs(train);
    const AnalogConfig ac = cli_detail::analog_config(cfg);
    predictor = [train_pairs, ac](const Vector& x) {
      return analog_forecast_step(train_pairs, x, ac);
    };
  } else if (cfg.model_kind == "oracle") {
    // test hook: replays the test series by exact state lookup
    std::map<std::string, Vector> next;
    for (std::size_t i = 0; i + 1 < test.size(); ++i) {
      const Vector& s = test.states[i];
      next.emplace(std::string(reinterpret_cast<const char*>(s.data()),
                               static_cast<std::size_t>(s.size()) * sizeof(double)),
                   test.states[i + 1]);
    }
    predictor = [next](const Vector& x) {
      auto it = next.find(std::string(reinterpret_cast<const char*>(x.data()),
                                      static_cast<std::size_t>(x.size()) * sizeof(double)));
      if (it == next.end()) throw std::runtime_error("oracle: state not in test series");
      return it->second;
    };
  } else {
    throw std::invalid_argument("unknown model kind '" + cfg.model_kind + "'");
  }

  const ForecastReport report =
      rmse_at_horizons(predictor, test, cfg.horizons, cfg.threads, cfg.model_kind);
  cli_detail::ensure_out_dir(cfg);
  const std::string csv_path = cli_detail::out_path(cfg, "forecast_report.csv");
  write_forecast_csv(report, csv_path);
  std::cout << format_forecast_table(report);
  std::vector<std::string> outputs{csv_path};

  if (identifiable && cfg.system == "lorenz63") {
    const IdentificationReport ident = parameter_mse(poly, cli_detail::resolve_system(cfg));
    const std::string ident_path = cli_detail::out_path(cfg, "identification_report.csv");
    write_identification_csv(ident, ident_path);
    std::cout << format_identification_table(ident);
    outputs.push_back(ident_path);
  }
  cli_detail::write_manifest(cfg, "evaluate", outputs);
  return kExitOk;
}

inline int cmd_latent(const RunConfig& cfg) {
  if (cfg.system != "lorenz63") {
    throw std::invalid_argument("latent experiment is defined for the lorenz63 system");
  }
  const OdeSystem sys = cli_detail::resolve_system(cfg);
  const double h = cli_detail::resolve_step(cfg, sys);
  AdaptiveConfig ac;
  ac.rel_tol = cfg.rel_tol;
  ac.abs_tol = cfg.abs_tol;
  const Dataset latent_ds = generate_dataset(sys, static_cast<std::size_t>(cfg.n_train),
                                             static_cast<std::size_t>(cfg.n_test), h,
                                             static_cast<std::size_t>(cfg.spinup), cfg.seed, ac);

  Matrix H;
  if (cfg.h_mode == "identity_padded") {
    H = Matrix::Zero(cfg.obs_dim, cfg.latent_dim);
    H.topRows(cfg.latent_dim) = Matrix::Identity(cfg.latent_dim, cfg.latent_dim);
  } else if (cfg.h_mode == "random") {
    SeededRng hrng(derive_seed(cfg.seed, "hmap"));
    H = draw_observation_map(cfg.obs_dim, cfg.latent_dim, hrng);
  } else {
    throw std::invalid_argument("unknown h_mode '" + cfg.h_mode +
                                "' (valid: random, identity_padded)");
  }
  const Trajectory obs_train = synthesize_observations(latent_ds.train, H);
  const Trajectory obs_test = synthesize_observations(latent_ds.test, H);

  SeededRng init_rng(derive_seed(cfg.seed, "init"));
  LatentModel model = init_latent_model(cfg.obs_dim, cfg.latent_dim,
                                        cfg.p_lin > 0 ? cfg.p_lin : cfg.latent_dim,
                                        cfg.p_bil > 0 ? cfg.p_bil : cfg.latent_dim,
                                        cfg.latent_blocks, h, init_rng);
  const TrainResult result = train_latent(model, make_pairs(obs_train), cli_detail::train_config(cfg));

  // Reconstructed latent series: the encoder applied to the test observations,
  // aligned to the true latent states by a least-squares affine map.
  const std::vector<Vector> learned = encode_series(model, obs_test);
  const AlignmentResult alignment = align_latent(learned, latent_ds.test.states);

  cli_detail::ensure_out_dir(cfg);
  Trajectory aligned;
  aligned.t0 = latent_ds.test.t0;
  aligned.h = h;
  for (const Vector& z : learned) aligned.states.push_back(alignment.A * z + alignment.b);
  const std::string true_path = cli_detail::out_path(cfg, "latent_true.csv");
  const std::string learned_path = cli_detail::out_path(cfg, "latent_learned_aligned.csv");
  const std::string ckpt_path = cli_detail::out_path(cfg, "checkpoint.json");
  const std::string log_path = cli_detail::out_path(cfg, "training_log.csv");
  write_trajectory_csv(latent_ds.test, true_path);
  write_trajectory_csv(aligned, learned_path);
  save_checkpoint(model, ckpt_path);
  write_training_log(result.history, log_path);

  cli_detail::Json summary;
  summary["alignment_rmse"] = alignment.rmse;
  summary["final_train_mse"] = result.final_train_mse;
  summary["best_val_mse"] = result.best_val_mse;
  const std::string summary_path = cli_detail::out_path(cfg, "alignment.json");
  std::ofstream sout(summary_path);
  if (!sout) throw IoError("cannot write " + summary_path);
  sout << summary.dump(2) << "\n";

  cli_detail::write_manifest(cfg, "latent", {true_path, learned_path, ckpt_path, summary_path});
  std::cout << "alignment residual RMSE " << alignment.rmse << " (train one-step RMSE "
            << std::sqrt(result.final_train_mse) << ")\n";
  return kExitOk;
}

inline int cmd_gradcheck(const RunConfig& cfg) {
  SeededRng rng(cfg.seed);
  const Eigen::Index d = 3;
  PairDataset sample;
  sample.h = 0.01;
  for (int i = 0; i < 8; ++i) {
    Vector x(d), y(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      x[k] = rng.normal();
      y[k] = x[k] + 0.01 * rng.normal();
    }
    sample.inputs.push_back(x);
    sample.targets.push_back(y);
  }

  struct Row {
    const char* name;
    double err;
  };
  std::vector<Row> rows;

  {
    BiNNModel m;
    m.block = init_block(d, d, d, rng);
    m.n_blocks = 1;
    m.dt = sample.h;
    rows.push_back({"binn1", gradcheck_report(m, sample)});
  }
  {
    BiNNModel m;
    m.block = init_block(d, d, d, rng);
    m.n_blocks = 4;
    m.dt = sample.h;
    rows.push_back({"binn4", gradcheck_report(m, sample)});
  }
  {
    MlpParams mlp = init_mlp({d, 6, 6, d}, Activation::Tanh, rng);
    rows.push_back({"mlp", gradcheck_report(mlp, sample)});
  }
  {
    ResidualMlpModel m = make_mlp_sl4(init_mlp({d, 6, 6, d}, Activation::Tanh, rng), sample.h);
    rows.push_back({"mlp_sl4", gradcheck_report(m, sample)});
  }
  {
    LatentModel m = init_latent_model(5, 3, 3, 3, 1, sample.h, rng);
    PairDataset obs;
    obs.h = sample.h;
    Matrix H(5, 3);
    for (Eigen::Index i = 0; i < H.size(); ++i) H(i / 3, i % 3) = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < sample.size(); ++i) {
      obs.inputs.push_back(H * sample.inputs[i]);
      obs.targets.push_back(H * sample.targets[i]);
    }
    rows.push_back({"latent", gradcheck_report(m, obs)});
  }

  bool ok = true;
  for (const Row& row : rows) {
    const bool pass = row.err < 1e-5;
    ok = ok && pass;
    std::cout << row.name << ": max rel err " << row.err << (pass ? " (ok)" : " (FAIL)") << "\n";
  }
  return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

namespace cli_detail {

inline void add_common_options(CLI::App* sub, RunConfig& cfg, std::string& config_path) {
  sub->add_option("--config", config_path, "JSON config file; flags override its keys");
  sub->add_option("--system", cfg.system, "lorenz63 | oregonator | lorenz96");
  sub->add_option("--seed", cfg.seed, "run seed (fanned out per component)");
  sub->add_option("--out", cfg.out_dir, "output directory");
  sub->add_option("--data", cfg.data_dir, "directory holding train.csv/test.csv");
  sub->add_option("--threads", cfg.threads, "worker cap for evaluation");
  sub->add_option("--model", cfg.model_kind, "binn1|binn4|mlp|mlp_sl4|sr|af");
  sub->add_option("--checkpoint", cfg.checkpoint, "checkpoint path (evaluate)");
  sub->add_option("--epochs", cfg.epochs, "training epochs");
  sub->add_option("--batch-size", cfg.batch_size, "minibatch size");
  sub->add_option("--learning-rate", cfg.learning_rate, "Adam learning rate");
  sub->add_flag("--incremental,!--no-incremental", cfg.incremental,
                "train 1-block first, then seed the 4-block model");
  sub->add_option("--normalize", cfg.normalize, "-1 auto, 0 off, 1 on");
  sub->add_option("--n-train", cfg.n_train, "training series length");
  sub->add_option("--n-test", cfg.n_test, "test series length");
  sub->add_option("--spinup", cfg.spinup, "discarded leading states");
  sub->add_option("--step", cfg.h, "sampling step (0 = system default)");
  sub->add_option("--horizons", cfg.horizons, "forecast horizons in steps");
  sub->add_option("--obs-dim", cfg.obs_dim, "latent experiment observation dim");
  sub->add_option("--h-mode", cfg.h_mode, "random | identity_padded");
}

}  // namespace cli_detail

/// Parses arguments and dispatches. Exit codes: 0 ok, 1 failure, 2 usage,
/// 3 I/O, 4 numerical divergence.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"bilinear residual networks for ODE identification and forecasting"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  CLI::App* generate = app.add_subcommand("generate", "integrate a system and write train/test CSVs");
  CLI::App* train = app.add_subcommand("train", "fit a model on generated data");
  CLI::App* evaluate = app.add_subcommand("evaluate", "multi-horizon forecast report (+ identification)");
  CLI::App* latent = app.add_subcommand("latent", "latent dynamics identification experiment");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  for (CLI::App* sub : {generate, train, evaluate, latent, gradcheck}) {
    cli_detail::add_common_options(sub, cfg, config_path);
  }

  // Two-pass parse: the config file provides defaults, flags override.
  try {
    app.parse(argc, argv);
    if (!config_path.empty()) {
      RunConfig from_file = load_run_config(config_path);
      cfg = from_file;
      CLI::App reparse{""};
      reparse.require_subcommand(1);
      CLI::App* g2 = reparse.add_subcommand("generate", "");
      CLI::App* t2 = reparse.add_subcommand("train", "");
      CLI::App* e2 = reparse.add_subcommand("evaluate", "");
      CLI::App* l2 = reparse.add_subcommand("latent", "");
      CLI::App* c2 = reparse.add_subcommand("gradcheck", "");
      std::string ignored;
      for (CLI::App* sub : {g2, t2, e2, l2, c2}) {
        cli_detail::add_common_options(sub, cfg, ignored);
      }
      reparse.parse(argc, argv);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(generate)) return cmd_generate(cfg);
    if (app.got_subcommand(train)) return cmd_train(cfg);
    if (app.got_subcommand(evaluate)) return cmd_evaluate(cfg);
    if (app.got_subcommand(latent)) return cmd_latent(cfg);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(cfg);
    std::cerr << "no subcommand given\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == CheckpointError::Kind::Malformed ? kExitIo : kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace binn
