#include <gtest/gtest.h>

#include <cmath>

#include "binn/binn.hpp"

namespace binn {
namespace {

Trajectory short_lorenz_latent(std::size_t n, std::uint64_t seed) {
  const Dataset ds = generate_dataset(OdeSystem::lorenz63(), n, 10, 0.01, 300, seed);
  return ds.train;
}

TEST(SynthesizeObservations, IdentityPaddedPassThrough) {
  const Trajectory latent = short_lorenz_latent(50, 1);
  Matrix H = Matrix::Zero(5, 3);
  H.topRows(3) = Matrix::Identity(3, 3);
  const Trajectory obs = synthesize_observations(latent, H);
  ASSERT_EQ(obs.size(), latent.size());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    EXPECT_EQ(obs.states[k].head(3), latent.states[k]);
    EXPECT_EQ(obs.states[k].tail(2), Vector::Zero(2));
  }
}

TEST(SynthesizeObservations, LengthContract) {
  const Trajectory latent = short_lorenz_latent(37, 2);
  SeededRng rng(3);
  const Matrix H = draw_observation_map(5, 3, rng);
  EXPECT_EQ(synthesize_observations(latent, H).size(), 37u);
}

TEST(ObservationMap, RankCheckRejectsDegenerate) {
  Matrix H(5, 3);
  for (int i = 0; i < 5; ++i) H.row(i) << 1.0, 2.0, 3.0;  // rank 1
  EXPECT_THROW(LatentObservationMap{H}, std::invalid_argument);
}

TEST(ObservationMap, DrawnMapIsWellConditioned) {
  SeededRng rng(4);
  const Matrix H = draw_observation_map(5, 3, rng);
  Eigen::JacobiSVD<Matrix> svd(H);
  EXPECT_GT(svd.singularValues().minCoeff(), 0.1);
  EXPECT_NO_THROW(LatentObservationMap{H});
}

LatentModel small_latent_model(int n_blocks, std::uint64_t seed) {
  SeededRng rng(seed);
  return init_latent_model(5, 3, 3, 3, n_blocks, 0.01, rng);
}

TEST(LatentForward, ZeroDynamicsIsIdentity) {
  LatentModel m = small_latent_model(1, 5);
  m.dynamics.block = BlockParams::zeros(3, 3, 3);
  m.decoder_b.setZero();
  const Vector y = Vector::Random(5);
  EXPECT_EQ(latent_forward(m, y), y);
}

TEST(LatentForward, IdentityEncoderDecoderReducesToModelForward) {
  SeededRng rng(6);
  LatentModel m;
  m.encoder_w = Matrix::Identity(3, 3);
  m.encoder_b = Vector::Zero(3);
  m.decoder_w = Matrix::Identity(3, 3);
  m.decoder_b = Vector::Zero(3);
  m.dynamics.block = init_block(3, 3, 3, rng);
  m.dynamics.n_blocks = 4;
  m.dynamics.dt = 0.01;

  for (int i = 0; i < 10; ++i) {
    Vector y(3);
    for (int k = 0; k < 3; ++k) y[k] = rng.normal();
    EXPECT_EQ(latent_forward(m, y), model_forward(m.dynamics, y));
  }
}

TEST(LatentForward, GradcheckPasses) {
  for (int n_blocks : {1, 4}) {
    LatentModel m = small_latent_model(n_blocks, 7);
    SeededRng rng(70 + static_cast<std::uint64_t>(n_blocks));
    PairDataset sample;
    sample.h = 0.01;
    for (int i = 0; i < 5; ++i) {
      Vector y(5), t(5);
      for (int k = 0; k < 5; ++k) {
        y[k] = rng.normal();
        t[k] = y[k] + 0.01 * rng.normal();
      }
      sample.inputs.push_back(y);
      sample.targets.push_back(t);
    }
    EXPECT_LT(gradcheck_report(m, sample), 1e-5) << n_blocks << " blocks";
  }
}

TEST(TrainLatent, IdentityObservationReducesToBinnBehavior) {
  // D == d with identity H: the latent trainer sees exactly the plain pairs
  const Trajectory latent = short_lorenz_latent(400, 8);
  const Trajectory obs = synthesize_observations(latent, Matrix::Identity(3, 3));
  for (std::size_t k = 0; k < obs.size(); ++k) {
    EXPECT_EQ(obs.states[k], latent.states[k]);
  }
}

TEST(TrainLatent, ImprovesAndIsDeterministic) {
  const Trajectory latent = short_lorenz_latent(1500, 9);
  SeededRng hrng(10);
  const Matrix H = draw_observation_map(5, 3, hrng);
  const Trajectory obs = synthesize_observations(latent, H);
  const PairDataset pairs = make_pairs(obs);

  auto run = [&] {
    SeededRng rng(11);
    LatentModel m = init_latent_model(5, 3, 3, 3, 1, 0.01, rng);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.seed = 12;
    const TrainResult r = train_latent(m, pairs, cfg);
    return std::make_pair(m, r);
  };
  auto [m1, r1] = run();
  auto [m2, r2] = run();
  EXPECT_LT(r1.final_train_mse, r1.initial_train_mse);
  EXPECT_EQ(m1.encoder_w, m2.encoder_w);
  EXPECT_EQ(m1.decoder_w, m2.decoder_w);
  EXPECT_EQ(m1.dynamics.block.W4, m2.dynamics.block.W4);
  ASSERT_EQ(r1.history.size(), r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    EXPECT_EQ(r1.history[i].train_mse, r2.history[i].train_mse);
  }
}

TEST(AlignLatent, IdentityWhenSeriesMatch) {
  const Trajectory latent = short_lorenz_latent(200, 13);
  const AlignmentResult res = align_latent(latent.states, latent.states);
  EXPECT_LT((res.A - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(res.b.cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT(res.rmse, 1e-10);
}

TEST(AlignLatent, RecoversKnownRotation) {
  const Trajectory latent = short_lorenz_latent(200, 14);
  const double a = 0.7;
  Matrix R(3, 3);
  R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  std::vector<Vector> rotated;
  for (const Vector& x : latent.states) rotated.push_back(R * x);
  const AlignmentResult res = align_latent(rotated, latent.states);
  EXPECT_LT((res.A - R.transpose()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(res.rmse, 1e-10);
}

TEST(AlignLatent, WhiteNoiseCannotManufactureStructure) {
  const Trajectory latent = short_lorenz_latent(500, 15);
  SeededRng rng(16);
  std::vector<Vector> noise;
  for (std::size_t k = 0; k < latent.size(); ++k) {
    Vector v(3);
    for (int i = 0; i < 3; ++i) v[i] = rng.normal();
    noise.push_back(v);
  }
  const AlignmentResult res = align_latent(noise, latent.states);

  Vector mean = Vector::Zero(3);
  for (const Vector& s : latent.states) mean += s;
  mean /= static_cast<double>(latent.size());
  double var = 0.0;
  for (const Vector& s : latent.states) var += (s - mean).squaredNorm();
  const double truth_rms = std::sqrt(var / (3.0 * static_cast<double>(latent.size())));
  EXPECT_GT(res.rmse, 0.8 * truth_rms);
}

TEST(AlignLatent, ResidualInvariantUnderAffineWarp) {
  const Trajectory latent = short_lorenz_latent(300, 17);
  SeededRng rng(18);
  LatentModel m = init_latent_model(5, 3, 3, 3, 1, 0.01, rng);
  const Matrix H = draw_observation_map(5, 3, rng);
  const Trajectory obs = synthesize_observations(latent, H);
  const std::vector<Vector> learned = encode_series(m, obs);

  Matrix W(3, 3);
  W << 1.2, 0.3, -0.1, 0.0, 0.8, 0.2, -0.3, 0.1, 1.1;  // well-conditioned warp
  Vector c(3);
  c << 0.5, -1.0, 2.0;
  std::vector<Vector> warped;
  for (const Vector& z : learned) warped.push_back(W * z + c);

  const double r0 = align_latent(learned, latent.states).rmse;
  const double r1 = align_latent(warped, latent.states).rmse;
  EXPECT_NEAR(r0, r1, 1e-9);
}

TEST(AlignLatent, DegenerateCloudThrows) {
  const Trajectory latent = short_lorenz_latent(50, 19);
  std::vector<Vector> flat;
  for (std::size_t k = 0; k < latent.size(); ++k) {
    Vector v(3);
    v << static_cast<double>(k), 2.0 * static_cast<double>(k), 0.0;  // rank-1 line
    flat.push_back(v);
  }
  EXPECT_THROW(align_latent(flat, latent.states), std::runtime_error);
}

TEST(AlignLatent, LengthPreconditions) {
  std::vector<Vector> three(3, Vector::Zero(3));
  EXPECT_THROW(align_latent(three, three), std::invalid_argument);
}

}  // namespace
}  // namespace binn
