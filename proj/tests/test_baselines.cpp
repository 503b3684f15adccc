#include <gtest/gtest.h>

#include <cmath>

#include "binn/analog.hpp"
#include "binn/binn.hpp"

namespace binn {
namespace {

TEST(BuildDictionary, HandEnumeratedRow) {
  Vector x(2);
  x << 2, 3;
  const Matrix dict = build_dictionary({x}, DictionarySpec{});
  ASSERT_EQ(dict.cols(), 6);
  const double expected[6] = {1, 2, 3, 4, 6, 9};
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(dict(0, i), expected[i]);
}

TEST(BuildDictionary, ZeroStateRow) {
  const Matrix dict = build_dictionary({Vector::Zero(3)}, DictionarySpec{});
  EXPECT_DOUBLE_EQ(dict(0, 0), 1.0);
  EXPECT_EQ(dict.row(0).tail(dict.cols() - 1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(BuildDictionary, LinearOnlyColumnCount) {
  DictionarySpec spec;
  spec.include_constant = false;
  spec.include_quadratic = false;
  const Matrix dict = build_dictionary({Vector::Zero(3)}, spec);
  EXPECT_EQ(dict.cols(), 3);
}

TEST(BuildDictionary, ColumnNamesMatchOrder) {
  const DictionarySpec spec;
  const auto names = spec.column_names(2);
  const std::vector<std::string> expected{"1", "x0", "x1", "x0*x0", "x0*x1", "x1*x1"};
  EXPECT_EQ(names, expected);
  EXPECT_EQ(spec.n_columns(2), 6);
}

TEST(EstimateDerivatives, ExactOnLinearStates) {
  Trajectory traj;
  traj.h = 0.1;
  Vector v(2);
  v << 2.0, -1.0;
  for (int k = 0; k < 10; ++k) traj.states.push_back(static_cast<double>(k) * traj.h * v);
  const auto derivs = estimate_derivatives(traj);
  ASSERT_EQ(derivs.size(), 8u);
  for (const Vector& d : derivs) EXPECT_LT((d - v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EstimateDerivatives, ZeroOnConstant) {
  Trajectory traj;
  traj.h = 0.1;
  traj.states.assign(5, Vector::Ones(3));
  for (const Vector& d : estimate_derivatives(traj)) {
    EXPECT_EQ(d, Vector::Zero(3));
  }
}

TEST(EstimateDerivatives, ExactOnQuadraticStates) {
  Trajectory traj;
  traj.h = 0.05;
  for (int k = 0; k < 20; ++k) {
    Vector s(1);
    const double t = static_cast<double>(k) * traj.h;
    s << t * t;
    traj.states.push_back(s);
  }
  const auto derivs = estimate_derivatives(traj);
  for (std::size_t i = 0; i < derivs.size(); ++i) {
    const double t = static_cast<double>(i + 1) * traj.h;
    EXPECT_NEAR(derivs[i][0], 2.0 * t, 1e-12);
  }
}

TEST(EstimateDerivatives, TooShortThrows) {
  Trajectory traj;
  traj.h = 0.1;
  traj.states.assign(2, Vector::Zero(1));
  EXPECT_THROW(estimate_derivatives(traj), std::invalid_argument);
}

TEST(StlsqFit, RecoversLinearGrowth) {
  // dx/dt = 2x sampled exactly over a dictionary (1, x, x^2)
  std::vector<Vector> states;
  Matrix derivs(9, 1);
  for (int k = 0; k < 9; ++k) {
    Vector x(1);
    x << 0.5 + 0.25 * k;
    states.push_back(x);
    derivs(k, 0) = 2.0 * x[0];
  }
  const Matrix dict = build_dictionary(states, DictionarySpec{});
  const SparseModel model = stlsq_fit(dict, derivs, DictionarySpec{}, 0.1);
  EXPECT_NEAR(model.xi(1, 0), 2.0, 1e-10);
  EXPECT_DOUBLE_EQ(model.xi(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(model.xi(2, 0), 0.0);
}

TEST(StlsqFit, ZeroDerivativesGiveZeroModelNotError) {
  std::vector<Vector> states;
  for (int k = 0; k < 6; ++k) {
    Vector x(2);
    x << k, k * k;
    states.push_back(x);
  }
  const Matrix dict = build_dictionary(states, DictionarySpec{});
  const Matrix derivs = Matrix::Zero(6, 2);
  const SparseModel model = stlsq_fit(dict, derivs, DictionarySpec{}, 0.1);
  EXPECT_EQ(model.xi, Matrix::Zero(dict.cols(), 2));
}

class Lorenz63SparseFixture : public ::testing::Test {
 protected:
  static const Dataset& data() {
    static const Dataset ds = generate_dataset(OdeSystem::lorenz63(), 5000, 100, 0.01, 500, 77);
    return ds;
  }

  static SparseModel exact_derivative_fit() {
    const OdeSystem sys = OdeSystem::lorenz63();
    const auto& states = data().train.states;
    const Matrix dict = build_dictionary(states, DictionarySpec{});
    Matrix derivs(dict.rows(), 3);
    for (std::size_t i = 0; i < states.size(); ++i) {
      derivs.row(static_cast<Eigen::Index>(i)) = sys.field(states[i]).transpose();
    }
    return stlsq_fit(dict, derivs, DictionarySpec{}, 0.05);
  }
};

TEST_F(Lorenz63SparseFixture, ExactDerivativesRecoverCoefficients) {
  const SparseModel model = exact_derivative_fit();
  // columns: 1, x0, x1, x2, x0*x0, x0*x1, x0*x2, x1*x1, x1*x2, x2*x2
  Matrix expected = Matrix::Zero(10, 3);
  expected(1, 0) = -10.0;
  expected(2, 0) = 10.0;
  expected(1, 1) = 28.0;
  expected(2, 1) = -1.0;
  expected(6, 1) = -1.0;
  expected(5, 2) = 1.0;
  expected(3, 2) = -8.0 / 3.0;
  EXPECT_LT((model.xi - expected).cwiseAbs().maxCoeff(), 1e-3);
  for (Eigen::Index i = 0; i < 10; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      if (expected(i, j) == 0.0) EXPECT_EQ(model.xi(i, j), 0.0) << "(" << i << "," << j << ")";
    }
  }
}

TEST_F(Lorenz63SparseFixture, FittedModelStepMatchesTrueFieldStep) {
  const SparseModel model = exact_derivative_fit();
  const OdeSystem sys = OdeSystem::lorenz63();
  auto true_field = [&sys](const Vector& x) { return sys.field(x); };
  for (std::size_t k = 0; k < 20; ++k) {
    const Vector& x = data().test.states[k * 4];
    const Vector a = sparse_forecast_step(model, x, 0.01);
    const Vector b = rk4_step(true_field, x, 0.01);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST_F(Lorenz63SparseFixture, SupportIsNonIncreasingAcrossIterations) {
  const auto& states = data().train.states;
  const Matrix dict = build_dictionary(states, DictionarySpec{});
  const auto derivs_vec = estimate_derivatives(data().train);
  const std::vector<Vector> interior(states.begin() + 1, states.end() - 1);
  const Matrix dict_interior = build_dictionary(interior, DictionarySpec{});
  Matrix derivs(dict_interior.rows(), 3);
  for (std::size_t i = 0; i < derivs_vec.size(); ++i) {
    derivs.row(static_cast<Eigen::Index>(i)) = derivs_vec[i].transpose();
  }
  auto support = [](const SparseModel& m) {
    std::vector<bool> s;
    for (Eigen::Index i = 0; i < m.xi.size(); ++i) s.push_back(m.xi(i % m.xi.rows(), i / m.xi.rows()) != 0.0);
    return s;
  };
  std::vector<bool> prev;
  for (int iters = 1; iters <= 5; ++iters) {
    const SparseModel m = stlsq_fit(dict_interior, derivs, DictionarySpec{}, 0.05, iters);
    const auto cur = support(m);
    if (!prev.empty()) {
      for (std::size_t i = 0; i < cur.size(); ++i) {
        EXPECT_FALSE(cur[i] && !prev[i]) << "support grew at " << i;
      }
    }
    prev = cur;
  }
}

TEST(SparseForecast, AllZeroModelIsIdentityStep) {
  SparseModel model;
  model.xi = Matrix::Zero(10, 3);
  Vector x(3);
  x << 1, 2, 3;
  EXPECT_EQ(sparse_forecast_step(model, x, 0.01), x);
}

TEST(SparseForecast, LinearDecayTaylorFactor) {
  SparseModel model;
  model.xi = Matrix::Zero(3, 1);
  model.xi(1, 0) = -1.0;  // dx/dt = -x
  Vector x(1);
  x << 1.0;
  EXPECT_NEAR(sparse_forecast_step(model, x, 0.1)[0], 0.9048375, 1e-15);
}

PairDataset affine_pairs(std::size_t n, std::uint64_t seed) {
  // targets from an exact affine map y = M x + c
  SeededRng rng(seed);
  Matrix M(2, 2);
  M << 0.9, 0.1, -0.2, 0.8;
  Vector c(2);
  c << 0.3, -0.1;
  PairDataset ds;
  ds.h = 0.1;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(2);
    x << rng.uniform(-2, 2), rng.uniform(-2, 2);
    ds.inputs.push_back(x);
    ds.targets.push_back(M * x + c);
  }
  return ds;
}

TEST(AnalogForecast, ExactMatchWithKOneReturnsStoredSuccessor) {
  const PairDataset train = affine_pairs(50, 5);
  AnalogConfig cfg;
  cfg.k = 1;
  const Vector pred = analog_forecast_step(train, train.inputs[17], cfg);
  EXPECT_LT((pred - train.targets[17]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AnalogForecast, AffineDataFitExactly) {
  const PairDataset train = affine_pairs(100, 6);
  AnalogConfig cfg;
  cfg.k = 10;
  cfg.ridge = 0.0;
  SeededRng rng(7);
  for (int i = 0; i < 5; ++i) {
    Vector q(2);
    q << rng.uniform(-1, 1), rng.uniform(-1, 1);
    Matrix M(2, 2);
    M << 0.9, 0.1, -0.2, 0.8;
    Vector c(2);
    c << 0.3, -0.1;
    const Vector pred = analog_forecast_step(train, q, cfg);
    EXPECT_LT((pred - (M * q + c)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(AnalogForecast, DuplicatedPairsDoNotChangePrediction) {
  const PairDataset train = affine_pairs(60, 8);
  PairDataset doubled = train;
  doubled.inputs.insert(doubled.inputs.end(), train.inputs.begin(), train.inputs.end());
  doubled.targets.insert(doubled.targets.end(), train.targets.begin(), train.targets.end());

  AnalogConfig cfg;
  cfg.k = 12;
  AnalogConfig cfg2 = cfg;
  cfg2.k = 24;
  Vector q(2);
  q << 0.4, -0.3;
  const Vector a = analog_forecast_step(train, q, cfg);
  const Vector b = analog_forecast_step(doubled, q, cfg2);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AnalogForecast, TranslationConsistentOnAffineData) {
  const PairDataset train = affine_pairs(80, 9);
  Vector shift(2);
  shift << 5.0, -3.0;
  PairDataset shifted = train;
  for (auto& v : shifted.inputs) v += shift;

  AnalogConfig cfg;
  cfg.k = 10;
  cfg.ridge = 0.0;
  Vector q(2);
  q << 0.2, 0.1;
  const Vector a = analog_forecast_step(train, q, cfg);
  const Vector b = analog_forecast_step(shifted, q + shift, cfg);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AnalogForecast, KLargerThanDatasetThrows) {
  const PairDataset train = affine_pairs(5, 10);
  AnalogConfig cfg;
  cfg.k = 6;
  EXPECT_THROW(analog_forecast_step(train, train.inputs[0], cfg), std::invalid_argument);
}

TEST(MlpForward, ZeroWeightsTanhGiveZero) {
  MlpParams p;
  p.act = Activation::Tanh;
  p.W = {Matrix::Zero(4, 3), Matrix::Zero(3, 4)};
  p.b = {Vector::Zero(4), Vector::Zero(3)};
  EXPECT_EQ(mlp_forward(p, Vector::Ones(3)), Vector::Zero(3));
}

TEST(MlpForward, SingleLinearIdentityLayer) {
  MlpParams p;
  p.W = {Matrix::Identity(3, 3)};
  p.b = {Vector::Zero(3)};
  const Vector x = Vector::Random(3);
  EXPECT_EQ(mlp_forward(p, x), x);
}

TEST(MlpBackward, FiniteDifferenceOracle) {
  SeededRng rng(13);
  MlpParams mlp = init_mlp({3, 6, 6, 3}, Activation::Tanh, rng);
  PairDataset sample;
  sample.h = 0.01;
  for (int i = 0; i < 5; ++i) {
    Vector x(3), y(3);
    for (int k = 0; k < 3; ++k) {
      x[k] = rng.normal();
      y[k] = rng.normal();
    }
    sample.inputs.push_back(x);
    sample.targets.push_back(y);
  }
  EXPECT_LT(gradcheck_report(mlp, sample), 1e-5);

  MlpParams relu = init_mlp({3, 6, 6, 3}, Activation::Relu, rng);
  EXPECT_LT(gradcheck_report(relu, sample), 1e-5);
}

TEST(MlpSl4, ZeroMlpIsIdentity) {
  MlpParams p;
  p.W = {Matrix::Zero(4, 3), Matrix::Zero(3, 4)};
  p.b = {Vector::Zero(4), Vector::Zero(3)};
  const ResidualMlpModel m = make_mlp_sl4(p, 0.05);
  const Vector x = Vector::Random(3);
  EXPECT_EQ(residual_mlp_forward(m, x), x);
}

TEST(MlpSl4, EqualsRk4OnMlpField) {
  SeededRng rng(14);
  const ResidualMlpModel m = make_mlp_sl4(init_mlp({3, 6, 3}, Activation::Tanh, rng), 0.02);
  auto field = [&m](const Vector& v) { return mlp_forward(m.mlp, v); };
  for (int i = 0; i < 10; ++i) {
    Vector x(3);
    for (int k = 0; k < 3; ++k) x[k] = rng.normal();
    EXPECT_LT((residual_mlp_forward(m, x) - rk4_step(field, x, m.dt)).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(MlpSl4, GradcheckPasses) {
  SeededRng rng(15);
  ResidualMlpModel m = make_mlp_sl4(init_mlp({3, 6, 3}, Activation::Tanh, rng), 0.02);
  PairDataset sample;
  sample.h = 0.02;
  for (int i = 0; i < 5; ++i) {
    Vector x(3), y(3);
    for (int k = 0; k < 3; ++k) {
      x[k] = rng.normal();
      y[k] = x[k] + 0.02 * rng.normal();
    }
    sample.inputs.push_back(x);
    sample.targets.push_back(y);
  }
  EXPECT_LT(gradcheck_report(m, sample), 1e-5);
}

TEST(MlpSl4, DimensionMismatchThrows) {
  MlpParams p;
  p.W = {Matrix::Zero(4, 3), Matrix::Zero(2, 4)};  // 3 -> 2: not a field
  p.b = {Vector::Zero(4), Vector::Zero(2)};
  EXPECT_THROW(make_mlp_sl4(p, 0.05), std::invalid_argument);
}

}  // namespace
}  // namespace binn
