#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "binn/dynamics.hpp"
#include "binn/trajectory_io.hpp"

namespace binn {
namespace {

Vector vec3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v;
}

TEST(Lorenz63Field, OriginIsFixedPoint) {
  EXPECT_EQ(lorenz63_field(Vector::Zero(3), 10, 28, 8.0 / 3.0), Vector::Zero(3));
}

TEST(Lorenz63Field, NontrivialFixedPoint) {
  const double r = std::sqrt(72.0);  // sqrt(beta*(rho-1))
  const Vector f = lorenz63_field(vec3(r, r, 27.0), 10, 28, 8.0 / 3.0);
  EXPECT_LT(f.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lorenz63Field, HandEvaluated) {
  const Vector f = lorenz63_field(vec3(1, 1, 1), 10, 28, 8.0 / 3.0);
  EXPECT_DOUBLE_EQ(f[0], 0.0);
  EXPECT_DOUBLE_EQ(f[1], 26.0);
  EXPECT_DOUBLE_EQ(f[2], 1.0 - 8.0 / 3.0);
}

TEST(Lorenz63Field, WrongDimThrows) {
  EXPECT_THROW(lorenz63_field(Vector::Zero(2), 10, 28, 8.0 / 3.0), std::invalid_argument);
}

TEST(OregonatorField, OriginIsFixedPoint) {
  EXPECT_EQ(oregonator_field(Vector::Zero(3), 77.27, 8.375e-6, 0.161), Vector::Zero(3));
}

TEST(OregonatorField, HandEvaluatedUnitX) {
  const Vector f = oregonator_field(vec3(1, 0, 0), 77.27, 8.375e-6, 0.161);
  EXPECT_NEAR(f[0], 77.27 * (1.0 - 8.375e-6), 1e-10);
  EXPECT_DOUBLE_EQ(f[1], 0.0);
  EXPECT_DOUBLE_EQ(f[2], 0.161);
}

TEST(OregonatorField, HandEvaluatedUnitYZ) {
  const Vector f = oregonator_field(vec3(0, 1, 1), 77.27, 8.375e-6, 0.161);
  EXPECT_DOUBLE_EQ(f[0], 77.27);
  EXPECT_DOUBLE_EQ(f[1], 0.0);
  EXPECT_DOUBLE_EQ(f[2], -0.161);
}

TEST(Lorenz96Field, UniformForcingStateIsFixedPoint) {
  const Vector x = Vector::Constant(40, 9.0);
  EXPECT_LT(lorenz96_field(x, 9.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lorenz96Field, ZeroStateGivesForcing) {
  const Vector f = lorenz96_field(Vector::Zero(40), 9.0);
  EXPECT_EQ(f, Vector::Constant(40, 9.0));
}

TEST(Lorenz96Field, UnitVectorWraparound) {
  Vector x = Vector::Zero(40);
  x[0] = 1.0;
  const Vector f = lorenz96_field(x, 0.0);
  EXPECT_DOUBLE_EQ(f[0], -1.0);
  for (int i = 1; i < 40; ++i) EXPECT_DOUBLE_EQ(f[i], 0.0) << "component " << i;
}

TEST(Lorenz96Field, CommutesWithCyclicShift) {
  SeededRng rng(3);
  Vector x(40);
  for (int i = 0; i < 40; ++i) x[i] = rng.normal();
  const Vector fx = lorenz96_field(x, 9.0);
  Vector shifted(40);
  for (int i = 0; i < 40; ++i) shifted[(i + 1) % 40] = x[i];
  const Vector f_shifted = lorenz96_field(shifted, 9.0);
  for (int i = 0; i < 40; ++i) {
    EXPECT_NEAR(f_shifted[(i + 1) % 40], fx[i], 1e-14);
  }
}

TEST(EulerStep, ZeroFieldKeepsState) {
  auto zero = [](const Vector& x) { return Vector::Zero(x.size()); };
  const Vector x = vec3(1, 2, 3);
  EXPECT_EQ(euler_step(zero, x, 0.1), x);
}

TEST(EulerStep, LinearDecayArithmetic) {
  auto decay = [](const Vector& x) { return Vector(-x); };
  Vector x(1);
  x << 1.0;
  EXPECT_DOUBLE_EQ(euler_step(decay, x, 0.1)[0], 0.9);
}

TEST(EulerStep, FixedPointStays) {
  auto field = [](const Vector& x) { return lorenz63_field(x, 10, 28, 8.0 / 3.0); };
  EXPECT_EQ(euler_step(field, Vector::Zero(3), 0.01), Vector::Zero(3));
}

TEST(Rk4Step, ZeroFieldKeepsState) {
  auto zero = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
  const Vector x = vec3(1, 2, 3);
  EXPECT_EQ(rk4_step(zero, x, 0.1), x);
}

TEST(Rk4Step, LinearDecayMatchesTaylorFactor) {
  auto decay = [](const Vector& x) { return Vector(-x); };
  Vector x(1);
  x << 1.0;
  // 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.1
  EXPECT_NEAR(rk4_step(decay, x, 0.1)[0], 0.9048375, 1e-15);
}

TEST(Rk4Step, FixedPointStays) {
  auto field = [](const Vector& x) { return lorenz63_field(x, 10, 28, 8.0 / 3.0); };
  const double r = std::sqrt(72.0);
  const Vector x = vec3(r, r, 27.0);
  EXPECT_LT((rk4_step(field, x, 0.01) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(IntegrateFixed, SingleStepMatchesRk4Step) {
  auto field = [](const Vector& x) { return lorenz63_field(x, 10, 28, 8.0 / 3.0); };
  const Vector x0 = vec3(1, 2, 3);
  const Trajectory traj = integrate_fixed(field, x0, 0.01, 1, Scheme::Rk4);
  ASSERT_EQ(traj.size(), 2u);
  EXPECT_EQ(traj.states[1], rk4_step(field, x0, 0.01));
}

TEST(IntegrateFixed, ZeroFieldConstantTrajectory) {
  auto zero = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
  const Trajectory traj = integrate_fixed(zero, vec3(1, 2, 3), 0.1, 100);
  ASSERT_EQ(traj.size(), 101u);
  for (const Vector& s : traj.states) EXPECT_EQ(s, vec3(1, 2, 3));
}

TEST(IntegrateFixed, DecayPowersOneStepFactor) {
  auto decay = [](const Vector& x) { return Vector(-x); };
  Vector x0(1);
  x0 << 1.0;
  const Trajectory traj = integrate_fixed(decay, x0, 0.1, 10);
  EXPECT_NEAR(traj.states.back()[0], std::pow(0.9048375, 10), 1e-12);
}

TEST(IntegrateFixed, DivergenceNamesStep) {
  auto blowup = [](const Vector& x) { return Vector(x * 1e6); };
  Vector x0(1);
  x0 << 1.0;
  try {
    integrate_fixed(blowup, x0, 1.0, 100, Scheme::Euler);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 1u);
    EXPECT_NE(std::string(e.what()).find(std::to_string(e.step())), std::string::npos);
  }
}

TEST(IntegrateAdaptive, MatchesClosedFormDecay) {
  auto decay = [](const Vector& x) { return Vector(-x); };
  Vector x0(1);
  x0 << 1.0;
  AdaptiveConfig cfg;
  cfg.rel_tol = 1e-8;
  cfg.abs_tol = 1e-12;
  const Trajectory traj = integrate_adaptive(decay, x0, 0.0, 5.0, 0.25, cfg);
  ASSERT_EQ(traj.size(), 21u);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    EXPECT_NEAR(traj.states[k][0], std::exp(-traj.time_at(k)), 10 * cfg.rel_tol);
  }
}

TEST(IntegrateAdaptive, ZeroFieldConstant) {
  auto zero = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
  const Trajectory traj = integrate_adaptive(zero, vec3(4, 5, 6), 0.0, 1.0, 0.1);
  ASSERT_EQ(traj.size(), 11u);
  for (const Vector& s : traj.states) EXPECT_EQ(s, vec3(4, 5, 6));
}

TEST(IntegrateAdaptive, SelfConvergenceOnLorenz63) {
  auto field = [](const Vector& x) { return lorenz63_field(x, 10, 28, 8.0 / 3.0); };
  const Vector x0 = vec3(1.0, 1.0, 1.0);
  AdaptiveConfig loose, tight;
  loose.rel_tol = 1e-8;
  loose.abs_tol = 1e-10;
  tight.rel_tol = 1e-10;
  tight.abs_tol = 1e-12;
  const Trajectory a = integrate_adaptive(field, x0, 0.0, 1.0, 0.01, loose);
  const Trajectory b = integrate_adaptive(field, x0, 0.0, 1.0, 0.01, tight);
  ASSERT_EQ(a.size(), b.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    worst = std::max(worst, (a.states[k] - b.states[k]).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(IntegrateAdaptive, StepUnderflowReportsTimeReached) {
  // error estimate never settles for a wildly oscillatory field, so the
  // controller shrinks the step into the underflow guard
  auto noisy = [](const Vector& x) {
    Vector f(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) f[i] = 1e8 * std::sin(1e8 * x.sum() + i);
    return f;
  };
  Vector x0(2);
  x0 << 0.3, 0.7;
  try {
    integrate_adaptive(noisy, x0, 0.0, 1.0, 0.1);
    FAIL() << "expected stiff failure";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("underflow"), std::string::npos);
    EXPECT_NE(msg.find("t="), std::string::npos);
  }
}

TEST(IntegrateAdaptive, OregonatorLimitCycleStaysPositiveAndBounded) {
  const OdeSystem sys = OdeSystem::oregonator();
  auto field = [&sys](const Vector& x) { return sys.field(x); };
  const Trajectory traj = integrate_adaptive(field, sys.default_initial_state(), 0.0, 400.0, 0.1);
  ASSERT_EQ(traj.size(), 4001u);
  double peak = 0.0;
  for (const Vector& s : traj.states) {
    EXPECT_TRUE(all_finite(s));
    peak = std::max(peak, s.cwiseAbs().maxCoeff());
  }
  // the relaxation oscillation reaches ~1e5 in the first component
  EXPECT_GT(peak, 1e4);
  EXPECT_LT(peak, 1e7);
}

double order_slope(Scheme scheme) {
  // global error over a fixed span T, halving dt: slope = convergence order
  auto field = [](const Vector& x) { return lorenz63_field(x, 10, 28, 8.0 / 3.0); };
  const Vector x0 = vec3(3.0, -4.0, 15.0);  // generic point off the fixed points
  const double span = 0.2;
  AdaptiveConfig tight;
  tight.rel_tol = 1e-12;
  tight.abs_tol = 1e-14;
  const Vector ref = integrate_adaptive(field, x0, 0.0, span, span, tight).states.back();
  std::vector<double> log_dt, log_err;
  for (double dt : {0.02, 0.01, 0.005, 0.0025}) {
    const auto n_steps = static_cast<std::size_t>(std::llround(span / dt));
    const Vector approx = integrate_fixed(field, x0, dt, n_steps, scheme).states.back();
    log_dt.push_back(std::log(dt));
    log_err.push_back(std::log((approx - ref).norm()));
  }
  const auto n = static_cast<double>(log_dt.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < log_dt.size(); ++i) {
    sx += log_dt[i];
    sy += log_err[i];
    sxx += log_dt[i] * log_dt[i];
    sxy += log_dt[i] * log_err[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

TEST(IntegratorOrder, Rk4SlopeNearFour) {
  const double slope = order_slope(Scheme::Rk4);
  EXPECT_GT(slope, 3.7);
  EXPECT_LT(slope, 4.3);
}

TEST(IntegratorOrder, EulerSlopeNearOne) {
  const double slope = order_slope(Scheme::Euler);
  EXPECT_GT(slope, 0.8);
  EXPECT_LT(slope, 1.2);
}

TEST(GenerateDataset, HonorsRequestedLengths) {
  const Dataset ds = generate_dataset(OdeSystem::lorenz63(), 500, 100, 0.01, 50, 42);
  EXPECT_EQ(ds.train.size(), 500u);
  EXPECT_EQ(ds.test.size(), 100u);
  // disjoint in time: test starts one step after the last train state
  EXPECT_NEAR(ds.test.t0, ds.train.t0 + 500 * 0.01, 1e-9);
}

TEST(GenerateDataset, SameSeedBitIdentical) {
  const Dataset a = generate_dataset(OdeSystem::lorenz63(), 200, 50, 0.01, 20, 7);
  const Dataset b = generate_dataset(OdeSystem::lorenz63(), 200, 50, 0.01, 20, 7);
  for (std::size_t k = 0; k < a.train.size(); ++k) {
    EXPECT_EQ(a.train.states[k], b.train.states[k]);
  }
  for (std::size_t k = 0; k < a.test.size(); ++k) {
    EXPECT_EQ(a.test.states[k], b.test.states[k]);
  }
}

TEST(GenerateDataset, Lorenz63AttractorOccupied) {
  const Dataset ds = generate_dataset(OdeSystem::lorenz63(), 20000, 10, 0.01, 1000, 1);
  Vector mean = Vector::Zero(3);
  for (const Vector& s : ds.train.states) mean += s;
  mean /= static_cast<double>(ds.train.size());
  Vector var = Vector::Zero(3);
  for (const Vector& s : ds.train.states) var.array() += (s - mean).array().square();
  var /= static_cast<double>(ds.train.size());
  const double r = std::sqrt(72.0);
  for (int i = 0; i < 3; ++i) {
    const double stdev = std::sqrt(var[i]);
    EXPECT_GT(stdev, 0.3 * r) << "dimension " << i;
    EXPECT_LT(stdev, 3.0 * r) << "dimension " << i;
  }
}

TEST(TrajectoryCsv, RoundTripsBitExactly) {
  const Dataset ds = generate_dataset(OdeSystem::lorenz63(), 50, 10, 0.01, 10, 3);
  const std::string path = (std::filesystem::temp_directory_path() / "binn_traj_test.csv").string();
  write_trajectory_csv(ds.train, path);
  const Trajectory back = read_trajectory_csv(path);
  ASSERT_EQ(back.size(), ds.train.size());
  EXPECT_EQ(back.dim(), ds.train.dim());
  EXPECT_DOUBLE_EQ(back.h, ds.train.h);
  for (std::size_t k = 0; k < back.size(); ++k) {
    EXPECT_EQ(back.states[k], ds.train.states[k]) << "row " << k;
  }
  std::filesystem::remove(path);
}

TEST(TrajectoryCsv, HeaderFormat) {
  Trajectory traj;
  traj.h = 0.5;
  traj.states = {vec3(1, 2, 3)};
  const std::string path = (std::filesystem::temp_directory_path() / "binn_hdr_test.csv").string();
  write_trajectory_csv(traj, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,x0,x1,x2");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace binn
