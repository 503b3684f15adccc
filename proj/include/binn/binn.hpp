#pragma once

// Umbrella header for the binn library: bilinear residual networks with a
// Runge-Kutta-shaped graph for learning, forecasting and identifying ODE
// dynamics from state time series, plus the reference systems and the
// sparse-regression / analog-forecasting / MLP baselines they are compared
// against.

#include "binn/numerics.hpp"
#include "binn/rng.hpp"
#include "binn/dynamics.hpp"
#include "binn/trajectory_io.hpp"
#include "binn/bilinear.hpp"
#include "binn/mlp.hpp"
#include "binn/training.hpp"
#include "binn/sparse_regression.hpp"
#include "binn/analog.hpp"
#include "binn/latent.hpp"
#include "binn/evaluation.hpp"
#include "binn/checkpoint.hpp"
