#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "contex/contrast_core.hpp"

namespace contex {

/// max_k |a_k - n_k| / max(|a|_inf, |n|_inf). Zero when both are zero.
double max_relative_error(const Matrix& analytic, const Matrix& numeric);

/// Central differences of f at x, one coordinate at a time.
Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                          double step);

struct RandomContrastBatch {
  Matrix z;  // unit-norm rows
  std::vector<int> labels;
  std::vector<int> pairs;  // adjacent views: 2k <-> 2k + 1
};

/// `originals` source images with labels drawn from `classes`, two views each,
/// Gaussian directions normalized onto the sphere.
RandomContrastBatch random_contrast_batch(int originals, int dim, int classes, std::mt19937_64& rng);

struct KernelCheck {
  std::string kernel;
  double max_rel_error = 0.0;
  int trials = 0;
};

inline constexpr double kGradientStep = 1e-5;

/// Analytic gradients of every loss kernel against central differences on
/// seeded random batches, cycling 2N over {4, 8, 16, 32} and D over {4, 8, 16}.
std::vector<KernelCheck> gradient_suite(int trials, std::uint64_t seed, double tau = 0.1);

struct BoundsTrial {
  int trial = 0;
  double parta_bound = 0.0;
  double ntxent_bound = 0.0;
  bool holds = false;
};

/// compare_bounds on random batches with more originals than classes, so some
/// class always contributes several context positives.
std::vector<BoundsTrial> bounds_suite(int trials, std::uint64_t seed, double tau = 0.1);

}  // namespace contex
