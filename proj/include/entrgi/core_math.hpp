// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace entrgi {

/// Dense row-major matrix, just large enough for K x K Jacobians.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// softmax(logits / tau) with max-subtraction so small temperatures do not
/// overflow. Throws InvalidParameterError for tau <= 0 and InvalidInputError
/// for non-finite logits.
std::vector<double> softmax_temp(std::span<const double> logits, double tau);

/// Shannon entropy -sum q_i ln q_i in nats, with 0 ln 0 := 0. All entropy in
/// this project uses the natural log; the H / ln K weight it feeds is
/// base-invariant, so only consistency matters.
double entropy(std::span<const double> q);

/// (1/tau) * (diag(q) - q q^T): the Jacobian of softmax_temp at the point
/// with probabilities q. Symmetric; every row and column sums to zero.
Matrix softmax_jacobian(std::span<const double> q, double tau);

/// Central-difference gradient oracle: (f(x + h e_i) - f(x - h e_i)) / 2h.
/// Throws OracleFailureError (carrying the coordinate) if f returns a
/// non-finite value. h defaults to 1e-4, balanced for unit-scale inputs.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h = 1e-4);

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

}  // namespace entrgi
