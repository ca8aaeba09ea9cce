// SPDX-License-Identifier: Apache-2.0
#include "entrgi/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "entrgi/errors.hpp"

namespace entrgi {

std::vector<double> softmax_temp(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) {
    throw InvalidParameterError("softmax_temp: tau must be positive, got " +
                                std::to_string(tau));
  }
  if (logits.empty()) {
    throw InvalidInputError("softmax_temp: empty logit vector");
  }
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) {
      throw InvalidInputError("softmax_temp: non-finite logit");
    }
    max_scaled = std::max(max_scaled, v / tau);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / tau - max_scaled);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double entropy(std::span<const double> q) {
  double h = 0.0;
  for (double p : q) {
    if (p > 0.0) h -= p * std::log(p);
  }
  // Guard against -0.0 and last-ulp negatives from near-deterministic q.
  return h < 0.0 ? 0.0 : h;
}

Matrix softmax_jacobian(std::span<const double> q, double tau) {
  if (!(tau > 0.0)) {
    throw InvalidParameterError("softmax_jacobian: tau must be positive");
  }
  const int k = static_cast<int>(q.size());
  Matrix jac(k, k);
  const double inv_tau = 1.0 / tau;
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      const double v = (r == c) ? q[r] * (1.0 - q[c]) : -q[r] * q[c];
      jac.at(r, c) = inv_tau * v;
    }
  }
  return jac;
}

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h) {
  if (!(h > 0.0)) {
    throw InvalidParameterError("finite_diff_grad: h must be positive");
  }
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double f_plus = f(point);
    point[i] = saved - h;
    const double f_minus = f(point);
    point[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      throw OracleFailureError(
          "finite_diff_grad: non-finite function value at coordinate " +
              std::to_string(i),
          static_cast<int>(i));
    }
    grad[i] = (f_plus - f_minus) / (2.0 * h);
  }
  return grad;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

double norm(std::span<const double> v) {
  return std::sqrt(dot(v, v));
}

}  // namespace entrgi
