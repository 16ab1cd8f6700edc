#pragma once

#include "hypercircle/common.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace hypercircle {

/// Gauss-Legendre nodes and weights on [0, 1] (n points, exact to degree 2n-1).
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussLegendre(int n) : nodes(n), weights(n) {
    if (n < 1) throw std::invalid_argument("GaussLegendre: need at least one point");
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p1 = 1.0, p2 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
        }
        dp = n * (z * p1 - p2) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      const double w = 2.0 / ((1.0 - z * z) * dp * dp);
      nodes[i] = 0.5 * (1.0 - z);
      nodes[n - 1 - i] = 0.5 * (1.0 + z);
      weights[i] = weights[n - 1 - i] = 0.5 * w;
    }
  }

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Quadrature on the reference simplex, points in barycentric coordinates.
/// Weights sum to the reference measure (1 for the interval, 1/2 for the triangle).
template <int Dim>
struct QuadratureRule {
  using Barycentric = Eigen::Matrix<double, Dim + 1, 1>;

  std::vector<Barycentric> points;
  std::vector<double> weights;
  int exactness_degree = 0;

  int size() const { return static_cast<int>(points.size()); }
};

/// Rule exact for all polynomials of total degree <= `degree`.
/// Triangles use the collapsed (Duffy) product of Gauss-Legendre rules,
/// which keeps every weight positive.
template <int Dim>
QuadratureRule<Dim> simplex_rule(int degree) {
  static_assert(Dim == 1 || Dim == 2, "simplex_rule: 1D and 2D only");
  if (degree < 0) throw std::invalid_argument("simplex_rule: negative degree");
  QuadratureRule<Dim> rule;
  rule.exactness_degree = degree;
  if constexpr (Dim == 1) {
    const GaussLegendre gl(degree / 2 + 1);
    for (int i = 0; i < gl.size(); ++i) {
      rule.points.emplace_back(1.0 - gl.nodes[i], gl.nodes[i]);
      rule.weights.push_back(gl.weights[i]);
    }
  } else {
    // The Jacobian (1 - xi) raises the degree in xi by one.
    const GaussLegendre gx((degree + 2) / 2 + 1);
    const GaussLegendre gy(degree / 2 + 1);
    for (int i = 0; i < gx.size(); ++i) {
      for (int j = 0; j < gy.size(); ++j) {
        const double x = gx.nodes[i];
        const double y = gy.nodes[j] * (1.0 - x);
        rule.points.emplace_back(1.0 - x - y, x, y);
        rule.weights.push_back(gx.weights[i] * gy.weights[j] * (1.0 - x));
      }
    }
  }
  return rule;
}

/// Default spatial exactness: 2 * flux_degree + 2 with flux_degree = 2.
inline constexpr int kDefaultQuadratureDegree = 6;

}  // namespace hypercircle
