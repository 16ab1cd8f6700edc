#pragma once

#include "hypercircle/estimators.hpp"

#include <cmath>
#include <string>

namespace hypercircle::harness {

/// Manufactured solution on the unit interval or unit square.
/// dimension 0 marks entries valid in both (the zero solution).
struct CatalogEntry {
  std::string name;
  int dimension = 0;
  std::string formula;
  ExactSolution<1> exact1;
  ExactSolution<2> exact2;

  bool supports(int dim) const { return dimension == 0 || dimension == dim; }

  template <int Dim>
  const ExactSolution<Dim>& exact() const {
    if (!supports(Dim))
      throw std::invalid_argument("catalog entry '" + name + "' is not defined in dimension " +
                                  std::to_string(Dim));
    if constexpr (Dim == 1) return exact1;
    else return exact2;
  }
};

namespace detail {

using P1 = Eigen::Matrix<double, 1, 1>;
using P2 = Eigen::Vector2d;

inline CatalogEntry sin1d_decay() {
  CatalogEntry e{"sin1d_decay", 1, "u = sin(pi x) exp(-t)", {}, {}};
  auto& s = e.exact1;
  s.u = [](const P1& x, double t) { return std::sin(M_PI * x[0]) * std::exp(-t); };
  s.grad_u = [](const P1& x, double t) -> P1 {
    return P1(M_PI * std::cos(M_PI * x[0]) * std::exp(-t));
  };
  s.f = [](const P1& x, double t) {
    return (M_PI * M_PI - 1.0) * std::sin(M_PI * x[0]) * std::exp(-t);
  };
  s.laplacian = [](const P1& x, double t) {
    return -M_PI * M_PI * std::sin(M_PI * x[0]) * std::exp(-t);
  };
  return e;
}

inline CatalogEntry sin2d_decay() {
  CatalogEntry e{"sin2d_decay", 2, "u = sin(pi x) sin(pi y) exp(-t)", {}, {}};
  auto& s = e.exact2;
  s.u = [](const P2& x, double t) {
    return std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) * std::exp(-t);
  };
  s.grad_u = [](const P2& x, double t) -> P2 {
    const double d = std::exp(-t);
    return P2(M_PI * std::cos(M_PI * x[0]) * std::sin(M_PI * x[1]) * d,
              M_PI * std::sin(M_PI * x[0]) * std::cos(M_PI * x[1]) * d);
  };
  s.f = [](const P2& x, double t) {
    return (2.0 * M_PI * M_PI - 1.0) * std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) *
           std::exp(-t);
  };
  s.laplacian = [](const P2& x, double t) {
    return -2.0 * M_PI * M_PI * std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) * std::exp(-t);
  };
  return e;
}

inline CatalogEntry poly1d() {
  CatalogEntry e{"poly1d", 1, "u = x (1 - x) (1 + t)", {}, {}};
  auto& s = e.exact1;
  s.u = [](const P1& x, double t) { return x[0] * (1.0 - x[0]) * (1.0 + t); };
  s.grad_u = [](const P1& x, double t) -> P1 { return P1((1.0 - 2.0 * x[0]) * (1.0 + t)); };
  s.f = [](const P1& x, double t) { return x[0] * (1.0 - x[0]) + 2.0 * (1.0 + t); };
  s.laplacian = [](const P1&, double t) { return -2.0 * (1.0 + t); };
  return e;
}

template <int Dim>
ExactSolution<Dim> zero_solution() {
  using P = Eigen::Matrix<double, Dim, 1>;
  ExactSolution<Dim> s;
  s.u = [](const P&, double) { return 0.0; };
  s.grad_u = [](const P&, double) -> P { return P::Zero(); };
  s.f = [](const P&, double) { return 0.0; };
  s.laplacian = [](const P&, double) { return 0.0; };
  return s;
}

}  // namespace detail

inline const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> entries = [] {
    std::vector<CatalogEntry> v;
    v.push_back(detail::sin1d_decay());
    v.push_back(detail::sin2d_decay());
    v.push_back(detail::poly1d());
    v.push_back({"zero", 0, "u = 0", detail::zero_solution<1>(), detail::zero_solution<2>()});
    return v;
  }();
  return entries;
}

inline std::string catalog_names() {
  std::string out;
  for (const auto& e : catalog()) out += (out.empty() ? "" : ", ") + e.name;
  return out;
}

inline const CatalogEntry& lookup(const std::string& name) {
  for (const auto& e : catalog())
    if (e.name == name) return e;
  throw std::out_of_range("unknown catalog entry '" + name + "' (available: " + catalog_names() +
                          ")");
}

}  // namespace hypercircle::harness
