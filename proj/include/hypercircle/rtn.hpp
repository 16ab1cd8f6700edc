#pragma once

#include "hypercircle/mesh.hpp"
#include "hypercircle/quadrature.hpp"

#include <Eigen/LU>

namespace hypercircle {

/// Exponent tuples of all monomials of total degree <= degree, by increasing degree.
template <int Dim>
std::vector<std::array<int, Dim>> monomial_exponents(int degree) {
  std::vector<std::array<int, Dim>> out;
  for (int total = 0; total <= degree; ++total) {
    if constexpr (Dim == 1) {
      out.push_back({total});
    } else {
      for (int i = total; i >= 0; --i) out.push_back({i, total - i});
    }
  }
  return out;
}

template <int Dim>
std::vector<std::array<int, Dim>> homogeneous_exponents(int degree) {
  std::vector<std::array<int, Dim>> out;
  for (const auto& e : monomial_exponents<Dim>(degree)) {
    int total = 0;
    for (int v : e) total += v;
    if (total == degree) out.push_back(e);
  }
  return out;
}

/// Dimension of P_k in Dim variables.
constexpr int polynomial_dimension(int dim, int degree) {
  return dim == 1 ? degree + 1 : (degree + 1) * (degree + 2) / 2;
}

namespace detail {

inline double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

template <int Dim>
double monomial(const Eigen::Matrix<double, Dim, 1>& xs, const std::array<int, Dim>& e) {
  double r = 1.0;
  for (int k = 0; k < Dim; ++k) r *= ipow(xs[k], e[k]);
  return r;
}

/// Shifted Legendre polynomials on [0, 1], P_0 .. P_n.
inline Eigen::VectorXd legendre01(int n, double s) {
  Eigen::VectorXd p(n + 1);
  const double z = 2.0 * s - 1.0;
  p[0] = 1.0;
  if (n >= 1) p[1] = z;
  for (int j = 2; j <= n; ++j) p[j] = ((2.0 * j - 1.0) * z * p[j - 1] - (j - 1.0) * p[j - 2]) / j;
  return p;
}

}  // namespace detail

/// Monomials in the scaled coordinate (x - centroid) / diameter of one cell.
template <int Dim>
class ScaledMonomialBasis {
public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  ScaledMonomialBasis(const CellGeometry<Dim>& g, int degree)
      : center_(g.centroid), scale_(g.diameter), exps_(monomial_exponents<Dim>(degree)) {}

  int size() const { return static_cast<int>(exps_.size()); }

  Eigen::VectorXd values(const Point& x) const {
    const Point xs = (x - center_) / scale_;
    Eigen::VectorXd v(size());
    for (int i = 0; i < size(); ++i) v[i] = detail::monomial<Dim>(xs, exps_[i]);
    return v;
  }

private:
  Point center_;
  double scale_;
  std::vector<std::array<int, Dim>> exps_;
};

/// Raviart-Thomas-Nedelec space RTN_k(K) = P_k(K)^d + x P_k(K) on one cell,
/// with a moment basis:
///   - face dofs: moments of v.n against Legendre polynomials P_0..P_k on each
///     face (in 1D the point value), with the normal and the face parameter
///     fixed by ascending global vertex ids so that neighbours agree;
///   - interior dofs: averages of v against (P_{k-1})^d.
/// Local face i is opposite local vertex i; face dofs come first, face by face.
template <int Dim>
class RtnCellBasis {
public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  RtnCellBasis(const Mesh<Dim>& mesh, Index cell, int degree)
      : degree_(degree), geometry_(mesh.geometry(cell)) {
    if (degree < 0) throw std::invalid_argument("RtnCellBasis: negative degree");
    center_ = geometry_.centroid;
    scale_ = geometry_.diameter;
    full_ = monomial_exponents<Dim>(degree);
    top_ = homogeneous_exponents<Dim>(degree);
    const int n = raw_size();

    // Face frames.
    for (int i = 0; i <= Dim; ++i) {
      const auto& f = mesh.face(mesh.cell_face(cell, i));
      face_origin_[i] = mesh.vertex(f[0]);
      if constexpr (Dim == 1) {
        face_normal_[i] = Point::Ones();
      } else {
        face_tangent_[i] = mesh.vertex(f[1]) - mesh.vertex(f[0]);
        face_normal_[i] = Point(face_tangent_[i].y(), -face_tangent_[i].x()).normalized();
      }
    }

    // dofs applied to the raw basis
    Eigen::MatrixXd D(n, n);
    const int per_face = face_dofs_per_face();
    if constexpr (Dim == 1) {
      for (int i = 0; i <= Dim; ++i) D.row(i) = raw_values(face_origin_[i]).row(0);
    } else {
      const GaussLegendre gl(degree + 2);
      for (int i = 0; i <= Dim; ++i) {
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(per_face, n);
        for (int q = 0; q < gl.size(); ++q) {
          const Point x = face_origin_[i] + gl.nodes[q] * face_tangent_[i];
          const Eigen::RowVectorXd vn = face_normal_[i].transpose() * raw_values(x);
          const Eigen::VectorXd leg = detail::legendre01(degree, gl.nodes[q]);
          block += gl.weights[q] * leg * vn;
        }
        D.middleRows(i * per_face, per_face) = block;
      }
    }
    if (degree >= 1) {
      const auto inner = monomial_exponents<Dim>(degree - 1);
      const auto rule = simplex_rule<Dim>(2 * degree);
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(Dim * static_cast<int>(inner.size()), n);
      for (int q = 0; q < rule.size(); ++q) {
        const Point x = geometry_.map(rule.points[q]);
        const Point xs = (x - center_) / scale_;
        const auto raw = raw_values(x);
        const double w = rule.weights[q] * (Dim == 1 ? 1.0 : 2.0);  // divided by |K|
        int row = 0;
        for (const auto& e : inner) {
          const double m = detail::monomial<Dim>(xs, e);
          for (int comp = 0; comp < Dim; ++comp) block.row(row++) += w * m * raw.row(comp);
        }
      }
      D.bottomRows(block.rows()) = block;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(D);
    if (!lu.isInvertible()) throw IntegrityFailure("RtnCellBasis: unisolvence failed");
    coeff_ = lu.inverse();
  }

  int degree() const { return degree_; }
  int face_dofs_per_face() const { return Dim == 1 ? 1 : degree_ + 1; }
  int n_face_dofs() const { return (Dim + 1) * face_dofs_per_face(); }
  int size() const { return raw_size(); }
  const CellGeometry<Dim>& geometry() const { return geometry_; }
  /// Unit normal of local face i in the global orientation.
  const Point& face_normal(int i) const { return face_normal_[i]; }

  /// Column j is basis function j at x.
  Eigen::Matrix<double, Dim, Eigen::Dynamic> values(const Point& x) const {
    return raw_values(x) * coeff_;
  }

  Eigen::RowVectorXd divergence(const Point& x) const { return raw_divergence(x) * coeff_; }

private:
  int raw_size() const { return Dim * static_cast<int>(full_.size()) + static_cast<int>(top_.size()); }

  Eigen::Matrix<double, Dim, Eigen::Dynamic> raw_values(const Point& x) const {
    const Point xs = (x - center_) / scale_;
    Eigen::Matrix<double, Dim, Eigen::Dynamic> v =
        Eigen::Matrix<double, Dim, Eigen::Dynamic>::Zero(Dim, raw_size());
    int col = 0;
    for (const auto& e : full_) {
      const double m = detail::monomial<Dim>(xs, e);
      for (int comp = 0; comp < Dim; ++comp) v(comp, col++) = m;
    }
    for (const auto& e : top_) v.col(col++) = xs * detail::monomial<Dim>(xs, e);
    return v;
  }

  Eigen::RowVectorXd raw_divergence(const Point& x) const {
    const Point xs = (x - center_) / scale_;
    Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(raw_size());
    int col = 0;
    for (const auto& e : full_) {
      for (int comp = 0; comp < Dim; ++comp) {
        if (e[comp] > 0) {
          auto lowered = e;
          --lowered[comp];
          d[col] = e[comp] * detail::monomial<Dim>(xs, lowered) / scale_;
        }
        ++col;
      }
    }
    // div(xs * m) = (d + deg m) m / scale for homogeneous m
    for (const auto& e : top_) d[col++] = (Dim + degree_) * detail::monomial<Dim>(xs, e) / scale_;
    return d;
  }

  int degree_;
  CellGeometry<Dim> geometry_;
  Point center_;
  double scale_ = 1.0;
  std::vector<std::array<int, Dim>> full_, top_;
  std::array<Point, Dim + 1> face_origin_, face_tangent_, face_normal_;
  Eigen::MatrixXd coeff_;
};

}  // namespace hypercircle
