#pragma once

// Slow, literal reference computations. Nothing here calls into the library's
// estimators; each oracle is written straight from the definition.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <vector>

#include "cmr/model.hpp"

namespace oracle {

using cmr::Index;
using cmr::Matrix;
using cmr::Vector;

// (1 / I T^2) sum_i sum_t sum_t' y_it y_it' X_it X_it'^T
inline Matrix a_hat_double_sum(const cmr::TaskDataset& d) {
  Matrix a = Matrix::Zero(d.bands(), d.bands());
  for (Index i = 0; i < d.tasks(); ++i)
    for (Index t = 0; t < d.samples(); ++t)
      for (Index u = 0; u < d.samples(); ++u) {
        const Matrix xt = d.x(i, t);
        const Matrix xu = d.x(i, u);
        for (Index b = 0; b < d.bands(); ++b)
          for (Index c = 0; c < d.bands(); ++c) {
            double s = 0;
            for (Index p = 0; p < d.positions(); ++p) s += xt(b, p) * xu(c, p);
            a(b, c) += d.y(i, t) * d.y(i, u) * s;
          }
      }
  const double n = static_cast<double>(d.tasks()) * d.samples() * d.samples();
  return a / n;
}

inline Matrix gamma_hat_sum(const cmr::TaskDataset& d) {
  Matrix g = Matrix::Zero(d.bands(), d.bands());
  for (Index i = 0; i < d.tasks(); ++i)
    for (Index t = 0; t < d.samples(); ++t)
      for (Index b = 0; b < d.bands(); ++b)
        for (Index c = 0; c < d.bands(); ++c)
          for (Index p = 0; p < d.positions(); ++p) g(b, c) += d.x(i, t)(b, p) * d.x(i, t)(c, p);
  return g / (static_cast<double>(d.tasks()) * d.samples() * d.positions());
}

// y = sum_{b,p,r} W_br X_bp V_pr
inline double response_triple_loop(const Matrix& w, const Matrix& x, const Matrix& v) {
  double y = 0;
  for (Index b = 0; b < w.rows(); ++b)
    for (Index p = 0; p < v.rows(); ++p)
      for (Index r = 0; r < w.cols(); ++r) y += w(b, r) * x(b, p) * v(p, r);
  return y;
}

// E[A_hat] from Gaussian fourth moments (Isserlis), with the design covariance
// written out entrywise: cov(X_bp, X_cq) = Gamma_bc Delta_pq. For y = <X, M>
// with M = W V^T:
//   E[y X]          = S m
//   E[y^2 X_bp X_cq] = (m^T S m) S_(bp)(cq) + 2 (S m)_bp (S m)_cq
inline Matrix expected_a_isserlis(const cmr::CmrModel& model, const cmr::TaskCovariances& cov, Index samples) {
  const Index b = model.bands(), p = model.positions(), n = b * p;
  const Matrix& g = cov.gamma.matrix();
  Matrix a = Matrix::Zero(b, b);
  for (Index i = 0; i < model.tasks(); ++i) {
    const Matrix& d = cov.deltas[static_cast<std::size_t>(i)].matrix();
    Matrix s(n, n);
    auto idx = [b](Index bb, Index pp) { return bb + b * pp; };
    for (Index b1 = 0; b1 < b; ++b1)
      for (Index p1 = 0; p1 < p; ++p1)
        for (Index b2 = 0; b2 < b; ++b2)
          for (Index p2 = 0; p2 < p; ++p2) s(idx(b1, p1), idx(b2, p2)) = g(b1, b2) * d(p1, p2);
    const Matrix mm = model.w * model.v[static_cast<std::size_t>(i)].transpose();
    const Vector m = Eigen::Map<const Vector>(mm.data(), n);
    const Vector sm = s * m;
    const double msm = m.dot(sm);
    Matrix same = Matrix::Zero(b, b), cross = Matrix::Zero(b, b);
    for (Index b1 = 0; b1 < b; ++b1)
      for (Index b2 = 0; b2 < b; ++b2)
        for (Index pp = 0; pp < p; ++pp) {
          same(b1, b2) += msm * s(idx(b1, pp), idx(b2, pp)) + 2 * sm(idx(b1, pp)) * sm(idx(b2, pp));
          cross(b1, b2) += sm(idx(b1, pp)) * sm(idx(b2, pp));
        }
    const double t = static_cast<double>(samples);
    a += (t * same + t * (t - 1) * cross) / (t * t);
  }
  return a / static_cast<double>(model.tasks());
}

// Ridge by explicit normal equations: (F^T F + ridge I)^{-1} F^T y.
inline Vector normal_equations(const Matrix& f, const Vector& y, double ridge) {
  Matrix g = f.transpose() * f;
  g.diagonal().array() += ridge;
  return g.fullPivLu().solve(f.transpose() * y);
}

// Design rows of fit_local: row t = vec(X_t^T W) (P x R, column-major).
inline Matrix local_design(const cmr::TaskDataset& d, Index task, const Matrix& w) {
  const Index p = d.positions(), r = w.cols();
  Matrix f(d.samples(), p * r);
  for (Index t = 0; t < d.samples(); ++t) {
    for (Index rr = 0; rr < r; ++rr)
      for (Index pp = 0; pp < p; ++pp) {
        double s = 0;
        for (Index bb = 0; bb < d.bands(); ++bb) s += d.x(task, t)(bb, pp) * w(bb, rr);
        f(t, pp + p * rr) = s;
      }
  }
  return f;
}

// sin of the largest principal angle via the singular values of Qu^T Qv
// (Bjorck-Golub). Equal column counts only.
inline double principal_angle_sine(const Matrix& u, const Matrix& v) {
  const Matrix qu = Eigen::HouseholderQR<Matrix>(u).householderQ() * Matrix::Identity(u.rows(), u.cols());
  const Matrix qv = Eigen::HouseholderQR<Matrix>(v).householderQ() * Matrix::Identity(v.rows(), v.cols());
  const Vector s = Eigen::JacobiSVD<Matrix>(qu.transpose() * qv).singularValues();
  const double c = std::min(1.0, s.minCoeff());
  return std::sqrt(std::max(0.0, 1.0 - c * c));
}

}  // namespace oracle
