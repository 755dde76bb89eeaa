#pragma once

// Independent reference computations used by the unit tests and the
// acceptance harness. Nothing here calls into the library's solvers; each
// function recomputes its answer from first principles (dense linear algebra,
// closed-form rotations or brute-force grids) so that agreement is evidence.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <utility>

#include <Eigen/Dense>

namespace coast::oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Orthonormal basis (columns) of the orthogonal complement of span(cols(a)),
/// from a full QR of a.
inline Mat complement_basis(const Mat &a) {
  Eigen::HouseholderQR<Mat> qr(a);
  const Mat q = qr.householderQ() * Mat::Identity(a.rows(), a.rows());
  return q.rightCols(a.rows() - a.cols());
}

/// Dense orthogonal projector onto T_x M = span{x, d}^⊥.
inline Mat tangent_projector(const Vec &x, const Vec &d) {
  Mat a(x.size(), 2);
  a << x, d;
  const Mat b = complement_basis(a);
  return b * b.transpose();
}

/// Rotation of h toward d inside span{h, d}, stopped where the cosine with d
/// equals alpha (the SLERP formula written in angles, not as a projection).
inline Vec slerp_rotation(const Vec &h, const Vec &d, double alpha) {
  const double th = std::acos(std::clamp(h.dot(d), -1.0, 1.0));
  const double ts = std::acos(std::clamp(alpha, -1.0, 1.0));
  return (std::sin(th - ts) / std::sin(th)) * d + (std::sin(ts) / std::sin(th)) * h;
}

inline double quad_damage(const Vec &x, const Vec &h, const Mat &s) {
  const Vec e = x - h;
  return e.dot(s * e);
}

/// Point on the p = 3 slice at angle phi in the frame (u, w) of d^⊥.
struct Circle {
  Vec d, u, w;
  double alpha, r;

  Circle(const Vec &d_, double alpha_) : d(d_), alpha(alpha_), r(std::sqrt(1 - alpha_ * alpha_)) {
    Mat a(3, 1);
    a << d;
    const Mat b = complement_basis(a);
    u = b.col(0);
    w = b.col(1);
  }
  Vec at(double phi) const { return alpha * d + r * (std::cos(phi) * u + std::sin(phi) * w); }
  double angle_of(const Vec &x) const {
    return std::atan2(x.dot(w), x.dot(u));
  }
};

/// Smallest |a - b| between two angles.
inline double angle_gap(double a, double b) {
  double g = std::fmod(std::abs(a - b), 2 * std::numbers::pi);
  return std::min(g, 2 * std::numbers::pi - g);
}

/// Maximises f over [lo, hi] x [lo2, hi2] with a coarse grid followed by
/// repeated zooms around the best cell. Adequate for smooth functions whose
/// maxima are not closer than a coarse cell to each other, which is the
/// situation of the band-constrained worst case below.
inline double grid_max_2d(const std::function<double(double, double)> &f, double lo, double hi,
                          int n1, double lo2, double hi2, int n2, int zooms = 6) {
  double best = -std::numeric_limits<double>::infinity();
  double b1 = lo, b2 = lo2;
  double s1 = n1 > 1 ? (hi - lo) / (n1 - 1) : 0.0;
  double s2 = n2 > 1 ? (hi2 - lo2) / (n2 - 1) : 0.0;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const double a = lo + i * s1, b = lo2 + j * s2;
      const double v = f(a, b);
      if (v > best) { best = v; b1 = a; b2 = b; }
    }
  }
  for (int z = 0; z < zooms; ++z) {
    const double c1 = b1, c2 = b2;
    const int m = 21;
    const double w1 = s1, w2 = s2;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const double a = std::clamp(c1 - w1 + 2 * w1 * i / (m - 1), lo, hi);
        const double b = lo2 + std::fmod(c2 - w2 + 2 * w2 * j / (m - 1) - lo2 + 10 * (hi2 - lo2),
                                         hi2 - lo2 > 0 ? hi2 - lo2 : 1.0);
        const double v = f(a, b);
        if (v > best) { best = v; b1 = a; b2 = b; }
      }
    }
    s1 = w1 / 10;
    s2 = w2 / 10;
  }
  return best;
}

/// Worst-case collateral objective of the near-orthogonal scenario for p = 3:
///   sup { (fᵀ(x - h))² : ‖f‖ = 1, |dᵀf| <= eps },
/// evaluated on a grid over the feature band (c = dᵀf, azimuth psi) with
/// local zooming.
inline double band_worst_case(const Circle &c, const Vec &x, const Vec &h, double eps) {
  const Vec v = x - h;
  const double vd = c.d.dot(v), vu = c.u.dot(v), vw = c.w.dot(v);
  auto f = [&](double cz, double psi) {
    const double s = std::sqrt(std::max(0.0, 1 - cz * cz));
    const double t = cz * vd + s * (std::cos(psi) * vu + std::sin(psi) * vw);
    return t * t;
  };
  const int nc = eps > 0 ? 21 : 1;
  return grid_max_2d(f, -eps, eps, nc, 0.0, 2 * std::numbers::pi, 360);
}

/// Brute-force minimiser of g over the circle: a uniform grid of `n` angles
/// followed by zooming around the best `keep` cells. Returns (angle, value).
inline std::pair<double, double> circle_min(const std::function<double(double)> &g, int n,
                                            int keep = 4, int zooms = 8) {
  std::vector<std::pair<double, double>> vals(n);
  const double step = 2 * std::numbers::pi / n;
  for (int i = 0; i < n; ++i) vals[i] = {g(i * step), i * step};
  std::vector<std::pair<double, double>> starts;
  for (int i = 0; i < n; ++i) {
    const double l = vals[(i + n - 1) % n].first, r = vals[(i + 1) % n].first;
    if (vals[i].first <= l && vals[i].first <= r) starts.push_back(vals[i]);
  }
  std::sort(starts.begin(), starts.end());
  if (starts.size() > static_cast<std::size_t>(keep)) starts.resize(keep);
  std::pair<double, double> best{std::numeric_limits<double>::infinity(), 0.0};
  for (auto [v0, a0] : starts) {
    double centre = a0, width = step, bv = v0;
    for (int z = 0; z < zooms; ++z) {
      const int m = 41;
      for (int k = 0; k < m; ++k) {
        const double a = centre - width + 2 * width * k / (m - 1);
        const double v = g(a);
        if (v < bv) { bv = v; centre = a; }
      }
      width /= 10;
    }
    if (bv < best.first) best = {bv, centre};
  }
  return {best.second, best.first};
}

}  // namespace coast::oracle
