#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace vbcv {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Thrown when an estimator needs target derivatives the target does not provide.
class capability_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a function evaluates to a non-finite value at a point where a
/// finite value is required (quadrature nodes, Monte Carlo draws).
class evaluation_error : public std::runtime_error {
 public:
  evaluation_error(const std::string& what, double at)
      : std::runtime_error(what + " at x = " + std::to_string(at)), point_(at) {}

  double point() const noexcept { return point_; }

 private:
  double point_;
};

struct Solve2Result {
  Vec2 x = Vec2::Zero();
  // true when the system was near-singular and jitter or a pseudo-inverse was used
  bool regularized = false;
};

/// Solves a 2x2 system using the closed-form inverse. If |det| <= 1e-12 * ||A||_F^2,
/// the solve adds jitter * I when jitter > 0. Otherwise it falls back to the
/// minimum-norm (pseudo-inverse) solution.
inline Solve2Result solve2(const Mat2& a, const Vec2& b, double jitter = 0.0) {
  Solve2Result out;
  const double scale = a.squaredNorm();
  double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  if (scale > 0.0 && std::abs(det) > 1e-12 * scale) {
    out.x << (a(1, 1) * b(0) - a(0, 1) * b(1)) / det,
        (a(0, 0) * b(1) - a(1, 0) * b(0)) / det;
    return out;
  }
  out.regularized = true;
  if (jitter > 0.0) {
    Mat2 aj = a + jitter * Mat2::Identity();
    det = aj(0, 0) * aj(1, 1) - aj(0, 1) * aj(1, 0);
    if (det != 0.0) {
      out.x << (aj(1, 1) * b(0) - aj(0, 1) * b(1)) / det,
          (aj(0, 0) * b(1) - aj(1, 0) * b(0)) / det;
      return out;
    }
  }
  if (scale == 0.0) return out;
  Eigen::JacobiSVD<Mat2> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-10);
  out.x = svd.solve(b);
  return out;
}

inline bool all_finite(const Vec2& v) { return std::isfinite(v(0)) && std::isfinite(v(1)); }

}  // namespace vbcv
