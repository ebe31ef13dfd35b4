#pragma once

#include <array>
#include <vector>

#include "bifem/measures.hpp"
#include "bifem/mesh.hpp"

namespace bifem {

inline constexpr double kDefaultSlackFloor = 1e-14;
inline constexpr double kDefaultInteriorMargin = 1e-10;

/// Per-triangle data expressed in a sigma-orthonormal frame. With
/// sigma = L L^T (Cholesky), a covector p has frame coordinates L^{-1} p and
/// |p|_sigma is the Euclidean norm of those coordinates.
class FrameGeometry {
 public:
  FrameGeometry(const Mesh& mesh, const MetricField& metric);

  const Mesh& mesh() const noexcept { return *mesh_; }
  std::size_t triangle_count() const noexcept { return weight_.size(); }

  /// sigma-area of the triangle.
  double weight(std::size_t t) const { return weight_[t]; }
  double alpha(std::size_t t) const { return alpha_[t]; }
  /// L^{-1}
  const Mat2& frame(std::size_t t) const { return frame_[t]; }
  /// Hat-function gradients in frame coordinates.
  const std::array<Vec2, 3>& grads(std::size_t t) const { return grads_[t]; }

  Vec2 frame_gradient(std::size_t t, const NodalField& u) const {
    const auto& tri = mesh_->triangle(t);
    const auto& g = grads_[t];
    return u[tri[0]] * g[0] + u[tri[1]] * g[1] + u[tri[2]] * g[2];
  }

 private:
  const Mesh* mesh_;
  std::vector<double> weight_;
  std::vector<double> alpha_;
  std::vector<Mat2> frame_;
  std::vector<std::array<Vec2, 3>> grads_;
};

/// Potential whose gradient satisfies |Du|_sigma <= alpha on every triangle.
class FeasibleField {
 public:
  /// Throws domain_error if any triangle violates the constraint by more than
  /// `tolerance` in slack.
  static FeasibleField make(const Mesh& mesh, const MetricField& metric, NodalField u, double tolerance = 1e-12);

  const NodalField& u() const noexcept { return u_; }
  /// 1 - |Du|^2_sigma / alpha^2, clipped at zero.
  const TriangleField& slack() const noexcept { return slack_; }

 private:
  FeasibleField(NodalField u, TriangleField slack) : u_(std::move(u)), slack_(std::move(slack)) {}
  NodalField u_;
  TriangleField slack_;
};

struct TiltField {
  TriangleField w;
  std::vector<char> saturated;
  std::size_t saturated_count = 0;
};

/// alpha (1 - sqrt(1 - |p|^2_sigma / alpha^2)).
double bi_integrand(const Vec2& p, double alpha, const Mat2& sigma);

double energy(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric, const Mesh& mesh);

TiltField tilt(const FeasibleField& u, const MetricField& metric, const Mesh& mesh,
               double slack_floor = kDefaultSlackFloor);

/// Gradient of the discrete energy with respect to every nodal value,
/// boundary rows included.
NodalField energy_gradient(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric,
                           const Mesh& mesh, double interior_margin = kDefaultInteriorMargin);

/// argmin over |p|_sigma < alpha of bi_integrand(p) + beta/2 |p - q|^2_sigma.
Vec2 prox_bi(const Vec2& q, double beta, double alpha, const Mat2& sigma);

/// Radial part of the prox in an orthonormal frame: the root t in
/// [0, min(s, alpha)) of (t/alpha)/sqrt(1 - t^2/alpha^2) + beta (t - s) = 0.
/// `hint` is an optional starting point for the Newton iteration.
double prox_radius(double s, double beta, double alpha, double hint = -1.0);

namespace detail {

/// Neumaier-compensated running sum; order-deterministic.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Integrand in frame coordinates from s2 = |q|^2 (caller guarantees s2 <= alpha^2).
inline double integrand_frame(double s2, double alpha) {
  const double x = s2 / (alpha * alpha);
  return alpha * x / (1.0 + std::sqrt(std::max(0.0, 1.0 - x)));
}

}  // namespace detail

}  // namespace bifem
