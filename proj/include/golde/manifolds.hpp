#pragma once

#include <cmath>
#include <limits>
#include <span>

#include "golde/core.hpp"
#include "golde/quadratic.hpp"

namespace golde {

// ---------------------------------------------------------------------------
// Reparameterizations. Elliptic weights and curvature radii are stored as
// unconstrained raw scalars and mapped through softplus plus a floor, so the
// optimizer never needs projection steps.
// ---------------------------------------------------------------------------

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// -log(sigmoid(x)) without catastrophic cancellation.
inline double log_sigmoid_neg(double x) { return softplus(-x); }

constexpr double kEllipticWeightFloor = 1e-6;
constexpr double kCurvatureFloor = 1e-4;

inline double elliptic_weight_from_raw(double raw) { return softplus(raw) + kEllipticWeightFloor; }
inline double curvature_from_raw(double raw) { return softplus(raw) + kCurvatureFloor; }

/// Raw value whose reparameterized image is bit-exactly `target`. The
/// analytic inverse is off by an ulp or two, so nudge until exact.
inline double reparam_raw_for(double target, double floor_value) {
  double raw = softplus_inverse(target - floor_value);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 64; ++i) {
    const double image = softplus(raw) + floor_value;
    if (image == target) break;
    raw = std::nextafter(raw, image < target ? inf : -inf);
  }
  return raw;
}

// ---------------------------------------------------------------------------
// Elliptic component: reflections under a strictly positive weighting vector
// plus the extrinsic Mahalanobis distance.
// ---------------------------------------------------------------------------

inline VecD elliptic_transform(const ReflectorSet& u, std::span<const double> p,
                               std::span<const double> e) {
  for (double pi : p) {
    if (!(pi > 0.0)) throw UnsupportedSignatureError("elliptic weights must be positive");
  }
  return orth_apply(u, p, e);
}

inline double elliptic_distance(std::span<const double> x, std::span<const double> y,
                                std::span<const double> p) {
  require_same_size(x.size(), y.size(), "elliptic_distance");
  require_same_size(x.size(), p.size(), "elliptic_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += p[i] * d * d;
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Hyperbolic component: the upper sheet of <x,x>_q = -beta in the Lorentz
// form q = (-1, 1, ..., 1).
// ---------------------------------------------------------------------------

inline double lorentz_inner(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size(), "lorentz_inner");
  double s = -x[0] * y[0];
  for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

/// Relative residual of <x,x>_q = -beta, evaluated in a scaled frame so that
/// points far out on the sheet (huge first coordinate) do not overflow.
inline double hyperboloid_residual(std::span<const double> x, double beta) {
  const double m = std::max(std::abs(x[0]), std::sqrt(beta));
  if (!(m > 0.0) || !std::isfinite(m)) return std::numeric_limits<double>::infinity();
  const double inv = 1.0 / m;
  double s = -(x[0] * inv) * (x[0] * inv);
  for (std::size_t i = 1; i < x.size(); ++i) s += (x[i] * inv) * (x[i] * inv);
  const double beta_scaled = beta * inv * inv;
  const double den = std::max(beta_scaled, (x[0] * inv) * (x[0] * inv));
  return std::abs(s + beta_scaled) / den;
}

struct HyperbolicPoint {
  VecD coords;  // ambient, first coordinate positive on the upper sheet
  double beta = 1.0;
};

/// Membership tolerance enforced at operation boundaries. Transforms are
/// form-preserving up to rounding, so points are never renormalized.
constexpr double kMembershipTol = 1e-6;

namespace detail {

constexpr double kExpMapTaylorCutoff = 1e-7;

/// Exponential map at the sheet apex: R^{k-1} -> ambient R^k.
inline void exp_map_raw(const double* x, std::size_t km1, double beta, double* out) {
  double n2 = 0.0;
  for (std::size_t i = 0; i < km1; ++i) n2 += x[i] * x[i];
  const double root_beta = std::sqrt(beta);
  const double s = std::sqrt(n2) / root_beta;
  double ch, psi;  // cosh(s) and sinh(s)/s
  if (s < kExpMapTaylorCutoff) {
    ch = 1.0 + 0.5 * s * s;
    psi = 1.0 + s * s / 6.0;
  } else {
    ch = std::cosh(s);
    psi = std::sinh(s) / s;
  }
  out[0] = root_beta * ch;
  for (std::size_t i = 0; i < km1; ++i) out[i + 1] = psi * x[i];
}

/// Boost by b in O(k): first row (gamma, b^T), spatial block I + bb^T/(1+gamma).
/// 1/(1+gamma) is the singularity-free form of (sqrt(1+|b|^2)-1)/|b|^2.
inline void boost_raw(const double* b, const double* x, std::size_t k, double* out) {
  const std::size_t km1 = k - 1;
  double b2 = 0.0;
  for (std::size_t i = 0; i < km1; ++i) b2 += b[i] * b[i];
  const double gamma = std::sqrt(1.0 + b2);
  const double c = 1.0 / (1.0 + gamma);
  double t = 0.0;
  for (std::size_t i = 0; i < km1; ++i) t += b[i] * x[i + 1];
  out[0] = gamma * x[0] + t;
  const double ct = c * t;
  for (std::size_t i = 0; i < km1; ++i) out[i + 1] = x[0] * b[i] + x[i + 1] + ct * b[i];
}

inline bool coords_equal(const double* x, const double* y, std::size_t k) {
  for (std::size_t i = 0; i < k; ++i) {
    if (x[i] != y[i]) return false;
  }
  return true;
}

inline double hyperbolic_distance_raw(const double* x, const double* y, std::size_t k,
                                      double beta) {
  // the inner product of a far-out point with itself cancels to relative
  // noise, so coincident points get an exact zero
  if (coords_equal(x, y, k)) return 0.0;
  double ip = -x[0] * y[0];
  for (std::size_t i = 1; i < k; ++i) ip += x[i] * y[i];
  const double arg = std::max(1.0, -ip / beta);  // absorbs rounding at x ~= y
  return std::sqrt(beta) * std::acosh(arg);
}

}  // namespace detail

inline HyperbolicPoint exp_map(std::span<const double> x, double beta) {
  if (!(beta > 0.0)) throw ContractError("exp_map: curvature radius must be positive");
  HyperbolicPoint p;
  p.beta = beta;
  p.coords.resize(x.size() + 1);
  detail::exp_map_raw(x.data(), x.size(), beta, p.coords.data());
  return p;
}

inline VecD boost_apply(std::span<const double> b, std::span<const double> x) {
  require_same_size(b.size() + 1, x.size(), "boost_apply");
  VecD out(x.size());
  detail::boost_raw(b.data(), x.data(), x.size(), out.data());
  return out;
}

/// Materialized boost matrix [[gamma, b^T], [b, sqrt(I + bb^T)]].
inline Mat boost_matrix(std::span<const double> b) {
  const std::size_t km1 = b.size();
  const std::size_t k = km1 + 1;
  double b2 = 0.0;
  for (double bi : b) b2 += bi * bi;
  const double gamma = std::sqrt(1.0 + b2);
  const double c = 1.0 / (1.0 + gamma);
  Mat m{std::int64_t(k), std::int64_t(k)};
  m(0, 0) = gamma;
  for (std::size_t i = 0; i < km1; ++i) {
    m(0, std::int64_t(i + 1)) = b[i];
    m(std::int64_t(i + 1), 0) = b[i];
    for (std::size_t j = 0; j < km1; ++j) {
      m(std::int64_t(i + 1), std::int64_t(j + 1)) = (i == j ? 1.0 : 0.0) + c * b[i] * b[j];
    }
  }
  return m;
}

/// Restricted positive-orthochronous transform: boost by b, then the
/// block-diagonal Euclidean rotation of the spatial part. Keeps the point on
/// its sheet.
inline HyperbolicPoint hyperbolic_orth_apply(const ReflectorSet& u, std::span<const double> b,
                                             const HyperbolicPoint& x) {
  const std::size_t k = x.coords.size();
  if (k < 2) throw DimensionError("hyperbolic_orth_apply: ambient dimension must be >= 2");
  require_same_size(u.dim, k - 1, "hyperbolic_orth_apply");
  require_same_size(b.size(), k - 1, "hyperbolic_orth_apply");
  const double res = hyperboloid_residual(x.coords, x.beta);
  if (!(res <= kMembershipTol) || !(x.coords[0] > 0.0)) {
    throw ContractError("hyperbolic_orth_apply: input point is off the upper sheet (residual " +
                        std::to_string(res) + ")");
  }
  HyperbolicPoint out;
  out.beta = x.beta;
  out.coords.resize(k);
  detail::boost_raw(b.data(), x.coords.data(), k, out.coords.data());
  detail::orth_apply_raw(u.rows.data(), u.size(), nullptr, out.coords.data() + 1, k - 1);
  return out;
}

inline double hyperbolic_distance(const HyperbolicPoint& x, const HyperbolicPoint& y,
                                  double beta) {
  require_same_size(x.coords.size(), y.coords.size(), "hyperbolic_distance");
  const double tol = 1e-9 * beta;
  if (std::abs(x.beta - beta) > tol || std::abs(y.beta - beta) > tol) {
    throw ContractError("hyperbolic_distance: points live on different curvature radii");
  }
  return detail::hyperbolic_distance_raw(x.coords.data(), y.coords.data(), x.coords.size(), beta);
}

}  // namespace golde
