#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "golde/core.hpp"

namespace golde {

// ---------------------------------------------------------------------------
// Quadratic inner products <x,y>_w = sum_i w_i x_i y_i and the generalized
// Householder reflections they induce. A reflection about the hyperplane
// w-orthogonal to u maps x to x - 2 (<u,x>_w / <u,u>_w) u, which costs O(k)
// and preserves the form for any anisotropic u. Compositions of such
// reflections reach every w-orthogonal matrix.
// ---------------------------------------------------------------------------

/// Rows whose |<u,u>_w| falls below this are treated as identity by the
/// composed application paths; applying such a row directly is an error.
inline double isotropy_tau(std::size_t k) { return 1e-12 * double(k); }

inline VecD euclidean_weights(std::size_t k) { return VecD(k, 1.0); }

/// (-1, 1, ..., 1): the Lorentz signature.
inline VecD lorentz_weights(std::size_t k) {
  VecD w(k, 1.0);
  w[0] = -1.0;
  return w;
}

inline void validate_weights(std::span<const double> w) {
  for (double wi : w) {
    if (wi == 0.0 || !std::isfinite(wi)) {
      throw UnsupportedSignatureError("weighting vector entries must be nonzero and finite");
    }
  }
}

inline double quad_inner(std::span<const double> x, std::span<const double> y,
                         std::span<const double> w) {
  require_same_size(x.size(), y.size(), "quad_inner");
  require_same_size(x.size(), w.size(), "quad_inner");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i] * y[i];
  return s;
}

namespace detail {

// Unchecked kernels; w == nullptr means the all-ones (Euclidean) weighting.

inline double quad_inner_raw(const double* x, const double* y, const double* w, std::size_t k) {
  double s = 0.0;
  if (w) {
    for (std::size_t i = 0; i < k; ++i) s += w[i] * x[i] * y[i];
  } else {
    for (std::size_t i = 0; i < k; ++i) s += x[i] * y[i];
  }
  return s;
}

/// In-place reflection of x by row u; returns false when u is
/// identity-flagged and x was left untouched.
inline bool reflect_raw(const double* u, const double* w, double* x, std::size_t k) {
  const double uu = quad_inner_raw(u, u, w, k);
  if (std::abs(uu) < isotropy_tau(k)) return false;
  const double ux = quad_inner_raw(u, x, w, k);
  const double c = 2.0 * ux / uu;
  for (std::size_t i = 0; i < k; ++i) x[i] -= c * u[i];
  return true;
}

/// Applies rows 0..n-1 in order (row 0 innermost).
inline void orth_apply_raw(const double* rows, std::size_t n, const double* w, double* x,
                           std::size_t k) {
  for (std::size_t r = 0; r < n; ++r) reflect_raw(rows + r * k, w, x, k);
}

}  // namespace detail

inline bool is_identity_reflector(std::span<const double> u, std::span<const double> w) {
  require_same_size(u.size(), w.size(), "is_identity_reflector");
  return std::abs(quad_inner(u, u, w)) < isotropy_tau(u.size());
}

inline VecD householder_apply(std::span<const double> u, std::span<const double> w,
                              std::span<const double> x) {
  require_same_size(u.size(), x.size(), "householder_apply");
  require_same_size(u.size(), w.size(), "householder_apply");
  const std::size_t k = u.size();
  const double uu = quad_inner(u, u, w);
  if (std::abs(uu) < isotropy_tau(k)) {
    throw DegenerateReflectorError("isotropic reflector: |<u,u>_w| = " + std::to_string(std::abs(uu)));
  }
  VecD out(x.begin(), x.end());
  const double c = 2.0 * quad_inner(u, x, w) / uu;
  for (std::size_t i = 0; i < k; ++i) out[i] -= c * u[i];
  return out;
}

/// An ordered set of reflector rows sharing one dimension. Row 0 is applied
/// first; this convention is part of the checkpoint format.
struct ReflectorSet {
  std::size_t dim = 0;
  VecD rows;  // row-major, size() * dim

  ReflectorSet() = default;
  ReflectorSet(std::size_t k, std::size_t n) : dim(k), rows(n * k, 0.0) {}

  std::size_t size() const { return dim == 0 ? 0 : rows.size() / dim; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(rows.data() + i * dim, dim);
  }
  std::span<double> row(std::size_t i) {
    return std::span<double>(rows.data() + i * dim, dim);
  }

  static ReflectorSet from_rows(std::size_t k, std::initializer_list<VecD> rs) {
    ReflectorSet set(k, rs.size());
    std::size_t i = 0;
    for (const auto& r : rs) {
      require_same_size(r.size(), k, "ReflectorSet::from_rows");
      std::copy(r.begin(), r.end(), set.row(i++).begin());
    }
    return set;
  }
};

inline VecD orth_apply(const ReflectorSet& u, std::span<const double> w,
                       std::span<const double> x) {
  require_same_size(u.dim, x.size(), "orth_apply");
  require_same_size(u.dim, w.size(), "orth_apply");
  VecD out(x.begin(), x.end());
  detail::orth_apply_raw(u.rows.data(), u.size(), w.data(), out.data(), u.dim);
  return out;
}

/// Materializes the composed reflection matrix. Test/diagnostic path; the
/// model never multiplies by this.
inline Mat orth_matrix(const ReflectorSet& u, std::span<const double> w) {
  require_same_size(u.dim, w.size(), "orth_matrix");
  const std::size_t k = u.dim;
  Mat m{std::int64_t(k), std::int64_t(k)};
  VecD col(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::fill(col.begin(), col.end(), 0.0);
    col[j] = 1.0;
    detail::orth_apply_raw(u.rows.data(), u.size(), w.data(), col.data(), k);
    for (std::size_t i = 0; i < k; ++i) m(std::int64_t(i), std::int64_t(j)) = col[i];
  }
  return m;
}

/// max-abs entry of G^T diag(w) G - diag(w); zero iff G preserves the form.
inline double orthogonality_defect(const Mat& g, std::span<const double> w) {
  if (g.rows != g.cols) throw DimensionError("orthogonality_defect: matrix must be square");
  require_same_size(std::size_t(g.rows), w.size(), "orthogonality_defect");
  const std::int64_t k = g.rows;
  double defect = 0.0;
  for (std::int64_t i = 0; i < k; ++i) {
    for (std::int64_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::int64_t r = 0; r < k; ++r) s += g(r, i) * w[std::size_t(r)] * g(r, j);
      if (i == j) s -= w[std::size_t(i)];
      defect = std::max(defect, std::abs(s));
    }
  }
  return defect;
}

/// Factors a w-orthogonal matrix into at most k reflector rows whose
/// composition reproduces it. Works column by column: whenever G e_j != e_j
/// the reflector along G e_j - e_j restores e_j and, being built inside the
/// w-orthocomplement of the already-fixed columns, leaves those untouched.
/// Positive-definite w only: there every nonzero difference is anisotropic,
/// so the recursion never stalls. Unused rows come back zeroed
/// (identity-flagged).
inline ReflectorSet decompose_orthogonal(const Mat& g, std::span<const double> w,
                                         double ortho_tol = 1e-6) {
  if (g.rows != g.cols) throw DimensionError("decompose_orthogonal: matrix must be square");
  require_same_size(std::size_t(g.rows), w.size(), "decompose_orthogonal");
  for (double wi : w) {
    if (!(wi > 0.0)) {
      throw UnsupportedSignatureError(
          "decompose_orthogonal requires a positive-definite weighting vector");
    }
  }
  const double defect = orthogonality_defect(g, w);
  if (!(defect <= ortho_tol)) {
    throw ContractError("decompose_orthogonal: input is not w-orthogonal (defect " +
                        std::to_string(defect) + ")");
  }

  const std::size_t k = std::size_t(g.rows);
  Mat a = g;
  std::vector<VecD> found;
  VecD d(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < k; ++i) {
      d[i] = a(std::int64_t(i), std::int64_t(j)) - (i == j ? 1.0 : 0.0);
    }
    const double dd = quad_inner(d, d, w);
    if (dd <= 1e-20 * double(k)) continue;  // column already fixed
    double norm = 0.0;
    for (double v : d) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : d) v /= norm;
    // a := H(d, w) a, column by column
    for (std::size_t c = 0; c < k; ++c) {
      VecD col(k);
      for (std::size_t i = 0; i < k; ++i) col[i] = a(std::int64_t(i), std::int64_t(c));
      detail::reflect_raw(d.data(), w.data(), col.data(), k);
      for (std::size_t i = 0; i < k; ++i) a(std::int64_t(i), std::int64_t(c)) = col[i];
    }
    found.push_back(d);
  }

  // H(d_m)...H(d_1) G = I, hence G = H(d_1)...H(d_m); the application order
  // of ReflectorSet is row 0 innermost, so emit in reverse.
  ReflectorSet out(k, k);
  for (std::size_t i = 0; i < found.size(); ++i) {
    const VecD& v = found[found.size() - 1 - i];
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace golde
