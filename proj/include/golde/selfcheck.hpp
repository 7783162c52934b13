#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "golde/core.hpp"
#include "golde/manifolds.hpp"
#include "golde/model.hpp"
#include "golde/quadratic.hpp"
#include "golde/training.hpp"

namespace golde {

// ---------------------------------------------------------------------------
// Embedded property suite. Each check returns its worst observed defect;
// run_selfcheck() compares against the documented budgets. The same checks
// back the acceptance suite, which pins its own trial counts.
// ---------------------------------------------------------------------------

namespace checks {

inline VecD random_vec(Rng& rng, std::size_t k, double scale = 1.0) {
  VecD v(k);
  for (auto& x : v) x = rng.normal() * scale;
  return v;
}

inline VecD random_positive_weights(Rng& rng, std::size_t k, double lo = 0.3, double hi = 3.0) {
  VecD w(k);
  for (auto& x : w) x = rng.uniform(lo, hi);
  return w;
}

inline ReflectorSet random_reflectors(Rng& rng, std::size_t k, std::size_t n) {
  ReflectorSet u(k, n);
  for (auto& x : u.rows) x = rng.normal();
  return u;
}

/// A reflector too close to the isotropy cone of an indefinite form amplifies
/// rounding without bound (and the composed paths flag it as identity), so
/// sampled reflectors keep |<u,u>_w| at a fixed fraction of |u|^2.
inline VecD random_anisotropic_vec(Rng& rng, std::size_t k, std::span<const double> w) {
  for (;;) {
    VecD u = random_vec(rng, k);
    double n2 = 0.0;
    for (double x : u) n2 += x * x;
    if (std::abs(quad_inner(u, u, w)) >= 1e-2 * n2) return u;
  }
}

inline ReflectorSet random_anisotropic_reflectors(Rng& rng, std::size_t k, std::size_t n,
                                                  std::span<const double> w) {
  ReflectorSet u(k, n);
  for (std::size_t i = 0; i < n; ++i) {
    const VecD row = random_anisotropic_vec(rng, k, w);
    std::copy(row.begin(), row.end(), u.row(i).begin());
  }
  return u;
}

/// Independent orthogonalization oracle: w-weighted Gram-Schmidt on a random
/// matrix, columns normalized to <v,v>_w = w_j. Requires positive w.
inline Mat gram_schmidt_orthogonal(Rng& rng, std::size_t k, std::span<const double> w) {
  for (;;) {
    std::vector<VecD> cols;
    bool ok = true;
    for (std::size_t j = 0; j < k && ok; ++j) {
      VecD v = random_vec(rng, k);
      for (const auto& prev : cols) {
        const double coef = quad_inner(prev, v, w) / quad_inner(prev, prev, w);
        for (std::size_t i = 0; i < k; ++i) v[i] -= coef * prev[i];
      }
      const double vv = quad_inner(v, v, w);
      if (vv < 1e-8) {
        ok = false;  // degenerate draw, retry the whole matrix
        break;
      }
      const double scale = std::sqrt(w[j] / vv);
      for (auto& x : v) x *= scale;
      cols.push_back(std::move(v));
    }
    if (!ok) continue;
    Mat g{std::int64_t(k), std::int64_t(k)};
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < k; ++i) g(std::int64_t(i), std::int64_t(j)) = cols[j][i];
    }
    return g;
  }
}

enum class WeightKind { Euclidean, RandomPositive, Lorentz };

inline VecD make_weights(WeightKind kind, Rng& rng, std::size_t k) {
  switch (kind) {
    case WeightKind::Euclidean: return euclidean_weights(k);
    case WeightKind::RandomPositive: return random_positive_weights(rng, k);
    default: return lorentz_weights(k);
  }
}

/// |<Hx,Hy>_w - <x,y>_w| relative to the largest magnitude the evaluation
/// visits (reflected vectors included), which is the honest double-precision
/// error measure for an indefinite form.
inline double inner_product_invariance(std::int64_t trials_per_geometry, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (WeightKind kind :
       {WeightKind::Euclidean, WeightKind::RandomPositive, WeightKind::Lorentz}) {
    for (std::int64_t t = 0; t < trials_per_geometry; ++t) {
      const std::size_t k = 2 + std::size_t(rng.below(15));
      const VecD w = make_weights(kind, rng, k);
      const VecD u = random_anisotropic_vec(rng, k, w);
      const VecD x = random_vec(rng, k);
      const VecD y = random_vec(rng, k);
      const VecD hx = householder_apply(u, w, x);
      const VecD hy = householder_apply(u, w, y);
      double nx = 0.0, ny = 0.0, nhx = 0.0, nhy = 0.0, wmax = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        nx += x[i] * x[i];
        ny += y[i] * y[i];
        nhx += hx[i] * hx[i];
        nhy += hy[i] * hy[i];
        wmax = std::max(wmax, std::abs(w[i]));
      }
      const double scale =
          std::max({std::sqrt(nx * ny) * wmax, std::sqrt(nhx * nhy) * wmax, 1e-30});
      worst = std::max(worst, std::abs(quad_inner(hx, hy, w) - quad_inner(x, y, w)) / scale);
    }
  }
  return worst;
}

inline double reflection_involution(std::int64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    const std::size_t k = 2 + std::size_t(rng.below(15));
    const WeightKind kind = static_cast<WeightKind>(rng.below(3));
    const VecD w = make_weights(kind, rng, k);
    const VecD u = random_anisotropic_vec(rng, k, w);
    const VecD x = random_vec(rng, k);
    const VecD mid = householder_apply(u, w, x);
    const VecD back = householder_apply(u, w, mid);
    double scale = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
      scale = std::max({scale, std::abs(x[i]), std::abs(mid[i])});
    }
    for (std::size_t i = 0; i < k; ++i) {
      worst = std::max(worst, std::abs(back[i] - x[i]) / scale);
    }
  }
  return worst;
}

/// orth_apply against the materialized matrix, max-abs difference.
inline double fast_path_equivalence(std::int64_t trials_per_dim, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t k : {2u, 4u, 8u, 16u}) {
    for (std::int64_t t = 0; t < trials_per_dim; ++t) {
      const WeightKind kind = static_cast<WeightKind>(rng.below(3));
      const VecD w = make_weights(kind, rng, k);
      const ReflectorSet u = random_anisotropic_reflectors(rng, k, k, w);
      const VecD x = random_vec(rng, k);
      const VecD fast = orth_apply(u, w, x);
      const VecD via_matrix = matvec(orth_matrix(u, w), x);
      for (std::size_t i = 0; i < k; ++i) {
        worst = std::max(worst, std::abs(fast[i] - via_matrix[i]));
      }
    }
  }
  return worst;
}

/// Composed reflections preserve the form; the defect of G^T diag(w) G is
/// measured relative to the entry magnitude of that product (Lorentz
/// compositions can have large entries, which scales the attainable
/// precision).
inline double composition_closure(std::int64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    const std::size_t k = 2 + std::size_t(rng.below(7));
    const WeightKind kind = static_cast<WeightKind>(rng.below(3));
    const VecD w = make_weights(kind, rng, k);
    const ReflectorSet u = random_anisotropic_reflectors(rng, k, k, w);
    const Mat g = orth_matrix(u, w);
    double wmax = 0.0;
    for (double wi : w) wmax = std::max(wmax, std::abs(wi));
    const double gmax = max_abs(g);
    const double scale = std::max(1.0, gmax * gmax * wmax);
    worst = std::max(worst, orthogonality_defect(g, w) / scale);
  }
  return worst;
}

/// Decompose-then-recompose on w-orthogonal matrices, half built from random
/// reflector products, half from the Gram-Schmidt oracle. Positive w, k <= 8.
inline double decomposition_roundtrip(std::int64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    const std::size_t k = 2 + std::size_t(rng.below(7));
    const VecD w = random_positive_weights(rng, k);
    const Mat g = (t % 2 == 0) ? orth_matrix(random_reflectors(rng, k, k), w)
                               : gram_schmidt_orthogonal(rng, k, w);
    const ReflectorSet u = decompose_orthogonal(g, w);
    worst = std::max(worst, max_abs_diff(orth_matrix(u, w), g));
  }
  return worst;
}

/// Elliptic transform + Mahalanobis distance against the equivalent
/// Euclidean form: rows and embeddings pre-scaled by sqrt(p), plain
/// reflections, plain norm. Relative difference.
inline double elliptic_scaled_equivalence(std::int64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    const std::size_t k = 2 + std::size_t(rng.below(7));
    const VecD p = random_positive_weights(rng, k);
    const ReflectorSet u = random_reflectors(rng, k, k);
    const VecD eh = random_vec(rng, k);
    const VecD et = random_vec(rng, k);

    const double lhs = elliptic_distance(elliptic_transform(u, p, eh), et, p);

    ReflectorSet us(k, k);
    VecD sh(k), st(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double rp = std::sqrt(p[i]);
      sh[i] = rp * eh[i];
      st[i] = rp * et[i];
      for (std::size_t rrow = 0; rrow < k; ++rrow) {
        us.rows[rrow * k + i] = std::sqrt(p[i]) * u.rows[rrow * k + i];
      }
    }
    const VecD ones = euclidean_weights(k);
    const VecD th = orth_apply(us, ones, sh);
    double d2 = 0.0;
    for (std::size_t i = 0; i < k; ++i) d2 += (th[i] - st[i]) * (th[i] - st[i]);
    const double rhs = std::sqrt(d2);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max({lhs, rhs, 1e-12}));
  }
  return worst;
}

struct PositiveTransformCheck {
  double lorentz_defect = 0.0;
  double min_first_element = std::numeric_limits<double>::infinity();
  double sheet_residual = 0.0;  // inf when a point left the upper sheet
};

/// Materialized restricted hyperbolic transforms: Lorentz orthogonality,
/// first element >= 1, and upper-sheet preservation of exp-mapped points.
inline PositiveTransformCheck positive_transforms(std::int64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  PositiveTransformCheck out;
  for (std::int64_t t = 0; t < trials; ++t) {
    const std::size_t k = 2 + std::size_t(rng.below(7));
    const ReflectorSet u = random_reflectors(rng, k - 1, k - 1);
    const VecD b = random_vec(rng, k - 1);

    const Mat rot = orth_matrix(u, euclidean_weights(k - 1));
    Mat block = Mat::identity(std::int64_t(k));
    for (std::int64_t i = 0; i < rot.rows; ++i) {
      for (std::int64_t j = 0; j < rot.cols; ++j) block(i + 1, j + 1) = rot(i, j);
    }
    const Mat full = matmul(block, boost_matrix(b));
    out.lorentz_defect =
        std::max(out.lorentz_defect, orthogonality_defect(full, lorentz_weights(k)));
    out.min_first_element = std::min(out.min_first_element, full(0, 0));

    const double beta = rng.uniform(0.1, 3.0);
    const HyperbolicPoint x = exp_map(random_vec(rng, k - 1, 1.5), beta);
    const HyperbolicPoint y = hyperbolic_orth_apply(u, b, x);
    if (!(y.coords[0] > 0.0)) {
      out.sheet_residual = std::numeric_limits<double>::infinity();
    } else {
      out.sheet_residual = std::max(out.sheet_residual, hyperboloid_residual(y.coords, beta));
    }
  }
  return out;
}

struct BoostFormsCheck {
  double sqrt_error = 0.0;      // (I + c bb^T)^2 vs I + bb^T
  double velocity_error = 0.0;  // b-form vs gamma/v-form
};

inline BoostFormsCheck boost_closed_forms(std::int64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  BoostFormsCheck out;
  for (std::int64_t t = 0; t < trials; ++t) {
    const std::size_t km1 = 1 + std::size_t(rng.below(8));
    VecD b = random_vec(rng, km1);
    if (t % 8 == 0) {
      for (auto& x : b) x = 0.0;  // exact zero boost
    } else {
      const double scale = std::pow(10.0, rng.uniform(-9.0, 0.5));
      for (auto& x : b) x *= scale;
    }

    double b2 = 0.0;
    for (double x : b) b2 += x * x;
    const double gamma = std::sqrt(1.0 + b2);
    const double c = 1.0 / (1.0 + gamma);

    // (I + c bb^T)^2 should reproduce I + bb^T
    Mat s{std::int64_t(km1), std::int64_t(km1)};
    for (std::size_t i = 0; i < km1; ++i) {
      for (std::size_t j = 0; j < km1; ++j) {
        s(std::int64_t(i), std::int64_t(j)) = (i == j ? 1.0 : 0.0) + c * b[i] * b[j];
      }
    }
    const Mat ss = matmul(s, s);
    for (std::size_t i = 0; i < km1; ++i) {
      for (std::size_t j = 0; j < km1; ++j) {
        const double want = (i == j ? 1.0 : 0.0) + b[i] * b[j];
        out.sqrt_error = std::max(
            out.sqrt_error, std::abs(ss(std::int64_t(i), std::int64_t(j)) - want));
      }
    }

    // gamma/v form with v = -b/gamma
    const std::size_t k = km1 + 1;
    Mat vel{std::int64_t(k), std::int64_t(k)};
    vel(0, 0) = gamma;
    for (std::size_t i = 0; i < km1; ++i) {
      const double vi = -b[i] / gamma;
      vel(0, std::int64_t(i + 1)) = -gamma * vi;
      vel(std::int64_t(i + 1), 0) = -gamma * vi;
      for (std::size_t j = 0; j < km1; ++j) {
        const double vj = -b[j] / gamma;
        vel(std::int64_t(i + 1), std::int64_t(j + 1)) =
            (i == j ? 1.0 : 0.0) + gamma * gamma / (1.0 + gamma) * vi * vj;
      }
    }
    out.velocity_error = std::max(out.velocity_error, max_abs_diff(boost_matrix(b), vel));

    const VecD x = random_vec(rng, k);
    const VecD fast = boost_apply(b, x);
    const VecD via = matvec(vel, x);
    for (std::size_t i = 0; i < k; ++i) {
      out.velocity_error = std::max(out.velocity_error, std::abs(fast[i] - via[i]));
    }
  }
  return out;
}

/// Membership and positivity of exp-mapped points over a norm/curvature grid.
/// Returns the max relative sheet residual; infinity if positivity fails.
inline double exp_map_membership(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (double norm : {0.0, 1e-12, 1e-3, 1.0, 50.0}) {
    for (double beta : {1e-2, 1.0, 10.0}) {
      for (std::size_t k : {2u, 5u, 16u}) {
        VecD x = random_vec(rng, k - 1);
        double n = 0.0;
        for (double v : x) n += v * v;
        n = std::sqrt(n);
        for (auto& v : x) v = n > 0.0 ? v * (norm / n) : 0.0;
        const HyperbolicPoint p = exp_map(x, beta);
        if (!(p.coords[0] > 0.0)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, hyperboloid_residual(p.coords, beta));
      }
    }
  }
  return worst;
}

struct DistanceAxiomsCheck {
  double asymmetry = 0.0;
  double diagonal = 0.0;
  double triangle_violation = 0.0;
};

inline DistanceAxiomsCheck hyperbolic_distance_axioms(std::int64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  DistanceAxiomsCheck out;
  for (std::int64_t t = 0; t < trials; ++t) {
    const std::size_t k = 2 + std::size_t(rng.below(7));
    const double beta = rng.uniform(0.1, 3.0);
    const HyperbolicPoint x = exp_map(random_vec(rng, k - 1), beta);
    const HyperbolicPoint y = exp_map(random_vec(rng, k - 1), beta);
    const HyperbolicPoint z = exp_map(random_vec(rng, k - 1), beta);
    const double dxy = hyperbolic_distance(x, y, beta);
    const double dyx = hyperbolic_distance(y, x, beta);
    const double dxz = hyperbolic_distance(x, z, beta);
    const double dyz = hyperbolic_distance(y, z, beta);
    out.asymmetry = std::max(out.asymmetry, std::abs(dxy - dyx));
    out.diagonal = std::max(out.diagonal, hyperbolic_distance(x, x, beta));
    out.triangle_violation = std::max(out.triangle_violation, dxz - (dxy + dyz));
  }
  return out;
}

/// A small mixed model (two elliptic + two hyperbolic components, dims 3 and
/// 4) with jittered relation parameters, checked against central finite
/// differences.
inline FiniteDiffReport gradient_check(std::uint64_t seed, int norm = 2) {
  ProductManifoldConfig cfg;
  cfg.components = {{Geometry::Elliptic, 3},
                    {Geometry::Elliptic, 4},
                    {Geometry::Hyperbolic, 3},
                    {Geometry::Hyperbolic, 4}};
  cfg.norm = norm;
  const std::int64_t num_entities = 12;
  const std::int64_t num_relations = 2;
  Model m = init_params(cfg, num_entities, num_relations, seed);

  Rng rng(splitmix64(seed) + 1);
  for (std::int64_t r = 0; r < num_relations; ++r) {
    double* rel = m.relation(r);
    for (const auto& cl : m.layout.comps) {
      if (cl.geometry == Geometry::Elliptic) {
        for (std::int32_t i = 0; i < cl.ambient; ++i) {
          rel[cl.p_offset + std::size_t(i)] += rng.normal() * 0.5;
        }
      } else {
        for (std::int32_t i = 0; i < cl.rows; ++i) {
          rel[cl.b_offset + std::size_t(i)] = rng.normal() * 0.4;
        }
        rel[cl.beta_offset] += rng.normal() * 0.3;
      }
    }
  }

  std::vector<Triple> positives;
  for (int i = 0; i < 6; ++i) {
    positives.push_back({std::int32_t(rng.below(num_entities)),
                         std::int32_t(rng.below(num_relations)),
                         std::int32_t(rng.below(num_entities))});
  }
  TrainConfig tc;
  tc.batch_size = std::int64_t(positives.size());
  tc.neg_size = 4;
  tc.margin = 2.0;
  tc.alpha = 1.0;
  tc.norm = norm;
  tc.threads = 1;
  const NegativeBatch negs =
      sample_negative_batch(positives, tc.neg_size, seed, 1, num_entities);
  return finite_diff_check(m, positives, negs, tc);
}

}  // namespace checks

struct PropertyResult {
  std::string name;
  bool pass = false;
  double worst = 0.0;
  double budget = 0.0;
};

/// The property suite behind the selfcheck command. `trials` scales the
/// sampled checks; budgets are fixed.
inline std::vector<PropertyResult> run_selfcheck(std::int64_t trials, std::uint64_t seed) {
  std::vector<PropertyResult> out;
  auto push = [&](const std::string& name, double worst, double budget) {
    out.push_back({name, worst <= budget, worst, budget});
  };

  push("inner-product invariance", checks::inner_product_invariance(trials, seed), 1e-9);
  push("reflection involution", checks::reflection_involution(trials, seed + 1), 1e-10);
  push("fast path vs materialized matrix",
       checks::fast_path_equivalence(std::max<std::int64_t>(trials / 5, 1), seed + 2), 1e-10);
  push("composition closure", checks::composition_closure(trials, seed + 3), 1e-9);
  push("orthogonal factorization round-trip",
       checks::decomposition_roundtrip(std::max<std::int64_t>(trials / 5, 1), seed + 4), 1e-8);
  push("elliptic scaled-Euclidean equivalence",
       checks::elliptic_scaled_equivalence(std::max<std::int64_t>(trials / 2, 1), seed + 5),
       1e-9);
  const auto pt = checks::positive_transforms(trials, seed + 6);
  push("positive transforms: Lorentz defect", pt.lorentz_defect, 1e-9);
  push("positive transforms: first element >= 1", 1.0 - pt.min_first_element, 1e-12);
  push("positive transforms: sheet preservation", pt.sheet_residual, 1e-8);
  const auto bf = checks::boost_closed_forms(std::max<std::int64_t>(trials / 2, 1), seed + 7);
  push("boost square-root closed form", bf.sqrt_error, 1e-10);
  push("boost velocity-form equivalence", bf.velocity_error, 1e-10);
  push("exp-map membership", checks::exp_map_membership(seed + 8), 1e-9);
  const auto ax = checks::hyperbolic_distance_axioms(trials, seed + 9);
  push("hyperbolic distance symmetry", ax.asymmetry, 0.0);
  push("hyperbolic distance diagonal", ax.diagonal, 0.0);
  push("hyperbolic distance triangle inequality", ax.triangle_violation, 1e-8);
  const auto fd = checks::gradient_check(seed + 10);
  push("gradient vs finite differences", fd.overall(), 1e-4);
  return out;
}

}  // namespace golde
