#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "golde/core.hpp"
#include "golde/manifolds.hpp"
#include "golde/model.hpp"

namespace golde {

// ---------------------------------------------------------------------------
// Reverse-mode gradients of the score. Each forward operation records its
// intermediates in a trace; the backward pass replays them in reverse with
// hand-derived adjoints. The finite-difference harness in training.hpp is
// the correctness oracle for everything in this file.
// ---------------------------------------------------------------------------

struct Gradients {
  VecD entities;
  VecD relations;

  void resize_like(const Model& m) {
    entities.assign(m.entities.size(), 0.0);
    relations.assign(m.relations.size(), 0.0);
  }
};

struct CompTrace {
  // elliptic: entity slice threaded through the reflections, (rows+1) vectors
  VecD chain;
  // hyperbolic
  VecD head_g;         // exp-mapped head, ambient
  VecD boosted;        // after boost, ambient; [0] survives the rotation
  VecD spatial_chain;  // spatial part through the rotations, (rows+1) vectors
  VecD tail_g;         // exp-mapped tail, ambient
  double ip = 0.0;       // <transformed head, tail>_q
  double eta_raw = 0.0;  // -ip/beta before clamping at 1
};

struct ScoreTrace {
  std::vector<CompTrace> comps;

  void prepare(const ModelLayout& lay) {
    comps.resize(lay.comps.size());
    for (std::size_t ci = 0; ci < lay.comps.size(); ++ci) {
      const auto& cl = lay.comps[ci];
      auto& tr = comps[ci];
      if (cl.geometry == Geometry::Elliptic) {
        tr.chain.resize(std::size_t(cl.rows + 1) * std::size_t(cl.ambient));
      } else {
        const std::size_t k = std::size_t(cl.ambient);
        tr.head_g.resize(k);
        tr.boosted.resize(k);
        tr.spatial_chain.resize(std::size_t(cl.rows + 1) * (k - 1));
        tr.tail_g.resize(k);
      }
    }
  }
};

struct BackwardScratch {
  VecD gx, gp, ghx, ggt;

  void prepare(const ModelLayout& lay) {
    const std::size_t k = std::size_t(lay.max_ambient);
    gx.resize(k);
    gp.resize(k);
    ghx.resize(k);
    ggt.resize(k);
  }
};

namespace detail {

inline double forward_score_traced(const ModelLayout& lay, int norm, const double* rel,
                                   const EffectiveRelation& er, const double* eh,
                                   const double* et, ScoreTrace& tr) {
  double total = 0.0;
  for (std::size_t ci = 0; ci < lay.comps.size(); ++ci) {
    const auto& cl = lay.comps[ci];
    auto& ct = tr.comps[ci];
    if (cl.geometry == Geometry::Elliptic) {
      const std::size_t k = std::size_t(cl.ambient);
      const double* p = er.p.data() + cl.p_scratch;
      double* chain = ct.chain.data();
      std::copy(eh + cl.entity_offset, eh + cl.entity_offset + k, chain);
      for (std::int32_t i = 0; i < cl.rows; ++i) {
        double* next = chain + std::size_t(i + 1) * k;
        std::copy(chain + std::size_t(i) * k, chain + std::size_t(i + 1) * k, next);
        reflect_raw(rel + cl.u_offset + std::size_t(i) * k, p, next, k);
      }
      const double* out = chain + std::size_t(cl.rows) * k;
      const double* t = et + cl.entity_offset;
      double d2 = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const double d = out[i] - t[i];
        d2 += p[i] * d * d;
      }
      total += norm == 2 ? d2 : std::sqrt(d2);
    } else {
      const std::size_t k = std::size_t(cl.ambient);
      const std::size_t km1 = k - 1;
      const double beta = er.betas[ci];
      exp_map_raw(eh + cl.entity_offset, km1, beta, ct.head_g.data());
      boost_raw(rel + cl.b_offset, ct.head_g.data(), k, ct.boosted.data());
      double* chain = ct.spatial_chain.data();
      std::copy(ct.boosted.begin() + 1, ct.boosted.end(), chain);
      for (std::int32_t i = 0; i < cl.rows; ++i) {
        double* next = chain + std::size_t(i + 1) * km1;
        std::copy(chain + std::size_t(i) * km1, chain + std::size_t(i + 1) * km1, next);
        reflect_raw(rel + cl.u_offset + std::size_t(i) * km1, nullptr, next, km1);
      }
      exp_map_raw(et + cl.entity_offset, km1, beta, ct.tail_g.data());
      const double* out_sp = chain + std::size_t(cl.rows) * km1;
      const bool coincident = ct.boosted[0] == ct.tail_g[0] &&
                              coords_equal(out_sp, ct.tail_g.data() + 1, km1);
      double ip = -ct.boosted[0] * ct.tail_g[0];
      for (std::size_t i = 0; i < km1; ++i) ip += out_sp[i] * ct.tail_g[i + 1];
      ct.ip = coincident ? -beta : ip;
      ct.eta_raw = coincident ? 1.0 : -ip / beta;
      const double a = std::acosh(std::max(1.0, ct.eta_raw));
      total += norm == 2 ? beta * a * a : std::sqrt(beta) * a;
    }
  }
  return -total;
}

/// Adjoint of a single reflection y = x - 2(<u,x>_w/<u,u>_w) u. `gx` carries
/// the upstream cotangent in and the input cotangent out; `gu` and `gp`
/// accumulate. w == nullptr is the Euclidean case (no weight gradient).
inline void reflect_backward(const double* u, const double* w, const double* x_in, double* gx,
                             double* gu, double* gp, std::size_t k) {
  const double uu = quad_inner_raw(u, u, w, k);
  if (std::abs(uu) < isotropy_tau(k)) return;  // identity row: no flow to u
  const double ux = quad_inner_raw(u, x_in, w, k);
  const double s = ux / uu;
  double sbar = 0.0;
  for (std::size_t j = 0; j < k; ++j) sbar += u[j] * gx[j];
  sbar *= -2.0;
  const double abar = sbar / uu;
  const double cbar = -abar * s;
  if (w) {
    for (std::size_t j = 0; j < k; ++j) {
      gu[j] += -2.0 * s * gx[j] + abar * w[j] * x_in[j] + 2.0 * cbar * w[j] * u[j];
      if (gp) gp[j] += abar * u[j] * x_in[j] + cbar * u[j] * u[j];
      gx[j] += abar * w[j] * u[j];
    }
  } else {
    for (std::size_t j = 0; j < k; ++j) {
      gu[j] += -2.0 * s * gx[j] + abar * x_in[j] + 2.0 * cbar * u[j];
      gx[j] += abar * u[j];
    }
  }
}

/// Adjoint of the exponential map; adds into gx_accum and *gbeta_accum.
/// Branches match the forward Taylor cutoff so gradients agree with finite
/// differences of the actual forward.
inline void exp_map_backward(const double* x, std::size_t km1, double beta, double gy0,
                             const double* gy_sp, double* gx_accum, double* gbeta_accum) {
  double n2 = 0.0;
  for (std::size_t i = 0; i < km1; ++i) n2 += x[i] * x[i];
  const double root_beta = std::sqrt(beta);
  const double s = std::sqrt(n2) / root_beta;
  double psi, coef_psix, dch_dbeta_term, dpsi_dbeta_coef;
  if (s < kExpMapTaylorCutoff) {
    psi = 1.0 + s * s / 6.0;
    coef_psix = 1.0 / (3.0 * beta);
    dch_dbeta_term = 1.0 - 0.5 * s * s;
    dpsi_dbeta_coef = s * s / (6.0 * beta);
  } else {
    const double ch = std::cosh(s);
    psi = std::sinh(s) / s;
    coef_psix = (ch - psi) / n2;
    dch_dbeta_term = ch - s * s * psi;  // cosh(s) - s sinh(s)
    dpsi_dbeta_coef = (ch - psi) / (2.0 * beta);
  }
  double gdot = 0.0;
  for (std::size_t i = 0; i < km1; ++i) gdot += gy_sp[i] * x[i];
  const double c0 = gy0 * psi / root_beta;
  for (std::size_t i = 0; i < km1; ++i) {
    gx_accum[i] += c0 * x[i] + psi * gy_sp[i] + coef_psix * x[i] * gdot;
  }
  *gbeta_accum += gy0 * dch_dbeta_term / (2.0 * root_beta) - gdot * dpsi_dbeta_coef;
}

/// Backward through one scored triple. dscore = dL/d(score); gradients are
/// accumulated into entity-slice cotangents for head/tail and the flat
/// relation block. Elliptic weight flow can be switched off (frozen-weights
/// training mode).
inline void backward_score_traced(const ModelLayout& lay, int norm, const double* rel,
                                  const EffectiveRelation& er, const double* eh,
                                  const double* et, const ScoreTrace& tr, double dscore,
                                  double* g_eh, double* g_et, double* g_rel,
                                  bool train_elliptic_weights, BackwardScratch& sc) {
  const double dpow = -dscore;  // score = -sum of distance powers
  for (std::size_t ci = 0; ci < lay.comps.size(); ++ci) {
    const auto& cl = lay.comps[ci];
    const auto& ct = tr.comps[ci];
    if (cl.geometry == Geometry::Elliptic) {
      const std::size_t k = std::size_t(cl.ambient);
      const double* p = er.p.data() + cl.p_scratch;
      const double* out = ct.chain.data() + std::size_t(cl.rows) * k;
      const double* t = et + cl.entity_offset;
      double* gx = sc.gx.data();
      double* gp = train_elliptic_weights ? sc.gp.data() : nullptr;
      if (gp) std::fill(gp, gp + k, 0.0);
      if (norm == 2) {
        for (std::size_t i = 0; i < k; ++i) {
          const double diff = out[i] - t[i];
          const double g = dpow * 2.0 * p[i] * diff;
          gx[i] = g;
          g_et[cl.entity_offset + i] -= g;
          if (gp) gp[i] = dpow * diff * diff;
        }
      } else {
        double d2 = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const double diff = out[i] - t[i];
          d2 += p[i] * diff * diff;
        }
        const double d = std::sqrt(d2);
        if (d > 1e-150) {
          for (std::size_t i = 0; i < k; ++i) {
            const double diff = out[i] - t[i];
            const double g = dpow * p[i] * diff / d;
            gx[i] = g;
            g_et[cl.entity_offset + i] -= g;
            if (gp) gp[i] = dpow * diff * diff / (2.0 * d);
          }
        } else {
          std::fill(gx, gx + k, 0.0);  // subgradient at coincident points
        }
      }
      for (std::int32_t i = cl.rows - 1; i >= 0; --i) {
        reflect_backward(rel + cl.u_offset + std::size_t(i) * k, p,
                         ct.chain.data() + std::size_t(i) * k, gx,
                         g_rel + cl.u_offset + std::size_t(i) * k, gp, k);
      }
      for (std::size_t i = 0; i < k; ++i) g_eh[cl.entity_offset + i] += gx[i];
      if (gp) {
        for (std::size_t i = 0; i < k; ++i) {
          g_rel[cl.p_offset + i] += gp[i] * sigmoid(rel[cl.p_offset + i]);
        }
      }
    } else {
      const std::size_t k = std::size_t(cl.ambient);
      const std::size_t km1 = k - 1;
      const double beta = er.betas[ci];
      const double eta = std::max(1.0, ct.eta_raw);
      const double a = std::acosh(eta);
      double dbeta = 0.0;
      double dfdeta;
      if (norm == 2) {
        const double ratio = (eta - 1.0) < 1e-12 ? 1.0 : a / std::sqrt(eta * eta - 1.0);
        dfdeta = 2.0 * beta * ratio;
        dbeta += dpow * a * a;
      } else {
        dfdeta = (eta - 1.0) < 1e-12 ? 0.0 : std::sqrt(beta) / std::sqrt(eta * eta - 1.0);
        dbeta += dpow * a / (2.0 * std::sqrt(beta));
      }
      double dip = 0.0;
      if (ct.eta_raw >= 1.0) {  // clamp inactive
        const double deta = dpow * dfdeta;
        dip = -deta / beta;
        dbeta += deta * ct.ip / (beta * beta);
      }

      const double* out_sp = ct.spatial_chain.data() + std::size_t(cl.rows) * km1;
      const double* gt = ct.tail_g.data();
      double* gx = sc.gx.data();  // spatial cotangent through the rotations
      const double gout0 = dip * (-gt[0]);
      for (std::size_t i = 0; i < km1; ++i) gx[i] = dip * gt[i + 1];
      double* ggt = sc.ggt.data();
      ggt[0] = dip * (-ct.boosted[0]);
      for (std::size_t i = 0; i < km1; ++i) ggt[i + 1] = dip * out_sp[i];

      for (std::int32_t i = cl.rows - 1; i >= 0; --i) {
        reflect_backward(rel + cl.u_offset + std::size_t(i) * km1, nullptr,
                         ct.spatial_chain.data() + std::size_t(i) * km1, gx,
                         g_rel + cl.u_offset + std::size_t(i) * km1, nullptr, km1);
      }

      // boost backward: y = B(b) x with x = head_g, gy = (gout0, gx)
      const double* b = rel + cl.b_offset;
      const double* hx = ct.head_g.data();
      double b2 = 0.0, tdot = 0.0, gdot = 0.0;
      for (std::size_t i = 0; i < km1; ++i) {
        b2 += b[i] * b[i];
        tdot += b[i] * hx[i + 1];
        gdot += b[i] * gx[i];
      }
      const double gamma = std::sqrt(1.0 + b2);
      const double c = 1.0 / (1.0 + gamma);
      const double dc_scale = -1.0 / (gamma * (1.0 + gamma) * (1.0 + gamma));
      double* ghx = sc.ghx.data();
      ghx[0] = gamma * gout0 + gdot;
      for (std::size_t i = 0; i < km1; ++i) {
        ghx[i + 1] = gout0 * b[i] + gx[i] + c * b[i] * gdot;
        g_rel[cl.b_offset + i] += gout0 * (hx[0] * b[i] / gamma + hx[i + 1]) + hx[0] * gx[i] +
                                  c * (tdot * gx[i] + gdot * hx[i + 1]) +
                                  tdot * gdot * dc_scale * b[i];
      }

      exp_map_backward(eh + cl.entity_offset, km1, beta, ghx[0], ghx + 1,
                       g_eh + cl.entity_offset, &dbeta);
      exp_map_backward(et + cl.entity_offset, km1, beta, ggt[0], ggt + 1,
                       g_et + cl.entity_offset, &dbeta);
      g_rel[cl.beta_offset] += dbeta * sigmoid(rel[cl.beta_offset]);
    }
  }
}

}  // namespace detail

}  // namespace golde
