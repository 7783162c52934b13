#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "golde/core.hpp"
#include "golde/data.hpp"
#include "golde/evaluation.hpp"
#include "golde/grad.hpp"
#include "golde/model.hpp"

namespace golde {

struct TrainConfig {
  std::int64_t batch_size = 512;
  double alpha = 1.0;   // self-adversarial temperature
  double margin = 9.0;  // gamma
  double lr = 1e-3;
  std::int64_t neg_size = 64;
  std::int64_t steps = 10000;
  std::int64_t valid_every = 1000;
  std::uint64_t seed = 1;
  int norm = 2;
  Precision precision = Precision::F64;
  int threads = 0;  // 0 = all hardware threads
  std::int64_t valid_candidates = 0;  // 0 = exact validation protocol
  bool filter_accidental = false;     // resample negatives that hit known-true triples
  bool train_elliptic_weights = true; // false pins elliptic weights at their init (Euclidean mode)

  int effective_threads() const { return threads > 0 ? threads : default_threads(); }

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (neg_size < 1) throw ConfigError("negative sample count must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (valid_every < 1) throw ConfigError("validation interval must be >= 1");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (norm != 1 && norm != 2) throw ConfigError("norm must be 1 or 2");
    if (valid_candidates < 0) throw ConfigError("valid-candidates must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Self-adversarial loss
//   L = -log sigmoid(gamma + s_pos) - sum_i p_i log sigmoid(-s_i - gamma)
// with p_i = softmax_i(alpha * s_i). The p_i act as constants during
// differentiation; gradient checks freeze them at their base values.
// ---------------------------------------------------------------------------

inline void adversarial_weights(std::span<const double> neg_scores, double alpha,
                                std::span<double> out) {
  if (neg_scores.empty()) return;
  double mx = alpha * neg_scores[0];
  for (double s : neg_scores) mx = std::max(mx, alpha * s);
  double z = 0.0;
  for (std::size_t i = 0; i < neg_scores.size(); ++i) {
    out[i] = std::exp(alpha * neg_scores[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < neg_scores.size(); ++i) out[i] /= z;
}

inline double loss_with_weights(double pos_score, std::span<const double> neg_scores,
                                std::span<const double> weights, double margin) {
  double loss = softplus(-(margin + pos_score));  // -log sigmoid(gamma + s_pos)
  for (std::size_t i = 0; i < neg_scores.size(); ++i) {
    loss += weights[i] * softplus(neg_scores[i] + margin);  // -log sigmoid(-s_i - gamma)
  }
  return loss;
}

inline double self_adversarial_loss(double pos_score, std::span<const double> neg_scores,
                                    double margin, double alpha) {
  VecD w(neg_scores.size());
  adversarial_weights(neg_scores, alpha, w);
  return loss_with_weights(pos_score, neg_scores, w, margin);
}

// ---------------------------------------------------------------------------
// Negative sampling: per positive, a uniformly chosen corruption side and g
// uniform replacement entities. Accidental true triples are kept by default
// (filtering only affects evaluation); a switch resamples them when wanted.
// ---------------------------------------------------------------------------

struct NegativeSample {
  Side side = Side::Tail;
  std::vector<std::int32_t> entities;
};

struct NegativeBatch {
  std::vector<NegativeSample> items;
};

inline Triple corrupted_triple(const Triple& pos, Side side, std::int32_t e) {
  return side == Side::Head ? Triple{e, pos.r, pos.t} : Triple{pos.h, pos.r, e};
}

inline NegativeSample sample_negatives(const Triple& pos, std::int64_t g, Rng& rng,
                                       std::int64_t num_entities, bool filter_accidental = false,
                                       const FilterIndex* filter = nullptr) {
  if (g < 1) throw ConfigError("negative sample count must be >= 1");
  NegativeSample ns;
  ns.side = rng.below(2) == 0 ? Side::Head : Side::Tail;
  ns.entities.resize(std::size_t(g));
  for (auto& e : ns.entities) {
    e = std::int32_t(rng.below(num_entities));
    if (filter_accidental && filter) {
      for (int tries = 0; tries < 100 && filter->contains(corrupted_triple(pos, ns.side, e));
           ++tries) {
        e = std::int32_t(rng.below(num_entities));
      }
    }
  }
  return ns;
}

/// One RNG stream per positive, derived from (seed, step, index), so batches
/// are reproducible independently of worker count.
inline NegativeBatch sample_negative_batch(std::span<const Triple> positives, std::int64_t g,
                                           std::uint64_t seed, std::uint64_t step,
                                           std::int64_t num_entities,
                                           bool filter_accidental = false,
                                           const FilterIndex* filter = nullptr) {
  NegativeBatch batch;
  batch.items.resize(positives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) {
    Rng rng = Rng::derive(seed, step, i + 1);
    batch.items[i] =
        sample_negatives(positives[i], g, rng, num_entities, filter_accidental, filter);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Batch loss and gradient
// ---------------------------------------------------------------------------

/// Mean per-positive loss, forward only. `frozen_weights`, when given,
/// replaces the adversarial softmax (the finite-difference oracle holds the
/// weights at their base-point values).
inline double batch_loss(const Model& m, std::span<const Triple> positives,
                         const NegativeBatch& negs, const TrainConfig& cfg,
                         const std::vector<VecD>* frozen_weights = nullptr) {
  require_same_size(positives.size(), negs.items.size(), "batch_loss");
  ScoreBuffers buf;
  buf.prepare(m.layout);
  VecD ns, w;
  double total = 0.0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const Triple& pos = positives[i];
    m.check_ids(pos.h, pos.r, pos.t);
    const double* rel = m.relation(pos.r);
    buf.er.prepare(m.layout, rel);
    const double s_pos = detail::score_prepared(m.layout, rel, buf.er, m.entity(pos.h),
                                                m.entity(pos.t), m.config.norm, buf);
    const auto& item = negs.items[i];
    ns.resize(item.entities.size());
    for (std::size_t j = 0; j < item.entities.size(); ++j) {
      const Triple neg = corrupted_triple(pos, item.side, item.entities[j]);
      ns[j] = detail::score_prepared(m.layout, rel, buf.er, m.entity(neg.h), m.entity(neg.t),
                                     m.config.norm, buf);
    }
    if (frozen_weights) {
      total += loss_with_weights(s_pos, ns, (*frozen_weights)[i], cfg.margin);
    } else {
      w.resize(ns.size());
      adversarial_weights(ns, cfg.alpha, w);
      total += loss_with_weights(s_pos, ns, w, cfg.margin);
    }
  }
  return total / double(positives.size());
}

inline std::vector<VecD> adversarial_weight_snapshot(const Model& m,
                                                     std::span<const Triple> positives,
                                                     const NegativeBatch& negs,
                                                     const TrainConfig& cfg) {
  ScoreBuffers buf;
  buf.prepare(m.layout);
  std::vector<VecD> out(positives.size());
  VecD ns;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const Triple& pos = positives[i];
    const double* rel = m.relation(pos.r);
    buf.er.prepare(m.layout, rel);
    const auto& item = negs.items[i];
    ns.resize(item.entities.size());
    for (std::size_t j = 0; j < item.entities.size(); ++j) {
      const Triple neg = corrupted_triple(pos, item.side, item.entities[j]);
      ns[j] = detail::score_prepared(m.layout, rel, buf.er, m.entity(neg.h), m.entity(neg.t),
                                     m.config.norm, buf);
    }
    out[i].resize(ns.size());
    adversarial_weights(ns, cfg.alpha, out[i]);
  }
  return out;
}

namespace detail {

constexpr std::int64_t kGradChunk = 8;

struct ChunkGradOut {
  double loss_sum = 0.0;
  std::vector<std::pair<std::int64_t, VecD>> entity_contribs;
  std::vector<std::pair<std::int64_t, VecD>> relation_contribs;

  void clear() {
    loss_sum = 0.0;
    entity_contribs.clear();
    relation_contribs.clear();
  }
};

struct GradWorkerScratch {
  std::vector<ScoreTrace> traces;
  VecD neg_scores, weights, rel_grad, ent_data;
  std::vector<std::int64_t> ent_ids;
  BackwardScratch back;
  EffectiveRelation er;
  std::size_t entity_dim = 0;

  void prepare(const ModelLayout& lay, std::int64_t g) {
    traces.resize(std::size_t(g + 1));
    for (auto& t : traces) t.prepare(lay);
    neg_scores.resize(std::size_t(g));
    weights.resize(std::size_t(g));
    rel_grad.resize(lay.relation_block);
    back.prepare(lay);
    entity_dim = lay.entity_dim;
    // at most 2 + g distinct entities per positive; pre-size so slot
    // pointers stay valid for the whole backward pass
    ent_data.resize(std::size_t(g + 2) * lay.entity_dim);
    ent_ids.reserve(std::size_t(g + 2));
  }

  double* ent_slot(std::int64_t id) {
    for (std::size_t j = 0; j < ent_ids.size(); ++j) {
      if (ent_ids[j] == id) return ent_data.data() + j * entity_dim;
    }
    ent_ids.push_back(id);
    double* slot = ent_data.data() + (ent_ids.size() - 1) * entity_dim;
    std::fill(slot, slot + entity_dim, 0.0);
    return slot;
  }
};

}  // namespace detail

/// Adds the gradient of the mean batch loss into `out` and returns the loss.
/// Adversarial weights are detached. Work is chunked; chunk outputs are
/// reduced in index order, so results do not depend on the thread count.
inline double accumulate_grad(const Model& m, std::span<const Triple> positives,
                              const NegativeBatch& negs, const TrainConfig& cfg,
                              Gradients& out) {
  require_same_size(positives.size(), negs.items.size(), "accumulate_grad");
  require_same_size(out.entities.size(), m.entities.size(), "accumulate_grad");
  require_same_size(out.relations.size(), m.relations.size(), "accumulate_grad");
  const std::int64_t n = std::int64_t(positives.size());
  if (n == 0) return 0.0;
  const double inv_b = 1.0 / double(n);
  const std::int64_t num_chunks = (n + detail::kGradChunk - 1) / detail::kGradChunk;
  std::vector<detail::ChunkGradOut> chunk_out;
  chunk_out.resize(std::size_t(num_chunks));

  parallel_chunks(n, detail::kGradChunk, cfg.effective_threads(),
                  [&](std::int64_t c, std::int64_t begin, std::int64_t end) {
    thread_local detail::GradWorkerScratch sc;
    sc.prepare(m.layout, std::int64_t(negs.items[std::size_t(begin)].entities.size()));
    auto& co = chunk_out[std::size_t(c)];
    co.clear();
    for (std::int64_t i = begin; i < end; ++i) {
      const Triple& pos = positives[std::size_t(i)];
      m.check_ids(pos.h, pos.r, pos.t);
      const auto& item = negs.items[std::size_t(i)];
      const std::size_t g = item.entities.size();
      if (sc.traces.size() != g + 1) sc.prepare(m.layout, std::int64_t(g));
      const double* rel = m.relation(pos.r);
      sc.er.prepare(m.layout, rel);

      const double s_pos = detail::forward_score_traced(m.layout, m.config.norm, rel, sc.er,
                                                        m.entity(pos.h), m.entity(pos.t),
                                                        sc.traces[0]);
      for (std::size_t j = 0; j < g; ++j) {
        const Triple neg = corrupted_triple(pos, item.side, item.entities[j]);
        m.check_ids(neg.h, neg.r, neg.t);
        sc.neg_scores[j] = detail::forward_score_traced(m.layout, m.config.norm, rel, sc.er,
                                                        m.entity(neg.h), m.entity(neg.t),
                                                        sc.traces[j + 1]);
      }
      bool finite = std::isfinite(s_pos);
      for (std::size_t j = 0; j < g; ++j) finite = finite && std::isfinite(sc.neg_scores[j]);
      if (!finite) {
        throw NumericError("non-finite score for triple (h=" + std::to_string(pos.h) +
                           ", r=" + std::to_string(pos.r) + ", t=" + std::to_string(pos.t) +
                           ") or one of its negatives");
      }

      std::span<const double> neg_view(sc.neg_scores.data(), g);
      adversarial_weights(neg_view, cfg.alpha, std::span<double>(sc.weights.data(), g));
      co.loss_sum += loss_with_weights(s_pos, neg_view,
                                       std::span<const double>(sc.weights.data(), g), cfg.margin);

      sc.ent_ids.clear();
      std::fill(sc.rel_grad.begin(), sc.rel_grad.end(), 0.0);
      const double dpos = -sigmoid(-(cfg.margin + s_pos)) * inv_b;
      detail::backward_score_traced(m.layout, m.config.norm, rel, sc.er, m.entity(pos.h),
                                    m.entity(pos.t), sc.traces[0], dpos, sc.ent_slot(pos.h),
                                    sc.ent_slot(pos.t), sc.rel_grad.data(),
                                    cfg.train_elliptic_weights, sc.back);
      for (std::size_t j = 0; j < g; ++j) {
        const Triple neg = corrupted_triple(pos, item.side, item.entities[j]);
        const double dneg = sc.weights[j] * sigmoid(sc.neg_scores[j] + cfg.margin) * inv_b;
        detail::backward_score_traced(m.layout, m.config.norm, rel, sc.er, m.entity(neg.h),
                                      m.entity(neg.t), sc.traces[j + 1], dneg,
                                      sc.ent_slot(neg.h), sc.ent_slot(neg.t),
                                      sc.rel_grad.data(), cfg.train_elliptic_weights, sc.back);
      }

      for (std::size_t j = 0; j < sc.ent_ids.size(); ++j) {
        const double* slot = sc.ent_data.data() + j * sc.entity_dim;
        co.entity_contribs.emplace_back(sc.ent_ids[j], VecD(slot, slot + sc.entity_dim));
      }
      bool merged = false;
      for (auto& [rid, block] : co.relation_contribs) {
        if (rid == pos.r) {
          for (std::size_t j = 0; j < block.size(); ++j) block[j] += sc.rel_grad[j];
          merged = true;
          break;
        }
      }
      if (!merged) co.relation_contribs.emplace_back(pos.r, sc.rel_grad);
    }
  });

  double loss = 0.0;
  for (const auto& co : chunk_out) {
    loss += co.loss_sum;
    for (const auto& [id, vec] : co.entity_contribs) {
      double* dst = out.entities.data() + std::size_t(id) * m.layout.entity_dim;
      for (std::size_t j = 0; j < vec.size(); ++j) dst[j] += vec[j];
    }
    for (const auto& [rid, block] : co.relation_contribs) {
      double* dst = out.relations.data() + std::size_t(rid) * m.layout.relation_block;
      for (std::size_t j = 0; j < block.size(); ++j) dst[j] += block[j];
    }
  }
  loss *= inv_b;
  if (!std::isfinite(loss)) throw NumericError("non-finite batch loss");
  return loss;
}

inline Gradients grad(const Model& m, std::span<const Triple> positives, const NegativeBatch& negs,
                      const TrainConfig& cfg, double* loss_out = nullptr) {
  Gradients g;
  g.resize_like(m);
  const double loss = accumulate_grad(m, positives, negs, cfg, g);
  if (loss_out) *loss_out = loss;
  return g;
}

// ---------------------------------------------------------------------------
// Adam with bias correction.
// ---------------------------------------------------------------------------

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct OptimizerState {
  VecD m_entities, v_entities, m_relations, v_relations;
  std::int64_t step = 0;

  void init_like(const Model& m) {
    m_entities.assign(m.entities.size(), 0.0);
    v_entities.assign(m.entities.size(), 0.0);
    m_relations.assign(m.relations.size(), 0.0);
    v_relations.assign(m.relations.size(), 0.0);
    step = 0;
  }
};

inline void adam_step(Model& model, const Gradients& g, OptimizerState& st, double lr) {
  require_same_size(st.m_entities.size(), model.entities.size(), "adam_step");
  require_same_size(g.entities.size(), model.entities.size(), "adam_step");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, double(st.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, double(st.step));
  auto update = [&](VecD& theta, const VecD& grad_v, VecD& mm, VecD& vv) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      mm[i] = kAdamBeta1 * mm[i] + (1.0 - kAdamBeta1) * grad_v[i];
      vv[i] = kAdamBeta2 * vv[i] + (1.0 - kAdamBeta2) * grad_v[i] * grad_v[i];
      theta[i] -= lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + kAdamEps);
    }
  };
  update(model.entities, g.entities, st.m_entities, st.v_entities);
  update(model.relations, g.relations, st.m_relations, st.v_relations);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check: central differences on every parameter
// touched by the probe batch, with the adversarial weights frozen at the
// base point (they are detached in the analytic gradient).
// ---------------------------------------------------------------------------

struct FiniteDiffReport {
  double entity = 0.0;
  double reflector = 0.0;
  double elliptic_weight = 0.0;
  double boost = 0.0;
  double curvature = 0.0;

  double overall() const {
    return std::max({entity, reflector, elliptic_weight, boost, curvature});
  }
};

inline FiniteDiffReport finite_diff_check(const Model& model, std::span<const Triple> positives,
                                          const NegativeBatch& negs, const TrainConfig& cfg,
                                          double eps = 1e-6) {
  Model m = model;  // perturbable copy
  Gradients analytic;
  analytic.resize_like(m);
  accumulate_grad(m, positives, negs, cfg, analytic);
  const auto frozen = adversarial_weight_snapshot(m, positives, negs, cfg);

  auto fd_at = [&](double* param) {
    const double orig = *param;
    *param = orig + eps;
    const double lp = batch_loss(m, positives, negs, cfg, &frozen);
    *param = orig - eps;
    const double lm = batch_loss(m, positives, negs, cfg, &frozen);
    *param = orig;
    return (lp - lm) / (2.0 * eps);
  };

  struct ClassAcc {
    double max_diff = 0.0;
    double max_mag = 0.0;
    void add(double a, double f) {
      max_diff = std::max(max_diff, std::abs(a - f));
      max_mag = std::max({max_mag, std::abs(a), std::abs(f)});
    }
    double rel() const { return max_diff / std::max(max_mag, 1e-8); }
  };
  ClassAcc entity, reflector, elliptic_weight, boost, curvature;

  std::vector<std::int64_t> entity_ids, relation_ids;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    entity_ids.push_back(positives[i].h);
    entity_ids.push_back(positives[i].t);
    relation_ids.push_back(positives[i].r);
    for (auto e : negs.items[i].entities) entity_ids.push_back(e);
  }
  auto dedup = [](std::vector<std::int64_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  dedup(entity_ids);
  dedup(relation_ids);

  for (std::int64_t id : entity_ids) {
    for (std::size_t j = 0; j < m.layout.entity_dim; ++j) {
      const std::size_t idx = std::size_t(id) * m.layout.entity_dim + j;
      entity.add(analytic.entities[idx], fd_at(&m.entities[idx]));
    }
  }
  for (std::int64_t rid : relation_ids) {
    const std::size_t base = std::size_t(rid) * m.layout.relation_block;
    for (const auto& cl : m.layout.comps) {
      for (std::int32_t j = 0; j < cl.rows * cl.rows; ++j) {
        const std::size_t idx = base + cl.u_offset + std::size_t(j);
        reflector.add(analytic.relations[idx], fd_at(&m.relations[idx]));
      }
      if (cl.geometry == Geometry::Elliptic) {
        if (cfg.train_elliptic_weights) {
          for (std::int32_t j = 0; j < cl.ambient; ++j) {
            const std::size_t idx = base + cl.p_offset + std::size_t(j);
            elliptic_weight.add(analytic.relations[idx], fd_at(&m.relations[idx]));
          }
        }
      } else {
        for (std::int32_t j = 0; j < cl.rows; ++j) {
          const std::size_t idx = base + cl.b_offset + std::size_t(j);
          boost.add(analytic.relations[idx], fd_at(&m.relations[idx]));
        }
        const std::size_t idx = base + cl.beta_offset;
        curvature.add(analytic.relations[idx], fd_at(&m.relations[idx]));
      }
    }
  }
  return {entity.rel(), reflector.rel(), elliptic_weight.rel(), boost.rel(), curvature.rel()};
}

// ---------------------------------------------------------------------------
// Training loop: sample -> score -> loss -> grad -> adam, with periodic
// filtered validation and best-checkpoint tracking.
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::int64_t step = 0;
  double loss = 0.0;
  bool has_loss = false;
  std::string split;
  MetricsReport metrics;
  bool has_metrics = false;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

struct TrainResult {
  Model model;  // best on validation MRR; final model when validation never ran
  std::int64_t best_step = 0;
  double best_valid_mrr = -1.0;
  VecD loss_history;
};

inline TrainResult train(const Dataset& data, const ProductManifoldConfig& manifold,
                         const TrainConfig& cfg, const MetricsSink& sink = {}) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("training split is empty");
  ProductManifoldConfig mf = manifold;
  mf.norm = cfg.norm;
  mf.validate();

  const FilterIndex filter = FilterIndex::build(data.train, data.valid, data.test);
  const std::int64_t num_entities = data.vocab.num_entities();
  Model model = init_params(mf, num_entities, data.vocab.num_relations(), cfg.seed);

  OptimizerState opt;
  opt.init_like(model);
  Gradients grads;
  grads.resize_like(model);

  TrainResult result;
  bool have_best = false;
  std::vector<Triple> positives(std::size_t(cfg.batch_size));

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    Rng batch_rng = Rng::derive(cfg.seed, std::uint64_t(step), 0);
    for (auto& p : positives) {
      p = data.train[std::size_t(batch_rng.below(std::int64_t(data.train.size())))];
    }
    const NegativeBatch negs =
        sample_negative_batch(positives, cfg.neg_size, cfg.seed, std::uint64_t(step),
                              num_entities, cfg.filter_accidental, &filter);
    std::fill(grads.entities.begin(), grads.entities.end(), 0.0);
    std::fill(grads.relations.begin(), grads.relations.end(), 0.0);
    const double loss = accumulate_grad(model, positives, negs, cfg, grads);
    adam_step(model, grads, opt, cfg.lr);
    result.loss_history.push_back(loss);
    if (sink) sink({step, loss, true, "train", {}, false});

    const bool validate_now =
        !data.valid.empty() && (step % cfg.valid_every == 0 || step == cfg.steps);
    if (validate_now) {
      const std::uint64_t cap_seed = splitmix64(cfg.seed ^ splitmix64(std::uint64_t(step)));
      const MetricsReport rep = evaluate(model, data.valid, filter, cfg.effective_threads(),
                                         cfg.valid_candidates, cap_seed);
      if (sink) sink({step, loss, true, "valid", rep, true});
      if (!have_best || rep.mrr > result.best_valid_mrr) {
        have_best = true;
        result.best_valid_mrr = rep.mrr;
        result.best_step = step;
        result.model = model;
      }
    }
  }
  if (!have_best) {
    result.model = std::move(model);
    result.best_step = cfg.steps;
  }
  return result;
}

}  // namespace golde
