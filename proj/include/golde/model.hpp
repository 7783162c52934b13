#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "golde/core.hpp"
#include "golde/manifolds.hpp"
#include "golde/quadratic.hpp"

namespace golde {

// ---------------------------------------------------------------------------
// Product-manifold configuration. Entities store one flat real vector; each
// component consumes a slice of it. Hyperbolic components consume one fewer
// stored dimension than their ambient dimension because the exponential map
// lifts R^{k-1} onto the k-dimensional sheet. Both accountings are reported
// to keep checkpoints unambiguous.
// ---------------------------------------------------------------------------

enum class Geometry : std::uint8_t { Elliptic, Hyperbolic };

struct Component {
  Geometry geometry = Geometry::Elliptic;
  std::int32_t ambient = 2;  // k_i

  std::int32_t stored() const {
    return geometry == Geometry::Hyperbolic ? ambient - 1 : ambient;
  }
};

struct ProductManifoldConfig {
  std::vector<Component> components;
  int norm = 2;  // exponent applied to per-component distances in the score

  std::int64_t stored_dim() const {
    std::int64_t d = 0;
    for (const auto& c : components) d += c.stored();
    return d;
  }

  std::int64_t ambient_dim() const {
    std::int64_t d = 0;
    for (const auto& c : components) d += c.ambient;
    return d;
  }

  void validate() const {
    if (components.empty()) throw ConfigError("manifold needs at least one component");
    for (const auto& c : components) {
      if (c.ambient < 2) throw ConfigError("every component dimension must be >= 2");
    }
    if (norm != 1 && norm != 2) throw ConfigError("norm must be 1 or 2");
  }

  /// Compact form used in checkpoints and flags, e.g. "P4,P4,Q5,Q5".
  std::string compact() const {
    std::string s;
    for (std::size_t i = 0; i < components.size(); ++i) {
      if (i > 0) s += ',';
      s += components[i].geometry == Geometry::Elliptic ? 'P' : 'Q';
      s += std::to_string(components[i].ambient);
    }
    return s;
  }

  std::string describe() const {
    std::string s = compact();
    s += " (stored dim " + std::to_string(stored_dim()) + ", ambient dim " +
         std::to_string(ambient_dim()) + ", norm " + std::to_string(norm) + ")";
    return s;
  }

  static ProductManifoldConfig parse_compact(const std::string& text, int norm) {
    ProductManifoldConfig cfg;
    cfg.norm = norm;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.size() < 2 || (tok[0] != 'P' && tok[0] != 'Q')) {
        throw ConfigError("bad manifold component '" + tok + "' (expected e.g. P4 or Q5)");
      }
      Component c;
      c.geometry = tok[0] == 'P' ? Geometry::Elliptic : Geometry::Hyperbolic;
      try {
        std::size_t pos = 0;
        c.ambient = std::int32_t(std::stol(tok.substr(1), &pos));
        if (pos + 1 != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("bad manifold component '" + tok + "'");
      }
      cfg.components.push_back(c);
    }
    cfg.validate();
    return cfg;
  }

  /// Builds m_P elliptic components of stored size kstar/m_P and m_Q
  /// hyperbolic components splitting the remaining stored dimensions.
  static ProductManifoldConfig from_partition(std::int64_t dim, std::int64_t kstar,
                                              std::int64_t mp, std::int64_t mq, int norm) {
    if (dim < 1) throw ConfigError("entity dimension must be positive");
    if (mp < 0 || mq < 0 || mp + mq < 1) throw ConfigError("need at least one component");
    if (kstar < 0 || kstar > dim) throw ConfigError("kstar must lie in [0, dim]");
    ProductManifoldConfig cfg;
    cfg.norm = norm;
    if (mp == 0) {
      if (kstar != 0) throw ConfigError("kstar must be 0 when mp is 0");
    } else {
      if (kstar % mp != 0) {
        throw ConfigError("kstar " + std::to_string(kstar) + " is not divisible by mp " +
                          std::to_string(mp));
      }
      const std::int64_t kp = kstar / mp;
      if (kp < 2) throw ConfigError("elliptic component dimension must be >= 2");
      for (std::int64_t i = 0; i < mp; ++i) {
        cfg.components.push_back({Geometry::Elliptic, std::int32_t(kp)});
      }
    }
    const std::int64_t rest = dim - kstar;
    if (mq == 0) {
      if (rest != 0) throw ConfigError("dim - kstar must be 0 when mq is 0");
    } else {
      if (rest % mq != 0) {
        throw ConfigError("dim - kstar (" + std::to_string(rest) + ") is not divisible by mq " +
                          std::to_string(mq));
      }
      const std::int64_t sq = rest / mq;  // stored dims per hyperbolic component
      if (sq < 1) throw ConfigError("hyperbolic components need at least one stored dimension");
      for (std::int64_t i = 0; i < mq; ++i) {
        cfg.components.push_back({Geometry::Hyperbolic, std::int32_t(sq + 1)});
      }
    }
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Flat parameter layout. All relation parameters live in one block per
// relation so gradients and optimizer state are plain flat arrays.
//
// Per component, in order:
//   elliptic   k x k reflector rows, then k raw elliptic weights
//   hyperbolic (k-1) x (k-1) reflector rows, then k-1 boost entries,
//              then 1 raw curvature
// ---------------------------------------------------------------------------

struct ComponentLayout {
  Geometry geometry;
  std::int32_t ambient;
  std::int32_t stored;
  std::int32_t rows;      // number of reflector rows; equals their dimension
  std::size_t entity_offset;
  std::size_t u_offset;
  std::size_t p_offset;     // elliptic
  std::size_t b_offset;     // hyperbolic
  std::size_t beta_offset;  // hyperbolic
  std::size_t p_scratch;    // offset into the effective-weights scratch
};

struct ModelLayout {
  std::vector<ComponentLayout> comps;
  std::size_t entity_dim = 0;
  std::size_t relation_block = 0;
  std::size_t p_scratch_total = 0;
  std::int32_t max_ambient = 0;

  static ModelLayout build(const ProductManifoldConfig& cfg) {
    cfg.validate();
    ModelLayout lay;
    std::size_t eoff = 0, roff = 0, poff = 0;
    for (const auto& c : cfg.components) {
      ComponentLayout cl{};
      cl.geometry = c.geometry;
      cl.ambient = c.ambient;
      cl.stored = c.stored();
      cl.entity_offset = eoff;
      eoff += std::size_t(cl.stored);
      cl.u_offset = roff;
      if (c.geometry == Geometry::Elliptic) {
        cl.rows = c.ambient;
        roff += std::size_t(cl.rows) * std::size_t(cl.rows);
        cl.p_offset = roff;
        roff += std::size_t(c.ambient);
        cl.p_scratch = poff;
        poff += std::size_t(c.ambient);
      } else {
        cl.rows = c.ambient - 1;
        roff += std::size_t(cl.rows) * std::size_t(cl.rows);
        cl.b_offset = roff;
        roff += std::size_t(cl.rows);
        cl.beta_offset = roff;
        roff += 1;
      }
      lay.max_ambient = std::max(lay.max_ambient, c.ambient);
      lay.comps.push_back(cl);
    }
    lay.entity_dim = eoff;
    lay.relation_block = roff;
    lay.p_scratch_total = poff;
    return lay;
  }
};

struct Model {
  ProductManifoldConfig config;
  ModelLayout layout;
  std::int64_t num_entities = 0;
  std::int64_t num_relations = 0;
  VecD entities;
  VecD relations;

  void check_ids(std::int64_t h, std::int64_t r, std::int64_t t) const {
    if (h < 0 || h >= num_entities || t < 0 || t >= num_entities) {
      throw ContractError("entity id out of range");
    }
    if (r < 0 || r >= num_relations) throw ContractError("relation id out of range");
  }

  const double* entity(std::int64_t v) const { return entities.data() + v * layout.entity_dim; }
  double* entity(std::int64_t v) { return entities.data() + v * layout.entity_dim; }
  const double* relation(std::int64_t r) const {
    return relations.data() + r * layout.relation_block;
  }
  double* relation(std::int64_t r) { return relations.data() + r * layout.relation_block; }
};

/// Deterministic initialization: entities uniform(-0.5, 0.5) / sqrt(dim),
/// reflector rows standard normal, elliptic weights exactly 1, boosts zero,
/// curvature radii exactly 1.
inline Model init_params(const ProductManifoldConfig& cfg, std::int64_t num_entities,
                         std::int64_t num_relations, std::uint64_t seed) {
  if (num_entities < 1 || num_relations < 1) {
    throw ConfigError("init_params: vocabulary sizes must be positive");
  }
  Model m;
  m.config = cfg;
  m.layout = ModelLayout::build(cfg);
  m.num_entities = num_entities;
  m.num_relations = num_relations;
  m.entities.resize(std::size_t(num_entities) * m.layout.entity_dim);
  m.relations.resize(std::size_t(num_relations) * m.layout.relation_block);

  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(double(m.layout.entity_dim));
  for (double& e : m.entities) e = rng.uniform(-0.5, 0.5) * scale;

  const double p_raw = reparam_raw_for(1.0, kEllipticWeightFloor);
  const double beta_raw = reparam_raw_for(1.0, kCurvatureFloor);
  for (std::int64_t r = 0; r < num_relations; ++r) {
    double* rel = m.relation(r);
    for (const auto& cl : m.layout.comps) {
      double* u = rel + cl.u_offset;
      for (std::int32_t i = 0; i < cl.rows * cl.rows; ++i) u[i] = rng.normal();
      if (cl.geometry == Geometry::Elliptic) {
        for (std::int32_t i = 0; i < cl.ambient; ++i) rel[cl.p_offset + std::size_t(i)] = p_raw;
      } else {
        for (std::int32_t i = 0; i < cl.rows; ++i) rel[cl.b_offset + std::size_t(i)] = 0.0;
        rel[cl.beta_offset] = beta_raw;
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Scoring. score(h, r, t) = -sum_i d_i^l where d_i is the component distance
// between the transformed head and the r-associated tail. Tails share the
// head's association (elliptic: raw slice; hyperbolic: exponential map) but
// are never transformed by the relation.
// ---------------------------------------------------------------------------

/// Reparameterized per-relation values; compute once, score many.
struct EffectiveRelation {
  VecD p;      // effective elliptic weights, indexed by ComponentLayout::p_scratch
  VecD betas;  // effective curvature per component (hyperbolic slots only)

  void prepare(const ModelLayout& lay, const double* rel) {
    p.resize(lay.p_scratch_total);
    betas.assign(lay.comps.size(), 0.0);
    for (std::size_t ci = 0; ci < lay.comps.size(); ++ci) {
      const auto& cl = lay.comps[ci];
      if (cl.geometry == Geometry::Elliptic) {
        for (std::int32_t i = 0; i < cl.ambient; ++i) {
          p[cl.p_scratch + std::size_t(i)] = elliptic_weight_from_raw(rel[cl.p_offset + std::size_t(i)]);
        }
      } else {
        betas[ci] = curvature_from_raw(rel[cl.beta_offset]);
      }
    }
  }
};

struct ScoreBuffers {
  VecD head, tail, tmp;
  EffectiveRelation er;

  void prepare(const ModelLayout& lay) {
    head.resize(std::size_t(lay.max_ambient));
    tail.resize(std::size_t(lay.max_ambient));
    tmp.resize(std::size_t(lay.max_ambient));
  }
};

namespace detail {

inline double component_distance_pow(const ComponentLayout& cl, const double* rel,
                                     const EffectiveRelation& er, std::size_t ci,
                                     const double* eh, const double* et, int norm,
                                     ScoreBuffers& buf) {
  if (cl.geometry == Geometry::Elliptic) {
    const std::size_t k = std::size_t(cl.ambient);
    const double* p = er.p.data() + cl.p_scratch;
    double* h = buf.head.data();
    std::copy(eh + cl.entity_offset, eh + cl.entity_offset + k, h);
    orth_apply_raw(rel + cl.u_offset, std::size_t(cl.rows), p, h, k);
    const double* t = et + cl.entity_offset;
    double d2 = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double d = h[i] - t[i];
      d2 += p[i] * d * d;
    }
    return norm == 2 ? d2 : std::sqrt(d2);
  }
  const std::size_t k = std::size_t(cl.ambient);
  const std::size_t km1 = k - 1;
  const double beta = er.betas[ci];
  exp_map_raw(eh + cl.entity_offset, km1, beta, buf.tmp.data());
  boost_raw(rel + cl.b_offset, buf.tmp.data(), k, buf.head.data());
  orth_apply_raw(rel + cl.u_offset, km1, nullptr, buf.head.data() + 1, km1);
  exp_map_raw(et + cl.entity_offset, km1, beta, buf.tail.data());
  const double d = hyperbolic_distance_raw(buf.head.data(), buf.tail.data(), k, beta);
  return norm == 2 ? d * d : d;
}

inline double score_prepared(const ModelLayout& lay, const double* rel,
                             const EffectiveRelation& er, const double* eh, const double* et,
                             int norm, ScoreBuffers& buf) {
  double total = 0.0;
  for (std::size_t ci = 0; ci < lay.comps.size(); ++ci) {
    total += component_distance_pow(lay.comps[ci], rel, er, ci, eh, et, norm, buf);
  }
  return -total;
}

}  // namespace detail

inline double score(const Model& m, std::int64_t h, std::int64_t r, std::int64_t t) {
  m.check_ids(h, r, t);
  ScoreBuffers buf;
  buf.prepare(m.layout);
  buf.er.prepare(m.layout, m.relation(r));
  return detail::score_prepared(m.layout, m.relation(r), buf.er, m.entity(h), m.entity(t),
                                m.config.norm, buf);
}

/// The relation-transformed head, one ambient vector per component.
inline std::vector<VecD> transform_head(const Model& m, std::int64_t h, std::int64_t r) {
  m.check_ids(h, r, h);
  const double* rel = m.relation(r);
  const double* eh = m.entity(h);
  std::vector<VecD> out;
  for (const auto& cl : m.layout.comps) {
    if (cl.geometry == Geometry::Elliptic) {
      const std::size_t k = std::size_t(cl.ambient);
      VecD p(k), v(eh + cl.entity_offset, eh + cl.entity_offset + k);
      for (std::size_t i = 0; i < k; ++i) p[i] = elliptic_weight_from_raw(rel[cl.p_offset + i]);
      detail::orth_apply_raw(rel + cl.u_offset, std::size_t(cl.rows), p.data(), v.data(), k);
      out.push_back(std::move(v));
    } else {
      const std::size_t k = std::size_t(cl.ambient);
      const std::size_t km1 = k - 1;
      const double beta = curvature_from_raw(rel[cl.beta_offset]);
      VecD g(k), v(k);
      detail::exp_map_raw(eh + cl.entity_offset, km1, beta, g.data());
      detail::boost_raw(rel + cl.b_offset, g.data(), k, v.data());
      detail::orth_apply_raw(rel + cl.u_offset, km1, nullptr, v.data() + 1, km1);
      out.push_back(std::move(v));
    }
  }
  return out;
}

/// The r-associated (untransformed) embedding, as used on the tail side.
inline std::vector<VecD> tail_association(const Model& m, std::int64_t t, std::int64_t r) {
  m.check_ids(t, r, t);
  const double* rel = m.relation(r);
  const double* et = m.entity(t);
  std::vector<VecD> out;
  for (const auto& cl : m.layout.comps) {
    if (cl.geometry == Geometry::Elliptic) {
      out.emplace_back(et + cl.entity_offset, et + cl.entity_offset + std::size_t(cl.ambient));
    } else {
      const std::size_t km1 = std::size_t(cl.ambient) - 1;
      VecD g(std::size_t(cl.ambient));
      detail::exp_map_raw(et + cl.entity_offset, km1, curvature_from_raw(rel[cl.beta_offset]),
                          g.data());
      out.push_back(std::move(g));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logical-pattern diagnostics over materialized relation matrices. A relation
// models symmetry when G G = I, inversion when G_{r1} = G_{r2}^T, and
// composition when G_{r1} = G_{r3} G_{r2}; the defects below measure how far
// trained parameters are from those identities.
// ---------------------------------------------------------------------------

constexpr std::int32_t kMaxDiagnosticDim = 64;

inline Mat relation_component_matrix(const Model& m, std::int64_t r, std::size_t ci) {
  if (r < 0 || r >= m.num_relations) throw ContractError("relation id out of range");
  const auto& cl = m.layout.comps.at(ci);
  if (cl.ambient > kMaxDiagnosticDim) {
    throw DiagnosticsError("component dimension " + std::to_string(cl.ambient) +
                           " too large to materialize (limit " +
                           std::to_string(kMaxDiagnosticDim) + ")");
  }
  const double* rel = m.relation(r);
  ReflectorSet u(std::size_t(cl.rows), std::size_t(cl.rows));
  std::copy(rel + cl.u_offset, rel + cl.u_offset + std::size_t(cl.rows) * std::size_t(cl.rows),
            u.rows.begin());
  if (cl.geometry == Geometry::Elliptic) {
    VecD p(std::size_t(cl.ambient));
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = elliptic_weight_from_raw(rel[cl.p_offset + i]);
    return orth_matrix(u, p);
  }
  const Mat rot = orth_matrix(u, euclidean_weights(std::size_t(cl.rows)));
  Mat block = Mat::identity(cl.ambient);
  for (std::int64_t i = 0; i < rot.rows; ++i) {
    for (std::int64_t j = 0; j < rot.cols; ++j) block(i + 1, j + 1) = rot(i, j);
  }
  const Mat boost =
      boost_matrix(std::span<const double>(rel + cl.b_offset, std::size_t(cl.rows)));
  return matmul(block, boost);
}

inline double symmetry_defect(const Model& m, std::int64_t r) {
  double defect = 0.0;
  for (std::size_t ci = 0; ci < m.layout.comps.size(); ++ci) {
    const Mat g = relation_component_matrix(m, r, ci);
    defect = std::max(defect, max_abs_diff(matmul(g, g), Mat::identity(g.rows)));
  }
  return defect;
}

inline double inversion_defect(const Model& m, std::int64_t r1, std::int64_t r2) {
  double defect = 0.0;
  for (std::size_t ci = 0; ci < m.layout.comps.size(); ++ci) {
    const Mat g1 = relation_component_matrix(m, r1, ci);
    const Mat g2 = relation_component_matrix(m, r2, ci);
    defect = std::max(defect, max_abs_diff(g1, transpose(g2)));
  }
  return defect;
}

inline double composition_defect(const Model& m, std::int64_t r1, std::int64_t r2,
                                 std::int64_t r3) {
  double defect = 0.0;
  for (std::size_t ci = 0; ci < m.layout.comps.size(); ++ci) {
    const Mat g1 = relation_component_matrix(m, r1, ci);
    const Mat g2 = relation_component_matrix(m, r2, ci);
    const Mat g3 = relation_component_matrix(m, r3, ci);
    defect = std::max(defect, max_abs_diff(g1, matmul(g3, g2)));
  }
  return defect;
}

/// Form-preservation defect of every component matrix of r, elliptic ones
/// measured under the relation's own weights, hyperbolic ones under the
/// Lorentz signature.
inline double relation_orthogonality_defect(const Model& m, std::int64_t r) {
  double defect = 0.0;
  const double* rel = m.relation(r);
  for (std::size_t ci = 0; ci < m.layout.comps.size(); ++ci) {
    const auto& cl = m.layout.comps[ci];
    const Mat g = relation_component_matrix(m, r, ci);
    if (cl.geometry == Geometry::Elliptic) {
      VecD p(std::size_t(cl.ambient));
      for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = elliptic_weight_from_raw(rel[cl.p_offset + i]);
      }
      defect = std::max(defect, orthogonality_defect(g, p));
    } else {
      defect = std::max(defect, orthogonality_defect(g, lorentz_weights(std::size_t(cl.ambient))));
    }
  }
  return defect;
}

// ---------------------------------------------------------------------------
// Checkpoints: a line-oriented text header followed by raw little-endian
// IEEE-754 arrays (entities, then relation blocks in id order). f64 round
// trips bit-exactly; f32 is a lossy storage mode. Exact layout in README.md.
// ---------------------------------------------------------------------------

enum class Precision : std::uint8_t { F64, F32 };

inline const char* precision_name(Precision p) { return p == Precision::F64 ? "f64" : "f32"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "f64") return Precision::F64;
  if (s == "f32") return Precision::F32;
  throw ConfigError("unknown precision '" + s + "' (expected f64 or f32)");
}

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  Precision precision = Precision::F64;
};

namespace detail {

inline void write_array(std::ofstream& out, const VecD& v, Precision prec) {
  std::vector<unsigned char> buf;
  if (prec == Precision::F64) {
    buf.resize(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); ++i) store_f64_le(v[i], buf.data() + 8 * i);
  } else {
    buf.resize(v.size() * 4);
    for (std::size_t i = 0; i < v.size(); ++i) store_f32_le(float(v[i]), buf.data() + 4 * i);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

inline void read_array(std::ifstream& in, VecD& v, Precision prec) {
  const std::size_t width = prec == Precision::F64 ? 8 : 4;
  std::vector<unsigned char> buf(v.size() * width);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (std::size_t(in.gcount()) != buf.size()) {
    throw ContractError("corrupt checkpoint: truncated parameter payload");
  }
  if (prec == Precision::F64) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = load_f64_le(buf.data() + 8 * i);
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(load_f32_le(buf.data() + 4 * i));
  }
}

}  // namespace detail

inline void save_checkpoint(const Model& m, const std::string& path, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  out << "golde-checkpoint v1\n";
  out << "entities " << m.num_entities << "\n";
  out << "relations " << m.num_relations << "\n";
  out << "manifold " << m.config.compact() << "\n";
  out << "norm " << m.config.norm << "\n";
  out << "precision " << precision_name(meta.precision) << "\n";
  out << "seed " << meta.seed << "\n";
  out << "step " << meta.step << "\n";
  out << "data\n";
  detail::write_array(out, m.entities, meta.precision);
  detail::write_array(out, m.relations, meta.precision);
  if (!out) throw Error("failed writing checkpoint: " + path);
}

struct LoadedModel {
  Model model;
  CheckpointMeta meta;
};

inline LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  auto next_line = [&](const char* field) {
    std::string line;
    if (!std::getline(in, line)) throw ContractError(std::string("corrupt checkpoint: missing ") + field);
    return line;
  };
  auto expect_kv = [&](const char* key) {
    const std::string line = next_line(key);
    const std::string prefix = std::string(key) + " ";
    if (line.rfind(prefix, 0) != 0) {
      throw ContractError("corrupt checkpoint: expected '" + std::string(key) + "', got '" + line + "'");
    }
    return line.substr(prefix.size());
  };

  if (next_line("magic") != "golde-checkpoint v1") {
    throw ContractError("corrupt checkpoint: bad magic line");
  }
  LoadedModel lm;
  std::int64_t num_entities = 0, num_relations = 0;
  std::string manifold_text;
  int norm = 2;
  try {
    num_entities = std::stoll(expect_kv("entities"));
    num_relations = std::stoll(expect_kv("relations"));
    manifold_text = expect_kv("manifold");
    norm = std::stoi(expect_kv("norm"));
    lm.meta.precision = parse_precision(expect_kv("precision"));
    lm.meta.seed = std::stoull(expect_kv("seed"));
    lm.meta.step = std::stoll(expect_kv("step"));
  } catch (const ContractError&) {
    throw;
  } catch (const std::exception& e) {
    throw ContractError(std::string("corrupt checkpoint: ") + e.what());
  }
  if (next_line("data marker") != "data") {
    throw ContractError("corrupt checkpoint: missing data marker");
  }
  if (num_entities < 1 || num_relations < 1) {
    throw ContractError("corrupt checkpoint: non-positive vocabulary counts");
  }

  Model& m = lm.model;
  try {
    m.config = ProductManifoldConfig::parse_compact(manifold_text, norm);
  } catch (const ConfigError& e) {
    throw ContractError(std::string("corrupt checkpoint: ") + e.what());
  }
  m.layout = ModelLayout::build(m.config);
  m.num_entities = num_entities;
  m.num_relations = num_relations;
  m.entities.resize(std::size_t(num_entities) * m.layout.entity_dim);
  m.relations.resize(std::size_t(num_relations) * m.layout.relation_block);
  detail::read_array(in, m.entities, lm.meta.precision);
  detail::read_array(in, m.relations, lm.meta.precision);
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0) {
    throw ContractError("corrupt checkpoint: trailing bytes after parameter payload");
  }
  for (const auto* arr : {&m.entities, &m.relations}) {
    for (double v : *arr) {
      if (!std::isfinite(v)) throw ContractError("corrupt checkpoint: non-finite parameter");
    }
  }
  return lm;
}

}  // namespace golde
