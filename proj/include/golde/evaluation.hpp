#pragma once

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "golde/core.hpp"
#include "golde/data.hpp"
#include "golde/model.hpp"

namespace golde {

// ---------------------------------------------------------------------------
// Filtered ranking. For each test triple and each side, the true triple is
// scored against every candidate with that slot replaced; candidates that
// appear anywhere in the filter index (other than the true triple itself)
// are removed before counting. Ties get the average rank: 1 + #strictly
// greater + #ties/2, which reduces to the ordinary rank when all scores are
// distinct.
// ---------------------------------------------------------------------------

struct RankResult {
  Triple triple;
  Side side = Side::Tail;
  double rank = 1.0;
};

struct MetricsReport {
  double mr = 0.0;
  double mrr = 0.0;
  double h1 = 0.0;
  double h3 = 0.0;
  double h10 = 0.0;
  std::int64_t samples = 0;
};

inline MetricsReport aggregate_ranks(std::span<const RankResult> ranks) {
  MetricsReport rep;
  for (const auto& r : ranks) {
    rep.mr += r.rank;
    rep.mrr += 1.0 / r.rank;
    rep.h1 += r.rank <= 1.0 ? 1.0 : 0.0;
    rep.h3 += r.rank <= 3.0 ? 1.0 : 0.0;
    rep.h10 += r.rank <= 10.0 ? 1.0 : 0.0;
  }
  rep.samples = std::int64_t(ranks.size());
  if (rep.samples > 0) {
    const double n = double(rep.samples);
    rep.mr /= n;
    rep.mrr /= n;
    rep.h1 /= n;
    rep.h3 /= n;
    rep.h10 /= n;
  }
  return rep;
}

struct RankWorkspace {
  ScoreBuffers buf;
};

/// Ranks one triple on one side. `candidates` restricts the replacement set
/// (validation subsampling); it must contain the true entity. Candidate
/// scores follow the exact arithmetic of score(), so ranks are reproducible
/// against independently computed scores.
inline RankResult rank_triple(const Model& m, const Triple& triple, const FilterIndex& filter,
                              Side side, RankWorkspace& ws,
                              std::span<const std::int32_t> candidates = {}) {
  m.check_ids(triple.h, triple.r, triple.t);
  ws.buf.prepare(m.layout);
  ws.buf.er.prepare(m.layout, m.relation(triple.r));
  const double* rel = m.relation(triple.r);
  const std::int32_t true_entity = side == Side::Tail ? triple.t : triple.h;
  const double* fixed = side == Side::Tail ? m.entity(triple.h) : m.entity(triple.t);

  auto candidate_score = [&](std::int32_t c) {
    const double* ce = m.entity(c);
    return side == Side::Tail
               ? detail::score_prepared(m.layout, rel, ws.buf.er, fixed, ce, m.config.norm, ws.buf)
               : detail::score_prepared(m.layout, rel, ws.buf.er, ce, fixed, m.config.norm, ws.buf);
  };
  auto filtered_out = [&](std::int32_t c) {
    if (c == true_entity) return false;
    return side == Side::Tail ? filter.contains_tail(triple.h, triple.r, c)
                              : filter.contains_head(c, triple.r, triple.t);
  };

  const double true_score = candidate_score(true_entity);
  std::int64_t greater = 0, ties = 0;
  auto consider = [&](std::int32_t c) {
    if (c == true_entity || filtered_out(c)) return;
    const double s = candidate_score(c);
    if (s > true_score) {
      ++greater;
    } else if (s == true_score) {
      ++ties;
    }
  };
  if (candidates.empty()) {
    for (std::int32_t c = 0; c < std::int32_t(m.num_entities); ++c) consider(c);
  } else {
    for (std::int32_t c : candidates) consider(c);
  }
  return {triple, side, 1.0 + double(greater) + double(ties) / 2.0};
}

namespace detail {

/// cap distinct entity ids sampled without replacement (Floyd), plus the true
/// entity if it was not drawn.
inline std::vector<std::int32_t> sample_candidates(std::int64_t n, std::int64_t cap,
                                                   std::int32_t true_entity, Rng rng) {
  std::unordered_set<std::int32_t> set;
  set.reserve(std::size_t(cap) + 1);
  for (std::int64_t j = n - cap; j < n; ++j) {
    const std::int32_t t = std::int32_t(rng.below(j + 1));
    if (!set.insert(t).second) set.insert(std::int32_t(j));
  }
  set.insert(true_entity);
  return std::vector<std::int32_t>(set.begin(), set.end());
}

}  // namespace detail

/// Two rank samples per triple (head- and tail-replacement), computed in
/// parallel over fixed chunks; output order is independent of thread count.
/// candidate_cap > 0 subsamples the replacement set (validation speedup);
/// cap 0 means the exact protocol.
inline std::vector<RankResult> rank_split(const Model& m, std::span<const Triple> split,
                                          const FilterIndex& filter, int threads,
                                          std::int64_t candidate_cap = 0,
                                          std::uint64_t cap_seed = 0) {
  std::vector<RankResult> out(split.size() * 2);
  const std::int64_t items = std::int64_t(out.size());
  parallel_chunks(items, 16, threads, [&](std::int64_t, std::int64_t begin, std::int64_t end) {
    RankWorkspace ws;
    for (std::int64_t i = begin; i < end; ++i) {
      const Triple& t = split[std::size_t(i / 2)];
      const Side side = (i % 2 == 0) ? Side::Head : Side::Tail;
      if (candidate_cap > 0 && candidate_cap < m.num_entities) {
        const std::int32_t true_entity = side == Side::Tail ? t.t : t.h;
        const auto cands = detail::sample_candidates(
            m.num_entities, candidate_cap, true_entity, Rng::derive(cap_seed, std::uint64_t(i)));
        out[std::size_t(i)] = rank_triple(m, t, filter, side, ws, cands);
      } else {
        out[std::size_t(i)] = rank_triple(m, t, filter, side, ws);
      }
    }
  });
  return out;
}

inline MetricsReport evaluate(const Model& m, std::span<const Triple> split,
                              const FilterIndex& filter, int threads = 1,
                              std::int64_t candidate_cap = 0, std::uint64_t cap_seed = 0) {
  const auto ranks = rank_split(m, split, filter, threads, candidate_cap, cap_seed);
  return aggregate_ranks(ranks);
}

struct RelationReport {
  std::int32_t relation = 0;
  MetricsReport metrics;
  std::int64_t triple_count = 0;
};

/// Per-relation breakdown over rank results, ascending by relation id.
inline std::vector<RelationReport> per_relation_report(std::span<const RankResult> ranks) {
  std::vector<std::int32_t> rels;
  for (const auto& r : ranks) rels.push_back(r.triple.r);
  std::sort(rels.begin(), rels.end());
  rels.erase(std::unique(rels.begin(), rels.end()), rels.end());

  std::vector<RelationReport> out;
  for (std::int32_t rel : rels) {
    std::vector<RankResult> group;
    for (const auto& r : ranks) {
      if (r.triple.r == rel) group.push_back(r);
    }
    RelationReport rep;
    rep.relation = rel;
    rep.metrics = aggregate_ranks(group);
    rep.triple_count = std::int64_t(group.size()) / 2;
    out.push_back(rep);
  }
  return out;
}

}  // namespace golde
