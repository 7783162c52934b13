#include <doctest.h>

#include <cmath>

#include "golde/selfcheck.hpp"
#include "golde/training.hpp"
#include "toy_kg.hpp"

using namespace golde;

namespace {

ProductManifoldConfig mini_config() {
  ProductManifoldConfig cfg;
  cfg.components = {{Geometry::Elliptic, 3}, {Geometry::Hyperbolic, 4}};
  cfg.norm = 2;
  return cfg;
}

void zero_reflectors(Model& m) {
  for (std::int64_t r = 0; r < m.num_relations; ++r) {
    double* rel = m.relation(r);
    for (const auto& cl : m.layout.comps) {
      std::fill(rel + cl.u_offset, rel + cl.u_offset + std::size_t(cl.rows) * std::size_t(cl.rows),
                0.0);
    }
  }
}

}  // namespace

TEST_CASE("self_adversarial_loss") {
  SUBCASE("no negatives and s_pos = -gamma gives ln 2") {
    CHECK(self_adversarial_loss(-2.0, {}, 2.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("one negative always gets weight one") {
    VecD w(1);
    adversarial_weights(VecD{-3.0}, 0.25, w);
    CHECK(w[0] == 1.0);
    adversarial_weights(VecD{-3.0}, 4.0, w);
    CHECK(w[0] == 1.0);
  }
  SUBCASE("equal negatives share weight uniformly") {
    VecD w(3);
    adversarial_weights(VecD{-1.5, -1.5, -1.5}, 1.3, w);
    for (double x : w) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("weights sum to one") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
      VecD s(8), w(8);
      for (auto& x : s) x = rng.uniform(-30, 5);
      adversarial_weights(s, rng.uniform(0.2, 3.0), w);
      double sum = 0.0;
      for (double x : w) sum += x;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
  SUBCASE("monotone decreasing in the positive score, finite everywhere") {
    const VecD negs{-4.0, -9.0, -2.5};
    double prev = self_adversarial_loss(-8.0, negs, 4.0, 1.0);
    for (double s = -7.0; s <= 2.0; s += 1.0) {
      const double cur = self_adversarial_loss(s, negs, 4.0, 1.0);
      CHECK(cur < prev);
      prev = cur;
    }
    CHECK(std::isfinite(self_adversarial_loss(-1e6, negs, 4.0, 1.0)));
    CHECK(std::isfinite(self_adversarial_loss(1e6, VecD{1e6, -1e6}, 4.0, 1.0)));
  }
}

TEST_CASE("sample_negatives") {
  const Triple pos{3, 0, 5};

  SUBCASE("deterministic under a fixed stream") {
    Rng a = Rng::derive(9, 4, 1);
    Rng b = Rng::derive(9, 4, 1);
    const auto na = sample_negatives(pos, 6, a, 50);
    const auto nb = sample_negatives(pos, 6, b, 50);
    CHECK(na.side == nb.side);
    CHECK(na.entities == nb.entities);
  }

  SUBCASE("corruption side is split evenly") {
    std::int64_t heads = 0;
    const std::int64_t n = 10000;
    for (std::int64_t i = 0; i < n; ++i) {
      Rng rng = Rng::derive(123, 0, std::uint64_t(i));
      if (sample_negatives(pos, 1, rng, 50).side == Side::Head) ++heads;
    }
    const double p = double(heads) / double(n);
    CHECK(std::abs(p - 0.5) <= 3.0 * std::sqrt(0.25 / double(n)));
  }

  SUBCASE("corruption replaces exactly one slot") {
    Rng rng(5);
    const auto ns = sample_negatives(pos, 8, rng, 50);
    for (auto e : ns.entities) {
      const Triple c = corrupted_triple(pos, ns.side, e);
      CHECK(c.r == pos.r);
      if (ns.side == Side::Head) {
        CHECK(c.t == pos.t);
        CHECK(c.h == e);
      } else {
        CHECK(c.h == pos.h);
        CHECK(c.t == e);
      }
      CHECK(e >= 0);
      CHECK(e < 50);
    }
  }

  SUBCASE("g must be positive") {
    Rng rng(5);
    CHECK_THROWS_AS(sample_negatives(pos, 0, rng, 50), ConfigError);
  }
}

TEST_CASE("gradients") {
  TrainConfig tc;
  tc.batch_size = 1;
  tc.neg_size = 2;
  tc.margin = 2.0;
  tc.threads = 1;

  SUBCASE("parameters outside the batch get zero gradient") {
    const Model m = init_params(mini_config(), 8, 3, 3);
    const std::vector<Triple> pos{{0, 0, 1}};
    NegativeBatch negs;
    negs.items.push_back({Side::Tail, {2, 3}});
    const Gradients g = grad(m, pos, negs, tc);
    // entity 7 and relation 2 are untouched
    for (std::size_t i = 0; i < m.layout.entity_dim; ++i) {
      CHECK(g.entities[7 * m.layout.entity_dim + i] == 0.0);
    }
    for (std::size_t i = 0; i < m.layout.relation_block; ++i) {
      CHECK(g.relations[2 * m.layout.relation_block + i] == 0.0);
    }
  }

  SUBCASE("closed form for a flat elliptic component") {
    // identity reflectors, unit weights, squared distance: the positive term
    // contributes 2 sigmoid(-(gamma+s)) (e_h - e_t) to the head gradient
    ProductManifoldConfig ecfg;
    ecfg.components = {{Geometry::Elliptic, 2}};
    Model m = init_params(ecfg, 3, 1, 7);
    zero_reflectors(m);
    const std::vector<Triple> pos{{0, 0, 1}};
    NegativeBatch negs;
    negs.items.push_back({Side::Tail, {}});
    const Gradients g = grad(m, pos, negs, tc);
    const double* eh = m.entity(0);
    const double* et = m.entity(1);
    double d2 = 0.0;
    for (int i = 0; i < 2; ++i) d2 += (eh[i] - et[i]) * (eh[i] - et[i]);
    const double chain = 2.0 * sigmoid(-(tc.margin - d2));
    for (int i = 0; i < 2; ++i) {
      CHECK(g.entities[std::size_t(i)] ==
            doctest::Approx(chain * (eh[i] - et[i])).epsilon(1e-12));
      CHECK(g.entities[m.layout.entity_dim + std::size_t(i)] ==
            doctest::Approx(-chain * (eh[i] - et[i])).epsilon(1e-12));
    }
  }

  SUBCASE("finite differences agree on a mixed model, both norms") {
    CHECK(checks::gradient_check(51, 2).overall() <= 1e-4);
    CHECK(checks::gradient_check(52, 1).overall() <= 1e-4);
  }

  SUBCASE("minimal component dimensions keep the gradient contract") {
    // ambient 2 everywhere; the hyperbolic spatial part is one-dimensional,
    // where a reflection is constant in its row (the row gradient vanishes)
    ProductManifoldConfig cfg;
    cfg.components = {{Geometry::Elliptic, 2}, {Geometry::Hyperbolic, 2}};
    Model m = init_params(cfg, 6, 2, 41);
    Rng rng(42);
    for (std::int64_t r = 0; r < m.num_relations; ++r) {
      double* rel = m.relation(r);
      const auto& hyp = m.layout.comps[1];
      rel[hyp.b_offset] = rng.normal() * 0.4;
      rel[hyp.beta_offset] += rng.normal() * 0.3;
    }
    std::vector<Triple> pos;
    for (int i = 0; i < 4; ++i) {
      pos.push_back({std::int32_t(rng.below(6)), std::int32_t(rng.below(2)),
                     std::int32_t(rng.below(6))});
    }
    TrainConfig mtc = tc;
    mtc.batch_size = 4;
    mtc.neg_size = 3;
    const NegativeBatch negs = sample_negative_batch(pos, 3, 43, 1, 6);
    CHECK(finite_diff_check(m, pos, negs, mtc).overall() <= 1e-4);
  }

  SUBCASE("identity-parameter probe stays below 1e-6 and skips flagged rows") {
    Model m = init_params(mini_config(), 8, 2, 19);
    zero_reflectors(m);  // every reflector row is identity-flagged
    for (double& e : m.entities) e *= 4.0;  // healthy gradient magnitudes
    std::vector<Triple> pos;
    Rng rng(2);
    for (int i = 0; i < 4; ++i) {
      pos.push_back({std::int32_t(rng.below(8)), std::int32_t(rng.below(2)),
                     std::int32_t(rng.below(8))});
    }
    TrainConfig ptc = tc;
    ptc.batch_size = 4;
    ptc.neg_size = 3;
    const NegativeBatch negs = sample_negative_batch(pos, 3, 11, 1, 8);
    const Gradients g = grad(m, pos, negs, ptc);
    for (std::int64_t r = 0; r < m.num_relations; ++r) {
      for (const auto& cl : m.layout.comps) {
        for (std::int32_t i = 0; i < cl.rows * cl.rows; ++i) {
          CHECK(g.relations[std::size_t(r) * m.layout.relation_block + cl.u_offset +
                            std::size_t(i)] == 0.0);
        }
      }
    }
    const FiniteDiffReport fd = finite_diff_check(m, pos, negs, ptc);
    CHECK(fd.overall() <= 1e-6);
  }

  SUBCASE("adversarial weights are detached") {
    // the analytic gradient matches finite differences of the frozen-weight
    // loss even at a sharp temperature, where the full softmax would add a
    // visibly different term
    const Model m = init_params(mini_config(), 8, 2, 23);
    std::vector<Triple> pos{{0, 0, 1}, {2, 1, 3}};
    TrainConfig sharp = tc;
    sharp.batch_size = 2;
    sharp.neg_size = 4;
    sharp.alpha = 3.0;
    const NegativeBatch negs = sample_negative_batch(pos, 4, 5, 1, 8);
    const FiniteDiffReport fd = finite_diff_check(m, pos, negs, sharp);
    CHECK(fd.overall() <= 1e-4);
  }

  SUBCASE("the traced forward agrees with the plain forward bit-for-bit") {
    const Model m = init_params(mini_config(), 8, 2, 29);
    std::vector<Triple> pos{{0, 0, 1}, {2, 1, 3}, {4, 0, 5}};
    TrainConfig btc = tc;
    btc.batch_size = 3;
    btc.neg_size = 5;
    const NegativeBatch negs = sample_negative_batch(pos, 5, 6, 2, 8);
    double traced_loss = 0.0;
    grad(m, pos, negs, btc, &traced_loss);
    CHECK(traced_loss == batch_loss(m, pos, negs, btc));
  }

  SUBCASE("non-finite scores raise a numeric error naming the triple") {
    Model m = init_params(mini_config(), 4, 1, 3);
    for (std::size_t i = 0; i < m.layout.entity_dim; ++i) m.entity(0)[i] = 1e200;
    const std::vector<Triple> pos{{0, 0, 1}};
    NegativeBatch negs;
    negs.items.push_back({Side::Tail, {2}});
    CHECK_THROWS_AS(grad(m, pos, negs, tc), NumericError);
  }

  SUBCASE("numeric errors cross worker-thread boundaries") {
    Model m = init_params(mini_config(), 40, 1, 3);
    for (std::size_t i = 0; i < m.layout.entity_dim; ++i) m.entity(39)[i] = 1e200;
    std::vector<Triple> pos;
    for (int i = 0; i < 32; ++i) pos.push_back({std::int32_t(i % 16), 0, std::int32_t(i % 7)});
    pos.push_back({39, 0, 1});  // poisoned positive lands in a later chunk
    TrainConfig wtc = tc;
    wtc.batch_size = std::int64_t(pos.size());
    wtc.neg_size = 2;
    wtc.threads = 3;
    const NegativeBatch negs = sample_negative_batch(pos, 2, 8, 1, 39);
    CHECK_THROWS_AS(grad(m, pos, negs, wtc), NumericError);
  }
}

TEST_CASE("adam_step") {
  const auto cfg = mini_config();
  Model m = init_params(cfg, 4, 1, 5);
  OptimizerState st;
  st.init_like(m);
  Gradients g;
  g.resize_like(m);

  SUBCASE("zero gradient leaves parameters unchanged") {
    const VecD before = m.entities;
    adam_step(m, g, st, 0.1);
    CHECK(m.entities == before);
    CHECK(st.step == 1);
  }

  SUBCASE("first step moves against the gradient sign at rate lr") {
    g.entities[0] = 0.5;
    g.entities[1] = -2.0;
    const double e0 = m.entities[0], e1 = m.entities[1];
    adam_step(m, g, st, 0.01);
    CHECK(m.entities[0] == doctest::Approx(e0 - 0.01).epsilon(1e-6));
    CHECK(m.entities[1] == doctest::Approx(e1 + 0.01).epsilon(1e-6));
  }
}

TEST_CASE("train") {
  const toy::ToyKG kg = toy::make_toy_kg(2024);
  const auto mf = ProductManifoldConfig::from_partition(16, 12, 2, 2, 2);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.neg_size = 8;
  tc.margin = 1.0;
  tc.lr = 0.005;
  tc.steps = 30;
  tc.valid_every = 15;
  tc.seed = 7;
  tc.threads = 2;

  SUBCASE("zero steps returns the initialized model unchanged") {
    TrainConfig z = tc;
    z.steps = 0;
    const TrainResult r = train(kg.dataset, mf, z);
    ProductManifoldConfig normed = mf;
    normed.norm = z.norm;
    const Model fresh = init_params(normed, kg.dataset.vocab.num_entities(),
                                    kg.dataset.vocab.num_relations(), z.seed);
    CHECK(r.model.entities == fresh.entities);
    CHECK(r.model.relations == fresh.relations);
  }

  SUBCASE("deterministic across runs and thread counts") {
    const TrainResult a = train(kg.dataset, mf, tc);
    const TrainResult b = train(kg.dataset, mf, tc);
    CHECK(a.model.entities == b.model.entities);
    CHECK(a.model.relations == b.model.relations);
    TrainConfig one = tc;
    one.threads = 1;
    const TrainResult c = train(kg.dataset, mf, one);
    CHECK(a.model.entities == c.model.entities);
    CHECK(a.loss_history == c.loss_history);
  }

  SUBCASE("empty training split is a startup error") {
    Dataset empty = kg.dataset;
    empty.train.clear();
    CHECK_THROWS_AS(train(empty, mf, tc), ConfigError);
  }

  SUBCASE("norm 1 trains to a finite, decreasing loss") {
    TrainConfig l1 = tc;
    l1.norm = 1;
    l1.steps = 60;
    const TrainResult r = train(kg.dataset, mf, l1);
    REQUIRE(r.loss_history.size() == 60);
    for (double l : r.loss_history) CHECK(std::isfinite(l));
    CHECK(r.loss_history.back() < r.loss_history.front());
    CHECK(r.model.config.norm == 1);
  }

  SUBCASE("logs a loss row per step and validation rows on the interval") {
    std::int64_t loss_rows = 0, valid_rows = 0;
    train(kg.dataset, mf, tc, [&](const MetricsRow& row) {
      if (row.has_metrics) {
        ++valid_rows;
        CHECK(row.split == "valid");
      } else {
        ++loss_rows;
      }
    });
    CHECK(loss_rows == tc.steps);
    CHECK(valid_rows == 2);  // steps 15 and 30
  }
}
