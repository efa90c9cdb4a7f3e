#include <cmath>
#include <random>

#include "doctest.h"
#include "smelu/error.hpp"
#include "smelu/optim.hpp"

using namespace smelu;

TEST_CASE("sgd step") {
  std::vector<double> p{1.0, -2.0};
  sgd_step(p, std::vector<double>{2.0, 0.0}, 0.1);
  CHECK(p[0] == doctest::Approx(0.8));
  CHECK(p[1] == -2.0);
  CHECK_THROWS_AS(sgd_step(p, std::vector<double>{1.0}, 0.1), InvalidInput);
}

TEST_CASE("adagrad hand cases") {
  AdaGradState s{0.1, 1e-8, 0.0, {}};
  std::vector<double> p{0.0, 5.0};
  const std::vector<double> g{1.0, 0.0};
  adagrad_step(s, p, g);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-7));
  CHECK(p[1] == 5.0);
  CHECK(s.accum[1] == 0.0);
  const double before = p[0];
  adagrad_step(s, p, g);
  CHECK(p[0] - before == doctest::Approx(-0.1 / std::sqrt(2.0)).epsilon(1e-7));
  CHECK(s.accum[0] == 2.0);
}

TEST_CASE("adagrad effective step never grows under constant gradient") {
  AdaGradState s{0.5, 1e-8, 0.0, {}};
  std::vector<double> p{0.0};
  double last = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 50; ++i) {
    const double before = p[0];
    adagrad_step(s, p, std::vector<double>{-0.3});
    const double step = p[0] - before;
    CHECK(step <= last);
    CHECK(s.accum[0] >= 0.0);
    last = step;
  }
}

TEST_CASE("gsmelu coordinates round trip") {
  const GSmeLUParams p{0.7, 1.9, -0.1, 1.2, -0.3};
  const GSmeLUParams q = from_coords(to_coords(p));
  CHECK(q.alpha == doctest::Approx(p.alpha).epsilon(1e-15));
  CHECK(q.beta == doctest::Approx(p.beta).epsilon(1e-15));
  CHECK(q.t == doctest::Approx(p.t).epsilon(1e-15));
  CHECK(q.g_minus == p.g_minus);
  // t = 0 is floored to a tiny negative level.
  const GSmeLUParams z = from_coords(to_coords({1, 1, 0, 1, 0}));
  CHECK(z.t < 0.0);
  CHECK(z.t > -1e-12);
}

namespace {

ModelConfig small_config(NormKind norm) {
  ModelConfig c;
  c.tables = {{6, 3}, {4, 3}};
  c.hidden = {5, 3};
  c.activation = ActivationSpec::smelu(0.5);
  c.norm = norm;
  c.norm_value = 1.5;
  c.embedding_init_std = 0.5;
  return c;
}

std::vector<SparseExample> stream(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> a(0, 6), b(0, 3), y(0, 1);
  std::vector<SparseExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<std::int64_t>(i), {{0, a(rng), 1.0}, {1, b(rng), 1.0}}, y(rng)});
  }
  return out;
}

// Dense AdaGrad over every coordinate of the model, written from the update
// formula alone.
struct DenseAdaGrad {
  std::vector<std::vector<double>> table_g, w_g, b_g;
  double lr_emb, lr_dense, eps;

  DenseAdaGrad(const Model& m, const OptimizerConfig& c)
      : lr_emb(c.lr_embedding), lr_dense(c.lr_dense), eps(c.epsilon) {
    for (const auto& t : m.tables) table_g.emplace_back(t.weights.size(), c.g_init);
    for (const auto& l : m.layers) {
      w_g.emplace_back(l.w.size(), c.g_init);
      b_g.emplace_back(l.b.size(), c.g_init);
    }
  }

  static void apply(std::vector<double>& G, std::vector<double>& p, const std::vector<double>& g,
                    double lr, double eps) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      G[i] = G[i] + g[i] * g[i];
      p[i] = p[i] - lr * g[i] / std::sqrt(G[i] + eps);
    }
  }

  void step(Model& m, const Gradients& grads) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      apply(w_g[l], m.layers[l].w, grads.layers[l].w, lr_dense, eps);
      apply(b_g[l], m.layers[l].b, grads.layers[l].b, lr_dense, eps);
    }
    for (std::size_t t = 0; t < m.tables.size(); ++t) {
      std::vector<double> full(m.tables[t].weights.size(), 0.0);
      for (const auto& eg : grads.embeddings) {
        if (eg.table != t) continue;
        for (std::size_t k = 0; k < eg.grad.size(); ++k) full[eg.row * m.tables[t].dim + k] = eg.grad[k];
      }
      apply(table_g[t], m.tables[t].weights, full, lr_emb, eps);
    }
  }
};

}  // namespace

TEST_CASE("sparse adagrad is bit-identical to the dense oracle") {
  for (NormKind norm : {NormKind::None, NormKind::LayerNorm}) {
    OptimizerConfig oc;
    oc.lr_embedding = 0.07;
    oc.lr_dense = 0.02;
    Model sparse = make_model(small_config(norm), 21);
    Model dense = sparse;
    Optimizer opt(sparse, oc);
    DenseAdaGrad oracle(dense, oc);
    for (const auto& e : stream(400, 8)) {
      opt.step(sparse, backward(sparse, forward(sparse, e), e.label));
      oracle.step(dense, backward(dense, forward(dense, e), e.label));
    }
    for (std::size_t t = 0; t < sparse.tables.size(); ++t) {
      CHECK(sparse.tables[t].weights == dense.tables[t].weights);
      CHECK(opt.tables()[t].accum == oracle.table_g[t]);
    }
    for (std::size_t l = 0; l < sparse.layers.size(); ++l) {
      CHECK(sparse.layers[l].w == dense.layers[l].w);
      CHECK(sparse.layers[l].b == dense.layers[l].b);
    }
  }
}

TEST_CASE("untouched embedding rows keep their state") {
  Model m = make_model(small_config(NormKind::None), 2);
  const Model before = m;
  Optimizer opt(m, {});
  SparseExample e{0, {{0, 1, 1.0}, {1, 2, 1.0}}, 1};
  opt.step(m, backward(m, forward(m, e), 1));
  for (std::size_t r = 0; r <= 6; ++r) {
    if (r == 1) continue;
    const auto now = m.tables[0].row(r);
    const auto then = before.tables[0].row(r);
    CHECK(std::equal(now.begin(), now.end(), then.begin()));
    for (std::size_t k = 0; k < 3; ++k) CHECK(opt.tables()[0].accum[r * 3 + k] == 0.0);
  }
}

TEST_CASE("weight norm rows stay at norm v after steps") {
  for (OptimizerKind kind : {OptimizerKind::Sgd, OptimizerKind::AdaGrad}) {
    OptimizerConfig oc;
    oc.kind = kind;
    oc.lr_dense = 0.3;
    Model m = make_model(small_config(NormKind::WeightNorm), 5);
    Optimizer opt(m, oc);
    for (const auto& e : stream(200, 4)) opt.step(m, backward(m, forward(m, e), e.label));
    for (const auto& layer : m.layers) {
      for (std::size_t j = 0; j < layer.out; ++j) {
        double s = 0.0;
        for (double x : layer.row(j)) s += x * x;
        CHECK(std::abs(std::sqrt(s) / 1.5 - 1.0) <= 1e-10);
      }
    }
  }
}

TEST_CASE("optimizer step is deterministic") {
  Model a = make_model(small_config(NormKind::WeightNorm), 6);
  Model b = a;
  Optimizer oa(a, {}), ob(b, {});
  for (const auto& e : stream(100, 1)) {
    oa.step(a, backward(a, forward(a, e), e.label));
    ob.step(b, backward(b, forward(b, e), e.label));
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l) CHECK(a.layers[l].w == b.layers[l].w);
  CHECK(a.tables[0].weights == b.tables[0].weights);
}

TEST_CASE("learnable gsmelu stays valid while training") {
  ModelConfig c = small_config(NormKind::None);
  c.activation = ActivationSpec::generalized({1, 1, 0, 1, 0}, true);
  Model m = make_model(c, 3);
  OptimizerConfig oc;
  oc.lr_activation = 0.05;
  Optimizer opt(m, oc);
  for (const auto& e : stream(300, 2)) opt.step(m, backward(m, forward(m, e), e.label));
  bool moved = false;
  for (const auto& layer : m.layers) {
    const auto& p = layer.activation.gsmelu;
    CHECK(p.alpha > 0.0);
    CHECK(p.beta > 0.0);
    CHECK(p.t <= 0.0);
    CHECK(p.g_plus > p.g_minus);
    moved = moved || p.alpha != 1.0 || p.beta != 1.0;
  }
  CHECK(moved);
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig oc;
  oc.epsilon = 0.0;
  CHECK_THROWS_AS(oc.validate(), ConfigError);
  oc = {};
  oc.lr_dense = -1.0;
  CHECK_THROWS_AS(oc.validate(), ConfigError);
  CHECK(parse_optimizer("sgd") == OptimizerKind::Sgd);
  CHECK_THROWS_AS(parse_optimizer("adam"), ConfigError);
}
