#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "smelu/error.hpp"
#include "smelu/net.hpp"
#include "support.hpp"

using namespace smelu;
using smelu::testing::rel_err;

namespace {

ModelConfig toy_config(const ActivationSpec& act, NormKind norm, double clip_bound) {
  ModelConfig c;
  c.tables = {{5, 4}, {7, 4}};
  c.hidden = {8, 4};
  c.activation = act;
  c.norm = norm;
  c.norm_value = 1.3;
  c.clip = clip_bound;
  c.embedding_init_std = 1.0;
  return c;
}

SparseExample toy_example() {
  SparseExample e;
  e.query_id = 1;
  e.features = {{0, 2, 1.0}, {1, 5, 1.0}};
  e.label = 1;
  return e;
}

// Every trainable scalar of a model, in a fixed order, paired with its analytic gradient.
struct ParamRef {
  double* value;
  double grad;
  std::string name;
};

std::vector<ParamRef> collect(Model& m, const Gradients& g, const SparseExample& e) {
  std::vector<ParamRef> out;
  for (const auto& eg : g.embeddings) {
    auto row = m.tables[eg.table].row(eg.row);
    for (std::size_t i = 0; i < row.size(); ++i) {
      out.push_back({&row[i], eg.grad[i], "emb" + std::to_string(eg.table)});
    }
  }
  REQUIRE(g.embeddings.size() == e.features.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& layer = m.layers[l];
    const auto& lg = g.layers[l];
    const std::string tag = "layer" + std::to_string(l);
    for (std::size_t i = 0; i < layer.w.size(); ++i) out.push_back({&layer.w[i], lg.w[i], tag + ".w"});
    for (std::size_t i = 0; i < layer.b.size(); ++i) out.push_back({&layer.b[i], lg.b[i], tag + ".b"});
    if (layer.activation.trainable) {
      auto& p = layer.activation.gsmelu;
      const auto& a = lg.activation;
      out.push_back({&p.alpha, a.d_alpha, tag + ".alpha"});
      out.push_back({&p.beta, a.d_beta, tag + ".beta"});
      out.push_back({&p.g_minus, a.d_g_minus, tag + ".g_minus"});
      out.push_back({&p.g_plus, a.d_g_plus, tag + ".g_plus"});
      out.push_back({&p.t, a.d_t, tag + ".t"});
    }
  }
  return out;
}

double loss_at(const Model& m, const SparseExample& e) {
  return log_loss_from_logit(forward(m, e).logit, e.label);
}

std::vector<ActivationSpec> all_activations() {
  return {
      ActivationSpec::relu(),
      ActivationSpec::identity(),
      ActivationSpec::smelu(0.5),
      ActivationSpec::generalized({0.7, 0.9, -0.1, 1.1, -0.2}, true),
      ActivationSpec::rescu_from(build_rescu({{-1.0, 0.0}, {0.0, 0.4}, {1.5, 1.0}}, {-1.0, 0.0})),
      ActivationSpec::softplus(2.0),
      ActivationSpec::swish(1.0),
      ActivationSpec::gelu(1.0),
      ActivationSpec::gelu(1.0, true),
  };
}

}  // namespace

TEST_CASE("weight_normalize, layer_normalize and clip") {
  auto w = weight_normalize(std::vector<double>{3, 4}, 1.0);
  CHECK(w[0] == doctest::Approx(0.6));
  CHECK(w[1] == doctest::Approx(0.8));
  w = weight_normalize(std::vector<double>{1, 1, 1, 1}, 2.0);
  for (double x : w) CHECK(x == 1.0);
  const std::vector<double> unit{0.6, 0.8};
  const auto again = weight_normalize(unit, 1.0);
  CHECK(again[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_THROWS_AS(weight_normalize(std::vector<double>{0, 0}, 1.0), InvalidInput);

  for (double x : layer_normalize(std::vector<double>{1, 1, 1, 1})) CHECK(x == 0.0);
  const auto ln = layer_normalize(std::vector<double>{-1, 1});
  CHECK(ln[0] == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-6)));
  CHECK(ln[1] == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-6)));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3.0, 2.0);
  std::vector<double> a(64);
  for (auto& x : a) x = n(rng);
  const auto z = layer_normalize(a);
  double mean = 0.0, var = 0.0;
  for (double x : z) mean += x;
  mean /= 64.0;
  for (double x : z) var += (x - mean) * (x - mean);
  var /= 64.0;
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(std::abs(var - 1.0) <= 1e-4);

  const auto c = clip(std::vector<double>{-10, 0, 10}, 6.0);
  CHECK(c == std::vector<double>{-6, 0, 6});
  const std::vector<double> inside{-1.5, 0.25, 5.9};
  CHECK(clip(inside, 6.0) == inside);
}

TEST_CASE("single-unit smelu composition") {
  ModelConfig c;
  c.tables = {{3, 1}};
  c.hidden = {};
  c.activation = ActivationSpec::smelu(1.0);
  c.norm = NormKind::WeightNorm;
  c.norm_value = 2.0;
  Model m = make_model(c, 9);
  std::fill(m.tables[0].weights.begin(), m.tables[0].weights.end(), 0.0);
  m.layers[0].w = {1.0};
  m.layers[0].b = {0.0};
  SparseExample e{0, {{0, 1, 1.0}}, 0};
  const auto cache = forward(m, e);
  CHECK(cache.logit == doctest::Approx(2.0 * 0.25));
  CHECK(cache.prediction == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))));
}

TEST_CASE("prediction range and logit gradient") {
  ModelConfig c = toy_config(ActivationSpec::relu(), NormKind::None, 0.0);
  Model m = make_model(c, 3);
  for (auto& b : m.layers.back().b) b = 500.0;
  const auto e = toy_example();
  const auto cache = forward(m, e);
  CHECK(cache.prediction < 1.0);
  CHECK(cache.prediction > 0.0);
  CHECK(std::isfinite(log_loss_from_logit(cache.logit, 0)));

  m = make_model(c, 3);
  const auto cache2 = forward(m, e);
  for (int y : {0, 1}) {
    const auto g = backward(m, cache2, y);
    // Output bias gradient is d loss / d logit.
    CHECK(g.layers.back().b[0] == doctest::Approx(cache2.prediction - y).epsilon(1e-14));
  }
}

TEST_CASE("stop region kills every upstream gradient") {
  ModelConfig c = toy_config(ActivationSpec::smelu(0.5), NormKind::None, 0.0);
  c.hidden = {3};
  Model m = make_model(c, 4);
  for (auto& x : m.tables[0].weights) x = -2.0;
  for (auto& x : m.tables[1].weights) x = -2.0;
  for (auto& x : m.layers[0].w) x = std::abs(x);
  for (auto& x : m.layers[0].b) x = -10.0;
  const auto e = toy_example();
  const auto g = backward(m, forward(m, e), 1);
  for (const auto& eg : g.embeddings) {
    for (double v : eg.grad) CHECK(v == 0.0);
  }
  for (double v : g.layers[0].w) CHECK(v == 0.0);
  for (double v : g.layers[0].b) CHECK(v == 0.0);
}

TEST_CASE("end-to-end finite differences on every parameter") {
  const double h = 1e-5;
  const NormKind norms[] = {NormKind::None, NormKind::WeightNorm, NormKind::LayerNorm};
  for (const auto& act : all_activations()) {
    for (NormKind norm : norms) {
      CAPTURE(format_activation(act));
      CAPTURE(to_string(norm));
      Model m = make_model(toy_config(act, norm, 0.9), 17);
      const auto e = toy_example();
      const auto cache = forward(m, e);
      // Clipping must bind somewhere, or the check says nothing about the mask.
      std::size_t clipped = 0;
      for (const auto& lc : cache.layers) {
        for (double v : lc.activated) clipped += std::abs(v) > 0.9;
      }
      CHECK(clipped > 0);
      const auto g = backward(m, cache, e.label);
      CHECK(g.loss == doctest::Approx(loss_at(m, e)));
      for (auto& p : collect(m, g, e)) {
        const double saved = *p.value;
        *p.value = saved + h;
        const double up = loss_at(m, e);
        *p.value = saved - h;
        const double down = loss_at(m, e);
        *p.value = saved;
        const double fd = (up - down) / (2.0 * h);
        CAPTURE(p.name);
        CHECK(rel_err(p.grad, fd, 1e-6) <= 1e-4);
      }
    }
  }
}

TEST_CASE("forward and backward are deterministic") {
  Model m = make_model(toy_config(ActivationSpec::smelu(1.0), NormKind::WeightNorm, 2.0), 5);
  const auto e = toy_example();
  const auto c1 = forward(m, e);
  const auto c2 = forward(m, e);
  CHECK(c1.logit == c2.logit);
  const auto g1 = backward(m, c1, 0);
  const auto g2 = backward(m, c2, 0);
  for (std::size_t l = 0; l < g1.layers.size(); ++l) CHECK(g1.layers[l].w == g2.layers[l].w);
  for (std::size_t i = 0; i < g1.embeddings.size(); ++i) {
    CHECK(g1.embeddings[i].grad == g2.embeddings[i].grad);
  }
  const Model m2 = make_model(toy_config(ActivationSpec::smelu(1.0), NormKind::WeightNorm, 2.0), 5);
  CHECK(m2.layers[0].w == m.layers[0].w);
  CHECK(m2.tables[1].weights == m.tables[1].weights);
}

TEST_CASE("backward touches only the example's embedding rows") {
  Model m = make_model(toy_config(ActivationSpec::relu(), NormKind::None, 0.0), 6);
  SparseExample e{0, {{0, 3, 1.0}, {1, 99, 1.0}}, 0};
  const auto g = backward(m, forward(m, e), 0);
  REQUIRE(g.embeddings.size() == 2);
  CHECK(g.embeddings[0].table == 0);
  CHECK(g.embeddings[0].row == 3);
  CHECK(g.embeddings[1].table == 1);
  // Id 99 is out of vocabulary for a 7-id table and maps to the last row.
  CHECK(g.embeddings[1].row == 7);
}

TEST_CASE("weight norm rows have norm v in the effective weights") {
  Model m = make_model(toy_config(ActivationSpec::relu(), NormKind::WeightNorm, 0.0), 8);
  for (const auto& layer : m.layers) {
    for (std::size_t j = 0; j < layer.out; ++j) {
      double s = 0.0;
      for (double x : layer.row(j)) s += x * x;
      CHECK(std::sqrt(s) == doctest::Approx(1.3).epsilon(1e-12));
    }
  }
}

TEST_CASE("model validation") {
  ModelConfig c = toy_config(ActivationSpec::relu(), NormKind::None, 0.0);
  c.hidden = {8, 0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config(ActivationSpec::relu(), NormKind::None, -1.0);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config(ActivationSpec::relu(), NormKind::None, 0.0);
  c.layer_activations = {ActivationSpec::relu()};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config(ActivationSpec::relu(), NormKind::LayerNorm, 0.0);
  c.tables = {{4, 1}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

namespace {

// Deterministic stand-in for random draws that does not depend on the
// standard library's distributions, so the golden value is portable.
double pseudo_normal(std::uint64_t i) {
  std::uint64_t z = i * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e5ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  const double u = (static_cast<double>(z >> 11) + 0.5) / 9007199254740992.0;
  // Logistic quantile, unit-ish spread.
  return std::log(u / (1.0 - u)) * 0.5513;
}

double smelu_scalar(double x, double beta) {
  if (x <= -beta) return 0.0;
  if (x >= beta) return x;
  return (x + beta) * (x + beta) / (4.0 * beta);
}

constexpr double kGoldenFrozenLogit = 0.73319830028553201;

}  // namespace

TEST_CASE("random frozen network logit against a straight-line recomputation") {
  ModelConfig c;
  c.dense_inputs = 1;
  c.hidden = {256, 128, 64, 32, 16};
  c.activation = ActivationSpec::smelu(1.0);
  c.norm = NormKind::WeightNorm;
  c.norm_value = 1.0;
  c.clip = 6.0;
  c.identity_input_activation = true;
  c.layer_norm_input = false;
  Model m = make_model(c, 1);
  std::uint64_t k = 0;
  for (auto& layer : m.layers) {
    for (auto& w : layer.w) w = 5.0 * pseudo_normal(k++);
    for (auto& b : layer.b) b = 0.5 * pseudo_normal(k++);
  }
  renormalize(m);

  const double probe = 0.7;
  ForwardCache cache;
  forward_dense(m, std::vector<double>{probe}, cache);

  // Independent recomputation from the raw weights.
  std::vector<double> a{probe};
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    std::vector<double> h(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double f = l == 0 ? a[i] : smelu_scalar(a[i], 1.0);
      h[i] = std::min(std::max(f, -6.0), 6.0);
    }
    std::vector<double> next(layer.out);
    for (std::size_t j = 0; j < layer.out; ++j) {
      double norm2 = 0.0, dot = 0.0;
      for (std::size_t i = 0; i < layer.in; ++i) {
        const double w = layer.w[j * layer.in + i];
        norm2 += w * w;
        dot += w * h[i];
      }
      next[j] = dot / std::sqrt(norm2) + layer.b[j];
    }
    a = next;
  }
  REQUIRE(a.size() == 1);
  CHECK(std::abs(cache.logit - a[0]) <= 1e-10);
  // Frozen once the two computations agreed.
  CHECK(std::abs(cache.logit - kGoldenFrozenLogit) <= 1e-10);
}
