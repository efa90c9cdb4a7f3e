#include "smelu/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smelu/error.hpp"

namespace smelu {
namespace {

// log(-t) used when t starts exactly at 0.
constexpr double kMinLogNegT = -30.0;
// Smallest gap kept between g_plus and g_minus.
constexpr double kMinSlopeGap = 1e-6;

void check_sizes(std::size_t params, std::size_t grads) {
  if (params != grads) throw InvalidInput("parameter and gradient sizes differ");
}

// Partial sums break the add-latency chain on wide rows.
double sum_squares(std::span<const double> v) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= v.size(); i += 4) {
    s0 += v[i] * v[i];
    s1 += v[i + 1] * v[i + 1];
    s2 += v[i + 2] * v[i + 2];
    s3 += v[i + 3] * v[i + 3];
  }
  for (; i < v.size(); ++i) s0 += v[i] * v[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adagrad";
}

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "sgd") return OptimizerKind::Sgd;
  if (text == "adagrad") return OptimizerKind::AdaGrad;
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

void OptimizerConfig::validate() const {
  if (!(lr_embedding >= 0.0) || !(lr_dense >= 0.0) || !(lr_activation >= 0.0)) {
    throw ConfigError("learning rates must be non-negative");
  }
  if (!(epsilon > 0.0)) throw ConfigError("adagrad epsilon must be positive");
  if (!(g_init >= 0.0)) throw ConfigError("adagrad initial accumulator must be >= 0");
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  check_sizes(params.size(), grads.size());
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void adagrad_update(std::span<double> accum, std::span<double> params,
                    std::span<const double> grads, double lr, double epsilon) {
  check_sizes(params.size(), grads.size());
  check_sizes(params.size(), accum.size());
  // A zero gradient leaves both the accumulator and the parameter unchanged,
  // so the loop needs no branch for the lazy rule.
  double* G = accum.data();
  double* p = params.data();
  const double* g = grads.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    G[i] += g[i] * g[i];
    p[i] -= lr * g[i] / std::sqrt(G[i] + epsilon);
  }
}

void adagrad_step(AdaGradState& state, std::span<double> params, std::span<const double> grads) {
  if (state.accum.size() != params.size()) state.accum.assign(params.size(), state.g_init);
  adagrad_update(state.accum, params, grads, state.lr, state.epsilon);
}

GSmeLUCoords to_coords(const GSmeLUParams& p) {
  return {std::log(p.alpha), std::log(p.beta), p.g_minus, p.g_plus,
          p.t < 0.0 ? std::log(-p.t) : kMinLogNegT};
}

GSmeLUParams from_coords(const GSmeLUCoords& c) {
  return {std::exp(c.log_alpha), std::exp(c.log_beta), c.g_minus, c.g_plus,
          -std::exp(c.log_neg_t)};
}

Optimizer::Optimizer(const Model& model, OptimizerConfig config) : config_(config) {
  config_.validate();
  auto make = [&](double lr, std::size_t n) {
    AdaGradState s;
    s.lr = lr;
    s.epsilon = config_.epsilon;
    s.g_init = config_.g_init;
    if (config_.kind == OptimizerKind::AdaGrad) s.accum.assign(n, config_.g_init);
    return s;
  };
  for (const auto& t : model.tables) tables_.push_back(make(config_.lr_embedding, t.weights.size()));
  for (const auto& l : model.layers) {
    layers_.push_back({make(config_.lr_dense, l.w.size()), make(config_.lr_dense, l.b.size()),
                       make(config_.lr_activation, l.activation.trainable ? 5 : 0)});
  }
}

void Optimizer::step_activation(DenseLayer& layer, LayerState& state, const GSmeLUGrads& g) {
  GSmeLUParams& p = layer.activation.gsmelu;
  const GSmeLUCoords c = to_coords(p);
  double coords[5] = {c.log_alpha, c.log_beta, c.g_minus, c.g_plus, c.log_neg_t};
  // Chain rule into the unconstrained coordinates.
  const double grads[5] = {g.d_alpha * p.alpha, g.d_beta * p.beta, g.d_g_minus, g.d_g_plus,
                           p.t < 0.0 ? g.d_t * p.t : g.d_t * -std::exp(kMinLogNegT)};
  if (config_.kind == OptimizerKind::AdaGrad) {
    adagrad_step(state.activation, coords, grads);
  } else {
    sgd_step(coords, grads, state.activation.lr);
  }
  p = from_coords({coords[0], coords[1], coords[2], coords[3], coords[4]});
  if (!(p.g_plus > p.g_minus + kMinSlopeGap)) {
    const double mid = 0.5 * (p.g_plus + p.g_minus);
    p.g_minus = mid - 0.5 * kMinSlopeGap;
    p.g_plus = mid + 0.5 * kMinSlopeGap;
  }
}

void Optimizer::step(Model& model, const Gradients& grads) {
  const bool ada = config_.kind == OptimizerKind::AdaGrad;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    DenseLayer& layer = model.layers[l];
    LayerState& st = layers_[l];
    const LayerGradients& g = grads.layers[l];
    check_sizes(layer.w.size(), g.w.size());
    check_sizes(layer.b.size(), g.b.size());
    const std::size_t in = layer.in;
    // Rows with an all-zero gradient (inactive units) are left untouched,
    // which is what the lazy rule gives; skipping them also skips their
    // re-projection.
    for (std::size_t j = 0; j < layer.out; ++j) {
      const std::span<const double> grow(g.w.data() + j * in, in);
      if (std::all_of(grow.begin(), grow.end(), [](double v) { return v == 0.0; })) continue;
      const auto row = layer.row(j);
      if (ada) {
        adagrad_update({st.w.accum.data() + j * in, in}, row, grow, st.w.lr, st.w.epsilon);
      } else {
        sgd_step(row, grow, st.w.lr);
      }
      if (layer.norm == NormKind::WeightNorm) {
        const double norm = std::sqrt(sum_squares(row));
        if (!(norm > 0.0)) throw InvalidInput("weight-norm row collapsed to zero");
        const double scale = layer.norm_value / norm;
        for (double& v : row) v *= scale;
      }
    }
    if (ada) {
      adagrad_step(st.b, layer.b, g.b);
    } else {
      sgd_step(layer.b, g.b, st.b.lr);
    }
    if (layer.activation.trainable) step_activation(layer, st, g.activation);
  }
  for (const EmbeddingGradient& eg : grads.embeddings) {
    EmbeddingTable& table = model.tables[eg.table];
    auto row = table.row(eg.row);
    AdaGradState& st = tables_[eg.table];
    if (ada) {
      std::span<double> acc(st.accum.data() + eg.row * table.dim, table.dim);
      adagrad_update(acc, row, eg.grad, st.lr, st.epsilon);
    } else {
      sgd_step(row, eg.grad, st.lr);
    }
  }
}

}  // namespace smelu
