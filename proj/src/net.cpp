#include "smelu/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "smelu/error.hpp"

namespace smelu {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Four interleaved partial sums so the loop vectorizes without reassociation.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// w.h and w.w in one pass.
void dot2(const double* w, const double* h, std::size_t n, double& wh, double& ww) {
  double a0 = 0.0, a1 = 0.0, b0 = 0.0, b1 = 0.0;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    a0 += w[i] * h[i];
    a1 += w[i + 1] * h[i + 1];
    b0 += w[i] * w[i];
    b1 += w[i + 1] * w[i + 1];
  }
  for (; i < n; ++i) {
    a0 += w[i] * h[i];
    b0 += w[i] * w[i];
  }
  wh = a0 + a1;
  ww = b0 + b1;
}

void check_layer_norm_width(std::size_t width, std::size_t layer) {
  if (width < 2) {
    throw ConfigError("layer norm needs at least 2 inputs (layer " + std::to_string(layer + 1) +
                      ")");
  }
}

void run_layers(const Model& model, ForwardCache& cache) {
  const std::size_t n = model.layers.size();
  cache.layers.resize(n);
  double logit = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    const DenseLayer& layer = model.layers[l];
    LayerCache& lc = cache.layers[l];
    const std::size_t in = layer.in;
    lc.activated.resize(in);
    lc.slope.resize(in);
    lc.linear_in.resize(in);
    lc.row_dot.resize(layer.out);
    lc.row_scale.resize(layer.out);

    eval_batch(layer.activation, lc.input, lc.activated.data(), lc.slope.data());
    if (layer.clip > 0.0) {
      for (std::size_t i = 0; i < in; ++i) {
        lc.linear_in[i] = std::clamp(lc.activated[i], -layer.clip, layer.clip);
      }
    } else {
      std::copy(lc.activated.begin(), lc.activated.end(), lc.linear_in.begin());
    }
    if (layer.norm == NormKind::LayerNorm) {
      double mean = 0.0;
      for (double v : lc.linear_in) mean += v;
      mean /= static_cast<double>(in);
      double var = 0.0;
      for (double v : lc.linear_in) var += (v - mean) * (v - mean);
      var /= static_cast<double>(in);
      lc.ln_rstd = 1.0 / std::sqrt(var + kLayerNormEpsilon);
      for (double& v : lc.linear_in) v = (v - mean) * lc.ln_rstd;
    }

    double* out = nullptr;
    if (l + 1 < n) {
      cache.layers[l + 1].input.resize(layer.out);
      out = cache.layers[l + 1].input.data();
    } else {
      out = &logit;
    }
    const double* h = lc.linear_in.data();
    for (std::size_t j = 0; j < layer.out; ++j) {
      const double* w = layer.w.data() + j * in;
      double d = 0.0;
      double scale = 1.0;
      if (layer.norm == NormKind::WeightNorm) {
        double ww = 0.0;
        dot2(w, h, in, d, ww);
        scale = layer.norm_value / std::sqrt(ww);
      } else {
        d = dot(w, h, in);
      }
      lc.row_dot[j] = d;
      lc.row_scale[j] = scale;
      out[j] = scale * d + layer.b[j];
    }
  }
  cache.logit = logit;
  cache.prediction = sigmoid(std::clamp(logit, -kLogitClamp, kLogitClamp));
}

}  // namespace

std::string_view to_string(NormKind kind) {
  switch (kind) {
    case NormKind::None: return "none";
    case NormKind::WeightNorm: return "weight";
    case NormKind::LayerNorm: return "layer";
  }
  return "none";
}

NormKind parse_norm(std::string_view text) {
  if (text == "none") return NormKind::None;
  if (text == "weight" || text == "weightnorm") return NormKind::WeightNorm;
  if (text == "layer" || text == "layernorm") return NormKind::LayerNorm;
  throw ConfigError("unknown norm '" + std::string(text) + "'");
}

std::vector<double> weight_normalize(std::span<const double> w, double v) {
  const double norm = std::sqrt(dot(w.data(), w.data(), w.size()));
  if (!(norm > 0.0)) throw InvalidInput("cannot weight-normalize a zero vector");
  std::vector<double> out(w.size());
  const double scale = v / norm;
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] * scale;
  return out;
}

std::vector<double> layer_normalize(std::span<const double> a) {
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0;
  for (double v : a) var += (v - mean) * (v - mean);
  var /= n;
  const double rstd = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - mean) * rstd;
  return out;
}

std::vector<double> clip(std::span<const double> a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::clamp(a[i], -c, c);
  return out;
}

std::size_t ModelConfig::input_dim() const {
  std::size_t d = dense_inputs;
  for (const auto& t : tables) d += t.dim;
  return d;
}

void ModelConfig::validate() const {
  for (const auto& t : tables) {
    if (t.dim == 0) throw ConfigError("embedding dimension must be positive");
  }
  if (input_dim() == 0) throw ConfigError("model has no inputs");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("hidden layer width must be positive");
  }
  if (!layer_activations.empty() && layer_activations.size() != layer_count()) {
    throw ConfigError("expected " + std::to_string(layer_count()) +
                      " per-layer activations, got " + std::to_string(layer_activations.size()));
  }
  activation.validate();
  for (const auto& a : layer_activations) a.validate();
  if (norm == NormKind::WeightNorm && !(norm_value > 0.0)) {
    throw ConfigError("weight norm value must be positive");
  }
  if (clip < 0.0) throw ConfigError("clip bound must be >= 0");
  if (norm == NormKind::LayerNorm) {
    if (layer_norm_input) check_layer_norm_width(input_dim(), 0);
    for (std::size_t l = 0; l < hidden.size(); ++l) check_layer_norm_width(hidden[l], l + 1);
  }
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tables) n += t.weights.size();
  for (const auto& l : layers) {
    n += l.w.size() + l.b.size();
    if (l.activation.trainable) n += 5;
  }
  return n;
}

Model make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  model.seed = seed;
  std::mt19937_64 rng(seed);

  for (const auto& spec : config.tables) {
    EmbeddingTable t;
    t.vocab = spec.vocab;
    t.dim = spec.dim;
    t.weights.resize((spec.vocab + 1) * spec.dim);
    std::normal_distribution<double> init(0.0, config.embedding_init_std);
    for (auto& v : t.weights) v = init(rng);
    model.tables.push_back(std::move(t));
  }

  std::size_t in = config.input_dim();
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    DenseLayer layer;
    layer.in = in;
    layer.out = l < config.hidden.size() ? config.hidden[l] : 1;
    if (!config.layer_activations.empty()) {
      layer.activation = config.layer_activations[l];
    } else {
      layer.activation = config.activation;
    }
    if (l == 0 && config.identity_input_activation) layer.activation = ActivationSpec::identity();
    layer.norm = config.norm;
    if (l == 0 && config.norm == NormKind::LayerNorm && !config.layer_norm_input) {
      layer.norm = NormKind::None;
    }
    layer.norm_value = config.norm_value;
    layer.clip = config.clip;
    layer.w.resize(layer.in * layer.out);
    layer.b.assign(layer.out, 0.0);
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    for (auto& v : layer.w) v = init(rng);
    in = layer.out;
    model.layers.push_back(std::move(layer));
  }
  renormalize(model);
  return model;
}

void renormalize(Model& model) {
  for (auto& layer : model.layers) {
    if (layer.norm != NormKind::WeightNorm) continue;
    for (std::size_t j = 0; j < layer.out; ++j) {
      auto row = layer.row(j);
      const double norm = std::sqrt(dot(row.data(), row.data(), row.size()));
      if (!(norm > 0.0)) throw InvalidInput("weight-norm row collapsed to zero");
      const double scale = layer.norm_value / norm;
      for (double& v : row) v *= scale;
    }
  }
}

void forward(const Model& model, const SparseExample& example, ForwardCache& cache) {
  cache.layers.resize(model.layers.size());
  auto& input = cache.layers.front().input;
  input.assign(model.config.input_dim(), 0.0);
  cache.refs.clear();

  std::size_t offset_of[64];
  std::vector<std::size_t> offsets_heap;
  std::size_t* offsets = offset_of;
  if (model.tables.size() > 64) {
    offsets_heap.resize(model.tables.size());
    offsets = offsets_heap.data();
  }
  std::size_t off = 0;
  for (std::size_t t = 0; t < model.tables.size(); ++t) {
    offsets[t] = off;
    off += model.tables[t].dim;
  }

  for (const Feature& f : example.features) {
    if (f.table >= model.tables.size()) {
      throw InvalidInput("feature references table " + std::to_string(f.table) +
                         " but the model has " + std::to_string(model.tables.size()));
    }
    const EmbeddingTable& table = model.tables[f.table];
    const std::size_t r = table.row_of(f.id);
    const double* e = table.weights.data() + r * table.dim;
    double* dst = input.data() + offsets[f.table];
    for (std::size_t k = 0; k < table.dim; ++k) dst[k] += f.value * e[k];
    cache.refs.push_back({f.table, r, f.value});
  }
  run_layers(model, cache);
}

ForwardCache forward(const Model& model, const SparseExample& example) {
  ForwardCache cache;
  forward(model, example, cache);
  return cache;
}

void forward_dense(const Model& model, std::span<const double> input, ForwardCache& cache) {
  if (input.size() != model.config.input_dim()) {
    throw InvalidInput("dense input has " + std::to_string(input.size()) + " values, expected " +
                       std::to_string(model.config.input_dim()));
  }
  cache.layers.resize(model.layers.size());
  cache.layers.front().input.assign(input.begin(), input.end());
  cache.refs.clear();
  run_layers(model, cache);
}

double predict(const Model& model, const SparseExample& example) {
  return forward(model, example).prediction;
}

double log_loss_from_logit(double logit, int label) {
  const double s = std::clamp(logit, -kLogitClamp, kLogitClamp);
  // -log sigmoid(s) for y = 1, -log(1 - sigmoid(s)) for y = 0.
  const double z = label ? -s : s;
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

void backward(const Model& model, const ForwardCache& cache, int label, Gradients& grads) {
  const std::size_t n = model.layers.size();
  grads.layers.resize(n);
  grads.loss = log_loss_from_logit(cache.logit, label);

  // The logit clamp only guards the loss value; the gradient keeps the
  // logistic identity d loss / d logit = prediction - label.
  thread_local std::vector<double> delta;
  thread_local std::vector<double> d_h;
  delta.assign(1, cache.prediction - static_cast<double>(label));

  for (std::size_t li = n; li-- > 0;) {
    const DenseLayer& layer = model.layers[li];
    const LayerCache& lc = cache.layers[li];
    LayerGradients& lg = grads.layers[li];
    const std::size_t in = layer.in;
    lg.w.resize(layer.w.size());
    lg.b.assign(delta.begin(), delta.end());
    d_h.assign(in, 0.0);

    const double* h = lc.linear_in.data();
    for (std::size_t j = 0; j < layer.out; ++j) {
      const double* w = layer.w.data() + j * in;
      double* gw = lg.w.data() + j * in;
      const double dj = delta[j];
      if (dj == 0.0) {
        std::fill(gw, gw + in, 0.0);
        continue;
      }
      const double s = lc.row_scale[j];
      if (layer.norm == NormKind::WeightNorm) {
        // d/dw of v w.h/||w||: s * dj * (h - (h.w) w / ||w||^2), with 1/||w||^2 = s^2/v^2.
        const double proj = lc.row_dot[j] * s * s / (layer.norm_value * layer.norm_value);
        for (std::size_t k = 0; k < in; ++k) gw[k] = s * dj * (h[k] - proj * w[k]);
      } else {
        for (std::size_t k = 0; k < in; ++k) gw[k] = dj * h[k];
      }
      const double sd = s * dj;
      for (std::size_t k = 0; k < in; ++k) d_h[k] += sd * w[k];
    }

    if (layer.norm == NormKind::LayerNorm) {
      const double m = static_cast<double>(in);
      double mean_d = 0.0;
      double mean_dy = 0.0;
      for (std::size_t k = 0; k < in; ++k) {
        mean_d += d_h[k];
        mean_dy += d_h[k] * h[k];
      }
      mean_d /= m;
      mean_dy /= m;
      for (std::size_t k = 0; k < in; ++k) {
        d_h[k] = lc.ln_rstd * (d_h[k] - mean_d - h[k] * mean_dy);
      }
    }
    if (layer.clip > 0.0) {
      for (std::size_t k = 0; k < in; ++k) {
        if (std::abs(lc.activated[k]) > layer.clip) d_h[k] = 0.0;
      }
    }

    lg.activation = {};
    if (layer.activation.trainable) {
      for (std::size_t k = 0; k < in; ++k) {
        if (d_h[k] == 0.0) continue;
        const GSmeLUGrads pg = gsmelu_param_grads(layer.activation.gsmelu, lc.input[k]);
        lg.activation.d_alpha += d_h[k] * pg.d_alpha;
        lg.activation.d_beta += d_h[k] * pg.d_beta;
        lg.activation.d_g_minus += d_h[k] * pg.d_g_minus;
        lg.activation.d_g_plus += d_h[k] * pg.d_g_plus;
        lg.activation.d_t += d_h[k] * pg.d_t;
      }
    }
    delta.resize(in);
    for (std::size_t k = 0; k < in; ++k) delta[k] = d_h[k] * lc.slope[k];
  }

  grads.input = delta;

  // Entries are reused across calls to keep their buffers.
  thread_local std::vector<std::size_t> offsets;
  offsets.resize(model.tables.size());
  std::size_t off = 0;
  for (std::size_t t = 0; t < model.tables.size(); ++t) {
    offsets[t] = off;
    off += model.tables[t].dim;
  }
  std::size_t used = 0;
  for (const EmbeddingRef& ref : cache.refs) {
    const std::size_t dim = model.tables[ref.table].dim;
    std::size_t e = 0;
    while (e < used && !(grads.embeddings[e].table == ref.table &&
                         grads.embeddings[e].row == ref.row)) {
      ++e;
    }
    if (e == used) {
      if (used == grads.embeddings.size()) grads.embeddings.emplace_back();
      EmbeddingGradient& fresh = grads.embeddings[used++];
      fresh.table = ref.table;
      fresh.row = ref.row;
      fresh.grad.assign(dim, 0.0);
    }
    EmbeddingGradient& eg = grads.embeddings[e];
    const double* src = grads.input.data() + offsets[ref.table];
    for (std::size_t k = 0; k < dim; ++k) eg.grad[k] += ref.value * src[k];
  }
  grads.embeddings.resize(used);
}

Gradients backward(const Model& model, const ForwardCache& cache, int label) {
  Gradients g;
  backward(model, cache, label, g);
  return g;
}

}  // namespace smelu
