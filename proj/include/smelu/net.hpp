#pragma once

// Sparse-input MLP: embedding tables as layer 0 followed by dense layers
//   a^l = W^l * norm(clip(f(a^{l-1}))) + b^l
// with a logistic output, and exact backpropagation through every stage.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smelu/activations.hpp"
#include "smelu/data.hpp"

namespace smelu {

enum class NormKind { None, WeightNorm, LayerNorm };

std::string_view to_string(NormKind kind);
NormKind parse_norm(std::string_view text);

inline constexpr double kLayerNormEpsilon = 1e-6;
inline constexpr double kLogitClamp = 30.0;

/// v * w / ||w||_2. Throws InvalidInput for a zero vector.
std::vector<double> weight_normalize(std::span<const double> w, double v);

/// (a - mean) / sqrt(var + 1e-6), no learned gain or bias.
std::vector<double> layer_normalize(std::span<const double> a);

std::vector<double> clip(std::span<const double> a, double c);

struct EmbeddingTable {
  std::size_t vocab = 0;
  std::size_t dim = 0;
  /// (vocab + 1) rows of dim values; the last row is the out-of-vocabulary bucket.
  std::vector<double> weights;

  std::size_t row_of(std::int64_t id) const {
    return (id >= 0 && static_cast<std::uint64_t>(id) < vocab) ? static_cast<std::size_t>(id)
                                                               : vocab;
  }
  std::span<double> row(std::size_t r) { return {weights.data() + r * dim, dim}; }
  std::span<const double> row(std::size_t r) const { return {weights.data() + r * dim, dim}; }
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;
  /// Applied to this layer's input.
  ActivationSpec activation;
  NormKind norm = NormKind::None;
  double norm_value = 1.0;
  /// Symmetric bound on activated values; 0 disables clipping.
  double clip = 0.0;

  std::span<double> row(std::size_t j) { return {w.data() + j * in, in}; }
  std::span<const double> row(std::size_t j) const { return {w.data() + j * in, in}; }
};

struct TableSpec {
  std::size_t vocab = 0;
  std::size_t dim = 0;
  bool operator==(const TableSpec&) const = default;
};

struct ModelConfig {
  std::vector<TableSpec> tables;
  /// Raw numeric inputs appended after the embeddings.
  std::size_t dense_inputs = 0;
  std::vector<std::size_t> hidden{64, 32, 16};
  ActivationSpec activation;
  /// Optional per-layer activations (hidden.size() + 1 entries, input side first).
  std::vector<ActivationSpec> layer_activations;
  NormKind norm = NormKind::WeightNorm;
  double norm_value = 1.0;
  double clip = 0.0;
  /// Skip the nonlinearity on the embeddings (layer 1 input).
  bool identity_input_activation = false;
  /// Apply LayerNorm to the layer-1 input as well (needs input_dim() >= 2).
  bool layer_norm_input = true;
  double embedding_init_std = 0.1;

  std::size_t input_dim() const;
  std::size_t layer_count() const { return hidden.size() + 1; }
  /// Throws ConfigError for inconsistent dimensions or parameters.
  void validate() const;
};

struct Model {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::vector<EmbeddingTable> tables;
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
};

/// Weights N(0, 2/fan_in), biases 0, embeddings N(0, embedding_init_std^2),
/// all drawn from seed. WeightNorm rows are projected to norm v.
Model make_model(const ModelConfig& config, std::uint64_t seed);

/// Projects every row of every WeightNorm layer back to norm v.
void renormalize(Model& model);

struct EmbeddingRef {
  std::uint32_t table = 0;
  std::size_t row = 0;
  double value = 1.0;
};

struct LayerCache {
  std::vector<double> input;      // a^{l-1}
  std::vector<double> activated;  // f(a^{l-1})
  std::vector<double> slope;      // f'(a^{l-1})
  std::vector<double> linear_in;  // after clip and normalization
  std::vector<double> row_dot;    // raw w_j . linear_in
  std::vector<double> row_scale;  // WeightNorm: v / ||w_j||, otherwise 1
  double ln_rstd = 1.0;
};

struct ForwardCache {
  std::vector<EmbeddingRef> refs;
  std::vector<LayerCache> layers;
  double logit = 0.0;
  double prediction = 0.5;
};

void forward(const Model& model, const SparseExample& example, ForwardCache& cache);
ForwardCache forward(const Model& model, const SparseExample& example);
/// Forward pass from an explicit layer-0 vector of size input_dim().
void forward_dense(const Model& model, std::span<const double> input, ForwardCache& cache);

double predict(const Model& model, const SparseExample& example);

struct LayerGradients {
  std::vector<double> w;
  std::vector<double> b;
  GSmeLUGrads activation;
};

struct EmbeddingGradient {
  std::uint32_t table = 0;
  std::size_t row = 0;
  std::vector<double> grad;
};

struct Gradients {
  std::vector<LayerGradients> layers;
  /// Only rows referenced by the example, one entry per distinct (table, row).
  std::vector<EmbeddingGradient> embeddings;
  /// Gradient with respect to the layer-0 vector.
  std::vector<double> input;
  double loss = 0.0;
};

/// Log loss of a clamped logit against a binary label.
double log_loss_from_logit(double logit, int label);

/// Exact gradients of the log loss for the state the cache was computed on.
void backward(const Model& model, const ForwardCache& cache, int label, Gradients& grads);
Gradients backward(const Model& model, const ForwardCache& cache, int label);

}  // namespace smelu
