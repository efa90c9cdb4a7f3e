#pragma once

// Plain SGD and per-coordinate AdaGrad. Embedding rows are updated only when
// an example touches them; learnable gSmeLU parameters are stepped in an
// unconstrained parameterization (alpha = e^u, beta = e^v, t = -e^w).

#include <span>
#include <string_view>
#include <vector>

#include "smelu/net.hpp"

namespace smelu {

enum class OptimizerKind { Sgd, AdaGrad };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::AdaGrad;
  double lr_embedding = 0.05;
  double lr_dense = 0.01;
  double lr_activation = 0.001;
  double epsilon = 1e-8;
  double g_init = 0.0;

  void validate() const;
};

/// p <- p - lr * g.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

/// Accumulators for one block of parameters.
struct AdaGradState {
  double lr = 0.01;
  double epsilon = 1e-8;
  double g_init = 0.0;
  std::vector<double> accum;
};

/// G <- G + g^2; p <- p - lr g / sqrt(G + eps) for every coordinate with g != 0.
/// The accumulator block is sized to params (filled with g_init) on first use.
void adagrad_step(AdaGradState& state, std::span<double> params, std::span<const double> grads);

/// Same update on an explicit accumulator slice.
void adagrad_update(std::span<double> accum, std::span<double> params,
                    std::span<const double> grads, double lr, double epsilon);

/// Unconstrained coordinates of a gSmeLU parameter set.
struct GSmeLUCoords {
  double log_alpha = 0.0;
  double log_beta = 0.0;
  double g_minus = 0.0;
  double g_plus = 1.0;
  double log_neg_t = 0.0;
};

GSmeLUCoords to_coords(const GSmeLUParams& p);
GSmeLUParams from_coords(const GSmeLUCoords& c);

class Optimizer {
 public:
  struct LayerState {
    AdaGradState w;
    AdaGradState b;
    AdaGradState activation;  // 5 accumulators in GSmeLUCoords order
  };

  Optimizer(const Model& model, OptimizerConfig config);

  /// Applies one update and re-projects WeightNorm rows to norm v.
  void step(Model& model, const Gradients& grads);

  const OptimizerConfig& config() const { return config_; }
  std::vector<AdaGradState>& tables() { return tables_; }
  const std::vector<AdaGradState>& tables() const { return tables_; }
  std::vector<LayerState>& layers() { return layers_; }
  const std::vector<LayerState>& layers() const { return layers_; }

 private:
  void step_activation(DenseLayer& layer, LayerState& state, const GSmeLUGrads& g);

  OptimizerConfig config_;
  std::vector<AdaGradState> tables_;
  std::vector<LayerState> layers_;
};

}  // namespace smelu
