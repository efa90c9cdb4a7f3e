#pragma once

// Experiment driver: duplicate-pair training under controlled nondeterminism,
// activation sweeps, loss-landscape sampling of random frozen networks and the
// self-ensemble baseline.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smelu/config.hpp"
#include "smelu/data.hpp"
#include "smelu/metrics.hpp"
#include "smelu/net.hpp"
#include "smelu/optim.hpp"

namespace smelu {

enum class SeedPolicy { Shared, Distinct };
enum class PdMode { Holdout, Progressive };

/// Where two otherwise identical training runs are allowed to differ.
struct NondetConfig {
  SeedPolicy init_policy = SeedPolicy::Shared;
  std::uint64_t init_seed = 11;
  std::size_t shuffle_window = 1000;
  SeedPolicy shuffle_policy = SeedPolicy::Distinct;
  std::uint64_t shuffle_seed = 23;
  /// Probability of swapping an adjacent pair after shuffling.
  double interleave_rate = 0.0;
  SeedPolicy interleave_policy = SeedPolicy::Distinct;
  std::uint64_t interleave_seed = 37;
};

struct SweepConfig {
  std::vector<ActivationKind> activations{ActivationKind::ReLU, ActivationKind::SmeLU};
  /// Transition half-widths. Used as beta for SmeLU and as alpha = beta for
  /// gSmeLU; the exponential family uses the reciprocal.
  std::vector<double> grid{0.1, 0.25, 0.5, 1.0, 2.0, 4.0};
  /// Optional per-layer multipliers (input side first) producing extra SmeLU rows.
  std::vector<double> layer_scale;
};

enum class LandscapeLoss { Logistic, Regression };

struct LandscapeConfig {
  std::vector<std::size_t> hidden{256, 128, 64, 32, 16};
  ActivationSpec activation;
  NormKind norm = NormKind::WeightNorm;
  double norm_value = 1.0;
  double clip = 6.0;
  double weight_std = 5.0;
  double bias_std = 0.5;
  LandscapeLoss loss = LandscapeLoss::Logistic;
  double p1 = 0.1;
  double target = -2.0;
  std::size_t dims = 1;
  double lo = -3.0;
  double hi = 3.0;
  std::size_t points = 2001;
  std::uint64_t seed = 1;
  /// Number of seeds scanned by the summary statistics (seed, seed+1, ...).
  std::size_t seeds = 50;

  /// Weights N(0,25), biases N(0,0.25), weight norm, clip 6, logistic loss.
  static LandscapeConfig weight_norm_preset();
  /// Weights and biases N(0,1), layer norm, clip 6, logistic loss.
  static LandscapeConfig layer_norm_preset();
  /// Two inputs, weights and biases N(0,1), weight norm, clip 4, squared
  /// error against -2.
  static LandscapeConfig regression_preset();

  void validate() const;
};

struct EnsembleConfig {
  std::size_t components = 3;
  SeedPolicy component_seeds = SeedPolicy::Distinct;
  /// Largest allowed relative parameter-budget mismatch.
  double budget_tolerance = 0.02;
};

struct ExperimentConfig {
  ModelConfig model;
  /// Embedding width for every table (tables come from the data).
  std::size_t embedding_dim = 8;
  SynthConfig data;
  std::string data_path;
  double holdout_fraction = 0.1;
  OptimizerConfig optim;
  NondetConfig nondet;
  std::uint64_t seed = 1;
  std::size_t repetitions = 1;
  std::size_t jobs = 1;
  PdMode pd_mode = PdMode::Holdout;
  TieMode ties = TieMode::Strict;
  SweepConfig sweep;
  LandscapeConfig landscape;
  EnsembleConfig ensemble;
  std::string out;

  /// Desk-scale default: [64,32,16] net on 10^6 synthetic examples.
  static ExperimentConfig desk_default();
  /// Six-layer [1024,512,256,128,64,16] net over 5 tables of width 48 (240 inputs).
  static ExperimentConfig paper_shape();

  void validate() const;
};

/// Throws ConfigError on unknown keys or bad values. Keys not present keep
/// the values from base.
ExperimentConfig parse_experiment(const KeyValues& kv,
                                  const ExperimentConfig& base = ExperimentConfig::desk_default());
/// Canonical text of every key, parseable by parse_experiment.
KeyValues to_key_values(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

/// Deterministic seed derivation (splitmix64 over the parts).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

struct Dataset {
  std::vector<SparseExample> examples;
  std::size_t train_size = 0;
  std::vector<TableSpec> tables;  // vocabularies as seen by the model
};

/// Generated stream for repetition rep (or the file at data_path), split into
/// a training prefix and a holdout suffix.
Dataset load_dataset(const ExperimentConfig& config, std::size_t rep);

/// Model configuration with tables derived from the dataset.
ModelConfig model_config_for(const ExperimentConfig& config, const Dataset& data);

/// Training order of one run: windowed shuffle, then adjacent-pair interleaving.
std::vector<std::size_t> training_order(const ExperimentConfig& config, std::size_t n,
                                        std::size_t rep, std::size_t member);

struct RunMetrics {
  ProgressiveMetrics progressive;
  double holdout_log_loss = 0.0;
};

struct PairResult {
  RunMetrics first;
  RunMetrics second;
  /// Relative PD as a fraction.
  double pd = 0.0;
};

/// Trains a set of models in lockstep on one order; the prediction is the
/// mean of the members' predictions. Returns progressive and holdout metrics
/// plus the holdout and per-example progressive predictions.
struct TrainedRun {
  RunMetrics metrics;
  std::vector<double> holdout_predictions;
  std::vector<double> progressive_predictions;  // indexed by training example
};

TrainedRun train_run(const ExperimentConfig& config, const Dataset& data,
                     const std::vector<ModelConfig>& members,
                     const std::vector<std::uint64_t>& init_seeds,
                     const std::vector<std::size_t>& order);

PairResult train_pair(const ExperimentConfig& config, const Dataset& data, std::size_t rep);
PairResult train_pair(const ExperimentConfig& config, std::size_t rep = 0);

struct SweepRow {
  std::string activation;
  std::string params;
  std::size_t rep = 0;
  double log_loss = 0.0;
  double auc = 0.0;
  double pqauc = 0.0;
  double pd = 0.0;
  double d_log_loss_pct = 0.0;
  double d_pqauc_pct = 0.0;
  std::string error;  // non-empty when the cell failed
};

struct Report {
  /// Ordered header entries written as comments / a JSON header object.
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<SweepRow> rows;
};

/// Every activation setting of a sweep, ReLU baseline first.
struct SweepEntry {
  ActivationSpec activation;
  std::vector<ActivationSpec> per_layer;
  std::string name;
  std::string params;
};
std::vector<SweepEntry> sweep_entries(const ExperimentConfig& config);

using ProgressFn = std::function<void(const std::string&)>;

Report beta_sweep(const ExperimentConfig& config, const ProgressFn& progress = {});

struct LandscapeSample {
  std::size_t dims = 1;
  std::vector<double> x1;
  std::vector<double> x2;
  /// Row-major over (x2, x1) for 2-D samples.
  std::vector<double> loss;
  std::string network;
  std::uint64_t seed = 0;
  std::string loss_kind;
  double loss_param = 0.0;
};

/// Random frozen network built per cfg, evaluated over the input grid.
LandscapeSample landscape(const LandscapeConfig& cfg);
/// Interior grid points strictly below both neighbours.
std::size_t count_strict_minima(std::span<const double> curve);
/// Median strict-minima count of 1-D scans over cfg.seeds consecutive seeds.
double median_minima(const LandscapeConfig& cfg);

struct EnsembleRow {
  std::size_t rep = 0;
  RunMetrics single_first;
  RunMetrics single_second;
  double single_pd = 0.0;
  RunMetrics ensemble_first;
  RunMetrics ensemble_second;
  double ensemble_pd = 0.0;
};

struct EnsembleReport {
  std::vector<std::pair<std::string, std::string>> header;
  std::size_t single_parameters = 0;
  std::size_t ensemble_parameters = 0;
  ModelConfig component;
  std::vector<EnsembleRow> rows;
};

/// Component shape for a k-member ensemble whose total parameter count matches
/// the wide model within tolerance. Throws ConfigError otherwise.
ModelConfig ensemble_component(const ModelConfig& wide, std::size_t k, double tolerance);

/// k-member ensemble pair (and the single-net pair it is compared with) for
/// repetition rep.
EnsembleRow ensemble_pair(const ExperimentConfig& config, const Dataset& data, std::size_t rep);
EnsembleReport ensemble_baseline(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Sample mean and the half-width of its normal-approximation 95% interval.
struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
};
MeanCi mean_ci(std::span<const double> values);

enum class EmitFormat { Csv, Json };

void emit(const Report& report, const std::filesystem::path& path, EmitFormat format);
void emit(const LandscapeSample& sample, const std::filesystem::path& path,
          const std::vector<std::pair<std::string, std::string>>& header);
void emit(const EnsembleReport& report, const std::filesystem::path& path, EmitFormat format);

std::string to_csv(const Report& report);
std::string to_json(const Report& report);
std::string to_csv(const EnsembleReport& report);
std::string to_json(const EnsembleReport& report);
std::string to_csv(const LandscapeSample& sample,
                   const std::vector<std::pair<std::string, std::string>>& header);

inline constexpr const char* kSweepCsvHeader =
    "activation,params,rep,logloss,auc,pqauc,pd_pct,d_logloss_pct,d_pqauc_pct";

}  // namespace smelu
