#pragma once

// Reproducibility and accuracy metrics: relative prediction difference between
// two models, AUC ranking loss (overall and per query) and progressive
// validation.

#include <cstdint>
#include <span>
#include <vector>

namespace smelu {

struct PredictionPair {
  std::size_t example = 0;
  double first = 0.5;
  double second = 0.5;
};

/// Mean of 2|p1 - p2| / (p1 + p2). Throws InvalidInput on an empty list.
double relative_pd(std::span<const PredictionPair> pairs);
double relative_pd(std::span<const double> first, std::span<const double> second);

/// How a negative scored exactly like a positive counts toward the AUC loss.
enum class TieMode { Strict, Half };

struct ScoredLabel {
  double score = 0.0;
  int label = 0;
};

/// Fraction of (positive, negative) pairs where the negative scores strictly
/// higher. O(n log n). Throws UndefinedMetric unless both classes are present.
double auc_loss(std::span<const ScoredLabel> preds, TieMode ties = TieMode::Strict);

struct QueryScoredLabel {
  std::int64_t query = 0;
  double score = 0.0;
  int label = 0;
};

/// Unweighted mean of auc_loss over queries holding both classes.
/// Throws UndefinedMetric when no query qualifies.
double pq_auc(std::span<const QueryScoredLabel> preds, TieMode ties = TieMode::Strict);

struct ProgressiveMetrics {
  std::size_t count = 0;
  double log_loss = 0.0;
  double auc = 0.0;
  double pqauc = 0.0;
};

/// Each example is scored before the model trains on it.
class ProgressiveAccumulator {
 public:
  explicit ProgressiveAccumulator(TieMode ties = TieMode::Strict) : ties_(ties) {}

  void reserve(std::size_t n) { records_.reserve(n); }
  void update(double prediction, int label, std::int64_t query);

  std::size_t count() const { return records_.size(); }
  const std::vector<QueryScoredLabel>& records() const { return records_; }
  ProgressiveMetrics finalize() const;

 private:
  TieMode ties_;
  double log_loss_sum_ = 0.0;
  std::vector<QueryScoredLabel> records_;
};

double log_loss(double prediction, int label);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace smelu
