#include "smelu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "smelu/error.hpp"

namespace smelu {

double relative_pd(std::span<const PredictionPair> pairs) {
  if (pairs.empty()) throw InvalidInput("relative PD needs at least one prediction pair");
  double sum = 0.0;
  for (const auto& p : pairs) sum += 2.0 * std::abs(p.first - p.second) / (p.first + p.second);
  return sum / static_cast<double>(pairs.size());
}

double relative_pd(std::span<const double> first, std::span<const double> second) {
  if (first.size() != second.size()) throw InvalidInput("prediction lists differ in length");
  if (first.empty()) throw InvalidInput("relative PD needs at least one prediction pair");
  double sum = 0.0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    sum += 2.0 * std::abs(first[i] - second[i]) / (first[i] + second[i]);
  }
  return sum / static_cast<double>(first.size());
}

namespace {

template <typename Range>
double auc_loss_impl(const Range& preds, TieMode ties) {
  std::vector<double> negatives;
  std::size_t positives = 0;
  for (const auto& p : preds) {
    if (p.label) {
      ++positives;
    } else {
      negatives.push_back(p.score);
    }
  }
  if (positives == 0 || negatives.empty()) {
    throw UndefinedMetric("AUC loss needs both positive and negative labels");
  }
  std::sort(negatives.begin(), negatives.end());
  double wrong = 0.0;
  for (const auto& p : preds) {
    if (!p.label) continue;
    const auto upper = std::upper_bound(negatives.begin(), negatives.end(), p.score);
    wrong += static_cast<double>(negatives.end() - upper);
    if (ties == TieMode::Half) {
      const auto lower = std::lower_bound(negatives.begin(), negatives.end(), p.score);
      wrong += 0.5 * static_cast<double>(upper - lower);
    }
  }
  return wrong / (static_cast<double>(positives) * static_cast<double>(negatives.size()));
}

}  // namespace

double auc_loss(std::span<const ScoredLabel> preds, TieMode ties) {
  return auc_loss_impl(preds, ties);
}

double pq_auc(std::span<const QueryScoredLabel> preds, TieMode ties) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].query < preds[b].query; });

  double sum = 0.0;
  std::size_t eligible = 0;
  std::vector<ScoredLabel> group;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    group.clear();
    bool pos = false;
    bool neg = false;
    while (j < order.size() && preds[order[j]].query == preds[order[i]].query) {
      const auto& r = preds[order[j]];
      group.push_back({r.score, r.label});
      (r.label ? pos : neg) = true;
      ++j;
    }
    if (pos && neg) {
      sum += auc_loss_impl(group, ties);
      ++eligible;
    }
    i = j;
  }
  if (eligible == 0) throw UndefinedMetric("no query contains both positive and negative labels");
  return sum / static_cast<double>(eligible);
}

double log_loss(double prediction, int label) {
  return label ? -std::log(prediction) : -std::log1p(-prediction);
}

void ProgressiveAccumulator::update(double prediction, int label, std::int64_t query) {
  log_loss_sum_ += log_loss(prediction, label);
  records_.push_back({query, prediction, label});
}

ProgressiveMetrics ProgressiveAccumulator::finalize() const {
  ProgressiveMetrics m;
  m.count = records_.size();
  if (m.count == 0) return m;
  m.log_loss = log_loss_sum_ / static_cast<double>(m.count);
  std::vector<ScoredLabel> flat;
  flat.reserve(records_.size());
  for (const auto& r : records_) flat.push_back({r.score, r.label});
  // Ranking losses are NaN when the stream has no eligible pair.
  m.auc = std::numeric_limits<double>::quiet_NaN();
  m.pqauc = m.auc;
  try {
    m.auc = auc_loss(flat, ties_);
    m.pqauc = pq_auc(records_, ties_);
  } catch (const UndefinedMetric&) {
  }
  return m;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidInput("spearman needs two equally long samples of size >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace smelu
