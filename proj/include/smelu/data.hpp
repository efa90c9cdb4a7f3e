#pragma once

// Sparse CTR-style examples: synthetic generation with a known ground-truth
// engagement model, a line-oriented text format and windowed shuffling.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace smelu {

struct Feature {
  std::uint32_t table = 0;
  std::int64_t id = 0;
  double value = 1.0;

  bool operator==(const Feature&) const = default;
};

struct SparseExample {
  std::int64_t query_id = 0;
  std::vector<Feature> features;
  int label = 0;

  bool operator==(const SparseExample&) const = default;
};

struct SynthConfig {
  std::size_t tables = 6;
  /// One entry per table, or a single entry applied to all tables.
  std::vector<std::size_t> vocab{1000};
  std::size_t informative = 5;
  /// The first query_tables tables are drawn once per query and shared by its items.
  std::size_t query_tables = 1;
  std::size_t queries = 10000;
  std::size_t items_per_query = 10;
  double base_rate = 0.2;
  /// Angular speed (radians per example) of the rotation between two
  /// independent draws of the additive ground-truth weights. 0 = stationary.
  double drift = 0.0;
  double weight_scale = 1.0;
  /// Scale of the pairwise low-rank interaction terms between informative tables.
  double interaction = 1.0;
  std::size_t interaction_rank = 4;
  /// Probability of flipping the sampled label.
  double label_noise = 0.0;
  std::uint64_t seed = 1;

  std::size_t vocab_of(std::size_t table) const;
  std::size_t examples() const { return queries * items_per_query; }
  /// Throws ConfigError on inconsistent knobs.
  void validate() const;
};

/// Deterministic example stream. The ground-truth logit of an example is a
/// calibrated bias plus per-id weights of the informative tables plus pairwise
/// inner products of per-id factor vectors.
class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SynthConfig config);

  SparseExample next();
  /// True engagement probability of the example most recently returned.
  double last_probability() const { return last_p_; }
  std::size_t produced() const { return index_; }

  const SynthConfig& config() const { return config_; }
  double bias() const { return bias_; }

  /// Overrides one additive ground-truth weight (both drift phases).
  void set_true_logit(std::size_t table, std::int64_t id, double logit);
  /// Ground-truth logit for a full assignment of ids (one per table) at stream position index.
  double true_logit(const std::vector<std::int64_t>& ids, std::size_t index) const;

 private:
  void calibrate_bias();

  SynthConfig config_;
  std::mt19937_64 rng_;
  std::vector<std::vector<double>> weights_;      // [informative][id]
  std::vector<std::vector<double>> alt_weights_;  // drift partner
  std::vector<std::vector<double>> factors_;      // [informative][id * rank + r]
  double bias_ = 0.0;
  std::vector<std::int64_t> query_ids_;
  std::size_t index_ = 0;
  double last_p_ = 0.5;
};

std::vector<SparseExample> generate(const SynthConfig& config);

/// Generated stream together with the generator's true probabilities.
struct LabeledStream {
  std::vector<SparseExample> examples;
  std::vector<double> probabilities;
};

LabeledStream generate_with_oracle(const SynthConfig& config);

/// Format: one example per line, `qid<TAB>label<TAB>table:id:value,...`.
/// Lines starting with '#' are header comments and are skipped on read.
void write_examples(std::ostream& out, const std::vector<SparseExample>& examples);
void write_examples(const std::filesystem::path& path, const std::vector<SparseExample>& examples,
                    const std::string& header = {});
/// Throws ParseError with the 1-based line and column of the first malformed field.
std::vector<SparseExample> read_examples(std::istream& in);
std::vector<SparseExample> read_examples(const std::filesystem::path& path);

std::string format_example(const SparseExample& example);

/// Windowed shuffle: keeps a buffer of window_size items and emits a uniformly
/// chosen one each time a new item arrives. window_size = 1 is the identity.
template <typename T>
std::vector<T> shuffle_window(const std::vector<T>& stream, std::size_t window_size,
                              std::uint64_t seed);

/// Permutation of [0, n) produced by shuffle_window.
std::vector<std::size_t> shuffle_window_order(std::size_t n, std::size_t window_size,
                                              std::uint64_t seed);

template <typename T>
std::vector<T> shuffle_window(const std::vector<T>& stream, std::size_t window_size,
                              std::uint64_t seed) {
  const auto order = shuffle_window_order(stream.size(), window_size, seed);
  std::vector<T> out;
  out.reserve(stream.size());
  for (auto i : order) out.push_back(stream[i]);
  return out;
}

}  // namespace smelu
