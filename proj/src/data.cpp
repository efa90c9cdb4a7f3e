#include "smelu/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "smelu/error.hpp"
#include "smelu/text.hpp"

namespace smelu {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Sample size used to calibrate the ground-truth bias to the base rate.
constexpr std::size_t kCalibrationSamples = 200000;

}  // namespace

std::size_t SynthConfig::vocab_of(std::size_t table) const {
  return vocab.size() == 1 ? vocab.front() : vocab.at(table);
}

void SynthConfig::validate() const {
  if (tables == 0) throw ConfigError("data.tables must be positive");
  if (vocab.empty() || (vocab.size() != 1 && vocab.size() != tables)) {
    throw ConfigError("data.vocab needs one entry or one per table");
  }
  for (auto v : vocab) {
    if (v == 0) throw ConfigError("vocabulary sizes must be positive");
  }
  if (informative > tables) throw ConfigError("data.informative exceeds data.tables");
  if (query_tables > tables) throw ConfigError("data.query_tables exceeds data.tables");
  if (items_per_query == 0) throw ConfigError("data.items_per_query must be positive");
  if (!(base_rate > 0.0 && base_rate < 1.0)) throw ConfigError("data.base_rate must be in (0,1)");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) {
    throw ConfigError("data.label_noise must be in [0, 0.5)");
  }
  if (!(drift >= 0.0)) throw ConfigError("data.drift must be >= 0");
  if (interaction != 0.0 && interaction_rank == 0) {
    throw ConfigError("data.interaction_rank must be positive");
  }
}

SyntheticGenerator::SyntheticGenerator(SynthConfig config)
    : config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
  std::normal_distribution<double> weight(0.0, config_.weight_scale);
  const std::size_t rank = config_.interaction_rank;
  std::normal_distribution<double> factor(0.0, rank ? std::pow(double(rank), -0.25) : 0.0);
  for (std::size_t t = 0; t < config_.informative; ++t) {
    const std::size_t v = config_.vocab_of(t);
    std::vector<double> w(v), alt(v), f(v * rank);
    for (auto& x : w) x = weight(rng_);
    for (auto& x : alt) x = weight(rng_);
    for (auto& x : f) x = factor(rng_);
    weights_.push_back(std::move(w));
    alt_weights_.push_back(std::move(alt));
    factors_.push_back(std::move(f));
  }
  query_ids_.assign(config_.tables, 0);
  calibrate_bias();
}

double SyntheticGenerator::true_logit(const std::vector<std::int64_t>& ids,
                                      std::size_t index) const {
  double z = bias_;
  const bool drifting = config_.drift > 0.0;
  const double phase = config_.drift * static_cast<double>(index);
  const double c = std::cos(phase);
  const double s = std::sin(phase);
  for (std::size_t t = 0; t < config_.informative; ++t) {
    const auto id = static_cast<std::size_t>(ids[t]);
    z += drifting ? c * weights_[t][id] + s * alt_weights_[t][id] : weights_[t][id];
  }
  const std::size_t rank = config_.interaction_rank;
  if (config_.interaction != 0.0 && config_.informative >= 2) {
    const double pairs = 0.5 * double(config_.informative) * double(config_.informative - 1);
    const double scale = config_.interaction / std::sqrt(pairs);
    for (std::size_t a = 0; a < config_.informative; ++a) {
      const double* fa = factors_[a].data() + static_cast<std::size_t>(ids[a]) * rank;
      for (std::size_t b = a + 1; b < config_.informative; ++b) {
        const double* fb = factors_[b].data() + static_cast<std::size_t>(ids[b]) * rank;
        double d = 0.0;
        for (std::size_t r = 0; r < rank; ++r) d += fa[r] * fb[r];
        z += scale * d;
      }
    }
  }
  return z;
}

void SyntheticGenerator::calibrate_bias() {
  // Sample id assignments from an independent stream and bisect the bias so
  // the mean engagement probability at stream start matches base_rate.
  std::mt19937_64 rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> logits(kCalibrationSamples);
  std::vector<std::int64_t> ids(config_.tables);
  bias_ = 0.0;
  for (auto& z : logits) {
    for (std::size_t t = 0; t < config_.informative; ++t) {
      std::uniform_int_distribution<std::int64_t> pick(0, std::int64_t(config_.vocab_of(t)) - 1);
      ids[t] = pick(rng);
    }
    z = true_logit(ids, 0);
  }
  double lo = -40.0;
  double hi = 40.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double z : logits) mean += sigmoid(z + mid);
    mean /= static_cast<double>(logits.size());
    (mean < config_.base_rate ? lo : hi) = mid;
  }
  bias_ = 0.5 * (lo + hi);
}

void SyntheticGenerator::set_true_logit(std::size_t table, std::int64_t id, double logit) {
  if (table >= config_.informative) throw ConfigError("table is not informative");
  weights_.at(table).at(static_cast<std::size_t>(id)) = logit;
  alt_weights_.at(table).at(static_cast<std::size_t>(id)) = logit;
}

SparseExample SyntheticGenerator::next() {
  const std::size_t item = index_ % config_.items_per_query;
  const std::int64_t qid = static_cast<std::int64_t>(index_ / config_.items_per_query);
  SparseExample ex;
  ex.query_id = qid;
  ex.features.reserve(config_.tables);
  for (std::size_t t = 0; t < config_.tables; ++t) {
    if (t >= config_.query_tables || item == 0) {
      std::uniform_int_distribution<std::int64_t> pick(0, std::int64_t(config_.vocab_of(t)) - 1);
      query_ids_[t] = pick(rng_);
    }
    ex.features.push_back({static_cast<std::uint32_t>(t), query_ids_[t], 1.0});
  }
  double p = sigmoid(true_logit(query_ids_, index_));
  p = p * (1.0 - config_.label_noise) + (1.0 - p) * config_.label_noise;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ex.label = u(rng_) < p ? 1 : 0;
  last_p_ = p;
  ++index_;
  return ex;
}

std::vector<SparseExample> generate(const SynthConfig& config) {
  SyntheticGenerator gen(config);
  std::vector<SparseExample> out;
  out.reserve(config.examples());
  for (std::size_t i = 0; i < config.examples(); ++i) out.push_back(gen.next());
  return out;
}

LabeledStream generate_with_oracle(const SynthConfig& config) {
  SyntheticGenerator gen(config);
  LabeledStream out;
  out.examples.reserve(config.examples());
  out.probabilities.reserve(config.examples());
  for (std::size_t i = 0; i < config.examples(); ++i) {
    out.examples.push_back(gen.next());
    out.probabilities.push_back(gen.last_probability());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format

std::string format_example(const SparseExample& example) {
  std::string line = std::to_string(example.query_id);
  line += '\t';
  line += std::to_string(example.label);
  line += '\t';
  for (std::size_t i = 0; i < example.features.size(); ++i) {
    const auto& f = example.features[i];
    if (i) line += ',';
    line += std::to_string(f.table);
    line += ':';
    line += std::to_string(f.id);
    line += ':';
    line += text::format_double(f.value);
  }
  return line;
}

void write_examples(std::ostream& out, const std::vector<SparseExample>& examples) {
  for (const auto& ex : examples) out << format_example(ex) << '\n';
}

void write_examples(const std::filesystem::path& path, const std::vector<SparseExample>& examples,
                    const std::string& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  if (!header.empty()) {
    for (auto line : text::split(header, '\n')) {
      if (!line.empty()) out << "# " << line << '\n';
    }
  }
  write_examples(out, examples);
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

SparseExample parse_line(std::string_view line, std::size_t line_no) {
  SparseExample ex;
  const auto fields = text::split(line, '\t');
  if (fields.size() != 3) {
    // Point at the first missing field, or at the start of the extra one.
    const std::size_t column =
        fields.size() < 3 ? line.size() + 1
                          : static_cast<std::size_t>(fields[3].data() - line.data()) + 1;
    throw ParseError(line_no, column, "expected 3 tab-separated fields, found " +
                                     std::to_string(fields.size()));
  }
  auto column_of = [&](std::string_view part) {
    return static_cast<std::size_t>(part.data() - line.data()) + 1;
  };
  auto qid = text::parse_int(fields[0]);
  if (!qid) throw ParseError(line_no, column_of(fields[0]), "bad query id");
  ex.query_id = *qid;
  auto label = text::parse_int(fields[1]);
  if (!label || (*label != 0 && *label != 1)) {
    throw ParseError(line_no, column_of(fields[1]), "label must be 0 or 1");
  }
  ex.label = static_cast<int>(*label);
  if (!fields[2].empty()) {
    for (auto item : text::split(fields[2], ',')) {
      const auto parts = text::split(item, ':');
      if (parts.size() != 3) {
        throw ParseError(line_no, column_of(item), "feature must be table:id:value");
      }
      auto table = text::parse_int(parts[0]);
      if (!table || *table < 0) throw ParseError(line_no, column_of(parts[0]), "bad table index");
      auto id = text::parse_int(parts[1]);
      if (!id) throw ParseError(line_no, column_of(parts[1]), "bad feature id");
      auto value = text::parse_double(parts[2]);
      if (!value) throw ParseError(line_no, column_of(parts[2]), "bad feature value");
      ex.features.push_back({static_cast<std::uint32_t>(*table), *id, *value});
    }
  }
  return ex;
}

}  // namespace

std::vector<SparseExample> read_examples(std::istream& in) {
  std::vector<SparseExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.push_back(parse_line(line, line_no));
  }
  return out;
}

std::vector<SparseExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_examples(in);
}

std::vector<std::size_t> shuffle_window_order(std::size_t n, std::size_t window_size,
                                              std::uint64_t seed) {
  if (window_size == 0) throw ConfigError("shuffle window must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(n);
  if (window_size == 1) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> buffer;
  buffer.reserve(std::min(window_size, n));
  for (std::size_t i = 0; i < n; ++i) {
    if (buffer.size() < window_size) {
      buffer.push_back(i);
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
    const std::size_t j = pick(rng);
    out.push_back(buffer[j]);
    buffer[j] = i;
  }
  while (!buffer.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
    const std::size_t j = pick(rng);
    out.push_back(buffer[j]);
    buffer[j] = buffer.back();
    buffer.pop_back();
  }
  return out;
}

}  // namespace smelu
