#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "smelu/data.hpp"
#include "smelu/error.hpp"

using namespace smelu;

namespace {

SynthConfig small_synth() {
  SynthConfig c;
  c.tables = 4;
  c.vocab = {50};
  c.informative = 3;
  c.queries = 200;
  c.items_per_query = 5;
  c.seed = 12;
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic and one id per table") {
  const auto a = generate(small_synth());
  const auto b = generate(small_synth());
  CHECK(a == b);
  REQUIRE(a.size() == 1000);
  for (const auto& e : a) {
    REQUIRE(e.features.size() == 4);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(e.features[t].table == t);
      CHECK(e.features[t].id >= 0);
      CHECK(e.features[t].id < 50);
    }
    CHECK((e.label == 0 || e.label == 1));
  }
  SynthConfig other = small_synth();
  other.seed = 13;
  CHECK(generate(other) != a);
}

TEST_CASE("query tables are shared within a query") {
  const auto s = generate(small_synth());
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i].query_id == s[i - 1].query_id) CHECK(s[i].features[0].id == s[i - 1].features[0].id);
  }
  CHECK(s[4].query_id == 0);
  CHECK(s[5].query_id == 1);
}

TEST_CASE("positive rate matches the ground truth within 3 sigma") {
  SynthConfig c;
  c.tables = 6;
  c.queries = 100000;
  c.items_per_query = 1;
  c.base_rate = 0.2;
  c.seed = 99;
  const auto stream = generate_with_oracle(c);
  double positives = 0.0, expected = 0.0, variance = 0.0;
  for (std::size_t i = 0; i < stream.examples.size(); ++i) {
    positives += stream.examples[i].label;
    const double p = stream.probabilities[i];
    expected += p;
    variance += p * (1.0 - p);
  }
  // Against the generator's own probabilities.
  CHECK(std::abs(positives - expected) <= 3.0 * std::sqrt(variance));
  // Against the configured base rate.
  const double n = static_cast<double>(stream.examples.size());
  const double sigma = std::sqrt(n * 0.2 * 0.8);
  CHECK(std::abs(positives - 0.2 * n) <= 3.0 * sigma);
}

TEST_CASE("infinite logits give deterministic labels") {
  SynthConfig c;
  c.tables = 1;
  c.vocab = {2};
  c.informative = 1;
  c.query_tables = 0;
  c.queries = 2000;
  c.items_per_query = 1;
  c.interaction = 0.0;
  SyntheticGenerator gen(c);
  gen.set_true_logit(0, 0, -std::numeric_limits<double>::infinity());
  gen.set_true_logit(0, 1, std::numeric_limits<double>::infinity());
  int seen[2] = {0, 0};
  for (int i = 0; i < 2000; ++i) {
    const auto e = gen.next();
    const auto id = e.features[0].id;
    ++seen[id];
    CHECK(e.label == id);
  }
  CHECK(seen[0] > 0);
  CHECK(seen[1] > 0);
}

TEST_CASE("drift changes the ground truth over the stream") {
  SynthConfig c = small_synth();
  c.drift = 1e-3;
  SyntheticGenerator gen(c);
  const std::vector<std::int64_t> ids{1, 2, 3, 4};
  CHECK(gen.true_logit(ids, 0) != gen.true_logit(ids, 1000));
  c.drift = 0.0;
  SyntheticGenerator still(c);
  CHECK(still.true_logit(ids, 0) == still.true_logit(ids, 1000));
}

TEST_CASE("synth config validation") {
  SynthConfig c = small_synth();
  c.informative = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_synth();
  c.base_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_synth();
  c.vocab = {10, 10};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("text format") {
  SUBCASE("example line") {
    std::istringstream in("3\t1\t0:17:1.0\n");
    const auto s = read_examples(in);
    REQUIRE(s.size() == 1);
    CHECK(s[0].query_id == 3);
    CHECK(s[0].label == 1);
    REQUIRE(s[0].features.size() == 1);
    CHECK(s[0].features[0] == Feature{0, 17, 1.0});
  }
  SUBCASE("empty input") {
    std::istringstream in("");
    CHECK(read_examples(in).empty());
    std::istringstream comments("# only a header\n");
    CHECK(read_examples(comments).empty());
  }
  SUBCASE("round trip of a generated stream") {
    auto s = generate(small_synth());
    s[3].features[1].value = 0.1 + 0.2;  // not exactly representable in short decimal
    s[7].features[0].value = -1e-300;
    std::stringstream io;
    write_examples(io, s);
    CHECK(read_examples(io) == s);
  }
  SUBCASE("file round trip with header") {
    const auto path = std::filesystem::temp_directory_path() / "smelu_test_data.tsv";
    const auto s = generate(small_synth());
    write_examples(path, s, "master_seed: 12\n");
    CHECK(read_examples(path) == s);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_examples(path), IoError);
  }
  SUBCASE("malformed lines name line and column") {
    auto expect = [](const std::string& text, std::size_t line, std::size_t column) {
      std::istringstream in(text);
      try {
        read_examples(in);
        FAIL("no error for: " << text);
      } catch (const ParseError& e) {
        CHECK(e.line() == line);
        CHECK(e.column() == column);
      }
    };
    expect("1\t0\t0:1:1\nx\t1\t0:1:1\n", 2, 1);
    expect("1\t2\t0:1:1\n", 1, 3);
    expect("1\t0\t0:1:1,0:abc:1\n", 1, 13);
    expect("1\t0\t0:1:1\textra\n", 1, 11);
    expect("1\t0\n", 1, 4);
  }
}

TEST_CASE("windowed shuffle") {
  std::vector<int> items(500);
  for (int i = 0; i < 500; ++i) items[i] = i;
  CHECK(shuffle_window(items, 1, 7) == items);

  const auto a = shuffle_window(items, 32, 7);
  const auto b = shuffle_window(items, 32, 7);
  CHECK(a == b);
  CHECK(a != items);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == items);
  CHECK(shuffle_window(items, 32, 8) != a);

  // An item can only move earlier by less than the window.
  for (std::size_t pos = 0; pos < a.size(); ++pos) CHECK(a[pos] <= static_cast<int>(pos) + 31);

  const auto full = shuffle_window(items, 1000, 3);
  auto full_sorted = full;
  std::sort(full_sorted.begin(), full_sorted.end());
  CHECK(full_sorted == items);
  CHECK(full != items);
}
