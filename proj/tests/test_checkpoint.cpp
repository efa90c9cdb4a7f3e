#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "smelu/checkpoint.hpp"
#include "smelu/error.hpp"

using namespace smelu;

namespace {

ModelConfig config_with(const ActivationSpec& act) {
  ModelConfig c;
  c.tables = {{9, 3}, {4, 3}};
  c.hidden = {6, 3};
  c.activation = act;
  c.norm = NormKind::WeightNorm;
  c.norm_value = 0.7;
  c.clip = 2.5;
  return c;
}

void train_a_little(Model& m, Optimizer& opt) {
  for (int i = 0; i < 50; ++i) {
    SparseExample e{i, {{0, i % 11, 1.0}, {1, i % 3, 1.0}}, i % 3 == 0};
    opt.step(m, backward(m, forward(m, e), e.label));
  }
}

bool same_bits(const Model& a, const Model& b) {
  if (a.seed != b.seed || a.tables.size() != b.tables.size()) return false;
  for (std::size_t t = 0; t < a.tables.size(); ++t) {
    if (a.tables[t].weights != b.tables[t].weights) return false;
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& x = a.layers[l];
    const auto& y = b.layers[l];
    if (x.w != y.w || x.b != y.b || x.norm != y.norm || x.clip != y.clip) return false;
    if (format_activation(x.activation) != format_activation(y.activation)) return false;
    const auto& p = x.activation.gsmelu;
    const auto& q = y.activation.gsmelu;
    if (p.alpha != q.alpha || p.beta != q.beta || p.t != q.t || p.g_plus != q.g_plus) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  for (const auto& act : {ActivationSpec::smelu(0.75),
                          ActivationSpec::generalized({1, 1, 0, 1, 0}, true),
                          ActivationSpec::rescu_from(build_rescu({{-1, 0}, {1, 1}}, {-1, 0}))}) {
    for (OptimizerKind kind : {OptimizerKind::AdaGrad, OptimizerKind::Sgd}) {
      CAPTURE(format_activation(act));
      Model m = make_model(config_with(act), 0xfedcba9876543210ULL);
      OptimizerConfig oc;
      oc.kind = kind;
      Optimizer opt(m, oc);
      train_a_little(m, opt);

      std::stringstream io;
      write_checkpoint(io, m, &opt);
      const std::string first = io.str();
      Checkpoint cp = read_checkpoint(io);
      CHECK(same_bits(m, cp.model));
      REQUIRE(cp.optimizer);
      CHECK(cp.optimizer->config().kind == kind);
      for (std::size_t t = 0; t < m.tables.size(); ++t) {
        CHECK(cp.optimizer->tables()[t].accum == opt.tables()[t].accum);
      }
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK(cp.optimizer->layers()[l].w.accum == opt.layers()[l].w.accum);
        CHECK(cp.optimizer->layers()[l].activation.accum == opt.layers()[l].activation.accum);
      }

      std::stringstream again;
      write_checkpoint(again, cp.model, &*cp.optimizer);
      CHECK(again.str() == first);

      // Training continues identically from the restored state.
      train_a_little(m, opt);
      train_a_little(cp.model, *cp.optimizer);
      CHECK(same_bits(m, cp.model));
    }
  }
}

TEST_CASE("checkpoint without optimizer and on disk") {
  const Model m = make_model(config_with(ActivationSpec::relu()), 3);
  const auto path = std::filesystem::temp_directory_path() / "smelu_test_checkpoint.txt";
  save_checkpoint(path, m);
  const Checkpoint cp = load_checkpoint(path);
  CHECK(same_bits(m, cp.model));
  CHECK(!cp.optimizer);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("malformed checkpoints") {
  std::istringstream empty("");
  CHECK_THROWS_AS(read_checkpoint(empty), ParseError);
  std::istringstream wrong("model 2\n");
  CHECK_THROWS_AS(read_checkpoint(wrong), ParseError);

  std::stringstream io;
  write_checkpoint(io, make_model(config_with(ActivationSpec::relu()), 3));
  std::string text = io.str();
  const auto pos = text.find("block table.1 15\n");
  REQUIRE(pos != std::string::npos);
  std::string truncated = text;
  truncated.replace(pos, 17, "block table.1 14\n");
  std::istringstream bad(truncated);
  try {
    read_checkpoint(bad);
    FAIL("accepted a miscounted block");
  } catch (const ParseError& e) {
    CHECK(e.line() > 1);
  }
}
