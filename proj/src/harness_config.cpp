#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <string>

#include "smelu/error.hpp"
#include "smelu/harness.hpp"
#include "smelu/text.hpp"

namespace smelu {
namespace {

using text::format_double;

std::string key_error(std::string_view key, std::string_view value, std::string_view expected) {
  return "bad value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
         std::string(expected) + ")";
}

double to_double(std::string_view key, std::string_view value) {
  auto v = text::parse_double(text::trim(value));
  if (!v || !std::isfinite(*v)) throw ConfigError(key_error(key, value, "a finite number"));
  return *v;
}

std::uint64_t to_u64(std::string_view key, std::string_view value) {
  const auto t = text::trim(value);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key_error(key, value, "a non-negative integer"));
  }
  return out;
}

std::size_t to_size(std::string_view key, std::string_view value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

bool to_bool(std::string_view key, std::string_view value) {
  const auto t = text::trim(value);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key_error(key, value, "true or false"));
}

std::vector<std::size_t> to_size_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  if (text::trim(value).empty()) return out;
  for (auto part : text::split(value, ',')) out.push_back(to_size(key, part));
  return out;
}

std::vector<double> to_double_list(std::string_view key, std::string_view value) {
  std::vector<double> out;
  if (text::trim(value).empty()) return out;
  for (auto part : text::split(value, ',')) out.push_back(to_double(key, part));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, char sep, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += fmt(items[i]);
  }
  return out;
}

std::string size_list(const std::vector<std::size_t>& v) {
  return join(v, ',', [](std::size_t x) { return std::to_string(x); });
}

std::string double_list(const std::vector<double>& v) {
  return join(v, ',', [](double x) { return format_double(x); });
}

SeedPolicy to_policy(std::string_view key, std::string_view value) {
  const auto t = text::trim(value);
  if (t == "shared") return SeedPolicy::Shared;
  if (t == "distinct") return SeedPolicy::Distinct;
  throw ConfigError(key_error(key, value, "shared or distinct"));
}

std::string policy_name(SeedPolicy p) { return p == SeedPolicy::Shared ? "shared" : "distinct"; }

ActivationSpec to_activation(std::string_view key, std::string_view value) {
  try {
    return parse_activation(text::trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

ActivationKind to_kind(std::string_view key, std::string_view value) {
  const auto t = text::trim(value);
  for (auto k : {ActivationKind::ReLU, ActivationKind::SmeLU, ActivationKind::GSmeLU,
                 ActivationKind::Rescu, ActivationKind::Softplus, ActivationKind::Swish,
                 ActivationKind::GELU, ActivationKind::Identity}) {
    if (to_string(k) == t) return k;
  }
  throw ConfigError(key_error(key, value, "an activation name"));
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
};

template <typename M>
Field double_field(const char* key, M member) {
  return {key, [member](const ExperimentConfig& c) { return format_double(member(c)); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_double(k, v);
          }};
}

template <typename M>
Field size_field(const char* key, M member) {
  return {key, [member](const ExperimentConfig& c) { return std::to_string(member(c)); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(to_u64(k, v));
          }};
}

template <typename M>
Field bool_field(const char* key, M member) {
  return {key, [member](const ExperimentConfig& c) { return member(c) ? "true" : "false"; },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_bool(k, v);
          }};
}

template <typename M>
Field policy_field(const char* key, M member) {
  return {key, [member](const ExperimentConfig& c) { return policy_name(member(c)); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_policy(k, v);
          }};
}

template <typename M>
Field size_list_field(const char* key, M member) {
  return {key, [member](const ExperimentConfig& c) { return size_list(member(c)); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_size_list(k, v);
          }};
}

template <typename M>
Field double_list_field(const char* key, M member) {
  return {key, [member](const ExperimentConfig& c) { return double_list(member(c)); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_double_list(k, v);
          }};
}

template <typename M>
Field norm_field(const char* key, M member) {
  return {key, [member](const ExperimentConfig& c) { return std::string(to_string(member(c))); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            try {
              member(c) = parse_norm(text::trim(v));
            } catch (const ConfigError&) {
              throw ConfigError(key_error(k, v, "none, weight or layer"));
            }
          }};
}

template <typename M>
Field activation_field(const char* key, M member) {
  return {key, [member](const ExperimentConfig& c) { return format_activation(member(c)); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_activation(k, v);
          }};
}

#define MEMBER(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // model
    f.push_back(size_list_field("model.hidden", MEMBER(model.hidden)));
    f.push_back(activation_field("model.activation", MEMBER(model.activation)));
    f.push_back({"model.layer_activations",
                 [](const ExperimentConfig& c) {
                   return join(c.model.layer_activations, '|',
                               [](const ActivationSpec& a) { return format_activation(a); });
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   c.model.layer_activations.clear();
                   if (text::trim(v).empty()) return;
                   for (auto part : text::split(v, '|')) {
                     c.model.layer_activations.push_back(to_activation(k, part));
                   }
                 }});
    f.push_back(norm_field("model.norm", MEMBER(model.norm)));
    f.push_back(double_field("model.norm_value", MEMBER(model.norm_value)));
    f.push_back(double_field("model.clip", MEMBER(model.clip)));
    f.push_back(bool_field("model.identity_input_activation",
                           MEMBER(model.identity_input_activation)));
    f.push_back(bool_field("model.layer_norm_input", MEMBER(model.layer_norm_input)));
    f.push_back(size_field("model.embedding_dim", MEMBER(embedding_dim)));
    f.push_back(double_field("model.embedding_init_std", MEMBER(model.embedding_init_std)));
    // data
    f.push_back({"data.path", [](const ExperimentConfig& c) { return c.data_path; },
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   c.data_path = std::string(text::trim(v));
                 }});
    f.push_back(size_field("data.tables", MEMBER(data.tables)));
    f.push_back(size_list_field("data.vocab", MEMBER(data.vocab)));
    f.push_back(size_field("data.informative", MEMBER(data.informative)));
    f.push_back(size_field("data.query_tables", MEMBER(data.query_tables)));
    f.push_back(size_field("data.queries", MEMBER(data.queries)));
    f.push_back(size_field("data.items_per_query", MEMBER(data.items_per_query)));
    f.push_back(double_field("data.base_rate", MEMBER(data.base_rate)));
    f.push_back(double_field("data.drift", MEMBER(data.drift)));
    f.push_back(double_field("data.weight_scale", MEMBER(data.weight_scale)));
    f.push_back(double_field("data.interaction", MEMBER(data.interaction)));
    f.push_back(size_field("data.interaction_rank", MEMBER(data.interaction_rank)));
    f.push_back(double_field("data.label_noise", MEMBER(data.label_noise)));
    f.push_back(size_field("data.seed", MEMBER(data.seed)));
    f.push_back(double_field("data.holdout_fraction", MEMBER(holdout_fraction)));
    // optim
    f.push_back({"optim.kind",
                 [](const ExperimentConfig& c) { return std::string(to_string(c.optim.kind)); },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   try {
                     c.optim.kind = parse_optimizer(text::trim(v));
                   } catch (const ConfigError&) {
                     throw ConfigError(key_error(k, v, "sgd or adagrad"));
                   }
                 }});
    f.push_back(double_field("optim.lr_embedding", MEMBER(optim.lr_embedding)));
    f.push_back(double_field("optim.lr_dense", MEMBER(optim.lr_dense)));
    f.push_back(double_field("optim.lr_activation", MEMBER(optim.lr_activation)));
    f.push_back(double_field("optim.epsilon", MEMBER(optim.epsilon)));
    f.push_back(double_field("optim.g_init", MEMBER(optim.g_init)));
    // nondet
    f.push_back(policy_field("nondet.init_policy", MEMBER(nondet.init_policy)));
    f.push_back(size_field("nondet.init_seed", MEMBER(nondet.init_seed)));
    f.push_back(size_field("nondet.shuffle_window", MEMBER(nondet.shuffle_window)));
    f.push_back(policy_field("nondet.shuffle_policy", MEMBER(nondet.shuffle_policy)));
    f.push_back(size_field("nondet.shuffle_seed", MEMBER(nondet.shuffle_seed)));
    f.push_back(double_field("nondet.interleave_rate", MEMBER(nondet.interleave_rate)));
    f.push_back(policy_field("nondet.interleave_policy", MEMBER(nondet.interleave_policy)));
    f.push_back(size_field("nondet.interleave_seed", MEMBER(nondet.interleave_seed)));
    // harness
    f.push_back(size_field("harness.seed", MEMBER(seed)));
    f.push_back(size_field("harness.repetitions", MEMBER(repetitions)));
    f.push_back(size_field("harness.jobs", MEMBER(jobs)));
    f.push_back({"harness.pd_mode",
                 [](const ExperimentConfig& c) {
                   return std::string(c.pd_mode == PdMode::Holdout ? "holdout" : "progressive");
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   const auto t = text::trim(v);
                   if (t == "holdout") c.pd_mode = PdMode::Holdout;
                   else if (t == "progressive") c.pd_mode = PdMode::Progressive;
                   else throw ConfigError(key_error(k, v, "holdout or progressive"));
                 }});
    f.push_back({"harness.ties",
                 [](const ExperimentConfig& c) {
                   return std::string(c.ties == TieMode::Strict ? "strict" : "half");
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   const auto t = text::trim(v);
                   if (t == "strict") c.ties = TieMode::Strict;
                   else if (t == "half") c.ties = TieMode::Half;
                   else throw ConfigError(key_error(k, v, "strict or half"));
                 }});
    f.push_back({"harness.out", [](const ExperimentConfig& c) { return c.out; },
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   c.out = std::string(text::trim(v));
                 }});
    // sweep
    f.push_back({"sweep.activations",
                 [](const ExperimentConfig& c) {
                   return join(c.sweep.activations, ',',
                               [](ActivationKind k) { return std::string(to_string(k)); });
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   c.sweep.activations.clear();
                   if (text::trim(v).empty()) return;
                   for (auto part : text::split(v, ',')) {
                     c.sweep.activations.push_back(to_kind(k, part));
                   }
                 }});
    f.push_back(double_list_field("sweep.grid", MEMBER(sweep.grid)));
    f.push_back(double_list_field("sweep.layer_scale", MEMBER(sweep.layer_scale)));
    // landscape
    f.push_back(size_list_field("landscape.hidden", MEMBER(landscape.hidden)));
    f.push_back(activation_field("landscape.activation", MEMBER(landscape.activation)));
    f.push_back(norm_field("landscape.norm", MEMBER(landscape.norm)));
    f.push_back(double_field("landscape.norm_value", MEMBER(landscape.norm_value)));
    f.push_back(double_field("landscape.clip", MEMBER(landscape.clip)));
    f.push_back(double_field("landscape.weight_std", MEMBER(landscape.weight_std)));
    f.push_back(double_field("landscape.bias_std", MEMBER(landscape.bias_std)));
    f.push_back({"landscape.loss",
                 [](const ExperimentConfig& c) {
                   return std::string(c.landscape.loss == LandscapeLoss::Logistic ? "logistic"
                                                                                  : "regression");
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   const auto t = text::trim(v);
                   if (t == "logistic") c.landscape.loss = LandscapeLoss::Logistic;
                   else if (t == "regression") c.landscape.loss = LandscapeLoss::Regression;
                   else throw ConfigError(key_error(k, v, "logistic or regression"));
                 }});
    f.push_back(double_field("landscape.p1", MEMBER(landscape.p1)));
    f.push_back(double_field("landscape.target", MEMBER(landscape.target)));
    f.push_back(size_field("landscape.dims", MEMBER(landscape.dims)));
    f.push_back(double_field("landscape.lo", MEMBER(landscape.lo)));
    f.push_back(double_field("landscape.hi", MEMBER(landscape.hi)));
    f.push_back(size_field("landscape.points", MEMBER(landscape.points)));
    f.push_back(size_field("landscape.seed", MEMBER(landscape.seed)));
    f.push_back(size_field("landscape.seeds", MEMBER(landscape.seeds)));
    // ensemble
    f.push_back(size_field("ensemble.components", MEMBER(ensemble.components)));
    f.push_back(policy_field("ensemble.component_seeds", MEMBER(ensemble.component_seeds)));
    f.push_back(double_field("ensemble.budget_tolerance", MEMBER(ensemble.budget_tolerance)));
    return f;
  }();
  return table;
}

#undef MEMBER

}  // namespace

// ---------------------------------------------------------------------------
// Presets

LandscapeConfig LandscapeConfig::weight_norm_preset() {
  LandscapeConfig c;
  c.norm = NormKind::WeightNorm;
  c.weight_std = 5.0;
  c.bias_std = 0.5;
  c.clip = 6.0;
  c.loss = LandscapeLoss::Logistic;
  return c;
}

LandscapeConfig LandscapeConfig::layer_norm_preset() {
  LandscapeConfig c;
  c.norm = NormKind::LayerNorm;
  c.weight_std = 1.0;
  c.bias_std = 1.0;
  c.clip = 6.0;
  c.loss = LandscapeLoss::Logistic;
  return c;
}

LandscapeConfig LandscapeConfig::regression_preset() {
  LandscapeConfig c;
  c.dims = 2;
  c.points = 101;
  c.norm = NormKind::WeightNorm;
  c.weight_std = 1.0;
  c.bias_std = 1.0;
  c.clip = 4.0;
  c.loss = LandscapeLoss::Regression;
  c.target = -2.0;
  return c;
}

void LandscapeConfig::validate() const {
  if (dims != 1 && dims != 2) throw ConfigError("landscape.dims must be 1 or 2");
  if (points < 2) throw ConfigError("landscape.points must be >= 2");
  if (!(lo < hi)) throw ConfigError("landscape.lo must be below landscape.hi");
  if (hidden.empty()) throw ConfigError("landscape.hidden must not be empty");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("landscape.hidden widths must be positive");
    if (norm == NormKind::LayerNorm && h < 2) {
      throw ConfigError("layer norm needs hidden widths of at least 2");
    }
  }
  if (!(weight_std > 0.0) || !(bias_std >= 0.0)) {
    throw ConfigError("landscape weight/bias deviations must be positive");
  }
  if (clip < 0.0) throw ConfigError("landscape.clip must be >= 0");
  if (norm == NormKind::WeightNorm && !(norm_value > 0.0)) {
    throw ConfigError("landscape.norm_value must be positive");
  }
  if (loss == LandscapeLoss::Logistic && !(p1 >= 0.0 && p1 <= 1.0)) {
    throw ConfigError("landscape.p1 must be in [0,1]");
  }
  if (seeds == 0) throw ConfigError("landscape.seeds must be positive");
  activation.validate();
}

ExperimentConfig ExperimentConfig::desk_default() {
  ExperimentConfig c;
  c.model.hidden = {64, 32, 16};
  c.model.activation = ActivationSpec::relu();
  c.model.norm = NormKind::WeightNorm;
  c.model.norm_value = 1.0;
  c.embedding_dim = 8;
  c.data.tables = 6;
  c.data.vocab = {1000};
  c.data.queries = 100000;
  c.data.items_per_query = 10;
  return c;
}

ExperimentConfig ExperimentConfig::paper_shape() {
  ExperimentConfig c = desk_default();
  c.model.hidden = {1024, 512, 256, 128, 64, 16};
  c.data.tables = 5;
  c.data.informative = 5;
  c.embedding_dim = 48;
  return c;
}

void ExperimentConfig::validate() const {
  if (embedding_dim == 0) throw ConfigError("model.embedding_dim must be positive");
  if (data_path.empty()) data.validate();
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("data.holdout_fraction must be in [0,1)");
  }
  if (pd_mode == PdMode::Holdout && !(holdout_fraction > 0.0)) {
    throw ConfigError("holdout PD needs data.holdout_fraction > 0");
  }
  optim.validate();
  if (nondet.shuffle_window == 0) throw ConfigError("nondet.shuffle_window must be >= 1");
  if (!(nondet.interleave_rate >= 0.0 && nondet.interleave_rate <= 1.0)) {
    throw ConfigError("nondet.interleave_rate must be in [0,1]");
  }
  if (repetitions == 0) throw ConfigError("harness.repetitions must be positive");
  if (jobs == 0) throw ConfigError("harness.jobs must be positive");
  if (sweep.grid.empty()) throw ConfigError("sweep.grid must not be empty");
  for (double g : sweep.grid) {
    if (!(g > 0.0)) throw ConfigError("sweep.grid values must be positive");
  }
  for (double s : sweep.layer_scale) {
    if (!(s > 0.0)) throw ConfigError("sweep.layer_scale values must be positive");
  }
  if (!sweep.layer_scale.empty() && sweep.layer_scale.size() != model.layer_count()) {
    throw ConfigError("sweep.layer_scale needs one value per layer (" +
                      std::to_string(model.layer_count()) + ")");
  }
  for (auto k : sweep.activations) {
    if (k == ActivationKind::Rescu || k == ActivationKind::Identity) {
      throw ConfigError("sweep.activations cannot contain " + std::string(to_string(k)));
    }
  }
  if (ensemble.components < 2) throw ConfigError("ensemble.components must be >= 2");
  if (!(ensemble.budget_tolerance > 0.0)) {
    throw ConfigError("ensemble.budget_tolerance must be positive");
  }
  landscape.validate();
  // Model validation needs the tables; check the dense part with a stand-in.
  ModelConfig probe = model;
  probe.tables.assign(data_path.empty() ? data.tables : 1, TableSpec{1, embedding_dim});
  probe.validate();
}

ExperimentConfig parse_experiment(const KeyValues& kv, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  if (auto preset = kv.get("landscape.preset")) {
    const auto t = text::trim(*preset);
    if (t == "weight") c.landscape = LandscapeConfig::weight_norm_preset();
    else if (t == "layer") c.landscape = LandscapeConfig::layer_norm_preset();
    else if (t == "regression") c.landscape = LandscapeConfig::regression_preset();
    else throw ConfigError(key_error("landscape.preset", *preset, "weight, layer or regression"));
  }
  for (const auto& [key, value] : kv.entries()) {
    if (key == "landscape.preset") continue;
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(c, key, value);
  }
  c.validate();
  return c;
}

KeyValues to_key_values(const ExperimentConfig& config) {
  KeyValues kv;
  for (const auto& f : fields()) kv.set(f.key, f.get(config));
  return kv;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  // Keys that cannot change any result stay out of the fingerprint.
  const KeyValues all = to_key_values(config);
  KeyValues kv;
  for (const auto& [key, value] : all.entries()) {
    if (key != "harness.jobs" && key != "harness.out") kv.set(key, value);
  }
  return text::fnv1a(kv.serialize());
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(root);
  h = mix(h ^ a);
  h = mix(h ^ b);
  h = mix(h ^ c);
  return h;
}

}  // namespace smelu
