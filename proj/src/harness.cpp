#include "smelu/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include "smelu/error.hpp"
#include "smelu/text.hpp"

namespace smelu {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t policy_slot(SeedPolicy policy, std::size_t member) {
  return policy == SeedPolicy::Shared ? 0 : member + 1;
}

std::size_t dense_parameter_count(const ModelConfig& c) {
  std::size_t n = 0;
  std::size_t in = c.input_dim();
  for (std::size_t l = 0; l < c.layer_count(); ++l) {
    const std::size_t out = l < c.hidden.size() ? c.hidden[l] : 1;
    n += in * out + out;
    in = out;
  }
  return n;
}

std::size_t parameter_count(const ModelConfig& c) {
  std::size_t n = dense_parameter_count(c);
  for (const auto& t : c.tables) n += (t.vocab + 1) * t.dim;
  return n;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
// rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < jobs; ++j) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

Dataset load_dataset(const ExperimentConfig& config, std::size_t rep) {
  Dataset d;
  if (!config.data_path.empty()) {
    d.examples = read_examples(std::filesystem::path(config.data_path));
    std::vector<std::size_t> vocab;
    for (const auto& ex : d.examples) {
      for (const auto& f : ex.features) {
        if (f.table >= vocab.size()) vocab.resize(f.table + 1, 0);
        if (f.id >= 0) vocab[f.table] = std::max(vocab[f.table], static_cast<std::size_t>(f.id) + 1);
      }
    }
    for (auto v : vocab) d.tables.push_back({std::max<std::size_t>(v, 1), config.embedding_dim});
  } else {
    SynthConfig synth = config.data;
    synth.seed = derive_seed(config.seed, config.data.seed, rep);
    d.examples = generate(synth);
    for (std::size_t t = 0; t < synth.tables; ++t) {
      d.tables.push_back({synth.vocab_of(t), config.embedding_dim});
    }
  }
  if (d.examples.empty()) throw ConfigError("dataset is empty");
  const auto n = d.examples.size();
  const auto holdout = static_cast<std::size_t>(
      std::llround(config.holdout_fraction * static_cast<double>(n)));
  if (holdout >= n) throw ConfigError("holdout leaves no training examples");
  d.train_size = n - holdout;
  return d;
}

ModelConfig model_config_for(const ExperimentConfig& config, const Dataset& data) {
  ModelConfig m = config.model;
  m.tables = data.tables;
  return m;
}

std::vector<std::size_t> training_order(const ExperimentConfig& config, std::size_t n,
                                        std::size_t rep, std::size_t member) {
  const auto& nd = config.nondet;
  const std::uint64_t shuffle_seed = derive_seed(config.seed, nd.shuffle_seed, rep,
                                                 policy_slot(nd.shuffle_policy, member));
  auto order = shuffle_window_order(n, nd.shuffle_window, shuffle_seed);
  if (nd.interleave_rate > 0.0 && n >= 2) {
    std::mt19937_64 rng(derive_seed(config.seed, nd.interleave_seed, rep,
                                    policy_slot(nd.interleave_policy, member)));
    std::bernoulli_distribution swap(nd.interleave_rate);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (swap(rng)) {
        std::swap(order[i], order[i + 1]);
        ++i;
      }
    }
  }
  return order;
}

// ---------------------------------------------------------------------------
// Training

TrainedRun train_run(const ExperimentConfig& config, const Dataset& data,
                     const std::vector<ModelConfig>& members,
                     const std::vector<std::uint64_t>& init_seeds,
                     const std::vector<std::size_t>& order) {
  if (members.empty() || members.size() != init_seeds.size()) {
    throw ConfigError("train_run needs one init seed per member");
  }
  const std::size_t k = members.size();
  std::vector<Model> models;
  std::vector<Optimizer> optimizers;
  models.reserve(k);
  optimizers.reserve(k);
  for (std::size_t m = 0; m < k; ++m) {
    models.push_back(make_model(members[m], init_seeds[m]));
    optimizers.emplace_back(models.back(), config.optim);
  }
  std::vector<ForwardCache> caches(k);
  std::vector<Gradients> grads(k);

  TrainedRun run;
  run.progressive_predictions.assign(data.train_size, kNaN);
  ProgressiveAccumulator acc(config.ties);
  acc.reserve(order.size());
  const double inv_k = 1.0 / static_cast<double>(k);

  for (std::size_t step = 0; step < order.size(); ++step) {
    const std::size_t idx = order[step];
    const SparseExample& ex = data.examples[idx];
    double mean = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      forward(models[m], ex, caches[m]);
      mean += caches[m].prediction;
    }
    mean *= inv_k;
    if (!std::isfinite(mean)) throw DivergenceError(step);
    acc.update(mean, ex.label, ex.query_id);
    run.progressive_predictions[idx] = mean;
    for (std::size_t m = 0; m < k; ++m) {
      backward(models[m], caches[m], ex.label, grads[m]);
      if (!std::isfinite(grads[m].loss)) throw DivergenceError(step);
      optimizers[m].step(models[m], grads[m]);
    }
  }
  run.metrics.progressive = acc.finalize();

  const std::size_t n = data.examples.size();
  run.holdout_predictions.reserve(n - data.train_size);
  double loss_sum = 0.0;
  for (std::size_t i = data.train_size; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      forward(models[m], data.examples[i], caches[m]);
      mean += caches[m].prediction;
    }
    mean *= inv_k;
    if (!std::isfinite(mean)) throw DivergenceError(order.size());
    run.holdout_predictions.push_back(mean);
    loss_sum += log_loss(mean, data.examples[i].label);
  }
  run.metrics.holdout_log_loss =
      n > data.train_size ? loss_sum / static_cast<double>(n - data.train_size) : kNaN;
  return run;
}

namespace {

std::vector<std::size_t> train_indices_order(const ExperimentConfig& config, const Dataset& data,
                                             std::size_t rep, std::size_t member) {
  return training_order(config, data.train_size, rep, member);
}

double pair_pd(const ExperimentConfig& config, const TrainedRun& a, const TrainedRun& b) {
  if (config.pd_mode == PdMode::Holdout) {
    return relative_pd(a.holdout_predictions, b.holdout_predictions);
  }
  return relative_pd(a.progressive_predictions, b.progressive_predictions);
}

}  // namespace

PairResult train_pair(const ExperimentConfig& config, const Dataset& data, std::size_t rep) {
  const ModelConfig mc = model_config_for(config, data);
  TrainedRun runs[2];
  for (std::size_t m = 0; m < 2; ++m) {
    const std::uint64_t init = derive_seed(config.seed, config.nondet.init_seed, rep,
                                           policy_slot(config.nondet.init_policy, m));
    runs[m] = train_run(config, data, {mc}, {init}, train_indices_order(config, data, rep, m));
  }
  PairResult out;
  out.first = runs[0].metrics;
  out.second = runs[1].metrics;
  out.pd = pair_pd(config, runs[0], runs[1]);
  return out;
}

PairResult train_pair(const ExperimentConfig& config, std::size_t rep) {
  config.validate();
  return train_pair(config, load_dataset(config, rep), rep);
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<SweepEntry> sweep_entries(const ExperimentConfig& config) {
  std::vector<SweepEntry> out;
  auto params_of = [](const ActivationSpec& a) {
    std::string p = format_activation_params(a);
    std::replace(p.begin(), p.end(), ',', ';');
    return p;
  };
  SweepEntry relu;
  relu.activation = ActivationSpec::relu();
  relu.name = "relu";
  out.push_back(relu);
  for (auto kind : config.sweep.activations) {
    if (kind == ActivationKind::ReLU) continue;
    for (double g : config.sweep.grid) {
      SweepEntry e;
      switch (kind) {
        case ActivationKind::SmeLU: e.activation = ActivationSpec::smelu(g); break;
        case ActivationKind::GSmeLU:
          e.activation = ActivationSpec::generalized({g, g, 0.0, 1.0, 0.0});
          break;
        case ActivationKind::Softplus: e.activation = ActivationSpec::softplus(1.0 / g); break;
        case ActivationKind::Swish: e.activation = ActivationSpec::swish(1.0 / g); break;
        case ActivationKind::GELU: e.activation = ActivationSpec::gelu(1.0 / g); break;
        default: throw ConfigError("activation cannot be swept: " + std::string(to_string(kind)));
      }
      e.name = std::string(to_string(kind));
      e.params = params_of(e.activation);
      out.push_back(std::move(e));
    }
  }
  if (!config.sweep.layer_scale.empty()) {
    for (double g : config.sweep.grid) {
      SweepEntry e;
      e.activation = ActivationSpec::smelu(g);
      for (double s : config.sweep.layer_scale) e.per_layer.push_back(ActivationSpec::smelu(g * s));
      e.name = "smelu";
      e.params = params_of(e.activation) + ";layer_scale=";
      for (std::size_t i = 0; i < config.sweep.layer_scale.size(); ++i) {
        if (i) e.params += '/';
        e.params += text::format_double(config.sweep.layer_scale[i]);
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

namespace {

std::vector<std::pair<std::string, std::string>> base_header(const ExperimentConfig& config,
                                                             std::string_view command) {
  std::vector<std::pair<std::string, std::string>> h;
  h.emplace_back("command", std::string(command));
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  h.emplace_back("config_hash", hash);
  h.emplace_back("master_seed", std::to_string(config.seed));
  h.emplace_back("data_seed", std::to_string(config.data.seed));
  h.emplace_back("init_seed", std::to_string(config.nondet.init_seed) + " (" +
                                  (config.nondet.init_policy == SeedPolicy::Shared ? "shared"
                                                                                   : "distinct") +
                                  ")");
  h.emplace_back("shuffle_seed",
                 std::to_string(config.nondet.shuffle_seed) + " (" +
                     (config.nondet.shuffle_policy == SeedPolicy::Shared ? "shared" : "distinct") +
                     ", window " + std::to_string(config.nondet.shuffle_window) + ")");
  h.emplace_back("interleave_seed",
                 std::to_string(config.nondet.interleave_seed) + " (rate " +
                     text::format_double(config.nondet.interleave_rate) + ")");
  h.emplace_back("repetitions", std::to_string(config.repetitions));
  h.emplace_back("pd", config.pd_mode == PdMode::Holdout ? "holdout slice" : "progressive");
  h.emplace_back("data", config.data_path.empty()
                             ? "synthetic, " + std::to_string(config.data.examples()) + " examples"
                             : config.data_path);
  return h;
}

}  // namespace

Report beta_sweep(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  const auto entries = sweep_entries(config);
  Report report;
  report.header = base_header(config, "sweep");
  std::string grid;
  for (std::size_t i = 0; i < config.sweep.grid.size(); ++i) {
    if (i) grid += ',';
    grid += text::format_double(config.sweep.grid[i]);
  }
  report.header.emplace_back("grid", grid + " (half-width; reciprocal beta for softplus/swish/gelu)");
  report.header.emplace_back("note", "directional comparison on synthetic data at desk scale");

  std::mutex progress_mutex;
  std::vector<SweepRow> rows(entries.size() * config.repetitions);
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const Dataset data = load_dataset(config, rep);
    parallel_for(entries.size(), config.jobs, [&](std::size_t e) {
      const SweepEntry& entry = entries[e];
      ExperimentConfig cell = config;
      cell.model.activation = entry.activation;
      cell.model.layer_activations = entry.per_layer;
      SweepRow row;
      row.activation = entry.name;
      row.params = entry.params;
      row.rep = rep;
      try {
        const PairResult r = train_pair(cell, data, rep);
        row.log_loss = 0.5 * (r.first.progressive.log_loss + r.second.progressive.log_loss);
        row.auc = 0.5 * (r.first.progressive.auc + r.second.progressive.auc);
        row.pqauc = 0.5 * (r.first.progressive.pqauc + r.second.progressive.pqauc);
        row.pd = r.pd;
      } catch (const DivergenceError& err) {
        row.log_loss = row.auc = row.pqauc = row.pd = kNaN;
        row.error = err.what();
      }
      rows[rep * entries.size() + e] = row;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress("rep " + std::to_string(rep) + " " + entry.name +
                 (entry.params.empty() ? "" : " " + entry.params) +
                 (row.error.empty() ? " pd=" + text::format_double(row.pd) : " " + row.error));
      }
    });
  }
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const SweepRow& base = rows[rep * entries.size()];
    for (std::size_t e = 0; e < entries.size(); ++e) {
      SweepRow& row = rows[rep * entries.size() + e];
      row.d_log_loss_pct = 100.0 * (row.log_loss - base.log_loss) / base.log_loss;
      row.d_pqauc_pct = 100.0 * (row.pqauc - base.pqauc) / base.pqauc;
    }
  }
  report.rows = std::move(rows);
  return report;
}

// ---------------------------------------------------------------------------
// Ensembles

ModelConfig ensemble_component(const ModelConfig& wide, std::size_t k, double tolerance) {
  if (k < 2) throw ConfigError("an ensemble needs at least 2 components");
  const double target = static_cast<double>(parameter_count(wide));
  // Embedding widths are divided by k rounding down, so the components'
  // tables never take more than the wide net's; the hidden widths then
  // absorb the rest of the budget. Rounding up starves the dense layers when
  // the tables dominate the parameter count.
  ModelConfig c = wide;
  for (auto& t : c.tables) t.dim = std::max<std::size_t>(1, t.dim / k);
  // Scan a hidden-width multiplier for the closest total budget.
  double best_err = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_hidden = c.hidden;
  for (int step = 1; step <= 4000; ++step) {
    const double s = step / 1000.0;
    ModelConfig probe = c;
    for (std::size_t i = 0; i < probe.hidden.size(); ++i) {
      probe.hidden[i] = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(double(wide.hidden[i]) * s)));
    }
    const double total = double(k) * double(parameter_count(probe));
    const double err = std::abs(total - target) / target;
    if (err < best_err) {
      best_err = err;
      best_hidden = probe.hidden;
    }
  }
  c.hidden = best_hidden;
  if (best_err > tolerance) {
    throw ConfigError("ensemble parameter budget differs from the single net by " +
                      text::format_double(100.0 * best_err) + "% (limit " +
                      text::format_double(100.0 * tolerance) + "%)");
  }
  return c;
}

EnsembleRow ensemble_pair(const ExperimentConfig& config, const Dataset& data, std::size_t rep) {
  EnsembleRow row;
  row.rep = rep;
  const PairResult single = train_pair(config, data, rep);
  row.single_first = single.first;
  row.single_second = single.second;
  row.single_pd = single.pd;

  const ModelConfig wide = model_config_for(config, data);
  const std::size_t k = config.ensemble.components;
  const ModelConfig component = ensemble_component(wide, k, config.ensemble.budget_tolerance);
  TrainedRun runs[2];
  for (std::size_t m = 0; m < 2; ++m) {
    std::vector<std::uint64_t> seeds;
    for (std::size_t c = 0; c < k; ++c) {
      seeds.push_back(derive_seed(config.seed, config.nondet.init_seed, rep,
                                  policy_slot(config.nondet.init_policy, m) * 1000 +
                                      policy_slot(config.ensemble.component_seeds, c)));
    }
    runs[m] = train_run(config, data, std::vector<ModelConfig>(k, component), seeds,
                        train_indices_order(config, data, rep, m));
  }
  row.ensemble_first = runs[0].metrics;
  row.ensemble_second = runs[1].metrics;
  row.ensemble_pd = pair_pd(config, runs[0], runs[1]);
  return row;
}

EnsembleReport ensemble_baseline(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  EnsembleReport report;
  report.header = base_header(config, "ensemble");
  report.header.emplace_back("components", std::to_string(config.ensemble.components));
  report.header.emplace_back("averaging", "probability mean");
  report.rows.resize(config.repetitions);
  {
    // Sizing comes from the first repetition's vocabularies and fails fast.
    const Dataset data = load_dataset(config, 0);
    const ModelConfig wide = model_config_for(config, data);
    report.component = ensemble_component(wide, config.ensemble.components,
                                          config.ensemble.budget_tolerance);
    report.single_parameters = parameter_count(wide);
    report.ensemble_parameters = config.ensemble.components * parameter_count(report.component);
  }
  std::mutex progress_mutex;
  parallel_for(config.repetitions, config.jobs, [&](std::size_t rep) {
    const Dataset data = load_dataset(config, rep);
    report.rows[rep] = ensemble_pair(config, data, rep);
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress("rep " + std::to_string(rep) + " single pd=" +
               text::format_double(report.rows[rep].single_pd) +
               " ensemble pd=" + text::format_double(report.rows[rep].ensemble_pd));
    }
  });
  std::string widths;
  for (auto h : report.component.hidden) widths += (widths.empty() ? "" : ",") + std::to_string(h);
  report.header.emplace_back(
      "component", "embedding_dim=" +
                       std::to_string(report.component.tables.empty()
                                          ? 0
                                          : report.component.tables.front().dim) +
                       " hidden=" + widths);
  report.header.emplace_back("parameters", std::to_string(report.single_parameters) +
                                               " single, " +
                                               std::to_string(report.ensemble_parameters) +
                                               " ensemble");
  return report;
}

}  // namespace smelu
