// Command-line front end for the experiment harness.
//
//   smelu_cli gen        --config exp.conf --out data.tsv
//   smelu_cli train-pair --config exp.conf --activation smelu:beta=1
//   smelu_cli sweep      --config exp.conf --out sweep.csv
//   smelu_cli landscape  --config exp.conf --out curve.csv
//   smelu_cli ensemble   --config exp.conf --out ensemble.json
//
// Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
// divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "smelu/error.hpp"
#include "smelu/harness.hpp"
#include "smelu/text.hpp"

namespace {

using namespace smelu;

constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Options {
  std::string config;
  std::string activation;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  std::string format;
  std::string preset;
  bool quiet = false;
};

ExperimentConfig load_config(const Options& opt, bool landscape_activation) {
  KeyValues kv;
  if (!opt.config.empty()) kv = KeyValues::load(opt.config);
  if (!opt.preset.empty()) kv.set("landscape.preset", opt.preset);
  for (const auto& s : opt.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv.set(text::trim(std::string_view(s).substr(0, eq)),
           text::trim(std::string_view(s).substr(eq + 1)));
  }
  if (!opt.activation.empty()) {
    kv.set(landscape_activation ? "landscape.activation" : "model.activation", opt.activation);
  }
  if (opt.seed) kv.set("harness.seed", std::to_string(*opt.seed));
  if (!opt.out.empty()) kv.set("harness.out", opt.out);
  return parse_experiment(kv);
}

EmitFormat format_for(const Options& opt, const std::string& path) {
  if (opt.format == "json") return EmitFormat::Json;
  if (opt.format == "csv") return EmitFormat::Csv;
  if (!opt.format.empty()) throw ConfigError("unknown format '" + opt.format + "'");
  return std::filesystem::path(path).extension() == ".json" ? EmitFormat::Json : EmitFormat::Csv;
}

void write_or_print(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

ProgressFn progress_for(const Options& opt) {
  if (opt.quiet) return {};
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

int run_gen(const Options& opt) {
  const ExperimentConfig config = load_config(opt, false);
  if (!config.data_path.empty()) throw ConfigError("gen needs a synthetic data config");
  if (config.out.empty()) throw ConfigError("gen needs --out");
  SynthConfig synth = config.data;
  synth.seed = derive_seed(config.seed, config.data.seed, 0);
  const auto examples = generate(synth);
  std::ostringstream header;
  header << "synthetic examples: " << examples.size() << "\n";
  header << "master_seed: " << config.seed << "\n";
  header << "data_seed: " << config.data.seed << "\n";
  write_examples(std::filesystem::path(config.out), examples, header.str());
  return 0;
}

int run_train_pair(const Options& opt) {
  const ExperimentConfig config = load_config(opt, false);
  std::string csv;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  csv += "# command: train-pair\n# config_hash: " + std::string(hash) +
         "\n# master_seed: " + std::to_string(config.seed) +
         "\n# activation: " + format_activation(config.model.activation) + "\n";
  csv += "rep,pd_pct,logloss_1,logloss_2,auc_1,auc_2,pqauc_1,pqauc_2,holdout_logloss_1,"
         "holdout_logloss_2\n";
  using text::format_double;
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const PairResult r = train_pair(config, rep);
    const auto& a = r.first;
    const auto& b = r.second;
    csv += std::to_string(rep) + ',' + format_double(100.0 * r.pd) + ',' +
           format_double(a.progressive.log_loss) + ',' + format_double(b.progressive.log_loss) +
           ',' + format_double(a.progressive.auc) + ',' + format_double(b.progressive.auc) + ',' +
           format_double(a.progressive.pqauc) + ',' + format_double(b.progressive.pqauc) + ',' +
           format_double(a.holdout_log_loss) + ',' + format_double(b.holdout_log_loss) + '\n';
    if (!opt.quiet) std::cerr << "rep " << rep << " pd=" << format_double(100.0 * r.pd) << "%\n";
  }
  write_or_print(config.out, csv);
  return 0;
}

int run_sweep(const Options& opt) {
  const ExperimentConfig config = load_config(opt, false);
  const Report report = beta_sweep(config, progress_for(opt));
  const std::string content =
      format_for(opt, config.out) == EmitFormat::Json ? to_json(report) : to_csv(report);
  write_or_print(config.out, content);
  for (const auto& row : report.rows) {
    if (!row.error.empty()) return kExitDivergence;
  }
  return 0;
}

int run_landscape(const Options& opt) {
  const ExperimentConfig config = load_config(opt, true);
  const LandscapeSample sample = landscape(config.landscape);
  std::vector<std::pair<std::string, std::string>> header{{"command", "landscape"}};
  if (sample.dims == 1) {
    header.emplace_back("strict_minima", std::to_string(count_strict_minima(sample.loss)));
  }
  write_or_print(config.out, to_csv(sample, header));
  return 0;
}

int run_ensemble(const Options& opt) {
  const ExperimentConfig config = load_config(opt, false);
  const EnsembleReport report = ensemble_baseline(config, progress_for(opt));
  const std::string content =
      format_for(opt, config.out) == EmitFormat::Json ? to_json(report) : to_csv(report);
  write_or_print(config.out, content);
  return 0;
}

int run_show_config(const Options& opt) {
  const ExperimentConfig config = load_config(opt, false);
  write_or_print(config.out, to_key_values(config).serialize());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smooth-activation reproducibility harness"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "flat key = value config file");
    sub->add_option("--activation", opt.activation, "activation override, e.g. smelu:beta=1");
    sub->add_option("--seed", opt.seed, "master seed override");
    sub->add_option("--out", opt.out, "output path (stdout when omitted)");
    sub->add_option("--set", opt.sets, "extra key=value override (repeatable)");
    sub->add_flag("--quiet", opt.quiet, "no progress on stderr");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"gen", "write a synthetic example stream", run_gen},
      {"train-pair", "train duplicate pairs and report PD", run_train_pair},
      {"sweep", "activation / beta sweep against the ReLU baseline", run_sweep},
      {"landscape", "loss over inputs of a random frozen network", run_landscape},
      {"ensemble", "self-ensemble pair versus single-net pair", run_ensemble},
      {"show-config", "print the fully resolved configuration", run_show_config},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    if (std::string_view(c.name) == "sweep" || std::string_view(c.name) == "ensemble") {
      sub->add_option("--format", opt.format, "csv or json (default from --out extension)");
    }
    if (std::string_view(c.name) == "landscape") {
      sub->add_option("--preset", opt.preset, "weight, layer or regression");
    }
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    for (const auto& [sub, command] : subs) {
      if (sub->parsed()) return command->run(opt);
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
