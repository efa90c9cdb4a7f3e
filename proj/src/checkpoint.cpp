#include "smelu/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "smelu/error.hpp"
#include "smelu/text.hpp"

// Layout, one record per line:
//
//   smelu-checkpoint 1
//   seed <n>
//   config.<field> <value>                 (model configuration)
//   block <name> <count>                   followed by one line of <count> hexfloats
//   optimizer <kind> <lr_emb> <lr_dense> <lr_act> <eps> <g_init>
//   end
//
// Block names: table.<t>, layer.<l>.w, layer.<l>.b, and with an optimizer
// accum.table.<t>, accum.layer.<l>.w, accum.layer.<l>.b, accum.layer.<l>.activation.
// Learned activation parameters are stored per layer as layer.<l>.activation.

namespace smelu {
namespace {

constexpr const char* kMagic = "smelu-checkpoint 1";

void write_block(std::ostream& out, const std::string& name, const std::vector<double>& v) {
  out << "block " << name << ' ' << v.size() << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << ' ';
    out << text::format_hex(v[i]);
  }
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Next line split on single spaces; false at end of input.
  bool next(std::vector<std::string_view>& fields) {
    if (!std::getline(in_, line_)) return false;
    ++line_no_;
    fields = text::split(line_, ' ');
    return true;
  }

  std::vector<std::string_view> expect_line() {
    std::vector<std::string_view> f;
    if (!next(f)) fail(1, "unexpected end of checkpoint");
    return f;
  }

  [[noreturn]] void fail(std::size_t column, const std::string& what) const {
    throw ParseError(line_no_, column, what);
  }

  std::size_t line_no() const { return line_no_; }

  std::size_t column_of(std::string_view part) const {
    return static_cast<std::size_t>(part.data() - line_.data()) + 1;
  }

  double to_double(std::string_view s) const {
    const auto v = text::parse_double(s);
    if (!v) fail(column_of(s), "bad number '" + std::string(s) + "'");
    return *v;
  }

  std::size_t to_size(std::string_view s) const {
    const auto v = text::parse_int(s);
    if (!v || *v < 0) fail(column_of(s), "bad count '" + std::string(s) + "'");
    return static_cast<std::size_t>(*v);
  }

  std::vector<double> values(std::size_t count) {
    const auto f = expect_line();
    if (count == 0) {
      if (!(f.size() == 1 && f[0].empty())) fail(1, "expected an empty value line");
      return {};
    }
    if (f.size() != count) {
      fail(1, "expected " + std::to_string(count) + " values, found " + std::to_string(f.size()));
    }
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = to_double(f[i]);
    return v;
  }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t line_no_ = 0;
};

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s.empty() ? "-" : s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Model& model, const Optimizer* optimizer) {
  const ModelConfig& c = model.config;
  out << kMagic << '\n';
  out << "seed " << model.seed << '\n';
  for (const auto& t : c.tables) out << "config.table " << t.vocab << ' ' << t.dim << '\n';
  out << "config.dense_inputs " << c.dense_inputs << '\n';
  out << "config.hidden " << join_sizes(c.hidden) << '\n';
  out << "config.activation " << format_activation(c.activation) << '\n';
  for (const auto& a : c.layer_activations) out << "config.layer_activation " << format_activation(a) << '\n';
  out << "config.norm " << to_string(c.norm) << '\n';
  out << "config.norm_value " << text::format_hex(c.norm_value) << '\n';
  out << "config.clip " << text::format_hex(c.clip) << '\n';
  out << "config.identity_input_activation " << c.identity_input_activation << '\n';
  out << "config.layer_norm_input " << c.layer_norm_input << '\n';
  out << "config.embedding_init_std " << text::format_hex(c.embedding_init_std) << '\n';

  for (std::size_t t = 0; t < model.tables.size(); ++t) {
    write_block(out, "table." + std::to_string(t), model.tables[t].weights);
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    const std::string p = "layer." + std::to_string(l);
    write_block(out, p + ".w", layer.w);
    write_block(out, p + ".b", layer.b);
    if (layer.activation.trainable) {
      const GSmeLUParams& g = layer.activation.gsmelu;
      write_block(out, p + ".activation", {g.alpha, g.beta, g.g_minus, g.g_plus, g.t});
    }
  }

  if (optimizer) {
    const OptimizerConfig& oc = optimizer->config();
    out << "optimizer " << to_string(oc.kind) << ' ' << text::format_hex(oc.lr_embedding) << ' '
        << text::format_hex(oc.lr_dense) << ' ' << text::format_hex(oc.lr_activation) << ' '
        << text::format_hex(oc.epsilon) << ' ' << text::format_hex(oc.g_init) << '\n';
    for (std::size_t t = 0; t < optimizer->tables().size(); ++t) {
      write_block(out, "accum.table." + std::to_string(t), optimizer->tables()[t].accum);
    }
    for (std::size_t l = 0; l < optimizer->layers().size(); ++l) {
      const auto& st = optimizer->layers()[l];
      const std::string p = "accum.layer." + std::to_string(l);
      write_block(out, p + ".w", st.w.accum);
      write_block(out, p + ".b", st.b.accum);
      write_block(out, p + ".activation", st.activation.accum);
    }
  }
  out << "end\n";
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Optimizer* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, model, optimizer);
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  std::vector<std::string_view> f;
  if (!r.next(f) || f.size() != 2 || f[0] != "smelu-checkpoint" || f[1] != "1") {
    r.fail(1, "not a checkpoint (missing header)");
  }

  ModelConfig config;
  config.hidden.clear();
  std::uint64_t seed = 0;
  struct Block {
    std::string name;
    std::vector<double> values;
    std::size_t line = 0;
  };
  std::vector<Block> blocks;
  std::optional<OptimizerConfig> optim;

  for (;;) {
    f = r.expect_line();
    const std::string_view key = f[0];
    auto arg = [&](std::size_t i) {
      if (i >= f.size()) r.fail(1, "missing value for '" + std::string(key) + "'");
      return f[i];
    };
    if (key == "end") break;
    if (key == "seed") {
      const std::string_view v = arg(1);
      const auto res = std::from_chars(v.data(), v.data() + v.size(), seed);
      if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) r.fail(r.column_of(v), "bad seed");
    } else if (key == "config.table") {
      config.tables.push_back({r.to_size(arg(1)), r.to_size(arg(2))});
    } else if (key == "config.dense_inputs") {
      config.dense_inputs = r.to_size(arg(1));
    } else if (key == "config.hidden") {
      if (arg(1) != "-") {
        for (auto part : text::split(arg(1), ',')) config.hidden.push_back(r.to_size(part));
      }
    } else if (key == "config.activation" || key == "config.layer_activation") {
      ActivationSpec spec;
      try {
        spec = parse_activation(arg(1));
      } catch (const ConfigError& e) {
        r.fail(r.column_of(arg(1)), e.what());
      }
      (key == "config.activation" ? config.activation : config.layer_activations.emplace_back()) =
          spec;
    } else if (key == "config.norm") {
      config.norm = parse_norm(arg(1));
    } else if (key == "config.norm_value") {
      config.norm_value = r.to_double(arg(1));
    } else if (key == "config.clip") {
      config.clip = r.to_double(arg(1));
    } else if (key == "config.identity_input_activation") {
      config.identity_input_activation = arg(1) == "1";
    } else if (key == "config.layer_norm_input") {
      config.layer_norm_input = arg(1) == "1";
    } else if (key == "config.embedding_init_std") {
      config.embedding_init_std = r.to_double(arg(1));
    } else if (key == "block") {
      const std::string name(arg(1));
      const std::size_t count = r.to_size(arg(2));
      const std::size_t line = r.line_no();
      blocks.push_back({name, r.values(count), line});
    } else if (key == "optimizer") {
      OptimizerConfig oc;
      oc.kind = parse_optimizer(arg(1));
      oc.lr_embedding = r.to_double(arg(2));
      oc.lr_dense = r.to_double(arg(3));
      oc.lr_activation = r.to_double(arg(4));
      oc.epsilon = r.to_double(arg(5));
      oc.g_init = r.to_double(arg(6));
      optim = oc;
    } else {
      r.fail(1, "unknown record '" + std::string(key) + "'");
    }
  }

  Checkpoint cp{make_model(config, seed), std::nullopt};
  Model& m = cp.model;
  if (optim) cp.optimizer.emplace(m, *optim);

  auto target = [&](const std::string& name) -> std::vector<double>* {
    const auto parts = text::split(name, '.');
    const bool accum = parts[0] == "accum";
    const std::size_t off = accum ? 1 : 0;
    if (parts.size() < off + 2) return nullptr;
    const auto index = text::parse_int(parts[off + 1]);
    if (!index || *index < 0) return nullptr;
    const auto i = static_cast<std::size_t>(*index);
    if (accum && !cp.optimizer) return nullptr;
    if (parts[off] == "table" && parts.size() == off + 2) {
      if (i >= m.tables.size()) return nullptr;
      return accum ? &cp.optimizer->tables()[i].accum : &m.tables[i].weights;
    }
    if (parts[off] != "layer" || parts.size() != off + 3 || i >= m.layers.size()) return nullptr;
    const std::string_view what = parts[off + 2];
    if (accum) {
      auto& st = cp.optimizer->layers()[i];
      if (what == "w") return &st.w.accum;
      if (what == "b") return &st.b.accum;
      if (what == "activation") return &st.activation.accum;
      return nullptr;
    }
    if (what == "w") return &m.layers[i].w;
    if (what == "b") return &m.layers[i].b;
    return nullptr;
  };

  for (auto& [name, values, line] : blocks) {
    if (name.ends_with(".activation") && !name.starts_with("accum.")) {
      const auto parts = text::split(name, '.');
      const auto l = text::parse_int(parts.size() == 3 ? parts[1] : "");
      if (!l || *l < 0 || static_cast<std::size_t>(*l) >= m.layers.size() || values.size() != 5) {
        throw ParseError(line, 1, "bad activation block '" + name + "'");
      }
      DenseLayer& layer = m.layers[static_cast<std::size_t>(*l)];
      layer.activation.gsmelu = {values[0], values[1], values[2], values[3], values[4]};
      continue;
    }
    std::vector<double>* dst = target(name);
    if (!dst) throw ParseError(line, 1, "unknown block '" + name + "'");
    // SGD keeps no accumulators, so an empty block matches an empty target.
    if (dst->size() != values.size()) {
      throw ParseError(line, 1, "block '" + name + "' has " + std::to_string(values.size()) +
                                 " values, expected " + std::to_string(dst->size()));
    }
    *dst = std::move(values);
  }
  return cp;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_checkpoint(in);
}

}  // namespace smelu
