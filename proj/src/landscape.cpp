#include <algorithm>
#include <cmath>
#include <random>

#include "smelu/error.hpp"
#include "smelu/harness.hpp"
#include "smelu/text.hpp"

namespace smelu {
namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double loss_of(const LandscapeConfig& cfg, double s) {
  if (cfg.loss == LandscapeLoss::Logistic) {
    return cfg.p1 * softplus(-s) + (1.0 - cfg.p1) * softplus(s);
  }
  const double d = s - cfg.target;
  return d * d;
}

std::vector<double> axis(const LandscapeConfig& cfg) {
  std::vector<double> x(cfg.points);
  const double step = (cfg.hi - cfg.lo) / static_cast<double>(cfg.points - 1);
  for (std::size_t i = 0; i < cfg.points; ++i) x[i] = cfg.lo + step * static_cast<double>(i);
  x.back() = cfg.hi;
  return x;
}

std::string describe(const LandscapeConfig& cfg) {
  std::string h;
  for (auto w : cfg.hidden) h += (h.empty() ? "" : ",") + std::to_string(w);
  auto var = [](double sd) { return text::format_double(sd * sd); };
  return "inputs=" + std::to_string(cfg.dims) + " hidden=" + h +
         " activation=" + format_activation(cfg.activation) +
         " norm=" + std::string(to_string(cfg.norm)) +
         " clip=" + text::format_double(cfg.clip) + " weights=N(0," + var(cfg.weight_std) +
         ") biases=N(0," + var(cfg.bias_std) + ")";
}

Model frozen_network(const LandscapeConfig& cfg) {
  ModelConfig mc;
  mc.dense_inputs = cfg.dims;
  mc.hidden = cfg.hidden;
  mc.activation = cfg.activation;
  mc.norm = cfg.norm;
  mc.norm_value = cfg.norm_value;
  mc.clip = cfg.clip;
  // The scanned inputs enter the first layer raw.
  mc.identity_input_activation = true;
  mc.layer_norm_input = false;
  Model model = make_model(mc, cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> w(0.0, cfg.weight_std);
  std::normal_distribution<double> b(0.0, cfg.bias_std);
  for (auto& layer : model.layers) {
    for (auto& v : layer.w) v = w(rng);
    for (auto& v : layer.b) v = cfg.bias_std > 0.0 ? b(rng) : 0.0;
  }
  renormalize(model);
  return model;
}

}  // namespace

LandscapeSample landscape(const LandscapeConfig& cfg) {
  cfg.validate();
  const Model model = frozen_network(cfg);
  LandscapeSample out;
  out.dims = cfg.dims;
  out.seed = cfg.seed;
  out.network = describe(cfg);
  out.loss_kind = cfg.loss == LandscapeLoss::Logistic ? "logistic" : "regression";
  out.loss_param = cfg.loss == LandscapeLoss::Logistic ? cfg.p1 : cfg.target;
  out.x1 = axis(cfg);
  if (cfg.dims == 2) out.x2 = out.x1;

  ForwardCache cache;
  std::vector<double> input(cfg.dims, 0.0);
  auto eval_at = [&]() {
    forward_dense(model, input, cache);
    const double l = loss_of(cfg, cache.logit);
    if (!std::isfinite(l)) throw InvalidInput("non-finite landscape loss");
    return l;
  };
  if (cfg.dims == 1) {
    out.loss.reserve(out.x1.size());
    for (double x : out.x1) {
      input[0] = x;
      out.loss.push_back(eval_at());
    }
  } else {
    out.loss.reserve(out.x1.size() * out.x2.size());
    for (double y : out.x2) {
      for (double x : out.x1) {
        input[0] = x;
        input[1] = y;
        out.loss.push_back(eval_at());
      }
    }
  }
  return out;
}

std::size_t count_strict_minima(std::span<const double> curve) {
  std::size_t n = 0;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    if (curve[i] < curve[i - 1] && curve[i] < curve[i + 1]) ++n;
  }
  return n;
}

double median_minima(const LandscapeConfig& cfg) {
  std::vector<double> counts;
  counts.reserve(cfg.seeds);
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    LandscapeConfig c = cfg;
    c.dims = 1;
    c.seed = cfg.seed + s;
    counts.push_back(static_cast<double>(count_strict_minima(landscape(c).loss)));
  }
  std::sort(counts.begin(), counts.end());
  const std::size_t m = counts.size() / 2;
  return counts.size() % 2 ? counts[m] : 0.5 * (counts[m - 1] + counts[m]);
}

}  // namespace smelu
