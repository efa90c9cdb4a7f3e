#include "smelu/activations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

#include "smelu/error.hpp"
#include "smelu/text.hpp"

namespace smelu {
namespace {

// Past this |beta x| the exponential forms equal their asymptotes to < 1e-13.
constexpr double kExpCutoff = 30.0;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

ActivationValue relu(double x) {
  // Subgradient at 0 is 0.
  return x > 0.0 ? ActivationValue{x, 1.0} : ActivationValue{0.0, 0.0};
}

ActivationValue smelu_eval(double beta, double x) {
  if (x <= -beta) return {0.0, 0.0};
  if (x >= beta) return {x, 1.0};
  const double u = x + beta;
  return {u * u / (4.0 * beta), u / (2.0 * beta)};
}

ActivationValue softplus(double beta, double x) {
  const double z = beta * x;
  if (z > kExpCutoff) return {x, 1.0};
  if (z < -kExpCutoff) return {0.0, 0.0};
  return {std::log1p(std::exp(z)) / beta, sigmoid(z)};
}

ActivationValue swish(double beta, double x) {
  const double z = beta * x;
  if (z > kExpCutoff) return {x, 1.0};
  if (z < -kExpCutoff) return {0.0, 0.0};
  const double s = sigmoid(z);
  return {x * s, s + z * s * (1.0 - s)};
}

ActivationValue gelu_exact(double beta, double x) {
  const double z = beta * x;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return {x * cdf, cdf + z * pdf};
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be a positive finite number");
  }
}

std::string fmt(double v) { return text::format_double(v); }

}  // namespace

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::SmeLU: return "smelu";
    case ActivationKind::GSmeLU: return "gsmelu";
    case ActivationKind::Rescu: return "rescu";
    case ActivationKind::Softplus: return "softplus";
    case ActivationKind::Swish: return "swish";
    case ActivationKind::GELU: return "gelu";
    case ActivationKind::Identity: return "identity";
  }
  return "unknown";
}

void GSmeLUParams::validate(bool require_monotonic) const {
  require_positive(alpha, "gsmelu alpha");
  require_positive(beta, "gsmelu beta");
  if (!std::isfinite(g_minus) || !std::isfinite(g_plus) || !std::isfinite(t)) {
    throw ConfigError("gsmelu parameters must be finite");
  }
  if (t > 0.0) throw ConfigError("gsmelu t must be <= 0");
  if (!(g_plus > g_minus)) throw ConfigError("gsmelu requires g_plus > g_minus");
  if (require_monotonic && g_minus < 0.0) {
    throw ConfigError("monotonic gsmelu requires g_minus >= 0");
  }
}

QuadCoeffs gsmelu_coeffs(const GSmeLUParams& p) {
  const double s = p.alpha + p.beta;
  return {
      (p.g_plus - p.g_minus) / (2.0 * s),
      (p.alpha * p.g_plus + p.beta * p.g_minus) / s,
      p.t + (p.alpha * p.alpha * (p.g_plus + p.g_minus) + 2.0 * p.alpha * p.beta * p.g_minus) /
                (2.0 * s),
  };
}

ActivationValue eval_gsmelu(const GSmeLUParams& p, double x) {
  if (x <= -p.alpha) return {p.g_minus * x + p.t + p.g_minus * p.alpha, p.g_minus};
  if (x >= p.beta) {
    const double offset =
        p.t + 0.5 * (p.alpha + p.beta) * p.g_minus + 0.5 * (p.alpha - p.beta) * p.g_plus;
    return {p.g_plus * x + offset, p.g_plus};
  }
  const QuadCoeffs q = gsmelu_coeffs(p);
  return {(q.a * x + q.b) * x + q.c, 2.0 * q.a * x + q.b};
}

GSmeLUGrads gsmelu_param_grads(const GSmeLUParams& p, double x) {
  const double s = p.alpha + p.beta;
  if (x < -p.alpha) return {p.g_minus, 0.0, x + p.alpha, 0.0, 1.0};
  if (x > p.beta) {
    return {0.5 * (p.g_minus + p.g_plus), 0.5 * (p.g_minus - p.g_plus), 0.5 * s,
            x + 0.5 * (p.alpha - p.beta), 1.0};
  }
  // Middle segment written as t + g-(x+alpha) + (g+ - g-)(x+alpha)^2 / (2(alpha+beta)).
  const double u = x + p.alpha;
  const double d = p.g_plus - p.g_minus;
  const double u2 = u * u;
  return {
      p.g_minus + d * u / s - d * u2 / (2.0 * s * s),
      -d * u2 / (2.0 * s * s),
      u - u2 / (2.0 * s),
      u2 / (2.0 * s),
      1.0,
  };
}

RescuSpec build_rescu(std::vector<RescuKnot> knots, std::pair<double, double> anchor) {
  if (knots.size() < 2) throw ConfigError("rescu needs at least two knots");
  for (const auto& k : knots) {
    if (!std::isfinite(k.x) || !std::isfinite(k.slope)) {
      throw ConfigError("rescu knots must be finite");
    }
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i].x > knots[i - 1].x)) {
      throw ConfigError("rescu knots must be strictly increasing");
    }
  }
  if (!std::isfinite(anchor.first) || !std::isfinite(anchor.second)) {
    throw ConfigError("rescu anchor must be finite");
  }

  RescuSpec spec;
  spec.knots = std::move(knots);
  spec.anchor_x = anchor.first;
  spec.anchor_y = anchor.second;

  // Knot values relative to the first knot, then shifted so the curve passes
  // through the anchor.
  const auto& ks = spec.knots;
  std::vector<double> rel(ks.size(), 0.0);
  for (std::size_t i = 1; i < ks.size(); ++i) {
    rel[i] = rel[i - 1] + 0.5 * (ks[i - 1].slope + ks[i].slope) * (ks[i].x - ks[i - 1].x);
  }
  spec.values = rel;
  spec.segments.clear();
  auto build_segments = [&spec] {
    spec.segments.clear();
    for (std::size_t i = 0; i + 1 < spec.knots.size(); ++i) {
      // Same three constraints as gSmeLU: slopes at both ends, value at the left.
      GSmeLUParams bridge{-spec.knots[i].x, spec.knots[i + 1].x, spec.knots[i].slope,
                          spec.knots[i + 1].slope, spec.values[i]};
      spec.segments.push_back({spec.knots[i].x, spec.knots[i + 1].x, gsmelu_coeffs(bridge)});
    }
  };
  build_segments();
  const double at_anchor = eval_rescu(spec, anchor.first).y;
  const double shift = anchor.second - at_anchor;
  for (auto& v : spec.values) v += shift;
  build_segments();
  return spec;
}

ActivationValue eval_rescu(const RescuSpec& spec, double x) {
  const auto& ks = spec.knots;
  if (x <= ks.front().x) {
    return {spec.values.front() + ks.front().slope * (x - ks.front().x), ks.front().slope};
  }
  if (x >= ks.back().x) {
    return {spec.values.back() + ks.back().slope * (x - ks.back().x), ks.back().slope};
  }
  std::size_t i = 0;
  while (i + 1 < spec.segments.size() && x > spec.segments[i].right) ++i;
  const QuadCoeffs& q = spec.segments[i].q;
  return {(q.a * x + q.b) * x + q.c, 2.0 * q.a * x + q.b};
}

double smelu_convolution_oracle(double x, double beta, int n_steps) {
  if (n_steps < 100) throw InvalidInput("convolution oracle needs n_steps >= 100");
  const double h = 2.0 * beta / n_steps;
  const double density = 1.0 / (2.0 * beta);
  auto integrand = [&](double u) { return std::max(x - u, 0.0) * density; };
  double sum = 0.5 * (integrand(-beta) + integrand(beta));
  for (int i = 1; i < n_steps; ++i) sum += integrand(-beta + i * h);
  return sum * h;
}

ActivationSpec ActivationSpec::relu() { return {}; }

ActivationSpec ActivationSpec::identity() {
  ActivationSpec s;
  s.kind = ActivationKind::Identity;
  return s;
}

ActivationSpec ActivationSpec::smelu(double beta) {
  ActivationSpec s;
  s.kind = ActivationKind::SmeLU;
  s.beta = beta;
  s.validate();
  return s;
}

ActivationSpec ActivationSpec::softplus(double beta) {
  ActivationSpec s;
  s.kind = ActivationKind::Softplus;
  s.beta = beta;
  s.validate();
  return s;
}

ActivationSpec ActivationSpec::swish(double beta) {
  ActivationSpec s;
  s.kind = ActivationKind::Swish;
  s.beta = beta;
  s.validate();
  return s;
}

ActivationSpec ActivationSpec::gelu(double beta, bool exact) {
  ActivationSpec s;
  s.kind = ActivationKind::GELU;
  s.beta = beta;
  s.gelu_exact = exact;
  s.validate();
  return s;
}

ActivationSpec ActivationSpec::generalized(const GSmeLUParams& p, bool trainable) {
  ActivationSpec s;
  s.kind = ActivationKind::GSmeLU;
  s.gsmelu = p;
  s.trainable = trainable;
  s.validate();
  return s;
}

ActivationSpec ActivationSpec::rescu_from(RescuSpec spec) {
  ActivationSpec s;
  s.kind = ActivationKind::Rescu;
  s.rescu = std::move(spec);
  s.validate();
  return s;
}

void ActivationSpec::validate() const {
  switch (kind) {
    case ActivationKind::SmeLU:
    case ActivationKind::Softplus:
    case ActivationKind::Swish:
    case ActivationKind::GELU:
      require_positive(beta, "activation beta");
      break;
    case ActivationKind::GSmeLU:
      gsmelu.validate();
      break;
    case ActivationKind::Rescu:
      if (rescu.knots.size() < 2 || rescu.segments.size() + 1 != rescu.knots.size()) {
        throw ConfigError("rescu spec is not built");
      }
      break;
    case ActivationKind::ReLU:
    case ActivationKind::Identity:
      break;
  }
  if (trainable && kind != ActivationKind::GSmeLU) {
    throw ConfigError("only gsmelu parameters can be trained");
  }
}

ActivationValue eval_unchecked(const ActivationSpec& spec, double x) {
  switch (spec.kind) {
    case ActivationKind::ReLU: return relu(x);
    case ActivationKind::SmeLU: return smelu_eval(spec.beta, x);
    case ActivationKind::GSmeLU: return eval_gsmelu(spec.gsmelu, x);
    case ActivationKind::Rescu: return eval_rescu(spec.rescu, x);
    case ActivationKind::Softplus: return softplus(spec.beta, x);
    case ActivationKind::Swish: return swish(spec.beta, x);
    case ActivationKind::GELU:
      if (spec.gelu_exact) return gelu_exact(spec.beta, x);
      return swish(std::sqrt(8.0 / std::numbers::pi) * spec.beta, x);
    case ActivationKind::Identity: return {x, 1.0};
  }
  return {x, 1.0};
}

ActivationValue eval(const ActivationSpec& spec, double x) {
  if (!std::isfinite(x)) throw InvalidInput("activation input is not finite");
  return eval_unchecked(spec, x);
}

// ---------------------------------------------------------------------------
// Text form

std::string format_activation_params(const ActivationSpec& spec) {
  std::ostringstream os;
  switch (spec.kind) {
    case ActivationKind::ReLU:
    case ActivationKind::Identity:
      break;
    case ActivationKind::SmeLU:
    case ActivationKind::Softplus:
    case ActivationKind::Swish:
      os << "beta=" << fmt(spec.beta);
      break;
    case ActivationKind::GELU:
      os << "beta=" << fmt(spec.beta);
      if (spec.gelu_exact) os << ",exact=1";
      break;
    case ActivationKind::GSmeLU: {
      const auto& p = spec.gsmelu;
      os << "alpha=" << fmt(p.alpha) << ",beta=" << fmt(p.beta) << ",gm=" << fmt(p.g_minus)
         << ",gp=" << fmt(p.g_plus) << ",t=" << fmt(p.t);
      if (spec.trainable) os << ",learn=1";
      break;
    }
    case ActivationKind::Rescu: {
      os << "knots=";
      for (std::size_t i = 0; i < spec.rescu.knots.size(); ++i) {
        if (i) os << ';';
        os << '(' << fmt(spec.rescu.knots[i].x) << ',' << fmt(spec.rescu.knots[i].slope) << ')';
      }
      os << ";anchor=(" << fmt(spec.rescu.anchor_x) << ',' << fmt(spec.rescu.anchor_y) << ')';
      break;
    }
  }
  return os.str();
}

void eval_batch(const ActivationSpec& spec, std::span<const double> x, double* y, double* dy) {
  const std::size_t n = x.size();
  switch (spec.kind) {
    case ActivationKind::ReLU:
      for (std::size_t i = 0; i < n; ++i) {
        const ActivationValue v = relu(x[i]);
        y[i] = v.y;
        dy[i] = v.dy_dx;
      }
      return;
    case ActivationKind::SmeLU:
      for (std::size_t i = 0; i < n; ++i) {
        const ActivationValue v = smelu_eval(spec.beta, x[i]);
        y[i] = v.y;
        dy[i] = v.dy_dx;
      }
      return;
    case ActivationKind::Identity:
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = x[i];
        dy[i] = 1.0;
      }
      return;
    default:
      for (std::size_t i = 0; i < n; ++i) {
        const ActivationValue v = eval_unchecked(spec, x[i]);
        y[i] = v.y;
        dy[i] = v.dy_dx;
      }
  }
}

std::string format_activation(const ActivationSpec& spec) {
  std::string out(to_string(spec.kind));
  const auto params = format_activation_params(spec);
  if (!params.empty()) out += ":" + params;
  return out;
}

namespace {

double number_or_throw(std::string_view s, std::string_view what) {
  auto v = text::parse_double(s);
  if (!v) throw ConfigError("bad number '" + std::string(s) + "' for " + std::string(what));
  return *v;
}

std::pair<double, double> parse_point(std::string_view s) {
  s = text::trim(s);
  if (s.size() < 2 || s.front() != '(' || s.back() != ')') {
    throw ConfigError("expected (x,y) but got '" + std::string(s) + "'");
  }
  const auto parts = text::split(s.substr(1, s.size() - 2), ',');
  if (parts.size() != 2) throw ConfigError("expected (x,y) but got '" + std::string(s) + "'");
  return {number_or_throw(parts[0], "point"), number_or_throw(parts[1], "point")};
}

ActivationSpec parse_rescu(std::string_view params) {
  // knots=(x,s);(x,s);...;anchor=(x,y)
  std::vector<RescuKnot> knots;
  std::optional<std::pair<double, double>> anchor;
  bool in_knots = false;
  for (auto item : text::split(params, ';')) {
    item = text::trim(item);
    if (item.starts_with("knots=")) {
      in_knots = true;
      item.remove_prefix(6);
    } else if (item.starts_with("anchor=")) {
      in_knots = false;
      anchor = parse_point(item.substr(7));
      continue;
    }
    if (!in_knots) throw ConfigError("unexpected rescu field '" + std::string(item) + "'");
    const auto [x, slope] = parse_point(item);
    knots.push_back({x, slope});
  }
  if (knots.empty()) throw ConfigError("rescu needs knots=");
  if (!anchor) anchor = std::pair{knots.front().x, 0.0};
  return ActivationSpec::rescu_from(build_rescu(std::move(knots), *anchor));
}

}  // namespace

ActivationSpec parse_activation(std::string_view input) {
  const auto body = text::trim(input);
  const auto colon = body.find(':');
  const auto name = text::trim(body.substr(0, colon));
  const auto params =
      colon == std::string_view::npos ? std::string_view{} : text::trim(body.substr(colon + 1));

  if (name == "rescu") return parse_rescu(params);

  double beta = 1.0;
  GSmeLUParams g;
  bool exact = false;
  bool learn = false;
  if (!params.empty()) {
    for (auto kv : text::split(params, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("expected key=value in activation '" + std::string(body) + "'");
      }
      const auto key = text::trim(kv.substr(0, eq));
      const double v = number_or_throw(kv.substr(eq + 1), key);
      if (key == "beta") {
        beta = v;
        g.beta = v;
      } else if (key == "alpha") {
        g.alpha = v;
      } else if (key == "gm") {
        g.g_minus = v;
      } else if (key == "gp") {
        g.g_plus = v;
      } else if (key == "t") {
        g.t = v;
      } else if (key == "exact") {
        exact = v != 0.0;
      } else if (key == "learn") {
        learn = v != 0.0;
      } else {
        throw ConfigError("unknown activation parameter '" + std::string(key) + "'");
      }
    }
  }

  if (name == "relu") return ActivationSpec::relu();
  if (name == "identity") return ActivationSpec::identity();
  if (name == "smelu") return ActivationSpec::smelu(beta);
  if (name == "softplus") return ActivationSpec::softplus(beta);
  if (name == "swish") return ActivationSpec::swish(beta);
  if (name == "gelu") return ActivationSpec::gelu(beta, exact);
  if (name == "gsmelu") return ActivationSpec::generalized(g, learn);
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

}  // namespace smelu
