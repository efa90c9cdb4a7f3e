#pragma once

// Closed-form smooth activations: SmeLU, generalized SmeLU, multi-segment
// RESCU splines and the exponential family (Softplus, Swish, GELU).

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace smelu {

enum class ActivationKind { ReLU, SmeLU, GSmeLU, Rescu, Softplus, Swish, GELU, Identity };

std::string_view to_string(ActivationKind kind);

/// Five-parameter generalized SmeLU. The middle quadratic joins a line of
/// slope g_minus (left of -alpha) to a line of slope g_plus (right of beta),
/// and passes through (-alpha, t).
struct GSmeLUParams {
  double alpha = 1.0;
  double beta = 1.0;
  double g_minus = 0.0;
  double g_plus = 1.0;
  double t = 0.0;

  /// Throws ConfigError unless alpha, beta > 0, t <= 0 and g_plus > g_minus.
  /// With require_monotonic also rejects g_minus < 0.
  void validate(bool require_monotonic = false) const;

  bool operator==(const GSmeLUParams&) const = default;
};

/// Middle-segment quadratic y = a x^2 + b x + c.
struct QuadCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

QuadCoeffs gsmelu_coeffs(const GSmeLUParams& p);

struct ActivationValue {
  double y = 0.0;
  double dy_dx = 0.0;
};

ActivationValue eval_gsmelu(const GSmeLUParams& p, double x);

/// Partial derivatives of the gSmeLU output with respect to its parameters.
struct GSmeLUGrads {
  double d_alpha = 0.0;
  double d_beta = 0.0;
  double d_g_minus = 0.0;
  double d_g_plus = 0.0;
  double d_t = 0.0;
};

GSmeLUGrads gsmelu_param_grads(const GSmeLUParams& p, double x);

struct RescuKnot {
  double x = 0.0;
  double slope = 0.0;
};

/// One quadratic bridge on [left, right] in absolute coordinates.
struct RescuSegment {
  double left = 0.0;
  double right = 0.0;
  QuadCoeffs q;
};

/// Multi-segment C1 curve: linear tails outside the first/last knot and a
/// quadratic bridge between every pair of adjacent knots. The derivative is
/// the piecewise-linear interpolation of the knot slopes.
struct RescuSpec {
  std::vector<RescuKnot> knots;
  std::vector<double> values;  // y at each knot
  std::vector<RescuSegment> segments;
  // Construction inputs, kept for serialization.
  double anchor_x = 0.0;
  double anchor_y = 0.0;
};

/// Throws ConfigError if knots are fewer than two or not strictly increasing.
RescuSpec build_rescu(std::vector<RescuKnot> knots, std::pair<double, double> anchor);

ActivationValue eval_rescu(const RescuSpec& spec, double x);

/// Trapezoid-rule value of ReLU convolved with a box of height 1/(2 beta) on
/// [-beta, beta]. Test oracle for the SmeLU closed form.
double smelu_convolution_oracle(double x, double beta, int n_steps);

/// Tagged activation description shared by evaluation, training and landscape
/// sampling. Construct through the named factories; they validate.
struct ActivationSpec {
  ActivationKind kind = ActivationKind::ReLU;
  double beta = 1.0;
  GSmeLUParams gsmelu;
  RescuSpec rescu;
  /// GELU only: evaluate with erf instead of the Swish approximation.
  bool gelu_exact = false;
  /// GSmeLU only: parameters are learned during training.
  bool trainable = false;

  static ActivationSpec relu();
  static ActivationSpec identity();
  static ActivationSpec smelu(double beta);
  static ActivationSpec softplus(double beta);
  static ActivationSpec swish(double beta);
  static ActivationSpec gelu(double beta, bool exact = false);
  static ActivationSpec generalized(const GSmeLUParams& p, bool trainable = false);
  static ActivationSpec rescu_from(RescuSpec spec);

  void validate() const;
};

/// Value and analytic derivative. Throws InvalidInput for non-finite x.
ActivationValue eval(const ActivationSpec& spec, double x);

/// Unchecked evaluation for hot loops; spec must be valid and x finite.
ActivationValue eval_unchecked(const ActivationSpec& spec, double x);

/// eval_unchecked over a whole vector: y[i], dy[i] for x[i].
void eval_batch(const ActivationSpec& spec, std::span<const double> x, double* y, double* dy);

/// Flat text form, e.g. `smelu:beta=1`, `gsmelu:alpha=1,beta=1,gm=0,gp=1,t=0`,
/// `rescu:knots=(-1,0);(1,1);anchor=(-1,0)`.
std::string format_activation(const ActivationSpec& spec);
ActivationSpec parse_activation(std::string_view text);

/// Parameter text without the kind prefix, used in report rows.
std::string format_activation_params(const ActivationSpec& spec);

}  // namespace smelu
