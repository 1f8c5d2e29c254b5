#pragma once

// The eight parametric SUR families and their closed-form evaluation.
//
//   Polynomial3/4  sum_k a_k x^k                    (a_0 .. a_n)
//   Gaussian       1 - (1 + erf((x - mu) / (sigma sqrt2))) / 2     (mu, sigma)
//   Logistic2      1 - 1 / (1 + exp(-(x - mu) / s))                (mu, s)
//   Logistic4      b + L / (1 + exp(-k (x - x0)))                  (b, L, k, x0)
//   Weibull        exp(-(x / lambda)^k), 1 for x < 0               (lambda, k)
//   Gumbel         1 - exp(-exp(-(x - mu) / beta))                 (mu, beta)
//   Rayleigh       exp(-x^2 / (2 sigma^2)), 1 for x < 0            (sigma)
//
// Distribution families are the complementary CDFs of the corresponding JND
// distributions and stay within [0, 1]. Polynomials are returned unclamped.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surkit/empirical.hpp"
#include "surkit/error.hpp"

namespace surkit {

enum class ModelFamily { Polynomial3, Polynomial4, Gaussian, Logistic2, Logistic4, Weibull, Gumbel, Rayleigh };

// Table order, used for every report.
inline constexpr std::array<ModelFamily, 8> kAllFamilies = {
    ModelFamily::Polynomial3, ModelFamily::Polynomial4, ModelFamily::Gaussian, ModelFamily::Logistic2,
    ModelFamily::Logistic4,   ModelFamily::Weibull,     ModelFamily::Gumbel,   ModelFamily::Rayleigh};

// Families fitted by non-linear least squares.
inline constexpr std::array<ModelFamily, 6> kNlsFamilies = {
    ModelFamily::Gaussian, ModelFamily::Logistic2, ModelFamily::Logistic4,
    ModelFamily::Weibull,  ModelFamily::Gumbel,    ModelFamily::Rayleigh};

// Families that are the CCDF of a probability distribution.
inline constexpr std::array<ModelFamily, 5> kDistributionFamilies = {
    ModelFamily::Gaussian, ModelFamily::Logistic2, ModelFamily::Weibull, ModelFamily::Gumbel,
    ModelFamily::Rayleigh};

inline constexpr std::size_t param_count(ModelFamily f) noexcept {
  switch (f) {
    case ModelFamily::Polynomial3: return 4;
    case ModelFamily::Polynomial4: return 5;
    case ModelFamily::Gaussian: return 2;
    case ModelFamily::Logistic2: return 2;
    case ModelFamily::Logistic4: return 4;
    case ModelFamily::Weibull: return 2;
    case ModelFamily::Gumbel: return 2;
    case ModelFamily::Rayleigh: return 1;
  }
  return 0;
}

inline constexpr std::size_t kMaxParams = 5;

inline constexpr bool is_polynomial(ModelFamily f) noexcept {
  return f == ModelFamily::Polynomial3 || f == ModelFamily::Polynomial4;
}

inline constexpr bool is_distribution(ModelFamily f) noexcept {
  return !is_polynomial(f) && f != ModelFamily::Logistic4;
}

inline constexpr std::string_view family_name(ModelFamily f) noexcept {
  switch (f) {
    case ModelFamily::Polynomial3: return "Polynomial3";
    case ModelFamily::Polynomial4: return "Polynomial4";
    case ModelFamily::Gaussian: return "Gaussian";
    case ModelFamily::Logistic2: return "Logistic2";
    case ModelFamily::Logistic4: return "Logistic4";
    case ModelFamily::Weibull: return "Weibull";
    case ModelFamily::Gumbel: return "Gumbel";
    case ModelFamily::Rayleigh: return "Rayleigh";
  }
  return "";
}

// Accepts the canonical names plus the long-form table names, ignoring case
// and punctuation ("2-para-logistic", "poly3", "gauss", ...).
inline std::optional<ModelFamily> parse_family(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  struct Alias {
    std::string_view name;
    ModelFamily family;
  };
  static constexpr Alias aliases[] = {
      {"polynomial3", ModelFamily::Polynomial3}, {"poly3", ModelFamily::Polynomial3},
      {"polynomial4", ModelFamily::Polynomial4}, {"poly4", ModelFamily::Polynomial4},
      {"gaussian", ModelFamily::Gaussian},       {"gauss", ModelFamily::Gaussian},
      {"2pgaussian", ModelFamily::Gaussian},     {"logistic2", ModelFamily::Logistic2},
      {"2paralogistic", ModelFamily::Logistic2}, {"2plogistic", ModelFamily::Logistic2},
      {"logistic4", ModelFamily::Logistic4},     {"4paralogistic", ModelFamily::Logistic4},
      {"4plogistic", ModelFamily::Logistic4},    {"weibull", ModelFamily::Weibull},
      {"gumbel", ModelFamily::Gumbel},           {"rayleigh", ModelFamily::Rayleigh},
  };
  for (const auto& a : aliases) {
    if (a.name == key) return a.family;
  }
  return std::nullopt;
}

inline std::vector<std::string_view> param_names(ModelFamily f) {
  switch (f) {
    case ModelFamily::Polynomial3: return {"a0", "a1", "a2", "a3"};
    case ModelFamily::Polynomial4: return {"a0", "a1", "a2", "a3", "a4"};
    case ModelFamily::Gaussian: return {"mu", "sigma"};
    case ModelFamily::Logistic2: return {"mu", "s"};
    case ModelFamily::Logistic4: return {"b", "L", "k", "x0"};
    case ModelFamily::Weibull: return {"lambda", "k"};
    case ModelFamily::Gumbel: return {"mu", "beta"};
    case ModelFamily::Rayleigh: return {"sigma"};
  }
  return {};
}

struct SurModel {
  ModelFamily family = ModelFamily::Gaussian;
  std::vector<double> params;

  friend bool operator==(const SurModel&, const SurModel&) = default;
};

// Lists every violated parameter invariant; empty means valid.
inline std::vector<std::string> validate_params(const SurModel& model) {
  std::vector<std::string> violations;
  const auto& p = model.params;
  if (p.size() != param_count(model.family)) {
    violations.push_back(std::string(family_name(model.family)) + " expects " +
                         std::to_string(param_count(model.family)) + " parameters, got " +
                         std::to_string(p.size()));
    return violations;
  }
  for (double v : p) {
    if (!std::isfinite(v)) {
      violations.emplace_back("parameters must be finite");
      return violations;
    }
  }
  switch (model.family) {
    case ModelFamily::Polynomial3:
    case ModelFamily::Polynomial4:
      break;
    case ModelFamily::Gaussian:
      if (!(p[1] > 0)) violations.emplace_back("σ>0");
      break;
    case ModelFamily::Logistic2:
      if (!(p[1] > 0)) violations.emplace_back("s>0");
      break;
    case ModelFamily::Logistic4:
      if (p[1] * p[2] > 0) violations.emplace_back("L·k≤0");
      break;
    case ModelFamily::Weibull:
      if (!(p[0] > 0)) violations.emplace_back("λ>0");
      if (!(p[1] > 0)) violations.emplace_back("k>0");
      break;
    case ModelFamily::Gumbel:
      if (!(p[1] > 0)) violations.emplace_back("β>0");
      break;
    case ModelFamily::Rayleigh:
      if (!(p[0] > 0)) violations.emplace_back("σ>0");
      break;
  }
  return violations;
}

inline void require_valid(const SurModel& model) {
  const auto violations = validate_params(model);
  if (!violations.empty()) {
    std::string msg(family_name(model.family));
    for (const auto& v : violations) msg += " " + v;
    throw error(errc::invalid_params, msg);
  }
}

namespace detail {

// Evaluation without validation; the fitting code calls this in inner loops.
inline double evaluate_unchecked(ModelFamily family, std::span<const double> p, double x) noexcept {
  switch (family) {
    case ModelFamily::Polynomial3:
    case ModelFamily::Polynomial4: {
      double acc = 0.0;
      for (std::size_t k = p.size(); k-- > 0;) acc = acc * x + p[k];
      return acc;
    }
    case ModelFamily::Gaussian:
      return 0.5 * std::erfc((x - p[0]) / (p[1] * std::numbers::sqrt2));
    case ModelFamily::Logistic2:
      return 1.0 / (1.0 + std::exp((x - p[0]) / p[1]));
    case ModelFamily::Logistic4:
      return p[0] + p[1] / (1.0 + std::exp(-p[2] * (x - p[3])));
    case ModelFamily::Weibull:
      if (x < 0) return 1.0;
      return std::exp(-std::pow(x / p[0], p[1]));
    case ModelFamily::Gumbel:
      return -std::expm1(-std::exp(-(x - p[0]) / p[1]));
    case ModelFamily::Rayleigh:
      if (x < 0) return 1.0;
      return std::exp(-x * x / (2.0 * p[0] * p[0]));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// d evaluate / d params at x, written into `grad` (size param_count).
inline void gradient_unchecked(ModelFamily family, std::span<const double> p, double x,
                               std::span<double> grad) noexcept {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  switch (family) {
    case ModelFamily::Polynomial3:
    case ModelFamily::Polynomial4: {
      double xk = 1.0;
      for (std::size_t k = 0; k < p.size(); ++k, xk *= x) grad[k] = xk;
      return;
    }
    case ModelFamily::Gaussian: {
      const double z = (x - p[0]) / p[1];
      const double phi = inv_sqrt_2pi * std::exp(-0.5 * z * z);
      grad[0] = phi / p[1];
      grad[1] = phi * z / p[1];
      return;
    }
    case ModelFamily::Logistic2: {
      const double u = (x - p[0]) / p[1];
      const double s = 1.0 / (1.0 + std::exp(u));
      const double ds = s * (1.0 - s);
      grad[0] = ds / p[1];
      grad[1] = ds * u / p[1];
      return;
    }
    case ModelFamily::Logistic4: {
      const double d = x - p[3];
      const double g = 1.0 / (1.0 + std::exp(-p[2] * d));
      const double dg = g * (1.0 - g);
      grad[0] = 1.0;
      grad[1] = g;
      grad[2] = p[1] * dg * d;
      grad[3] = -p[1] * dg * p[2];
      return;
    }
    case ModelFamily::Weibull: {
      if (x <= 0) {
        grad[0] = grad[1] = 0.0;
        return;
      }
      const double ratio = x / p[0];
      const double r = std::pow(ratio, p[1]);
      const double s = std::exp(-r);
      grad[0] = s * r * p[1] / p[0];
      grad[1] = -s * r * std::log(ratio);
      return;
    }
    case ModelFamily::Gumbel: {
      const double u = (x - p[0]) / p[1];
      const double w = std::exp(-u);
      const double e = std::exp(-w) * w;
      grad[0] = e / p[1];
      grad[1] = e * u / p[1];
      return;
    }
    case ModelFamily::Rayleigh: {
      if (x < 0) {
        grad[0] = 0.0;
        return;
      }
      const double s = std::exp(-x * x / (2.0 * p[0] * p[0]));
      grad[0] = s * x * x / (p[0] * p[0] * p[0]);
      return;
    }
  }
}

}  // namespace detail

inline double evaluate(const SurModel& model, double x) {
  require_valid(model);
  return detail::evaluate_unchecked(model.family, model.params, x);
}

// Samples the model on every grid level. Throws non_monotone_model if the
// sampled values rise by more than 1e-9 anywhere.
inline SurCurve sample_curve(const SurModel& model, const DistortionGrid& grid = kQpGrid,
                             CurveKind kind = CurveKind::analytic) {
  require_valid(model);
  SurCurve curve{grid, std::vector<double>(grid.size()), kind};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    curve.values[i] = detail::evaluate_unchecked(model.family, model.params, grid.level(i));
  }
  if (count_increases(curve, 1e-9) != 0) {
    throw error(errc::non_monotone_model,
                std::string(family_name(model.family)) + " model increases on the grid");
  }
  return curve;
}

enum class PSurRule {
  nearest,          // argmin |SUR(x) - p|, ties toward the smaller level
  first_at_or_below // min{x | SUR(x) <= p}, saturating at the grid maximum
};

// argmin over grid levels of |values - p|. Exact ties between the two
// levels bracketing the crossing go to the smaller one; ties along a
// saturated plateau (a step-like curve reads exactly 1 on every level left of
// the step) go to the tied level nearest the crossing, not to the grid start.
inline int nearest_level(const SurCurve& curve, double p) {
  check_threshold(p);
  const std::size_t n = curve.values.size();
  std::size_t cross = n;  // first index at or below p
  for (std::size_t i = 0; i < n; ++i) {
    if (curve.values[i] <= p) {
      cross = i;
      break;
    }
  }
  std::size_t best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = std::abs(curve.values[i] - p);
    const double dist = std::abs(static_cast<double>(i) + 0.5 - static_cast<double>(cross));
    if (gap < best_gap || (gap == best_gap && dist < best_dist)) {
      best_gap = gap;
      best_dist = dist;
      best = i;
    }
  }
  return curve.grid.level(best);
}

inline int curve_p_sur(const SurCurve& curve, double p, PSurRule rule) {
  return rule == PSurRule::nearest ? nearest_level(curve, p) : first_level_at_or_below(curve, p).level;
}

// Analytic p%SUR of a model on a grid.
inline int analytic_p_sur(const SurModel& model, double p, const DistortionGrid& grid = kQpGrid,
                          PSurRule rule = PSurRule::nearest) {
  require_valid(model);
  check_threshold(p);
  SurCurve curve{grid, std::vector<double>(grid.size()), CurveKind::analytic};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    curve.values[i] = detail::evaluate_unchecked(model.family, model.params, grid.level(i));
  }
  return curve_p_sur(curve, p, rule);
}

}  // namespace surkit
