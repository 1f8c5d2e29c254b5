#pragma once

// Least-squares fitting of SUR model families to empirical SUR curves.
//
// Distribution-style families go through a Levenberg-Marquardt solver working
// on a reparameterised vector where every scale parameter is replaced by its
// logarithm, so positivity never has to be enforced explicitly. Polynomials
// are fitted as a convex QP with the monotonicity requirement written as
// linear inequalities at the grid levels, solved through NNLS.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surkit/empirical.hpp"
#include "surkit/error.hpp"
#include "surkit/surmodels.hpp"

namespace surkit {

enum class FitStatus { ok, did_not_converge, degenerate, failed };

inline constexpr std::string_view to_string(FitStatus s) noexcept {
  switch (s) {
    case FitStatus::ok: return "ok";
    case FitStatus::did_not_converge: return "did_not_converge";
    case FitStatus::degenerate: return "degenerate";
    case FitStatus::failed: return "failed";
  }
  return "";
}

struct FitResult {
  std::string video_id;
  std::string resolution;
  SurModel model;
  bool converged = false;
  int iterations = 0;
  double residual_sse = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double delta_p_sur_ea = 0.0;  // |p%SUR_emp - p%SUR_analy| in QP
  double p = 0.75;
  FitStatus status = FitStatus::ok;
  std::string message;

  ModelFamily family() const noexcept { return model.family; }
};

struct FitMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double delta_p_sur_ea = 0.0;
};

struct NlsOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-10;
  double relative_sse_tolerance = 1e-12;
  double initial_damping = 1e-3;
  bool multi_start = true;
  // Restart when the converged SSE exceeds this many units per grid level.
  double restart_sse_per_level = 1e-3;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline void require_same_grid(const SurCurve& a, const SurCurve& b) {
  if (!(a.grid == b.grid) || a.values.size() != b.values.size()) {
    throw error(errc::grid_mismatch, "curves are sampled on different grids");
  }
}

// Mean absolute difference between two curves on a shared grid.
inline double curve_mae(const SurCurve& a, const SurCurve& b) {
  require_same_grid(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) acc += std::abs(a.values[i] - b.values[i]);
  return acc / static_cast<double>(a.values.size());
}

inline double sse_against(ModelFamily family, std::span<const double> params, const SurCurve& curve) {
  double sse = 0.0;
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    const double r = curve.values[i] - detail::evaluate_unchecked(family, params, curve.grid.level(i));
    sse += r * r;
  }
  return sse;
}

// MAE and RMSE of the model against the empirical curve over every grid
// level, plus the p%SUR gap between the empirical rule and the analytic
// (nearest-level) rule.
inline FitMetrics fit_metrics(const SurModel& model, const SurCurve& empirical, double p = 0.75) {
  require_valid(model);
  check_threshold(p);
  const std::size_t n = empirical.values.size();
  if (n == 0 || n != empirical.grid.size()) {
    throw error(errc::grid_mismatch, "curve does not cover its grid");
  }
  SurCurve analytic{empirical.grid, std::vector<double>(n), CurveKind::analytic};
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    analytic.values[i] = detail::evaluate_unchecked(model.family, model.params, empirical.grid.level(i));
    const double r = empirical.values[i] - analytic.values[i];
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  FitMetrics m;
  m.mae = abs_sum / static_cast<double>(n);
  m.rmse = std::sqrt(sq_sum / static_cast<double>(n));
  const int emp = first_level_at_or_below(empirical, p).level;
  const int ana = nearest_level(analytic, p);
  m.delta_p_sur_ea = std::abs(static_cast<double>(emp - ana));
  return m;
}

// ---------------------------------------------------------------------------
// Initial guesses
// ---------------------------------------------------------------------------

// A curve that is constant over the whole grid (flat at 1, flat at 0, ...)
// carries no location or scale information.
inline bool is_degenerate(const SurCurve& curve) {
  if (curve.values.empty()) return true;
  const auto [lo, hi] = std::minmax_element(curve.values.begin(), curve.values.end());
  return *hi - *lo <= 1e-12;
}

namespace detail {

// Level where the curve first drops to `target`, linearly interpolated
// between the bracketing grid levels. nullopt if it never does.
inline std::optional<double> crossing(const SurCurve& curve, double target) {
  const auto& v = curve.values;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] <= target) {
      if (i == 0) return static_cast<double>(curve.grid.min());
      const double x0 = curve.grid.level(i - 1);
      const double drop = v[i - 1] - v[i];
      if (drop <= 0) return x0 + 1.0;
      return x0 + (v[i - 1] - target) / drop;
    }
  }
  return std::nullopt;
}

struct LocationScale {
  double location;
  double scale;  // Gaussian-equivalent standard deviation
};

inline LocationScale location_scale(const SurCurve& curve) {
  const double span = static_cast<double>(curve.grid.max() - curve.grid.min());
  if (is_degenerate(curve)) {
    return {0.5 * (curve.grid.min() + curve.grid.max()), std::max(span / 4.0, 1.0)};
  }
  const double location = crossing(curve, 0.5).value_or(static_cast<double>(curve.grid.max()));
  const auto q25 = crossing(curve, 0.25);
  const auto q75 = crossing(curve, 0.75);
  double scale = std::max(span / 4.0, 1.0);
  if (q25 && q75 && *q25 > *q75) scale = (*q25 - *q75) / 1.349;
  return {location, std::max(scale, 1e-2)};
}

// Expands sum_k c_k ((x - shift) / width)^k into raw-x monomial coefficients.
inline std::vector<double> to_raw_coefficients(const Eigen::VectorXd& scaled, double shift, double width) {
  const auto n = static_cast<std::size_t>(scaled.size());
  std::vector<double> raw(n, 0.0);
  // binomial(k, j)
  std::vector<std::vector<double>> binom(n, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    binom[k][0] = 1.0;
    for (std::size_t j = 1; j <= k; ++j) binom[k][j] = binom[k - 1][j - 1] + (j < k ? binom[k - 1][j] : 0.0);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double ck = scaled(static_cast<Eigen::Index>(k)) / std::pow(width, static_cast<double>(k));
    for (std::size_t j = 0; j <= k; ++j) {
      raw[j] += ck * binom[k][j] * std::pow(-shift, static_cast<double>(k - j));
    }
  }
  return raw;
}

// Polynomial fits are solved in t = (x - min) / span, which keeps the
// normal equations well conditioned.
struct ScaledDesign {
  Eigen::MatrixXd basis;  // grid levels x (degree + 1), columns t^k
  Eigen::VectorXd target;
  Eigen::VectorXd t;
  double shift = 0.0;
  double width = 1.0;
};

inline ScaledDesign scaled_design(int degree, const SurCurve& curve) {
  ScaledDesign d;
  const auto n = static_cast<Eigen::Index>(curve.values.size());
  d.shift = curve.grid.min();
  d.width = std::max(1.0, static_cast<double>(curve.grid.max() - curve.grid.min()));
  d.basis.resize(n, degree + 1);
  d.target.resize(n);
  d.t.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (curve.grid.level(static_cast<std::size_t>(i)) - d.shift) / d.width;
    d.t(i) = t;
    double tk = 1.0;
    for (int k = 0; k <= degree; ++k, tk *= t) d.basis(i, k) = tk;
    d.target(i) = curve.values[static_cast<std::size_t>(i)];
  }
  return d;
}

inline ModelFamily polynomial_family(int degree) {
  if (degree == 3) return ModelFamily::Polynomial3;
  if (degree == 4) return ModelFamily::Polynomial4;
  throw error(errc::invalid_params, "polynomial degree must be 3 or 4, got " + std::to_string(degree));
}

}  // namespace detail

// Starting point for a fit. Degenerate curves get the fallback location at
// the grid midpoint and scale of a quarter of the grid span.
inline SurModel initial_guess(ModelFamily family, const SurCurve& curve) {
  const auto [loc, sigma] = detail::location_scale(curve);
  switch (family) {
    case ModelFamily::Polynomial3:
    case ModelFamily::Polynomial4: {
      const int degree = family == ModelFamily::Polynomial3 ? 3 : 4;
      const auto d = detail::scaled_design(degree, curve);
      const Eigen::VectorXd c = d.basis.colPivHouseholderQr().solve(d.target);
      return {family, detail::to_raw_coefficients(c, d.shift, d.width)};
    }
    case ModelFamily::Gaussian:
      return {family, {loc, sigma}};
    case ModelFamily::Logistic2:
      return {family, {loc, sigma * std::numbers::sqrt3 / std::numbers::pi}};
    case ModelFamily::Logistic4:
      return {family, {0.0, 1.0, -1.0 / sigma, loc}};
    case ModelFamily::Weibull: {
      constexpr double k = 2.0;
      const double median = std::max(loc, 0.5);
      return {family, {median / std::pow(std::numbers::ln2, 1.0 / k), k}};
    }
    case ModelFamily::Gumbel:
      return {family, {loc, sigma * std::sqrt(6.0) / std::numbers::pi}};
    case ModelFamily::Rayleigh:
      return {family, {std::max(loc, 0.5) / std::sqrt(2.0 * std::numbers::ln2)}};
  }
  return {family, {}};
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt
// ---------------------------------------------------------------------------

namespace detail {

enum class Coord { free, location, log_positive, log_negative };

inline std::vector<Coord> coordinates(ModelFamily f) {
  switch (f) {
    case ModelFamily::Gaussian:
    case ModelFamily::Logistic2:
    case ModelFamily::Gumbel:
      return {Coord::location, Coord::log_positive};
    case ModelFamily::Logistic4:
      return {Coord::free, Coord::log_positive, Coord::log_negative, Coord::location};
    case ModelFamily::Weibull:
      return {Coord::log_positive, Coord::log_positive};
    case ModelFamily::Rayleigh:
      return {Coord::log_positive};
    default:
      throw error(errc::invalid_params,
                  std::string(family_name(f)) + " is not fitted by non-linear least squares");
  }
}

// Logistic4 is symmetric under (b, L, k, x0) -> (b + L, -L, -k, x0); the
// solver works in the branch L > 0, k < 0.
inline std::vector<double> canonical_logistic4(std::vector<double> p) {
  if (p[1] < 0 && p[2] > 0) {
    p[0] += p[1];
    p[1] = -p[1];
    p[2] = -p[2];
  }
  if (!(p[1] > 0)) p[1] = 1e-3;
  if (!(p[2] < 0)) p[2] = -1e-3;
  return p;
}

inline Eigen::VectorXd to_internal(const std::vector<Coord>& coords, const std::vector<double>& p) {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(p.size()));
  for (std::size_t j = 0; j < p.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    switch (coords[j]) {
      case Coord::free:
      case Coord::location: theta(jj) = p[j]; break;
      case Coord::log_positive: theta(jj) = std::log(p[j]); break;
      case Coord::log_negative: theta(jj) = std::log(-p[j]); break;
    }
  }
  return theta;
}

inline std::vector<double> to_natural(const std::vector<Coord>& coords, const Eigen::VectorXd& theta) {
  std::vector<double> p(coords.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double t = theta(static_cast<Eigen::Index>(j));
    switch (coords[j]) {
      case Coord::free:
      case Coord::location: p[j] = t; break;
      case Coord::log_positive: p[j] = std::exp(t); break;
      case Coord::log_negative: p[j] = -std::exp(t); break;
    }
  }
  return p;
}

struct LmOutcome {
  std::vector<double> params;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline LmOutcome levenberg_marquardt(ModelFamily family, const SurCurve& curve,
                                     std::vector<double> start, const NlsOptions& opt) {
  const auto coords = coordinates(family);
  const auto n_params = static_cast<Eigen::Index>(coords.size());
  const auto n_points = static_cast<Eigen::Index>(curve.values.size());

  Eigen::VectorXd theta = to_internal(coords, start);
  std::vector<double> p = to_natural(coords, theta);
  double sse = sse_against(family, p, curve);

  LmOutcome out{p, sse, 0, false};
  if (!std::isfinite(sse)) return out;

  Eigen::MatrixXd jac(n_points, n_params);
  Eigen::VectorXd resid(n_points);
  std::array<double, kMaxParams> grad{};
  double damping = opt.initial_damping;

  while (out.iterations < opt.max_iterations) {
    ++out.iterations;
    if (sse == 0.0) {
      out.converged = true;
      break;
    }
    for (Eigen::Index i = 0; i < n_points; ++i) {
      const double x = curve.grid.level(static_cast<std::size_t>(i));
      resid(i) = curve.values[static_cast<std::size_t>(i)] - evaluate_unchecked(family, p, x);
      gradient_unchecked(family, p, x, std::span<double>(grad.data(), coords.size()));
      for (Eigen::Index j = 0; j < n_params; ++j) {
        double chain = 1.0;
        if (coords[static_cast<std::size_t>(j)] == Coord::log_positive ||
            coords[static_cast<std::size_t>(j)] == Coord::log_negative) {
          chain = p[static_cast<std::size_t>(j)];
        }
        jac(i, j) = grad[static_cast<std::size_t>(j)] * chain;
      }
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * resid;
    Eigen::VectorXd diag = jtj.diagonal();
    const double diag_floor = std::max(1e-12 * diag.maxCoeff(), 1e-300);
    for (Eigen::Index j = 0; j < n_params; ++j) diag(j) = std::max(diag(j), diag_floor);

    bool stop = false;
    while (true) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal() += damping * diag;
      const Eigen::VectorXd step = lhs.ldlt().solve(jtr);
      const double step_norm = step.norm();
      const Eigen::VectorXd trial = theta + step;
      const auto trial_p = to_natural(coords, trial);
      const double trial_sse = sse_against(family, trial_p, curve);

      if (std::isfinite(trial_sse) && trial_sse < sse) {
        const double rel = (sse - trial_sse) / sse;
        theta = trial;
        p = trial_p;
        sse = trial_sse;
        damping = std::max(damping / 10.0, 1e-15);
        if (step_norm < opt.step_tolerance || rel < opt.relative_sse_tolerance) {
          out.converged = true;
          stop = true;
        }
        break;
      }
      damping *= 10.0;
      if (step_norm < opt.step_tolerance) {
        // No descent left at the resolution of the step tolerance.
        out.converged = true;
        stop = true;
        break;
      }
      if (damping > 1e30) {
        stop = true;
        break;
      }
    }
    if (stop) break;
  }
  out.params = p;
  out.sse = sse;
  return out;
}

}  // namespace detail

// Fits one of the non-polynomial families by damped Gauss-Newton. Returns the
// best point found; `converged` is false when the iteration cap was hit.
inline FitResult fit_nls(ModelFamily family, const SurCurve& curve, std::optional<SurModel> init = std::nullopt,
                         const NlsOptions& options = {}, double p = 0.75) {
  if (is_polynomial(family)) {
    throw error(errc::invalid_params, "polynomials are fitted by fit_poly_monotone");
  }
  if (curve.values.size() != curve.grid.size()) {
    throw error(errc::grid_mismatch, "curve does not cover its grid");
  }
  if (is_degenerate(curve)) {
    throw error(errc::degenerate_curve, "curve is constant over the grid");
  }
  SurModel start = init.value_or(initial_guess(family, curve));
  if (start.family != family) throw error(errc::invalid_params, "initial model has the wrong family");
  if (family == ModelFamily::Logistic4) start.params = detail::canonical_logistic4(start.params);
  require_valid(start);

  auto best = detail::levenberg_marquardt(family, curve, start.params, options);
  int total_iterations = best.iterations;

  const double restart_threshold = options.restart_sse_per_level * static_cast<double>(curve.grid.size());
  if (options.multi_start && best.sse > restart_threshold) {
    const auto coords = detail::coordinates(family);
    const double spread = detail::location_scale(curve).scale;
    static constexpr double loc_sign[4] = {+1, -1, +1, -1};
    static constexpr double log_sign[4] = {+1, +1, -1, -1};
    const Eigen::VectorXd base = detail::to_internal(coords, start.params);
    for (int r = 0; r < 4; ++r) {
      Eigen::VectorXd theta = base;
      for (std::size_t j = 0; j < coords.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        if (coords[j] == detail::Coord::location) theta(jj) += loc_sign[r] * spread;
        if (coords[j] == detail::Coord::log_positive || coords[j] == detail::Coord::log_negative) {
          theta(jj) += log_sign[r] * std::numbers::ln2;
        }
      }
      auto attempt = detail::levenberg_marquardt(family, curve, detail::to_natural(coords, theta), options);
      total_iterations += attempt.iterations;
      if (attempt.sse < best.sse) best = std::move(attempt);
    }
  }

  FitResult result;
  result.model = {family, best.params};
  result.converged = best.converged;
  result.iterations = total_iterations;
  result.residual_sse = best.sse;
  result.p = p;
  result.status = best.converged ? FitStatus::ok : FitStatus::did_not_converge;
  const auto m = fit_metrics(result.model, curve, p);
  result.mae = m.mae;
  result.rmse = m.rmse;
  result.delta_p_sur_ea = m.delta_p_sur_ea;
  return result;
}

// ---------------------------------------------------------------------------
// Monotone polynomial least squares
// ---------------------------------------------------------------------------

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per constraint row, zero when inactive
  int iterations = 0;
};

// Non-negative least squares, min ||e u - f|| subject to u >= 0, by the
// Lawson-Hanson active-set algorithm. `iterations` counts inner solves.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& e, const Eigen::VectorXd& f, int* iterations = nullptr) {
  const Eigen::Index n = e.cols();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  std::vector<char> passive(static_cast<std::size_t>(n), 0);
  const double tol = 1e-12 * std::max(1.0, e.cwiseAbs().maxCoeff()) * std::max(1.0, f.norm());
  int count = 0;
  const int max_outer = static_cast<int>(3 * n + 10);

  auto solve_passive = [&] {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[static_cast<std::size_t>(j)]) cols.push_back(j);
    }
    Eigen::MatrixXd sub(e.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = e.col(cols[k]);
    const Eigen::VectorXd zs = sub.colPivHouseholderQr().solve(f);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < cols.size(); ++k) z(cols[k]) = zs(static_cast<Eigen::Index>(k));
    return z;
  };

  for (int outer = 0; outer < max_outer; ++outer) {
    const Eigen::VectorXd w = e.transpose() * (f - e * u);
    Eigen::Index entering = -1;
    double best = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best) {
        best = w(j);
        entering = j;
      }
    }
    if (entering < 0) break;
    passive[static_cast<std::size_t>(entering)] = 1;

    while (true) {
      ++count;
      const Eigen::VectorXd z = solve_passive();
      bool all_positive = true;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0) {
          all_positive = false;
          const double denom = u(j) - z(j);
          if (denom > 0) alpha = std::min(alpha, u(j) / denom);
        }
      }
      if (all_positive) {
        u = z;
        break;
      }
      u += alpha * (z - u);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && u(j) <= 1e-15) {
          passive[static_cast<std::size_t>(j)] = 0;
          u(j) = 0.0;
        }
      }
    }
  }
  if (iterations) *iterations = count;
  return u;
}

// Least squares with linear inequalities,
//     minimise  ||A x - b||^2 / 2   subject to  G x <= k,
// for A of full column rank. A = QR turns it into a least-distance problem
// in z = R x - Q'b, which is solved through its NNLS dual. Throws
// qp_infeasible when the constraint set is empty.
inline QpSolution solve_ls_inequality(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                      const Eigen::MatrixXd& g, const Eigen::VectorXd& k) {
  const Eigen::Index n = a.cols();
  const Eigen::Index m = g.rows();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  const Eigen::VectorXd qtb = (qr.householderQ().transpose() * b).head(n);

  // G R^-1 via a triangular solve on the transpose.
  const Eigen::MatrixXd g_rinv =
      r.transpose().triangularView<Eigen::Lower>().solve(g.transpose()).transpose();
  const Eigen::MatrixXd e = -g_rinv;                     // E z >= h
  const Eigen::VectorXd h = g_rinv * qtb - k;

  QpSolution sol;
  if (m == 0) {
    sol.x = r.triangularView<Eigen::Upper>().solve(qtb);
    sol.multipliers = Eigen::VectorXd::Zero(0);
    return sol;
  }

  Eigen::MatrixXd stacked(n + 1, m);
  stacked.topRows(n) = e.transpose();
  stacked.row(n) = h.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs(n) = 1.0;
  const Eigen::VectorXd u = nnls(stacked, rhs, &sol.iterations);
  const Eigen::VectorXd resid = stacked * u - rhs;
  if (resid.norm() <= 1e-12 || !(1.0 - h.dot(u) > 0)) {
    throw error(errc::qp_infeasible, "inequality constraints admit no solution");
  }
  const Eigen::VectorXd z = -resid.head(n) / resid(n);
  sol.x = r.triangularView<Eigen::Upper>().solve(z + qtb);
  sol.multipliers = u / (1.0 - h.dot(u));
  return sol;
}

namespace detail {

// Monotonicity rows in the scaled variable: p'(t_i) <= 0 at every level and
// p(t_{i+1}) - p(t_i) <= 0 on every step. Rows are normalised.
inline Eigen::MatrixXd monotone_constraints(int degree, const Eigen::VectorXd& t) {
  const Eigen::Index levels = t.size();
  const Eigen::Index steps = std::max<Eigen::Index>(levels - 1, 0);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(levels + steps, degree + 1);
  for (Eigen::Index i = 0; i < levels; ++i) {
    double tk = 1.0;
    for (int k = 1; k <= degree; ++k, tk *= t(i)) g(i, k) = k * tk;
  }
  for (Eigen::Index i = 0; i < steps; ++i) {
    for (int k = 1; k <= degree; ++k) {
      g(levels + i, k) = std::pow(t(i + 1), k) - std::pow(t(i), k);
    }
  }
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    const double norm = g.row(r).norm();
    if (norm > 0) g.row(r) /= norm;
  }
  return g;
}

}  // namespace detail

// Least-squares polynomial of degree 3 or 4 constrained to be non-increasing
// on the grid.
inline FitResult fit_poly_monotone(int degree, const SurCurve& curve, double p = 0.75) {
  const ModelFamily family = detail::polynomial_family(degree);
  if (curve.values.size() != curve.grid.size() || curve.values.empty()) {
    throw error(errc::grid_mismatch, "curve does not cover its grid");
  }
  const auto d = detail::scaled_design(degree, curve);
  const Eigen::MatrixXd g = detail::monotone_constraints(degree, d.t);

  const auto sol = solve_ls_inequality(d.basis, d.target, g, Eigen::VectorXd::Zero(g.rows()));

  FitResult result;
  result.model = {family, detail::to_raw_coefficients(sol.x, d.shift, d.width)};
  result.converged = true;
  result.iterations = sol.iterations;
  result.residual_sse = sse_against(family, result.model.params, curve);
  result.p = p;
  const auto m = fit_metrics(result.model, curve, p);
  result.mae = m.mae;
  result.rmse = m.rmse;
  result.delta_p_sur_ea = m.delta_p_sur_ea;
  return result;
}

// ---------------------------------------------------------------------------
// Batch fitting and aggregation
// ---------------------------------------------------------------------------

inline FitResult fit_family(ModelFamily family, const SurCurve& curve, double p = 0.75,
                            const NlsOptions& options = {}) {
  switch (family) {
    case ModelFamily::Polynomial3: return fit_poly_monotone(3, curve, p);
    case ModelFamily::Polynomial4: return fit_poly_monotone(4, curve, p);
    default: return fit_nls(family, curve, std::nullopt, options, p);
  }
}

// One FitResult per requested family, in the order given. Per-family
// failures become statuses on their entry; the batch never aborts.
inline std::vector<FitResult> fit_all(const JndSamples& samples,
                                      std::span<const ModelFamily> families = kAllFamilies, double p = 0.75,
                                      const DistortionGrid& grid = kQpGrid, const NlsOptions& options = {}) {
  check_threshold(p);
  const SurCurve curve = compute_empirical_sur(samples, grid);
  std::vector<FitResult> results;
  results.reserve(families.size());
  for (ModelFamily family : families) {
    FitResult r;
    try {
      r = fit_family(family, curve, p, options);
    } catch (const error& e) {
      r = FitResult{};
      r.model = initial_guess(family, curve);
      if (family == ModelFamily::Logistic4) r.model.params = detail::canonical_logistic4(r.model.params);
      r.p = p;
      r.converged = false;
      r.status = e.code() == errc::degenerate_curve ? FitStatus::degenerate : FitStatus::failed;
      r.message = e.what();
      r.residual_sse = sse_against(family, r.model.params, curve);
      const auto m = fit_metrics(r.model, curve, p);
      r.mae = m.mae;
      r.rmse = m.rmse;
      r.delta_p_sur_ea = m.delta_p_sur_ea;
    }
    r.video_id = samples.video_id;
    r.resolution = samples.resolution;
    results.push_back(std::move(r));
  }
  return results;
}

struct ModelTableRow {
  ModelFamily family;
  std::size_t count = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double delta_p_sur_ea = 0.0;
};

// Per-family arithmetic means, rows in table order, families absent from the
// input omitted.
inline std::vector<ModelTableRow> aggregate_model_table(std::span<const FitResult> results) {
  if (results.empty()) throw error(errc::empty_input, "no fit results to aggregate");
  std::vector<ModelTableRow> rows;
  for (ModelFamily family : kAllFamilies) {
    ModelTableRow row{family};
    for (const auto& r : results) {
      if (r.family() != family) continue;
      ++row.count;
      row.mae += r.mae;
      row.rmse += r.rmse;
      row.delta_p_sur_ea += r.delta_p_sur_ea;
    }
    if (row.count == 0) continue;
    const double n = static_cast<double>(row.count);
    row.mae /= n;
    row.rmse /= n;
    row.delta_p_sur_ea /= n;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace surkit
