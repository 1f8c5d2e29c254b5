#pragma once

// Epsilon-insensitive support vector regression with an RBF kernel, plus the
// standardisation and k-fold machinery the prediction pipeline needs.
//
// The dual is the usual 2l-variable form
//
//   min  1/2 a' Q a + p' a    s.t.  s' a = 0,  0 <= a <= C
//
// with a = (alpha, alpha*), s = (+1.., -1..), p = (eps - y, eps + y) and
// Q_ij = s_i s_j k(x_i, x_j). It is solved by SMO with maximal-violating-pair
// working-set selection; the regression coefficient of sample i is
// alpha_i - alpha*_i.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <list>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surkit/error.hpp"
#include "surkit/random.hpp"

namespace surkit {

using Matrix = Eigen::MatrixXd;  // one sample per row
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Standardisation
// ---------------------------------------------------------------------------

// Per-column mean and population standard deviation. Constant columns keep a
// scale of 1 and therefore standardise to 0.
struct Standardizer {
  Vector mean;
  Vector scale;

  Eigen::Index dimension() const noexcept { return mean.size(); }

  Vector apply(const Vector& x) const {
    if (x.size() != mean.size()) {
      throw error(errc::dimension_mismatch, "expected " + std::to_string(mean.size()) + " features, got " +
                                                std::to_string(x.size()));
    }
    return (x - mean).cwiseQuotient(scale);
  }

  Matrix apply_rows(const Matrix& x) const {
    if (x.cols() != mean.size()) {
      throw error(errc::dimension_mismatch, "expected " + std::to_string(mean.size()) + " features, got " +
                                                std::to_string(x.cols()));
    }
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

inline Standardizer standardize_fit(const Matrix& x) {
  if (x.rows() == 0) throw error(errc::empty_matrix, "cannot standardise an empty matrix");
  Standardizer s;
  const double n = static_cast<double>(x.rows());
  s.mean = x.colwise().sum().transpose() / n;
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 1.0;
  }
  return s;
}

// ---------------------------------------------------------------------------
// SVR
// ---------------------------------------------------------------------------

enum class WorkingSet {
  max_violating_pair,  // first-order: both indices by maximal KKT violation
  second_order,        // i by maximal violation, j by largest guaranteed decrease
};

struct SvrHyperparams {
  double c = 10.0;
  double epsilon = 0.01;
  std::optional<double> gamma;  // nullopt = "auto": 1 / (n_features * Var(X))
  double tolerance = 1e-4;      // bound on the maximal KKT violation
  int max_passes = 500;         // iteration cap, in units of 2l pair updates
  WorkingSet working_set = WorkingSet::second_order;
  bool shrinking = true;

  void validate() const {
    if (!(c > 0)) throw error(errc::invalid_hyperparams, "C must be positive");
    if (!(epsilon >= 0)) throw error(errc::invalid_hyperparams, "epsilon must be non-negative");
    if (gamma && !(*gamma > 0)) throw error(errc::invalid_hyperparams, "gamma must be positive");
    if (!(tolerance > 0)) throw error(errc::invalid_hyperparams, "tolerance must be positive");
    if (max_passes <= 0) throw error(errc::invalid_hyperparams, "max_passes must be positive");
  }
};

struct SvrTrainInfo {
  long iterations = 0;
  double max_kkt_violation = 0.0;
  bool reached_tolerance = false;
  // Dual objective (maximisation sign) at the end of every pass of 2l updates
  // and at termination.
  std::vector<double> objective_trace;
};

struct SvrModel {
  Standardizer standardizer;
  Matrix support;             // standardised support vectors, one per row
  std::vector<double> coef;   // alpha_i - alpha*_i, within [-C, C]
  double bias = 0.0;
  double gamma = 1.0;
  double c = 0.0;
  SvrTrainInfo info;
};

namespace detail {

// Rows of the l x l kernel matrix, computed on demand and kept in an LRU
// cache bounded by `budget_bytes`.
class KernelRows {
 public:
  KernelRows(const Matrix& x, double gamma, std::size_t budget_bytes = std::size_t{256} << 20)
      : x_(x), gamma_(gamma), norms_(x.rowwise().squaredNorm()) {
    const std::size_t row_bytes = static_cast<std::size_t>(std::max<Eigen::Index>(x.rows(), 1)) * sizeof(double);
    capacity_ = std::max<std::size_t>(2, budget_bytes / row_bytes);
    slots_.resize(static_cast<std::size_t>(x.rows()));
  }

  const std::vector<double>& row(Eigen::Index i) {
    auto& slot = slots_[static_cast<std::size_t>(i)];
    if (slot.cached) {
      lru_.splice(lru_.begin(), lru_, slot.position);
      return slot.values;
    }
    if (lru_.size() >= capacity_) {
      const Eigen::Index evict = lru_.back();
      lru_.pop_back();
      auto& old = slots_[static_cast<std::size_t>(evict)];
      old.cached = false;
      std::vector<double>().swap(old.values);
    }
    const Vector dots = x_ * x_.row(i).transpose();
    slot.values.resize(static_cast<std::size_t>(x_.rows()));
    for (Eigen::Index k = 0; k < x_.rows(); ++k) {
      const double d2 = std::max(0.0, norms_(i) + norms_(k) - 2.0 * dots(k));
      slot.values[static_cast<std::size_t>(k)] = std::exp(-gamma_ * d2);
    }
    slot.values[static_cast<std::size_t>(i)] = 1.0;
    lru_.push_front(i);
    slot.position = lru_.begin();
    slot.cached = true;
    return slot.values;
  }

 private:
  struct Slot {
    bool cached = false;
    std::vector<double> values;
    std::list<Eigen::Index>::iterator position;
  };

  const Matrix& x_;
  double gamma_;
  Vector norms_;
  std::size_t capacity_;
  std::vector<Slot> slots_;
  std::list<Eigen::Index> lru_;
};

inline double auto_gamma(const Matrix& standardized) {
  const double n = static_cast<double>(standardized.size());
  const double mean = standardized.sum() / n;
  const double var = (standardized.array() - mean).square().sum() / n;
  const double features = static_cast<double>(standardized.cols());
  return var > 0 ? 1.0 / (features * var) : 1.0 / features;
}

}  // namespace detail

// Trains an epsilon-SVR on unscaled targets. Features are standardised with
// statistics of `x`, which the model keeps for prediction.
inline SvrModel svr_train(const Matrix& x, std::span<const double> y, const SvrHyperparams& hyper = {}) {
  hyper.validate();
  const Eigen::Index l = x.rows();
  if (l == 0) throw error(errc::empty_matrix, "no training samples");
  if (static_cast<std::size_t>(l) != y.size()) {
    throw error(errc::dimension_mismatch, std::to_string(l) + " rows but " + std::to_string(y.size()) + " targets");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw error(errc::invalid_params, "non-finite regression target");
  }

  SvrModel model;
  model.standardizer = standardize_fit(x);
  const Matrix xs = model.standardizer.apply_rows(x);
  model.gamma = hyper.gamma.value_or(detail::auto_gamma(xs));
  model.c = hyper.c;

  const auto lu = static_cast<std::size_t>(l);
  const std::size_t n2 = 2 * lu;
  const double c = hyper.c;
  std::vector<double> alpha(n2, 0.0);
  std::vector<double> grad(n2);
  std::vector<double> linear(n2);
  std::vector<signed char> sign(n2);
  for (std::size_t i = 0; i < lu; ++i) {
    linear[i] = hyper.epsilon - y[i];
    linear[i + lu] = hyper.epsilon + y[i];
    sign[i] = 1;
    sign[i + lu] = -1;
  }
  grad = linear;

  detail::KernelRows kernel(xs, model.gamma);
  auto in_up = [&](std::size_t t) { return sign[t] > 0 ? alpha[t] < c : alpha[t] > 0; };
  auto in_low = [&](std::size_t t) { return sign[t] > 0 ? alpha[t] > 0 : alpha[t] < c; };
  // Full gradient from scratch; used after variables were shrunk away.
  auto reconstruct_gradient = [&] {
    grad = linear;
    for (std::size_t s = 0; s < n2; ++s) {
      if (alpha[s] == 0.0) continue;
      const auto& k = kernel.row(static_cast<Eigen::Index>(s % lu));
      const double d = alpha[s] * sign[s];
      for (std::size_t t = 0; t < lu; ++t) grad[t] += k[t] * d;
      for (std::size_t t = 0; t < lu; ++t) grad[lu + t] -= k[t] * d;
    }
  };
  auto exact_objective = [&] {
    double acc = 0.0;
    for (std::size_t t = 0; t < n2; ++t) acc += alpha[t] * (grad[t] + linear[t]);
    return -0.5 * acc;
  };

  // Indices still being optimised, kept in increasing order so that ties
  // resolve to the lowest index among them.
  std::vector<std::size_t> active(n2);
  std::iota(active.begin(), active.end(), std::size_t{0});
  bool unshrunk = false;
  const long shrink_interval = static_cast<long>(std::min<std::size_t>(lu, 1000));
  long shrink_counter = shrink_interval;

  auto shrink = [&] {
    double gmax1 = -std::numeric_limits<double>::infinity();  // max -sG over I_up
    double gmax2 = -std::numeric_limits<double>::infinity();  // max  sG over I_low
    for (std::size_t t : active) {
      if (in_up(t)) gmax1 = std::max(gmax1, -sign[t] * grad[t]);
      if (in_low(t)) gmax2 = std::max(gmax2, sign[t] * grad[t]);
    }
    if (!unshrunk && gmax1 + gmax2 <= 10 * hyper.tolerance) {
      unshrunk = true;
      reconstruct_gradient();
      active.resize(n2);
      std::iota(active.begin(), active.end(), std::size_t{0});
    }
    std::erase_if(active, [&](std::size_t t) {
      if (alpha[t] >= c) return sign[t] > 0 ? -grad[t] > gmax1 : -grad[t] > gmax2;
      if (alpha[t] <= 0) return sign[t] > 0 ? grad[t] > gmax2 : grad[t] > gmax1;
      return false;
    });
  };

  const long max_iterations = static_cast<long>(hyper.max_passes) * static_cast<long>(n2);
  const long pass_length = static_cast<long>(n2);
  constexpr double tau = 1e-12;
  SvrTrainInfo& info = model.info;
  double f = 0.0;  // minimisation-sign objective, updated per step

  while (true) {
    if (hyper.shrinking && --shrink_counter == 0) {
      shrink_counter = shrink_interval;
      shrink();
    }
    // i: maximal violator in I_up. j: minimal violator in I_low (first
    // order) or the I_low index with the largest second-order decrease.
    // Strict comparisons keep the lowest index on ties.
    std::ptrdiff_t i = -1, j = -1;
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    for (std::size_t t : active) {
      const double v = -sign[t] * grad[t];
      if (v > g_max && in_up(t)) {
        g_max = v;
        i = static_cast<std::ptrdiff_t>(t);
      }
      if (v < g_min && in_low(t)) {
        g_min = v;
        j = static_cast<std::ptrdiff_t>(t);
      }
    }
    info.max_kkt_violation = (i < 0 || j < 0) ? 0.0 : g_max - g_min;
    if (i < 0 || j < 0 || info.max_kkt_violation <= hyper.tolerance) {
      if (active.size() == n2) {
        info.reached_tolerance = true;
        break;
      }
      // Converged on the shrunk problem; verify on the full one.
      reconstruct_gradient();
      active.resize(n2);
      std::iota(active.begin(), active.end(), std::size_t{0});
      shrink_counter = shrink_interval + 1;  // select on the full set before shrinking again
      continue;
    }
    if (info.iterations >= max_iterations) break;
    ++info.iterations;

    const auto ui = static_cast<std::size_t>(i);
    const auto& ki = kernel.row(static_cast<Eigen::Index>(ui % lu));
    if (hyper.working_set == WorkingSet::second_order) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t t : active) {
        const double b = g_max + sign[t] * grad[t];
        if (b <= 0 || !in_low(t)) continue;
        double a = 2.0 - 2.0 * ki[t < lu ? t : t - lu];
        if (a <= 0) a = tau;
        const double gain = -(b * b) / a;
        if (gain < best) {
          best = gain;
          j = static_cast<std::ptrdiff_t>(t);
        }
      }
    }
    const auto uj = static_cast<std::size_t>(j);
    const double kij = ki[uj % lu];
    const double old_i = alpha[ui];
    const double old_j = alpha[uj];
    double quad = 2.0 - 2.0 * kij;
    if (quad <= 0) quad = tau;

    if (sign[ui] != sign[uj]) {
      const double delta = (-grad[ui] - grad[uj]) / quad;
      const double diff = alpha[ui] - alpha[uj];
      alpha[ui] += delta;
      alpha[uj] += delta;
      if (diff > 0) {
        if (alpha[uj] < 0) {
          alpha[uj] = 0;
          alpha[ui] = diff;
        }
      } else if (alpha[ui] < 0) {
        alpha[ui] = 0;
        alpha[uj] = -diff;
      }
      if (diff > 0) {
        if (alpha[ui] > c) {
          alpha[ui] = c;
          alpha[uj] = c - diff;
        }
      } else if (alpha[uj] > c) {
        alpha[uj] = c;
        alpha[ui] = c + diff;
      }
    } else {
      const double delta = (grad[ui] - grad[uj]) / quad;
      const double sum = alpha[ui] + alpha[uj];
      alpha[ui] -= delta;
      alpha[uj] += delta;
      if (sum > c) {
        if (alpha[ui] > c) {
          alpha[ui] = c;
          alpha[uj] = sum - c;
        }
      } else if (alpha[uj] < 0) {
        alpha[uj] = 0;
        alpha[ui] = sum;
      }
      if (sum > c) {
        if (alpha[uj] > c) {
          alpha[uj] = c;
          alpha[ui] = sum - c;
        }
      } else if (alpha[ui] < 0) {
        alpha[ui] = 0;
        alpha[uj] = sum;
      }
    }

    const double ai = alpha[ui] - old_i;
    const double aj = alpha[uj] - old_j;
    // exact change of 1/2 a'Qa + p'a over the two coordinates
    const double qij = sign[ui] * sign[uj] * kij;
    f += ai * grad[ui] + aj * grad[uj] + 0.5 * (ai * ai + aj * aj) + ai * aj * qij;

    const double di = ai * sign[ui];
    const double dj = aj * sign[uj];
    // Fetching kj may evict ki, so ki is consumed first.
    auto update = [&](const std::vector<double>& k, double d) {
      if (active.size() == n2) {
        for (std::size_t t = 0; t < lu; ++t) grad[t] += k[t] * d;
        for (std::size_t t = 0; t < lu; ++t) grad[lu + t] -= k[t] * d;
      } else {
        for (std::size_t t : active) grad[t] += sign[t] * k[t < lu ? t : t - lu] * d;
      }
    };
    if (di != 0.0) update(ki, di);
    if (dj != 0.0) update(kernel.row(static_cast<Eigen::Index>(uj % lu)), dj);
    if (info.iterations % pass_length == 0) info.objective_trace.push_back(-f);
  }
  if (active.size() != n2) {
    reconstruct_gradient();
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n2; ++t) {
      const double v = -sign[t] * grad[t];
      if (in_up(t)) g_max = std::max(g_max, v);
      if (in_low(t)) g_min = std::min(g_min, v);
    }
    info.max_kkt_violation = g_max - g_min;
  }
  info.objective_trace.push_back(exact_objective());

  // Bias: average over free variables, midpoint of the feasible interval
  // when none is free.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n2; ++t) {
    const double yg = sign[t] * grad[t];
    const bool at_upper = alpha[t] >= c;
    const bool at_lower = alpha[t] <= 0;
    if (at_upper) {
      if (sign[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (at_lower) {
      if (sign[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : 0.5 * (ub + lb);
  model.bias = -rho;

  std::vector<Eigen::Index> support_rows;
  for (std::size_t i = 0; i < lu; ++i) {
    const double beta = alpha[i] - alpha[i + lu];
    if (beta != 0.0) {
      support_rows.push_back(static_cast<Eigen::Index>(i));
      model.coef.push_back(beta);
    }
  }
  model.support.resize(static_cast<Eigen::Index>(support_rows.size()), xs.cols());
  for (std::size_t k = 0; k < support_rows.size(); ++k) {
    model.support.row(static_cast<Eigen::Index>(k)) = xs.row(support_rows[k]);
  }
  return model;
}

inline double svr_predict(const SvrModel& model, const Vector& x) {
  const Vector xs = model.standardizer.apply(x);
  double acc = model.bias;
  for (Eigen::Index k = 0; k < model.support.rows(); ++k) {
    acc += model.coef[static_cast<std::size_t>(k)] *
           std::exp(-model.gamma * (model.support.row(k).transpose() - xs).squaredNorm());
  }
  return acc;
}

inline std::vector<double> svr_predict_rows(const SvrModel& model, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) out[static_cast<std::size_t>(r)] = svr_predict(model, Vector(x.row(r).transpose()));
  return out;
}

// ---------------------------------------------------------------------------
// K-fold assignment
// ---------------------------------------------------------------------------

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignment;

  std::vector<std::string> fold(int index) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignment) {
      if (f == index) out.push_back(id);
    }
    return out;
  }
};

// Seeded Fisher-Yates shuffle of the item order, then round-robin folds.
inline FoldAssignment kfold_split(std::span<const std::string> items, int k, std::uint64_t seed) {
  if (k < 2) throw error(errc::too_few_items, "k-fold needs k >= 2");
  if (items.size() < static_cast<std::size_t>(k)) {
    throw error(errc::too_few_items, std::to_string(items.size()) + " items for " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Xoshiro256 rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  FoldAssignment out{k, seed, {}};
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto [it, inserted] = out.assignment.emplace(items[order[pos]], static_cast<int>(pos % static_cast<std::size_t>(k)));
    if (!inserted) throw error(errc::invalid_params, "duplicate item id '" + it->first + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hyperparameter search
// ---------------------------------------------------------------------------

// 3 x 3 x 3 log grid over (C, epsilon, gamma multiplier of "auto"), scored by
// mean absolute error of an inner k-fold split; the first best point wins.
inline SvrHyperparams grid_search_hyperparams(const Matrix& x, std::span<const double> y,
                                              const SvrHyperparams& base = {}, int inner_folds = 3,
                                              std::uint64_t seed = 0) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
  const auto folds = kfold_split(ids, inner_folds, seed);

  const double auto_g = detail::auto_gamma(standardize_fit(x).apply_rows(x));
  SvrHyperparams best = base;
  double best_score = std::numeric_limits<double>::infinity();
  for (double c : {base.c / 10, base.c, base.c * 10}) {
    for (double eps : {base.epsilon / 10, base.epsilon, base.epsilon * 10}) {
      for (double gm : {0.1, 1.0, 10.0}) {
        SvrHyperparams h = base;
        h.c = c;
        h.epsilon = eps;
        h.gamma = auto_g * gm;
        double abs_err = 0;
        for (int f = 0; f < inner_folds; ++f) {
          std::vector<Eigen::Index> train, test;
          for (std::size_t i = 0; i < n; ++i) {
            (folds.assignment.at(ids[i]) == f ? test : train).push_back(static_cast<Eigen::Index>(i));
          }
          Matrix xt(static_cast<Eigen::Index>(train.size()), x.cols());
          std::vector<double> yt(train.size());
          for (std::size_t r = 0; r < train.size(); ++r) {
            xt.row(static_cast<Eigen::Index>(r)) = x.row(train[r]);
            yt[r] = y[static_cast<std::size_t>(train[r])];
          }
          const auto m = svr_train(xt, yt, h);
          for (auto r : test) abs_err += std::abs(svr_predict(m, Vector(x.row(r).transpose())) - y[static_cast<std::size_t>(r)]);
        }
        const double score = abs_err / static_cast<double>(n);
        if (score < best_score) {
          best_score = score;
          best = h;
        }
      }
    }
  }
  return best;
}

}  // namespace surkit
