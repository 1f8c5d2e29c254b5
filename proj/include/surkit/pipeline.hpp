#pragma once

// SUR-curve prediction from video features and its cross-validated
// evaluation.
//
// Three predictors:
//   baseline  one SVR maps (masking, qd(qp), normalised qp) to SUR(qp); the
//             predicted curve is assembled point by point and may rise.
//   src       one SVR per model parameter, from the masking vector only.
//   src_pvs   as src, with every per-QP qd vector appended to the input.
// The parameter-driven curves are sampled from a projected model and are
// therefore non-increasing by construction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surkit/empirical.hpp"
#include "surkit/error.hpp"
#include "surkit/features.hpp"
#include "surkit/fitting.hpp"
#include "surkit/regression.hpp"
#include "surkit/surmodels.hpp"

namespace surkit {

enum class PredictorMode { baseline, src, src_pvs };

inline constexpr std::string_view to_string(PredictorMode m) noexcept {
  switch (m) {
    case PredictorMode::baseline: return "baseline";
    case PredictorMode::src: return "src";
    case PredictorMode::src_pvs: return "src-pvs";
  }
  return "?";
}

inline std::optional<PredictorMode> parse_mode(std::string_view s) {
  if (s == "baseline") return PredictorMode::baseline;
  if (s == "src") return PredictorMode::src;
  if (s == "src-pvs" || s == "src_pvs" || s == "src+pvs") return PredictorMode::src_pvs;
  return std::nullopt;
}

struct PredictorConfig {
  PredictorMode mode = PredictorMode::src;
  ModelFamily family = ModelFamily::Gaussian;  // predicted family; also the |P-A| reference for baseline
  double p = 0.75;
  SvrHyperparams hyper;
  bool tune = true;  // parameter-driven: pick C, epsilon, gamma per regressor by inner CV on the training fold
  int folds = 5;
  std::uint64_t seed = 0;
  DistortionGrid grid = kQpGrid;
  NlsOptions nls;
};

// "baseline", "src/Gaussian", "src-pvs/Logistic2", ...
inline std::string model_label(const PredictorConfig& c) {
  if (c.mode == PredictorMode::baseline) return "baseline";
  return std::string(to_string(c.mode)) + "/" + std::string(family_name(c.family));
}

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

inline Vector build_features(const FeatureRecord& rec, PredictorMode mode, std::optional<int> qp = std::nullopt,
                             const DistortionGrid& grid = kQpGrid) {
  const auto h = static_cast<Eigen::Index>(rec.masking.size());
  auto require_pvs = [&] {
    if (!rec.pvs) {
      throw error(errc::missing_pvs_features,
                  "video '" + rec.video_id + "' (" + rec.resolution + ") has no pvs features");
    }
    if (rec.pvs->size() != grid.size()) {
      throw error(errc::dimension_mismatch, "video '" + rec.video_id + "' pvs does not cover the grid");
    }
  };
  switch (mode) {
    case PredictorMode::src: return Eigen::Map<const Vector>(rec.masking.data(), h);
    case PredictorMode::src_pvs: {
      require_pvs();
      const std::size_t d = rec.pvs->front().size();
      Vector out(h + static_cast<Eigen::Index>(grid.size() * d));
      out.head(h) = Eigen::Map<const Vector>(rec.masking.data(), h);
      Eigen::Index k = h;
      for (const auto& qd : *rec.pvs) {
        if (qd.size() != d) throw error(errc::dimension_mismatch, "qd vectors differ in length");
        for (double v : qd) out(k++) = v;
      }
      return out;
    }
    case PredictorMode::baseline: {
      if (!qp) throw error(errc::unknown_qp, "baseline features need a QP");
      if (!grid.contains(*qp)) throw error(errc::unknown_qp, "QP " + std::to_string(*qp) + " is not on the grid");
      require_pvs();
      const auto& qd = (*rec.pvs)[grid.index(*qp)];
      Vector out(h + static_cast<Eigen::Index>(qd.size()) + 1);
      out.head(h) = Eigen::Map<const Vector>(rec.masking.data(), h);
      for (std::size_t j = 0; j < qd.size(); ++j) out(h + static_cast<Eigen::Index>(j)) = qd[j];
      const double span = grid.max() - grid.min();
      out(out.size() - 1) = span > 0 ? (*qp - grid.min()) / span : 0.0;
      return out;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Parameter-driven predictor
// ---------------------------------------------------------------------------

// Min-max scaling of one regression target to [0, 1]; constant targets map
// to 0 and back to the constant.
struct TargetScaler {
  double lo = 0.0;
  double hi = 1.0;

  static TargetScaler fit(std::span<const double> y) {
    const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
    return {*mn, *mx};
  }
  double scale(double v) const { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }
  double unscale(double v) const { return hi > lo ? lo + v * (hi - lo) : lo; }
};

// Projects predicted parameters onto the family's validity region.
inline std::vector<double> project_params(ModelFamily f, std::vector<double> p) {
  constexpr double floor = 1e-3;
  switch (f) {
    case ModelFamily::Gaussian:
    case ModelFamily::Logistic2:
    case ModelFamily::Gumbel: p[1] = std::max(p[1], floor); break;
    case ModelFamily::Logistic4:
      p[1] = std::max(p[1], floor);
      p[2] = std::min(p[2], -floor);
      break;
    case ModelFamily::Weibull:
      p[0] = std::max(p[0], floor);
      p[1] = std::max(p[1], floor);
      break;
    case ModelFamily::Rayleigh: p[0] = std::max(p[0], floor); break;
    default: break;
  }
  return p;
}

struct ParamTrainingItem {
  FeatureRecord features;
  FitResult fit;  // fit of the predictor's family on the video's empirical curve
};

struct ParamPredictor {
  ModelFamily family = ModelFamily::Gaussian;
  PredictorMode mode = PredictorMode::src;
  DistortionGrid grid = kQpGrid;
  double p = 0.75;
  Eigen::Index feature_dim = 0;
  std::vector<SvrModel> regressors;  // one per parameter
  std::vector<TargetScaler> scalers;
  std::vector<std::string> excluded;  // training videos dropped for unconverged fits
};

inline ParamPredictor train_param_predictor(std::span<const ParamTrainingItem> train, const PredictorConfig& config) {
  if (config.mode == PredictorMode::baseline) {
    throw error(errc::invalid_params, "train_param_predictor needs a parameter-driven mode");
  }
  if (!is_distribution(config.family)) {
    throw error(errc::invalid_params, std::string(family_name(config.family)) +
                                          " cannot be predicted parameter-wise: its curve is not monotone for "
                                          "arbitrary coefficients");
  }
  ParamPredictor pred;
  pred.family = config.family;
  pred.mode = config.mode;
  pred.grid = config.grid;
  pred.p = config.p;

  std::vector<const ParamTrainingItem*> usable;
  for (const auto& item : train) {
    if (item.fit.family() != config.family || !item.fit.converged) {
      pred.excluded.push_back(item.features.video_id);
      continue;
    }
    usable.push_back(&item);
  }
  if (usable.size() < 3) {
    throw error(errc::unconverged_fit_in_training, std::to_string(usable.size()) +
                                                       " training videos have a converged " +
                                                       std::string(family_name(config.family)) + " fit; need 3");
  }

  Matrix x;
  for (std::size_t r = 0; r < usable.size(); ++r) {
    const Vector f = build_features(usable[r]->features, config.mode, std::nullopt, config.grid);
    if (r == 0) x.resize(static_cast<Eigen::Index>(usable.size()), f.size());
    if (f.size() != x.cols()) throw error(errc::dimension_mismatch, "feature dimension differs between videos");
    x.row(static_cast<Eigen::Index>(r)) = f.transpose();
  }
  pred.feature_dim = x.cols();

  const std::size_t np = param_count(config.family);
  for (std::size_t j = 0; j < np; ++j) {
    std::vector<double> y(usable.size());
    for (std::size_t r = 0; r < usable.size(); ++r) y[r] = usable[r]->fit.model.params[j];
    const auto scaler = TargetScaler::fit(y);
    for (double& v : y) v = scaler.scale(v);
    const auto hyper = config.tune ? grid_search_hyperparams(x, y, config.hyper, 3, derive_seed(config.seed, j)) : config.hyper;
    pred.regressors.push_back(svr_train(x, y, hyper));
    pred.scalers.push_back(scaler);
  }
  return pred;
}

struct SurPrediction {
  SurModel model;  // empty params for baseline predictions
  SurCurve curve;
  int p_sur = 0;
};

inline SurPrediction predict_sur(const ParamPredictor& pred, const FeatureRecord& rec) {
  const Vector f = build_features(rec, pred.mode, std::nullopt, pred.grid);
  if (f.size() != pred.feature_dim) {
    throw error(errc::dimension_mismatch, "expected " + std::to_string(pred.feature_dim) + " features, got " +
                                              std::to_string(f.size()));
  }
  std::vector<double> params;
  for (std::size_t j = 0; j < pred.regressors.size(); ++j) {
    params.push_back(pred.scalers[j].unscale(svr_predict(pred.regressors[j], f)));
  }
  SurPrediction out;
  out.model = {pred.family, project_params(pred.family, std::move(params))};
  out.curve = sample_curve(out.model, pred.grid, CurveKind::predicted);
  out.p_sur = analytic_p_sur(out.model, pred.p, pred.grid);
  return out;
}

// ---------------------------------------------------------------------------
// Baseline predictor
// ---------------------------------------------------------------------------

struct BaselineTrainingItem {
  FeatureRecord features;
  SurCurve empirical;
};

struct BaselinePredictor {
  DistortionGrid grid = kQpGrid;
  double p = 0.75;
  Eigen::Index feature_dim = 0;
  SvrModel regressor;
};

inline BaselinePredictor train_baseline(std::span<const BaselineTrainingItem> train, const PredictorConfig& config) {
  if (train.empty()) throw error(errc::empty_input, "no training videos");
  const auto& grid = config.grid;
  const auto levels = static_cast<Eigen::Index>(grid.size());
  Matrix x;
  std::vector<double> y;
  y.reserve(train.size() * grid.size());
  Eigen::Index row = 0;
  for (const auto& item : train) {
    if (!(item.empirical.grid == grid)) throw error(errc::grid_mismatch, "empirical curve grid differs");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Vector f = build_features(item.features, PredictorMode::baseline, grid.level(i), grid);
      if (row == 0) x.resize(static_cast<Eigen::Index>(train.size()) * levels, f.size());
      if (f.size() != x.cols()) throw error(errc::dimension_mismatch, "feature dimension differs between videos");
      x.row(row++) = f.transpose();
      y.push_back(item.empirical.values[i]);
    }
  }
  BaselinePredictor pred;
  pred.grid = grid;
  pred.p = config.p;
  pred.feature_dim = x.cols();
  pred.regressor = svr_train(x, y, config.hyper);
  return pred;
}

// Point-wise prediction clamped to [0, 1]; no monotonicity repair. p%SUR is
// the first level at or below p, saturating at the grid maximum.
inline SurPrediction predict_sur(const BaselinePredictor& pred, const FeatureRecord& rec) {
  SurPrediction out;
  out.curve = {pred.grid, std::vector<double>(pred.grid.size()), CurveKind::predicted};
  for (std::size_t i = 0; i < pred.grid.size(); ++i) {
    const Vector f = build_features(rec, PredictorMode::baseline, pred.grid.level(i), pred.grid);
    if (f.size() != pred.feature_dim) {
      throw error(errc::dimension_mismatch, "expected " + std::to_string(pred.feature_dim) + " features, got " +
                                                std::to_string(f.size()));
    }
    out.curve.values[i] = std::clamp(svr_predict(pred.regressor, f), 0.0, 1.0);
  }
  out.p_sur = first_level_at_or_below(out.curve, pred.p).level;
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct PredictionMetrics {
  double d_sur_pa = 0.0;   // MAE(predicted, analytic)
  double d_sur_pe = 0.0;   // MAE(predicted, empirical)
  double d_psur_pa = 0.0;  // |p%SUR_pred - p%SUR_analytic|
  double d_psur_pe = 0.0;  // |p%SUR_pred - p%SUR_empirical|
};

// Parametric curves (analytic, and predicted when `predicted_rule` is
// nearest) use the nearest-level p%SUR; empirical and point-wise predicted
// curves use the first level at or below p.
inline PredictionMetrics evaluate_prediction(const SurCurve& predicted, const SurCurve& analytic,
                                             const SurCurve& empirical, double p,
                                             PSurRule predicted_rule = PSurRule::nearest) {
  require_same_grid(predicted, analytic);
  require_same_grid(predicted, empirical);
  const int pp = curve_p_sur(predicted, p, predicted_rule);
  const int pa = nearest_level(analytic, p);
  const int pe = first_level_at_or_below(empirical, p).level;
  return {curve_mae(predicted, analytic), curve_mae(predicted, empirical), std::abs(double(pp - pa)),
          std::abs(double(pp - pe))};
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct LabeledVideo {
  FeatureRecord features;
  JndSamples annotations;
};

struct VideoPrediction {
  std::string video_id;
  std::string resolution;
  std::string model;
  int fold = 0;
  PredictionMetrics metrics;
  int predicted_p_sur = 0;
  int analytic_p_sur = 0;
  int empirical_p_sur = 0;
  std::size_t increases = 0;  // rising steps in the predicted curve
  std::vector<double> predicted_params;
};

struct ReportRow {
  std::string resolution;  // "ALL" for the mean over resolution rows
  std::string model;
  std::size_t n_videos = 0;
  PredictionMetrics means;
  std::size_t violating_curves = 0;  // predicted curves with at least one rise
};

struct PredictionReport {
  std::vector<ReportRow> rows;
  std::vector<VideoPrediction> videos;
  std::vector<std::string> warnings;
};

namespace detail {

inline ReportRow summarize_rows(const std::string& resolution, const std::string& model,
                                std::span<const VideoPrediction> rows) {
  ReportRow r{resolution, model, rows.size(), {}, 0};
  for (const auto& v : rows) {
    r.means.d_sur_pa += v.metrics.d_sur_pa;
    r.means.d_sur_pe += v.metrics.d_sur_pe;
    r.means.d_psur_pa += v.metrics.d_psur_pa;
    r.means.d_psur_pe += v.metrics.d_psur_pe;
    if (v.increases > 0) ++r.violating_curves;
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    r.means.d_sur_pa /= n;
    r.means.d_sur_pe /= n;
    r.means.d_psur_pa /= n;
    r.means.d_psur_pe /= n;
  }
  return r;
}

}  // namespace detail

// Per resolution group (in order of first appearance): fit ground truth for
// every video, split videos into folds, train on k-1 folds, evaluate the
// held-out fold. Adds an "ALL" row averaging the per-resolution means when
// more than one group is present.
inline PredictionReport cross_validate(std::span<const LabeledVideo> dataset, const PredictorConfig& config) {
  if (dataset.empty()) throw error(errc::empty_input, "no videos to cross-validate");
  check_threshold(config.p);
  config.hyper.validate();
  if (config.mode != PredictorMode::baseline && !is_distribution(config.family)) {
    throw error(errc::invalid_params, std::string(family_name(config.family)) +
                                          " cannot be predicted parameter-wise");
  }
  const std::string label = model_label(config);

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& res = dataset[i].annotations.resolution;
    if (!groups.count(res)) order.push_back(res);
    groups[res].push_back(i);
  }

  PredictionReport report;
  const ModelFamily fam[] = {config.family};
  for (const auto& res : order) {
    const auto& members = groups[res];
    if (members.size() < static_cast<std::size_t>(config.folds)) {
      throw error(errc::too_few_items, "resolution " + res + " has " + std::to_string(members.size()) +
                                           " videos for " + std::to_string(config.folds) + " folds");
    }
    // Ground truth per video.
    std::vector<SurCurve> empirical(members.size());
    std::vector<FitResult> fits(members.size());
    std::vector<std::string> ids(members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto& v = dataset[members[m]];
      if (v.features.video_id != v.annotations.video_id || v.features.resolution != v.annotations.resolution) {
        throw error(errc::invalid_params, "features and annotations are not aligned at '" +
                                              v.annotations.video_id + "'");
      }
      ids[m] = v.annotations.video_id;
      empirical[m] = compute_empirical_sur(v.annotations, config.grid);
      fits[m] = fit_all(v.annotations, fam, config.p, config.grid, config.nls).front();
      if (!fits[m].converged) {
        report.warnings.push_back(res + "/" + ids[m] + ": " + std::string(family_name(config.family)) +
                                  " fit did not converge (" + std::string(to_string(fits[m].status)) + ")");
      }
    }
    const auto folds = kfold_split(ids, config.folds, config.seed);

    std::vector<VideoPrediction> rows;
    for (int f = 0; f < config.folds; ++f) {
      std::vector<std::size_t> train_idx, test_idx;
      for (std::size_t m = 0; m < members.size(); ++m) {
        (folds.assignment.at(ids[m]) == f ? test_idx : train_idx).push_back(m);
      }
      auto evaluate = [&](std::size_t m, const SurPrediction& pred, PSurRule rule) {
        VideoPrediction vp;
        vp.video_id = ids[m];
        vp.resolution = res;
        vp.model = label;
        vp.fold = f;
        const SurCurve analytic = sample_curve(fits[m].model, config.grid);
        vp.metrics = evaluate_prediction(pred.curve, analytic, empirical[m], config.p, rule);
        vp.predicted_p_sur = pred.p_sur;
        vp.analytic_p_sur = nearest_level(analytic, config.p);
        vp.empirical_p_sur = first_level_at_or_below(empirical[m], config.p).level;
        vp.increases = count_increases(pred.curve);
        vp.predicted_params = pred.model.params;
        rows.push_back(std::move(vp));
      };

      if (config.mode == PredictorMode::baseline) {
        std::vector<BaselineTrainingItem> train;
        for (auto m : train_idx) train.push_back({dataset[members[m]].features, empirical[m]});
        const auto pred = train_baseline(train, config);
        for (auto m : test_idx) evaluate(m, predict_sur(pred, dataset[members[m]].features), PSurRule::first_at_or_below);
      } else {
        std::vector<ParamTrainingItem> train;
        for (auto m : train_idx) train.push_back({dataset[members[m]].features, fits[m]});
        const auto pred = train_param_predictor(train, config);
        for (const auto& id : pred.excluded) report.warnings.push_back(res + "/" + id + ": excluded from training (fold " + std::to_string(f) + ")");
        for (auto m : test_idx) evaluate(m, predict_sur(pred, dataset[members[m]].features), PSurRule::nearest);
      }
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.video_id < b.video_id; });
    report.rows.push_back(detail::summarize_rows(res, label, rows));
    report.videos.insert(report.videos.end(), rows.begin(), rows.end());
  }

  if (report.rows.size() > 1) {
    ReportRow all{"ALL", label, 0, {}, 0};
    for (const auto& r : report.rows) {
      all.n_videos += r.n_videos;
      all.violating_curves += r.violating_curves;
      all.means.d_sur_pa += r.means.d_sur_pa;
      all.means.d_sur_pe += r.means.d_sur_pe;
      all.means.d_psur_pa += r.means.d_psur_pa;
      all.means.d_psur_pe += r.means.d_psur_pe;
    }
    const double n = static_cast<double>(report.rows.size());
    all.means.d_sur_pa /= n;
    all.means.d_sur_pe /= n;
    all.means.d_psur_pa /= n;
    all.means.d_psur_pe /= n;
    report.rows.push_back(all);
  }
  return report;
}

}  // namespace surkit
