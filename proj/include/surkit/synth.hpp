#pragma once

// Synthetic viewer groups and feature sets with known ground truth.
//
// Every video draws its own parameters, subjects and feature noise from
// streams derived from (seed, video index), so any single video can be
// regenerated in isolation and datasets are byte-stable across platforms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "surkit/empirical.hpp"
#include "surkit/error.hpp"
#include "surkit/features.hpp"
#include "surkit/random.hpp"
#include "surkit/surmodels.hpp"

namespace surkit {

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const ParamRange&, const ParamRange&) = default;
};

// How a continuous latent JND becomes a grid level.
enum class Discretization {
  round_half_even,  // nearest level; the empirical curve then sits half a step left of the model
  ceil,             // smallest level >= latent; SUR_emp(x) estimates S(x) without offset
};

inline std::vector<ParamRange> default_ranges(ModelFamily f) {
  switch (f) {
    case ModelFamily::Gaussian: return {{15, 40}, {2, 8}};
    case ModelFamily::Logistic2: return {{15, 40}, {1.2, 4.5}};
    case ModelFamily::Logistic4: return {{0, 0.05}, {0.9, 0.95}, {-1.0, -0.25}, {15, 40}};
    case ModelFamily::Weibull: return {{18, 42}, {3, 9}};
    case ModelFamily::Gumbel: return {{15, 38}, {1.5, 5}};
    case ModelFamily::Rayleigh: return {{10, 28}};
    default: throw error(errc::invalid_params, std::string(family_name(f)) + " is not a distribution family");
  }
}

struct SynthSpec {
  std::size_t n_videos = 100;
  std::size_t subjects_per_video = 30;
  ModelFamily family = ModelFamily::Gaussian;
  std::vector<ParamRange> ranges = default_ranges(ModelFamily::Gaussian);  // one per natural parameter
  std::size_t masking_dim = 8;
  std::size_t qd_dim = 4;
  bool with_pvs = true;
  double noise = 0.0;  // std of additive Gaussian noise on every feature entry
  std::vector<std::string> resolutions = {"1080p"};
  DistortionGrid grid = kQpGrid;
  Discretization discretization = Discretization::round_half_even;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthVideo {
  FeatureRecord features;
  JndSamples annotations;
  SurModel truth;
};

namespace detail {

inline std::size_t extra_params(ModelFamily f) { return f == ModelFamily::Logistic4 ? 2 : 0; }

// Quantile of the latent JND distribution, i.e. the x with 1 - S(x) = u.
// Scale parameters may be 0 (point mass). Returns +-inf for mass that
// Logistic4 places outside the real line.
inline double latent_quantile(ModelFamily f, const std::vector<double>& p, double u) {
  switch (f) {
    case ModelFamily::Gaussian: return p[0] + p[1] * normal_quantile(u);
    case ModelFamily::Logistic2: return p[0] + p[1] * std::log(u / (1 - u));
    case ModelFamily::Logistic4: {
      const double b = p[0], l = p[1], k = p[2], x0 = p[3];
      if (u <= 1 - b - l) return -std::numeric_limits<double>::infinity();
      if (u >= 1 - b) return std::numeric_limits<double>::infinity();
      if (k == 0) return x0;
      return x0 - std::log(l / (1 - b - u) - 1) / k;
    }
    case ModelFamily::Weibull: return p[0] * std::pow(-std::log1p(-u), 1 / p[1]);
    case ModelFamily::Gumbel: return p[0] - p[1] * std::log(-std::log(u));
    case ModelFamily::Rayleigh: return p[0] * std::sqrt(-2 * std::log1p(-u));
    default: break;
  }
  throw error(errc::invalid_params, std::string(family_name(f)) + " is not a distribution family");
}

inline double round_half_even(double x) {
  const double r = std::round(x);
  if (std::abs(x - std::trunc(x)) == 0.5) return 2.0 * std::round(x / 2.0);
  return r;
}

struct Summary {
  double location;  // median
  double scale;     // IQR / 1.349, floored
};

inline Summary summarize(const SurModel& m) {
  const double med = latent_quantile(m.family, m.params, 0.5);
  const double iqr = latent_quantile(m.family, m.params, 0.75) - latent_quantile(m.family, m.params, 0.25);
  return {med, std::max(iqr / 1.349, 1e-3)};
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Smooth masking map. The first entries carry the normalised location and
// scale (and Logistic4's floor and amplitude) directly, which makes the map
// injective on any parameter range.
inline std::vector<double> masking_map(const SurModel& m, std::size_t dim, const DistortionGrid& grid) {
  const Summary s = summarize(m);
  const double u = s.location / static_cast<double>(std::max(grid.max(), 1));
  const double v = s.scale / 10.0;
  std::vector<double> base{u, v};
  if (m.family == ModelFamily::Logistic4) {
    base.push_back(m.params[0]);
    base.push_back(m.params[1]);
  }
  const double pi = std::numbers::pi;
  const std::array<double, 6> smooth{u * v, u * u, v * v, std::sin(pi * u), std::cos(pi * v), std::exp(-(u + v))};
  std::vector<double> out;
  out.reserve(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    if (i < base.size()) out.push_back(base[i]);
    else if (i - base.size() < smooth.size()) out.push_back(smooth[i - base.size()]);
    else {
      const double w = static_cast<double>(i - base.size() - smooth.size() + 2);
      out.push_back(std::sin(w * pi * u + v));
    }
  }
  return out;
}

// Quality degradation of the encode at `qp`, as functions of the position of
// qp relative to the viewer group's JND distribution.
inline std::vector<double> qd_map(double z, std::size_t dim) {
  std::vector<double> out;
  out.reserve(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    switch (d) {
      case 0: out.push_back(logistic(z)); break;
      case 1: out.push_back(std::exp(-0.5 * z * z)); break;
      case 2: out.push_back(z / (1 + std::abs(z))); break;
      case 3: out.push_back(logistic(0.5 * z)); break;
      default: out.push_back(logistic(static_cast<double>(d - 2) * z)); break;
    }
  }
  return out;
}

inline std::uint64_t video_seed(const SynthSpec& spec, std::size_t video_index) {
  return derive_seed(spec.seed, video_index);
}

inline std::string video_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%04zu", index + 1);
  return buf;
}

}  // namespace detail

inline void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw error(errc::invalid_params, "synth spec: " + what); };
  if (!is_distribution(family)) fail(std::string(family_name(family)) + " has no latent distribution to sample");
  if (n_videos == 0) fail("n_videos must be positive");
  if (subjects_per_video == 0) fail("subjects_per_video must be positive");
  if (resolutions.empty()) fail("at least one resolution is required");
  if (!(noise >= 0) || !std::isfinite(noise)) fail("noise must be finite and >= 0");
  if (masking_dim < 2 + detail::extra_params(family)) {
    fail("masking_dim must be at least " + std::to_string(2 + detail::extra_params(family)) + " for " +
         std::string(family_name(family)));
  }
  if (with_pvs && qd_dim == 0) fail("qd_dim must be positive when pvs features are generated");
  if (ranges.size() != param_count(family)) {
    fail(std::string(family_name(family)) + " needs " + std::to_string(param_count(family)) + " ranges");
  }
  for (const auto& r : ranges) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) fail("every range needs finite lo <= hi");
  }
  const double gmin = grid.min(), gmax = grid.max();
  auto in_grid = [&](const ParamRange& r, const char* name) {
    if (r.lo < gmin || r.hi > gmax) fail(std::string(name) + " range must lie within the grid");
  };
  auto non_negative = [&](const ParamRange& r, const char* name) {
    if (r.lo < 0) fail(std::string(name) + " must be >= 0");
  };
  auto positive = [&](const ParamRange& r, const char* name) {
    if (!(r.lo > 0)) fail(std::string(name) + " must be > 0");
  };
  switch (family) {
    case ModelFamily::Gaussian:
    case ModelFamily::Logistic2:
    case ModelFamily::Gumbel:
      in_grid(ranges[0], "location");
      non_negative(ranges[1], "scale");
      break;
    case ModelFamily::Logistic4:
      non_negative(ranges[0], "b");
      non_negative(ranges[1], "L");
      if (ranges[0].hi + ranges[1].hi > 1) fail("b + L must not exceed 1");
      if (ranges[2].hi > 0) fail("k must be <= 0");
      in_grid(ranges[3], "x0");
      break;
    case ModelFamily::Weibull:
      in_grid(ranges[0], "lambda");
      positive(ranges[0], "lambda");
      positive(ranges[1], "k");
      break;
    case ModelFamily::Rayleigh:
      in_grid(ranges[0], "sigma");
      non_negative(ranges[0], "sigma");
      break;
    default: break;
  }
}

// True model of one video: each parameter uniform on its range.
inline SurModel true_model(const SynthSpec& spec, std::size_t video_index) {
  Xoshiro256 rng(derive_seed(detail::video_seed(spec, video_index), 0));
  SurModel m{spec.family, {}};
  for (const auto& r : spec.ranges) m.params.push_back(rng.uniform(r.lo, r.hi));
  return m;
}

inline JndSamples gen_annotations(const SynthSpec& spec, std::size_t video_index, const SurModel& truth) {
  Xoshiro256 rng(derive_seed(detail::video_seed(spec, video_index), 1));
  const double lo = spec.grid.min() + 1;
  const double hi = spec.grid.max();
  JndSamples out;
  out.video_id = detail::video_id(video_index % spec.n_videos);
  out.resolution = spec.resolutions[(video_index / spec.n_videos) % spec.resolutions.size()];
  out.samples.reserve(spec.subjects_per_video);
  for (std::size_t s = 0; s < spec.subjects_per_video; ++s) {
    double x = detail::latent_quantile(truth.family, truth.params, rng.uniform_open());
    x = std::clamp(x, lo, hi);  // also maps +-inf onto the grid ends
    x = spec.discretization == Discretization::ceil ? std::ceil(x) : detail::round_half_even(x);
    out.samples.push_back(static_cast<int>(std::clamp(x, lo, hi)));
  }
  return out;
}

inline JndSamples gen_annotations(const SynthSpec& spec, std::size_t video_index) {
  spec.validate();
  return gen_annotations(spec, video_index, true_model(spec, video_index));
}

inline FeatureRecord gen_features(const SynthSpec& spec, const SurModel& truth, std::size_t video_index = 0) {
  Xoshiro256 rng(derive_seed(detail::video_seed(spec, video_index), 2));
  FeatureRecord rec;
  rec.video_id = detail::video_id(video_index % spec.n_videos);
  rec.resolution = spec.resolutions[(video_index / spec.n_videos) % spec.resolutions.size()];
  rec.masking = detail::masking_map(truth, spec.masking_dim, spec.grid);
  if (spec.noise > 0) {
    for (double& v : rec.masking) v += spec.noise * rng.normal();
  }
  if (spec.with_pvs) {
    const auto s = detail::summarize(truth);
    std::vector<std::vector<double>> pvs;
    pvs.reserve(spec.grid.size());
    for (int qp : spec.grid.levels()) {
      auto qd = detail::qd_map((qp - s.location) / s.scale, spec.qd_dim);
      if (spec.noise > 0) {
        for (double& v : qd) v += spec.noise * rng.normal();
      }
      pvs.push_back(std::move(qd));
    }
    rec.pvs = std::move(pvs);
  }
  return rec;
}

// n_videos per resolution; video ids repeat across resolutions, as a source
// sequence does when encoded at several sizes. Truths are drawn
// independently per (resolution, video).
inline std::vector<SynthVideo> gen_dataset(const SynthSpec& spec) {
  spec.validate();
  std::vector<SynthVideo> out;
  const std::size_t total = spec.n_videos * spec.resolutions.size();
  out.reserve(total);
  for (std::size_t index = 0; index < total; ++index) {
    SynthVideo v;
    v.truth = true_model(spec, index);
    v.annotations = gen_annotations(spec, index, v.truth);
    v.features = gen_features(spec, v.truth, index);
    out.push_back(std::move(v));
  }
  return out;
}

inline FeatureSet to_feature_set(const SynthSpec& spec, const std::vector<SynthVideo>& videos) {
  FeatureSet fs;
  fs.grid = spec.grid;
  fs.masking_dim = spec.masking_dim;
  fs.qd_dim = spec.with_pvs ? spec.qd_dim : 0;
  for (const auto& v : videos) fs.videos.push_back(v.features);
  return fs;
}

}  // namespace surkit
