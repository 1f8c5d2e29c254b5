#pragma once

// Empirical JND statistics: PMF, CDF and the satisfied-user-ratio (SUR) step
// curve of one viewer group, and the empirical p%SUR read off that curve.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "surkit/error.hpp"

namespace surkit {

// Integer distortion levels min..max with unit step (QP units).
class DistortionGrid {
 public:
  constexpr DistortionGrid() = default;

  DistortionGrid(int min_level, int max_level) : min_(min_level), max_(max_level) {
    if (max_level < min_level) {
      throw error(errc::invalid_params, "distortion grid requires min <= max, got [" +
                                            std::to_string(min_level) + ", " +
                                            std::to_string(max_level) + "]");
    }
  }

  constexpr int min() const noexcept { return min_; }
  constexpr int max() const noexcept { return max_; }
  constexpr std::size_t size() const noexcept { return static_cast<std::size_t>(max_ - min_ + 1); }
  constexpr bool contains(int level) const noexcept { return level >= min_ && level <= max_; }
  constexpr int level(std::size_t index) const noexcept { return min_ + static_cast<int>(index); }
  constexpr std::size_t index(int level) const noexcept {
    return static_cast<std::size_t>(level - min_);
  }

  std::vector<int> levels() const {
    std::vector<int> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = level(i);
    return out;
  }

  friend constexpr bool operator==(const DistortionGrid&, const DistortionGrid&) = default;

 private:
  int min_ = 0;
  int max_ = 51;
};

// H.264 QP range.
inline constexpr DistortionGrid kQpGrid{};

// Per-subject JND annotations of one video.
struct JndSamples {
  std::string video_id;
  std::string resolution;  // free-form label: "360p", "1080p", ...
  std::vector<int> samples;

  std::size_t subject_count() const noexcept { return samples.size(); }
};

enum class CurveKind { empirical, analytic, predicted };

// A SUR curve sampled at every level of a grid.
struct SurCurve {
  DistortionGrid grid;
  std::vector<double> values;
  CurveKind kind = CurveKind::empirical;

  double at(int level) const { return values.at(grid.index(level)); }
};

// Which cumulative sum backs CDF_emp(x).
enum class CdfConvention {
  inclusive,  // P(JND <= x); a subject whose JND is x is not satisfied at x
  strict,     // sum over levels strictly below x
};

namespace detail {

inline void check_samples(std::span<const int> samples, const DistortionGrid& grid) {
  if (samples.empty()) throw error(errc::empty_samples, "no JND samples");
  for (int s : samples) {
    if (!grid.contains(s)) {
      throw error(errc::sample_off_grid, "sample " + std::to_string(s) + " outside grid [" +
                                             std::to_string(grid.min()) + ", " +
                                             std::to_string(grid.max()) + "]");
    }
  }
}

inline std::vector<std::size_t> histogram(std::span<const int> samples, const DistortionGrid& grid) {
  check_samples(samples, grid);
  std::vector<std::size_t> counts(grid.size(), 0);
  for (int s : samples) ++counts[grid.index(s)];
  return counts;
}

}  // namespace detail

// p(x) for every grid level, indexed like the grid.
inline std::vector<double> compute_pmf(const JndSamples& jnd, const DistortionGrid& grid = kQpGrid) {
  const auto counts = detail::histogram(jnd.samples, grid);
  const double n = static_cast<double>(jnd.samples.size());
  std::vector<double> pmf(counts.size());
  std::transform(counts.begin(), counts.end(), pmf.begin(),
                 [n](std::size_t c) { return static_cast<double>(c) / n; });
  return pmf;
}

inline std::vector<double> compute_empirical_cdf(const JndSamples& jnd,
                                                 const DistortionGrid& grid = kQpGrid,
                                                 CdfConvention convention = CdfConvention::inclusive) {
  const auto counts = detail::histogram(jnd.samples, grid);
  const double n = static_cast<double>(jnd.samples.size());
  std::vector<double> cdf(counts.size());
  std::size_t below = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (convention == CdfConvention::inclusive) below += counts[i];
    cdf[i] = static_cast<double>(below) / n;
    if (convention == CdfConvention::strict) below += counts[i];
  }
  return cdf;
}

// SUR_emp(x) = 1 - CDF_emp(x). Values are computed as (count above)/N so they
// are exact multiples of 1/N.
inline SurCurve compute_empirical_sur(const JndSamples& jnd, const DistortionGrid& grid = kQpGrid,
                                      CdfConvention convention = CdfConvention::inclusive) {
  const auto counts = detail::histogram(jnd.samples, grid);
  const std::size_t n = jnd.samples.size();
  SurCurve curve{grid, std::vector<double>(counts.size()), CurveKind::empirical};
  std::size_t below = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (convention == CdfConvention::inclusive) below += counts[i];
    curve.values[i] = static_cast<double>(n - below) / static_cast<double>(n);
    if (convention == CdfConvention::strict) below += counts[i];
  }
  return curve;
}

struct PSurLevel {
  int level = 0;
  bool saturated = false;  // the curve never reached p on the grid
};

inline void check_threshold(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw error(errc::invalid_threshold, "p must lie in (0, 1], got " + std::to_string(p));
  }
}

// min{x | SUR(x) <= p}; saturates at the grid maximum.
inline PSurLevel first_level_at_or_below(const SurCurve& curve, double p) {
  check_threshold(p);
  constexpr double slack = 1e-12;
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    if (curve.values[i] <= p + slack) return {curve.grid.level(i), false};
  }
  return {curve.grid.max(), true};
}

// Empirical p%SUR.
inline PSurLevel empirical_p_sur(const SurCurve& curve, double p) {
  return first_level_at_or_below(curve, p);
}

inline PSurLevel empirical_p_sur(const JndSamples& jnd, double p, const DistortionGrid& grid = kQpGrid) {
  return empirical_p_sur(compute_empirical_sur(jnd, grid), p);
}

// Number of grid steps where the curve rises by more than `tolerance`.
inline std::size_t count_increases(const SurCurve& curve, double tolerance = 1e-9) {
  std::size_t count = 0;
  for (std::size_t i = 1; i < curve.values.size(); ++i) {
    if (curve.values[i] > curve.values[i - 1] + tolerance) ++count;
  }
  return count;
}

}  // namespace surkit
