#pragma once

// Per-video regression inputs: a masking vector describing the source, and
// optionally one quality-degradation vector per grid level describing the
// encoded versions.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "surkit/empirical.hpp"
#include "surkit/error.hpp"

namespace surkit {

struct FeatureRecord {
  std::string video_id;
  std::string resolution;
  std::vector<double> masking;
  // pvs->at(i) belongs to grid.level(i)
  std::optional<std::vector<std::vector<double>>> pvs;

  bool has_pvs() const noexcept { return pvs.has_value(); }

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

struct FeatureSet {
  DistortionGrid grid = kQpGrid;
  std::size_t masking_dim = 0;
  std::size_t qd_dim = 0;
  std::vector<FeatureRecord> videos;

  // Throws DimensionMismatch when a record disagrees with the declared
  // dimensions or, when present, its pvs block does not cover the grid.
  void validate() const {
    for (const auto& v : videos) {
      const std::string who = "video '" + v.video_id + "' (" + v.resolution + ")";
      if (v.masking.size() != masking_dim) {
        throw error(errc::dimension_mismatch, who + ": masking has " + std::to_string(v.masking.size()) +
                                                  " entries, expected " + std::to_string(masking_dim));
      }
      if (!v.pvs) continue;
      if (v.pvs->size() != grid.size()) {
        throw error(errc::dimension_mismatch, who + ": pvs covers " + std::to_string(v.pvs->size()) +
                                                  " levels, grid has " + std::to_string(grid.size()));
      }
      for (std::size_t i = 0; i < v.pvs->size(); ++i) {
        if ((*v.pvs)[i].size() != qd_dim) {
          throw error(errc::dimension_mismatch, who + ": qd vector at level " + std::to_string(grid.level(i)) +
                                                    " has " + std::to_string((*v.pvs)[i].size()) + " entries, expected " +
                                                    std::to_string(qd_dim));
        }
      }
    }
  }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

}  // namespace surkit
