#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace surkit {

enum class errc {
  empty_samples,
  sample_off_grid,
  invalid_threshold,
  invalid_params,
  non_monotone_model,
  degenerate_curve,
  did_not_converge,
  qp_infeasible,
  grid_mismatch,
  empty_input,
  empty_matrix,
  dimension_mismatch,
  invalid_hyperparams,
  too_few_items,
  missing_pvs_features,
  unknown_qp,
  unconverged_fit_in_training,
  parse_error,
};

inline constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::empty_samples: return "EmptySamples";
    case errc::sample_off_grid: return "SampleOffGrid";
    case errc::invalid_threshold: return "InvalidThreshold";
    case errc::invalid_params: return "InvalidParams";
    case errc::non_monotone_model: return "NonMonotoneModel";
    case errc::degenerate_curve: return "DegenerateCurve";
    case errc::did_not_converge: return "DidNotConverge";
    case errc::qp_infeasible: return "QPInfeasible";
    case errc::grid_mismatch: return "GridMismatch";
    case errc::empty_input: return "EmptyInput";
    case errc::empty_matrix: return "EmptyMatrix";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::invalid_hyperparams: return "InvalidHyperparams";
    case errc::too_few_items: return "TooFewItems";
    case errc::missing_pvs_features: return "MissingPvsFeatures";
    case errc::unknown_qp: return "UnknownQp";
    case errc::unconverged_fit_in_training: return "UnconvergedFitInTraining";
    case errc::parse_error: return "ParseError";
  }
  return "Unknown";
}

// Every recoverable failure in the library is reported as an `error` carrying
// one of the codes above; callers that need to branch on the cause should
// inspect code() rather than parse the message.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace surkit
