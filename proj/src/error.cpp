#include "engage/error.hpp"

namespace engage {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::missing_column: return "MissingColumn";
    case Errc::bad_timestamp: return "BadTimestamp";
    case Errc::empty_file: return "EmptyFile";
    case Errc::invalid_pattern: return "InvalidPattern";
    case Errc::no_gaps: return "NoGaps";
    case Errc::unsorted_input: return "UnsortedInput";
    case Errc::mixed_keys: return "MixedKeys";
    case Errc::no_access: return "NoAccess";
    case Errc::not_fitted: return "NotFitted";
    case Errc::weight_mismatch: return "WeightMismatch";
    case Errc::non_positive_after_shift: return "NonPositiveAfterShift";
    case Errc::all_columns_dropped: return "AllColumnsDropped";
    case Errc::invalid_hyperparameter: return "InvalidHyperparameter";
    case Errc::rank_deficient: return "RankDeficient";
    case Errc::backfit_divergence: return "BackfitDivergence";
    case Errc::empty_selection: return "EmptySelection";
    case Errc::schema_mismatch: return "SchemaMismatch";
    case Errc::too_few_rows: return "TooFewRows";
    case Errc::zero_variance_target: return "ZeroVarianceTarget";
    case Errc::config_error: return "ConfigError";
    case Errc::missing_artifact: return "MissingArtifact";
    case Errc::artifact_mismatch: return "ArtifactMismatch";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

ErrorCategory errc_category(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_pattern:
    case Errc::weight_mismatch:
    case Errc::invalid_hyperparameter:
    case Errc::non_positive_after_shift:
    case Errc::config_error:
      return ErrorCategory::config;
    case Errc::no_gaps:
    case Errc::rank_deficient:
    case Errc::backfit_divergence:
    case Errc::zero_variance_target:
      return ErrorCategory::numeric;
    default:
      return ErrorCategory::data;
  }
}

}  // namespace engage
