#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace engage {

/// Broad failure class; the CLI maps each to a distinct exit status.
enum class ErrorCategory { config = 2, data = 3, numeric = 4 };

enum class Errc {
  // ingest
  missing_column,
  bad_timestamp,
  empty_file,
  invalid_pattern,
  // sessionizer
  no_gaps,
  unsorted_input,
  mixed_keys,
  // metric
  no_access,
  not_fitted,
  weight_mismatch,
  non_positive_after_shift,
  // features
  all_columns_dropped,
  // models
  invalid_hyperparameter,
  rank_deficient,
  backfit_divergence,
  empty_selection,
  schema_mismatch,
  // evaluation
  too_few_rows,
  zero_variance_target,
  // cli / pipeline
  config_error,
  missing_artifact,
  artifact_mismatch,
  io_error,
};

std::string_view errc_name(Errc code) noexcept;
ErrorCategory errc_category(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return errc_category(code_); }

 private:
  Errc code_;
};

/// Parse failure carrying the 1-based data row index of the bad timestamp.
class BadTimestamp : public Error {
 public:
  BadTimestamp(std::size_t row, const std::string& text)
      : Error(Errc::bad_timestamp,
              "unparseable timestamp '" + text + "' at row " + std::to_string(row)),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace engage
