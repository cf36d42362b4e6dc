#pragma once

#include <stdexcept>
#include <string>

namespace microsim
{

/// Coarse classification used by the command line front end to pick an exit code.
enum class ErrorCategory
{
    input,    // bad files, bad config, inconsistent tables (exit 2)
    numeric,  // model failures: non-finite weights, unfillable deficits (exit 1)
};

enum class ErrorKind
{
    missing_value,
    missing_attribute,
    unparseable_cell,
    empty_file,
    file_not_found,
    zone_mismatch,
    negative_count,
    population_mismatch,
    classification_error,
    bad_config,
    dimension_mismatch,
    empty_dimension,
    non_finite,
    negative_weight,
    threshold_exhausted,
    all_zero_weights,
    deficit_unfillable,
    truncation_overshoot,
    degenerate_variance,
    zero_population,
    missing_zone,
    infeasible_spec,
};

const char* to_string(ErrorKind kind) noexcept;
ErrorCategory category_of(ErrorKind kind) noexcept;

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }
    ErrorCategory category() const noexcept { return category_of(kind_); }

private:
    ErrorKind kind_;
};

}  // namespace microsim
