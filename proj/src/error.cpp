#include "microsim/error.hpp"

namespace microsim
{

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind)
    {
    case ErrorKind::missing_value: return "MissingValue";
    case ErrorKind::missing_attribute: return "MissingAttribute";
    case ErrorKind::unparseable_cell: return "UnparseableCell";
    case ErrorKind::empty_file: return "EmptyFile";
    case ErrorKind::file_not_found: return "FileNotFound";
    case ErrorKind::zone_mismatch: return "ZoneMismatch";
    case ErrorKind::negative_count: return "NegativeCount";
    case ErrorKind::population_mismatch: return "PopulationMismatch";
    case ErrorKind::classification_error: return "ClassificationError";
    case ErrorKind::bad_config: return "BadConfig";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::empty_dimension: return "EmptyDimension";
    case ErrorKind::non_finite: return "NonFinite";
    case ErrorKind::negative_weight: return "NegativeWeight";
    case ErrorKind::threshold_exhausted: return "ThresholdExhausted";
    case ErrorKind::all_zero_weights: return "AllZeroWeights";
    case ErrorKind::deficit_unfillable: return "DeficitUnfillable";
    case ErrorKind::truncation_overshoot: return "TruncationOvershoot";
    case ErrorKind::degenerate_variance: return "DegenerateVariance";
    case ErrorKind::zero_population: return "ZeroPopulation";
    case ErrorKind::missing_zone: return "MissingZone";
    case ErrorKind::infeasible_spec: return "InfeasibleSpec";
    }
    return "Unknown";
}

ErrorCategory category_of(ErrorKind kind) noexcept
{
    switch (kind)
    {
    case ErrorKind::non_finite:
    case ErrorKind::negative_weight:
    case ErrorKind::threshold_exhausted:
    case ErrorKind::all_zero_weights:
    case ErrorKind::deficit_unfillable:
    case ErrorKind::truncation_overshoot:
    case ErrorKind::degenerate_variance:
    case ErrorKind::zero_population:
        return ErrorCategory::numeric;
    default:
        return ErrorCategory::input;
    }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind)
{
}

}  // namespace microsim
