#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "microsim/ingest.hpp"

namespace microsim
{

struct ConstraintSchema
{
    std::string name;
    std::size_t categories = 2;
};

/// Parameters of a synthetic study area: ground-truth zone populations, a
/// pooled survey sample and the census tables aggregated from the truth.
struct PopulationSpec
{
    std::size_t zones = 24;
    std::size_t min_population = 100;
    std::size_t max_population = 500;
    std::vector<ConstraintSchema> constraints;
    /// Symmetric Dirichlet concentration for per-zone category shares; small
    /// values give sharply different zones.
    double concentration = 5.0;
    std::size_t survey_size = 1000;
    /// Bias of survey inclusion towards higher category indices; 0 samples
    /// the pooled population uniformly. Produces right-skewed IPF weights.
    double survey_skew = 0.0;
    std::uint64_t seed = 1;
    /// Regeneration attempts when the survey misses a populated category.
    std::size_t max_attempts = 50;

    /// 71 zones, four constraints of 12/11/8/9 categories, 4933 survey rows.
    static PopulationSpec full_scale(std::uint64_t seed = 1);

    void validate() const;
};

/// Key-value format, one `key = value` per line, `#` comments:
///
///     zones = 24
///     population = 100 500
///     constraints = age_sex:12 mode:11
///     concentration = 5
///     survey_size = 1000
///     survey_skew = 0
///     seed = 1
PopulationSpec parse_population_spec(std::string_view text);
PopulationSpec load_population_spec(const std::filesystem::path& path);

struct SyntheticData
{
    /// Per zone, row-major individual x constraint category indices.
    std::vector<std::vector<std::uint32_t>> truth;
    SurveyMicrodata survey;
    ConstraintSet constraints;
    CategoryMap map;
    /// Warnings, e.g. regenerations for missing survey support.
    std::vector<std::string> notes;
};

SyntheticData generate(const PopulationSpec& spec);

/// Writes survey.csv, map.txt, truth.csv and constraints/<name>.csv under
/// `dir`. Returns the constraint paths in declared order.
std::vector<std::filesystem::path> write_dataset(const std::filesystem::path& dir, const SyntheticData& data);

}  // namespace microsim
