#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "microsim/ingest.hpp"
#include "microsim/integerise.hpp"

namespace microsim::cli
{

/// Everything a batch run needs. Input comes either from files (survey,
/// constraints, map) or from a synthetic population spec.
struct RunConfig
{
    std::optional<std::filesystem::path> survey;
    std::vector<std::filesystem::path> constraints;
    std::optional<std::filesystem::path> map;
    std::optional<std::filesystem::path> spec;
    std::optional<std::filesystem::path> weights;

    std::size_t iterations = 20;
    std::optional<double> tolerance;
    std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    std::size_t runs = 20;
    std::optional<std::uint64_t> seed = 1000;
    std::filesystem::path out = "out";
    unsigned threads = 1;
    ConsistencyMode mode = ConsistencyMode::strict;
    RoundingRule rounding = RoundingRule::half_up;
    double threshold_step = 0.001;
    bool binary_weights = false;
    bool record_timings = false;

    /// Throws bad_config when the combination cannot run.
    void validate() const;
};

/// Writes weights.csv (and weights.bin with binary_weights) plus trace.csv.
void cmd_ipf(const RunConfig& config);
/// Writes <method>/selections.csv and <method>/summary.csv for each method;
/// probabilistic methods keep the best of `runs` and add <method>/runs.csv.
void cmd_integerise(const RunConfig& config);
/// Reads weights and per-method selections from `out` and writes report.csv,
/// report.json, population_diffs.csv and plot.csv.
void cmd_evaluate(const RunConfig& config);
/// Writes a synthetic dataset (survey.csv, map.txt, constraints/) to `out`.
void cmd_generate(const RunConfig& config);
/// Generate or ingest, then ipf, integerise and evaluate into `out`. The
/// tree is assembled in a sibling temporary directory and renamed into place.
void cmd_pipeline(const RunConfig& config);

/// Process exit code for an exception escaping a command: 2 for input
/// errors, 1 for numeric/model errors.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace microsim::cli
