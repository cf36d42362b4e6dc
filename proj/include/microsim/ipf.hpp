#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "microsim/ingest.hpp"
#include "microsim/table.hpp"

namespace microsim
{

/// Individuals x zones non-negative weights. Stored zone-major so each zone's
/// column is contiguous; zones are fitted independently.
class WeightMatrix
{
public:
    WeightMatrix() = default;
    WeightMatrix(std::size_t individuals, std::size_t zones, double fill = 0.0);

    std::size_t individuals() const noexcept { return individuals_; }
    std::size_t zones() const noexcept { return zones_; }

    double& operator()(std::size_t individual, std::size_t zone) { return data_[zone * individuals_ + individual]; }
    double operator()(std::size_t individual, std::size_t zone) const
    {
        return data_[zone * individuals_ + individual];
    }

    std::span<double> zone(std::size_t z) { return {data_.data() + z * individuals_, individuals_}; }
    std::span<const double> zone(std::size_t z) const { return {data_.data() + z * individuals_, individuals_}; }

    /// Column-major (zone-major) storage.
    std::span<const double> flat() const noexcept { return data_; }

    /// Column sums.
    std::vector<double> zone_totals() const;

    bool operator==(const WeightMatrix& other) const { return individuals_ == other.individuals_ && zones_ == other.zones_ && data_ == other.data_; }

    // metadata
    std::vector<std::string> zone_ids;
    std::size_t iterations = 0;
    std::vector<std::string> constraint_order;

private:
    std::size_t individuals_ = 0;
    std::size_t zones_ = 0;
    std::vector<double> data_;
};

WeightMatrix initialize_weights(std::size_t individuals, std::size_t zones, double initial = 1.0);

/// Simulated aggregates T[z][k] = sum_i w[i][z] * B[i][k] (zones x categories).
Table aggregate(const WeightMatrix& w, const Indicator& indicator);

/// A census cell with positive target but no weight mass to scale.
struct EmptyCell
{
    std::size_t zone = 0;
    std::size_t column = 0;  // global category column
    double target = 0.0;     // the unreachable census count
};

/// Rescales weights so the simulated marginals of one constraint match the
/// census in every zone. Cells whose simulated aggregate is zero are left
/// untouched and reported.
std::vector<EmptyCell> constrain(WeightMatrix& w, const Indicator& indicator, const ConstraintSet& constraints,
                                 std::size_t constraint, unsigned threads = 1);

struct TraceEntry
{
    std::size_t iteration = 0;  // 1-based
    std::size_t constraint = 0;
    std::string constraint_name;
    double tae = 0.0;                   // whole table
    std::vector<double> constraint_tae; // per constraint block
    double empty_cell_residual = 0.0;   // census mass in cells that could not be scaled
};

/// Fit snapshots taken after every constraint application.
struct FitTrace
{
    std::vector<TraceEntry> entries;
    /// Residuals recorded by the most recent pass.
    std::vector<EmptyCell> empty_cells;

    /// TAE after the last constraint of each iteration.
    std::vector<double> iteration_tae() const;
    /// True when every cell is reachable, i.e. no zero-support categories.
    bool feasible() const { return empty_cells.empty(); }
};

struct IpfOptions
{
    std::size_t iterations = 20;
    /// Early exit when an iteration improves overall TAE by less than this.
    std::optional<double> tolerance;
    double initial = 1.0;
    unsigned threads = 1;
};

struct IpfResult
{
    WeightMatrix weights;
    FitTrace trace;
};

IpfResult ipf_run(const Indicator& indicator, const ConstraintSet& constraints, const IpfOptions& options = {});
IpfResult ipf_run(const SurveyMicrodata& survey, const ConstraintSet& constraints, const CategoryMap& map,
                  const IpfOptions& options = {});

// Serialization ------------------------------------------------------------

/// CSV with header `individual,<zone ids>` and one row per individual.
void write_weights_csv(const std::filesystem::path& path, const WeightMatrix& w);
WeightMatrix read_weights_csv(const std::filesystem::path& path);

/// "MSWM", u16 version, u32 individuals, u32 zones, then f64 zone-major;
/// all little-endian.
void write_weights_binary(const std::filesystem::path& path, const WeightMatrix& w);
WeightMatrix read_weights_binary(const std::filesystem::path& path);

/// Picks the format from the file content (binary magic or CSV).
WeightMatrix read_weights(const std::filesystem::path& path);

/// CSV columns iteration,constraint,tae.
void write_trace_csv(const std::filesystem::path& path, const FitTrace& trace);

}  // namespace microsim
