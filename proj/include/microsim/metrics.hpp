#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "microsim/ingest.hpp"
#include "microsim/integerise.hpp"
#include "microsim/table.hpp"

namespace microsim
{

/// Total absolute error: sum of |U - T| over cells.
double tae(std::span<const double> census, std::span<const double> simulated);

/// Standardised absolute error in percent: 100 * TAE / sum(U).
double sae(std::span<const double> census, std::span<const double> simulated);

/// Pearson product-moment correlation over the flattened cells.
double pearson_r(std::span<const double> census, std::span<const double> simulated);

/// Percent of cells with |T - U| > threshold * U. A cell with U = 0 counts
/// as an error whenever T != 0.
double err_gt(std::span<const double> census, std::span<const double> simulated, double threshold = 0.05);

/// Magnitude given to cells whose census proportion is 0 or 1 but whose
/// simulated proportion differs; such cells are always significant and are
/// left out of the sum of squares.
inline constexpr double kZmDegenerate = 1e300;

/// Modified Z statistic per cell, with p = U / sum(U) and r = T / sum(U).
std::vector<double> zm_cells(std::span<const double> census, std::span<const double> simulated);

struct ZmSummary
{
    double zm_sq = 0.0;    // sum of squared finite Zm
    double sig_pct = 0.0;  // percent of cells with |Zm| > critical
};

ZmSummary zm_summary(std::span<const double> zm, double critical = 1.96);

/// Per-zone Pop_sim - Pop_cens statistics.
struct DiffStats
{
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation (n - 1)
    double max = 0.0;
    double min = 0.0;
    double oversample_pct = 0.0;
};

DiffStats population_diffs(std::span<const IntegerisedZone> zones, std::span<const std::uint64_t> pops);
/// Same statistics from simulated populations given directly (e.g. the
/// fractional IPF totals).
DiffStats population_diffs(std::span<const double> simulated, std::span<const std::uint64_t> pops);

struct FitRow
{
    std::string variable;  // constraint name or "All"
    double tae = 0.0;
    double sae_pct = 0.0;
    double pearson_r = 0.0;  // NaN when variance is degenerate
    double err_gt5_pct = 0.0;
    double zm_sq = 0.0;
    double zm_sig_pct = 0.0;
};

struct FitReport
{
    std::string method;
    std::vector<FitRow> constraints;  // declaration order
    FitRow overall;
    DiffStats population;
};

/// All metrics for one simulated table, per constraint block and overall.
FitReport full_report(const std::string& method, const Table& census, const Table& simulated,
                      std::span<const ConstraintBlock> blocks, const DiffStats& population);

FitReport full_report(const std::string& method, const Table& census, const Table& simulated,
                      std::span<const ConstraintBlock> blocks, std::span<const IntegerisedZone> zones,
                      std::span<const std::uint64_t> pops);

/// Table-4 style: method,variable,tae,sae_pct,err_gt5_pct,zm_sig_pct,zm_sq,pearson_r
void write_report_csv(const std::filesystem::path& path, std::span<const FitReport> reports);
void write_report_json(const std::filesystem::path& path, std::span<const FitReport> reports);
/// Table-5 style: method,mean,sd,max,min,oversample_pct
void write_diffs_csv(const std::filesystem::path& path, std::span<const FitReport> reports);

}  // namespace microsim
