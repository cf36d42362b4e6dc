#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "microsim/ingest.hpp"
#include "microsim/ipf.hpp"
#include "microsim/rng.hpp"
#include "microsim/table.hpp"

namespace microsim
{

enum class Method
{
    rounding,
    threshold,
    counterweight,
    pp,
    trs,
};

inline constexpr Method kAllMethods[] = {Method::rounding, Method::threshold, Method::counterweight, Method::pp,
                                         Method::trs};

std::string_view to_string(Method method) noexcept;
/// Accepts `rounding | threshold | counterweight | pp | trs`.
Method parse_method(std::string_view name);
constexpr bool is_probabilistic(Method m) noexcept { return m == Method::pp || m == Method::trs; }

enum class Provenance
{
    replicated,  // deterministic copies (truncated or rounded weight)
    sampled,     // random draws
    topped_up,   // deterministic additions after the first stage
};

std::string_view to_string(Provenance p) noexcept;

enum class RoundingRule
{
    half_up,
    half_even,
};

std::uint64_t round_weight(double w, RoundingRule rule = RoundingRule::half_up);

/// Integer replication part and fractional remainder of each weight.
struct WeightDecomposition
{
    std::vector<std::uint64_t> count;
    std::vector<double> dr;
};

WeightDecomposition decompose(std::span<const double> w);

/// Integer weights for one zone. Copies of individual i are base[i] from the
/// first stage plus extra[i] from sampling or top-up.
struct IntegerisedZone
{
    std::size_t zone = 0;
    Method method = Method::rounding;
    std::vector<std::uint32_t> base;
    std::vector<std::uint32_t> extra;
    Provenance base_provenance = Provenance::replicated;
    Provenance extra_provenance = Provenance::topped_up;
    /// Stream seed; absent for deterministic methods.
    std::optional<std::uint64_t> seed;
    /// Threshold: final inclusion threshold. Counter-weight: last sorted
    /// position that received a top-up.
    std::optional<double> exit_diagnostic;
    /// Threshold: individuals added by the sweep that already had copies from
    /// truncation.
    std::size_t reentries = 0;

    std::uint32_t copies(std::size_t i) const { return base[i] + extra[i]; }
    std::vector<std::uint32_t> counts() const;
    std::uint64_t population() const;
    /// The zone as a multiset of row indices, replicated copies first.
    std::vector<std::uint32_t> selections() const;
};

IntegerisedZone integerise_rounding(std::span<const double> w, RoundingRule rule = RoundingRule::half_up);

/// Truncation start, then a descending inclusion threshold admits remainders
/// band by band until the census population is reached.
IntegerisedZone integerise_threshold(std::span<const double> w, std::uint64_t pop_cens, double step = 0.001);

/// Rounding start, then sorted-order top-up by round(dr[i] + dr[i+1]) until
/// round(sum w) is reached.
IntegerisedZone integerise_counterweight(std::span<const double> w, RoundingRule rule = RoundingRule::half_up);

/// pop_cens draws with replacement, P(i) = w[i] / sum w.
IntegerisedZone integerise_pp(std::span<const double> w, std::uint64_t pop_cens, Rng& rng);

/// Truncate, replicate, then fill the deficit by weighted sampling without
/// replacement on the remainders.
IntegerisedZone integerise_trs(std::span<const double> w, std::uint64_t pop_cens, Rng& rng);

struct IntegeriseOptions
{
    RoundingRule rounding = RoundingRule::half_up;
    double threshold_step = 0.001;
    unsigned threads = 1;
};

/// Census populations rounded to whole people.
std::vector<std::uint64_t> census_populations(const ConstraintSet& constraints);

/// Integerises every zone. Probabilistic methods draw zone z from
/// zone_seed(seed, z).
std::vector<IntegerisedZone> integerise_all(Method method, const WeightMatrix& w, std::span<const std::uint64_t> pops,
                                            std::uint64_t seed, const IntegeriseOptions& options = {});

/// Zones x categories aggregate of integer selections.
Table aggregate(std::span<const IntegerisedZone> zones, const Indicator& indicator);

struct RunEnsemble
{
    Method method = Method::trs;
    std::uint64_t master_seed = 0;
    std::vector<std::uint64_t> run_seeds;
    std::vector<std::vector<IntegerisedZone>> runs;
    std::vector<double> tae;
    std::size_t best = 0;

    const std::vector<IntegerisedZone>& best_run() const { return runs[best]; }
};

RunEnsemble run_ensemble(Method method, const WeightMatrix& w, std::span<const std::uint64_t> pops,
                         const Indicator& indicator, const Table& census, std::size_t n_runs = 20,
                         std::uint64_t master_seed = 1000, const IntegeriseOptions& options = {});

/// `zone,individual_id,copies,provenance`, one row per non-zero stage.
void write_selections_csv(const std::filesystem::path& path, std::span<const IntegerisedZone> zones,
                          const std::vector<std::string>& zone_ids);
/// `zone,pop_cens,pop_sim,exit_diagnostic,seed`.
void write_summary_csv(const std::filesystem::path& path, std::span<const IntegerisedZone> zones,
                       std::span<const std::uint64_t> pops, const std::vector<std::string>& zone_ids);
/// Reads a selections CSV back into per-zone counts (zones in first-seen order
/// of `zone_ids`).
std::vector<IntegerisedZone> read_selections_csv(const std::filesystem::path& path, Method method,
                                                 std::size_t individuals, const std::vector<std::string>& zone_ids);

}  // namespace microsim
