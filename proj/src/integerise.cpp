#include "microsim/integerise.hpp"

#include <algorithm>
#include <bit>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <utility>

#include "microsim/csv.hpp"
#include "microsim/error.hpp"
#include "microsim/parallel.hpp"

namespace microsim
{

std::string_view to_string(Method method) noexcept
{
    switch (method)
    {
    case Method::rounding: return "rounding";
    case Method::threshold: return "threshold";
    case Method::counterweight: return "counterweight";
    case Method::pp: return "pp";
    case Method::trs: return "trs";
    }
    return "unknown";
}

Method parse_method(std::string_view name)
{
    for (auto m : kAllMethods)
        if (to_string(m) == name)
            return m;
    throw Error(ErrorKind::bad_config,
                "unknown method '" + std::string(name) + "' (expected rounding|threshold|counterweight|pp|trs)");
}

std::string_view to_string(Provenance p) noexcept
{
    switch (p)
    {
    case Provenance::replicated: return "replicated";
    case Provenance::sampled: return "sampled";
    case Provenance::topped_up: return "topped_up";
    }
    return "unknown";
}

namespace
{

void check_weights(std::span<const double> w)
{
    for (std::size_t i = 0; i < w.size(); ++i)
    {
        if (!std::isfinite(w[i]))
            throw Error(ErrorKind::non_finite, "weight of individual " + std::to_string(i) + " is not finite");
        if (w[i] < 0.0)
            throw Error(ErrorKind::negative_weight, "individual " + std::to_string(i) + " has weight " +
                                                        csv::format_double(w[i]));
    }
}

IntegerisedZone empty_zone(Method method, std::size_t n)
{
    IntegerisedZone z;
    z.method = method;
    z.base.assign(n, 0);
    z.extra.assign(n, 0);
    return z;
}

/// Indices of w in ascending order, ties by index. LSD radix sort on the bit
/// patterns, which order like the values for non-negative doubles.
std::vector<std::size_t> ascending_order(std::span<const double> w)
{
    const std::size_t n = w.size();
    std::vector<std::uint64_t> key(n), key_tmp(n);
    std::vector<std::size_t> idx(n), idx_tmp(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        key[i] = std::bit_cast<std::uint64_t>(w[i] + 0.0);  // -0.0 sorts as 0.0
        idx[i] = i;
    }
    for (int shift = 0; shift < 64; shift += 8)
    {
        std::array<std::size_t, 257> start{};
        for (auto k : key)
            ++start[((k >> shift) & 0xFF) + 1];
        if (std::any_of(start.begin() + 1, start.end(), [n](std::size_t c) { return c == n; }))
            continue;  // digit constant across keys
        for (std::size_t b = 1; b < 257; ++b)
            start[b] += start[b - 1];
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto slot = start[(key[i] >> shift) & 0xFF]++;
            key_tmp[slot] = key[i];
            idx_tmp[slot] = idx[i];
        }
        key.swap(key_tmp);
        idx.swap(idx_tmp);
    }
    return idx;
}

}  // namespace

std::uint64_t round_weight(double w, RoundingRule rule)
{
    if (rule == RoundingRule::half_even)
        return static_cast<std::uint64_t>(std::nearbyint(w));
    const double f = std::floor(w);
    return static_cast<std::uint64_t>(w - f >= 0.5 ? f + 1.0 : f);
}

WeightDecomposition decompose(std::span<const double> w)
{
    check_weights(w);
    WeightDecomposition d;
    d.count.resize(w.size());
    d.dr.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
    {
        const double f = std::floor(w[i]);
        d.count[i] = static_cast<std::uint64_t>(f);
        d.dr[i] = w[i] - f;
    }
    return d;
}

std::vector<std::uint32_t> IntegerisedZone::counts() const
{
    std::vector<std::uint32_t> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        out[i] = base[i] + extra[i];
    return out;
}

std::uint64_t IntegerisedZone::population() const
{
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < base.size(); ++i)
        n += base[i] + extra[i];
    return n;
}

std::vector<std::uint32_t> IntegerisedZone::selections() const
{
    std::vector<std::uint32_t> out;
    out.reserve(population());
    for (std::size_t i = 0; i < base.size(); ++i)
        out.insert(out.end(), base[i], static_cast<std::uint32_t>(i));
    for (std::size_t i = 0; i < extra.size(); ++i)
        out.insert(out.end(), extra[i], static_cast<std::uint32_t>(i));
    return out;
}

IntegerisedZone integerise_rounding(std::span<const double> w, RoundingRule rule)
{
    check_weights(w);
    auto z = empty_zone(Method::rounding, w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        z.base[i] = static_cast<std::uint32_t>(round_weight(w[i], rule));
    return z;
}

IntegerisedZone integerise_threshold(std::span<const double> w, std::uint64_t pop_cens, double step)
{
    if (!(step > 0.0) || step >= 1.0)
        throw Error(ErrorKind::bad_config, "threshold step must be in (0, 1)");
    const auto d = decompose(w);
    auto z = empty_zone(Method::threshold, w.size());
    std::uint64_t pop = 0;
    for (std::size_t i = 0; i < w.size(); ++i)
    {
        z.base[i] = static_cast<std::uint32_t>(d.count[i]);
        pop += d.count[i];
    }

    if (pop >= pop_cens)
    {
        z.exit_diagnostic = 1.0;
        return z;
    }

    // Band b is the sweep step with IT = 1 - b * step; a remainder enters in
    // the first band whose threshold it reaches, and a band is admitted whole.
    // So count remainders per band and stop at the first band that fills the
    // zone. The last band has IT <= 0 and takes everything left.
    auto it = [step](std::size_t b) { return 1.0 - static_cast<double>(b) * step; };
    std::size_t last = static_cast<std::size_t>(std::ceil(1.0 / step));
    while (last > 1 && it(last - 1) <= 0.0)
        --last;
    while (it(last) > 0.0)
        ++last;

    std::vector<std::uint32_t> band(w.size(), 0);  // 0: no remainder
    std::vector<std::uint64_t> per_band(last + 1, 0);
    for (std::size_t i = 0; i < w.size(); ++i)
    {
        const double r = d.dr[i];
        if (!(r > 0.0))
            continue;
        auto b = std::clamp(static_cast<std::size_t>(std::ceil((1.0 - r) / step)), std::size_t{1}, last);
        while (b < last && r < it(b))
            ++b;
        while (b > 1 && r >= it(b - 1))
            --b;
        band[i] = static_cast<std::uint32_t>(b);
        ++per_band[b];
    }

    std::size_t exit_band = 0;
    for (std::size_t b = 1; b <= last && pop < pop_cens; ++b)
    {
        pop += per_band[b];
        exit_band = b;
    }
    if (pop < pop_cens)
        throw Error(ErrorKind::threshold_exhausted, "inclusion threshold reached 0 with population " +
                                                        std::to_string(pop) + " < " + std::to_string(pop_cens));
    for (std::size_t i = 0; i < w.size(); ++i)
        if (band[i] != 0 && band[i] <= exit_band)
        {
            z.extra[i] = 1;
            if (d.count[i] > 0)
                ++z.reentries;
        }
    z.exit_diagnostic = it(exit_band);
    return z;
}

IntegerisedZone integerise_counterweight(std::span<const double> w, RoundingRule rule)
{
    check_weights(w);
    const std::size_t n = w.size();
    auto z = empty_zone(Method::counterweight, n);

    // ascending by weight, ties in index order
    const auto order = ascending_order(w);

    std::vector<double> dw(n);
    std::vector<std::uint64_t> rounded(n), topup(n, 0);
    std::uint64_t total = 0;
    double weight_sum = 0.0;
    for (std::size_t p = 0; p < n; ++p)
    {
        const double v = w[order[p]];
        dw[p] = v - std::floor(v);
        rounded[p] = round_weight(v, rule);
        total += rounded[p];
        weight_sum += v;
    }
    const std::uint64_t target = round_weight(weight_sum, rule);

    // Rounding can overshoot the target; drop the weakest round-ups first.
    if (total > target)
    {
        std::vector<std::size_t> ups;
        for (std::size_t p = 0; p < n; ++p)
            if (static_cast<double>(rounded[p]) > std::floor(w[order[p]]))
                ups.push_back(p);
        std::stable_sort(ups.begin(), ups.end(), [&](std::size_t a, std::size_t b) { return dw[a] < dw[b]; });
        for (std::size_t u = 0; u < ups.size() && total > target; ++u)
        {
            --rounded[ups[u]];
            --total;
        }
    }

    for (std::size_t p = 0; p < n && total < target; ++p)
    {
        const double pair = dw[p] + (p + 1 < n ? dw[p + 1] : 0.0);
        const auto add = std::min(round_weight(pair, rule), target - total);
        if (add > 0)
        {
            topup[p] += add;
            total += add;
            z.exit_diagnostic = static_cast<double>(p);
        }
    }

    // Pairs too small to round up can leave a deficit; fill it by largest
    // remainder.
    if (total < target)
    {
        std::vector<std::size_t> by_remainder(n);
        std::iota(by_remainder.begin(), by_remainder.end(), std::size_t{0});
        std::stable_sort(by_remainder.begin(), by_remainder.end(),
                         [&](std::size_t a, std::size_t b) { return dw[a] > dw[b]; });
        while (total < target)
            for (std::size_t r = 0; r < n && total < target; ++r)
            {
                ++topup[by_remainder[r]];
                ++total;
            }
    }

    for (std::size_t p = 0; p < n; ++p)
    {
        z.base[order[p]] = static_cast<std::uint32_t>(rounded[p]);
        z.extra[order[p]] = static_cast<std::uint32_t>(topup[p]);
    }
    return z;
}

IntegerisedZone integerise_pp(std::span<const double> w, std::uint64_t pop_cens, Rng& rng)
{
    check_weights(w);
    auto z = empty_zone(Method::pp, w.size());
    z.base_provenance = Provenance::sampled;
    z.extra_provenance = Provenance::sampled;
    z.seed = rng.seed();

    std::vector<double> cumulative(w.size());
    std::partial_sum(w.begin(), w.end(), cumulative.begin());
    const double total = w.empty() ? 0.0 : cumulative.back();
    if (!(total > 0.0))
        throw Error(ErrorKind::all_zero_weights, "proportional probabilities need a positive weight");

    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0)
            last_positive = i;

    for (std::uint64_t draw = 0; draw < pop_cens; ++draw)
    {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        auto i = it == cumulative.end() ? last_positive : static_cast<std::size_t>(it - cumulative.begin());
        ++z.base[i];
    }
    return z;
}

IntegerisedZone integerise_trs(std::span<const double> w, std::uint64_t pop_cens, Rng& rng)
{
    auto z = empty_zone(Method::trs, w.size());
    z.base_provenance = Provenance::replicated;
    z.extra_provenance = Provenance::sampled;
    z.seed = rng.seed();

    // Sequential draws proportional to the remainders without replacement,
    // done in one pass: give each candidate the key E / dr with E ~ Exp(1) and
    // keep the `deficit` smallest keys (Efraimidis & Spirakis). Ties at the
    // cut-off go to the lower index.
    std::vector<std::pair<double, std::uint32_t>> keys;
    keys.reserve(w.size());
    std::uint64_t pop = 0;
    for (std::size_t i = 0; i < w.size(); ++i)
    {
        if (!(w[i] >= 0.0) || !std::isfinite(w[i]))
            check_weights(w);  // throws with the offending index
        const double f = std::floor(w[i]);
        z.base[i] = static_cast<std::uint32_t>(f);
        pop += z.base[i];
        const double dr = w[i] - f;
        if (dr > 0.0)
            keys.emplace_back(rng.exponential() / dr, static_cast<std::uint32_t>(i));
    }
    if (pop > pop_cens)
        throw Error(ErrorKind::truncation_overshoot, "truncated population " + std::to_string(pop) +
                                                         " exceeds census population " + std::to_string(pop_cens));
    const std::uint64_t deficit = pop_cens - pop;
    if (deficit > keys.size())
        throw Error(ErrorKind::deficit_unfillable, "deficit " + std::to_string(deficit) + " but only " +
                                                       std::to_string(keys.size()) +
                                                       " individuals have a remainder");
    if (deficit == 0)
        return z;

    const auto cut = keys.begin() + static_cast<std::ptrdiff_t>(deficit);
    if (cut != keys.end())
        std::nth_element(keys.begin(), cut - 1, keys.end());
    for (auto it = keys.begin(); it != cut; ++it)
        z.extra[it->second] = 1;
    return z;
}

std::vector<std::uint64_t> census_populations(const ConstraintSet& constraints)
{
    std::vector<std::uint64_t> out;
    for (double p : constraints.populations())
        out.push_back(round_weight(p));
    return out;
}

std::vector<IntegerisedZone> integerise_all(Method method, const WeightMatrix& w, std::span<const std::uint64_t> pops,
                                            std::uint64_t seed, const IntegeriseOptions& options)
{
    if (pops.size() != w.zones())
        throw Error(ErrorKind::dimension_mismatch, std::to_string(pops.size()) + " zone populations for " +
                                                       std::to_string(w.zones()) + " weight columns");
    std::vector<IntegerisedZone> zones(w.zones());
    parallel_for(w.zones(), options.threads, [&](std::size_t z) {
        const auto col = w.zone(z);
        try
        {
            switch (method)
            {
            case Method::rounding: zones[z] = integerise_rounding(col, options.rounding); break;
            case Method::threshold: zones[z] = integerise_threshold(col, pops[z], options.threshold_step); break;
            case Method::counterweight: zones[z] = integerise_counterweight(col, options.rounding); break;
            case Method::pp: {
                Rng rng(zone_seed(seed, z));
                zones[z] = integerise_pp(col, pops[z], rng);
                break;
            }
            case Method::trs: {
                Rng rng(zone_seed(seed, z));
                zones[z] = integerise_trs(col, pops[z], rng);
                break;
            }
            }
        }
        catch (const Error& e)
        {
            throw Error(e.kind(), std::string(to_string(method)) + ", zone " + std::to_string(z) + ": " + e.what());
        }
        zones[z].zone = z;
    });
    return zones;
}

Table aggregate(std::span<const IntegerisedZone> zones, const Indicator& indicator)
{
    Table out(zones.size(), indicator.total_categories());
    for (std::size_t z = 0; z < zones.size(); ++z)
    {
        const auto& zone = zones[z];
        if (zone.base.size() != indicator.individuals())
            throw Error(ErrorKind::dimension_mismatch, "zone " + std::to_string(z) + " has " +
                                                           std::to_string(zone.base.size()) + " individuals, indicator " +
                                                           std::to_string(indicator.individuals()));
        auto row = out.row(z);
        for (std::size_t c = 0; c < indicator.blocks().size(); ++c)
        {
            const auto off = indicator.blocks()[c].offset;
            const auto cats = indicator.categories(c);
            for (std::size_t i = 0; i < zone.base.size(); ++i)
                row[off + cats[i]] += zone.copies(i);
        }
    }
    return out;
}

RunEnsemble run_ensemble(Method method, const WeightMatrix& w, std::span<const std::uint64_t> pops,
                         const Indicator& indicator, const Table& census, std::size_t n_runs,
                         std::uint64_t master_seed, const IntegeriseOptions& options)
{
    if (!is_probabilistic(method))
        throw Error(ErrorKind::bad_config, "run_ensemble needs a probabilistic method (pp or trs)");
    if (n_runs == 0)
        throw Error(ErrorKind::bad_config, "run_ensemble needs at least one run");
    if (census.rows() != w.zones() || census.cols() != indicator.total_categories())
        throw Error(ErrorKind::dimension_mismatch, "census table does not match weights and indicator");

    RunEnsemble ensemble;
    ensemble.method = method;
    ensemble.master_seed = master_seed;
    for (std::size_t run = 0; run < n_runs; ++run)
    {
        const auto seed = run_seed(master_seed, run);
        std::vector<IntegerisedZone> zones;
        try
        {
            zones = integerise_all(method, w, pops, seed, options);
        }
        catch (const Error& e)
        {
            throw Error(e.kind(), "run " + std::to_string(run) + ": " + e.what());
        }
        const Table simulated = aggregate(zones, indicator);
        double tae = 0.0;
        for (std::size_t k = 0; k < census.size(); ++k)
            tae += std::abs(census.flat()[k] - simulated.flat()[k]);

        ensemble.run_seeds.push_back(seed);
        ensemble.runs.push_back(std::move(zones));
        ensemble.tae.push_back(tae);
        if (tae < ensemble.tae[ensemble.best])
            ensemble.best = run;
    }
    return ensemble;
}

// ---------------------------------------------------------------------------

void write_selections_csv(const std::filesystem::path& path, std::span<const IntegerisedZone> zones,
                          const std::vector<std::string>& zone_ids)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::file_not_found, "cannot write '" + path.string() + "'");
    out << "zone,individual_id,copies,provenance\n";
    for (const auto& z : zones)
    {
        const auto id = csv::escape(zone_ids.at(z.zone));
        for (std::size_t i = 0; i < z.base.size(); ++i)
        {
            if (z.base[i] > 0)
                out << id << ',' << i << ',' << z.base[i] << ',' << to_string(z.base_provenance) << '\n';
            if (z.extra[i] > 0)
                out << id << ',' << i << ',' << z.extra[i] << ',' << to_string(z.extra_provenance) << '\n';
        }
    }
}

void write_summary_csv(const std::filesystem::path& path, std::span<const IntegerisedZone> zones,
                       std::span<const std::uint64_t> pops, const std::vector<std::string>& zone_ids)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::file_not_found, "cannot write '" + path.string() + "'");
    out << "zone,pop_cens,pop_sim,exit_diagnostic,seed\n";
    for (const auto& z : zones)
    {
        out << csv::escape(zone_ids.at(z.zone)) << ',' << pops[z.zone] << ',' << z.population() << ',';
        if (z.exit_diagnostic)
            out << csv::format_double(*z.exit_diagnostic);
        out << ',';
        if (z.seed)
            out << *z.seed;
        out << '\n';
    }
}

std::vector<IntegerisedZone> read_selections_csv(const std::filesystem::path& path, Method method,
                                                 std::size_t individuals, const std::vector<std::string>& zone_ids)
{
    auto doc = csv::read(path);
    if (doc.header != std::vector<std::string>{"zone", "individual_id", "copies", "provenance"})
        throw Error(ErrorKind::unparseable_cell, "'" + path.string() + "' is not a selections file");

    std::unordered_map<std::string, std::size_t> index;
    std::vector<IntegerisedZone> zones(zone_ids.size());
    for (std::size_t z = 0; z < zone_ids.size(); ++z)
    {
        index.emplace(zone_ids[z], z);
        zones[z] = empty_zone(method, individuals);
        zones[z].zone = z;
        if (method == Method::pp)
            zones[z].base_provenance = zones[z].extra_provenance = Provenance::sampled;
        if (method == Method::trs)
            zones[z].extra_provenance = Provenance::sampled;
    }
    for (std::size_t r = 0; r < doc.rows.size(); ++r)
    {
        const auto& cells = doc.rows[r];
        const auto where = "'" + path.string() + "' line " + std::to_string(doc.lines[r]);
        if (cells.size() != 4)
            throw Error(ErrorKind::unparseable_cell, where + ": expected 4 cells");
        auto it = index.find(cells[0]);
        if (it == index.end())
            throw Error(ErrorKind::missing_zone, where + ": unknown zone '" + cells[0] + "'");
        auto i = csv::parse_integer(cells[1]);
        auto copies = csv::parse_integer(cells[2]);
        if (!i || *i < 0 || static_cast<std::size_t>(*i) >= individuals || !copies || *copies < 0)
            throw Error(ErrorKind::unparseable_cell, where + ": bad individual or copies");
        auto& zone = zones[it->second];
        if (cells[3] == "replicated" || (method == Method::pp && cells[3] == "sampled"))
            zone.base[*i] += static_cast<std::uint32_t>(*copies);
        else if (cells[3] == "sampled" || cells[3] == "topped_up")
            zone.extra[*i] += static_cast<std::uint32_t>(*copies);
        else
            throw Error(ErrorKind::unparseable_cell, where + ": unknown provenance '" + cells[3] + "'");
    }
    return zones;
}

}  // namespace microsim
