#include "microsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "microsim/csv.hpp"
#include "microsim/error.hpp"

namespace microsim
{

namespace
{

void check_shape(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw Error(ErrorKind::dimension_mismatch,
                    "census has " + std::to_string(a.size()) + " cells, simulation " + std::to_string(b.size()));
}

double total(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::vector<double> flatten_block(const Table& t, std::size_t first, std::size_t count)
{
    std::vector<double> out;
    out.reserve(t.rows() * count);
    for (std::size_t z = 0; z < t.rows(); ++z)
        for (std::size_t k = first; k < first + count; ++k)
            out.push_back(t(z, k));
    return out;
}

FitRow fit_row(std::string variable, std::span<const double> u, std::span<const double> t)
{
    FitRow row;
    row.variable = std::move(variable);
    row.tae = tae(u, t);
    row.sae_pct = total(u) > 0.0 ? sae(u, t) : std::numeric_limits<double>::quiet_NaN();
    try
    {
        row.pearson_r = pearson_r(u, t);
    }
    catch (const Error&)
    {
        row.pearson_r = std::numeric_limits<double>::quiet_NaN();
    }
    row.err_gt5_pct = err_gt(u, t, 0.05);
    if (total(u) > 0.0)
    {
        const auto s = zm_summary(zm_cells(u, t));
        row.zm_sq = s.zm_sq;
        row.zm_sig_pct = s.sig_pct;
    }
    return row;
}

}  // namespace

double tae(std::span<const double> census, std::span<const double> simulated)
{
    check_shape(census, simulated);
    double sum = 0.0;
    for (std::size_t k = 0; k < census.size(); ++k)
        sum += std::abs(census[k] - simulated[k]);
    return sum;
}

double sae(std::span<const double> census, std::span<const double> simulated)
{
    const double denom = total(census);
    if (!(denom > 0.0))
        throw Error(ErrorKind::zero_population, "SAE undefined when the census total is 0");
    return 100.0 * tae(census, simulated) / denom;
}

double pearson_r(std::span<const double> census, std::span<const double> simulated)
{
    check_shape(census, simulated);
    const std::size_t n = census.size();
    if (n < 2)
        throw Error(ErrorKind::degenerate_variance, "correlation needs at least two cells");
    const double mu = total(census) / static_cast<double>(n);
    const double mt = total(simulated) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < n; ++k)
    {
        const double dx = census[k] - mu;
        const double dy = simulated[k] - mt;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        throw Error(ErrorKind::degenerate_variance, "correlation undefined for a constant table");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double err_gt(std::span<const double> census, std::span<const double> simulated, double threshold)
{
    check_shape(census, simulated);
    if (census.empty())
        return 0.0;
    std::size_t bad = 0;
    for (std::size_t k = 0; k < census.size(); ++k)
    {
        const double u = census[k];
        const double t = simulated[k];
        if (u == 0.0 ? t != 0.0 : std::abs(t - u) > threshold * u)
            ++bad;
    }
    return 100.0 * static_cast<double>(bad) / static_cast<double>(census.size());
}

std::vector<double> zm_cells(std::span<const double> census, std::span<const double> simulated)
{
    check_shape(census, simulated);
    const double n = total(census);
    if (!(n > 0.0))
        throw Error(ErrorKind::zero_population, "Zm undefined when the census total is 0");
    std::vector<double> zm(census.size());
    for (std::size_t k = 0; k < census.size(); ++k)
    {
        // (r - p) / sqrt(p (1 - p) / n) with the proportions multiplied out,
        // which keeps whole-number cases exact
        const double u = census[k];
        const double t = simulated[k];
        const double var = u * (n - u) / n;
        if (var > 0.0)
            zm[k] = (t - u) / std::sqrt(var);
        else if (t == u)
            zm[k] = 0.0;
        else
            zm[k] = t > u ? kZmDegenerate : -kZmDegenerate;
    }
    return zm;
}

ZmSummary zm_summary(std::span<const double> zm, double critical)
{
    ZmSummary s;
    if (zm.empty())
        return s;
    std::size_t sig = 0;
    for (double z : zm)
    {
        if (std::abs(z) > critical)
            ++sig;
        if (std::abs(z) < kZmDegenerate)
            s.zm_sq += z * z;
    }
    s.sig_pct = 100.0 * static_cast<double>(sig) / static_cast<double>(zm.size());
    return s;
}

DiffStats population_diffs(std::span<const double> simulated, std::span<const std::uint64_t> pops)
{
    if (simulated.size() != pops.size())
        throw Error(ErrorKind::missing_zone, std::to_string(simulated.size()) + " simulated zones for " +
                                                 std::to_string(pops.size()) + " census zones");
    DiffStats s;
    if (pops.empty())
        return s;
    const auto n = static_cast<double>(pops.size());
    std::vector<double> diff(pops.size());
    double census_total = 0.0;
    for (std::size_t z = 0; z < pops.size(); ++z)
    {
        diff[z] = simulated[z] - static_cast<double>(pops[z]);
        census_total += static_cast<double>(pops[z]);
    }
    const double sum = total(diff);
    s.mean = sum / n;
    s.max = *std::max_element(diff.begin(), diff.end());
    s.min = *std::min_element(diff.begin(), diff.end());
    if (pops.size() > 1)
    {
        double ss = 0.0;
        for (double d : diff)
            ss += (d - s.mean) * (d - s.mean);
        s.sd = std::sqrt(ss / (n - 1.0));
    }
    s.oversample_pct = census_total > 0.0 ? 100.0 * sum / census_total : 0.0;
    return s;
}

DiffStats population_diffs(std::span<const IntegerisedZone> zones, std::span<const std::uint64_t> pops)
{
    std::vector<double> simulated(pops.size(), 0.0);
    std::vector<bool> seen(pops.size(), false);
    for (const auto& z : zones)
    {
        if (z.zone >= pops.size())
            throw Error(ErrorKind::missing_zone, "zone index " + std::to_string(z.zone) + " has no census population");
        simulated[z.zone] = static_cast<double>(z.population());
        seen[z.zone] = true;
    }
    for (std::size_t z = 0; z < seen.size(); ++z)
        if (!seen[z])
            throw Error(ErrorKind::missing_zone, "no integerised result for zone " + std::to_string(z));
    return population_diffs(std::span<const double>(simulated), pops);
}

FitReport full_report(const std::string& method, const Table& census, const Table& simulated,
                      std::span<const ConstraintBlock> blocks, const DiffStats& population)
{
    if (census.rows() != simulated.rows() || census.cols() != simulated.cols())
        throw Error(ErrorKind::dimension_mismatch, "census and simulated tables differ in shape");
    FitReport report;
    report.method = method;
    for (const auto& b : blocks)
    {
        const auto u = flatten_block(census, b.offset, b.size);
        const auto t = flatten_block(simulated, b.offset, b.size);
        report.constraints.push_back(fit_row(b.name, u, t));
    }
    report.overall = fit_row("All", census.flat(), simulated.flat());
    report.population = population;
    return report;
}

FitReport full_report(const std::string& method, const Table& census, const Table& simulated,
                      std::span<const ConstraintBlock> blocks, std::span<const IntegerisedZone> zones,
                      std::span<const std::uint64_t> pops)
{
    return full_report(method, census, simulated, blocks, population_diffs(zones, pops));
}

// ---------------------------------------------------------------------------

namespace
{

std::string num(double v)
{
    if (std::isnan(v))
        return "NA";
    return csv::format_double(v);
}

void write_row(std::ostream& out, const std::string& method, const FitRow& r)
{
    out << csv::escape(method) << ',' << csv::escape(r.variable) << ',' << num(r.tae) << ',' << num(r.sae_pct) << ','
        << num(r.err_gt5_pct) << ',' << num(r.zm_sig_pct) << ',' << num(r.zm_sq) << ',' << num(r.pearson_r) << '\n';
}

nlohmann::json to_json(const FitRow& r)
{
    auto value = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    return {{"variable", r.variable},       {"tae", value(r.tae)},     {"sae_pct", value(r.sae_pct)},
            {"pearson_r", value(r.pearson_r)}, {"err_gt5_pct", value(r.err_gt5_pct)},
            {"zm_sq", value(r.zm_sq)},       {"zm_sig_pct", value(r.zm_sig_pct)}};
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, std::span<const FitReport> reports)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::file_not_found, "cannot write '" + path.string() + "'");
    out << "method,variable,tae,sae_pct,err_gt5_pct,zm_sig_pct,zm_sq,pearson_r\n";
    for (const auto& rep : reports)
    {
        for (const auto& row : rep.constraints)
            write_row(out, rep.method, row);
        write_row(out, rep.method, rep.overall);
    }
}

void write_report_json(const std::filesystem::path& path, std::span<const FitReport> reports)
{
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& rep : reports)
    {
        nlohmann::json constraints = nlohmann::json::array();
        for (const auto& row : rep.constraints)
            constraints.push_back(to_json(row));
        const auto& d = rep.population;
        doc.push_back({{"method", rep.method},
                       {"constraints", constraints},
                       {"overall", to_json(rep.overall)},
                       {"population",
                        {{"mean", d.mean}, {"sd", d.sd}, {"max", d.max}, {"min", d.min},
                         {"oversample_pct", d.oversample_pct}}}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::file_not_found, "cannot write '" + path.string() + "'");
    out << doc.dump(2) << '\n';
}

void write_diffs_csv(const std::filesystem::path& path, std::span<const FitReport> reports)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::file_not_found, "cannot write '" + path.string() + "'");
    out << "method,mean,sd,max,min,oversample_pct\n";
    for (const auto& rep : reports)
    {
        const auto& d = rep.population;
        out << csv::escape(rep.method) << ',' << num(d.mean) << ',' << num(d.sd) << ',' << num(d.max) << ','
            << num(d.min) << ',' << num(d.oversample_pct) << '\n';
    }
}

}  // namespace microsim
