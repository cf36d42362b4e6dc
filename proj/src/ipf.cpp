#include "microsim/ipf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "microsim/csv.hpp"
#include "microsim/error.hpp"
#include "microsim/parallel.hpp"

namespace microsim
{

WeightMatrix::WeightMatrix(std::size_t individuals, std::size_t zones, double fill)
    : individuals_(individuals), zones_(zones), data_(individuals * zones, fill)
{
    zone_ids.reserve(zones);
    for (std::size_t z = 0; z < zones; ++z)
        zone_ids.push_back(std::to_string(z));
}

std::vector<double> WeightMatrix::zone_totals() const
{
    std::vector<double> out(zones_, 0.0);
    for (std::size_t z = 0; z < zones_; ++z)
        for (double v : zone(z))
            out[z] += v;
    return out;
}

WeightMatrix initialize_weights(std::size_t individuals, std::size_t zones, double initial)
{
    if (individuals == 0 || zones == 0)
        throw Error(ErrorKind::empty_dimension, "weight matrix needs at least one individual and one zone");
    if (!(initial > 0.0) || !std::isfinite(initial))
        throw Error(ErrorKind::bad_config, "initial weight must be positive and finite");
    return WeightMatrix(individuals, zones, initial);
}

namespace
{

void check_conformance(const WeightMatrix& w, const Indicator& indicator)
{
    if (w.individuals() != indicator.individuals())
        throw Error(ErrorKind::dimension_mismatch, "weights have " + std::to_string(w.individuals()) +
                                                       " individuals, indicator " +
                                                       std::to_string(indicator.individuals()));
}

void aggregate_zone(std::span<const double> weights, const Indicator& indicator, std::span<double> out)
{
    for (std::size_t c = 0; c < indicator.blocks().size(); ++c)
    {
        const auto off = indicator.blocks()[c].offset;
        const auto cats = indicator.categories(c);
        for (std::size_t i = 0; i < weights.size(); ++i)
            out[off + cats[i]] += weights[i];
    }
}

double abs_diff_sum(const Table& a, const Table& b, std::size_t first, std::size_t count)
{
    double sum = 0.0;
    for (std::size_t z = 0; z < a.rows(); ++z)
        for (std::size_t k = first; k < first + count; ++k)
            sum += std::abs(a(z, k) - b(z, k));
    return sum;
}

}  // namespace

Table aggregate(const WeightMatrix& w, const Indicator& indicator)
{
    check_conformance(w, indicator);
    Table out(w.zones(), indicator.total_categories());
    for (std::size_t z = 0; z < w.zones(); ++z)
        aggregate_zone(w.zone(z), indicator, out.row(z));
    return out;
}

std::vector<EmptyCell> constrain(WeightMatrix& w, const Indicator& indicator, const ConstraintSet& constraints,
                                 std::size_t constraint, unsigned threads)
{
    check_conformance(w, indicator);
    if (constraint >= constraints.constraints().size() || constraint >= indicator.blocks().size())
        throw Error(ErrorKind::dimension_mismatch, "constraint index out of range");
    const auto& target = constraints.constraints()[constraint];
    const auto& block = indicator.blocks()[constraint];
    if (block.size != target.categories.size() || w.zones() != constraints.zone_count())
        throw Error(ErrorKind::dimension_mismatch, "constraint '" + target.name + "' does not align with indicator block");

    const auto cats = indicator.categories(constraint);
    std::vector<std::vector<EmptyCell>> empty(w.zones());

    parallel_for(w.zones(), threads, [&](std::size_t z) {
        auto col = w.zone(z);
        std::vector<double> simulated(block.size, 0.0);
        for (std::size_t i = 0; i < col.size(); ++i)
            simulated[cats[i]] += col[i];

        std::vector<double> factor(block.size, 1.0);
        for (std::size_t k = 0; k < block.size; ++k)
        {
            const double u = target.counts(z, k);
            if (simulated[k] > 0.0)
                factor[k] = u / simulated[k];
            else if (u > 0.0)
                empty[z].push_back({z, block.offset + k, u});
        }
        for (std::size_t i = 0; i < col.size(); ++i)
        {
            col[i] *= factor[cats[i]];
            if (!std::isfinite(col[i]))
                throw Error(ErrorKind::non_finite, "NonFinite(weight) individual " + std::to_string(i) + ", zone " +
                                                       std::to_string(z) + " after constraint '" + target.name + "'");
        }
    });

    std::vector<EmptyCell> out;
    for (auto& cells : empty)
        out.insert(out.end(), cells.begin(), cells.end());
    return out;
}

std::vector<double> FitTrace::iteration_tae() const
{
    std::vector<double> out;
    for (std::size_t e = 0; e < entries.size(); ++e)
        if (e + 1 == entries.size() || entries[e + 1].iteration != entries[e].iteration)
            out.push_back(entries[e].tae);
    return out;
}

IpfResult ipf_run(const Indicator& indicator, const ConstraintSet& constraints, const IpfOptions& options)
{
    if (indicator.blocks().size() != constraints.constraints().size())
        throw Error(ErrorKind::dimension_mismatch, "indicator and constraint set list different constraints");
    if (options.iterations == 0)
        throw Error(ErrorKind::bad_config, "iterations must be at least 1");

    IpfResult result{initialize_weights(indicator.individuals(), constraints.zone_count(), options.initial), {}};
    auto& w = result.weights;
    w.zone_ids = constraints.zones();
    for (const auto& c : constraints.constraints())
        w.constraint_order.push_back(c.name);

    const Table census = constraints.census();
    const auto& blocks = indicator.blocks();
    double previous = 0.0;
    for (std::size_t iter = 1; iter <= options.iterations; ++iter)
    {
        std::vector<EmptyCell> pass_empty;
        for (std::size_t c = 0; c < blocks.size(); ++c)
        {
            auto empty = constrain(w, indicator, constraints, c, options.threads);
            pass_empty.insert(pass_empty.end(), empty.begin(), empty.end());

            const Table simulated = aggregate(w, indicator);
            TraceEntry entry{iter, c, blocks[c].name, abs_diff_sum(census, simulated, 0, census.cols()), {}, 0.0};
            for (const auto& b : blocks)
                entry.constraint_tae.push_back(abs_diff_sum(census, simulated, b.offset, b.size));
            for (const auto& cell : empty)
                entry.empty_cell_residual += cell.target;
            result.trace.entries.push_back(std::move(entry));
        }
        result.trace.empty_cells = std::move(pass_empty);
        w.iterations = iter;

        const double tae = result.trace.entries.back().tae;
        if (options.tolerance && iter > 1 && previous - tae < *options.tolerance)
            break;
        previous = tae;
    }
    return result;
}

IpfResult ipf_run(const SurveyMicrodata& survey, const ConstraintSet& constraints, const CategoryMap& map,
                  const IpfOptions& options)
{
    const auto indicator = build_indicator(survey, align_to(map, constraints));
    return ipf_run(indicator, constraints, options);
}

// ---------------------------------------------------------------------------
// Serialization

void write_weights_csv(const std::filesystem::path& path, const WeightMatrix& w)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::file_not_found, "cannot write '" + path.string() + "'");
    out << "individual";
    for (const auto& id : w.zone_ids)
        out << ',' << csv::escape(id);
    out << '\n';
    for (std::size_t i = 0; i < w.individuals(); ++i)
    {
        out << i;
        for (std::size_t z = 0; z < w.zones(); ++z)
            out << ',' << csv::format_double(w(i, z));
        out << '\n';
    }
}

WeightMatrix read_weights_csv(const std::filesystem::path& path)
{
    auto doc = csv::read(path);
    if (doc.header.size() < 2 || doc.rows.empty())
        throw Error(ErrorKind::empty_file, "'" + path.string() + "' holds no weights");
    WeightMatrix w(doc.rows.size(), doc.header.size() - 1);
    w.zone_ids.assign(doc.header.begin() + 1, doc.header.end());
    for (std::size_t i = 0; i < doc.rows.size(); ++i)
    {
        const auto& cells = doc.rows[i];
        if (cells.size() != doc.header.size())
            throw Error(ErrorKind::unparseable_cell, "'" + path.string() + "' line " + std::to_string(doc.lines[i]) +
                                                         ": wrong cell count");
        for (std::size_t z = 0; z < w.zones(); ++z)
        {
            auto v = csv::parse_double(cells[z + 1]);
            if (!v)
                throw Error(ErrorKind::unparseable_cell, "'" + path.string() + "' line " +
                                                             std::to_string(doc.lines[i]) + ": '" + cells[z + 1] + "'");
            w(i, z) = *v;
        }
    }
    return w;
}

namespace
{

template <typename T>
void put_le(std::ostream& out, T value)
{
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(std::begin(bytes), std::end(bytes));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path)
{
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw Error(ErrorKind::unparseable_cell, "'" + path.string() + "' is truncated");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(std::begin(bytes), std::end(bytes));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

constexpr char kMagic[4] = {'M', 'S', 'W', 'M'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void write_weights_binary(const std::filesystem::path& path, const WeightMatrix& w)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::file_not_found, "cannot write '" + path.string() + "'");
    out.write(kMagic, 4);
    put_le<std::uint16_t>(out, kVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.individuals()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.zones()));
    for (double v : w.flat())
        put_le<double>(out, v);
}

WeightMatrix read_weights_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::file_not_found, "cannot open '" + path.string() + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw Error(ErrorKind::unparseable_cell, "'" + path.string() + "' is not an MSWM weight file");
    const auto version = get_le<std::uint16_t>(in, path);
    if (version != kVersion)
        throw Error(ErrorKind::unparseable_cell, "unsupported MSWM version " + std::to_string(version));
    const auto individuals = get_le<std::uint32_t>(in, path);
    const auto zones = get_le<std::uint32_t>(in, path);
    WeightMatrix w(individuals, zones);
    for (std::size_t z = 0; z < zones; ++z)
        for (auto& v : w.zone(z))
            v = get_le<double>(in, path);
    return w;
}

WeightMatrix read_weights(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::file_not_found, "cannot open '" + path.string() + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0)
        return read_weights_binary(path);
    return read_weights_csv(path);
}

void write_trace_csv(const std::filesystem::path& path, const FitTrace& trace)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::file_not_found, "cannot write '" + path.string() + "'");
    out << "iteration,constraint,tae\n";
    for (const auto& e : trace.entries)
        out << e.iteration << ',' << csv::escape(e.constraint_name) << ',' << csv::format_double(e.tae) << '\n';
}

}  // namespace microsim
