#include "microsim/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "microsim/csv.hpp"
#include "microsim/error.hpp"

namespace microsim
{

namespace
{

std::vector<std::string> tokens(std::string_view line)
{
    std::vector<std::string> out;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok)
        out.push_back(tok);
    return out;
}

double parse_edge(const std::string& text, std::size_t line_no)
{
    if (text == "inf" || text == "+inf")
        return std::numeric_limits<double>::infinity();
    if (text == "-inf")
        return -std::numeric_limits<double>::infinity();
    auto v = csv::parse_double(text);
    if (!v)
        throw Error(ErrorKind::bad_config,
                    "line " + std::to_string(line_no) + ": bad bin edge '" + text + "'");
    return *v;
}

std::string format_edge(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    return csv::format_double(v);
}

}  // namespace

// ---------------------------------------------------------------------------
// CategoryMap

std::optional<std::string> BinSpec::classify(double value) const
{
    for (const auto& bin : bins)
        if (value >= bin.lo && value < bin.hi)
            return bin.label;
    return std::nullopt;
}

const BinSpec* CategoryMap::bin_spec(std::string_view attribute) const
{
    for (const auto& spec : bins)
        if (spec.attribute == attribute)
            return &spec;
    return nullptr;
}

const ConstraintDef* CategoryMap::constraint(std::string_view name) const
{
    for (const auto& def : constraints)
        if (def.name == name)
            return &def;
    return nullptr;
}

std::vector<std::string> CategoryMap::attributes() const
{
    std::vector<std::string> out;
    for (const auto& def : constraints)
        for (const auto& cat : def.categories)
            for (const auto& test : cat.tests)
                if (std::find(out.begin(), out.end(), test.attribute) == out.end())
                    out.push_back(test.attribute);
    return out;
}

std::size_t CategoryMap::total_categories() const
{
    std::size_t n = 0;
    for (const auto& def : constraints)
        n += def.categories.size();
    return n;
}

CategoryMap parse_category_map(std::string_view text)
{
    CategoryMap map;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        auto tok = tokens(line);
        if (tok.empty())
            continue;
        const auto where = "line " + std::to_string(line_no) + ": ";

        if (tok[0] == "bin")
        {
            if (tok.size() < 3)
                throw Error(ErrorKind::bad_config, where + "bin needs an attribute and at least one bin");
            BinSpec spec{tok[1], {}};
            for (std::size_t t = 2; t < tok.size(); ++t)
            {
                // label:lo:hi, split from the right so labels may contain ':'
                auto hi_pos = tok[t].rfind(':');
                auto lo_pos = hi_pos == std::string::npos || hi_pos == 0 ? std::string::npos
                                                                         : tok[t].rfind(':', hi_pos - 1);
                if (lo_pos == std::string::npos)
                    throw Error(ErrorKind::bad_config, where + "bin '" + tok[t] + "' is not label:lo:hi");
                Bin bin{tok[t].substr(0, lo_pos), parse_edge(tok[t].substr(lo_pos + 1, hi_pos - lo_pos - 1), line_no),
                        parse_edge(tok[t].substr(hi_pos + 1), line_no)};
                if (!(bin.lo < bin.hi))
                    throw Error(ErrorKind::bad_config, where + "empty bin '" + tok[t] + "'");
                spec.bins.push_back(std::move(bin));
            }
            if (map.bin_spec(spec.attribute))
                throw Error(ErrorKind::bad_config, where + "duplicate bin spec for '" + spec.attribute + "'");
            map.bins.push_back(std::move(spec));
        }
        else if (tok[0] == "category")
        {
            if (tok.size() < 4)
                throw Error(ErrorKind::bad_config, where + "category needs constraint, label and >=1 test");
            CategoryDef cat{tok[2], {}};
            for (std::size_t t = 3; t < tok.size(); ++t)
            {
                auto eq = tok[t].find('=');
                if (eq == std::string::npos || eq == 0)
                    throw Error(ErrorKind::bad_config, where + "test '" + tok[t] + "' is not attr=label");
                cat.tests.push_back({tok[t].substr(0, eq), tok[t].substr(eq + 1)});
            }
            auto it = std::find_if(map.constraints.begin(), map.constraints.end(),
                                   [&](const ConstraintDef& d) { return d.name == tok[1]; });
            if (it == map.constraints.end())
            {
                map.constraints.push_back({tok[1], {}});
                it = std::prev(map.constraints.end());
            }
            for (const auto& existing : it->categories)
                if (existing.label == cat.label)
                    throw Error(ErrorKind::bad_config, where + "duplicate category '" + cat.label + "'");
            it->categories.push_back(std::move(cat));
        }
        else
        {
            throw Error(ErrorKind::bad_config, where + "unknown directive '" + tok[0] + "'");
        }
    }
    return map;
}

CategoryMap load_category_map(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::file_not_found, "cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_category_map(buf.str());
}

std::string format_category_map(const CategoryMap& map)
{
    std::ostringstream out;
    for (const auto& spec : map.bins)
    {
        out << "bin " << spec.attribute;
        for (const auto& bin : spec.bins)
            out << ' ' << bin.label << ':' << format_edge(bin.lo) << ':' << format_edge(bin.hi);
        out << '\n';
    }
    for (const auto& def : map.constraints)
        for (const auto& cat : def.categories)
        {
            out << "category " << def.name << ' ' << cat.label;
            for (const auto& test : cat.tests)
                out << ' ' << test.attribute << '=' << test.label;
            out << '\n';
        }
    return out.str();
}

// ---------------------------------------------------------------------------
// Survey

SurveyMicrodata::SurveyMicrodata(std::vector<std::string> attributes, std::vector<std::vector<std::string>> rows)
    : attributes_(std::move(attributes)), rows_(std::move(rows))
{
    for (std::size_t i = 0; i < rows_.size(); ++i)
        if (rows_[i].size() != attributes_.size())
            throw Error(ErrorKind::dimension_mismatch, "survey row " + std::to_string(i) + " has " +
                                                           std::to_string(rows_[i].size()) + " values, expected " +
                                                           std::to_string(attributes_.size()));
}

std::optional<std::size_t> SurveyMicrodata::attribute_index(std::string_view name) const
{
    for (std::size_t a = 0; a < attributes_.size(); ++a)
        if (attributes_[a] == name)
            return a;
    return std::nullopt;
}

SurveyMicrodata load_survey(const std::filesystem::path& path, const CategoryMap& schema)
{
    auto doc = csv::read(path);
    if (doc.rows.empty())
        throw Error(ErrorKind::empty_file, "'" + path.string() + "' has no individuals");

    const auto& header = doc.header;
    for (const auto& attr : schema.attributes())
        if (std::find(header.begin(), header.end(), attr) == header.end())
            throw Error(ErrorKind::missing_attribute, "survey '" + path.string() + "' has no column '" + attr + "'");

    std::vector<const BinSpec*> binning(header.size(), nullptr);
    for (std::size_t a = 0; a < header.size(); ++a)
        binning[a] = schema.bin_spec(header[a]);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(doc.rows.size());
    for (std::size_t r = 0; r < doc.rows.size(); ++r)
    {
        auto& cells = doc.rows[r];
        if (cells.size() > header.size())
            throw Error(ErrorKind::unparseable_cell, "survey row " + std::to_string(r) + " (line " +
                                                         std::to_string(doc.lines[r]) + ") has too many cells");
        cells.resize(header.size());
        for (std::size_t a = 0; a < header.size(); ++a)
        {
            if (cells[a].empty())
                throw Error(ErrorKind::missing_value,
                            "MissingValue(row " + std::to_string(r) + ", attribute '" + header[a] + "')");
            if (binning[a])
            {
                auto v = csv::parse_double(cells[a]);
                if (!v)
                    throw Error(ErrorKind::unparseable_cell, "row " + std::to_string(r) + ", attribute '" +
                                                                 header[a] + "': '" + cells[a] + "' is not numeric");
                if (auto label = binning[a]->classify(*v))
                    cells[a] = *label;
            }
        }
        rows.push_back(std::move(cells));
    }
    return SurveyMicrodata(header, std::move(rows));
}

void write_survey(const std::filesystem::path& path, const SurveyMicrodata& survey)
{
    std::ofstream out(path, std::ios::binary);
    for (std::size_t a = 0; a < survey.attributes().size(); ++a)
        out << (a ? "," : "") << csv::escape(survey.attributes()[a]);
    out << '\n';
    for (std::size_t i = 0; i < survey.size(); ++i)
    {
        const auto& row = survey.row(i);
        for (std::size_t a = 0; a < row.size(); ++a)
            out << (a ? "," : "") << csv::escape(row[a]);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Constraints

ConstraintSet::ConstraintSet(std::vector<std::string> zones, std::vector<Constraint> constraints)
    : zones_(std::move(zones)), constraints_(std::move(constraints))
{
    for (const auto& c : constraints_)
        if (c.counts.rows() != zones_.size() || c.counts.cols() != c.categories.size())
            throw Error(ErrorKind::dimension_mismatch, "constraint '" + c.name + "' table does not match " +
                                                           std::to_string(zones_.size()) + " zones x " +
                                                           std::to_string(c.categories.size()) + " categories");
}

std::size_t ConstraintSet::total_categories() const noexcept
{
    std::size_t n = 0;
    for (const auto& c : constraints_)
        n += c.categories.size();
    return n;
}

std::size_t ConstraintSet::offset(std::size_t c) const
{
    std::size_t off = 0;
    for (std::size_t k = 0; k < c; ++k)
        off += constraints_[k].categories.size();
    return off;
}

std::vector<double> ConstraintSet::populations() const
{
    std::vector<double> pops(zones_.size(), 0.0);
    if (constraints_.empty())
        return pops;
    const auto& first = constraints_.front().counts;
    for (std::size_t z = 0; z < zones_.size(); ++z)
        for (double v : first.row(z))
            pops[z] += v;
    return pops;
}

Table ConstraintSet::census() const
{
    Table out(zones_.size(), total_categories());
    std::size_t off = 0;
    for (const auto& c : constraints_)
    {
        for (std::size_t z = 0; z < zones_.size(); ++z)
            for (std::size_t k = 0; k < c.categories.size(); ++k)
                out(z, off + k) = c.counts(z, k);
        off += c.categories.size();
    }
    return out;
}

void reconcile_populations(ConstraintSet& set, const ConstraintLoadOptions& options)
{
    if (set.constraints().size() < 2)
        return;
    const auto pops = set.populations();
    auto constraints = set.constraints();
    std::vector<std::string> notes = set.notes;
    for (std::size_t c = 1; c < constraints.size(); ++c)
    {
        auto& counts = constraints[c].counts;
        for (std::size_t z = 0; z < set.zone_count(); ++z)
        {
            double row_sum = 0.0;
            for (double v : counts.row(z))
                row_sum += v;
            if (std::abs(row_sum - pops[z]) <= options.tolerance)
                continue;
            if (options.mode == ConsistencyMode::strict || row_sum <= 0.0)
                throw Error(ErrorKind::population_mismatch,
                            "PopulationMismatch(zone " + std::to_string(z) + " '" + set.zones()[z] + "'): constraint '" +
                                constraints[c].name + "' sums to " + csv::format_double(row_sum) + ", '" +
                                constraints[0].name + "' to " + csv::format_double(pops[z]));
            const double scale = pops[z] / row_sum;
            for (double& v : counts.row(z))
                v *= scale;
            notes.push_back("rescaled constraint '" + constraints[c].name + "' zone '" + set.zones()[z] + "' from " +
                            csv::format_double(row_sum) + " to " + csv::format_double(pops[z]));
        }
    }
    ConstraintSet rebuilt(set.zones(), std::move(constraints));
    rebuilt.notes = std::move(notes);
    set = std::move(rebuilt);
}

ConstraintSet load_constraints(std::span<const std::filesystem::path> paths, const ConstraintLoadOptions& options)
{
    if (paths.empty())
        throw Error(ErrorKind::bad_config, "no constraint files given");

    std::vector<std::string> zones;
    std::vector<Constraint> constraints;
    for (const auto& path : paths)
    {
        auto doc = csv::read(path);
        if (doc.header.size() < 2)
            throw Error(ErrorKind::unparseable_cell, "'" + path.string() + "' needs a zone column and >=1 category");
        if (doc.rows.empty())
            throw Error(ErrorKind::empty_file, "'" + path.string() + "' has no zones");

        Constraint c;
        c.name = path.stem().string();
        c.categories.assign(doc.header.begin() + 1, doc.header.end());
        c.counts = Table(doc.rows.size(), c.categories.size());
        std::vector<std::string> file_zones;
        for (std::size_t r = 0; r < doc.rows.size(); ++r)
        {
            const auto& cells = doc.rows[r];
            if (cells.size() != doc.header.size())
                throw Error(ErrorKind::unparseable_cell, "'" + path.string() + "' line " +
                                                             std::to_string(doc.lines[r]) + ": expected " +
                                                             std::to_string(doc.header.size()) + " cells");
            file_zones.push_back(cells[0]);
            for (std::size_t k = 0; k < c.categories.size(); ++k)
            {
                auto v = csv::parse_integer(cells[k + 1]);
                if (!v)
                    throw Error(ErrorKind::unparseable_cell, "'" + path.string() + "' line " +
                                                                 std::to_string(doc.lines[r]) + ": '" + cells[k + 1] +
                                                                 "' is not an integer count");
                if (*v < 0)
                    throw Error(ErrorKind::negative_count, "'" + path.string() + "' zone '" + cells[0] +
                                                               "' category '" + c.categories[k] + "'");
                c.counts(r, k) = static_cast<double>(*v);
            }
        }
        if (std::set<std::string>(file_zones.begin(), file_zones.end()).size() != file_zones.size())
            throw Error(ErrorKind::zone_mismatch, "'" + path.string() + "' repeats a zone id");

        if (constraints.empty())
        {
            zones = std::move(file_zones);
        }
        else
        {
            // same zone set required; rows are reordered to the first file's order
            std::unordered_map<std::string, std::size_t> index;
            for (std::size_t r = 0; r < file_zones.size(); ++r)
                index.emplace(file_zones[r], r);
            if (file_zones.size() != zones.size())
                throw Error(ErrorKind::zone_mismatch, "'" + path.string() + "' has " +
                                                          std::to_string(file_zones.size()) + " zones, expected " +
                                                          std::to_string(zones.size()));
            Table reordered(zones.size(), c.categories.size());
            for (std::size_t z = 0; z < zones.size(); ++z)
            {
                auto it = index.find(zones[z]);
                if (it == index.end())
                    throw Error(ErrorKind::zone_mismatch, "'" + path.string() + "' lacks zone '" + zones[z] + "'");
                for (std::size_t k = 0; k < c.categories.size(); ++k)
                    reordered(z, k) = c.counts(it->second, k);
            }
            c.counts = std::move(reordered);
        }
        constraints.push_back(std::move(c));
    }

    ConstraintSet set(std::move(zones), std::move(constraints));
    reconcile_populations(set, options);
    return set;
}

void write_constraint(const std::filesystem::path& path, const std::vector<std::string>& zones,
                      const Constraint& constraint)
{
    std::ofstream out(path, std::ios::binary);
    out << "zone";
    for (const auto& cat : constraint.categories)
        out << ',' << csv::escape(cat);
    out << '\n';
    for (std::size_t z = 0; z < zones.size(); ++z)
    {
        out << csv::escape(zones[z]);
        for (double v : constraint.counts.row(z))
            out << ',' << csv::format_double(v);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Indicator

Indicator::Indicator(std::vector<ConstraintBlock> blocks, std::vector<std::vector<std::uint32_t>> categories)
    : blocks_(std::move(blocks)), categories_(std::move(categories))
{
    if (blocks_.size() != categories_.size())
        throw Error(ErrorKind::dimension_mismatch, "indicator blocks and category vectors differ in count");
    individuals_ = categories_.empty() ? 0 : categories_.front().size();
    std::size_t off = 0;
    for (std::size_t c = 0; c < blocks_.size(); ++c)
    {
        blocks_[c].offset = off;
        off += blocks_[c].size;
        if (categories_[c].size() != individuals_)
            throw Error(ErrorKind::dimension_mismatch, "constraint '" + blocks_[c].name + "' classifies " +
                                                           std::to_string(categories_[c].size()) + " individuals, expected " +
                                                           std::to_string(individuals_));
        for (auto k : categories_[c])
            if (k >= blocks_[c].size)
                throw Error(ErrorKind::dimension_mismatch, "category index out of range in '" + blocks_[c].name + "'");
    }
    total_ = off;
}

int Indicator::at(std::size_t individual, std::size_t column) const
{
    for (std::size_t c = 0; c < blocks_.size(); ++c)
    {
        const auto& b = blocks_[c];
        if (column >= b.offset && column < b.offset + b.size)
            return categories_[c][individual] == column - b.offset ? 1 : 0;
    }
    return 0;
}

Table Indicator::dense() const
{
    Table out(individuals_, total_);
    for (std::size_t c = 0; c < blocks_.size(); ++c)
        for (std::size_t i = 0; i < individuals_; ++i)
            out(i, blocks_[c].offset + categories_[c][i]) = 1.0;
    return out;
}

std::vector<std::size_t> Indicator::empty_categories() const
{
    std::vector<bool> seen(total_, false);
    for (std::size_t c = 0; c < blocks_.size(); ++c)
        for (auto k : categories_[c])
            seen[blocks_[c].offset + k] = true;
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < total_; ++k)
        if (!seen[k])
            out.push_back(k);
    return out;
}

Indicator build_indicator(const SurveyMicrodata& survey, const CategoryMap& map)
{
    std::vector<ConstraintBlock> blocks;
    std::vector<std::vector<std::uint32_t>> categories;
    for (const auto& def : map.constraints)
    {
        // resolve attribute columns once per constraint
        std::vector<std::vector<std::pair<std::size_t, const std::string*>>> tests;
        for (const auto& cat : def.categories)
        {
            auto& resolved = tests.emplace_back();
            for (const auto& t : cat.tests)
            {
                auto a = survey.attribute_index(t.attribute);
                if (!a)
                    throw Error(ErrorKind::missing_attribute,
                                "category '" + def.name + "/" + cat.label + "' tests unknown attribute '" + t.attribute + "'");
                resolved.emplace_back(*a, &t.label);
            }
        }

        std::vector<std::uint32_t> assigned(survey.size());
        for (std::size_t i = 0; i < survey.size(); ++i)
        {
            std::size_t matches = 0;
            for (std::size_t k = 0; k < tests.size(); ++k)
            {
                bool ok = std::all_of(tests[k].begin(), tests[k].end(),
                                      [&](const auto& t) { return survey.value(i, t.first) == *t.second; });
                if (ok)
                {
                    assigned[i] = static_cast<std::uint32_t>(k);
                    ++matches;
                }
            }
            if (matches != 1)
                throw Error(ErrorKind::classification_error,
                            "ClassificationError(individual " + std::to_string(i) + ", constraint '" + def.name +
                                "'): matched " + std::to_string(matches) + " categories");
        }
        blocks.push_back({def.name, 0, def.categories.size()});
        categories.push_back(std::move(assigned));
    }
    return Indicator(std::move(blocks), std::move(categories));
}

CategoryMap align_to(const CategoryMap& map, const ConstraintSet& set)
{
    CategoryMap out;
    out.bins = map.bins;
    for (const auto& c : set.constraints())
    {
        const auto* def = map.constraint(c.name);
        if (!def)
            throw Error(ErrorKind::bad_config, "category map has no constraint '" + c.name + "'");
        ConstraintDef aligned{c.name, {}};
        for (const auto& label : c.categories)
        {
            auto it = std::find_if(def->categories.begin(), def->categories.end(),
                                   [&](const CategoryDef& d) { return d.label == label; });
            if (it == def->categories.end())
                throw Error(ErrorKind::bad_config, "category map has no category '" + c.name + "/" + label + "'");
            aligned.categories.push_back(*it);
        }
        if (aligned.categories.size() != def->categories.size())
            throw Error(ErrorKind::bad_config, "category map defines extra categories for '" + c.name + "'");
        out.constraints.push_back(std::move(aligned));
    }
    return out;
}

}  // namespace microsim
