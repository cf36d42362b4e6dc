#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "microsim/table.hpp"

namespace microsim
{

// ---------------------------------------------------------------------------
// Category map: how survey attributes are binned and how each constraint
// category is recognised in the survey.
// ---------------------------------------------------------------------------

/// Half-open numeric interval [lo, hi) mapped to a category label.
struct Bin
{
    std::string label;
    double lo = 0.0;
    double hi = 0.0;
};

struct BinSpec
{
    std::string attribute;
    std::vector<Bin> bins;

    /// Label of the bin containing `value`, if any.
    std::optional<std::string> classify(double value) const;
};

struct AttributeTest
{
    std::string attribute;
    std::string label;
};

/// A constraint category is a conjunction of attribute tests.
struct CategoryDef
{
    std::string label;
    std::vector<AttributeTest> tests;
};

struct ConstraintDef
{
    std::string name;
    std::vector<CategoryDef> categories;
};

struct CategoryMap
{
    std::vector<BinSpec> bins;
    std::vector<ConstraintDef> constraints;

    const BinSpec* bin_spec(std::string_view attribute) const;
    const ConstraintDef* constraint(std::string_view name) const;
    /// Every attribute referenced by a category test, in first-use order.
    std::vector<std::string> attributes() const;
    std::size_t total_categories() const;
};

/// Line-oriented map format:
///
///     # comment
///     bin <attribute> <label>:<lo>:<hi> ...        (hi may be "inf")
///     category <constraint> <label> <attr>=<label> [<attr>=<label> ...]
///
/// Constraint and category order follow first appearance.
CategoryMap parse_category_map(std::string_view text);
CategoryMap load_category_map(const std::filesystem::path& path);
std::string format_category_map(const CategoryMap& map);

// ---------------------------------------------------------------------------
// Survey microdata
// ---------------------------------------------------------------------------

/// Survey roster with categorical attributes. Row index is the individual id.
class SurveyMicrodata
{
public:
    SurveyMicrodata() = default;
    SurveyMicrodata(std::vector<std::string> attributes, std::vector<std::vector<std::string>> rows);

    std::size_t size() const noexcept { return rows_.size(); }
    const std::vector<std::string>& attributes() const noexcept { return attributes_; }
    std::optional<std::size_t> attribute_index(std::string_view name) const;
    const std::string& value(std::size_t individual, std::size_t attribute) const
    {
        return rows_[individual][attribute];
    }
    const std::vector<std::string>& row(std::size_t individual) const { return rows_[individual]; }
    const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

private:
    std::vector<std::string> attributes_;
    std::vector<std::vector<std::string>> rows_;
};

/// Reads a survey CSV. Attributes with a bin spec in `schema` are parsed as
/// numbers and replaced by their bin label; values outside every bin are kept
/// verbatim (and later fail classification).
SurveyMicrodata load_survey(const std::filesystem::path& path, const CategoryMap& schema);
void write_survey(const std::filesystem::path& path, const SurveyMicrodata& survey);

// ---------------------------------------------------------------------------
// Constraint tables
// ---------------------------------------------------------------------------

struct Constraint
{
    std::string name;
    std::vector<std::string> categories;
    Table counts;  // zones x categories
};

enum class ConsistencyMode
{
    strict,
    lenient,
};

struct ConstraintLoadOptions
{
    ConsistencyMode mode = ConsistencyMode::strict;
    /// Allowed absolute row-sum disagreement before strict mode errors.
    double tolerance = 0.0;
};

class ConstraintSet
{
public:
    ConstraintSet() = default;
    ConstraintSet(std::vector<std::string> zones, std::vector<Constraint> constraints);

    const std::vector<std::string>& zones() const noexcept { return zones_; }
    const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
    std::size_t zone_count() const noexcept { return zones_.size(); }
    std::size_t total_categories() const noexcept;
    /// Column offset of constraint `c` in the concatenated census table.
    std::size_t offset(std::size_t c) const;

    /// Per-zone census population, taken from the first constraint.
    std::vector<double> populations() const;
    /// Zones x all categories, constraints concatenated in declared order.
    Table census() const;

    /// Messages about lenient rescaling applied while loading.
    std::vector<std::string> notes;

private:
    std::vector<std::string> zones_;
    std::vector<Constraint> constraints_;
};

ConstraintSet load_constraints(std::span<const std::filesystem::path> paths,
                               const ConstraintLoadOptions& options = {});
/// Checks row sums and applies the lenient rescale in place.
void reconcile_populations(ConstraintSet& set, const ConstraintLoadOptions& options);
void write_constraint(const std::filesystem::path& path, const std::vector<std::string>& zones,
                      const Constraint& constraint);

// ---------------------------------------------------------------------------
// Indicator matrix
// ---------------------------------------------------------------------------

struct ConstraintBlock
{
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Sparse form of the individuals x categories 0/1 matrix: each individual
/// falls in exactly one category of every constraint.
class Indicator
{
public:
    Indicator() = default;
    /// `categories[c][i]` is the local category of individual i in constraint c.
    Indicator(std::vector<ConstraintBlock> blocks, std::vector<std::vector<std::uint32_t>> categories);

    std::size_t individuals() const noexcept { return individuals_; }
    std::size_t total_categories() const noexcept { return total_; }
    const std::vector<ConstraintBlock>& blocks() const noexcept { return blocks_; }

    std::uint32_t category(std::size_t constraint, std::size_t individual) const
    {
        return categories_[constraint][individual];
    }
    std::span<const std::uint32_t> categories(std::size_t constraint) const { return categories_[constraint]; }

    int at(std::size_t individual, std::size_t column) const;
    Table dense() const;

    /// Global column indices with no matching individual.
    std::vector<std::size_t> empty_categories() const;

private:
    std::vector<ConstraintBlock> blocks_;
    std::vector<std::vector<std::uint32_t>> categories_;
    std::size_t individuals_ = 0;
    std::size_t total_ = 0;
};

Indicator build_indicator(const SurveyMicrodata& survey, const CategoryMap& map);

/// Reorders the map's constraints and categories to follow `set`. Throws
/// bad_config when a constraint or category has no definition.
CategoryMap align_to(const CategoryMap& map, const ConstraintSet& set);

}  // namespace microsim
