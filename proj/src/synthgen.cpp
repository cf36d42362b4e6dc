#include "microsim/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "microsim/csv.hpp"
#include "microsim/error.hpp"
#include "microsim/rng.hpp"

namespace microsim
{

PopulationSpec PopulationSpec::full_scale(std::uint64_t seed)
{
    PopulationSpec spec;
    spec.zones = 71;
    spec.min_population = 2400;
    spec.max_population = 3400;
    spec.constraints = {{"age_sex", 12}, {"mode", 11}, {"distance", 8}, {"nssec", 9}};
    spec.survey_size = 4933;
    spec.seed = seed;
    return spec;
}

void PopulationSpec::validate() const
{
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::infeasible_spec, msg); };
    if (zones == 0)
        fail("at least one zone is required");
    if (min_population == 0 || min_population > max_population)
        fail("population range must satisfy 1 <= min <= max");
    if (constraints.empty())
        fail("at least one constraint is required");
    std::size_t total = 0;
    for (const auto& c : constraints)
    {
        if (c.categories < 2)
            fail("constraint '" + c.name + "' needs at least 2 categories");
        if (c.name.empty() || c.name.find_first_of(" ,=:#/") != std::string::npos)
            fail("constraint name '" + c.name + "' is not a plain identifier");
        total += c.categories;
    }
    if (survey_size < total)
        fail("survey size " + std::to_string(survey_size) + " is below the " + std::to_string(total) +
             " categories it must support");
    if (survey_size > zones * min_population)
        fail("survey size exceeds the smallest possible pooled population");
    if (!(concentration > 0.0))
        fail("concentration must be positive");
    if (!std::isfinite(survey_skew))
        fail("survey skew must be finite");
}

PopulationSpec parse_population_spec(std::string_view text)
{
    PopulationSpec spec;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        if (csv::trim(line).empty())
            continue;
        const auto where = "line " + std::to_string(line_no) + ": ";
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::bad_config, where + "expected key = value");
        const auto key = csv::trim(line.substr(0, eq));
        std::istringstream value(line.substr(eq + 1));

        auto read_count = [&](std::size_t& out) {
            std::string tok;
            value >> tok;
            auto v = csv::parse_integer(tok);
            if (!v || *v < 0)
                throw Error(ErrorKind::bad_config, where + "'" + key + "' needs a non-negative integer");
            out = static_cast<std::size_t>(*v);
        };
        auto read_real = [&](double& out) {
            std::string tok;
            value >> tok;
            auto v = csv::parse_double(tok);
            if (!v)
                throw Error(ErrorKind::bad_config, where + "'" + key + "' needs a number");
            out = *v;
        };

        if (key == "zones")
            read_count(spec.zones);
        else if (key == "population")
        {
            read_count(spec.min_population);
            read_count(spec.max_population);
        }
        else if (key == "constraints")
        {
            spec.constraints.clear();
            std::string tok;
            while (value >> tok)
            {
                auto colon = tok.rfind(':');
                auto n = colon == std::string::npos ? std::nullopt : csv::parse_integer(tok.substr(colon + 1));
                if (!n || *n < 0)
                    throw Error(ErrorKind::bad_config, where + "constraint '" + tok + "' is not name:categories");
                spec.constraints.push_back({tok.substr(0, colon), static_cast<std::size_t>(*n)});
            }
        }
        else if (key == "concentration")
            read_real(spec.concentration);
        else if (key == "survey_size")
            read_count(spec.survey_size);
        else if (key == "survey_skew")
            read_real(spec.survey_skew);
        else if (key == "seed")
        {
            std::string tok;
            value >> tok;
            try
            {
                std::size_t used = 0;
                spec.seed = std::stoull(tok, &used);
                if (used != tok.size())
                    throw std::invalid_argument(tok);
            }
            catch (const std::exception&)
            {
                throw Error(ErrorKind::bad_config, where + "seed must be an unsigned 64-bit integer");
            }
        }
        else if (key == "max_attempts")
            read_count(spec.max_attempts);
        else
            throw Error(ErrorKind::bad_config, where + "unknown key '" + key + "'");
    }
    return spec;
}

PopulationSpec load_population_spec(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::file_not_found, "cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_population_spec(buf.str());
}

namespace
{

double standard_normal(Rng& rng)
{
    const double u1 = 1.0 - rng.uniform();  // (0, 1]
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Marsaglia & Tsang (2000); shape < 1 boosted via Gamma(a + 1) * U^(1/a).
double gamma_variate(double shape, Rng& rng)
{
    if (shape < 1.0)
        return gamma_variate(shape + 1.0, rng) * std::pow(1.0 - rng.uniform(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;)
    {
        double x, v;
        do
        {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = 1.0 - rng.uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
            return d * v;
    }
}

std::vector<double> dirichlet(std::size_t k, double alpha, Rng& rng)
{
    std::vector<double> p(k);
    double sum = 0.0;
    for (auto& v : p)
    {
        v = gamma_variate(alpha, rng);
        sum += v;
    }
    if (!(sum > 0.0))
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(k));
    else
        for (auto& v : p)
            v /= sum;
    return p;
}

std::uint32_t categorical(const std::vector<double>& cumulative, Rng& rng)
{
    const double u = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end())
        --it;
    return static_cast<std::uint32_t>(it - cumulative.begin());
}

std::string category_label(std::size_t k) { return "c" + std::to_string(k + 1); }

struct Attempt
{
    SyntheticData data;
    bool supported = true;
    std::string missing;
};

Attempt attempt(const PopulationSpec& spec, std::uint64_t seed)
{
    Rng rng(seed);
    const std::size_t nc = spec.constraints.size();
    Attempt out;
    auto& data = out.data;

    // ground truth
    std::vector<std::string> zones;
    std::vector<Table> counts;
    for (const auto& c : spec.constraints)
        counts.emplace_back(spec.zones, c.categories);
    data.truth.resize(spec.zones);
    for (std::size_t z = 0; z < spec.zones; ++z)
    {
        zones.push_back("Z" + std::to_string(z + 1));
        const std::size_t range = spec.max_population - spec.min_population + 1;
        const std::size_t pop =
            spec.min_population + std::min(range - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(range)));
        std::vector<std::vector<double>> cumulative;
        for (const auto& c : spec.constraints)
        {
            auto p = dirichlet(c.categories, spec.concentration, rng);
            std::partial_sum(p.begin(), p.end(), p.begin());
            cumulative.push_back(std::move(p));
        }
        auto& truth = data.truth[z];
        truth.resize(pop * nc);
        for (std::size_t i = 0; i < pop; ++i)
            for (std::size_t c = 0; c < nc; ++c)
            {
                const auto k = categorical(cumulative[c], rng);
                truth[i * nc + c] = k;
                counts[c](z, k) += 1.0;
            }
    }

    // survey: weighted sample without replacement from the pooled population
    // using exponential keys log(u) / weight (largest keys win)
    struct Candidate
    {
        double key;
        std::uint32_t zone;
        std::uint32_t index;
    };
    std::vector<Candidate> pool;
    for (std::size_t z = 0; z < spec.zones; ++z)
    {
        const auto& truth = data.truth[z];
        for (std::size_t i = 0; i < truth.size() / nc; ++i)
        {
            double score = 0.0;
            for (std::size_t c = 0; c < nc; ++c)
                score += static_cast<double>(truth[i * nc + c]) / static_cast<double>(spec.constraints[c].categories - 1);
            score /= static_cast<double>(nc);
            const double weight = std::exp(spec.survey_skew * score);
            const double u = 1.0 - rng.uniform();
            pool.push_back({std::log(u) / weight, static_cast<std::uint32_t>(z), static_cast<std::uint32_t>(i)});
        }
    }
    auto by_key = [](const Candidate& a, const Candidate& b) {
        if (a.key != b.key)
            return a.key > b.key;
        return std::tie(a.zone, a.index) < std::tie(b.zone, b.index);
    };
    std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.survey_size - 1), pool.end(), by_key);
    pool.resize(spec.survey_size);
    std::sort(pool.begin(), pool.end(),
              [](const Candidate& a, const Candidate& b) { return std::tie(a.zone, a.index) < std::tie(b.zone, b.index); });

    std::vector<std::string> attributes;
    for (const auto& c : spec.constraints)
        attributes.push_back(c.name);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::vector<std::size_t>> support(nc);
    for (std::size_t c = 0; c < nc; ++c)
        support[c].assign(spec.constraints[c].categories, 0);
    for (const auto& cand : pool)
    {
        std::vector<std::string> row;
        for (std::size_t c = 0; c < nc; ++c)
        {
            const auto k = data.truth[cand.zone][cand.index * nc + c];
            row.push_back(category_label(k));
            ++support[c][k];
        }
        rows.push_back(std::move(row));
    }
    data.survey = SurveyMicrodata(attributes, std::move(rows));

    std::vector<Constraint> constraints;
    for (std::size_t c = 0; c < nc; ++c)
    {
        Constraint con{spec.constraints[c].name, {}, std::move(counts[c])};
        ConstraintDef def{spec.constraints[c].name, {}};
        for (std::size_t k = 0; k < spec.constraints[c].categories; ++k)
        {
            con.categories.push_back(category_label(k));
            def.categories.push_back({category_label(k), {{con.name, category_label(k)}}});
            double census_total = 0.0;
            for (std::size_t z = 0; z < spec.zones; ++z)
                census_total += con.counts(z, k);
            if (census_total > 0.0 && support[c][k] == 0 && out.supported)
            {
                out.supported = false;
                out.missing = con.name + "/" + category_label(k);
            }
        }
        constraints.push_back(std::move(con));
        data.map.constraints.push_back(std::move(def));
    }
    data.constraints = ConstraintSet(std::move(zones), std::move(constraints));
    return out;
}

}  // namespace

SyntheticData generate(const PopulationSpec& spec)
{
    spec.validate();
    std::vector<std::string> notes;
    for (std::size_t a = 0; a < spec.max_attempts; ++a)
    {
        auto result = attempt(spec, a == 0 ? spec.seed : derive_seed(spec.seed, a));
        if (result.supported)
        {
            result.data.notes = std::move(notes);
            return std::move(result.data);
        }
        notes.push_back("attempt " + std::to_string(a) + ": survey has no individual in populated category " +
                        result.missing + "; regenerating");
    }
    throw Error(ErrorKind::infeasible_spec, "survey failed to cover every populated category after " +
                                                std::to_string(spec.max_attempts) + " attempts");
}

std::vector<std::filesystem::path> write_dataset(const std::filesystem::path& dir, const SyntheticData& data)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir / "constraints");
    write_survey(dir / "survey.csv", data.survey);
    {
        std::ofstream map(dir / "map.txt", std::ios::binary);
        map << format_category_map(data.map);
    }
    {
        std::ofstream truth(dir / "truth.csv", std::ios::binary);
        truth << "zone";
        for (const auto& c : data.constraints.constraints())
            truth << ',' << c.name;
        truth << '\n';
        const std::size_t nc = data.constraints.constraints().size();
        for (std::size_t z = 0; z < data.truth.size(); ++z)
            for (std::size_t i = 0; i < data.truth[z].size() / nc; ++i)
            {
                truth << data.constraints.zones()[z];
                for (std::size_t c = 0; c < nc; ++c)
                    truth << ',' << category_label(data.truth[z][i * nc + c]);
                truth << '\n';
            }
    }
    std::vector<fs::path> paths;
    for (const auto& c : data.constraints.constraints())
    {
        auto path = dir / "constraints" / (c.name + ".csv");
        write_constraint(path, data.constraints.zones(), c);
        paths.push_back(path);
    }
    return paths;
}

}  // namespace microsim
