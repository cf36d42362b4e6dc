#include <doctest.h>

#include "microsim/error.hpp"
#include "microsim/synthgen.hpp"
#include "test_util.hpp"

using namespace microsim;

namespace
{

ErrorKind kind_of(auto&& fn)
{
    try
    {
        fn();
    }
    catch (const Error& e)
    {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::bad_config;
}

PopulationSpec small(std::uint64_t seed)
{
    PopulationSpec spec;
    spec.zones = 5;
    spec.min_population = 40;
    spec.max_population = 90;
    spec.constraints = {{"a", 3}, {"b", 5}};
    spec.survey_size = 60;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("one zone, ten people, one binary constraint")
{
    PopulationSpec spec;
    spec.zones = 1;
    spec.min_population = 10;
    spec.max_population = 10;
    spec.constraints = {{"sex", 2}};
    spec.survey_size = 5;
    auto data = generate(spec);
    CHECK(data.constraints.populations() == std::vector<double>{10});
    CHECK(data.truth[0].size() == 10);
    CHECK(data.survey.size() == 5);
}

TEST_CASE("constraints aggregate the ground truth")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        auto spec = small(seed);
        auto data = generate(spec);
        const auto& set = data.constraints;
        REQUIRE(set.zone_count() == 5);
        for (std::size_t z = 0; z < 5; ++z)
        {
            const auto& truth = data.truth[z];
            const std::size_t pop = truth.size() / 2;
            CHECK(pop >= 40);
            CHECK(pop <= 90);
            for (std::size_t c = 0; c < 2; ++c)
            {
                std::vector<double> counts(spec.constraints[c].categories, 0.0);
                for (std::size_t i = 0; i < pop; ++i)
                    counts[truth[i * 2 + c]] += 1;
                double row = 0;
                for (std::size_t k = 0; k < counts.size(); ++k)
                {
                    CHECK(set.constraints()[c].counts(z, k) == counts[k]);
                    row += set.constraints()[c].counts(z, k);
                }
                CHECK(row == static_cast<double>(pop));
            }
        }

        // every populated category has survey support
        auto b = build_indicator(data.survey, data.map);
        const auto census = set.census();
        for (std::size_t k : b.empty_categories())
            for (std::size_t z = 0; z < census.rows(); ++z)
                CHECK(census(z, k) == 0.0);
    }
}

TEST_CASE("same seed, same data")
{
    auto a = generate(small(3));
    auto b = generate(small(3));
    CHECK(a.truth == b.truth);
    CHECK(a.constraints.census() == b.constraints.census());
    CHECK(a.survey.rows() == b.survey.rows());
    auto c = generate(small(4));
    CHECK(a.truth != c.truth);
}

TEST_CASE("full-scale shapes")
{
    auto data = generate(PopulationSpec::full_scale());
    CHECK(data.constraints.zone_count() == 71);
    CHECK(data.survey.size() == 4933);
    REQUIRE(data.constraints.constraints().size() == 4);
    CHECK(data.constraints.constraints()[0].categories.size() == 12);
    CHECK(data.constraints.constraints()[1].categories.size() == 11);
    CHECK(data.constraints.constraints()[2].categories.size() == 8);
    CHECK(data.constraints.constraints()[3].categories.size() == 9);
    CHECK(data.constraints.total_categories() == 40);
}

TEST_CASE("skew biases the survey towards high categories")
{
    auto mean_category = [](const SyntheticData& d) {
        double sum = 0;
        for (const auto& row : d.survey.rows())
            for (const auto& v : row)
                sum += std::stod(v.substr(1));
        return sum / static_cast<double>(d.survey.size());
    };
    auto plain = small(9);
    plain.survey_size = 300;
    plain.zones = 12;
    auto skewed = plain;
    skewed.survey_skew = 3.0;
    CHECK(mean_category(generate(skewed)) > mean_category(generate(plain)));
}

TEST_CASE("spec validation and parsing")
{
    auto spec = parse_population_spec(R"(# study area
zones = 24
population = 100 500
constraints = age_sex:12 mode:11
concentration = 0.5
survey_size = 1000
survey_skew = 1.5
seed = 7
)");
    CHECK(spec.zones == 24);
    CHECK(spec.max_population == 500);
    REQUIRE(spec.constraints.size() == 2);
    CHECK(spec.constraints[1].name == "mode");
    CHECK(spec.constraints[1].categories == 11);
    CHECK(spec.concentration == 0.5);
    CHECK(spec.survey_skew == 1.5);
    CHECK(spec.seed == 7);

    CHECK(kind_of([] { parse_population_spec("zones = many"); }) == ErrorKind::bad_config);
    CHECK(kind_of([] { parse_population_spec("colour = red"); }) == ErrorKind::bad_config);

    auto bad = small(1);
    bad.constraints[0].categories = 1;
    CHECK(kind_of([&] { generate(bad); }) == ErrorKind::infeasible_spec);
    bad = small(1);
    bad.survey_size = 7;
    CHECK(kind_of([&] { generate(bad); }) == ErrorKind::infeasible_spec);
    bad = small(1);
    bad.zones = 0;
    CHECK(kind_of([&] { generate(bad); }) == ErrorKind::infeasible_spec);
}

TEST_CASE("written dataset reloads through ingest")
{
    microsim::testing::TempDir dir;
    auto data = generate(small(2));
    auto paths = write_dataset(dir.path(), data);
    REQUIRE(paths.size() == 2);
    auto map = load_category_map(dir / "map.txt");
    auto survey = load_survey(dir / "survey.csv", map);
    auto set = load_constraints(paths);
    CHECK(set.census() == data.constraints.census());
    CHECK(set.zones() == data.constraints.zones());
    CHECK(survey.rows() == data.survey.rows());
    CHECK(std::filesystem::exists(dir / "truth.csv"));
}
