#include <doctest.h>

#include "microsim/error.hpp"
#include "microsim/ingest.hpp"
#include "test_util.hpp"

using namespace microsim;
using microsim::testing::TempDir;
using microsim::testing::write_file;

namespace
{

const char* kMap = R"(# age bands and a 2x2 constraint
bin age 16-34:16:35 35-54:35:55 55+:55:inf
category sex m sex=m
category sex f sex=f
category age 16-34 age=16-34
category age 35-54 age=35-54
category age 55+ age=55+
)";

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

}  // namespace

TEST_CASE("category map parses bins and categories in order")
{
    auto map = parse_category_map(kMap);
    REQUIRE(map.constraints.size() == 2);
    CHECK(map.constraints[0].name == "sex");
    CHECK(map.constraints[1].categories.size() == 3);
    CHECK(map.total_categories() == 5);
    const auto* age = map.bin_spec("age");
    REQUIRE(age);
    CHECK(age->classify(40.0) == "35-54");
    CHECK(age->classify(16.0) == "16-34");
    CHECK(age->classify(90.0) == "55+");
    CHECK_FALSE(age->classify(10.0).has_value());

    // formatting then reparsing keeps the map
    auto again = parse_category_map(format_category_map(map));
    CHECK(format_category_map(again) == format_category_map(map));

    CHECK(kind_of([] { parse_category_map("frobnicate x"); }) == ErrorKind::bad_config);
    CHECK(kind_of([] { parse_category_map("bin age a:5:1"); }) == ErrorKind::bad_config);
}

TEST_CASE("load_survey assigns ids in file order and bins numbers")
{
    TempDir dir;
    auto map = parse_category_map(kMap);
    auto path = write_file(dir / "survey.csv", "sex,age\nm,20\nf,40\nm,70\n");
    auto survey = load_survey(path, map);
    REQUIRE(survey.size() == 3);
    CHECK(survey.value(0, 0) == "m");
    CHECK(survey.value(1, 1) == "35-54");
    CHECK(survey.value(2, 1) == "55+");

    SUBCASE("missing value")
    {
        auto bad = write_file(dir / "bad.csv", "sex,age\nm,20\n,40\n");
        try
        {
            load_survey(bad, map);
            FAIL("expected MissingValue");
        }
        catch (const Error& e)
        {
            CHECK(e.kind() == ErrorKind::missing_value);
            CHECK(std::string(e.what()).find("row 1") != std::string::npos);
            CHECK(std::string(e.what()).find("sex") != std::string::npos);
        }
    }
    SUBCASE("missing column")
    {
        auto bad = write_file(dir / "bad.csv", "age\n20\n");
        CHECK(kind_of([&] { load_survey(bad, map); }) == ErrorKind::missing_attribute);
    }
    SUBCASE("unparseable binned cell")
    {
        auto bad = write_file(dir / "bad.csv", "sex,age\nm,old\n");
        CHECK(kind_of([&] { load_survey(bad, map); }) == ErrorKind::unparseable_cell);
    }
    SUBCASE("empty file")
    {
        auto empty = write_file(dir / "empty.csv", "");
        CHECK(kind_of([&] { load_survey(empty, map); }) == ErrorKind::empty_file);
        auto header_only = write_file(dir / "header.csv", "sex,age\n");
        CHECK(kind_of([&] { load_survey(header_only, map); }) == ErrorKind::empty_file);
    }
}

TEST_CASE("load_constraints validates zones and populations")
{
    TempDir dir;
    auto sex = write_file(dir / "sex.csv", "zone,m,f\nA,10,20\nB,25,25\n");
    auto age = write_file(dir / "age.csv", "zone,16-34,35-54,55+\nB,10,20,20\nA,10,10,10\n");

    std::vector<std::filesystem::path> paths{sex, age};
    auto set = load_constraints(paths);
    CHECK(set.zones() == std::vector<std::string>{"A", "B"});
    CHECK(set.populations() == std::vector<double>{30, 50});
    CHECK(set.constraints()[1].name == "age");
    // rows follow the first file's zone order
    CHECK(set.constraints()[1].counts(1, 2) == 20);
    CHECK(set.census().cols() == 5);
    CHECK(set.offset(1) == 2);

    SUBCASE("strict mismatch")
    {
        auto off = write_file(dir / "off.csv", "zone,a,b\nA,15,16\nB,25,25\n");
        std::vector<std::filesystem::path> p{sex, off};
        try
        {
            load_constraints(p);
            FAIL("expected PopulationMismatch");
        }
        catch (const Error& e)
        {
            CHECK(e.kind() == ErrorKind::population_mismatch);
            CHECK(std::string(e.what()).find("zone 0") != std::string::npos);
        }

        auto lenient = load_constraints(p, {ConsistencyMode::lenient, 0.0});
        CHECK(lenient.constraints()[1].counts(0, 0) == doctest::Approx(15.0 * 30.0 / 31.0));
        CHECK(lenient.notes.size() == 1);
    }
    SUBCASE("zone mismatch")
    {
        auto other = write_file(dir / "other.csv", "zone,a\nA,30\nC,50\n");
        std::vector<std::filesystem::path> p{sex, other};
        CHECK(kind_of([&] { load_constraints(p); }) == ErrorKind::zone_mismatch);
    }
    SUBCASE("negative count")
    {
        auto neg = write_file(dir / "neg.csv", "zone,a,b\nA,-1,31\nB,25,25\n");
        std::vector<std::filesystem::path> p{neg};
        CHECK(kind_of([&] { load_constraints(p); }) == ErrorKind::negative_count);
    }
    SUBCASE("missing file")
    {
        std::vector<std::filesystem::path> p{dir / "nope.csv"};
        CHECK(kind_of([&] { load_constraints(p); }) == ErrorKind::file_not_found);
    }
}

TEST_CASE("twelve-category age/sex table loads as one constraint")
{
    TempDir dir;
    std::string text = "zone";
    for (int k = 0; k < 12; ++k)
        text += ",c" + std::to_string(k);
    text += "\n";
    for (int z = 0; z < 71; ++z)
    {
        text += "Z" + std::to_string(z);
        for (int k = 0; k < 12; ++k)
            text += "," + std::to_string(z + k);
        text += "\n";
    }
    std::vector<std::filesystem::path> p{write_file(dir / "Age_sex.csv", text)};
    auto set = load_constraints(p);
    CHECK(set.constraints().size() == 1);
    CHECK(set.constraints()[0].name == "Age_sex");
    CHECK(set.constraints()[0].categories.size() == 12);
    CHECK(set.zone_count() == 71);
}

TEST_CASE("constraint tables round-trip through CSV")
{
    TempDir dir;
    std::mt19937_64 gen(7);
    std::uniform_int_distribution<int> count(0, 500);
    for (int trial = 0; trial < 10; ++trial)
    {
        std::vector<std::string> zones;
        const int nz = 1 + trial;
        for (int z = 0; z < nz; ++z)
            zones.push_back("zone " + std::to_string(z));  // spaces survive
        Constraint c{"t" + std::to_string(trial), {"a", "b,c", "d"}, Table(nz, 3)};
        for (auto& v : c.counts.flat())
            v = count(gen);
        auto path = dir / (c.name + ".csv");
        write_constraint(path, zones, c);
        std::vector<std::filesystem::path> p{path};
        auto back = load_constraints(p);
        CHECK(back.zones() == zones);
        CHECK(back.constraints()[0].categories == c.categories);
        CHECK(back.constraints()[0].counts == c.counts);
    }
}

TEST_CASE("build_indicator partitions every individual")
{
    auto map = parse_category_map(kMap);
    SurveyMicrodata survey({"sex", "age"}, {{"m", "35-54"}, {"f", "16-34"}, {"f", "55+"}});
    auto b = build_indicator(survey, map);
    CHECK(b.individuals() == 3);
    CHECK(b.total_categories() == 5);
    auto dense = b.dense();
    for (std::size_t i = 0; i < 3; ++i)
        for (const auto& block : b.blocks())
        {
            double sum = 0;
            for (std::size_t k = 0; k < block.size; ++k)
                sum += dense(i, block.offset + k);
            CHECK(sum == 1.0);
        }
    CHECK(b.at(0, 0) == 1);
    CHECK(b.at(0, 3) == 1);
    CHECK(b.at(0, 2) == 0);
    CHECK(b.empty_categories().empty());

    SUBCASE("unbinned value fails classification")
    {
        SurveyMicrodata odd({"sex", "age"}, {{"m", "12"}});
        CHECK(kind_of([&] { build_indicator(odd, map); }) == ErrorKind::classification_error);
    }
    SUBCASE("overlapping categories fail classification")
    {
        auto overlap = parse_category_map("category sex any sex=m\ncategory sex m sex=m\n");
        SurveyMicrodata one({"sex"}, {{"m"}});
        CHECK(kind_of([&] { build_indicator(one, overlap); }) == ErrorKind::classification_error);
    }
    SUBCASE("empty category is reported, not fatal")
    {
        SurveyMicrodata men({"sex", "age"}, {{"m", "35-54"}});
        auto ind = build_indicator(men, map);
        CHECK(ind.empty_categories() == std::vector<std::size_t>{1, 2, 4});
    }
}

TEST_CASE("single male 35-54 in a 12-category age/sex block")
{
    std::string text;
    const char* ages[] = {"16-24", "25-34", "35-54", "55-64", "65-74", "75+"};
    for (const char* sex : {"m", "f"})
        for (const char* age : ages)
            text += std::string("category age_sex ") + sex + age + " sex=" + sex + " age=" + age + "\n";
    auto map = parse_category_map(text);
    SurveyMicrodata survey({"sex", "age"}, {{"m", "35-54"}});
    auto dense = build_indicator(survey, map).dense();
    CHECK(dense.cols() == 12);
    CHECK(dense.sum() == 1.0);
    CHECK(dense(0, 2) == 1.0);
}

TEST_CASE("align_to reorders the map to the constraint files")
{
    auto map = parse_category_map(kMap);
    Constraint age{"age", {"55+", "16-34", "35-54"}, Table(1, 3, 1.0)};
    Constraint sex{"sex", {"f", "m"}, Table(1, 2)};
    sex.counts(0, 0) = 1;
    sex.counts(0, 1) = 2;
    ConstraintSet set({"A"}, {age, sex});
    auto aligned = align_to(map, set);
    CHECK(aligned.constraints[0].name == "age");
    CHECK(aligned.constraints[0].categories[0].label == "55+");
    CHECK(aligned.constraints[1].categories[0].label == "f");

    ConstraintSet unknown({"A"}, {Constraint{"income", {"lo"}, Table(1, 1)}});
    CHECK(kind_of([&] { align_to(map, unknown); }) == ErrorKind::bad_config);
}

TEST_CASE("shipped configuration files load")
{
    const std::filesystem::path root = MICROSIM_SOURCE_DIR;
    auto commute = load_category_map(root / "config" / "commute.map");
    REQUIRE(commute.constraints.size() == 4);
    CHECK(commute.constraints[0].categories.size() == 12);
    CHECK(commute.constraints[1].categories.size() == 11);
    CHECK(commute.constraints[2].categories.size() == 8);
    CHECK(commute.constraints[3].categories.size() == 9);
    CHECK(commute.bin_spec("distance")->classify(3.5) == "2-5");
    CHECK(commute.bin_spec("age")->classify(90) == "75+");

    auto map = load_category_map(root / "config" / "example" / "map.txt");
    auto survey = load_survey(root / "config" / "example" / "survey.csv", map);
    std::vector<std::filesystem::path> paths{root / "config" / "example" / "constraints" / "age.csv",
                                             root / "config" / "example" / "constraints" / "sex.csv"};
    auto set = load_constraints(paths);
    auto b = build_indicator(survey, align_to(map, set));
    CHECK(b.individuals() == 12);
    CHECK(b.empty_categories().empty());
}
