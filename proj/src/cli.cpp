#include "microsim/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "microsim/csv.hpp"
#include "microsim/error.hpp"
#include "microsim/ipf.hpp"
#include "microsim/metrics.hpp"
#include "microsim/synthgen.hpp"
#include "microsim/version.hpp"

namespace microsim::cli
{

namespace fs = std::filesystem;

void RunConfig::validate() const
{
    if (methods.empty())
        throw Error(ErrorKind::bad_config, "at least one integerisation method is required");
    bool probabilistic = false;
    for (auto m : methods)
        probabilistic = probabilistic || is_probabilistic(m);
    if (probabilistic && !seed)
        throw Error(ErrorKind::bad_config, "a seed is required for pp and trs");
    if (iterations == 0)
        throw Error(ErrorKind::bad_config, "iterations must be at least 1");
    if (runs == 0)
        throw Error(ErrorKind::bad_config, "runs must be at least 1");
    if (!(threshold_step > 0.0 && threshold_step < 1.0))
        throw Error(ErrorKind::bad_config, "threshold step must lie in (0, 1)");
}

int exit_code_for(const std::exception& e) noexcept
{
    if (const auto* err = dynamic_cast<const Error*>(&e))
        return err->category() == ErrorCategory::input ? 2 : 1;
    if (dynamic_cast<const fs::filesystem_error*>(&e))
        return 2;
    return 1;
}

namespace
{

struct Study
{
    SurveyMicrodata survey;
    CategoryMap map;
    ConstraintSet constraints;
    Indicator indicator;
    std::optional<SyntheticData> synthetic;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

/// Writes through a temporary sibling and renames, so readers never see a
/// partially written file.
template <typename Writer>
void write_atomically(const fs::path& path, Writer&& writer)
{
    auto tmp = path;
    tmp += ".tmp";
    writer(tmp);
    fs::rename(tmp, path);
}

void finish_study(Study& study)
{
    for (const auto& note : study.constraints.notes)
        warn(note);
    study.map = align_to(study.map, study.constraints);
    study.indicator = build_indicator(study.survey, study.map);
    for (auto k : study.indicator.empty_categories())
        warn("no survey individual falls in category column " + std::to_string(k) +
             "; IPF cannot fit it and will report its residual");
}

Study load_study(const RunConfig& config)
{
    Study study;
    if (config.spec)
    {
        auto data = generate(load_population_spec(*config.spec));
        for (const auto& note : data.notes)
            warn(note);
        study.survey = data.survey;
        study.map = data.map;
        study.constraints = data.constraints;
        study.synthetic = std::move(data);
    }
    else
    {
        if (!config.map)
            throw Error(ErrorKind::bad_config, "--map is required (or --spec for synthetic input)");
        if (!config.survey)
            throw Error(ErrorKind::bad_config, "--survey is required (or --spec for synthetic input)");
        if (config.constraints.empty())
            throw Error(ErrorKind::bad_config, "at least one --constraints file is required");
        study.constraints = load_constraints(config.constraints, {config.mode, 0.0});
        study.map = load_category_map(*config.map);
        study.survey = load_survey(*config.survey, study.map);
    }
    finish_study(study);
    return study;
}

IntegeriseOptions integerise_options(const RunConfig& config)
{
    return {config.rounding, config.threshold_step, config.threads};
}

fs::path weights_path(const RunConfig& config)
{
    if (config.weights)
        return *config.weights;
    if (fs::exists(config.out / "weights.bin"))
        return config.out / "weights.bin";
    return config.out / "weights.csv";
}

WeightMatrix load_weights(const RunConfig& config, const Study& study)
{
    auto w = read_weights(weights_path(config));
    if (w.individuals() != study.survey.size() || w.zones() != study.constraints.zone_count())
        throw Error(ErrorKind::dimension_mismatch,
                    "weights are " + std::to_string(w.individuals()) + "x" + std::to_string(w.zones()) +
                        ", study needs " + std::to_string(study.survey.size()) + "x" +
                        std::to_string(study.constraints.zone_count()));
    w.zone_ids = study.constraints.zones();
    return w;
}

void run_ipf(const RunConfig& config, const Study& study)
{
    IpfOptions options;
    options.iterations = config.iterations;
    options.tolerance = config.tolerance;
    options.threads = config.threads;
    const auto result = ipf_run(study.indicator, study.constraints, options);
    if (!result.trace.feasible())
        warn(std::to_string(result.trace.empty_cells.size()) + " census cells have no survey support");

    fs::create_directories(config.out);
    write_atomically(config.out / "weights.csv", [&](const fs::path& p) { write_weights_csv(p, result.weights); });
    if (config.binary_weights)
        write_atomically(config.out / "weights.bin", [&](const fs::path& p) { write_weights_binary(p, result.weights); });
    write_atomically(config.out / "trace.csv", [&](const fs::path& p) { write_trace_csv(p, result.trace); });
}

/// Returns per-method run seeds for the manifest.
nlohmann::json run_integerise(const RunConfig& config, const Study& study)
{
    const auto w = load_weights(config, study);
    const auto pops = census_populations(study.constraints);
    const auto census = study.constraints.census();
    const auto options = integerise_options(config);
    const auto& ids = study.constraints.zones();

    nlohmann::json seeds = nlohmann::json::object();
    for (auto method : config.methods)
    {
        const auto dir = config.out / std::string(to_string(method));
        fs::create_directories(dir);
        std::vector<IntegerisedZone> zones;
        if (is_probabilistic(method))
        {
            auto ensemble = run_ensemble(method, w, pops, study.indicator, census, config.runs, *config.seed, options);
            write_atomically(dir / "runs.csv", [&](const fs::path& p) {
                std::ofstream out(p, std::ios::binary);
                out << "run,seed,tae,best\n";
                for (std::size_t r = 0; r < ensemble.runs.size(); ++r)
                    out << r << ',' << ensemble.run_seeds[r] << ',' << csv::format_double(ensemble.tae[r]) << ','
                        << (r == ensemble.best ? 1 : 0) << '\n';
            });
            seeds[std::string(to_string(method))] = {{"master_seed", ensemble.master_seed},
                                                     {"run_seeds", ensemble.run_seeds},
                                                     {"best_run", ensemble.best}};
            zones = std::move(ensemble.runs[ensemble.best]);
        }
        else
        {
            zones = integerise_all(method, w, pops, 0, options);
        }
        write_atomically(dir / "selections.csv", [&](const fs::path& p) { write_selections_csv(p, zones, ids); });
        write_atomically(dir / "summary.csv", [&](const fs::path& p) { write_summary_csv(p, zones, pops, ids); });
    }
    return seeds;
}

void run_evaluate(const RunConfig& config, const Study& study)
{
    const auto w = load_weights(config, study);
    const auto pops = census_populations(study.constraints);
    const auto census = study.constraints.census();
    const auto& blocks = study.indicator.blocks();

    std::vector<FitReport> reports;
    std::vector<std::pair<std::string, Table>> simulated;

    const auto ipf_table = aggregate(w, study.indicator);
    reports.push_back(full_report("ipf", census, ipf_table, blocks, population_diffs(w.zone_totals(), pops)));
    simulated.emplace_back("ipf", ipf_table);

    for (auto method : config.methods)
    {
        const auto name = std::string(to_string(method));
        const auto zones = read_selections_csv(config.out / name / "selections.csv", method, study.survey.size(),
                                               study.constraints.zones());
        auto table = aggregate(zones, study.indicator);
        reports.push_back(full_report(name, census, table, blocks, zones, pops));
        simulated.emplace_back(name, std::move(table));
    }

    write_atomically(config.out / "report.csv", [&](const fs::path& p) { write_report_csv(p, reports); });
    write_atomically(config.out / "report.json", [&](const fs::path& p) { write_report_json(p, reports); });
    write_atomically(config.out / "population_diffs.csv", [&](const fs::path& p) { write_diffs_csv(p, reports); });
    write_atomically(config.out / "plot.csv", [&](const fs::path& p) {
        std::ofstream out(p, std::ios::binary);
        out << "zone,constraint,category,method,census,simulated\n";
        for (const auto& [method, table] : simulated)
            for (std::size_t z = 0; z < census.rows(); ++z)
                for (std::size_t c = 0; c < blocks.size(); ++c)
                {
                    const auto& con = study.constraints.constraints()[c];
                    for (std::size_t k = 0; k < blocks[c].size; ++k)
                    {
                        const auto col = blocks[c].offset + k;
                        out << csv::escape(study.constraints.zones()[z]) << ',' << csv::escape(con.name) << ','
                            << csv::escape(con.categories[k]) << ',' << method << ','
                            << csv::format_double(census(z, col)) << ',' << csv::format_double(table(z, col)) << '\n';
                    }
                }
    });
}

nlohmann::json config_echo(const RunConfig& config)
{
    // thread count and output location do not affect results and are left out
    nlohmann::json methods = nlohmann::json::array();
    for (auto m : config.methods)
        methods.push_back(std::string(to_string(m)));
    nlohmann::json constraints = nlohmann::json::array();
    for (const auto& p : config.constraints)
        constraints.push_back(p.generic_string());
    auto opt_path = [](const std::optional<fs::path>& p) {
        return p ? nlohmann::json(p->generic_string()) : nlohmann::json(nullptr);
    };
    return {{"survey", opt_path(config.survey)},
            {"constraints", constraints},
            {"map", opt_path(config.map)},
            {"spec", opt_path(config.spec)},
            {"iterations", config.iterations},
            {"tolerance", config.tolerance ? nlohmann::json(*config.tolerance) : nlohmann::json(nullptr)},
            {"methods", methods},
            {"runs", config.runs},
            {"seed", config.seed ? nlohmann::json(*config.seed) : nlohmann::json(nullptr)},
            {"mode", config.mode == ConsistencyMode::strict ? "strict" : "lenient"},
            {"rounding", config.rounding == RoundingRule::half_up ? "half_up" : "half_even"},
            {"threshold_step", config.threshold_step}};
}

}  // namespace

void cmd_ipf(const RunConfig& config)
{
    config.validate();
    run_ipf(config, load_study(config));
}

void cmd_integerise(const RunConfig& config)
{
    config.validate();
    run_integerise(config, load_study(config));
}

void cmd_evaluate(const RunConfig& config)
{
    config.validate();
    run_evaluate(config, load_study(config));
}

void cmd_generate(const RunConfig& config)
{
    if (!config.spec)
        throw Error(ErrorKind::bad_config, "generate needs --spec");
    auto data = generate(load_population_spec(*config.spec));
    for (const auto& note : data.notes)
        warn(note);
    write_dataset(config.out, data);
}

void cmd_pipeline(const RunConfig& config)
{
    config.validate();
    const auto target = config.out.has_filename() ? config.out : config.out.parent_path();
    if (fs::exists(target) && !fs::is_empty(target) && !fs::exists(target / "manifest.json"))
        throw Error(ErrorKind::bad_config,
                    "output directory '" + target.string() + "' exists and is not a previous run; refusing to replace it");

    auto staging = target;
    staging += ".partial";
    fs::remove_all(staging);
    fs::create_directories(staging);

    RunConfig staged = config;
    staged.out = staging;

    using clock = std::chrono::steady_clock;
    std::map<std::string, double> timings;
    auto timed = [&](const std::string& stage, auto&& fn) {
        const auto start = clock::now();
        fn();
        timings[stage] = std::chrono::duration<double>(clock::now() - start).count();
    };

    try
    {
        Study study;
        timed("ingest", [&] { study = load_study(staged); });
        if (study.synthetic)
            write_dataset(staging / "data", *study.synthetic);
        timed("ipf", [&] { run_ipf(staged, study); });
        nlohmann::json seeds;
        timed("integerise", [&] { seeds = run_integerise(staged, study); });
        timed("evaluate", [&] { run_evaluate(staged, study); });

        nlohmann::json manifest = {{"tool", "microsim"},
                                   {"version", kVersion},
                                   {"config", config_echo(config)},
                                   {"seeds", seeds}};
        if (config.record_timings)
            manifest["timings_seconds"] = timings;
        write_atomically(staging / "manifest.json", [&](const fs::path& p) {
            std::ofstream out(p, std::ios::binary);
            out << manifest.dump(2) << '\n';
        });
    }
    catch (...)
    {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }

    fs::remove_all(target);
    fs::rename(staging, target);
}

}  // namespace microsim::cli
