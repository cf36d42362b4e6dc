// Command line front end: microsim <ipf|integerise|evaluate|generate|pipeline> [options]

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "microsim/cli.hpp"
#include "microsim/error.hpp"
#include "microsim/version.hpp"

namespace
{

struct Flags
{
    std::string survey, map, spec, weights, out = "out";
    std::vector<std::string> constraints;
    std::size_t iterations = 20;
    double tolerance = 0.0;
    std::vector<std::string> methods{"rounding", "threshold", "counterweight", "pp", "trs"};
    std::size_t runs = 20;
    std::uint64_t seed = 1000;
    unsigned threads = 1;
    bool lenient = false;
    bool half_even = false;
    double threshold_step = 0.001;
    bool binary = false;
    bool timings = false;
};

void add_common(CLI::App& cmd, Flags& f)
{
    cmd.add_option("--survey", f.survey, "Survey microdata CSV");
    cmd.add_option("--constraints", f.constraints, "Constraint CSV (repeatable, applied in the given order)");
    cmd.add_option("--map", f.map, "Category map file");
    cmd.add_option("--spec", f.spec, "Synthetic population spec (replaces survey/constraints/map)");
    cmd.add_option("--out", f.out, "Output directory")->capture_default_str();
    cmd.add_option("--threads", f.threads, "Worker threads (0 = all cores)")->capture_default_str();
    auto* strict = cmd.add_flag("--strict", "Error on constraint row-sum disagreement (default)");
    cmd.add_flag("--lenient", f.lenient, "Rescale disagreeing constraint rows to the first constraint")
        ->excludes(strict);
}

void add_ipf(CLI::App& cmd, Flags& f)
{
    cmd.add_option("--iterations", f.iterations, "IPF passes over all constraints")->capture_default_str();
    cmd.add_option("--tolerance", f.tolerance, "Stop early when TAE improves by less than this (0 = off)");
    cmd.add_flag("--binary-weights", f.binary, "Also write weights.bin");
}

void add_integerise(CLI::App& cmd, Flags& f)
{
    cmd.add_option("--methods", f.methods, "rounding|threshold|counterweight|pp|trs")
        ->delimiter(',')
        ->capture_default_str();
    cmd.add_option("--runs", f.runs, "Runs per probabilistic method (best TAE kept)")->capture_default_str();
    cmd.add_option("--seed", f.seed, "Master seed")->capture_default_str();
    cmd.add_option("--weights", f.weights, "Weight file (default: <out>/weights.csv)");
    cmd.add_option("--threshold-step", f.threshold_step, "Inclusion threshold decrement")->capture_default_str();
    cmd.add_flag("--half-even", f.half_even, "Round half to even instead of half up");
}

microsim::cli::RunConfig to_config(const Flags& f)
{
    microsim::cli::RunConfig c;
    if (!f.survey.empty())
        c.survey = f.survey;
    if (!f.map.empty())
        c.map = f.map;
    if (!f.spec.empty())
        c.spec = f.spec;
    if (!f.weights.empty())
        c.weights = f.weights;
    c.constraints.assign(f.constraints.begin(), f.constraints.end());
    c.iterations = f.iterations;
    if (f.tolerance > 0.0)
        c.tolerance = f.tolerance;
    c.methods.clear();
    for (const auto& m : f.methods)
        c.methods.push_back(microsim::parse_method(m));
    c.runs = f.runs;
    c.seed = f.seed;
    c.out = f.out;
    c.threads = f.threads;
    c.mode = f.lenient ? microsim::ConsistencyMode::lenient : microsim::ConsistencyMode::strict;
    c.rounding = f.half_even ? microsim::RoundingRule::half_even : microsim::RoundingRule::half_up;
    c.threshold_step = f.threshold_step;
    c.binary_weights = f.binary;
    c.record_timings = f.timings;
    return c;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Spatial microsimulation: IPF reweighting, integerisation and fit evaluation"};
    app.set_version_flag("--version", microsim::kVersion);
    app.set_config("--config", "", "INI/TOML file; [<subcommand>] sections hold option values, flags win");
    app.require_subcommand(1);
    app.fallthrough();

    Flags flags;
    auto* ipf = app.add_subcommand("ipf", "Fit weights to the constraints");
    add_common(*ipf, flags);
    add_ipf(*ipf, flags);

    auto* integerise = app.add_subcommand("integerise", "Convert weights to whole individuals");
    add_common(*integerise, flags);
    add_integerise(*integerise, flags);

    auto* evaluate = app.add_subcommand("evaluate", "Goodness-of-fit reports for integerised output");
    add_common(*evaluate, flags);
    add_integerise(*evaluate, flags);

    auto* generate = app.add_subcommand("generate", "Write a synthetic dataset from a spec");
    generate->add_option("--spec", flags.spec, "Synthetic population spec")->required();
    generate->add_option("--out", flags.out, "Output directory")->capture_default_str();

    auto* pipeline = app.add_subcommand("pipeline", "Ingest or generate, fit, integerise and evaluate");
    add_common(*pipeline, flags);
    add_ipf(*pipeline, flags);
    add_integerise(*pipeline, flags);
    pipeline->add_flag("--timings", flags.timings, "Record stage wall times in the manifest");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try
    {
        const auto config = to_config(flags);
        if (ipf->parsed())
            microsim::cli::cmd_ipf(config);
        else if (integerise->parsed())
            microsim::cli::cmd_integerise(config);
        else if (evaluate->parsed())
            microsim::cli::cmd_evaluate(config);
        else if (generate->parsed())
            microsim::cli::cmd_generate(config);
        else if (pipeline->parsed())
            microsim::cli::cmd_pipeline(config);
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return microsim::cli::exit_code_for(e);
    }
    return 0;
}
