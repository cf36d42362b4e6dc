#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>

#include "microsim/error.hpp"
#include "microsim/integerise.hpp"
#include "microsim/ipf.hpp"
#include "microsim/metrics.hpp"
#include "microsim/synthgen.hpp"
#include "microsim/version.hpp"

namespace py = pybind11;
using namespace microsim;

namespace
{

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const DoubleArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

RoundingRule parse_rounding(const std::string& name)
{
    if (name == "half_up")
        return RoundingRule::half_up;
    if (name == "half_even")
        return RoundingRule::half_even;
    throw Error(ErrorKind::bad_config, "unknown rounding rule '" + name + "' (expected half_up|half_even)");
}

// individuals x constraints local category codes
Indicator make_indicator(const IndexArray& codes, const std::vector<std::size_t>& sizes,
                         const std::vector<std::string>& names)
{
    if (codes.ndim() != 2 || static_cast<std::size_t>(codes.shape(1)) != sizes.size())
        throw Error(ErrorKind::dimension_mismatch, "categories must be individuals x " +
                                                       std::to_string(sizes.size()) + " constraints");
    const auto n = static_cast<std::size_t>(codes.shape(0));
    const auto r = codes.unchecked<2>();
    std::vector<ConstraintBlock> blocks;
    std::vector<std::vector<std::uint32_t>> cats(sizes.size(), std::vector<std::uint32_t>(n));
    std::size_t offset = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c)
    {
        blocks.push_back({names[c], offset, sizes[c]});
        offset += sizes[c];
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto v = r(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(c));
            if (v < 0 || static_cast<std::size_t>(v) >= sizes[c])
                throw Error(ErrorKind::classification_error, "individual " + std::to_string(i) + " has category " +
                                                                 std::to_string(v) + " in constraint " + names[c]);
            cats[c][i] = static_cast<std::uint32_t>(v);
        }
    }
    return Indicator(std::move(blocks), std::move(cats));
}

py::array_t<double> weights_to_array(const WeightMatrix& w)
{
    py::array_t<double> out({w.individuals(), w.zones()});
    auto m = out.mutable_unchecked<2>();
    for (std::size_t z = 0; z < w.zones(); ++z)
        for (std::size_t i = 0; i < w.individuals(); ++i)
            m(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(z)) = w(i, z);
    return out;
}

py::array_t<double> table_to_array(const Table& t)
{
    py::array_t<double> out({t.rows(), t.cols()});
    std::copy(t.flat().begin(), t.flat().end(), out.mutable_data());
    return out;
}

py::dict fit(const IndexArray& codes, const std::vector<DoubleArray>& census, std::optional<std::vector<std::string>> names,
             std::size_t iterations, std::optional<double> tolerance, unsigned threads)
{
    if (census.empty())
        throw Error(ErrorKind::empty_dimension, "no constraint tables");
    std::vector<std::string> labels = names.value_or(std::vector<std::string>{});
    if (labels.empty())
        for (std::size_t c = 0; c < census.size(); ++c)
            labels.push_back("c" + std::to_string(c));
    if (labels.size() != census.size())
        throw Error(ErrorKind::dimension_mismatch, "one name per constraint table");

    const auto zones = static_cast<std::size_t>(census[0].ndim() == 2 ? census[0].shape(0) : 0);
    std::vector<std::string> zone_ids;
    for (std::size_t z = 0; z < zones; ++z)
        zone_ids.push_back(std::to_string(z));
    std::vector<Constraint> constraints;
    std::vector<std::size_t> sizes;
    for (std::size_t c = 0; c < census.size(); ++c)
    {
        const auto& a = census[c];
        if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(0)) != zones)
            throw Error(ErrorKind::dimension_mismatch, "census table " + labels[c] + " must be zones x categories");
        Constraint k;
        k.name = labels[c];
        const auto cols = static_cast<std::size_t>(a.shape(1));
        for (std::size_t j = 0; j < cols; ++j)
            k.categories.push_back(std::to_string(j));
        k.counts = Table(zones, cols);
        std::copy(a.data(), a.data() + a.size(), k.counts.flat().begin());
        sizes.push_back(cols);
        constraints.push_back(std::move(k));
    }
    ConstraintSet set(std::move(zone_ids), std::move(constraints));
    reconcile_populations(set, {});
    const auto indicator = make_indicator(codes, sizes, labels);

    IpfOptions options;
    options.iterations = iterations;
    options.tolerance = tolerance;
    options.threads = threads;
    IpfResult result;
    {
        py::gil_scoped_release release;
        result = ipf_run(indicator, set, options);
    }
    py::dict out;
    out["weights"] = weights_to_array(result.weights);
    out["tae"] = result.trace.iteration_tae();
    out["simulated"] = table_to_array(aggregate(result.weights, indicator));
    out["census"] = table_to_array(set.census());
    return out;
}

py::array_t<std::uint32_t> integerise(const std::string& method_name, const DoubleArray& weights,
                                      std::optional<std::vector<std::uint64_t>> populations, std::uint64_t seed,
                                      const std::string& rounding, double step, unsigned threads)
{
    const Method method = parse_method(method_name);
    if (weights.ndim() != 1 && weights.ndim() != 2)
        throw Error(ErrorKind::dimension_mismatch, "weights must be a vector or an individuals x zones matrix");
    const bool single = weights.ndim() == 1;
    const auto n = static_cast<std::size_t>(weights.shape(0));
    const std::size_t zones = single ? 1 : static_cast<std::size_t>(weights.shape(1));

    WeightMatrix w(n, zones);
    const double* src = weights.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t z = 0; z < zones; ++z)
            w(i, z) = src[i * zones + z];

    std::vector<std::uint64_t> pops;
    if (populations)
        pops = *populations;
    else
        for (double total : w.zone_totals())
            pops.push_back(round_weight(total));

    IntegeriseOptions options;
    options.rounding = parse_rounding(rounding);
    options.threshold_step = step;
    options.threads = threads;
    std::vector<IntegerisedZone> result;
    {
        py::gil_scoped_release release;
        result = integerise_all(method, w, pops, seed, options);
    }

    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(n)};
    if (!single)
        shape.push_back(static_cast<py::ssize_t>(zones));
    py::array_t<std::uint32_t> out(shape);
    auto* dst = out.mutable_data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t z = 0; z < zones; ++z)
            dst[i * zones + z] = result[z].copies(i);
    return out;
}

py::dict generate_data(const std::string& spec_text, std::optional<std::string> out_dir)
{
    const auto spec = parse_population_spec(spec_text);
    auto data = generate(spec);
    if (out_dir)
        write_dataset(*out_dir, data);

    const auto indicator = build_indicator(data.survey, align_to(data.map, data.constraints));
    const auto& blocks = indicator.blocks();
    py::array_t<std::int64_t> codes({indicator.individuals(), blocks.size()});
    auto m = codes.mutable_unchecked<2>();
    for (std::size_t i = 0; i < indicator.individuals(); ++i)
        for (std::size_t c = 0; c < blocks.size(); ++c)
            m(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(c)) = indicator.category(c, i);

    py::list census, names;
    for (const auto& k : data.constraints.constraints())
    {
        census.append(table_to_array(k.counts));
        names.append(k.name);
    }
    py::dict out;
    out["categories"] = codes;
    out["census"] = census;
    out["names"] = names;
    out["zones"] = data.constraints.zones();
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Spatial microsimulation: IPF reweighting and integerisation";
    m.attr("__version__") = kVersion;

    // MicrosimError(message).kind holds the error kind, e.g. "DeficitUnfillable"
    static py::handle error = py::exception<Error>(m, "MicrosimError", PyExc_RuntimeError).release();
    py::register_exception_translator([](std::exception_ptr p) {
        try
        {
            if (p)
                std::rethrow_exception(p);
        }
        catch (const Error& e)
        {
            py::object inst = error(e.what());
            inst.attr("kind") = to_string(e.kind());
            py::set_error(error, inst);
        }
    });

    m.def("fit", &fit, py::arg("categories"), py::arg("census"), py::arg("names") = py::none(),
          py::arg("iterations") = 20, py::arg("tolerance") = py::none(), py::arg("threads") = 1,
          "IPF weights for an individuals x constraints array of category codes and one zones x categories "
          "census table per constraint.");

    m.def("integerise", &integerise, py::arg("method"), py::arg("weights"), py::arg("populations") = py::none(),
          py::arg("seed") = 1000, py::arg("rounding") = "half_up", py::arg("step") = 0.001, py::arg("threads") = 1,
          "Integer copies per individual (and zone). Methods: rounding, threshold, counterweight, pp, trs.");

    m.def("generate", &generate_data, py::arg("spec"), py::arg("out_dir") = py::none(),
          "Synthetic population from a spec in key = value form.");

    m.def("tae", [](const DoubleArray& c, const DoubleArray& s) { return tae(view(c), view(s)); });
    m.def("sae", [](const DoubleArray& c, const DoubleArray& s) { return sae(view(c), view(s)); });
    m.def("pearson_r", [](const DoubleArray& c, const DoubleArray& s) { return pearson_r(view(c), view(s)); });
    m.def("err_gt", [](const DoubleArray& c, const DoubleArray& s, double t) { return err_gt(view(c), view(s), t); },
          py::arg("census"), py::arg("simulated"), py::arg("threshold") = 0.05);
    m.def("zm", [](const DoubleArray& c, const DoubleArray& s) {
        const auto cells = zm_cells(view(c), view(s));
        const auto summary = zm_summary(cells);
        py::dict out;
        out["cells"] = cells;
        out["zm_sq"] = summary.zm_sq;
        out["sig_pct"] = summary.sig_pct;
        return out;
    });
}
