#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "microsim/error.hpp"
#include "microsim/integerise.hpp"
#include "microsim/synthgen.hpp"

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

std::vector<std::uint32_t> counts_of(const IntegerisedZone& z) { return z.counts(); }

std::uint64_t half_up(double x) { return static_cast<std::uint64_t>(std::floor(x + 0.5)); }

/// Literal transcription of the R threshold loop: append individuals with
/// remainder in [wv - 0.001, wv), then lower wv, until the population is met.
/// Zero remainders are skipped as in the library.
std::vector<std::uint32_t> threshold_oracle(const std::vector<double>& w, std::uint64_t pop)
{
    std::vector<std::uint32_t> n(w.size());
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < w.size(); ++i)
    {
        n[i] = static_cast<std::uint32_t>(std::trunc(w[i]));
        total += n[i];
    }
    double wv = 1.0;
    while (total < pop && wv > -0.5)
    {
        for (std::size_t i = 0; i < w.size(); ++i)
        {
            const double dr = w[i] - std::trunc(w[i]);
            if (dr > 0 && dr < wv && dr >= wv - 0.001)
            {
                ++n[i];
                ++total;
            }
        }
        wv -= 0.001;
    }
    return n;
}

/// The R counter-weight loop with 1-based indices, no correction steps.
std::vector<std::uint32_t> counterweight_oracle(const std::vector<double>& w)
{
    const std::size_t n = w.size();
    std::vector<std::size_t> ord(n);
    std::iota(ord.begin(), ord.end(), std::size_t{0});
    std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return w[a] < w[b]; });
    std::vector<double> sweights(n + 2, 0.0), dweights(n + 2, 0.0);
    std::vector<std::uint64_t> iweights(n + 2, 0);
    double sum_w = 0;
    for (std::size_t i = 1; i <= n; ++i)
    {
        sweights[i] = w[ord[i - 1]];
        iweights[i] = half_up(sweights[i]);
        dweights[i] = sweights[i] - std::trunc(sweights[i]);
        sum_w += sweights[i];
    }
    for (std::size_t i = 1; i <= n; ++i)
    {
        std::uint64_t s = 0;
        for (std::size_t j = 1; j <= n; ++j)
            s += iweights[j];
        if (s < half_up(sum_w))
            iweights[i] = iweights[i] + half_up(dweights[i] + dweights[i + 1]);
    }
    std::vector<std::uint32_t> out(n);
    for (std::size_t i = 1; i <= n; ++i)
        out[ord[i - 1]] = static_cast<std::uint32_t>(iweights[i]);
    return out;
}

/// Exact distribution of sequential weighted sampling without replacement:
/// probability of every selected subset, enumerated over draw orders.
std::map<std::vector<int>, double> sequential_subsets(const std::vector<double>& p, int k)
{
    std::map<std::vector<int>, double> out;
    std::vector<int> chosen;
    auto rec = [&](auto&& self, double prob, std::vector<bool>& used) -> void {
        if (static_cast<int>(chosen.size()) == k)
        {
            std::vector<int> s(p.size(), 0);
            for (int i : chosen)
                s[i] = 1;
            out[s] += prob;
            return;
        }
        double rest = 0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (!used[i])
                rest += p[i];
        for (std::size_t i = 0; i < p.size(); ++i)
        {
            if (used[i] || p[i] == 0)
                continue;
            used[i] = true;
            chosen.push_back(static_cast<int>(i));
            self(self, prob * p[i] / rest, used);
            chosen.pop_back();
            used[i] = false;
        }
    };
    std::vector<bool> used(p.size(), false);
    rec(rec, 1.0, used);
    return out;
}

/// Multinomial probabilities of every count vector with total n.
std::map<std::vector<int>, double> multinomial(const std::vector<double>& p, int n)
{
    std::map<std::vector<int>, double> out;
    std::vector<int> c(p.size(), 0);
    auto rec = [&](auto&& self, std::size_t i, int left) -> void {
        if (i + 1 == p.size())
        {
            c[i] = left;
            double log_prob = std::lgamma(n + 1.0);
            for (std::size_t j = 0; j < p.size(); ++j)
            {
                if (p[j] == 0 && c[j] > 0)
                    return;
                log_prob += (c[j] ? c[j] * std::log(p[j]) : 0.0) - std::lgamma(c[j] + 1.0);
            }
            out[c] = std::exp(log_prob);
            return;
        }
        for (int k = 0; k <= left; ++k)
        {
            c[i] = k;
            self(self, i + 1, left - k);
        }
    };
    rec(rec, 0, n);
    return out;
}

}  // namespace

TEST_CASE("decompose splits replication and remainder")
{
    auto d = decompose(std::vector<double>{2.5, 0.5, 311.8});
    CHECK(d.count == std::vector<std::uint64_t>{2, 0, 311});
    CHECK(d.dr[0] == 0.5);
    CHECK(d.dr[1] == 0.5);
    CHECK(d.dr[2] == doctest::Approx(0.8).epsilon(1e-12));

    auto whole = decompose(std::vector<double>{3.0});
    CHECK(whole.count[0] == 3);
    CHECK(whole.dr[0] == 0.0);

    CHECK(kind_of([] { decompose(std::vector<double>{-1.0}); }) == ErrorKind::negative_weight);
    CHECK(kind_of([] { decompose(std::vector<double>{NAN}); }) == ErrorKind::non_finite);

    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0, 1000);
    for (int t = 0; t < 1000; ++t)
    {
        const double w = u(gen);
        auto one = decompose(std::vector<double>{w});
        CHECK(one.dr[0] >= 0.0);
        CHECK(one.dr[0] < 1.0);
        CHECK(static_cast<double>(one.count[0]) + one.dr[0] == w);
    }
}

TEST_CASE("rounding")
{
    CHECK(counts_of(integerise_rounding(std::vector<double>{0.49, 0.5, 1.5})) == std::vector<std::uint32_t>{0, 1, 2});
    auto low = integerise_rounding(std::vector<double>{0.2, 0.3, 0.4});
    CHECK(low.population() == 0);
    CHECK(counts_of(integerise_rounding(std::vector<double>{0.5, 1.5, 2.5}, RoundingRule::half_even)) ==
          std::vector<std::uint32_t>{0, 2, 2});
    // the largest double below one half must not round up
    CHECK(round_weight(std::nextafter(0.5, 0.0)) == 0);

    // mostly small weights undersample
    std::vector<double> skewed(100, 0.3);
    skewed[0] = 20.0;
    const double total = std::accumulate(skewed.begin(), skewed.end(), 0.0);
    CHECK(static_cast<double>(integerise_rounding(skewed).population()) < total);

    // over-shoot bound n/2, truncation never over-shoots
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0, 5);
    for (int t = 0; t < 200; ++t)
    {
        std::vector<double> w(50);
        for (auto& v : w)
            v = u(gen);
        const double sum = std::accumulate(w.begin(), w.end(), 0.0);
        CHECK(static_cast<double>(integerise_rounding(w).population()) - sum <= 25.0);
        double trunc_sum = 0;
        for (auto c : decompose(w).count)
            trunc_sum += static_cast<double>(c);
        CHECK(trunc_sum <= sum);
    }
}

TEST_CASE("threshold sweep")
{
    auto z = integerise_threshold(std::vector<double>{0.8, 0.6, 1.4}, 3);
    CHECK(counts_of(z) == std::vector<std::uint32_t>{1, 1, 1});
    CHECK(z.base == std::vector<std::uint32_t>{0, 0, 1});
    REQUIRE(z.exit_diagnostic);
    CHECK(std::abs(*z.exit_diagnostic - 0.6) < 0.0015);

    // duplicate remainders enter together and overshoot
    auto dup = integerise_threshold(std::vector<double>{0.7, 0.7, 1.0}, 2);
    CHECK(dup.population() == 3);

    auto met = integerise_threshold(std::vector<double>{2.2, 1.9}, 3);
    CHECK(met.population() == 3);
    CHECK(*met.exit_diagnostic == 1.0);

    CHECK(kind_of([] { integerise_threshold(std::vector<double>{0.5, 1.0}, 5); }) ==
          ErrorKind::threshold_exhausted);

    // truncation start: 2.99 becomes 3 copies, not 4
    CHECK(integerise_threshold(std::vector<double>{2.99, 0.01}, 3).copies(0) == 3);

    // against the literal loop on random weights
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0001, 3.0);
    for (int t = 0; t < 200; ++t)
    {
        std::vector<double> w(30);
        for (auto& v : w)
            v = u(gen);
        const auto pop = static_cast<std::uint64_t>(std::llround(std::accumulate(w.begin(), w.end(), 0.0)));
        CHECK(counts_of(integerise_threshold(w, pop)) == threshold_oracle(w, pop));
    }
}

TEST_CASE("counter-weight")
{
    auto z = integerise_counterweight(std::vector<double>{0.4, 0.4, 1.2});
    CHECK(counts_of(z) == std::vector<std::uint32_t>{1, 0, 1});
    CHECK(z.population() == 2);
    CHECK(z.extra[0] == 1);
    CHECK(*z.exit_diagnostic == 0.0);

    auto ints = integerise_counterweight(std::vector<double>{1.0, 2.0});
    CHECK(counts_of(ints) == std::vector<std::uint32_t>{1, 2});
    CHECK_FALSE(ints.exit_diagnostic.has_value());

    // matches the literal loop whenever that loop lands exactly on target
    std::mt19937_64 gen(12);
    std::exponential_distribution<double> e(2.0);
    int compared = 0;
    for (int t = 0; t < 500; ++t)
    {
        std::vector<double> w(40);
        for (auto& v : w)
            v = e(gen);
        const auto oracle = counterweight_oracle(w);
        const auto target = half_up(std::accumulate(w.begin(), w.end(), 0.0));
        if (std::accumulate(oracle.begin(), oracle.end(), std::uint64_t{0}) != target)
            continue;
        ++compared;
        CHECK(counts_of(integerise_counterweight(w)) == oracle);
    }
    CHECK(compared > 100);
}

TEST_CASE("counter-weight always reaches round(sum w)")
{
    std::vector<std::vector<double>> cases = {
        std::vector<double>(10, 0.2),            // pairs never round up
        std::vector<double>(3, 0.5),             // rounding overshoots
        {0.9, 0.9, 0.9, 0.1},                    // top-up of 2 would overshoot
        {0.0, 0.0, 0.0},
        {5.0},
    };
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(0, 1.5);
    for (int t = 0; t < 300; ++t)
    {
        std::vector<double> w(1 + t % 37);
        for (auto& v : w)
            v = u(gen);
        cases.push_back(w);
    }
    for (const auto& w : cases)
    {
        const auto z = integerise_counterweight(w);
        CHECK(z.population() == half_up(std::accumulate(w.begin(), w.end(), 0.0)));
    }
}

TEST_CASE("proportional probabilities")
{
    Rng rng(1);
    std::vector<int> totals(3, 0);
    const int runs = 25000;
    for (int r = 0; r < runs; ++r)
    {
        auto z = integerise_pp(std::vector<double>{1, 1, 2}, 4, rng);
        CHECK(z.population() == 4);
        for (int i = 0; i < 3; ++i)
            totals[i] += static_cast<int>(z.copies(i));
    }
    const double draws = 4.0 * runs;
    const double p[] = {0.25, 0.25, 0.5};
    double chi2 = 0;
    for (int i = 0; i < 3; ++i)
        chi2 += std::pow(totals[i] - draws * p[i], 2) / (draws * p[i]);
    CHECK(chi2 < 13.8155);  // chi-square(2) at p = 0.001

    auto fixed = integerise_pp(std::vector<double>{5, 0}, 3, rng);
    CHECK(counts_of(fixed) == std::vector<std::uint32_t>{3, 0});

    CHECK(kind_of([&] { integerise_pp(std::vector<double>{0, 0}, 3, rng); }) == ErrorKind::all_zero_weights);

    // a 0.3 weight can out-replicate a 3.3 weight
    int anomalies = 0;
    for (int r = 0; r < 20000; ++r)
    {
        auto z = integerise_pp(std::vector<double>{0.3, 3.3, 6.4}, 10, rng);
        anomalies += z.copies(0) > z.copies(1);
    }
    CHECK(anomalies > 0);
}

TEST_CASE("TRS basics")
{
    Rng rng(1000);
    int first = 0;
    const int runs = 100000;
    for (int r = 0; r < runs; ++r)
    {
        auto z = integerise_trs(std::vector<double>{2.5, 0.5}, 3, rng);
        const auto c = counts_of(z);
        CHECK((c == std::vector<std::uint32_t>{3, 0} || c == std::vector<std::uint32_t>{2, 1}));
        first += c[0] == 3;
    }
    CHECK(std::abs(first / double(runs) - 0.5) <= 3 * std::sqrt(0.25 / runs));

    auto exact = integerise_trs(std::vector<double>{1.0, 2.0}, 3, rng);
    CHECK(counts_of(exact) == std::vector<std::uint32_t>{1, 2});
    CHECK(exact.population() == 3);

    CHECK(kind_of([&] { integerise_trs(std::vector<double>{3.5}, 2, rng); }) == ErrorKind::truncation_overshoot);
    CHECK(kind_of([&] { integerise_trs(std::vector<double>{1.0, 1.0}, 3, rng); }) == ErrorKind::deficit_unfillable);
}

TEST_CASE("TRS and PP match exact enumeration on small instances")
{
    const std::vector<std::pair<std::vector<double>, int>> cases = {
        {{0.2, 0.5, 0.9, 0.4}, 2},
        {{1.3, 0.6, 2.1}, 4},
        {{0.75, 0.25, 0.5, 0.5}, 1},
        {{0.1, 0.9, 0.3, 1.7}, 3},
    };
    const int runs = 100000;
    std::uint64_t seed = 77;
    for (const auto& [w, pop] : cases)
    {
        const auto d = decompose(w);
        int base = 0;
        for (auto c : d.count)
            base += static_cast<int>(c);
        const int deficit = pop - base;
        REQUIRE(deficit >= 0);
        REQUIRE(deficit <= 2);

        // TRS
        auto exact = sequential_subsets(d.dr, deficit);
        std::map<std::vector<int>, int> seen;
        Rng rng(seed++);
        for (int r = 0; r < runs; ++r)
        {
            auto z = integerise_trs(w, pop, rng);
            std::vector<int> s(w.size());
            for (std::size_t i = 0; i < w.size(); ++i)
                s[i] = static_cast<int>(z.extra[i]);
            ++seen[s];
        }
        for (const auto& [subset, count] : seen)
            CHECK(exact.count(subset) == 1);
        for (const auto& [subset, prob] : exact)
        {
            const double freq = seen[subset] / double(runs);
            const double se = std::sqrt(prob * (1 - prob) / runs);
            CHECK(std::abs(freq - prob) <= 4 * se + 1e-12);
        }

        // PP
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        std::vector<double> p;
        for (double v : w)
            p.push_back(v / total);
        auto exact_pp = multinomial(p, pop);
        std::map<std::vector<int>, int> seen_pp;
        for (int r = 0; r < runs; ++r)
        {
            auto z = integerise_pp(w, pop, rng);
            std::vector<int> c(w.size());
            for (std::size_t i = 0; i < w.size(); ++i)
                c[i] = static_cast<int>(z.copies(i));
            ++seen_pp[c];
        }
        for (const auto& [counts, prob] : exact_pp)
        {
            const double freq = seen_pp[counts] / double(runs);
            const double se = std::sqrt(prob * (1 - prob) / runs);
            CHECK(std::abs(freq - prob) <= 4 * se + 1e-12);
        }
    }
}

TEST_CASE("TRS bounds and exact population on random zones")
{
    std::mt19937_64 gen(21);
    std::gamma_distribution<double> g(0.6, 1.0);
    Rng rng(5);
    for (int t = 0; t < 300; ++t)
    {
        std::vector<double> w(60);
        for (auto& v : w)
            v = g(gen);
        w[t % 60] = 2.0;  // a zero remainder
        const auto pop = static_cast<std::uint64_t>(std::llround(std::accumulate(w.begin(), w.end(), 0.0)));
        auto z = integerise_trs(w, pop, rng);
        CHECK(z.population() == pop);
        for (std::size_t i = 0; i < w.size(); ++i)
        {
            const auto fl = static_cast<std::uint32_t>(std::floor(w[i]));
            CHECK((z.copies(i) == fl || z.copies(i) == fl + 1));
            if (w[i] == std::floor(w[i]))
                CHECK(z.copies(i) == fl);
        }
        auto pp = integerise_pp(w, pop, rng);
        CHECK(pp.population() == pop);
    }
}

TEST_CASE("low weights keep a positive chance under TRS and PP")
{
    const std::vector<double> w{0.05, 0.95, 0.5, 0.5};
    Rng rng(9);
    int trs_hits = 0, pp_hits = 0;
    for (int r = 0; r < 20000; ++r)
    {
        trs_hits += integerise_trs(w, 2, rng).copies(0) > 0;
        pp_hits += integerise_pp(w, 2, rng).copies(0) > 0;
    }
    CHECK(trs_hits > 0);
    CHECK(pp_hits > 0);
    // deterministic methods drop it
    CHECK(integerise_threshold(w, 2).copies(0) == 0);
    CHECK(integerise_counterweight(w).copies(0) == 0);
}

TEST_CASE("integerise_all is seeded per zone and thread-count independent")
{
    PopulationSpec spec;
    spec.zones = 9;
    spec.constraints = {{"a", 3}, {"b", 4}};
    spec.survey_size = 200;
    spec.seed = 4;
    auto data = generate(spec);
    auto b = build_indicator(data.survey, data.map);
    auto fit = ipf_run(b, data.constraints);
    auto pops = census_populations(data.constraints);

    for (auto method : kAllMethods)
    {
        auto one = integerise_all(method, fit.weights, pops, 1000, {RoundingRule::half_up, 0.001, 1});
        auto many = integerise_all(method, fit.weights, pops, 1000, {RoundingRule::half_up, 0.001, 4});
        REQUIRE(one.size() == many.size());
        for (std::size_t z = 0; z < one.size(); ++z)
        {
            CHECK(one[z].zone == z);
            CHECK(one[z].counts() == many[z].counts());
            CHECK(one[z].seed == many[z].seed);
            if (is_probabilistic(method))
                CHECK(*one[z].seed == zone_seed(1000, z));
        }
    }
}

TEST_CASE("run_ensemble")
{
    PopulationSpec spec;
    spec.zones = 8;
    spec.constraints = {{"a", 4}, {"b", 3}, {"c", 3}};
    spec.survey_size = 300;
    spec.survey_skew = 1.5;
    spec.seed = 31;
    auto data = generate(spec);
    auto b = build_indicator(data.survey, data.map);
    auto fit = ipf_run(b, data.constraints);
    auto pops = census_populations(data.constraints);
    auto census = data.constraints.census();

    auto single = run_ensemble(Method::trs, fit.weights, pops, b, census, 1, 1000);
    CHECK(single.best == 0);
    CHECK(single.run_seeds[0] == run_seed(1000, 0));

    auto a = run_ensemble(Method::trs, fit.weights, pops, b, census, 20, 1000);
    auto again = run_ensemble(Method::trs, fit.weights, pops, b, census, 20, 1000);
    CHECK(a.tae == again.tae);
    for (std::size_t r = 0; r < 20; ++r)
        for (std::size_t z = 0; z < a.runs[r].size(); ++z)
            CHECK(a.runs[r][z].counts() == again.runs[r][z].counts());

    auto sorted = a.tae;
    std::sort(sorted.begin(), sorted.end());
    CHECK(a.tae[a.best] == sorted.front());
    CHECK(a.tae[a.best] <= sorted[sorted.size() / 2]);
    for (std::size_t r = 0; r < a.best; ++r)
        CHECK(a.tae[r] > a.tae[a.best]);  // lowest index wins ties

    const auto t = aggregate(a.best_run(), b);
    double tae = 0;
    for (std::size_t k = 0; k < census.size(); ++k)
        tae += std::abs(census.flat()[k] - t.flat()[k]);
    CHECK(tae == a.tae[a.best]);

    CHECK(kind_of([&] { run_ensemble(Method::rounding, fit.weights, pops, b, census); }) == ErrorKind::bad_config);
}

TEST_CASE("exponential variates")
{
    Rng rng(123);
    const int n = 200000;
    std::vector<double> x(n);
    double sum = 0;
    for (auto& v : x)
    {
        v = rng.exponential();
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(std::abs(sum / n - 1.0) < 4.0 / std::sqrt(double(n)));
    // Kolmogorov-Smirnov against 1 - exp(-x), critical value at p = 0.001
    std::sort(x.begin(), x.end());
    double d = 0;
    for (int i = 0; i < n; ++i)
    {
        const double cdf = 1.0 - std::exp(-x[i]);
        d = std::max({d, cdf - double(i) / n, double(i + 1) / n - cdf});
    }
    CHECK(d < 1.95 / std::sqrt(double(n)));
    // the tail beyond the base layer is reached
    CHECK(x.back() > 7.7);

    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i)
        CHECK(a.next() == b.next());
    CHECK(derive_seed(1000, 0) != derive_seed(1000, 1));
}

TEST_CASE("method names")
{
    for (auto m : kAllMethods)
        CHECK(parse_method(to_string(m)) == m);
    CHECK(kind_of([] { parse_method("annealing"); }) == ErrorKind::bad_config);
}
