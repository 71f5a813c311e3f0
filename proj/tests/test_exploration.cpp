#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "prefex/errors.hpp"
#include "prefex/exploration.hpp"
#include "test_support.hpp"

using namespace prefex;
using namespace prefex::testing;

namespace {

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t s = 0; s < rows.size(); ++s)
        for (std::size_t n = 0; n < rows[s].size(); ++n) m(s, n) = rows[s][n];
    return m;
}

void check_valid(const SelectionResult& r, std::size_t n) {
    CHECK(r.first < n);
    CHECK(r.second < n);
    CHECK(r.first != r.second);
}

}  // namespace

TEST_CASE("passive selection") {
    SUBCASE("N = 2 splits evenly between the two orders") {
        std::size_t forward = 0;
        const std::size_t trials = 10000;
        for (std::size_t s = 0; s < trials; ++s) {
            Rng rng(s);
            const auto r = passive_select(2, rng);
            check_valid(r, 2);
            if (r.first == 0) ++forward;
        }
        CHECK(std::abs(binomial_z(forward, trials, 0.5)) < 3.0);
    }
    SUBCASE("N = 5 unordered pairs are uniform") {
        Rng rng(123);
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
        const std::size_t trials = 10000;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto r = passive_select(5, rng);
            counts[{std::min(r.first, r.second), std::max(r.first, r.second)}]++;
        }
        CHECK(counts.size() == 10);
        for (const auto& [pair, c] : counts) CHECK(std::abs(binomial_z(c, trials, 0.1)) < 3.0);
    }
    SUBCASE("fixed seed, fixed pair") {
        Rng a(9), b(9);
        CHECK(passive_select(20, a) == passive_select(20, b));
    }
    Rng rng(1);
    CHECK_THROWS_AS(passive_select(1, rng), PreconditionError);
}

TEST_CASE("Boltzmann probabilities") {
    const std::vector<double> two{2.0, 0.0};
    const auto q = boltzmann_probs(two, 1.0);
    CHECK(q[0] == doctest::Approx(0.8807970779778823).epsilon(1e-14));
    CHECK(q[1] == doctest::Approx(0.11920292202211755).epsilon(1e-14));

    std::mt19937_64 g(4);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> r(7), shifted(7);
        const double c = u(g) * 100;
        for (std::size_t i = 0; i < 7; ++i) {
            r[i] = u(g);
            shifted[i] = r[i] + c;
        }
        const auto a = boltzmann_probs(r, 0.7);
        const auto b = boltzmann_probs(shifted, 0.7);
        for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
    }

    std::uniform_real_distribution<double> unit(-1, 1);
    for (std::size_t n : {2, 5, 20, 100}) {
        std::vector<double> r(n);
        for (auto& x : r) x = unit(g);
        const auto qq = boltzmann_probs(r, 1e6);
        for (double p : qq) CHECK(std::abs(p - 1.0 / static_cast<double>(n)) < 1e-6);
    }

    CHECK_THROWS_AS(boltzmann_probs(two, 0.0), ConfigError);
    CHECK_THROWS_AS(boltzmann_probs(two, -1.0), ConfigError);
    const std::vector<double> bad{1.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(boltzmann_probs(bad, 1.0), NumericalError);
}

TEST_CASE("Boltzmann selection") {
    SUBCASE("equal rewards give uniform ordered pairs") {
        const std::vector<double> r{0.4, 0.4, 0.4};
        Rng rng(8);
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
        const std::size_t trials = 12000;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto s = boltzmann_select(r, 0.3, rng);
            counts[{s.first, s.second}]++;
        }
        CHECK(counts.size() == 6);
        for (const auto& [pair, c] : counts) CHECK(std::abs(binomial_z(c, trials, 1.0 / 6)) < 3.0);
    }
    SUBCASE("second draw renormalizes over the rest") {
        const std::vector<double> r{1.0, 0.0, -1.0};
        Rng rng(10);
        const std::size_t trials = 20000;
        std::size_t first0 = 0, second1_given_first0 = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto s = boltzmann_select(r, 1.0, rng);
            if (s.first == 0) {
                ++first0;
                if (s.second == 1) ++second1_given_first0;
            }
        }
        const double e = std::exp(1.0);
        const double q0 = e / (e + 1 + 1 / e);
        CHECK(std::abs(binomial_z(first0, trials, q0)) < 3.0);
        CHECK(std::abs(binomial_z(second1_given_first0, first0, 1.0 / (1.0 + 1 / e))) < 3.0);
    }
    SUBCASE("low temperature picks the two best in order") {
        const std::vector<double> r{5.0, 1.0, 0.0};
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            Rng rng(seed);
            CHECK(boltzmann_select(r, 1e-6, rng) == SelectionResult{0, 1});
        }
    }
    Rng rng(1);
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(boltzmann_select(one, 1.0, rng), PreconditionError);
}

TEST_CASE("greedy Boltzmann selection") {
    SUBCASE("flat tail at high temperature") {
        const std::vector<double> r{3.0, 1.0, 1.0};
        Rng rng(2);
        std::size_t second1 = 0;
        const std::size_t trials = 10000;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto s = greedy_boltzmann_select(r, 1e9, rng);
            CHECK(s.first == 0);
            if (s.second == 1) ++second1;
        }
        CHECK(std::abs(binomial_z(second1, trials, 0.5)) < 3.0);
    }
    SUBCASE("two tied candidates") {
        const std::vector<double> r{1.0, 1.0};
        for (double tau : {1e-3, 1.0, 1e3}) {
            Rng rng(5);
            CHECK(greedy_boltzmann_select(r, tau, rng) == SelectionResult{0, 1});
        }
    }
    SUBCASE("second index follows the softmax over the rest") {
        const std::vector<double> r{2.0, 1.0, 0.0};
        Rng rng(6);
        std::size_t second1 = 0;
        const std::size_t trials = 20000;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto s = greedy_boltzmann_select(r, 1.0, rng);
            CHECK(s.first == 0);
            if (s.second == 1) ++second1;
        }
        const double e = std::exp(1.0);
        CHECK(e / (e + 1) == doctest::Approx(0.731059).epsilon(1e-6));
        CHECK(std::abs(binomial_z(second1, trials, e / (e + 1))) < 3.0);
    }
}

TEST_CASE("pair preference modes") {
    std::mt19937_64 g(3);
    std::uniform_real_distribution<double> u(-4, 4);
    for (int t = 0; t < 200; ++t) {
        const double r = u(g), rp = u(g);
        const double p = pair_preference(r, rp, PrefMode::logistic);
        CHECK(p == doctest::Approx(1.0 / (1.0 + std::exp(rp - r))).epsilon(1e-12));
        CHECK(std::abs(p + pair_preference(rp, r, PrefMode::logistic) - 1.0) < 1e-12);
        const double q = pair_preference(r, rp, PrefMode::ratio);
        CHECK(q > 0.0);
        CHECK(q < 1.0);
    }
    // Both rewards move by -min(0, min(r, r')) + 1e-6.
    CHECK(pair_preference(2.0, 1.0, PrefMode::ratio) ==
          doctest::Approx((2.0 + 1e-6) / (3.0 + 2e-6)).epsilon(1e-12));
    const double shift = 1.0 + 1e-6;
    CHECK(pair_preference(-1.0, 0.5, PrefMode::ratio) ==
          doctest::Approx((-1.0 + shift) / ((-1.0 + shift) + (0.5 + shift))).epsilon(1e-12));
    CHECK(parse_pref_mode("ratio") == PrefMode::ratio);
    CHECK(to_string(PrefMode::logistic) == "logistic");
    CHECK_THROWS_AS(parse_pref_mode("bogus"), ConfigError);
}

TEST_CASE("sample variance") {
    const std::vector<double> v{0.2, 0.4, 0.6, 0.8};
    CHECK(sample_variance(v) == doctest::Approx(0.0666666666666667).epsilon(1e-12));
    const std::vector<double> w{0.9, 0.1};
    CHECK(sample_variance(w) == doctest::Approx(0.32).epsilon(1e-12));
}

TEST_CASE("infomax selection") {
    SUBCASE("identical particles fall back to the first pair") {
        const auto m = rows_to_matrix({{0.3, 1.0, -2.0, 0.5}, {0.3, 1.0, -2.0, 0.5}, {0.3, 1.0, -2.0, 0.5}});
        for (auto mode : {PrefMode::logistic, PrefMode::ratio}) {
            Rng rng(4);
            SelectionDiagnostics diag;
            CHECK(infomax_select(m, 30, rng, mode, &diag) == SelectionResult{0, 1});
            CHECK(diag.zero_variance);
        }
    }
    SUBCASE("planted disagreement on one pair") {
        const double l3 = std::log(3.0);
        // Pair (1, 2): 0.9 under the first particle, 0.1 under the second.
        const auto m = rows_to_matrix({{0.0, l3, -l3}, {0.0, -l3, l3}});
        CHECK(pair_preference(m(0, 1), m(0, 2), PrefMode::logistic) == doctest::Approx(0.9));
        CHECK(pair_preference(m(1, 1), m(1, 2), PrefMode::logistic) == doctest::Approx(0.1));
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            Rng rng(seed);
            SelectionDiagnostics diag;
            CHECK(infomax_select(m, 30, rng, PrefMode::logistic, &diag) == SelectionResult{1, 2});
            CHECK_FALSE(diag.zero_variance);
        }
    }
    SUBCASE("ties break lexicographically") {
        // Every pair disagrees equally.
        const auto m = rows_to_matrix({{1.0, 0.0}, {0.0, 1.0}});
        Rng rng(1);
        CHECK(infomax_select(m, 30, rng, PrefMode::logistic) == SelectionResult{0, 1});
    }
    SUBCASE("candidate-set overload agrees with the matrix form") {
        const auto enn = make_enn_model({3, 5, 1}, 6, 11, 1.0);
        std::mt19937_64 g(2);
        CandidateSet cs{0, {}};
        for (int i = 0; i < 8; ++i) cs.embeddings.push_back(random_vector(3, g));
        const auto m = ensemble_rewards(enn.particles(), cs.embeddings, Exec::serial);
        Rng a(3), b(3);
        CHECK(infomax_select(cs, enn, 30, a, PrefMode::logistic) == infomax_select(m, 30, b, PrefMode::logistic));
    }
    Rng rng(1);
    const auto m = rows_to_matrix({{1.0, 0.0}});
    CHECK_THROWS_AS(infomax_select(m, 1, rng, PrefMode::logistic), ConfigError);
    CHECK_THROWS_AS(infomax_select(rows_to_matrix({{1.0}}), 5, rng, PrefMode::logistic), PreconditionError);
}

TEST_CASE("double Thompson sampling") {
    SUBCASE("identical particles: greedy first, uniform fallback second") {
        const auto m = rows_to_matrix({{0.1, 0.9, 0.3, 0.2}, {0.1, 0.9, 0.3, 0.2}});
        std::array<std::size_t, 4> counts{};
        const std::size_t trials = 30000;
        for (std::uint64_t seed = 0; seed < trials; ++seed) {
            Rng rng(seed);
            SelectionDiagnostics diag;
            const auto r = double_ts_select(m, 5, rng, &diag);
            CHECK(r.first == 1);
            CHECK(diag.fallback);
            CHECK(diag.attempts == 5);
            counts[r.second]++;
        }
        CHECK(counts[1] == 0);
        for (std::size_t i : {0, 2, 3}) CHECK(std::abs(binomial_z(counts[i], trials, 1.0 / 3)) < 3.0);
    }
    SUBCASE("two particles with different argmaxes") {
        const auto m = rows_to_matrix({{0.0, 2.0, 1.0}, {0.0, 1.0, 2.0}});
        std::size_t first_a = 0;
        const std::size_t trials = 4000;
        for (std::uint64_t seed = 0; seed < trials; ++seed) {
            Rng rng(seed);
            const auto r = double_ts_select(m, 30, rng);
            CHECK((r.first == 1 || r.first == 2));
            CHECK((r.second == 1 || r.second == 2));
            if (r.first == 1) ++first_a;
        }
        CHECK(std::abs(binomial_z(first_a, trials, 0.5)) < 3.0);
    }
    SUBCASE("N = 2 is always a permutation") {
        const auto m = rows_to_matrix({{0.5, -0.5}, {-0.5, 0.5}, {0.0, 0.0}});
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            Rng rng(seed);
            const auto r = double_ts_select(m, 3, rng);
            check_valid(r, 2);
        }
    }
    SUBCASE("single particle with K = 1 is greedy plus uniform other") {
        const auto m = rows_to_matrix({{0.2, -1.0, 0.7, 0.1, 0.0}});
        std::array<std::size_t, 5> counts{};
        const std::size_t trials = 1000;
        for (std::uint64_t seed = 0; seed < trials; ++seed) {
            Rng rng(seed);
            const auto r = double_ts_select(m, 1, rng);
            CHECK(r.first == 2);
            counts[r.second]++;
        }
        for (std::size_t i : {0, 1, 3, 4}) CHECK(std::abs(binomial_z(counts[i], trials, 0.25)) < 3.0);
    }
    Rng rng(1);
    CHECK_THROWS_AS(double_ts_select(rows_to_matrix({{1.0, 0.0}}), 0, rng), ConfigError);
}

TEST_CASE("every selector returns two distinct in-range indices") {
    std::mt19937_64 g(99);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + g() % 11;
        const std::size_t s = 1 + g() % 5;
        Matrix m(s, n);
        // Coarse values so ties are common.
        for (auto& v : m.data) v = static_cast<double>(static_cast<int>(g() % 5) - 2);
        const std::vector<double> r(m.row(0).begin(), m.row(0).end());
        Rng rng(g());
        const double tau = std::pow(10.0, static_cast<double>(g() % 9) - 4.0);
        check_valid(passive_select(n, rng), n);
        check_valid(boltzmann_select(r, tau, rng), n);
        check_valid(greedy_boltzmann_select(r, tau, rng), n);
        check_valid(infomax_select(m, 2 + g() % 10, rng, g() % 2 ? PrefMode::ratio : PrefMode::logistic), n);
        check_valid(double_ts_select(m, 1 + g() % 5, rng), n);
    }
}

TEST_CASE("argmax breaks ties low") {
    const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
    CHECK(argmax_lowest(v) == 1);
}
