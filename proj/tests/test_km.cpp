#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "mvaft/km.hpp"
#include "support.hpp"

using namespace mvaft;
using mvaft::testing::conditional_moment;
using mvaft::testing::redistribute_to_right;

namespace {

void check_against_oracle(const std::vector<double>& e, const std::vector<int>& d, const std::vector<double>& w = {}) {
    const StepCDF f = pooled_km(e, d, w);
    const auto oracle = redistribute_to_right(e, d, w);
    REQUIRE(f.jump_points().size() == oracle.atoms.size());
    std::size_t j = 0;
    for (const auto& [u, m] : oracle.atoms) {
        CHECK(f.jump_points()[j] == u);
        CHECK(std::abs(f.masses()[j] - m) < 1e-12);
        ++j;
    }
    CHECK(std::abs(f.tail_mass() - oracle.tail) < 1e-12);
    const double top = *std::max_element(e.begin(), e.end());
    for (double t : e) {
        if (t >= top) continue;
        CHECK(std::abs(f.tail_mean(t) - conditional_moment(oracle, top, t, 1)) < 1e-12);
        CHECK(std::abs(f.tail_second_moment(t) - conditional_moment(oracle, top, t, 2)) < 1e-12);
    }
}

}  // namespace

TEST_CASE("hand product-limit examples") {
    const StepCDF f = pooled_km(std::vector<double>{1, 2, 3}, std::vector<int>{1, 0, 1});
    REQUIRE(f.masses().size() == 2);
    CHECK(f.jump_points()[0] == 1.0);
    CHECK(f.jump_points()[1] == 3.0);
    CHECK(std::abs(f.masses()[0] - 1.0 / 3.0) < 1e-12);
    CHECK(std::abs(f.masses()[1] - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(f.tail_mass()) < 1e-12);

    const StepCDF g = pooled_km(std::vector<double>{1, 2}, std::vector<int>{1, 0});
    REQUIRE(g.masses().size() == 1);
    CHECK(std::abs(g.masses()[0] - 0.5) < 1e-12);
    CHECK(std::abs(g.tail_mass() - 0.5) < 1e-12);
}

TEST_CASE("uncensored sample gives the empirical cdf") {
    const std::vector<double> e{0.3, -1.2, 4.0, 2.5, 0.0};
    const StepCDF f = pooled_km(e, std::vector<int>(e.size(), 1));
    for (double m : f.masses()) CHECK(m == doctest::Approx(0.2).epsilon(1e-14));
    for (double t : {-2.0, -1.2, 0.1, 3.0, 4.0, 9.0}) {
        const double expect = static_cast<double>(std::count_if(e.begin(), e.end(), [&](double v) { return v <= t; })) / 5.0;
        CHECK(std::abs(f(t) - expect) < 1e-12);
    }
}

TEST_CASE("tail moments on the worked examples") {
    const StepCDF f = pooled_km(std::vector<double>{1, 2, 3}, std::vector<int>{1, 0, 1});
    CHECK(std::abs(f.tail_mean(1.5) - 3.0) < 1e-12);
    CHECK(std::abs(f.tail_mean(0.0) - 7.0 / 3.0) < 1e-12);
    CHECK(std::abs(f.tail_second_moment(1.5) - 9.0) < 1e-12);

    const StepCDF g = pooled_km(std::vector<double>{-1, 2}, std::vector<int>{1, 1});
    CHECK(std::abs(g.tail_second_moment(0.0) - 4.0) < 1e-12);
    CHECK(std::abs(g.tail_second_moment(-5.0) - 2.5) < 1e-12);
    CHECK(std::abs(g.tail_mean(-5.0) - 0.5) < 1e-12);
}

TEST_CASE("tail correction moves leftover mass to the largest value") {
    const StepCDF g = pooled_km(std::vector<double>{1, 2}, std::vector<int>{1, 0});
    CHECK(std::abs(g.tail_mean(1.5) - 2.0) < 1e-12);
    CHECK(std::abs(g.tail_mean(0.0) - 1.5) < 1e-12);
    CHECK_THROWS_AS(g.tail_mean(2.0), UnrestorableTail);
    CHECK_THROWS_AS(g.tail_second_moment(5.0), UnrestorableTail);
}

TEST_CASE("events precede censorings at tied values") {
    // Censoring at 1 is still at risk when the event at 1 happens.
    const StepCDF f = pooled_km(std::vector<double>{1, 1, 2}, std::vector<int>{0, 1, 1});
    REQUIRE(f.masses().size() == 2);
    CHECK(std::abs(f.masses()[0] - 1.0 / 3.0) < 1e-12);
    CHECK(std::abs(f.masses()[1] - 2.0 / 3.0) < 1e-12);
    check_against_oracle({1, 1, 2, 2, 3}, {0, 1, 1, 0, 0});
}

TEST_CASE("all small configurations match redistribute to the right") {
    // every status pattern on up to 6 points, with ties
    const std::vector<std::vector<double>> samples{
        {0.5}, {1, 2}, {2, 1, 3}, {1, 1, 2, 3}, {-1, 0.5, 0.5, 2, 4}, {3, 1, 4, 1, 5, 9}};
    for (const auto& e : samples) {
        const std::size_t n = e.size();
        for (unsigned mask = 1; mask < (1u << n); ++mask) {
            std::vector<int> d(n);
            for (std::size_t i = 0; i < n; ++i) d[i] = (mask >> i) & 1u;
            CAPTURE(mask);
            check_against_oracle(e, d);
        }
    }
}

TEST_CASE("integer weights equal the replicated sample exactly") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> wdist(1, 3);
    std::uniform_real_distribution<double> v(0.0, 4.0);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 2 + rep % 5;
        std::vector<double> e(n), w(n), e_rep;
        std::vector<int> d(n), d_rep;
        for (std::size_t i = 0; i < n; ++i) {
            e[i] = std::round(v(rng) * 2.0) / 2.0;
            d[i] = (rng() % 3) != 0;
            w[i] = wdist(rng);
        }
        if (std::none_of(d.begin(), d.end(), [](int s) { return s == 1; })) d[0] = 1;
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < w[i]; ++c) {
                e_rep.push_back(e[i]);
                d_rep.push_back(d[i]);
            }
        const StepCDF a = pooled_km(e, d, w);
        const StepCDF b = pooled_km(e_rep, d_rep);
        REQUIRE(a.jump_points() == b.jump_points());
        for (std::size_t j = 0; j < a.masses().size(); ++j) CHECK(a.masses()[j] == doctest::Approx(b.masses()[j]).epsilon(1e-15));
        CHECK(std::abs(a.tail_mass() - b.tail_mass()) < 1e-15);
        check_against_oracle(e, d, w);
    }
}

TEST_CASE("permutation invariance and monotone cdf") {
    std::vector<double> e{0.2, 1.7, -0.4, 3.3, 1.7, 0.9, 2.2};
    std::vector<int> d{1, 0, 1, 1, 1, 0, 0};
    const StepCDF f = pooled_km(e, d);
    std::vector<std::size_t> idx(e.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::mt19937 rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<double> e2;
        std::vector<int> d2;
        for (auto i : idx) {
            e2.push_back(e[i]);
            d2.push_back(d[i]);
        }
        const StepCDF g = pooled_km(e2, d2);
        CHECK(g.jump_points() == f.jump_points());
        for (std::size_t j = 0; j < f.masses().size(); ++j) CHECK(std::abs(g.masses()[j] - f.masses()[j]) < 1e-15);
    }
    double prev = 0.0;
    for (double t = -1.0; t < 4.0; t += 0.05) {
        CHECK(f(t) >= prev);
        CHECK(f(t) <= 1.0 + 1e-15);
        prev = f(t);
    }
}

TEST_CASE("product limit table and input errors") {
    const auto rows = product_limit_table(std::vector<double>{1, 2, 3}, std::vector<int>{1, 0, 1});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].at_risk == 3.0);
    CHECK(rows[1].censored == 1.0);
    CHECK(std::abs(rows[0].survival - 2.0 / 3.0) < 1e-12);
    CHECK(rows[2].survival == 0.0);

    CHECK_THROWS_AS(pooled_km(std::vector<double>{}, std::vector<int>{}), Error);
    CHECK_THROWS_AS(pooled_km(std::vector<double>{1, 2}, std::vector<int>{1, 1}, std::vector<double>{1, 0}),
                    Error);
    CHECK_THROWS_AS(pooled_km(std::vector<double>{1, 2}, std::vector<int>{1}), Error);
}
