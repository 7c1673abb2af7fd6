#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "mvaft/gee.hpp"
#include "mvaft/resampling.hpp"
#include "mvaft/simulation.hpp"
#include "support.hpp"

using namespace mvaft;

namespace {

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index c) {
    return std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows());
}

Scenario small_scenario() {
    std::istringstream in(
        "name = small\nclusters = 40\nmargins = 3\nlaws = N\ntau = 0.3\ncensoring = 0.2\n"
        "replicates = 4\nbootstrap = 5\nseed = 3\ncalibration_draws = 20000\n");
    return parse_scenario(in);
}

}  // namespace

TEST_CASE("Clayton parameter") {
    CHECK(clayton_theta(0.0) == 0.0);
    CHECK(std::abs(clayton_theta(0.6) - 3.0) < 1e-15);
    CHECK(std::abs(clayton_theta(0.3) - 6.0 / 7.0) < 1e-15);
    CHECK_THROWS_AS(clayton_theta(1.0), ValidationError);
    Rng rng = make_stream(1, 0);
    CHECK_THROWS_AS(sample_clayton(-0.1, 2, 10, rng), ValidationError);
}

TEST_CASE("Clayton sample tau matches theta / (theta + 2)") {
    for (double theta : {0.0, 6.0 / 7.0, 3.0}) {
        Rng rng = make_stream(2, static_cast<std::uint64_t>(theta * 100));
        const Eigen::MatrixXd u = sample_clayton(theta, 3, 100000, rng);
        CHECK(u.minCoeff() > 0.0);
        CHECK(u.maxCoeff() < 1.0);
        const double tau = kendall_tau(column(u, 0), column(u, 2));
        CHECK(std::abs(tau - theta / (theta + 2.0)) < 0.01);
        // uniform margins
        CHECK(std::abs(u.col(1).mean() - 0.5) < 0.005);
    }
}

TEST_CASE("fast Kendall tau agrees with the pair count") {
    Rng rng = make_stream(3, 0);
    std::normal_distribution<double> norm(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> x(150), y(150);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = norm(rng);
            y[i] = 0.5 * x[i] + norm(rng);
        }
        CHECK(std::abs(kendall_tau(x, y) - testing::kendall_naive(x, y)) < 1e-12);
    }
    CHECK_THROWS_AS(kendall_tau(std::vector<double>{1.0}, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("margin quantiles") {
    CHECK(std::abs(margin_quantile(0.5, MarginLaw::normal)) < 1e-15);
    CHECK(std::abs(margin_quantile(0.5, MarginLaw::logistic)) < 1e-15);
    CHECK(std::abs(margin_quantile(0.5, MarginLaw::gumbel) + std::log(std::log(2.0))) < 1e-15);
    CHECK(std::abs(margin_quantile(0.975, MarginLaw::normal) - 1.959963984540054) < 1e-12);
    CHECK_THROWS_AS(margin_quantile(0.0, MarginLaw::normal), ValidationError);
    CHECK_THROWS_AS(margin_quantile(1.0, MarginLaw::gumbel), ValidationError);
    for (MarginLaw law : {MarginLaw::normal, MarginLaw::logistic, MarginLaw::gumbel}) {
        double prev = -1e300;
        for (double u = 0.001; u < 1.0; u += 0.001) {
            const double q = margin_quantile(u, law);
            CHECK(q > prev);
            prev = q;
        }
    }
}

TEST_CASE("margin moments at 1e5 draws") {
    constexpr double gamma = 0.57721566490153286;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    struct Case {
        MarginLaw law;
        double mean, var;
    };
    for (const Case c : {Case{MarginLaw::normal, 0.0, 1.0}, Case{MarginLaw::logistic, 0.0, pi2 / 3.0},
                         Case{MarginLaw::gumbel, gamma, pi2 / 6.0}}) {
        Rng rng = make_stream(4, static_cast<std::uint64_t>(c.law));
        const Eigen::MatrixXd u = sample_clayton(0.0, 1, 100000, rng);
        const Eigen::MatrixXd e = margin_transform(u, {c.law});
        const double mean = e.mean();
        const double var = (e.array() - mean).square().sum() / (e.size() - 1.0);
        const double se_mean = std::sqrt(c.var / 1e5);
        CHECK(std::abs(mean - c.mean) < 4 * se_mean);
        CHECK(std::abs(var / c.var - 1.0) < 0.03);
    }
}

TEST_CASE("scenario parsing") {
    const Scenario s = small_scenario();
    CHECK(s.laws.size() == 3);
    CHECK(s.intercepts == std::vector<double>{2, 2, 2});
    CHECK(s.structures.size() == 2);

    std::istringstream bad("clusters = 10\nfoo = 1\nbar = 2\nlaws = N, Q, N\n");
    try {
        parse_scenario(bad);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        std::string all;
        for (const auto& p : e.problems()) all += p + "\n";
        CHECK(all.find("foo") != std::string::npos);
        CHECK(all.find("bar") != std::string::npos);
        CHECK(all.find("Q") != std::string::npos);
    }
    std::istringstream ragged("margins = 2\nbeta1 = 1, 2, 3\n");
    CHECK_THROWS_AS(parse_scenario(ragged), ValidationError);
    std::istringstream mixed("laws = N, L, G\n");
    CHECK_THROWS_AS(parse_scenario(mixed), ValidationError);  // identical classes by default
    std::istringstream distinct("laws = N, L, G\nclasses = distinct\ncoefficients = margin\nbeta1 = 1, -1, 1\n");
    CHECK(parse_scenario(distinct).laws[2] == MarginLaw::gumbel);
}

TEST_CASE("censoring calibration") {
    Scenario s = small_scenario();
    s.calibration_draws = 100000;
    Rng rng = make_stream(5, 0);
    CHECK(std::isinf(calibrate_censoring(s, 0, 0.0, rng)));
    const double c25 = calibrate_censoring(s, 0, 0.25, rng);
    const double c50 = calibrate_censoring(s, 0, 0.5, rng);
    CHECK(c25 > c50);

    s.censoring = 0.5;
    s.clusters = 20000;
    Rng fresh = make_stream(6, 0);
    const auto data = generate_dataset(s, std::vector<double>(3, c50), fresh);
    double censored = 0.0;
    for (const auto& c : data.clusters)
        for (const auto& o : c.observations) censored += o.status == 0;
    CHECK(std::abs(censored / static_cast<double>(data.observation_count()) - 0.5) < 0.01);

    s.censoring = 0.0;
    Rng none = make_stream(7, 0);
    const auto full = generate_dataset(s, calibrate_all(s), none);
    for (const auto& c : full.clusters)
        for (const auto& o : c.observations) CHECK(o.status == 1);
}

TEST_CASE("generated data follow the scenario layout") {
    std::istringstream in("margins = 3\nlaws = N, L, G\nclasses = distinct\ncoefficients = margin\n"
                          "intercepts = -1, 1, 1\nbeta1 = 1, -1, 1\nbeta2 = -1, 1, 1\nclusters = 30\n");
    const Scenario s = parse_scenario(in);
    Rng rng = make_stream(8, 0);
    const auto data = generate_dataset(s, std::vector<double>(3, INFINITY), rng);
    const auto summary = validate(data);
    CHECK(summary.n == 30);
    CHECK(summary.class_count == 3);
    const auto d = build_design(data, scenario_design(s));
    CHECK(d.coefficient_count() == 6);
    CHECK(true_coefficients(s) == (Eigen::VectorXd(6) << 1, -1, -1, 1, 1, 1).finished());
}

TEST_CASE("study runs are reproducible") {
    const Scenario s = small_scenario();
    const StudyReport a = run_study(s);
    CHECK(a.replicates_used == 4);
    CHECK(a.estimators.size() == 3);
    CHECK(a.estimators.front().label == "JS");
    CHECK(a.estimator("EX").relative_efficiency.allFinite());
    CHECK((a.estimator("JS").relative_efficiency.array() == 1.0).all());
    std::ostringstream first, second, table;
    write_report_csv(first, a);
    Scenario threaded = s;
    threaded.threads = 2;
    write_report_csv(second, run_study(threaded));
    CHECK(first.str() == second.str());
    CHECK(first.str().rfind("estimator,coefficient,bias,empirical_se,estimated_se,re\n", 0) == 0);
    write_report_table(table, a);
    CHECK(table.str().find("Empirical SE") != std::string::npos);
}

TEST_CASE("independent margins give RE near one") {
    std::istringstream in("clusters = 200\nmargins = 3\nlaws = N\ntau = 0\nreplicates = 150\nbootstrap = 2\n"
                          "structures = ex\nseed = 11\n");
    const StudyReport r = run_study(parse_scenario(in));
    for (Eigen::Index j = 0; j < 2; ++j) {
        CHECK(r.estimator("EX").relative_efficiency(j) > 0.85);
        CHECK(r.estimator("EX").relative_efficiency(j) < 1.15);
    }
}

TEST_CASE("bootstrap SD tracks the sampling SD at n = 20") {
    std::istringstream in("clusters = 20\nmargins = 3\nlaws = N\ntau = 0.3\ncensoring = 0.2\nseed = 12\n"
                          "calibration_draws = 20000\n");
    const Scenario s = parse_scenario(in);
    const auto bounds = calibrate_all(s);
    FitConfig config;
    config.bootstrap = 400;
    std::vector<Eigen::VectorXd> estimates;
    Eigen::VectorXd boot_sd = Eigen::VectorXd::Zero(2);
    int boot_sets = 0;
    for (std::uint64_t r = 0; r < 400; ++r) {
        Rng rng = make_stream(s.seed, r + 1);
        const auto d = build_design(generate_dataset(s, bounds, rng), scenario_design(s));
        const FitResult f = fit(d, config);
        estimates.push_back(f.beta);
        if (r < 10) {
            config.seed = r;
            boot_sd += bootstrap_covariance(d, config, f.initial).covariance.diagonal().cwiseSqrt();
            ++boot_sets;
        }
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2), var = Eigen::VectorXd::Zero(2);
    for (const auto& e : estimates) mean += e / 400.0;
    for (const auto& e : estimates) var += (e - mean).cwiseAbs2() / 399.0;
    boot_sd /= boot_sets;
    for (Eigen::Index j = 0; j < 2; ++j) {
        CAPTURE(boot_sd(j));
        CAPTURE(std::sqrt(var(j)));
        CHECK(std::abs(boot_sd(j) / std::sqrt(var(j)) - 1.0) < 0.25);
    }
}
