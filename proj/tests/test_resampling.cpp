#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "mvaft/gehan.hpp"
#include "mvaft/resampling.hpp"
#include "support.hpp"

using namespace mvaft;

namespace {

StackedDesign design_for(std::uint64_t seed, std::size_t clusters, double censor) {
    Rng rng = make_stream(seed, 0);
    testing::RandomData cfg;
    cfg.clusters = clusters;
    cfg.censor_rate = censor;
    const auto data = testing::random_dataset(cfg, rng);
    return build_design(data, DesignSpec::shared(data.covariate_names));
}

}  // namespace

TEST_CASE("exponential multipliers have unit mean and variance") {
    Rng rng = make_stream(1, 1);
    const auto z = draw_multipliers(100000, rng);
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / z.size();
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= static_cast<double>(z.size() - 1);
    CHECK(std::abs(mean - 1.0) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
    CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v > 0.0; }));
    Rng again = make_stream(1, 1);
    CHECK(draw_multipliers(100000, again) == z);
}

TEST_CASE("unit multipliers reproduce the point estimate") {
    for (Structure s : {Structure::independence, Structure::exchangeable, Structure::ar1, Structure::unstructured}) {
        const auto d = design_for(800, 60, 0.3);
        FitConfig config;
        config.structure = s;
        const FitResult f = fit(d, config);
        const Eigen::VectorXd star = bootstrap_replicate(d, std::vector<double>(d.cluster_count(), 1.0), f.initial, config);
        CHECK((star - f.beta).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("permuting clusters together with their multipliers") {
    Rng rng = make_stream(810, 0);
    testing::RandomData cfg;
    cfg.clusters = 40;
    cfg.censor_rate = 0.3;
    auto data = testing::random_dataset(cfg, rng);
    const auto d = build_design(data, DesignSpec::shared(data.covariate_names));
    Rng zr = make_stream(810, 1);
    auto z = draw_multipliers(d.cluster_count(), zr);
    FitConfig config;
    const Eigen::VectorXd start = solve_initial(d).beta;
    const Eigen::VectorXd a = bootstrap_replicate(d, z, start, config);
    std::reverse(data.clusters.begin(), data.clusters.end());
    std::reverse(z.begin(), z.end());
    const auto d2 = build_design(data, DesignSpec::shared(data.covariate_names));
    const Eigen::VectorXd b = bootstrap_replicate(d2, z, start, config);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("bootstrap covariance properties") {
    const auto d = design_for(820, 50, 0.25);
    FitConfig config;
    config.bootstrap = 40;
    config.seed = 99;
    const Eigen::VectorXd start = solve_initial(d).beta;
    const BootstrapSummary one = bootstrap_covariance(d, config, start);
    CHECK(one.requested == 40);
    CHECK(one.replicates.size() + static_cast<std::size_t>(one.failed) == 40);
    CHECK((one.covariance - one.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(one.covariance).eigenvalues().minCoeff() >= -1e-12);

    config.threads = 3;
    const BootstrapSummary three = bootstrap_covariance(d, config, start);
    CHECK(three.covariance == one.covariance);

    config.bootstrap = 1;
    try {
        bootstrap_covariance(d, config, start);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(e.problems().front() == "B ≥ 2 required");
    }
}

TEST_CASE("two replicates give a rank one covariance") {
    const auto d = design_for(830, 40, 0.2);
    FitConfig config;
    config.bootstrap = 2;
    const BootstrapSummary s = bootstrap_covariance(d, config, solve_initial(d).beta);
    const auto eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.covariance).eigenvalues();
    CHECK(std::abs(eig(0)) <= 1e-12 * std::max(1.0, eig(1)));
}

TEST_CASE("fit_with_covariance attaches the bootstrap") {
    const auto d = design_for(840, 40, 0.2);
    FitConfig config;
    config.bootstrap = 20;
    const FitResult f = fit_with_covariance(d, config);
    REQUIRE(f.bootstrap.has_value());
    CHECK(f.covariance.rows() == 2);
    CHECK(f.standard_errors().allFinite());
    CHECK((f.standard_errors().array() > 0).all());
    CHECK_THROWS(bootstrap_replicate(d, std::vector<double>(3, 1.0), f.initial, config));
    CHECK_THROWS(bootstrap_replicate(d, std::vector<double>(d.cluster_count(), 0.0), f.initial, config));
}
