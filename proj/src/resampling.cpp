#include "mvaft/resampling.hpp"

#include <optional>

#include "mvaft/parallel.hpp"

namespace mvaft {

std::vector<double> draw_multipliers(std::size_t n, Rng& rng) {
    std::exponential_distribution<double> exp1(1.0);
    std::vector<double> z(n);
    for (auto& v : z) v = exp1(rng);
    return z;
}

Eigen::VectorXd bootstrap_replicate(const StackedDesign& design, const std::vector<double>& multipliers,
                                    const Eigen::VectorXd& start, const FitConfig& config) {
    if (multipliers.size() != design.cluster_count()) throw Error("one multiplier per cluster is required");
    for (double z : multipliers)
        if (!(z > 0.0)) throw Error("multipliers must be positive");
    const GeeIterations it = iterate_gee(design, config.structure, start, config.max_iter, config.tol, multipliers);
    // Unconverged and still moving faster than the first step: the map is
    // running away rather than circling, so the endpoint means nothing.
    if (!it.converged && it.cycle_length == 0 && it.trace.size() > 2) {
        const auto step = [&](std::size_t m) { return (it.trace[m].beta - it.trace[m - 1].beta).lpNorm<Eigen::Infinity>(); };
        if (step(it.trace.size() - 1) > step(1)) throw NumericalError("bootstrap replicate diverged");
    }
    return it.beta;
}

BootstrapSummary bootstrap_covariance(const StackedDesign& design, const FitConfig& config,
                                      const Eigen::VectorXd& start) {
    check(config);
    if (config.bootstrap < 2) throw ValidationError({"B ≥ 2 required"});
    const auto b_count = static_cast<std::size_t>(config.bootstrap);
    std::vector<std::optional<Eigen::VectorXd>> results(b_count);
    parallel_for(b_count, config.threads, [&](std::size_t b) {
        Rng rng = make_stream(config.seed, b + 1);
        const auto z = draw_multipliers(design.cluster_count(), rng);
        try {
            results[b] = bootstrap_replicate(design, z, start, config);
        } catch (const Error&) {
            results[b].reset();
        }
    });

    BootstrapSummary out;
    out.requested = config.bootstrap;
    for (auto& r : results) {
        if (r)
            out.replicates.push_back(std::move(*r));
        else
            ++out.failed;
    }
    const auto p = start.size();
    const auto kept = static_cast<Eigen::Index>(out.replicates.size());
    if (kept < 2) throw NumericalError("fewer than two bootstrap replicates succeeded");
    Eigen::MatrixXd draws(kept, p);
    for (Eigen::Index b = 0; b < kept; ++b) draws.row(b) = out.replicates[static_cast<std::size_t>(b)].transpose();
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Eigen::MatrixXd centered = draws.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(kept - 1);
    out.covariance = 0.5 * (cov + cov.transpose());
    if (out.failed * 10 > out.requested)
        out.warnings.push_back(std::to_string(out.failed) + " of " + std::to_string(out.requested) +
                               " bootstrap replicates failed");
    return out;
}

void attach_covariance(FitResult& fit, BootstrapSummary summary) {
    fit.covariance = summary.covariance;
    fit.bootstrap = std::move(summary);
}

FitResult fit_with_covariance(const StackedDesign& design, const FitConfig& config) {
    FitResult result = fit(design, config);
    attach_covariance(result, bootstrap_covariance(design, config, result.initial));
    return result;
}

}  // namespace mvaft
