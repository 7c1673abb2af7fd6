#include "mvaft/gee.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mvaft {

void check(const FitConfig& config) {
    std::vector<std::string> problems;
    if (!(config.tol > 0.0)) problems.push_back("tol must be positive");
    if (config.max_iter < 1) problems.push_back("max_iter must be at least 1");
    if (config.threads < 1) problems.push_back("threads must be at least 1");
    if (!problems.empty()) throw ValidationError(std::move(problems));
}

Eigen::VectorXd FitResult::standard_errors() const {
    if (covariance.size() == 0) return Eigen::VectorXd::Constant(beta.size(), std::nan(""));
    return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

namespace {

[[noreturn]] void report_singular_gram(const StackedDesign& design, const Eigen::MatrixXd& gram) {
    // columns that carry weight in a near-null direction
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const Eigen::VectorXd vals = eig.eigenvalues();
    const double scale = std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
    std::vector<bool> involved(static_cast<std::size_t>(gram.cols()), false);
    for (Eigen::Index k = 0; k < vals.size(); ++k) {
        if (vals(k) > 1e-10 * scale) continue;
        for (Eigen::Index j = 0; j < gram.cols(); ++j)
            if (std::abs(eig.eigenvectors()(j, k)) > 1e-6) involved[static_cast<std::size_t>(j)] = true;
    }
    std::ostringstream msg;
    msg << "singular Gram matrix; collinear columns:";
    for (std::size_t j = 0; j < involved.size(); ++j)
        if (involved[j]) msg << ' ' << (j < design.coefficient_names.size() ? design.coefficient_names[j] : std::to_string(j + 1));
    throw NumericalError(msg.str());
}

std::vector<double> expand_weights(const StackedDesign& design, std::span<const double> cluster_weights) {
    std::vector<double> out;
    if (cluster_weights.empty()) return out;
    out.resize(design.observation_count());
    for (std::size_t i = 0; i < design.cluster_count(); ++i)
        for (std::size_t r = design.offsets[i]; r < design.offsets[i + 1]; ++r) out[r] = cluster_weights[i];
    return out;
}

}  // namespace

Eigen::VectorXd gee_update(const StackedDesign& design, const ImputationSet& imputation,
                           const WorkingCovariance& weight, std::span<const double> cluster_weights) {
    const std::size_t n = design.cluster_count();
    if (!cluster_weights.empty() && cluster_weights.size() != n)
        throw Error("cluster weights must have one entry per cluster");
    const auto p = static_cast<Eigen::Index>(design.coefficient_count());

    // Position-aligned mean of the imputed responses.
    Eigen::VectorXd y_mean = Eigen::VectorXd::Zero(design.max_size);
    for (std::size_t r = 0; r < design.observation_count(); ++r)
        y_mean(design.position[r]) += imputation.imputed_responses(static_cast<Eigen::Index>(r));
    for (int k = 0; k < design.max_size; ++k)
        y_mean(k) /= static_cast<double>(design.position_count[static_cast<std::size_t>(k)]);

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < n; ++i) {
        const auto size = static_cast<Eigen::Index>(design.cluster_size(i));
        const auto begin = static_cast<Eigen::Index>(design.cluster_begin(i));
        const auto xc = design.centered_cluster(i);
        const Eigen::VectorXd yc = imputation.imputed_responses.segment(begin, size) - y_mean.head(size);
        const Eigen::MatrixXd wx = xc.transpose() * weight.inverse(design.cluster_size(i));
        const double z = cluster_weights.empty() ? 1.0 : cluster_weights[i];
        gram.noalias() += z * (wx * xc);
        rhs.noalias() += z * (wx * yc);
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    // LDLT solves through zero pivots silently, so look at D directly.
    const Eigen::VectorXd pivots = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(pivots.minCoeff() > 1e-12 * pivots.cwiseAbs().maxCoeff()) ||
        ldlt.rcond() < 1e-12)
        report_singular_gram(design, gram);
    return ldlt.solve(rhs);
}

GeeIterations iterate_gee(const StackedDesign& design, Structure structure, const Eigen::VectorXd& start,
                          int max_iter, double tol, std::span<const double> cluster_weights) {
    const std::vector<double> obs_weights = expand_weights(design, cluster_weights);
    GeeIterations out;
    out.beta = start;
    out.trace.push_back({start, std::nullopt});
    for (int m = 1; m <= max_iter; ++m) {
        const ImputationSet imputation = impute(design, out.beta, obs_weights);
        // Working moments are taken on the mean-zero error scale.
        const ImputationSet centered = center_by_class(design, imputation, class_means(design, imputation));
        const Eigen::MatrixXd omega = fill_covariance(design, centered);
        const WorkingCovariance weight = build_working_covariance(design, structure, omega);
        const Eigen::VectorXd next = gee_update(design, imputation, weight, cluster_weights);
        if (!next.allFinite()) throw NumericalError("GEE iterate is not finite at iteration " + std::to_string(m));

        const double change = (next - out.beta).lpNorm<Eigen::Infinity>();
        // The imputation is piecewise constant in b, so revisiting an earlier
        // iterate means the sequence cycles from here on.
        int cycle = 0;
        const double tiny = 1e-13 * (1.0 + next.lpNorm<Eigen::Infinity>());
        for (std::size_t back = 2; back <= 32 && back <= out.trace.size(); ++back) {
            if ((next - out.trace[out.trace.size() - back].beta).lpNorm<Eigen::Infinity>() <= tiny) {
                cycle = static_cast<int>(back);
                break;
            }
        }
        out.beta = next;
        out.alpha = weight.alpha;
        out.omega_hat = omega;
        out.iterations = m;
        out.trace.push_back({next, weight.alpha});
        if (change < tol) {
            out.converged = true;
            break;
        }
        if (cycle > 0) {
            out.cycle_length = cycle;
            break;
        }
    }
    return out;
}

std::vector<double> recover_intercepts(const StackedDesign& design, const Eigen::VectorXd& beta) {
    return class_means(design, impute(design, beta));
}

FitResult fit_from(const StackedDesign& design, const FitConfig& config, const Eigen::VectorXd& initial) {
    check(config);
    GeeIterations it = iterate_gee(design, config.structure, initial, config.max_iter, config.tol);
    FitResult out;
    out.structure = config.structure;
    out.initial = initial;
    out.beta = it.beta;
    out.alpha = it.alpha;
    out.omega_hat = std::move(it.omega_hat);
    out.iterations = it.iterations;
    out.converged = it.converged;
    out.cycle_length = it.cycle_length;
    out.trace = std::move(it.trace);
    out.coefficient_names = design.coefficient_names;
    if (design.intercept_mode == InterceptMode::recovered) out.intercepts = recover_intercepts(design, out.beta);
    return out;
}

FitResult fit(const StackedDesign& design, const FitConfig& config) {
    check(config);
    const InitialEstimate initial = solve_initial(design, config.initial);
    return fit_from(design, config, initial.beta);
}

}  // namespace mvaft
