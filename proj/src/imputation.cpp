#include "mvaft/imputation.hpp"

namespace mvaft {

Eigen::VectorXd residuals(const StackedDesign& design, const Eigen::VectorXd& b) {
    if (static_cast<std::size_t>(b.size()) != design.coefficient_count())
        throw Error("coefficient vector has length " + std::to_string(b.size()) + ", expected " +
                    std::to_string(design.coefficient_count()));
    return design.log_time - design.x * b;
}

ImputationSet impute(const StackedDesign& design, const Eigen::VectorXd& b,
                     std::span<const double> observation_weights) {
    const std::size_t total = design.observation_count();
    if (!observation_weights.empty() && observation_weights.size() != total)
        throw Error("observation weights must have one entry per observation");

    ImputationSet out;
    out.residuals = residuals(design, b);

    const auto classes = static_cast<std::size_t>(design.class_count);
    std::vector<std::vector<double>> values(classes), weights(classes);
    std::vector<std::vector<int>> statuses(classes);
    for (std::size_t r = 0; r < total; ++r) {
        const auto c = static_cast<std::size_t>(design.margin_class[r]);
        values[c].push_back(out.residuals(static_cast<Eigen::Index>(r)));
        statuses[c].push_back(design.status[r]);
        if (!observation_weights.empty()) weights[c].push_back(observation_weights[r]);
    }
    out.distributions.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) out.distributions.push_back(pooled_km(values[c], statuses[c], weights[c]));

    const auto n = static_cast<Eigen::Index>(total);
    out.imputed_responses.resize(n);
    out.residual_expectations.resize(n);
    out.second_moments.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double e = out.residuals(r);
        const double y = design.log_time(r);
        const StepCDF& f = out.distributions[static_cast<std::size_t>(design.margin_class[static_cast<std::size_t>(r)])];
        // The reclassified maximum has no mass above it; its conditional law
        // is the point itself.
        if (design.status[static_cast<std::size_t>(r)] == 1 || e >= f.max_value()) {
            out.imputed_responses(r) = y;
            out.residual_expectations(r) = e;
            out.second_moments(r) = e * e;
        } else {
            const double mean = f.tail_mean(e);
            out.residual_expectations(r) = mean;
            out.imputed_responses(r) = mean + (y - e);
            out.second_moments(r) = f.tail_second_moment(e);
        }
    }
    return out;
}

Eigen::VectorXd impute_responses(const StackedDesign& design, const Eigen::VectorXd& b) {
    return impute(design, b).imputed_responses;
}

Eigen::VectorXd second_moments(const StackedDesign& design, const Eigen::VectorXd& b) {
    return impute(design, b).second_moments;
}

Eigen::VectorXd residual_expectations(const StackedDesign& design, const Eigen::VectorXd& b) {
    return impute(design, b).residual_expectations;
}

std::vector<double> class_means(const StackedDesign& design, const ImputationSet& imputation) {
    const auto classes = static_cast<std::size_t>(design.class_count);
    std::vector<double> sum(classes, 0.0), count(classes, 0.0);
    for (std::size_t r = 0; r < design.observation_count(); ++r) {
        const auto c = static_cast<std::size_t>(design.margin_class[r]);
        sum[c] += imputation.residual_expectations(static_cast<Eigen::Index>(r));
        count[c] += 1.0;
    }
    for (std::size_t c = 0; c < classes; ++c) sum[c] /= count[c];
    return sum;
}

ImputationSet center_by_class(const StackedDesign& design, const ImputationSet& imputation,
                              const std::vector<double>& means) {
    ImputationSet out = imputation;
    for (std::size_t r = 0; r < design.observation_count(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        const double mu = means[static_cast<std::size_t>(design.margin_class[r])];
        const double ehat = imputation.residual_expectations(i);
        out.residuals(i) -= mu;
        out.residual_expectations(i) = ehat - mu;
        out.second_moments(i) = imputation.second_moments(i) - 2.0 * mu * ehat + mu * mu;
        out.imputed_responses(i) -= mu;
    }
    return out;
}

}  // namespace mvaft
