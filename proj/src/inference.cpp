#include "mvaft/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "mvaft/imputation.hpp"

namespace mvaft {

namespace {

double chi_square_upper(double statistic, int df) {
    if (!(statistic > 0.0)) return 1.0;
    boost::math::chi_squared dist(static_cast<double>(df));
    return boost::math::cdf(boost::math::complement(dist, statistic));
}

}  // namespace

WaldTest wald_test(const Eigen::VectorXd& beta, const Eigen::MatrixXd& covariance, const Eigen::MatrixXd& contrast) {
    if (covariance.rows() != beta.size() || covariance.cols() != beta.size())
        throw ValidationError({"Wald test needs a fitted covariance matrix"});
    if (contrast.cols() != beta.size() || contrast.rows() == 0)
        throw ValidationError({"contrast matrix has the wrong shape"});

    const Eigen::VectorXd cb = contrast * beta;
    const Eigen::MatrixXd middle = contrast * covariance * contrast.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(middle);
    lu.setThreshold(1e-12);
    if (lu.rank() < middle.rows()) throw NumericalError("rank-deficient contrast covariance in Wald test");

    WaldTest out;
    out.contrast = contrast;
    out.df = static_cast<int>(contrast.rows());
    out.statistic = std::max(0.0, cb.dot(lu.solve(cb)));
    out.p_value = chi_square_upper(out.statistic, out.df);
    if (out.df == 1) {
        out.difference = cb(0);
        out.standard_error = std::sqrt(middle(0, 0));
    }
    return out;
}

WaldTest wald_equal(const FitResult& fit, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    const auto p = fit.beta.size();
    Eigen::MatrixXd contrast = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pairs.size()), p);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [a, b] = pairs[k];
        if (static_cast<Eigen::Index>(a) >= p || static_cast<Eigen::Index>(b) >= p || a == b)
            throw ValidationError({"invalid coefficient pair in equality test"});
        contrast(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a)) = 1.0;
        contrast(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(b)) = -1.0;
    }
    return wald_test(fit.beta, fit.covariance, contrast);
}

LogRankResult naive_logrank(const SurvivalSample& first, const SurvivalSample& second) {
    if (first.values.empty() || second.values.empty()) throw ValidationError({"log-rank groups must be nonempty"});
    if (first.values.size() != first.statuses.size() || second.values.size() != second.statuses.size())
        throw ValidationError({"log-rank samples have unequal lengths"});

    struct Counts {
        double events[2] = {0, 0};
        double removed[2] = {0, 0};
    };
    std::map<double, Counts> by_time;
    const SurvivalSample* groups[2] = {&first, &second};
    double at_risk[2] = {0, 0};
    for (int g = 0; g < 2; ++g) {
        for (std::size_t i = 0; i < groups[g]->values.size(); ++i) {
            auto& c = by_time[groups[g]->values[i]];
            c.removed[g] += 1.0;
            if (groups[g]->statuses[i] == 1) c.events[g] += 1.0;
        }
        at_risk[g] = static_cast<double>(groups[g]->values.size());
    }

    LogRankResult out;
    double total_events = 0.0;
    for (const auto& [time, c] : by_time) {
        const double d = c.events[0] + c.events[1];
        const double n = at_risk[0] + at_risk[1];
        if (d > 0.0) {
            total_events += d;
            out.observed_first += c.events[0];
            out.expected_first += d * at_risk[0] / n;
            if (n > 1.0) out.variance += d * (at_risk[0] / n) * (at_risk[1] / n) * (n - d) / (n - 1.0);
        }
        at_risk[0] -= c.removed[0];
        at_risk[1] -= c.removed[1];
    }
    if (total_events == 0.0) throw ValidationError({"log-rank test needs at least one event"});
    const double diff = out.observed_first - out.expected_first;
    out.statistic = out.variance > 0.0 ? diff * diff / out.variance : 0.0;
    out.p_value = chi_square_upper(out.statistic, 1);
    return out;
}

SurvivalSample residual_sample(const StackedDesign& design, const Eigen::VectorXd& beta, int position) {
    const Eigen::VectorXd e = residuals(design, beta);
    SurvivalSample out;
    for (std::size_t r = 0; r < design.observation_count(); ++r) {
        if (design.position[r] != position) continue;
        out.values.push_back(e(static_cast<Eigen::Index>(r)));
        out.statuses.push_back(design.status[r]);
    }
    return out;
}

std::vector<SurvivalCurve> km_residual_curves(const StackedDesign& design, const FitResult& fit) {
    const Eigen::VectorXd e = residuals(design, fit.beta);
    std::vector<SurvivalCurve> out;
    auto curve_for = [&](const std::string& label, auto&& keep) {
        std::vector<double> values;
        std::vector<int> statuses;
        for (std::size_t r = 0; r < design.observation_count(); ++r) {
            if (!keep(r)) continue;
            values.push_back(e(static_cast<Eigen::Index>(r)));
            statuses.push_back(design.status[r]);
        }
        if (!values.empty()) out.push_back({label, product_limit_table(values, statuses)});
    };
    for (int k = 0; k < design.max_size; ++k)
        curve_for("margin_" + std::to_string(k + 1), [&](std::size_t r) { return design.position[r] == k; });
    if (design.class_count > 1 && design.class_count < design.max_size) {
        for (int c = 0; c < design.class_count; ++c)
            curve_for("class_" + std::to_string(c + 1), [&](std::size_t r) { return design.margin_class[r] == c; });
    }
    curve_for("pooled", [](std::size_t) { return true; });
    return out;
}

}  // namespace mvaft
