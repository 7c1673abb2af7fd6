#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvaft/gee.hpp"
#include "mvaft/km.hpp"

namespace mvaft {

struct WaldTest {
    Eigen::MatrixXd contrast;  // q x p
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    // Single-contrast tests also report C beta and its standard error.
    std::optional<double> difference;
    std::optional<double> standard_error;
};

// W = (C b)' (C S C')^-1 (C b) against chi-square(q).
WaldTest wald_test(const Eigen::VectorXd& beta, const Eigen::MatrixXd& covariance, const Eigen::MatrixXd& contrast);

// H0: beta_a = beta_b for every listed (a, b) pair (0-based indices).
WaldTest wald_equal(const FitResult& fit, std::span<const std::pair<std::size_t, std::size_t>> pairs);

struct SurvivalSample {
    std::vector<double> values;
    std::vector<int> statuses;
};

struct LogRankResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double observed_first = 0.0;   // events in the first group
    double expected_first = 0.0;
    double variance = 0.0;
};

// Two-sample log-rank test on residuals treated as data. Ignores that the
// residuals come from estimated coefficients, so the p-value is only a
// rough guide.
LogRankResult naive_logrank(const SurvivalSample& first, const SurvivalSample& second);

struct SurvivalCurve {
    std::string group;
    std::vector<ProductLimitRow> rows;
};

// Product-limit survival curves of the censored residuals (e, Delta) at the
// fitted coefficients: one per margin position, one per margin class when
// classes are pooled across positions, and the pooled curve over all
// observations.
std::vector<SurvivalCurve> km_residual_curves(const StackedDesign& design, const FitResult& fit);

// Residual samples of margin positions (0-based) for naive_logrank.
SurvivalSample residual_sample(const StackedDesign& design, const Eigen::VectorXd& beta, int position);

}  // namespace mvaft
