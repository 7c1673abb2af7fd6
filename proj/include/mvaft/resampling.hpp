#pragma once

#include <Eigen/Dense>

#include <vector>

#include "mvaft/gee.hpp"
#include "mvaft/random.hpp"

namespace mvaft {

// Cluster multipliers Z_i ~ Exp(1): positive, mean 1, variance 1.
std::vector<double> draw_multipliers(std::size_t n, Rng& rng);

// One perturbed fit: iterates L*_n from `start` with the multiplier-weighted
// KM and Z-weighted cluster sums, under the same convergence rule as fit().
Eigen::VectorXd bootstrap_replicate(const StackedDesign& design, const std::vector<double>& multipliers,
                                    const Eigen::VectorXd& start, const FitConfig& config);

// Sample covariance of config.bootstrap replicates. Replicate b draws its
// multipliers from sub-stream b of config.seed, so the result does not
// depend on thread count or execution order. Failed replicates (errors, or
// iterations still growing when max_iter runs out) are dropped and counted; more than 10% failures adds a warning.
BootstrapSummary bootstrap_covariance(const StackedDesign& design, const FitConfig& config,
                                      const Eigen::VectorXd& start);

// fit() followed by bootstrap_covariance() from the same initial estimate.
FitResult fit_with_covariance(const StackedDesign& design, const FitConfig& config);
void attach_covariance(FitResult& fit, BootstrapSummary summary);

}  // namespace mvaft
