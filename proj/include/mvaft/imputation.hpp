#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "mvaft/data_model.hpp"
#include "mvaft/km.hpp"

namespace mvaft {

// Conditional expectations of censored responses and residuals at a fixed
// coefficient vector, one entry per stacked observation.
struct ImputationSet {
    Eigen::VectorXd residuals;              // e_ik(b)
    Eigen::VectorXd imputed_responses;      // Y-hat_ik(b)
    Eigen::VectorXd residual_expectations;  // e-hat_ik(b)
    Eigen::VectorXd second_moments;         // V-hat_ik(b)
    std::vector<StepCDF> distributions;     // one per margin class
};

Eigen::VectorXd residuals(const StackedDesign& design, const Eigen::VectorXd& b);

// Rebuilds the per-class pooled KM estimates from the residuals at b and
// fills every imputed quantity. observation_weights (optional) give the
// multiplier-weighted KM used by resampling.
ImputationSet impute(const StackedDesign& design, const Eigen::VectorXd& b,
                     std::span<const double> observation_weights = {});

Eigen::VectorXd impute_responses(const StackedDesign& design, const Eigen::VectorXd& b);
Eigen::VectorXd second_moments(const StackedDesign& design, const Eigen::VectorXd& b);
Eigen::VectorXd residual_expectations(const StackedDesign& design, const Eigen::VectorXd& b);

// Per-class means of e-hat; these are the intercepts when the errors are
// taken to have mean zero.
std::vector<double> class_means(const StackedDesign& design, const ImputationSet& imputation);

// Shifts e, e-hat and V-hat to the mean-zero error scale by subtracting the
// class means: V-hat becomes V-hat - 2 mu e-hat + mu^2.
ImputationSet center_by_class(const StackedDesign& design, const ImputationSet& imputation,
                              const std::vector<double>& means);

}  // namespace mvaft
