#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvaft/data_model.hpp"
#include "mvaft/gehan.hpp"
#include "mvaft/imputation.hpp"
#include "mvaft/working_cov.hpp"

namespace mvaft {

struct FitConfig {
    Structure structure = Structure::exchangeable;
    int max_iter = 50;
    double tol = 1e-6;       // max-abs coefficient change
    int bootstrap = 200;     // B
    std::uint64_t seed = 20140101;
    int threads = 1;
    GehanConfig initial;
};

void check(const FitConfig& config);

struct IterationRecord {
    Eigen::VectorXd beta;
    std::optional<double> alpha;
};

struct BootstrapSummary {
    Eigen::MatrixXd covariance;
    std::vector<Eigen::VectorXd> replicates;
    int requested = 0;
    int failed = 0;
    std::vector<std::string> warnings;
};

struct FitResult {
    Structure structure = Structure::exchangeable;
    Eigen::VectorXd beta;
    Eigen::VectorXd initial;               // b_n
    std::vector<double> intercepts;        // per margin class, empty for InterceptMode::none
    std::optional<double> alpha;
    Eigen::MatrixXd omega_hat;             // at the last update
    Eigen::MatrixXd covariance;            // empty until resampling attaches it
    int iterations = 0;
    bool converged = false;
    int cycle_length = 0;                  // see GeeIterations
    std::vector<IterationRecord> trace;    // iterations + 1 entries
    std::optional<BootstrapSummary> bootstrap;
    std::vector<std::string> coefficient_names;

    Eigen::VectorXd standard_errors() const;
};

// Closed-form weighted least-squares update
//   [sum w_i (X_i - Xbar)' W_i (X_i - Xbar)]^-1 [sum w_i (X_i - Xbar)' W_i (Yhat_i - Ybar)]
// with unweighted position-aligned means. cluster_weights empty means 1.
Eigen::VectorXd gee_update(const StackedDesign& design, const ImputationSet& imputation,
                           const WorkingCovariance& weight, std::span<const double> cluster_weights = {});

// Runs steps 2-3 from `start` until the max-abs change drops below tol or
// max_iter is spent. An iterate that repeats one of the last few exactly
// stops the loop unconverged, since the remaining iterations would only
// go round the same cycle. Used by fit() and by the multiplier bootstrap.
struct GeeIterations {
    Eigen::VectorXd beta;
    std::optional<double> alpha;
    Eigen::MatrixXd omega_hat;
    int iterations = 0;
    bool converged = false;
    int cycle_length = 0;  // > 0 when stopped early on an exact cycle
    std::vector<IterationRecord> trace;
};

GeeIterations iterate_gee(const StackedDesign& design, Structure structure, const Eigen::VectorXd& start,
                          int max_iter, double tol, std::span<const double> cluster_weights = {});

// Point estimate: smoothed Gehan start followed by GEE iterations. No
// covariance; see bootstrap_covariance().
FitResult fit(const StackedDesign& design, const FitConfig& config);
FitResult fit_from(const StackedDesign& design, const FitConfig& config, const Eigen::VectorXd& initial);

// Mean of e-hat(beta) over each margin class.
std::vector<double> recover_intercepts(const StackedDesign& design, const Eigen::VectorXd& beta);

}  // namespace mvaft
