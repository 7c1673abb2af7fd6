#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "mvaft/data_model.hpp"
#include "mvaft/imputation.hpp"

namespace mvaft {

enum class Structure { independence, exchangeable, ar1, unstructured };

std::string to_string(Structure s);
Structure parse_structure(const std::string& name);  // ind | ex | ar1 | un

// Empirical working covariance over margin positions (K_max x K_max).
// Diagonal: pooled mean of V-hat over each position's margin class.
// Off-diagonal: average of e-hat_ik e-hat_il over clusters holding both
// positions (1/n for parallel data).
Eigen::MatrixXd fill_covariance(const StackedDesign& design, const ImputationSet& imputation);

// Admissible (positive definite) interval for alpha, already shrunk away
// from its open endpoints.
std::pair<double, double> alpha_range(Structure structure, int max_size);

// Moment estimate of the correlation parameter from Omega-hat: the mean
// correlation over all off-diagonal pairs (EX) or over lag-one pairs (AR1),
// clamped to alpha_range.
double estimate_alpha(const Eigen::MatrixXd& omega_hat, Structure structure);

struct WeightPair {
    Eigen::MatrixXd omega;
    Eigen::MatrixXd inverse;
};

// Working matrix for a cluster holding positions 0..size-1.
WeightPair assemble_weight(Structure structure, std::optional<double> alpha, const Eigen::MatrixXd& omega_hat,
                           int size);

// Structure, parameter and the per-size weight matrices for one iteration.
struct WorkingCovariance {
    Structure structure = Structure::independence;
    std::optional<double> alpha;
    Eigen::MatrixXd omega_hat;
    std::vector<WeightPair> by_size;  // index = cluster size; entry 0 unused

    const Eigen::MatrixXd& inverse(std::size_t cluster_size) const { return by_size.at(cluster_size).inverse; }
};

// Estimates alpha (EX/AR1) and assembles a weight matrix for every cluster
// size present in the design.
WorkingCovariance build_working_covariance(const StackedDesign& design, Structure structure,
                                           const Eigen::MatrixXd& omega_hat);

// Same, with alpha supplied rather than estimated.
WorkingCovariance build_working_covariance(const StackedDesign& design, Structure structure,
                                           const Eigen::MatrixXd& omega_hat, std::optional<double> alpha);

}  // namespace mvaft
