#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "mvaft/data_model.hpp"

namespace mvaft {

// Induced-smoothing Gehan rank estimator for clustered data.
//
// With d = e_jl(b) - e_ik(b), x = X_ik - X_jl and r^2 = x' S x, the smoothed
// objective is
//     G(b) = n^-1 sum_{ik} sum_{jl} Delta_ik [ d Phi(d/r) + r phi(d/r) ]
// over pairs that share a margin class, and its gradient
//     U(b) = n^-1 sum Delta_ik x Phi(d/r)
// is the smoothed Gehan score. Pairs with r = 0 use (d)^+ and I(d >= 0).

struct SmoothedScore {
    double objective = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd jacobian;  // symmetric PSD
};

SmoothedScore smoothed_gehan_score(const StackedDesign& design, const Eigen::VectorXd& beta,
                                   const Eigen::MatrixXd& smoothing);

double smoothed_gehan_objective(const StackedDesign& design, const Eigen::VectorXd& beta,
                                const Eigen::MatrixXd& smoothing);

// (1/N) I_p, N the total number of observations.
Eigen::MatrixXd default_smoothing(const StackedDesign& design);

struct GehanConfig {
    int max_iter = 50;
    double tol = 1e-8;
};

struct InitialEstimate {
    Eigen::VectorXd beta;
    Eigen::MatrixXd smoothing;
    Eigen::MatrixXd jacobian;  // at beta
    std::vector<Eigen::VectorXd> trace;
    std::vector<double> newton_decrements;
    int iterations = 0;
};

class GehanNonConvergence : public Error {
public:
    GehanNonConvergence(std::string what, Eigen::VectorXd last) : Error(std::move(what)), last_(std::move(last)) {}
    const Eigen::VectorXd& last_iterate() const noexcept { return last_; }

private:
    Eigen::VectorXd last_;
};

// Damped Newton on the smoothed score, started at zero, until
// ||U||_inf < tol.
InitialEstimate solve_initial(const StackedDesign& design, const GehanConfig& config = {});

// Covariance of the initial estimator from multiplier-perturbed scores:
// U*(b) weights each pair by Z_i Z_j (cluster multipliers), and the
// one-step replicates A^-1 U* give cov = A^-1 Cov(U*) A^-1.
Eigen::MatrixXd gehan_multiplier_covariance(const StackedDesign& design, const InitialEstimate& estimate,
                                            int replicates, std::uint64_t seed);

}  // namespace mvaft
