#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mvaft/data_model.hpp"
#include "mvaft/random.hpp"
#include "mvaft/working_cov.hpp"

namespace mvaft {

enum class MarginLaw { normal, logistic, gumbel };

std::string to_string(MarginLaw law);
MarginLaw parse_margin_law(const std::string& name);  // N|L|G or normal|logistic|gumbel

// Clayton parameter for a Kendall tau: tau = theta / (theta + 2).
double clayton_theta(double tau);

// n x K uniforms from a Clayton copula via the gamma-frailty construction
// V ~ Gamma(1/theta, 1), U_k = (1 + E_k / V)^(-1/theta), E_k ~ Exp(1).
// theta = 0 gives independent uniforms.
Eigen::MatrixXd sample_clayton(double theta, int margins, std::size_t n, Rng& rng);

// Quantile of the textbook standard law: N(0,1), logistic(0,1), and the
// max-type Gumbel(0,1) (mean Euler's gamma, not centered).
double margin_quantile(double u, MarginLaw law);
Eigen::MatrixXd margin_transform(const Eigen::MatrixXd& uniforms, const std::vector<MarginLaw>& laws);

// Sample Kendall tau in O(n log n) (Knight's algorithm, continuous data).
double kendall_tau(std::span<const double> x, std::span<const double> y);

// Simulation model per margin k:
//   log T_ik = intercept_k + beta1_k X1_ik + beta2_k X2_ik + eps_ik,
// X1 ~ Bernoulli(0.5), X2 ~ N(0, 0.5^2), eps from a Clayton copula with the
// margin laws below, censoring C ~ Uniform(0, c_k) on the original scale.
struct Scenario {
    std::string name = "scenario";
    std::size_t clusters = 200;
    int margins = 3;
    std::vector<MarginLaw> laws{MarginLaw::normal, MarginLaw::normal, MarginLaw::normal};
    double tau = 0.0;
    double censoring = 0.0;
    std::vector<double> intercepts{2.0, 2.0, 2.0};
    std::vector<double> beta1{1.0, 1.0, 1.0};
    std::vector<double> beta2{1.0, 1.0, 1.0};
    bool shared_coefficients = true;   // one slope per covariate
    bool identical_margins = true;     // single margin class
    std::vector<Structure> structures{Structure::exchangeable, Structure::ar1};
    int replicates = 200;
    int bootstrap = 200;
    std::uint64_t seed = 1;
    int threads = 1;
    int calibration_draws = 100000;
};

void check(const Scenario& scenario);

// Key-value text, one `key = value` per line, '#' comments. Lists are
// comma separated; a single value is broadcast to every margin. Unknown
// keys are reported together.
Scenario parse_scenario(std::istream& in);
Scenario read_scenario_file(const std::string& path);

// Upper bound c of the uniform censoring law for one margin (0-based) so
// that P(C < T) matches target, solved by bisection over Monte Carlo draws
// of T. target 0 gives +infinity.
double calibrate_censoring(const Scenario& scenario, int margin, double target, Rng& rng);
std::vector<double> calibrate_all(const Scenario& scenario);

SurvivalDataset generate_dataset(const Scenario& scenario, const std::vector<double>& censor_bounds, Rng& rng);
DesignSpec scenario_design(const Scenario& scenario);
Eigen::VectorXd true_coefficients(const Scenario& scenario);

struct EstimatorSummary {
    std::string label;  // JS, IND, EX, AR1, UN
    Eigen::VectorXd bias;
    Eigen::VectorXd empirical_se;
    Eigen::VectorXd estimated_se;
    Eigen::VectorXd relative_efficiency;  // (empirical SE of JS / empirical SE)^2
};

struct StudyReport {
    std::string scenario;
    std::vector<std::string> coefficient_names;
    std::vector<EstimatorSummary> estimators;  // JS first
    int replicates_requested = 0;
    int replicates_used = 0;
    int nonconverged_fits = 0;
    double mean_censoring = 0.0;
    std::vector<double> censor_bounds;
    std::vector<std::string> failures;

    const EstimatorSummary& estimator(const std::string& label) const;
};

StudyReport run_study(const Scenario& scenario);

// CSV columns: estimator,coefficient,bias,empirical_se,estimated_se,re
void write_report_csv(std::ostream& out, const StudyReport& report);
// Aligned text table: Bias / Empirical SE / Estimated SE / RE blocks.
void write_report_table(std::ostream& out, const StudyReport& report);

}  // namespace mvaft
