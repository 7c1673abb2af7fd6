#pragma once

// Fixtures and slow reference implementations shared by the unit and
// acceptance suites. Oracles are written from the definitions, not from the
// library code paths.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "mvaft/data_model.hpp"
#include "mvaft/random.hpp"

namespace mvaft::testing {

inline Observation obs(int cluster, int position, int klass, double y, int status, std::vector<double> x) {
    Observation o;
    o.cluster_id = cluster;
    o.margin_position = position;
    o.margin_class = klass;
    o.log_time = y;
    o.status = status;
    o.covariates = std::move(x);
    return o;
}

// n clusters of K margins, q covariates, Gaussian errors correlated through
// a shared cluster effect, uniform censoring hitting roughly censor_rate.
struct RandomData {
    std::size_t clusters = 30;
    int margins = 3;
    int covariates = 2;
    double censor_rate = 0.0;
    bool distinct_classes = false;
    double shared_effect = 0.7;
};

inline SurvivalDataset random_dataset(const RandomData& cfg, Rng& rng) {
    std::normal_distribution<double> norm(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Observation> rows;
    std::vector<std::string> names;
    for (int j = 0; j < cfg.covariates; ++j) names.push_back("z" + std::to_string(j + 1));
    for (std::size_t i = 0; i < cfg.clusters; ++i) {
        const double u = norm(rng) * cfg.shared_effect;
        for (int k = 1; k <= cfg.margins; ++k) {
            std::vector<double> x;
            for (int j = 0; j < cfg.covariates; ++j) x.push_back(j == 0 ? (coin(rng) ? 1.0 : 0.0) : norm(rng));
            double y = 1.0 + u + norm(rng);
            for (int j = 0; j < cfg.covariates; ++j) y += (j % 2 == 0 ? 1.0 : -0.5) * x[static_cast<std::size_t>(j)];
            int status = 1;
            if (cfg.censor_rate > 0.0 && unif(rng) < cfg.censor_rate) {
                y -= 2.0 * unif(rng);
                status = 0;
            }
            rows.push_back(obs(static_cast<int>(i + 1), k, cfg.distinct_classes ? k : 1, y, status, x));
        }
    }
    return SurvivalDataset::from_rows(std::move(rows), names);
}

// Efron's redistribute-to-the-right construction of the KM masses. Points
// are processed in order with events ahead of censorings at ties; each
// censored point hands its mass to everything after it in proportion to
// weight. Mass left at the end is the tail.
struct KmMasses {
    std::map<double, double> atoms;
    double tail = 0.0;
};

inline KmMasses redistribute_to_right(const std::vector<double>& values, const std::vector<int>& statuses,
                                      std::vector<double> weights = {}) {
    const std::size_t n = values.size();
    if (weights.empty()) weights.assign(n, 1.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return statuses[a] > statuses[b];
    });
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<double> mass(n);
    for (std::size_t r = 0; r < n; ++r) mass[r] = weights[order[r]] / total;
    KmMasses out;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t idx = order[r];
        if (statuses[idx] == 1) {
            out.atoms[values[idx]] += mass[r];
            continue;
        }
        double later = 0.0;
        for (std::size_t s = r + 1; s < n; ++s) later += weights[order[s]];
        if (later == 0.0) {
            out.tail += mass[r];
            continue;
        }
        for (std::size_t s = r + 1; s < n; ++s) mass[s] += mass[r] * weights[order[s]] / later;
    }
    return out;
}

// E[u^power | u > t] under the tail-corrected law, by enumeration.
inline double conditional_moment(const KmMasses& km, double max_value, double t, int power) {
    std::map<double, double> atoms = km.atoms;
    if (km.tail > 0.0) atoms[max_value] += km.tail;
    double num = 0.0, den = 0.0;
    for (const auto& [u, m] : atoms) {
        if (u <= t) continue;
        num += std::pow(u, power) * m;
        den += m;
    }
    return num / den;
}

// Least squares on the centered stacked data, built straight from the rows
// (equal cluster sizes).
inline Eigen::VectorXd centered_ols(const SurvivalDataset& data, const DesignSpec& spec) {
    const std::size_t n = data.clusters.size();
    const std::size_t k = data.clusters.front().observations.size();
    const auto p = static_cast<Eigen::Index>(spec.coefficient_count());
    auto row_of = [&](const Observation& o) {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(p);
        for (const auto& e : spec.entries)
            if (e.margin_position == 0 || e.margin_position == o.margin_position)
                r(static_cast<Eigen::Index>(e.coefficient)) += o.covariates[e.covariate];
        return r;
    };
    Eigen::MatrixXd xbar = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), p);
    Eigen::VectorXd ybar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (const auto& c : data.clusters)
        for (std::size_t m = 0; m < k; ++m) {
            xbar.row(static_cast<Eigen::Index>(m)) += row_of(c.observations[m]) / static_cast<double>(n);
            ybar(static_cast<Eigen::Index>(m)) += c.observations[m].log_time / static_cast<double>(n);
        }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n * k), p);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n * k));
    Eigen::Index r = 0;
    for (const auto& c : data.clusters)
        for (std::size_t m = 0; m < k; ++m, ++r) {
            x.row(r) = row_of(c.observations[m]) - xbar.row(static_cast<Eigen::Index>(m));
            y(r) = c.observations[m].log_time - ybar(static_cast<Eigen::Index>(m));
        }
    return x.colPivHouseholderQr().solve(y);
}

// Smoothed Gehan objective by a plain double loop over all stacked rows.
inline double gehan_objective_direct(const StackedDesign& d, const Eigen::VectorXd& beta, const Eigen::MatrixXd& s) {
    const Eigen::VectorXd e = d.log_time - d.x * beta;
    double total = 0.0;
    for (std::size_t i = 0; i < d.observation_count(); ++i) {
        if (d.status[i] != 1) continue;
        for (std::size_t j = 0; j < d.observation_count(); ++j) {
            if (d.margin_class[j] != d.margin_class[i]) continue;
            const Eigen::VectorXd x =
                (d.x.row(static_cast<Eigen::Index>(i)) - d.x.row(static_cast<Eigen::Index>(j))).transpose();
            const double r = std::sqrt(x.dot(s * x));
            const double diff = e(static_cast<Eigen::Index>(j)) - e(static_cast<Eigen::Index>(i));
            if (r == 0.0) {
                total += std::max(diff, 0.0);
                continue;
            }
            const double z = diff / r;
            const double cdf = 0.5 * (1.0 + std::erf(z / std::sqrt(2.0)));
            const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
            total += diff * cdf + r * pdf;
        }
    }
    return total / static_cast<double>(d.cluster_count());
}

// Unsmoothed Gehan loss n^-1 sum Delta_i (e_j - e_i)^+.
inline double gehan_loss_direct(const StackedDesign& d, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd e = d.log_time - d.x * beta;
    double total = 0.0;
    for (std::size_t i = 0; i < d.observation_count(); ++i) {
        if (d.status[i] != 1) continue;
        for (std::size_t j = 0; j < d.observation_count(); ++j)
            if (d.margin_class[j] == d.margin_class[i])
                total += std::max(e(static_cast<Eigen::Index>(j)) - e(static_cast<Eigen::Index>(i)), 0.0);
    }
    return total / static_cast<double>(d.cluster_count());
}

inline double kendall_naive(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double a = (x[i] - x[j]) * (y[i] - y[j]);
            s += a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
        }
    return s / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace mvaft::testing
