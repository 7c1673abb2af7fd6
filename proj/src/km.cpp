#include "mvaft/km.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace mvaft {

std::vector<ProductLimitRow> product_limit_table(std::span<const double> values,
                                                 std::span<const int> statuses,
                                                 std::span<const double> weights) {
    const std::size_t n = values.size();
    if (n == 0) throw Error("product-limit estimate needs at least one observation");
    if (statuses.size() != n || (!weights.empty() && weights.size() != n))
        throw Error("product-limit inputs have unequal lengths");
    for (double w : weights)
        if (!(w > 0.0)) throw Error("product-limit weights must be positive");

    const auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += weight(i);

    std::vector<ProductLimitRow> rows;
    double removed = 0.0;
    double survival = 1.0;
    std::size_t i = 0;
    while (i < n) {
        const double t = values[order[i]];
        ProductLimitRow row;
        row.time = t;
        row.at_risk = total - removed;
        double group_weight = 0.0;
        for (; i < n && values[order[i]] == t; ++i) {
            const double w = weight(order[i]);
            group_weight += w;
            if (statuses[order[i]] == 1)
                row.events += w;
            else
                row.censored += w;
        }
        if (row.events > 0.0) {
            // Exact zero once the whole remaining risk set fails.
            survival = row.events >= row.at_risk ? 0.0 : survival * (1.0 - row.events / row.at_risk);
        }
        row.survival = survival;
        removed += group_weight;
        rows.push_back(row);
    }
    return rows;
}

StepCDF::StepCDF(std::vector<double> jump_points, std::vector<double> masses, double tail_mass,
                 double max_value)
    : jump_points_(std::move(jump_points)),
      masses_(std::move(masses)),
      tail_mass_(tail_mass),
      max_value_(max_value) {
    corrected_points_ = jump_points_;
    std::vector<double> corrected = masses_;
    if (tail_mass_ > 0.0) {
        if (!corrected_points_.empty() && corrected_points_.back() == max_value_) {
            corrected.back() += tail_mass_;
        } else {
            corrected_points_.push_back(max_value_);
            corrected.push_back(tail_mass_);
        }
    }
    const std::size_t m = corrected_points_.size();
    suffix_mass_.assign(m + 1, 0.0);
    suffix_first_.assign(m + 1, 0.0);
    suffix_second_.assign(m + 1, 0.0);
    for (std::size_t k = m; k-- > 0;) {
        const double u = corrected_points_[k];
        suffix_mass_[k] = suffix_mass_[k + 1] + corrected[k];
        suffix_first_[k] = suffix_first_[k + 1] + u * corrected[k];
        suffix_second_[k] = suffix_second_[k + 1] + u * u * corrected[k];
    }
}

double StepCDF::operator()(double t) const {
    double f = 0.0;
    for (std::size_t k = 0; k < jump_points_.size() && jump_points_[k] <= t; ++k) f += masses_[k];
    return f;
}

std::size_t StepCDF::first_above(double t) const {
    const auto it = std::upper_bound(corrected_points_.begin(), corrected_points_.end(), t);
    const auto k = static_cast<std::size_t>(it - corrected_points_.begin());
    if (k >= corrected_points_.size() || !(suffix_mass_[k] > 0.0))
        throw UnrestorableTail("no distribution mass above " + std::to_string(t));
    return k;
}

double StepCDF::tail_mean(double t) const {
    const std::size_t k = first_above(t);
    return suffix_first_[k] / suffix_mass_[k];
}

double StepCDF::tail_second_moment(double t) const {
    const std::size_t k = first_above(t);
    return suffix_second_[k] / suffix_mass_[k];
}

StepCDF pooled_km(std::span<const double> residuals, std::span<const int> statuses,
                  std::span<const double> weights) {
    const auto table = product_limit_table(residuals, statuses, weights);
    std::vector<double> points, masses;
    double previous = 1.0;
    for (const auto& row : table) {
        if (row.events > 0.0) {
            const double mass = previous - row.survival;
            if (mass > 0.0) {
                points.push_back(row.time);
                masses.push_back(mass);
            }
            previous = row.survival;
        }
    }
    return StepCDF(std::move(points), std::move(masses), previous, table.back().time);
}

}  // namespace mvaft
