#pragma once

#include <span>
#include <vector>

#include "mvaft/error.hpp"

namespace mvaft {

// One row per distinct observed value of a product-limit fit.
struct ProductLimitRow {
    double time = 0.0;
    double at_risk = 0.0;    // weighted count with value >= time
    double events = 0.0;     // weighted events at time
    double censored = 0.0;   // weighted censorings at time
    double survival = 1.0;   // S(time), right-continuous
};

// Weighted product-limit table over every distinct value. Tied events and
// censorings share the same risk set (events are counted first).
std::vector<ProductLimitRow> product_limit_table(std::span<const double> values,
                                                 std::span<const int> statuses,
                                                 std::span<const double> weights = {});

// Discrete distribution function with atoms at the uncensored values.
// F(t) = sum of masses at points <= t.
class StepCDF {
public:
    StepCDF() = default;
    StepCDF(std::vector<double> jump_points, std::vector<double> masses, double tail_mass, double max_value);

    const std::vector<double>& jump_points() const noexcept { return jump_points_; }
    const std::vector<double>& masses() const noexcept { return masses_; }
    // Mass left unassigned when the largest value is censored.
    double tail_mass() const noexcept { return tail_mass_; }
    // Largest pooled value, censored or not.
    double max_value() const noexcept { return max_value_; }

    double operator()(double t) const;

    // Truncated moments over the tail-corrected law: unassigned mass is
    // moved onto max_value (the largest value is treated as an event).
    double tail_mean(double t) const;
    double tail_second_moment(double t) const;

private:
    std::size_t first_above(double t) const;

    std::vector<double> jump_points_;
    std::vector<double> masses_;
    double tail_mass_ = 0.0;
    double max_value_ = 0.0;
    // Suffix sums of the corrected atoms: mass, u*mass, u^2*mass.
    std::vector<double> corrected_points_;
    std::vector<double> suffix_mass_;
    std::vector<double> suffix_first_;
    std::vector<double> suffix_second_;
};

// Kaplan-Meier estimate of the distribution function. weights empty means
// all ones; otherwise every weight must be positive.
StepCDF pooled_km(std::span<const double> residuals, std::span<const int> statuses,
                  std::span<const double> weights = {});

inline double tail_mean(const StepCDF& f, double t) { return f.tail_mean(t); }
inline double tail_second_moment(const StepCDF& f, double t) { return f.tail_second_moment(t); }

}  // namespace mvaft
