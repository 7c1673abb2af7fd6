#include "mvaft/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mvaft {

namespace {

std::string join_lines(const std::vector<std::string>& problems) {
    std::ostringstream out;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        if (i) out << '\n';
        out << problems[i];
    }
    return out.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : Error(join_lines(problems)), problems_(std::move(problems)) {}

SurvivalDataset SurvivalDataset::from_rows(std::vector<Observation> rows,
                                           std::vector<std::string> covariate_names) {
    SurvivalDataset out;
    out.covariate_names = std::move(covariate_names);
    std::unordered_map<int, std::size_t> index;
    for (auto& row : rows) {
        auto [it, inserted] = index.emplace(row.cluster_id, out.clusters.size());
        if (inserted) out.clusters.push_back(Cluster{row.cluster_id, {}});
        out.clusters[it->second].observations.push_back(std::move(row));
    }
    for (auto& c : out.clusters) {
        std::stable_sort(c.observations.begin(), c.observations.end(),
                         [](const Observation& a, const Observation& b) {
                             return a.margin_position < b.margin_position;
                         });
    }
    return out;
}

std::size_t SurvivalDataset::observation_count() const noexcept {
    std::size_t total = 0;
    for (const auto& c : clusters) total += c.observations.size();
    return total;
}

DatasetSummary validate(const SurvivalDataset& dataset) {
    std::vector<std::string> problems;
    DatasetSummary summary;
    summary.n = dataset.clusters.size();
    if (summary.n == 0) throw ValidationError({"dataset has no clusters"});

    std::set<int> seen_ids;
    std::set<int> classes;
    std::map<int, std::size_t> class_covariate_length;
    std::map<int, int> class_at_position;

    for (const auto& cluster : dataset.clusters) {
        const std::string where = "cluster " + std::to_string(cluster.id);
        if (!seen_ids.insert(cluster.id).second) problems.push_back(where + ": duplicate cluster id");
        if (cluster.observations.empty()) {
            problems.push_back(where + ": empty cluster");
            continue;
        }
        summary.sizes.push_back(cluster.observations.size());
        summary.total += cluster.observations.size();
        summary.max_size = std::max<int>(summary.max_size, static_cast<int>(cluster.observations.size()));

        std::set<int> positions;
        for (const auto& obs : cluster.observations) {
            const std::string at = where + " margin " + std::to_string(obs.margin_position);
            if (obs.cluster_id != cluster.id) problems.push_back(at + ": observation carries cluster id " + std::to_string(obs.cluster_id));
            if (!positions.insert(obs.margin_position).second) problems.push_back(at + ": duplicate margin");
            if (obs.status != 0 && obs.status != 1) problems.push_back(at + ": status must be 0 or 1");
            if (!std::isfinite(obs.log_time)) problems.push_back(at + ": log time is not finite");
            if (obs.margin_class < 1) problems.push_back(at + ": margin class must be >= 1");
            for (double v : obs.covariates) {
                if (!std::isfinite(v)) {
                    problems.push_back(at + ": non-finite covariate");
                    break;
                }
            }
            classes.insert(obs.margin_class);
            auto [it, inserted] = class_covariate_length.emplace(obs.margin_class, obs.covariates.size());
            if (!inserted && it->second != obs.covariates.size())
                problems.push_back(at + ": unequal covariate lengths within margin class " + std::to_string(obs.margin_class));
            auto [pit, pinserted] = class_at_position.emplace(obs.margin_position, obs.margin_class);
            if (!pinserted && pit->second != obs.margin_class)
                problems.push_back(at + ": margin class differs from other clusters at this position");
        }
        const int k = static_cast<int>(cluster.observations.size());
        if (!positions.empty() && positions.size() == cluster.observations.size() &&
            (*positions.begin() != 1 || *positions.rbegin() != k))
            problems.push_back(where + ": margin positions must be 1.." + std::to_string(k));
    }

    summary.class_count = static_cast<int>(classes.size());
    if (!classes.empty() && (*classes.begin() != 1 || *classes.rbegin() != summary.class_count))
        problems.push_back("margin classes must form the contiguous set 1..kappa");

    summary.parallel = std::all_of(summary.sizes.begin(), summary.sizes.end(),
                                   [&](std::size_t s) { return s == summary.sizes.front(); });
    if (!summary.parallel && summary.class_count > 1)
        problems.push_back("variable sizes require single margin class");

    if (!problems.empty()) throw ValidationError(std::move(problems));
    return summary;
}

DesignSpec DesignSpec::shared(const std::vector<std::string>& covariate_names) {
    DesignSpec spec;
    for (std::size_t c = 0; c < covariate_names.size(); ++c) {
        spec.coefficient_names.push_back(covariate_names[c]);
        spec.entries.push_back({0, c, c});
    }
    return spec;
}

DesignSpec DesignSpec::margin_specific(int margins, const std::vector<std::string>& covariate_names) {
    DesignSpec spec;
    for (int k = 1; k <= margins; ++k) {
        for (std::size_t c = 0; c < covariate_names.size(); ++c) {
            spec.entries.push_back({k, c, spec.coefficient_names.size()});
            spec.coefficient_names.push_back(covariate_names[c] + "[" + std::to_string(k) + "]");
        }
    }
    return spec;
}

StackedDesign build_design(const SurvivalDataset& dataset, const DesignSpec& spec) {
    const DatasetSummary summary = validate(dataset);
    const std::size_t p = spec.coefficient_count();

    std::vector<std::string> problems;
    if (p == 0) problems.push_back("design has no coefficients");

    std::size_t max_covariates = 0;
    for (const auto& c : dataset.clusters)
        for (const auto& o : c.observations) max_covariates = std::max(max_covariates, o.covariates.size());

    std::vector<bool> used(p, false);
    std::set<std::pair<int, std::size_t>> pairs;
    for (const auto& e : spec.entries) {
        if (e.coefficient >= p) {
            problems.push_back("design entry refers to coefficient index " + std::to_string(e.coefficient + 1) +
                               " beyond " + std::to_string(p));
            continue;
        }
        used[e.coefficient] = true;
        if (e.margin_position < 0 || e.margin_position > summary.max_size)
            problems.push_back("coefficient " + spec.coefficient_names[e.coefficient] + ": margin " +
                               std::to_string(e.margin_position) + " does not exist");
        if (e.covariate >= max_covariates) {
            std::string name = e.covariate < dataset.covariate_names.size()
                                   ? dataset.covariate_names[e.covariate]
                                   : "#" + std::to_string(e.covariate + 1);
            problems.push_back("coefficient " + spec.coefficient_names[e.coefficient] +
                               ": missing covariate " + name);
        }
    }
    // A pair may be covered by at most one coefficient, counting "all" entries.
    for (const auto& e : spec.entries) {
        const int lo = e.margin_position == 0 ? 1 : e.margin_position;
        const int hi = e.margin_position == 0 ? summary.max_size : e.margin_position;
        for (int k = lo; k <= hi; ++k) {
            if (!pairs.insert({k, e.covariate}).second)
                problems.push_back("covariate #" + std::to_string(e.covariate + 1) + " at margin " +
                                   std::to_string(k) + " is assigned to more than one coefficient");
        }
    }
    for (std::size_t j = 0; j < p; ++j)
        if (!used[j]) problems.push_back("coefficient " + spec.coefficient_names[j] + " is not assigned");
    if (!problems.empty()) throw ValidationError(std::move(problems));

    StackedDesign d;
    const std::size_t total = summary.total;
    d.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(p));
    d.log_time.resize(static_cast<Eigen::Index>(total));
    d.status.reserve(total);
    d.position.reserve(total);
    d.margin_class.reserve(total);
    d.offsets.reserve(dataset.clusters.size() + 1);
    d.offsets.push_back(0);
    d.coefficient_names = spec.coefficient_names;
    d.intercept_mode = spec.intercept_mode;
    d.class_count = summary.class_count;
    d.max_size = summary.max_size;
    d.parallel = summary.parallel;

    std::size_t row = 0;
    for (const auto& cluster : dataset.clusters) {
        for (const auto& obs : cluster.observations) {
            for (const auto& e : spec.entries) {
                if (e.margin_position != 0 && e.margin_position != obs.margin_position) continue;
                if (e.covariate >= obs.covariates.size()) {
                    throw ValidationError({"cluster " + std::to_string(cluster.id) + " margin " +
                                           std::to_string(obs.margin_position) + ": missing covariate #" +
                                           std::to_string(e.covariate + 1)});
                }
                d.x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(e.coefficient)) =
                    obs.covariates[e.covariate];
            }
            d.log_time(static_cast<Eigen::Index>(row)) = obs.log_time;
            d.status.push_back(obs.status);
            d.position.push_back(obs.margin_position - 1);
            d.margin_class.push_back(obs.margin_class - 1);
            ++row;
        }
        d.offsets.push_back(row);
    }

    d.position_mean = Eigen::MatrixXd::Zero(summary.max_size, static_cast<Eigen::Index>(p));
    d.position_count.assign(static_cast<std::size_t>(summary.max_size), 0);
    for (std::size_t r = 0; r < total; ++r) {
        d.position_mean.row(d.position[r]) += d.x.row(static_cast<Eigen::Index>(r));
        ++d.position_count[static_cast<std::size_t>(d.position[r])];
    }
    for (int k = 0; k < summary.max_size; ++k)
        d.position_mean.row(k) /= static_cast<double>(d.position_count[static_cast<std::size_t>(k)]);
    d.centered_x = d.x;
    for (std::size_t r = 0; r < total; ++r)
        d.centered_x.row(static_cast<Eigen::Index>(r)) -= d.position_mean.row(d.position[r]);

    // Columns that do not vary within any position are annihilated by the
    // centering in the estimating equations.
    for (std::size_t j = 0; j < p; ++j) {
        bool varies = false;
        std::vector<double> first(static_cast<std::size_t>(summary.max_size), std::nan(""));
        for (std::size_t r = 0; r < total && !varies; ++r) {
            const double v = d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
            double& f = first[static_cast<std::size_t>(d.position[r])];
            if (std::isnan(f))
                f = v;
            else
                varies = v != f;
        }
        if (!varies)
            problems.push_back("coefficient " + spec.coefficient_names[j] +
                               " is constant within every margin position (intercept columns are not allowed; "
                               "intercepts are recovered after fitting)");
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
    return d;
}

}  // namespace mvaft
