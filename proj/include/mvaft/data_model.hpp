#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "mvaft/error.hpp"

namespace mvaft {

// One margin of one cluster. Positions and classes are 1-based as they
// appear in input files.
struct Observation {
    int cluster_id = 0;
    int margin_position = 1;
    int margin_class = 1;
    double log_time = 0.0;
    int status = 1;  // 1 = event, 0 = censored
    std::vector<double> covariates;
};

struct Cluster {
    int id = 0;
    std::vector<Observation> observations;  // ordered by margin_position
};

struct SurvivalDataset {
    std::vector<Cluster> clusters;
    std::vector<std::string> covariate_names;

    // Groups rows by cluster id (first-appearance order) and sorts each
    // cluster by margin position. Duplicates are kept so validate() can
    // report them.
    static SurvivalDataset from_rows(std::vector<Observation> rows,
                                     std::vector<std::string> covariate_names = {});

    std::size_t cluster_count() const noexcept { return clusters.size(); }
    std::size_t observation_count() const noexcept;
};

// Shape facts established by validate().
struct DatasetSummary {
    std::size_t n = 0;
    std::size_t total = 0;
    std::vector<std::size_t> sizes;
    int max_size = 0;
    int class_count = 0;  // kappa
    bool parallel = true;
};

// Checks every structural rule and throws ValidationError listing all
// violations at once.
DatasetSummary validate(const SurvivalDataset& dataset);

enum class InterceptMode { none, recovered };

// Maps (margin position, covariate) pairs to coefficient columns.
// margin_position 0 means "every position".
struct DesignSpec {
    struct Entry {
        int margin_position = 0;
        std::size_t covariate = 0;
        std::size_t coefficient = 0;
    };

    std::vector<std::string> coefficient_names;
    std::vector<Entry> entries;
    InterceptMode intercept_mode = InterceptMode::recovered;

    std::size_t coefficient_count() const noexcept { return coefficient_names.size(); }

    // One coefficient per covariate, common to all margins.
    static DesignSpec shared(const std::vector<std::string>& covariate_names);
    // One coefficient per (margin, covariate): block-diagonal stacked design.
    static DesignSpec margin_specific(int margins, const std::vector<std::string>& covariate_names);
};

// Flattened, immutable view of a dataset under a design. Rows are stored
// cluster by cluster; offsets[i]..offsets[i+1] index cluster i.
struct StackedDesign {
    Eigen::MatrixXd x;               // N x p
    Eigen::VectorXd log_time;        // N
    std::vector<int> status;         // N
    std::vector<int> position;       // N, 0-based
    std::vector<int> margin_class;   // N, 0-based
    std::vector<std::size_t> offsets;
    // Grand mean of the X_i, aligned by margin position (row k averages
    // the clusters that contain position k).
    Eigen::MatrixXd position_mean;   // K_max x p
    Eigen::MatrixXd centered_x;      // N x p, rows of X_i - X-bar
    std::vector<std::size_t> position_count;
    std::vector<std::string> coefficient_names;
    InterceptMode intercept_mode = InterceptMode::recovered;
    int class_count = 1;
    int max_size = 0;
    bool parallel = true;

    std::size_t cluster_count() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t observation_count() const noexcept { return status.size(); }
    std::size_t coefficient_count() const noexcept { return static_cast<std::size_t>(x.cols()); }
    std::size_t cluster_begin(std::size_t i) const { return offsets[i]; }
    std::size_t cluster_size(std::size_t i) const { return offsets[i + 1] - offsets[i]; }

    auto cluster_rows(std::size_t i) const {
        return x.middleRows(static_cast<Eigen::Index>(offsets[i]),
                            static_cast<Eigen::Index>(cluster_size(i)));
    }
    // X_i - X-bar restricted to the positions present in cluster i.
    auto centered_cluster(std::size_t i) const {
        return centered_x.middleRows(static_cast<Eigen::Index>(offsets[i]),
                                     static_cast<Eigen::Index>(cluster_size(i)));
    }
};

// Assembles X_i per the spec; rejects missing covariates and columns that
// are constant within every margin position (they vanish under centering).
StackedDesign build_design(const SurvivalDataset& dataset, const DesignSpec& spec);

}  // namespace mvaft
