#include "mvaft/working_cov.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace mvaft {

namespace {

constexpr double kAlphaMargin = 1e-6;

Eigen::MatrixXd exchangeable_inverse(double alpha, int k) {
    const double a = alpha / (1.0 + (k - 1) * alpha);
    Eigen::MatrixXd r = Eigen::MatrixXd::Constant(k, k, -a);
    r.diagonal().array() += 1.0;
    return r / (1.0 - alpha);
}

Eigen::MatrixXd ar1_inverse(double rho, int k) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k, k);
    if (k == 1) {
        r(0, 0) = 1.0;
        return r;
    }
    const double scale = 1.0 / (1.0 - rho * rho);
    for (int i = 0; i < k; ++i) {
        r(i, i) = (i == 0 || i == k - 1) ? scale : (1.0 + rho * rho) * scale;
        if (i + 1 < k) r(i, i + 1) = r(i + 1, i) = -rho * scale;
    }
    return r;
}

Eigen::MatrixXd correlation(Structure s, double alpha, int k) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            if (i != j) r(i, j) = s == Structure::exchangeable ? alpha : std::pow(alpha, std::abs(i - j));
    return r;
}

Eigen::MatrixXd general_inverse(const Eigen::MatrixXd& m) {
    const auto k = m.rows();
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(k, k);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt.solve(identity);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (lu.isInvertible()) return lu.inverse();
    const double ridge = 1e-8 * m.trace() / static_cast<double>(k);
    Eigen::MatrixXd shifted = m;
    shifted.diagonal().array() += ridge;
    Eigen::FullPivLU<Eigen::MatrixXd> lu_ridge(shifted);
    if (!lu_ridge.isInvertible()) throw NumericalError("unstructured working covariance is singular");
    return lu_ridge.inverse();
}

}  // namespace

std::string to_string(Structure s) {
    switch (s) {
        case Structure::independence: return "IND";
        case Structure::exchangeable: return "EX";
        case Structure::ar1: return "AR1";
        case Structure::unstructured: return "UN";
    }
    return "?";
}

Structure parse_structure(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "ind") return Structure::independence;
    if (lower == "ex") return Structure::exchangeable;
    if (lower == "ar1") return Structure::ar1;
    if (lower == "un") return Structure::unstructured;
    throw ValidationError({"unknown working structure '" + name + "' (expected ind, ex, ar1 or un)"});
}

Eigen::MatrixXd fill_covariance(const StackedDesign& design, const ImputationSet& imputation) {
    const std::size_t n = design.cluster_count();
    if (n == 0) throw Error("working covariance needs at least one cluster");
    const int k_max = design.max_size;

    const auto classes = static_cast<std::size_t>(design.class_count);
    std::vector<double> class_sum(classes, 0.0), class_count(classes, 0.0);
    std::vector<int> class_of_position(static_cast<std::size_t>(k_max), 0);
    for (std::size_t r = 0; r < design.observation_count(); ++r) {
        const auto c = static_cast<std::size_t>(design.margin_class[r]);
        class_sum[c] += imputation.second_moments(static_cast<Eigen::Index>(r));
        class_count[c] += 1.0;
        class_of_position[static_cast<std::size_t>(design.position[r])] = design.margin_class[r];
    }

    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k_max, k_max);
    Eigen::MatrixXd count = Eigen::MatrixXd::Zero(k_max, k_max);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t begin = design.cluster_begin(i), size = design.cluster_size(i);
        for (std::size_t a = 0; a < size; ++a) {
            for (std::size_t b = a + 1; b < size; ++b) {
                const int k = design.position[begin + a], l = design.position[begin + b];
                const double prod = imputation.residual_expectations(static_cast<Eigen::Index>(begin + a)) *
                                    imputation.residual_expectations(static_cast<Eigen::Index>(begin + b));
                sum(k, l) += prod;
                count(k, l) += 1.0;
            }
        }
    }

    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(k_max, k_max);
    for (int k = 0; k < k_max; ++k) {
        const auto c = static_cast<std::size_t>(class_of_position[static_cast<std::size_t>(k)]);
        omega(k, k) = class_sum[c] / class_count[c];
        if (!(omega(k, k) > 0.0)) throw NumericalError("working variance is not positive at margin " + std::to_string(k + 1));
        for (int l = k + 1; l < k_max; ++l) {
            const double s = sum(k, l) + sum(l, k);
            const double m = count(k, l) + count(l, k);
            omega(k, l) = omega(l, k) = m > 0.0 ? s / m : 0.0;
        }
    }
    return omega;
}

std::pair<double, double> alpha_range(Structure structure, int max_size) {
    if (structure == Structure::exchangeable)
        return {-1.0 / (max_size - 1) + kAlphaMargin, 1.0 - kAlphaMargin};
    return {-1.0 + kAlphaMargin, 1.0 - kAlphaMargin};
}

double estimate_alpha(const Eigen::MatrixXd& omega_hat, Structure structure) {
    if (structure != Structure::exchangeable && structure != Structure::ar1)
        throw Error("alpha is only defined for EX and AR1 structures");
    const auto k = static_cast<int>(omega_hat.rows());
    if (k < 2) throw ValidationError({"structure requires K ≥ 2"});
    double total = 0.0;
    int pairs = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            if (structure == Structure::ar1 && j - i != 1) continue;
            total += omega_hat(i, j) / std::sqrt(omega_hat(i, i) * omega_hat(j, j));
            ++pairs;
        }
    }
    const auto [lo, hi] = alpha_range(structure, k);
    return std::clamp(total / pairs, lo, hi);
}

WeightPair assemble_weight(Structure structure, std::optional<double> alpha, const Eigen::MatrixXd& omega_hat,
                           int size) {
    if (size < 1 || size > omega_hat.rows()) throw Error("cluster size outside the working covariance");
    WeightPair out;
    if (structure == Structure::unstructured) {
        if (size != omega_hat.rows()) throw ValidationError({"UN working structure requires equal cluster sizes"});
        out.omega = omega_hat;
        out.inverse = general_inverse(omega_hat);
        return out;
    }

    const Eigen::VectorXd sd = omega_hat.diagonal().head(size).cwiseSqrt();
    const Eigen::VectorXd inv_sd = sd.cwiseInverse();
    Eigen::MatrixXd r_inverse;
    Eigen::MatrixXd r;
    switch (structure) {
        case Structure::independence:
            r = Eigen::MatrixXd::Identity(size, size);
            r_inverse = r;
            break;
        case Structure::exchangeable:
        case Structure::ar1: {
            if (!alpha) throw Error(to_string(structure) + " structure needs alpha");
            if (size > 1) {
                const auto [lo, hi] = alpha_range(structure, static_cast<int>(omega_hat.rows()));
                if (*alpha < lo || *alpha > hi) throw Error("alpha outside the positive definite range");
            }
            r = correlation(structure, *alpha, size);
            r_inverse = structure == Structure::exchangeable ? exchangeable_inverse(*alpha, size)
                                                              : ar1_inverse(*alpha, size);
            break;
        }
        case Structure::unstructured:
            break;
    }
    out.omega = sd.asDiagonal() * r * sd.asDiagonal();
    out.inverse = inv_sd.asDiagonal() * r_inverse * inv_sd.asDiagonal();
    return out;
}

WorkingCovariance build_working_covariance(const StackedDesign& design, Structure structure,
                                           const Eigen::MatrixXd& omega_hat, std::optional<double> alpha) {
    WorkingCovariance w;
    w.structure = structure;
    w.alpha = alpha;
    w.omega_hat = omega_hat;
    w.by_size.resize(static_cast<std::size_t>(design.max_size) + 1);
    std::vector<bool> present(w.by_size.size(), false);
    for (std::size_t i = 0; i < design.cluster_count(); ++i) present[design.cluster_size(i)] = true;
    for (std::size_t s = 1; s < present.size(); ++s)
        if (present[s]) w.by_size[s] = assemble_weight(structure, alpha, omega_hat, static_cast<int>(s));
    return w;
}

WorkingCovariance build_working_covariance(const StackedDesign& design, Structure structure,
                                           const Eigen::MatrixXd& omega_hat) {
    std::optional<double> alpha;
    if (structure == Structure::exchangeable || structure == Structure::ar1)
        alpha = estimate_alpha(omega_hat, structure);
    return build_working_covariance(design, structure, omega_hat, alpha);
}

}  // namespace mvaft
