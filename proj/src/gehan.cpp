#include "mvaft/gehan.hpp"

#include <cmath>
#include <numbers>

#include "mvaft/random.hpp"

namespace mvaft {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Row-major copy of the design plus per-class membership, shared by every
// pair loop below.
struct PairData {
    std::size_t p = 0;
    std::vector<double> rows;
    std::vector<std::vector<std::size_t>> members;
    std::vector<std::size_t> cluster_of;
};

PairData pair_data(const StackedDesign& design) {
    PairData d;
    d.p = design.coefficient_count();
    const std::size_t total = design.observation_count();
    d.rows.resize(total * d.p);
    for (std::size_t r = 0; r < total; ++r)
        for (std::size_t j = 0; j < d.p; ++j)
            d.rows[r * d.p + j] = design.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
    d.members.resize(static_cast<std::size_t>(design.class_count));
    for (std::size_t r = 0; r < total; ++r) d.members[static_cast<std::size_t>(design.margin_class[r])].push_back(r);
    d.cluster_of.resize(total);
    for (std::size_t i = 0; i < design.cluster_count(); ++i)
        for (std::size_t r = design.offsets[i]; r < design.offsets[i + 1]; ++r) d.cluster_of[r] = i;
    return d;
}

void check_design(const StackedDesign& design, const PairData& data) {
    for (const auto& members : data.members) {
        for (std::size_t a : members) {
            for (std::size_t j = 0; j < data.p; ++j)
                if (data.rows[a * data.p + j] != data.rows[members.front() * data.p + j]) return;
        }
    }
    (void)design;
    throw ValidationError({"design degenerate for rank estimation: all covariate rows are identical"});
}

enum class Want { objective, all };

// Visits every (event i, j) pair in a class with x = X_i - X_j, r and d.
template <typename Visit>
void for_each_pair(const StackedDesign& design, const PairData& data, const Eigen::VectorXd& resid,
                   const Eigen::MatrixXd& smoothing, Visit&& visit) {
    const std::size_t p = data.p;
    std::vector<double> x(p), sx(p);
    for (const auto& members : data.members) {
        for (std::size_t i : members) {
            if (design.status[i] != 1) continue;
            const double* xi = &data.rows[i * p];
            const double ei = resid(static_cast<Eigen::Index>(i));
            for (std::size_t j : members) {
                if (j == i) continue;
                const double* xj = &data.rows[j * p];
                for (std::size_t k = 0; k < p; ++k) x[k] = xi[k] - xj[k];
                double r2 = 0.0;
                for (std::size_t a = 0; a < p; ++a) {
                    double s = 0.0;
                    for (std::size_t b = 0; b < p; ++b) s += smoothing(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * x[b];
                    r2 += x[a] * s;
                }
                visit(i, j, x.data(), std::sqrt(std::max(r2, 0.0)), resid(static_cast<Eigen::Index>(j)) - ei);
            }
        }
    }
}

SmoothedScore evaluate(const StackedDesign& design, const PairData& data, const Eigen::VectorXd& beta,
                       const Eigen::MatrixXd& smoothing, Want want) {
    const std::size_t p = data.p;
    const Eigen::VectorXd resid = design.log_time - design.x * beta;
    double objective = 0.0;
    std::vector<double> score(p, 0.0), jac(p * p, 0.0);
    for_each_pair(design, data, resid, smoothing, [&](std::size_t, std::size_t, const double* x, double r, double d) {
        if (r > 0.0) {
            const double z = d / r;
            const double cdf = 0.5 * std::erfc(-z * kInvSqrt2);
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
            objective += d * cdf + r * pdf;
            if (want == Want::all) {
                const double w = pdf / r;
                for (std::size_t a = 0; a < p; ++a) {
                    score[a] += cdf * x[a];
                    for (std::size_t b = a; b < p; ++b) jac[a * p + b] += w * x[a] * x[b];
                }
            }
        } else {
            if (d > 0.0) objective += d;
            if (want == Want::all && d >= 0.0)
                for (std::size_t a = 0; a < p; ++a) score[a] += x[a];
        }
    });
    const double scale = 1.0 / static_cast<double>(design.cluster_count());
    SmoothedScore out;
    out.objective = objective * scale;
    if (want == Want::all) {
        out.score.resize(static_cast<Eigen::Index>(p));
        out.jacobian.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
        for (std::size_t a = 0; a < p; ++a) {
            out.score(static_cast<Eigen::Index>(a)) = score[a] * scale;
            for (std::size_t b = a; b < p; ++b) {
                const double v = jac[a * p + b] * scale;
                out.jacobian(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
                out.jacobian(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
            }
        }
    }
    return out;
}

}  // namespace

Eigen::MatrixXd default_smoothing(const StackedDesign& design) {
    const auto p = static_cast<Eigen::Index>(design.coefficient_count());
    return Eigen::MatrixXd::Identity(p, p) / static_cast<double>(design.observation_count());
}

SmoothedScore smoothed_gehan_score(const StackedDesign& design, const Eigen::VectorXd& beta,
                                   const Eigen::MatrixXd& smoothing) {
    return evaluate(design, pair_data(design), beta, smoothing, Want::all);
}

double smoothed_gehan_objective(const StackedDesign& design, const Eigen::VectorXd& beta,
                                const Eigen::MatrixXd& smoothing) {
    return evaluate(design, pair_data(design), beta, smoothing, Want::objective).objective;
}

InitialEstimate solve_initial(const StackedDesign& design, const GehanConfig& config) {
    const PairData data = pair_data(design);
    check_design(design, data);
    const auto p = static_cast<Eigen::Index>(data.p);

    InitialEstimate out;
    out.smoothing = default_smoothing(design);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    out.trace.push_back(beta);

    for (int iter = 0;; ++iter) {
        const SmoothedScore s = evaluate(design, data, beta, out.smoothing, Want::all);
        if (s.score.lpNorm<Eigen::Infinity>() < config.tol) {
            out.beta = beta;
            out.jacobian = s.jacobian;
            out.iterations = iter;
            return out;
        }
        if (iter >= config.max_iter)
            throw GehanNonConvergence("smoothed Gehan solver did not converge in " + std::to_string(config.max_iter) +
                                          " iterations",
                                      beta);

        Eigen::LDLT<Eigen::MatrixXd> ldlt(s.jacobian);
        Eigen::VectorXd step;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0) {
            step = -ldlt.solve(s.score);
        } else {
            Eigen::MatrixXd ridged = s.jacobian;
            ridged.diagonal().array() += 1e-8 * (1.0 + s.jacobian.diagonal().cwiseAbs().maxCoeff());
            step = -ridged.ldlt().solve(s.score);
        }
        const double decrement = -s.score.dot(step);
        out.newton_decrements.push_back(decrement);

        // Once the predicted decrease is below the resolution of the
        // objective, take full steps and let the score decide convergence.
        const double resolution = 1e-13 * (1.0 + std::abs(s.objective));
        double t = 1.0;
        if (decrement > resolution) {
            for (;;) {
                const double trial = evaluate(design, data, beta + t * step, out.smoothing, Want::objective).objective;
                if (trial <= s.objective - 1e-4 * t * decrement) break;
                t *= 0.5;
                if (t < 1e-12)
                    throw GehanNonConvergence("smoothed Gehan line search failed", beta);
            }
        }
        beta += t * step;
        if (!beta.allFinite()) throw GehanNonConvergence("smoothed Gehan iterate is not finite", beta);
        out.trace.push_back(beta);
    }
}

Eigen::MatrixXd gehan_multiplier_covariance(const StackedDesign& design, const InitialEstimate& estimate,
                                            int replicates, std::uint64_t seed) {
    if (replicates < 2) throw ValidationError({"B ≥ 2 required"});
    const PairData data = pair_data(design);
    const std::size_t p = data.p, n = design.cluster_count();
    const Eigen::VectorXd resid = design.log_time - design.x * estimate.beta;

    // Per cluster-pair contributions to the score.
    std::vector<double> block(n * n * p, 0.0);
    for_each_pair(design, data, resid, estimate.smoothing,
                  [&](std::size_t i, std::size_t j, const double* x, double r, double d) {
                      double w;
                      if (r > 0.0)
                          w = 0.5 * std::erfc(-(d / r) * kInvSqrt2);
                      else
                          w = d >= 0.0 ? 1.0 : 0.0;
                      double* h = &block[(data.cluster_of[i] * n + data.cluster_of[j]) * p];
                      for (std::size_t a = 0; a < p; ++a) h[a] += w * x[a];
                  });

    Rng rng = make_stream(seed, 0);
    std::exponential_distribution<double> exp1(1.0);
    Eigen::MatrixXd draws(replicates, static_cast<Eigen::Index>(p));
    std::vector<double> z(n), inner(p);
    for (int b = 0; b < replicates; ++b) {
        for (auto& v : z) v = exp1(rng);
        std::vector<double> u(p, 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            std::fill(inner.begin(), inner.end(), 0.0);
            for (std::size_t c2 = 0; c2 < n; ++c2) {
                const double* h = &block[(c * n + c2) * p];
                for (std::size_t a = 0; a < p; ++a) inner[a] += z[c2] * h[a];
            }
            for (std::size_t a = 0; a < p; ++a) u[a] += z[c] * inner[a];
        }
        for (std::size_t a = 0; a < p; ++a) draws(b, static_cast<Eigen::Index>(a)) = u[a] / static_cast<double>(n);
    }
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Eigen::MatrixXd centered = draws.rowwise() - mean;
    const Eigen::MatrixXd score_cov = centered.transpose() * centered / static_cast<double>(replicates - 1);
    const Eigen::MatrixXd a_inv = estimate.jacobian.ldlt().solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)));
    Eigen::MatrixXd cov = a_inv * score_cov * a_inv;
    return 0.5 * (cov + cov.transpose());
}

}  // namespace mvaft
