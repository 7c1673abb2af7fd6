#include "mvaft/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "mvaft/gee.hpp"
#include "mvaft/gehan.hpp"
#include "mvaft/parallel.hpp"
#include "mvaft/resampling.hpp"

namespace mvaft {

std::string to_string(MarginLaw law) {
    switch (law) {
        case MarginLaw::normal: return "N";
        case MarginLaw::logistic: return "L";
        case MarginLaw::gumbel: return "G";
    }
    return "?";
}

MarginLaw parse_margin_law(const std::string& name) {
    std::string s;
    for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (s == "n" || s == "normal") return MarginLaw::normal;
    if (s == "l" || s == "logistic") return MarginLaw::logistic;
    if (s == "g" || s == "gumbel") return MarginLaw::gumbel;
    throw ValidationError({"unknown margin law '" + name + "'"});
}

double clayton_theta(double tau) {
    if (!(tau >= 0.0 && tau < 1.0)) throw ValidationError({"Kendall tau must lie in [0, 1)"});
    return 2.0 * tau / (1.0 - tau);
}

Eigen::MatrixXd sample_clayton(double theta, int margins, std::size_t n, Rng& rng) {
    if (theta < 0.0) throw ValidationError({"Clayton theta must be nonnegative"});
    constexpr double lo = 1e-300;
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
    Eigen::MatrixXd u(static_cast<Eigen::Index>(n), margins);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::exponential_distribution<double> exp1(1.0);
    if (theta == 0.0) {
        for (Eigen::Index i = 0; i < u.rows(); ++i)
            for (int k = 0; k < margins; ++k) u(i, k) = std::clamp(unif(rng), lo, hi);
        return u;
    }
    std::gamma_distribution<double> frailty(1.0 / theta, 1.0);
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const double v = frailty(rng);
        for (int k = 0; k < margins; ++k) {
            const double e = exp1(rng);
            u(i, k) = std::clamp(std::exp(-std::log1p(e / v) / theta), lo, hi);
        }
    }
    return u;
}

double margin_quantile(double u, MarginLaw law) {
    if (!(u > 0.0 && u < 1.0)) throw ValidationError({"quantile argument must lie in (0, 1)"});
    switch (law) {
        case MarginLaw::normal: return boost::math::quantile(boost::math::normal(), u);
        case MarginLaw::logistic: return std::log(u / (1.0 - u));
        case MarginLaw::gumbel: return -std::log(-std::log(u));
    }
    return 0.0;
}

Eigen::MatrixXd margin_transform(const Eigen::MatrixXd& uniforms, const std::vector<MarginLaw>& laws) {
    if (static_cast<Eigen::Index>(laws.size()) != uniforms.cols())
        throw ValidationError({"one margin law per column is required"});
    Eigen::MatrixXd out(uniforms.rows(), uniforms.cols());
    for (Eigen::Index k = 0; k < uniforms.cols(); ++k)
        for (Eigen::Index i = 0; i < uniforms.rows(); ++i)
            out(i, k) = margin_quantile(uniforms(i, k), laws[static_cast<std::size_t>(k)]);
    return out;
}

namespace {

std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buffer, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t count = merge_count(v, buffer, lo, mid) + merge_count(v, buffer, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            count += mid - i;
            buffer[k++] = v[j++];
        } else {
            buffer[k++] = v[i++];
        }
    }
    while (i < mid) buffer[k++] = v[i++];
    while (j < hi) buffer[k++] = v[j++];
    std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(lo), buffer.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return count;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw ValidationError({"Kendall tau needs two equal samples of size >= 2"});
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ys(n), buffer(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
    const double discordant = static_cast<double>(merge_count(ys, buffer, 0, n));
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    return 1.0 - 2.0 * discordant / pairs;
}

void check(const Scenario& s) {
    std::vector<std::string> problems;
    const auto k = static_cast<std::size_t>(std::max(s.margins, 0));
    if (s.clusters < 2) problems.push_back("clusters must be at least 2");
    if (s.margins < 1) problems.push_back("margins must be at least 1");
    if (s.laws.size() != k) problems.push_back("laws must list one law per margin");
    if (s.intercepts.size() != k) problems.push_back("intercepts must list one value per margin");
    if (s.beta1.size() != k || s.beta2.size() != k) problems.push_back("beta1/beta2 must list one value per margin");
    if (!(s.tau >= 0.0 && s.tau < 1.0)) problems.push_back("tau must lie in [0, 1)");
    if (!(s.censoring >= 0.0 && s.censoring < 1.0)) problems.push_back("censoring must lie in [0, 1)");
    if (s.shared_coefficients && s.beta1.size() == k && s.beta2.size() == k) {
        for (std::size_t m = 1; m < k; ++m)
            if (s.beta1[m] != s.beta1[0] || s.beta2[m] != s.beta2[0])
                problems.push_back("shared coefficients require equal slopes on every margin");
    }
    if (s.identical_margins && s.laws.size() == k) {
        for (std::size_t m = 1; m < k; ++m)
            if (s.laws[m] != s.laws[0]) {
                problems.push_back("identical margins require one margin law");
                break;
            }
    }
    if (s.replicates < 2) problems.push_back("replicates must be at least 2");
    if (s.bootstrap < 2) problems.push_back("bootstrap must be at least 2");
    if (s.threads < 1) problems.push_back("threads must be at least 1");
    if (s.calibration_draws < 1000) problems.push_back("calibration_draws must be at least 1000");
    for (Structure st : s.structures) {
        if ((st == Structure::exchangeable || st == Structure::ar1) && s.margins < 2)
            problems.push_back("structure requires K ≥ 2");
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
}

namespace {

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
    }
    return out;
}

double to_double(const std::string& key, const std::string& v, std::vector<std::string>& problems) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
        problems.push_back(key + ": '" + v + "' is not a number");
        return 0.0;
    }
    return d;
}

}  // namespace

Scenario parse_scenario(std::istream& in) {
    std::map<std::string, std::string> values;
    std::vector<std::string> problems;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(line_no) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto f = s.find_first_not_of(" \t\r");
            const auto l = s.find_last_not_of(" \t\r");
            return f == std::string::npos ? std::string() : s.substr(f, l - f + 1);
        };
        values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    static const std::vector<std::string> known = {
        "name", "clusters", "margins", "laws", "tau", "censoring", "intercepts", "beta1", "beta2", "coefficients",
        "classes", "structures", "replicates", "bootstrap", "seed", "threads", "calibration_draws"};
    for (const auto& [key, value] : values)
        if (std::find(known.begin(), known.end(), key) == known.end()) problems.push_back("unknown key '" + key + "'");

    Scenario s;
    auto get = [&](const std::string& key) -> const std::string* {
        const auto it = values.find(key);
        return it == values.end() ? nullptr : &it->second;
    };
    if (auto v = get("name")) s.name = *v;
    if (auto v = get("margins")) s.margins = static_cast<int>(to_double("margins", *v, problems));
    const auto k = static_cast<std::size_t>(std::max(s.margins, 1));
    auto per_margin = [&](const std::string& key, std::vector<double>& target) {
        if (auto v = get(key)) {
            const auto items = split_list(*v);
            target.clear();
            for (const auto& item : items) target.push_back(to_double(key, item, problems));
            if (target.size() == 1) target.assign(k, target.front());
        } else if (target.size() != k && !target.empty()) {
            target.assign(k, target.front());
        }
    };
    if (auto v = get("clusters")) s.clusters = static_cast<std::size_t>(to_double("clusters", *v, problems));
    if (auto v = get("laws")) {
        s.laws.clear();
        try {
            for (const auto& item : split_list(*v)) s.laws.push_back(parse_margin_law(item));
        } catch (const ValidationError& e) {
            problems.insert(problems.end(), e.problems().begin(), e.problems().end());
        }
        if (s.laws.size() == 1) s.laws.assign(k, s.laws.front());
    } else {
        s.laws.assign(k, s.laws.front());
    }
    if (auto v = get("tau")) s.tau = to_double("tau", *v, problems);
    if (auto v = get("censoring")) s.censoring = to_double("censoring", *v, problems);
    per_margin("intercepts", s.intercepts);
    per_margin("beta1", s.beta1);
    per_margin("beta2", s.beta2);
    if (auto v = get("coefficients")) {
        if (*v == "shared") s.shared_coefficients = true;
        else if (*v == "margin") s.shared_coefficients = false;
        else problems.push_back("coefficients must be 'shared' or 'margin'");
    }
    if (auto v = get("classes")) {
        if (*v == "identical") s.identical_margins = true;
        else if (*v == "distinct") s.identical_margins = false;
        else problems.push_back("classes must be 'identical' or 'distinct'");
    }
    if (auto v = get("structures")) {
        s.structures.clear();
        try {
            for (const auto& item : split_list(*v)) s.structures.push_back(parse_structure(item));
        } catch (const ValidationError& e) {
            problems.insert(problems.end(), e.problems().begin(), e.problems().end());
        }
    }
    if (auto v = get("replicates")) s.replicates = static_cast<int>(to_double("replicates", *v, problems));
    if (auto v = get("bootstrap")) s.bootstrap = static_cast<int>(to_double("bootstrap", *v, problems));
    if (auto v = get("seed")) s.seed = static_cast<std::uint64_t>(to_double("seed", *v, problems));
    if (auto v = get("threads")) s.threads = static_cast<int>(to_double("threads", *v, problems));
    if (auto v = get("calibration_draws"))
        s.calibration_draws = static_cast<int>(to_double("calibration_draws", *v, problems));
    if (!problems.empty()) throw ValidationError(std::move(problems));
    check(s);
    return s;
}

Scenario read_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError({"cannot open scenario file " + path});
    return parse_scenario(in);
}

namespace {

struct Covariates {
    double x1;
    double x2;
};

Covariates draw_covariates(Rng& rng) {
    std::bernoulli_distribution bern(0.5);
    std::normal_distribution<double> norm(0.0, 0.5);
    const double x1 = bern(rng) ? 1.0 : 0.0;
    return {x1, norm(rng)};
}

double linear_predictor(const Scenario& s, int k, const Covariates& x) {
    const auto m = static_cast<std::size_t>(k);
    return s.intercepts[m] + s.beta1[m] * x.x1 + s.beta2[m] * x.x2;
}

}  // namespace

double calibrate_censoring(const Scenario& scenario, int margin, double target, Rng& rng) {
    if (!(target >= 0.0 && target < 1.0)) throw ValidationError({"censoring target must lie in [0, 1)"});
    if (target == 0.0) return std::numeric_limits<double>::infinity();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> t(static_cast<std::size_t>(scenario.calibration_draws));
    for (auto& v : t) {
        const Covariates x = draw_covariates(rng);
        double u = unif(rng);
        while (!(u > 0.0)) u = unif(rng);
        const double eps = margin_quantile(u, scenario.laws[static_cast<std::size_t>(margin)]);
        v = std::exp(linear_predictor(scenario, margin, x) + eps);
    }
    // With C ~ U(0, c), P(C < T | T) = min(T, c) / c, which is decreasing in c.
    auto rate = [&](double c) {
        double sum = 0.0;
        for (double v : t) sum += std::min(v, c);
        return sum / (static_cast<double>(t.size()) * c);
    };
    double hi = *std::max_element(t.begin(), t.end());
    double lo = *std::min_element(t.begin(), t.end());
    for (int i = 0; i < 200 && rate(hi) > target; ++i) hi *= 2.0;
    for (int i = 0; i < 200 && rate(lo) < target; ++i) lo *= 0.5;
    if (rate(hi) > target || rate(lo) < target) throw NumericalError("censoring calibration failed to bracket the target");
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double r = rate(mid);
        if (std::abs(r - target) < 1e-6) return mid;
        (r > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> calibrate_all(const Scenario& scenario) {
    std::vector<double> bounds;
    for (int k = 0; k < scenario.margins; ++k) {
        Rng rng = make_stream(derive_seed(scenario.seed, 0xCA1), static_cast<std::uint64_t>(k));
        bounds.push_back(calibrate_censoring(scenario, k, scenario.censoring, rng));
    }
    return bounds;
}

SurvivalDataset generate_dataset(const Scenario& scenario, const std::vector<double>& censor_bounds, Rng& rng) {
    const Eigen::MatrixXd u = sample_clayton(clayton_theta(scenario.tau), scenario.margins, scenario.clusters, rng);
    const Eigen::MatrixXd eps = margin_transform(u, scenario.laws);
    std::vector<Observation> rows;
    rows.reserve(scenario.clusters * static_cast<std::size_t>(scenario.margins));
    for (std::size_t i = 0; i < scenario.clusters; ++i) {
        for (int k = 0; k < scenario.margins; ++k) {
            const Covariates x = draw_covariates(rng);
            const double log_t = linear_predictor(scenario, k, x) + eps(static_cast<Eigen::Index>(i), k);
            Observation obs;
            obs.cluster_id = static_cast<int>(i + 1);
            obs.margin_position = k + 1;
            obs.margin_class = scenario.identical_margins ? 1 : k + 1;
            obs.covariates = {x.x1, x.x2};
            obs.status = 1;
            obs.log_time = log_t;
            const double c = censor_bounds[static_cast<std::size_t>(k)];
            if (std::isfinite(c)) {
                std::uniform_real_distribution<double> unif(0.0, c);
                const double cens = unif(rng);
                if (cens < std::exp(log_t)) {
                    obs.status = 0;
                    obs.log_time = std::log(cens);
                }
            }
            rows.push_back(std::move(obs));
        }
    }
    return SurvivalDataset::from_rows(std::move(rows), {"x1", "x2"});
}

DesignSpec scenario_design(const Scenario& scenario) {
    const std::vector<std::string> names{"x1", "x2"};
    return scenario.shared_coefficients ? DesignSpec::shared(names) : DesignSpec::margin_specific(scenario.margins, names);
}

Eigen::VectorXd true_coefficients(const Scenario& scenario) {
    if (scenario.shared_coefficients) return Eigen::Vector2d(scenario.beta1[0], scenario.beta2[0]);
    Eigen::VectorXd b(2 * scenario.margins);
    for (int k = 0; k < scenario.margins; ++k) {
        b(2 * k) = scenario.beta1[static_cast<std::size_t>(k)];
        b(2 * k + 1) = scenario.beta2[static_cast<std::size_t>(k)];
    }
    return b;
}

const EstimatorSummary& StudyReport::estimator(const std::string& label) const {
    for (const auto& e : estimators)
        if (e.label == label) return e;
    throw Error("report has no estimator " + label);
}

namespace {

struct ReplicateResult {
    std::vector<Eigen::VectorXd> estimates;  // JS first, then structures
    std::vector<Eigen::VectorXd> standard_errors;
    int nonconverged = 0;
    double censoring = 0.0;
};

}  // namespace

StudyReport run_study(const Scenario& scenario) {
    check(scenario);
    StudyReport report;
    report.scenario = scenario.name;
    report.replicates_requested = scenario.replicates;
    report.censor_bounds = calibrate_all(scenario);
    const DesignSpec spec = scenario_design(scenario);
    report.coefficient_names = spec.coefficient_names;
    const Eigen::VectorXd truth = true_coefficients(scenario);

    const auto reps = static_cast<std::size_t>(scenario.replicates);
    std::vector<std::optional<ReplicateResult>> results(reps);
    std::vector<std::string> failures(reps);
    parallel_for(reps, scenario.threads, [&](std::size_t r) {
        try {
            Rng rng = make_stream(scenario.seed, r + 1);
            const SurvivalDataset data = generate_dataset(scenario, report.censor_bounds, rng);
            const StackedDesign design = build_design(data, spec);
            ReplicateResult out;
            out.censoring = 1.0 - static_cast<double>(std::count(design.status.begin(), design.status.end(), 1)) /
                                      static_cast<double>(design.observation_count());

            const InitialEstimate initial = solve_initial(design);
            out.estimates.push_back(initial.beta);
            const Eigen::MatrixXd js_cov = gehan_multiplier_covariance(
                design, initial, scenario.bootstrap, derive_seed(scenario.seed, 1000000 + r));
            out.standard_errors.push_back(js_cov.diagonal().cwiseMax(0.0).cwiseSqrt());

            for (std::size_t s = 0; s < scenario.structures.size(); ++s) {
                FitConfig config;
                config.structure = scenario.structures[s];
                config.bootstrap = scenario.bootstrap;
                config.seed = derive_seed(scenario.seed, (r + 1) * 16 + s);
                const FitResult fit = fit_from(design, config, initial.beta);
                if (!fit.converged) ++out.nonconverged;
                const BootstrapSummary boot = bootstrap_covariance(design, config, initial.beta);
                out.estimates.push_back(fit.beta);
                out.standard_errors.push_back(boot.covariance.diagonal().cwiseMax(0.0).cwiseSqrt());
            }
            results[r] = std::move(out);
        } catch (const std::exception& e) {
            failures[r] = "replicate " + std::to_string(r + 1) + ": " + e.what();
        }
    });

    std::vector<std::string> labels{"JS"};
    for (Structure s : scenario.structures) labels.push_back(to_string(s));
    std::vector<const ReplicateResult*> used;
    for (std::size_t r = 0; r < reps; ++r) {
        if (results[r])
            used.push_back(&*results[r]);
        else
            report.failures.push_back(failures[r]);
    }
    report.replicates_used = static_cast<int>(used.size());
    if (used.size() < 2) throw NumericalError("fewer than two simulation replicates succeeded");

    const auto p = truth.size();
    const double count = static_cast<double>(used.size());
    for (const auto* u : used) {
        report.nonconverged_fits += u->nonconverged;
        report.mean_censoring += u->censoring / count;
    }
    for (std::size_t e = 0; e < labels.size(); ++e) {
        EstimatorSummary summary;
        summary.label = labels[e];
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(p), se_mean = Eigen::VectorXd::Zero(p);
        for (const auto* u : used) {
            mean += u->estimates[e] / count;
            se_mean += u->standard_errors[e] / count;
        }
        Eigen::VectorXd var = Eigen::VectorXd::Zero(p);
        for (const auto* u : used) var += (u->estimates[e] - mean).cwiseAbs2() / (count - 1.0);
        summary.bias = mean - truth;
        summary.empirical_se = var.cwiseSqrt();
        summary.estimated_se = se_mean;
        report.estimators.push_back(std::move(summary));
    }
    const Eigen::VectorXd js_se = report.estimators.front().empirical_se;
    for (auto& e : report.estimators)
        e.relative_efficiency = (js_se.array() / e.empirical_se.array()).square().matrix();
    return report;
}

void write_report_csv(std::ostream& out, const StudyReport& report) {
    out << "estimator,coefficient,bias,empirical_se,estimated_se,re\n";
    out << std::setprecision(10);
    for (const auto& e : report.estimators) {
        for (std::size_t j = 0; j < report.coefficient_names.size(); ++j) {
            const auto k = static_cast<Eigen::Index>(j);
            out << e.label << ',' << report.coefficient_names[j] << ',' << e.bias(k) << ',' << e.empirical_se(k) << ','
                << e.estimated_se(k) << ',' << e.relative_efficiency(k) << '\n';
        }
    }
}

void write_report_table(std::ostream& out, const StudyReport& report) {
    const auto& est = report.estimators;
    auto block = [&](const std::string& title, auto&& field, bool skip_js) {
        out << std::left << std::setw(14) << ("" + title);
        for (std::size_t e = skip_js ? 1 : 0; e < est.size(); ++e) out << std::right << std::setw(9) << est[e].label;
        out << '\n';
        for (std::size_t j = 0; j < report.coefficient_names.size(); ++j) {
            out << std::left << std::setw(14) << ("  " + report.coefficient_names[j]);
            for (std::size_t e = skip_js ? 1 : 0; e < est.size(); ++e)
                out << std::right << std::setw(9) << std::fixed << std::setprecision(3)
                    << field(est[e])(static_cast<Eigen::Index>(j));
            out << '\n';
        }
    };
    out << "Scenario " << report.scenario << ": " << report.replicates_used << " of " << report.replicates_requested
        << " replicates, mean censoring " << std::fixed << std::setprecision(3) << report.mean_censoring << '\n';
    block("Bias", [](const EstimatorSummary& e) -> const Eigen::VectorXd& { return e.bias; }, false);
    block("Empirical SE", [](const EstimatorSummary& e) -> const Eigen::VectorXd& { return e.empirical_se; }, false);
    block("Estimated SE", [](const EstimatorSummary& e) -> const Eigen::VectorXd& { return e.estimated_se; }, false);
    block("RE", [](const EstimatorSummary& e) -> const Eigen::VectorXd& { return e.relative_efficiency; }, true);
    if (report.nonconverged_fits > 0) out << "non-converged GEE fits: " << report.nonconverged_fits << '\n';
    for (const auto& f : report.failures) out << "failed " << f << '\n';
}

}  // namespace mvaft
