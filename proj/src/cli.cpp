#include "mvaft/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "mvaft/gee.hpp"
#include "mvaft/gehan.hpp"
#include "mvaft/inference.hpp"
#include "mvaft/io.hpp"
#include "mvaft/resampling.hpp"
#include "mvaft/simulation.hpp"

namespace mvaft::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string output_dir = ".";
};

std::uint64_t resolve_seed(const Globals& g, std::ostream& out) {
    if (g.seed) return *g.seed;
    std::random_device rd;
    const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    out << "seed: " << seed << " (entropy; pass --seed " << seed << " to reproduce)\n";
    return seed;
}

std::ofstream open_output(const Globals& g, const std::string& name) {
    fs::create_directories(g.output_dir);
    const fs::path path = fs::path(g.output_dir) / name;
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << std::setprecision(12);
    return f;
}

double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

std::vector<std::pair<std::size_t, std::size_t>> parse_tests(const std::string& text,
                                                             const std::vector<std::string>& names) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::string> problems;
    auto index_of = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return j;
        problems.push_back("--test: unknown coefficient '" + name + "'");
        return std::nullopt;
    };
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            problems.push_back("--test: expected a=b, got '" + item + "'");
            continue;
        }
        auto a = index_of(item.substr(0, eq));
        auto b = index_of(item.substr(eq + 1));
        if (a && b) pairs.emplace_back(*a, *b);
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
    return pairs;
}

struct FitOptions {
    std::string csv;
    std::string spec;
    std::string structure = "ex";
    int boot = 200;
    bool log_time = false;
    std::string tests;
};

int cmd_fit(const FitOptions& o, const Globals& g, std::ostream& out, std::ostream& err) {
    const SurvivalDataset data = read_long_csv_file(o.csv, o.log_time ? TimeScale::log : TimeScale::raw);
    const DesignSpec spec = read_design_spec_file(o.spec, data.covariate_names);
    const StackedDesign design = build_design(data, spec);
    const auto pairs = parse_tests(o.tests, design.coefficient_names);

    FitConfig config;
    config.structure = parse_structure(o.structure);
    config.bootstrap = o.boot;
    config.threads = g.threads;
    config.seed = resolve_seed(g, out);
    check(config);
    if (config.bootstrap < 2) throw ValidationError({"B ≥ 2 required"});

    const InitialEstimate initial = solve_initial(design, config.initial);
    FitResult result = fit_from(design, config, initial.beta);
    attach_covariance(result, bootstrap_covariance(design, config, initial.beta));
    const Eigen::MatrixXd js_cov =
        gehan_multiplier_covariance(design, initial, config.bootstrap, derive_seed(config.seed, 0x15));
    const Eigen::VectorXd se = result.standard_errors();

    {
        auto f = open_output(g, "coefficients.csv");
        f << "coefficient,estimate,se,z,p_value,initial,initial_se\n";
        for (Eigen::Index j = 0; j < result.beta.size(); ++j) {
            const double z = result.beta(j) / se(j);
            f << result.coefficient_names[static_cast<std::size_t>(j)] << ',' << result.beta(j) << ',' << se(j) << ','
              << z << ',' << normal_two_sided(z) << ',' << initial.beta(j) << ',' << std::sqrt(js_cov(j, j)) << '\n';
        }
    }
    {
        nlohmann::json j;
        j["structure"] = to_string(result.structure);
        j["alpha"] = result.alpha ? nlohmann::json(*result.alpha) : nlohmann::json();
        j["converged"] = result.converged;
        j["iterations"] = result.iterations;
        j["cycle_length"] = result.cycle_length;
        j["seed"] = config.seed;
        j["clusters"] = design.cluster_count();
        j["observations"] = design.observation_count();
        j["intercepts"] = result.intercepts;
        std::vector<std::vector<double>> omega;
        for (Eigen::Index r = 0; r < result.omega_hat.rows(); ++r) {
            omega.emplace_back();
            for (Eigen::Index c = 0; c < result.omega_hat.cols(); ++c) omega.back().push_back(result.omega_hat(r, c));
        }
        j["omega_hat"] = omega;
        j["bootstrap"] = {{"requested", result.bootstrap->requested},
                          {"failed", result.bootstrap->failed},
                          {"warnings", result.bootstrap->warnings}};
        std::vector<std::vector<double>> trace;
        for (const auto& rec : result.trace) trace.emplace_back(rec.beta.data(), rec.beta.data() + rec.beta.size());
        j["trace"] = trace;
        auto f = open_output(g, "fit_summary.json");
        f << j.dump(2) << '\n';
    }
    {
        auto f = open_output(g, "residual_curves.csv");
        f << "group,time,survival,at_risk,events\n";
        for (const auto& curve : km_residual_curves(design, result))
            for (const auto& row : curve.rows)
                f << curve.group << ',' << row.time << ',' << row.survival << ',' << row.at_risk << ',' << row.events
                  << '\n';
    }
    std::vector<WaldTest> tests;
    {
        auto f = open_output(g, "wald_tests.csv");
        f << "test,difference,se,statistic,df,p_value\n";
        for (const auto& pr : pairs) {
            const std::pair<std::size_t, std::size_t> one[] = {pr};
            const WaldTest w = wald_equal(result, one);
            f << design.coefficient_names[pr.first] << '=' << design.coefficient_names[pr.second] << ','
              << *w.difference << ',' << *w.standard_error << ',' << w.statistic << ',' << w.df << ',' << w.p_value
              << '\n';
            tests.push_back(w);
        }
        if (pairs.size() > 1) {
            const WaldTest w = wald_equal(result, pairs);
            f << "joint,,," << w.statistic << ',' << w.df << ',' << w.p_value << '\n';
            tests.push_back(w);
        }
    }
    if (design.max_size >= 2 && design.parallel) {
        auto f = open_output(g, "logrank.csv");
        f << "first,second,statistic,p_value\n";
        for (int a = 0; a < design.max_size; ++a)
            for (int b = a + 1; b < design.max_size; ++b) {
                const LogRankResult lr =
                    naive_logrank(residual_sample(design, result.beta, a), residual_sample(design, result.beta, b));
                f << "margin_" << a + 1 << ",margin_" << b + 1 << ',' << lr.statistic << ',' << lr.p_value << '\n';
            }
    }

    out << "structure " << to_string(result.structure);
    if (result.alpha) out << ", alpha " << std::setprecision(4) << *result.alpha;
    out << ", " << (result.converged ? "converged" : "NOT converged") << " after " << result.iterations
        << " iterations\n";
    out << std::left << std::setw(16) << "coefficient" << std::right << std::setw(11) << "EST" << std::setw(11)
        << "SE" << std::setw(11) << "p" << '\n';
    for (Eigen::Index j = 0; j < result.beta.size(); ++j) {
        out << std::left << std::setw(16) << result.coefficient_names[static_cast<std::size_t>(j)] << std::right
            << std::fixed << std::setprecision(4) << std::setw(11) << result.beta(j) << std::setw(11) << se(j)
            << std::setw(11) << normal_two_sided(result.beta(j) / se(j)) << '\n';
    }
    for (std::size_t t = 0; t < pairs.size(); ++t)
        out << "Wald " << design.coefficient_names[pairs[t].first] << " = " << design.coefficient_names[pairs[t].second]
            << ": difference " << *tests[t].difference << " (SE " << *tests[t].standard_error << "), p "
            << tests[t].p_value << '\n';
    out.unsetf(std::ios::floatfield);
    for (const auto& w : result.bootstrap->warnings) err << "warning: " << w << '\n';
    if (!result.converged) {
        if (result.cycle_length > 0)
            err << "GEE iterations entered a cycle of length " << result.cycle_length << "; last iterate reported\n";
        else
            err << "GEE iterations did not converge within " << config.max_iter << " steps\n";
        return not_converged;
    }
    return ok;
}

struct CheckOptions {
    std::string csv;
    std::string spec;
    std::string structure = "ex";
    int boot = 200;
    bool log_time = false;
};

int cmd_bootstrap_check(const CheckOptions& o, const Globals& g, std::ostream& out, std::ostream& err) {
    if (o.boot < 2) throw ValidationError({"B ≥ 2 required"});
    const SurvivalDataset data = read_long_csv_file(o.csv, o.log_time ? TimeScale::log : TimeScale::raw);
    const DesignSpec spec = read_design_spec_file(o.spec, data.covariate_names);
    const StackedDesign design = build_design(data, spec);
    FitConfig config;
    config.structure = parse_structure(o.structure);
    config.bootstrap = o.boot;
    config.threads = g.threads;
    config.seed = resolve_seed(g, out);

    const InitialEstimate initial = solve_initial(design, config.initial);
    const FitResult result = fit_from(design, config, initial.beta);
    const std::vector<double> ones(design.cluster_count(), 1.0);
    const Eigen::VectorXd unit = bootstrap_replicate(design, ones, initial.beta, config);
    const double mismatch = (unit - result.beta).cwiseAbs().maxCoeff();
    out << "Z=1 replicate vs point estimate: max abs difference " << std::scientific << std::setprecision(3)
        << mismatch << '\n';
    out.unsetf(std::ios::floatfield);
    if (!(mismatch <= 1e-8)) {
        err << "Z=1 bootstrap replicate does not reproduce the point estimate (difference " << mismatch << ")\n";
        return inconsistent;
    }

    const BootstrapSummary boot = bootstrap_covariance(design, config, initial.beta);
    auto f = open_output(g, "bootstrap_check.csv");
    f << "coefficient,estimate,se,replicates,failed\n";
    out << std::left << std::setw(16) << "coefficient" << std::right << std::setw(11) << "EST" << std::setw(11)
        << "SE" << '\n';
    for (Eigen::Index j = 0; j < result.beta.size(); ++j) {
        const double se = std::sqrt(boot.covariance(j, j));
        const auto& name = result.coefficient_names[static_cast<std::size_t>(j)];
        f << name << ',' << result.beta(j) << ',' << se << ',' << boot.replicates.size() << ',' << boot.failed << '\n';
        out << std::left << std::setw(16) << name << std::right << std::fixed << std::setprecision(4) << std::setw(11)
            << result.beta(j) << std::setw(11) << se << '\n';
    }
    out.unsetf(std::ios::floatfield);
    out << "bootstrap replicates: " << boot.replicates.size() << " used, " << boot.failed << " failed\n";
    for (const auto& w : boot.warnings) err << "warning: " << w << '\n';
    return ok;
}

int cmd_simulate(const std::string& path, const Globals& g, bool seed_given, std::ostream& out) {
    Scenario scenario = read_scenario_file(path);
    if (seed_given) scenario.seed = *g.seed;
    if (g.threads > 1) scenario.threads = g.threads;
    out << "scenario " << scenario.name << ": " << scenario.replicates << " replicates, seed " << scenario.seed
        << '\n';
    const StudyReport report = run_study(scenario);
    {
        auto f = open_output(g, scenario.name + ".csv");
        write_report_csv(f, report);
    }
    std::ostringstream table;
    write_report_table(table, report);
    {
        auto f = open_output(g, scenario.name + ".txt");
        f << table.str();
    }
    out << table.str();
    return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semiparametric multivariate AFT models for clustered censored data", "mvaft"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "master seed (default: logged entropy seed)");
    app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--output-dir", g.output_dir, "directory for report files");

    FitOptions fo;
    auto* fit_cmd = app.add_subcommand("fit", "fit a model from a long-format CSV and a design file");
    fit_cmd->add_option("csv", fo.csv)->required();
    fit_cmd->add_option("spec", fo.spec)->required();
    fit_cmd->add_option("--structure", fo.structure, "ind, ex, ar1 or un");
    fit_cmd->add_option("--boot", fo.boot, "bootstrap replicates B");
    fit_cmd->add_flag("--log-time,!--raw-time", fo.log_time, "times are already on the log scale");
    fit_cmd->add_option("--test", fo.tests, "equality tests, e.g. \"a=b,c=d\"");

    std::string scenario_path;
    auto* sim_cmd = app.add_subcommand("simulate", "run a simulation study from a scenario file");
    sim_cmd->add_option("scenario", scenario_path)->required();

    CheckOptions co;
    auto* check_cmd = app.add_subcommand("bootstrap-check", "check the multiplier bootstrap on a dataset");
    check_cmd->add_option("csv", co.csv)->required();
    check_cmd->add_option("spec", co.spec)->required();
    check_cmd->add_option("--structure", co.structure, "ind, ex, ar1 or un");
    check_cmd->add_option("--boot", co.boot, "bootstrap replicates B");
    check_cmd->add_flag("--log-time,!--raw-time", co.log_time, "times are already on the log scale");

    // global flags are accepted after the subcommand too
    for (auto* sub : {fit_cmd, sim_cmd, check_cmd}) sub->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return invalid_input;
    }
    if (*seed_opt) g.seed = seed;

    try {
        if (*fit_cmd) return cmd_fit(fo, g, out, err);
        if (*sim_cmd) return cmd_simulate(scenario_path, g, g.seed.has_value(), out);
        return cmd_bootstrap_check(co, g, out, err);
    } catch (const ValidationError& e) {
        for (const auto& p : e.problems()) err << p << '\n';
        return invalid_input;
    } catch (const GehanNonConvergence& e) {
        err << e.what() << '\n';
        return not_converged;
    } catch (const NumericalError& e) {
        err << e.what() << '\n';
        return not_converged;
    } catch (const std::exception& e) {
        err << e.what() << '\n';
        return invalid_input;
    }
}

}  // namespace mvaft::cli
