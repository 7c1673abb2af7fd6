#include "mvaft/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

namespace mvaft {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s.c_str(), &end);
    return errno == 0 && end == s.c_str() + s.size();
}

bool parse_int(const std::string& s, int& out) {
    double v = 0;
    if (!parse_double(s, v) || v != std::floor(v) || std::abs(v) > 2e9) return false;
    out = static_cast<int>(v);
    return true;
}

}  // namespace

SurvivalDataset read_long_csv(std::istream& in, TimeScale scale) {
    static const std::vector<std::string> required = {"cluster", "margin", "margin_class", "time", "status"};
    std::string line;
    if (!std::getline(in, line)) throw ValidationError({"empty input: missing header"});
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);

    std::vector<std::string> problems;
    for (std::size_t i = 0; i < required.size(); ++i) {
        if (i >= header.size() || header[i] != required[i])
            problems.push_back("header column " + std::to_string(i + 1) + " must be '" + required[i] + "'");
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
    std::vector<std::string> covariates(header.begin() + static_cast<std::ptrdiff_t>(required.size()), header.end());

    std::vector<Observation> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        const std::string at = "line " + std::to_string(line_no);
        if (fields.size() != header.size()) {
            problems.push_back(at + ": expected " + std::to_string(header.size()) + " fields, found " +
                               std::to_string(fields.size()));
            continue;
        }
        Observation obs;
        double time = 0;
        bool ok = true;
        if (!parse_int(fields[0], obs.cluster_id)) { problems.push_back(at + ": bad cluster id"); ok = false; }
        if (!parse_int(fields[1], obs.margin_position)) { problems.push_back(at + ": bad margin"); ok = false; }
        if (!parse_int(fields[2], obs.margin_class)) { problems.push_back(at + ": bad margin_class"); ok = false; }
        if (!parse_double(fields[3], time)) { problems.push_back(at + ": bad time"); ok = false; }
        if (!parse_int(fields[4], obs.status)) { problems.push_back(at + ": bad status"); ok = false; }
        if (ok && scale == TimeScale::raw) {
            if (time <= 0) {
                problems.push_back(at + ": raw time must be positive");
                ok = false;
            } else {
                time = std::log(time);
            }
        }
        obs.log_time = time;
        for (std::size_t c = 0; c < covariates.size(); ++c) {
            double v = 0;
            if (!parse_double(fields[required.size() + c], v)) {
                problems.push_back(at + ": bad value for covariate " + covariates[c]);
                ok = false;
            }
            obs.covariates.push_back(v);
        }
        if (ok) rows.push_back(std::move(obs));
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
    return SurvivalDataset::from_rows(std::move(rows), std::move(covariates));
}

SurvivalDataset read_long_csv_file(const std::string& path, TimeScale scale) {
    std::ifstream in(path);
    if (!in) throw ValidationError({"cannot open data file " + path});
    return read_long_csv(in, scale);
}

DesignSpec parse_design_spec(std::istream& in, const std::vector<std::string>& covariate_names) {
    DesignSpec spec;
    std::vector<std::string> problems;
    std::map<std::string, std::size_t> coefficient_index;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const std::string at = "design line " + std::to_string(line_no);
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            problems.push_back(at + ": expected '<name>: margin=<k|all> covariate=<col>'");
            continue;
        }
        const std::string name = trim(line.substr(0, colon));
        std::istringstream rest(line.substr(colon + 1));
        std::string token, margin, covariate;
        while (rest >> token) {
            const auto eq = token.find('=');
            if (eq == std::string::npos) {
                problems.push_back(at + ": unexpected token '" + token + "'");
                continue;
            }
            const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
            if (key == "margin") margin = value;
            else if (key == "covariate") covariate = value;
            else problems.push_back(at + ": unknown key '" + key + "'");
        }
        if (name.empty() || margin.empty() || covariate.empty()) {
            problems.push_back(at + ": name, margin and covariate are all required");
            continue;
        }
        DesignSpec::Entry entry;
        if (margin == "all") {
            entry.margin_position = 0;
        } else if (!parse_int(margin, entry.margin_position) || entry.margin_position < 1) {
            problems.push_back(at + ": margin must be a positive integer or 'all'");
            continue;
        }
        const auto col = std::find(covariate_names.begin(), covariate_names.end(), covariate);
        if (col == covariate_names.end()) {
            problems.push_back(at + ": missing covariate column '" + covariate + "'");
            continue;
        }
        entry.covariate = static_cast<std::size_t>(col - covariate_names.begin());
        auto [it, inserted] = coefficient_index.emplace(name, spec.coefficient_names.size());
        if (inserted) spec.coefficient_names.push_back(name);
        entry.coefficient = it->second;
        spec.entries.push_back(entry);
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
    if (spec.entries.empty()) throw ValidationError({"design file defines no coefficients"});
    return spec;
}

DesignSpec read_design_spec_file(const std::string& path, const std::vector<std::string>& covariate_names) {
    std::ifstream in(path);
    if (!in) throw ValidationError({"cannot open design file " + path});
    return parse_design_spec(in, covariate_names);
}

}  // namespace mvaft
