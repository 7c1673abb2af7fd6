#pragma once

#include <iosfwd>
#include <string>

#include "mvaft/data_model.hpp"

namespace mvaft {

enum class TimeScale { raw, log };

// Long-format CSV with header
//   cluster,margin,margin_class,time,status,<covariate names...>
// Raw times are log-transformed at ingest.
SurvivalDataset read_long_csv(std::istream& in, TimeScale scale);
SurvivalDataset read_long_csv_file(const std::string& path, TimeScale scale);

// Design file: one line per coefficient, `<name>: margin=<k|all> covariate=<col>`.
// Repeating a name shares that coefficient across the listed margins.
// Blank lines and lines starting with '#' are ignored.
DesignSpec parse_design_spec(std::istream& in, const std::vector<std::string>& covariate_names);
DesignSpec read_design_spec_file(const std::string& path, const std::vector<std::string>& covariate_names);

}  // namespace mvaft
