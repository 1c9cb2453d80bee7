#pragma once
// Input CSV parsing and JSON / CSV serialization of fits and experiment
// reports.
//
// CSV output: comma separated, header row, '.' decimal separator, LF line
// endings, floats with 17 significant digits.

#include "penhaz/estimator.hpp"
#include "penhaz/sim_engine.hpp"
#include "penhaz/variance.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace penhaz {

inline constexpr const char* kVersion = "0.1.0";

/// Header `time,event[,x1,...,xp]`. Throws ParseError naming the line.
SurvivalDataset read_dataset_csv(std::istream& in);
SurvivalDataset read_dataset_csv(const std::string& path);

void write_dataset_csv(std::ostream& out, const SurvivalDataset& data);

std::string format_double(double v);

nlohmann::json to_json(const Scenario& scenario);
nlohmann::json to_json(const CoverageReport& report);
nlohmann::json to_json(const std::vector<KappaSequenceRow>& rows);
nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const Eigen::MatrixXd& m);

void write_coverage_csv(std::ostream& out, const CoverageReport& report);
void write_ph_csv(std::ostream& out, const CoverageReport& report);
void write_kappa_csv(std::ostream& out, const std::vector<KappaSequenceRow>& rows);

/// t,hazard,hazard_lo,hazard_hi,survival,survival_lo,survival_hi
void write_curves_csv(std::ostream& out, const CurveBand& hazard, const CurveBand& survival);

}  // namespace penhaz
