#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crossover/estimands.hpp"
#include "crossover/identification.hpp"
#include "crossover/rwls.hpp"
#include "crossover/sequences.hpp"
#include "crossover/simulator.hpp"
#include "crossover/twoperiod.hpp"

namespace crossover {

using Json = nlohmann::ordered_json;

// 17 significant digits; parses back to the same double.
std::string format_number(double x);

// Lines: "horizon T", "sequence Z COUNT", optional "scope Z1 Z2 ...". '#' starts a comment.
CrossoverDesign parse_design(std::istream& in);
CrossoverDesign read_design_file(const std::string& path);
std::string write_design(const CrossoverDesign& design);

// CSV header unit,sequence,y1,...,yT. Without a design, counts are inferred and the scope is the full set.
ObservedDataset parse_dataset(std::istream& in, const std::optional<CrossoverDesign>& design = std::nullopt);
ObservedDataset read_dataset_file(const std::string& path, const std::optional<CrossoverDesign>& design = std::nullopt);
std::string write_dataset(const ObservedDataset& data);

// CSV header unit,sequence,y1,...,yT with one row per (unit, scope sequence).
PotentialOutcomeTable parse_table(std::istream& in);
std::string write_table(const PotentialOutcomeTable& table);

// Grammar (whitespace separated, key=value):
//   tau t=2 history=A        tau t=2 (no history, t > 1: uniform average over histories)
//   carry t=3 k=1 prefix=A suffix=B
//   marginal of [REQ; REQ; ...] weights=0.5,0.5
//   all-tau                  two-period
EstimandSpec parse_estimand(const std::string& text, int T, const std::vector<TreatmentSequence>& scope);
EstimandSpec default_estimands(int T, const std::vector<TreatmentSequence>& scope);

// JSON object mapping sequence strings to T x T arrays.
WeightModel parse_weights(std::istream& in);

Json design_json(const CrossoverDesign& design);
Json fit_report(const RwlsFit& fit, const EstimateResult& est, const CrossoverDesign& design);
Json closed_form_report(const TwoPeriodResult& r, Scenario scenario);
Json identification_report(const CrossoverDesign& design, Scenario scenario, int k);
Json mc_report_json(const McReport& report);
Json audit_json(const AuditResult& audit);

ScenarioGenerator parse_generator(const Json& j);

}  // namespace crossover
