#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crossover/constraints.hpp"
#include "crossover/rwls.hpp"
#include "crossover/sequences.hpp"

namespace crossover {

struct GroupSummary {
    int count = 0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    // (S_1^2, S_12; S_12, S_2^2), sample or supplied.
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
};

struct TwoPeriodSummary {
    std::map<TreatmentSequence, GroupSummary> groups;

    const GroupSummary& group(const std::string& z) const;
    bool has(const std::string& z) const;
};

// Means from the data; covariances are the weight matrices the engine would use.
TwoPeriodSummary summarize(const ObservedDataset& data, const WeightModel& weights);

// weights has one row per estimand over (w_1(z), w_2(z)) for observed z in lexicographic order,
// so estimates = weights * stacked means. variances drop the inestimable individual-effect term.
struct TwoPeriodResult {
    std::vector<std::string> labels;
    Eigen::VectorXd estimates;
    Eigen::VectorXd variances;
    Eigen::MatrixXd weights;
    std::optional<double> p;
    std::vector<std::string> not_estimable;

    double at(const std::string& label) const;
};

// Minimises sum_z w_z' Omega_z w_z / N_z subject to A w = c via its KKT system.
Eigen::VectorXd min_variance_weights(const TwoPeriodSummary& s, const Eigen::MatrixXd& A, const Eigen::VectorXd& c);

// BLUEs over every unbiased linear combination of the group means, given the summary covariances.
TwoPeriodResult blue_4seq_scenario_a(const TwoPeriodSummary& s);
TwoPeriodResult blue_4seq_scenario_b(const TwoPeriodSummary& s);
TwoPeriodResult blue_4seq_scenario_c(const TwoPeriodSummary& s);
TwoPeriodResult blue_2seq_scenario_a(const TwoPeriodSummary& s);
TwoPeriodResult blue_2seq_scenario_b(const TwoPeriodSummary& s);
TwoPeriodResult blue_2seq_scenario_c(const TwoPeriodSummary& s);

// Count-weighted forms that ignore cross-period covariance; they coincide with the BLUEs when S_12 = 0
// and the relevant variances agree within arm.
TwoPeriodResult count_weighted_4seq_scenario_a(const TwoPeriodSummary& s);
TwoPeriodResult count_weighted_4seq_scenario_b(const TwoPeriodSummary& s);

// Dispatches on the observed groups (four or AB/BA only).
TwoPeriodResult closed_form(const TwoPeriodSummary& s, Scenario scenario);
TwoPeriodResult conservative_variances(const TwoPeriodSummary& s, Scenario scenario);

// Variance of p tau1 + (1 - p) tau2 in the two-sequence design, without the individual-effect term.
double two_sequence_combination_variance(const TwoPeriodSummary& s, double p);

}  // namespace crossover
