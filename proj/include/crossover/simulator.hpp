#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crossover/constraints.hpp"
#include "crossover/estimands.hpp"
#include "crossover/rwls.hpp"
#include "crossover/sequences.hpp"

namespace crossover {

enum class GeneratorKind { gaussian_model, constant_effect };

// Two-period generators over the sequences AA, AB, BA, BB.
struct ScenarioGenerator {
    GeneratorKind kind = GeneratorKind::gaussian_model;
    Scenario scenario = Scenario::a;
    // Means of (Y_1, Y_2) under AA, AB, BA, BB.
    Eigen::Vector4d beta1{0.0, 0.0, 1.0, 1.0};
    Eigen::Vector4d beta2{0.0, 1.0, 0.0, 1.0};
    double rho = 0.3;
    double tau1 = 1.0;
    double tau2_b = 1.0;
    double carry_a = 0.0;  // tau_2^1(A)
    double carry_b = 0.0;  // tau_2^1(B)
    std::uint64_t seed = 20240601;
};

// Table over the full two-period scope; design supplies the scope and must have T = 2.
PotentialOutcomeTable generate_table(const ScenarioGenerator& gen, int N, const CrossoverDesign& design);

struct McConfig {
    Scenario scenario = Scenario::a;
    int carryover_order = 1;
    int replications = 2000;
    std::uint64_t seed = 1;
    WeightChoice weights;
    double level = 0.95;
    bool hc1 = false;
    int threads = 0;  // 0: hardware concurrency
};

struct EstimandSummary {
    std::string label;
    double truth = 0.0;
    bool restricted = false;
    double mean_bias = 0.0;
    double empirical_variance = 0.0;
    double empirical_variance_se = 0.0;  // Monte Carlo SE of empirical_variance
    double mean_ehw_variance = 0.0;
    double mean_ehw_variance_se = 0.0;
    double coverage = 0.0;
    std::optional<double> oracle_variance;  // design-based variance at the true weights
};

struct McReport {
    char scenario = 'a';
    int units = 0;
    int replications = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> replication_seeds;
    std::vector<EstimandSummary> estimands;
    Eigen::MatrixXd bias;       // replications x K
    Eigen::MatrixXd variances;  // replications x K, EHW
};

McReport run_monte_carlo(const PotentialOutcomeTable& table, const CrossoverDesign& design, const EstimandSpec& spec,
                         const McConfig& config);

// Generates the table from gen, then runs the Monte Carlo analysed under config.scenario.
McReport run_study(const ScenarioGenerator& gen, int N, const CrossoverDesign& design, const EstimandSpec& spec,
                   const McConfig& config);

// True S^2(z) for every observed z, as user weights.
WeightModel true_weights(const PotentialOutcomeTable& table, const CrossoverDesign& design);

// sum_z Wt(z) S^2(z) Wt(z)' / N_z - S^2(theta(W)) / N with Wt(z) = B U11 N_z X_z' Omega_z^{-1}.
Eigen::MatrixXd oracle_variance(const RwlsSolver& solver, const EstimandSpec& spec, const PotentialOutcomeTable& table);

struct AuditResult {
    std::vector<std::string> labels;
    std::uint64_t assignments = 0;
    Eigen::VectorXd truth;
    Eigen::VectorXd exact_mean;
    Eigen::MatrixXd exact_variance;    // divisor: number of assignments
    Eigen::MatrixXd formula_variance;  // oracle_variance
    double max_restriction_violation = 0.0;  // max over assignments of |C gamma|_inf / (1 + |gamma|_inf)
};

AuditResult exact_randomization_audit(const PotentialOutcomeTable& table, const CrossoverDesign& design,
                                      const EstimandSpec& spec, const WeightModel& weights,
                                      const RestrictionMatrix& C);

// CSV with header scenario,estimand,replication,bias.
std::string emit_bias_distribution(const McReport& report);

}  // namespace crossover
