#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crossover/sequences.hpp"

namespace crossover {

// Column of gamma_{t,z} in the stacked coefficient vector: sequence-major, period-minor.
inline int coefficient_column(int scope_index, int t, int T) { return scope_index * T + (t - 1); }

// theta(W) = sum_z W(z) Ybar(z), stored as the K x (T |S|) matrix B = [W(z_1) ... W(z_|S|)].
class EstimandSpec {
public:
    EstimandSpec(int horizon, std::vector<TreatmentSequence> scope, Eigen::MatrixXd matrix,
                 std::vector<std::string> labels);

    int horizon() const { return horizon_; }
    int dimension() const { return static_cast<int>(matrix_.rows()); }
    const std::vector<TreatmentSequence>& scope() const { return scope_; }
    const Eigen::MatrixXd& matrix() const { return matrix_; }
    const std::vector<std::string>& labels() const { return labels_; }
    // K x T block for z; zero when z is outside the scope.
    Eigen::MatrixXd weights(const TreatmentSequence& z) const;

private:
    int horizon_;
    std::vector<TreatmentSequence> scope_;
    Eigen::MatrixXd matrix_;
    std::vector<std::string> labels_;
};

class PotentialOutcomeTable {
public:
    // outcomes[j] is the N x T matrix of Y_i(scope[j]).
    PotentialOutcomeTable(std::vector<TreatmentSequence> scope, std::vector<Eigen::MatrixXd> outcomes);

    int units() const { return units_; }
    int horizon() const { return horizon_; }
    const std::vector<TreatmentSequence>& scope() const { return scope_; }
    const Eigen::MatrixXd& outcomes(const TreatmentSequence& z) const;
    const Eigen::MatrixXd& outcomes_at(int scope_index) const { return outcomes_[scope_index]; }
    Eigen::MatrixXd& outcomes_at(int scope_index) { return outcomes_[scope_index]; }
    Eigen::VectorXd mean(const TreatmentSequence& z) const;
    // Stacked Ybar in coefficient-column order.
    Eigen::VectorXd stacked_means() const;
    // Y_i(z) for every z, stacked in coefficient-column order.
    Eigen::VectorXd stacked_unit(int i) const;
    // Finite-population covariance S^2(z) with divisor N - 1.
    Eigen::MatrixXd covariance(const TreatmentSequence& z) const;

private:
    int scope_index_or_throw(const TreatmentSequence& z) const;

    std::vector<TreatmentSequence> scope_;
    std::vector<Eigen::MatrixXd> outcomes_;
    int units_ = 0;
    int horizon_ = 0;
};

EstimandSpec instantaneous_effect(int t, const TreatmentSequence& history, int T,
                                  const std::vector<TreatmentSequence>& scope);

// k = 0 delegates to instantaneous_effect with history = prefix.
EstimandSpec carryover_effect(int t, int k, const TreatmentSequence& prefix,
                              const TreatmentSequence& suffix, int T,
                              const std::vector<TreatmentSequence>& scope);

// Coefficients are unconstrained; marginal_effect requires a probability vector.
EstimandSpec linear_combination(const std::vector<EstimandSpec>& specs,
                                const std::vector<double>& coefficients, std::string label);
EstimandSpec marginal_effect(const std::vector<EstimandSpec>& specs, const std::vector<double>& weights,
                             std::string label = "");
EstimandSpec stack(const std::vector<EstimandSpec>& specs);

// Every tau_t(history) for t = 1..T, periods ascending, histories lexicographic.
EstimandSpec all_instantaneous_effects(int T, const std::vector<TreatmentSequence>& scope);

// The five two-period effects (tau_1, tau_2(A), tau_2(B), tau_2^1(A), tau_2^1(B)).
EstimandSpec two_period_effects(const std::vector<TreatmentSequence>& scope);

Eigen::VectorXd true_value(const EstimandSpec& spec, const PotentialOutcomeTable& table);
Eigen::VectorXd individual_effect(const EstimandSpec& spec, const PotentialOutcomeTable& table, int i);
Eigen::MatrixXd individual_effect_covariance(const EstimandSpec& spec, const PotentialOutcomeTable& table);

}  // namespace crossover
