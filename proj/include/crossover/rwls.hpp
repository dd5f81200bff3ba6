#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crossover/constraints.hpp"
#include "crossover/estimands.hpp"
#include "crossover/identification.hpp"
#include "crossover/sequences.hpp"

namespace crossover {

class ObservedDataset {
public:
    // outcomes is N x T; row i belongs to sequences[i].
    ObservedDataset(CrossoverDesign design, std::vector<TreatmentSequence> sequences, Eigen::MatrixXd outcomes);

    const CrossoverDesign& design() const { return design_; }
    int units() const { return static_cast<int>(sequences_.size()); }
    int horizon() const { return design_.horizon(); }
    const std::vector<TreatmentSequence>& sequences() const { return sequences_; }
    const Eigen::MatrixXd& outcomes() const { return outcomes_; }
    // Units assigned to z, ascending.
    const std::vector<int>& units_of(const TreatmentSequence& z) const;

private:
    CrossoverDesign design_;
    std::vector<TreatmentSequence> sequences_;
    Eigen::MatrixXd outcomes_;
    std::map<TreatmentSequence, std::vector<int>> groups_;
};

// The dataset an assignment would reveal from a potential-outcome table.
ObservedDataset observe(const CrossoverDesign& design, const Assignment& assignment,
                        const PotentialOutcomeTable& table);

enum class WeightProvenance { sample, pooled, user };
std::string provenance_name(WeightProvenance p);

struct WeightModel {
    std::map<TreatmentSequence, Eigen::MatrixXd> omega;
    WeightProvenance provenance = WeightProvenance::user;
    std::vector<std::string> repairs;
};

// If lambda_min < eps = 1e-8 trace / T (absolute 1e-8 when the trace vanishes), adds (eps - lambda_min) I.
// Returns true when a repair was applied.
bool pd_repair(Eigen::MatrixXd& omega);

WeightModel user_weights(std::map<TreatmentSequence, Eigen::MatrixXd> omega);

using SequenceMeans = std::map<TreatmentSequence, Eigen::VectorXd>;

SequenceMeans sequence_means(const ObservedDataset& data);
WeightModel sample_covariances(const ObservedDataset& data);
// Entry (t, t') is pooled over observed sequences whose letters agree on every position that
// Y_t and Y_t' may depend on under the scenario.
WeightModel pooled_covariance_entries(const ObservedDataset& data, Scenario scenario, int k);

struct SolveOptions {
    bool force_pseudo_normal = false;
    double condition_warning = 1e12;
};

// Factorises the KKT system once; gamma-hat is then linear in the sequence means.
class RwlsSolver {
public:
    RwlsSolver(const CrossoverDesign& design, const WeightModel& weights, const RestrictionMatrix& C,
               const SolveOptions& options = {});

    Eigen::VectorXd solve(const SequenceMeans& means) const;

    const CrossoverDesign& design() const { return design_; }
    const RestrictionMatrix& restriction() const { return restriction_; }
    const WeightModel& weights() const { return weights_; }
    const Eigen::MatrixXd& u11() const { return u11_; }
    // gamma-hat = sum_z mean_map(z) Yhat(z); mean_map(z) = U11 N_z X_z' Omega_z^{-1}.
    const Eigen::MatrixXd& mean_map(const TreatmentSequence& z) const { return mean_map_.at(z); }
    const Eigen::MatrixXd& omega_inverse(const TreatmentSequence& z) const { return omega_inv_.at(z); }
    const IdentifiabilityReport& rank() const { return rank_; }
    double condition() const { return condition_; }
    bool used_pseudo_normal() const { return used_pseudo_normal_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    CrossoverDesign design_;
    WeightModel weights_;
    RestrictionMatrix restriction_;
    IdentifiabilityReport rank_;
    Eigen::MatrixXd u11_;
    std::map<TreatmentSequence, Eigen::MatrixXd> omega_inv_;
    std::map<TreatmentSequence, Eigen::MatrixXd> mean_map_;
    double condition_ = 1.0;
    bool used_pseudo_normal_ = false;
    std::vector<std::string> warnings_;
};

struct RwlsFit {
    Eigen::VectorXd gamma;
    Eigen::MatrixXd u11;
    Eigen::MatrixXd covariance;  // EHW; empty until computed
    Eigen::MatrixXd residuals;   // N x T; empty for means-only fits
    RestrictionMatrix restriction;
    WeightModel weights;
    IdentifiabilityReport rank;
    double condition = 1.0;
    std::vector<std::string> warnings;

    int horizon() const { return restriction.horizon; }
    const std::vector<TreatmentSequence>& scope() const { return restriction.scope; }
};

RwlsFit solve_restricted_wls(const CrossoverDesign& design, const SequenceMeans& means, const WeightModel& weights,
                             const RestrictionMatrix& C, const SolveOptions& options = {});
RwlsFit fit_with_solver(const RwlsSolver& solver, const SequenceMeans& means);

// Fills residuals and the EHW covariance. hc1 scales by N / (N - |S^obs|).
void attach_ehw(RwlsFit& fit, const RwlsSolver& solver, const ObservedDataset& data, bool hc1 = false);
Eigen::MatrixXd ehw_covariance(const RwlsFit& fit, const ObservedDataset& data, bool hc1 = false);

struct WeightChoice {
    WeightProvenance kind = WeightProvenance::sample;
    std::optional<WeightModel> user;
};

struct FitOptions {
    SolveOptions solve;
    bool hc1 = false;
};

RwlsFit feasible_rwls(const ObservedDataset& data, const RestrictionMatrix& C, const WeightChoice& choice,
                      const FitOptions& options = {});
RwlsFit feasible_rwls(const ObservedDataset& data, Scenario scenario, int k, const WeightChoice& choice,
                      const FitOptions& options = {});

WeightModel estimate_weights(const ObservedDataset& data, const RestrictionMatrix& C, const WeightChoice& choice);

struct EstimateResult {
    std::vector<std::string> labels;
    Eigen::VectorXd point;
    Eigen::MatrixXd covariance;
    Eigen::VectorXd se;
    Eigen::VectorXd ci_low;
    Eigen::VectorXd ci_high;
    std::vector<bool> restricted;
    double level = 0.95;
    double wald_statistic = 0.0;  // against theta = 0, over unrestricted coordinates
    int wald_df = 0;
    double wald_critical = 0.0;
    double wald_p_value = 1.0;
    Eigen::MatrixXd precision;  // pseudo-inverse of covariance on its range

    // Whether theta lies in the Wald region.
    bool wald_contains(const Eigen::VectorXd& theta) const;
};

// Rows of B that lie in the row space of C; their estimand is zero for every admissible gamma.
std::vector<bool> restricted_rows(const Eigen::MatrixXd& B, const Eigen::MatrixXd& C);

EstimateResult estimate(const RwlsFit& fit, const EstimandSpec& spec, double level = 0.95);

double normal_quantile(double p);

}  // namespace crossover
