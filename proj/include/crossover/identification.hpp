#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "crossover/constraints.hpp"
#include "crossover/sequences.hpp"

namespace crossover {

// X_z = (indicator of z over S) kron I_T, a T x (T |S|) block.
Eigen::MatrixXd regressor_block(const CrossoverDesign& design, const TreatmentSequence& z);

// sum_z N_z X_z' X_z + C' C.
Eigen::MatrixXd gram_plus_restriction(const CrossoverDesign& design, const RestrictionMatrix& C);

// Singular values below 1e-8 * sigma_max * dim count as zero.
int numerical_rank_svd(const Eigen::MatrixXd& M);

struct IdentifiabilityReport {
    bool identifiable = false;
    int rank = 0;
    int dimension = 0;
};

IdentifiabilityReport is_identifiable(const CrossoverDesign& design, const RestrictionMatrix& C);

// Returns the target itself when it is observed.
std::optional<TreatmentSequence> mean_identifiable_s1(const TreatmentSequence& target, int t,
                                                      const CrossoverDesign& design);
std::optional<TreatmentSequence> mean_identifiable_s2(const TreatmentSequence& target, int t, int k,
                                                      const CrossoverDesign& design);

// A node estimates the period-`period` mean of class `key` (prefix for period < k, window otherwise).
// Leaves carry a witness; inner nodes combine three signed children.
struct Derivation {
    int period = 0;
    TreatmentSequence key;
    std::optional<TreatmentSequence> witness;
    std::vector<std::pair<int, std::shared_ptr<const Derivation>>> terms;

    bool is_leaf() const { return terms.empty(); }
    int depth() const;
    std::string summary() const;
};

std::optional<Derivation> mean_identifiable_s3(const TreatmentSequence& target, int t, int k,
                                               const CrossoverDesign& design);

struct MeanVerdict {
    TreatmentSequence sequence;
    int period = 0;
    bool identified = false;
    std::string detail;
};

// One verdict per (z in S, t) using the scenario's checker (S1 for a, S2 for b, S3 for c).
std::vector<MeanVerdict> mean_identification_table(const CrossoverDesign& design, Scenario scenario, int k);

}  // namespace crossover
