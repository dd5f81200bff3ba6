#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crossover/sequences.hpp"

namespace crossover {

enum class Scenario { a, b, c };

Scenario parse_scenario(const std::string& text);
char scenario_tag(Scenario s);

// Rows of C in C gamma = 0. Columns follow coefficient_column.
struct RestrictionMatrix {
    Eigen::MatrixXd rows;
    int horizon = 0;
    std::vector<TreatmentSequence> scope;
    Scenario scenario = Scenario::a;
    int carryover_order = 0;

    int count() const { return static_cast<int>(rows.rows()); }
};

// Prefix class of (t, z); at t >= k under Assumption 2 the class is the trailing window instead.
TreatmentSequence prefix_key(const TreatmentSequence& z, int t);
TreatmentSequence window_key(const TreatmentSequence& z, int t, int k);

// Each equivalence class of size m contributes an m-1 row spanning chain.
Eigen::MatrixXd rows_no_anticipation(int T, const std::vector<TreatmentSequence>& scope);
Eigen::MatrixXd rows_no_carryover(int T, const std::vector<TreatmentSequence>& scope, int k);
Eigen::MatrixXd rows_time_invariant(int T, const std::vector<TreatmentSequence>& scope, int k);

// Selected original rows (original order) spanning the same row space, so entries stay +-1.
Eigen::MatrixXd row_reduce(const Eigen::MatrixXd& C);

int matrix_rank(const Eigen::MatrixXd& A, double relative_tolerance = 1e-10);

// k is ignored for scenario a.
RestrictionMatrix assemble(Scenario scenario, int T, const std::vector<TreatmentSequence>& scope, int k);

// Appends user-supplied rows and row-reduces again.
RestrictionMatrix with_extra_rows(const RestrictionMatrix& C, const Eigen::MatrixXd& extra);

std::string restriction_csv(const RestrictionMatrix& C);

}  // namespace crossover
