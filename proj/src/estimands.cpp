#include "crossover/estimands.hpp"

#include <algorithm>
#include <cmath>

#include "crossover/errors.hpp"

namespace crossover {

namespace {

void require_same_layout(const EstimandSpec& a, const EstimandSpec& b) {
    if (a.horizon() != b.horizon() || a.scope() != b.scope()) {
        throw ShapeError("estimand specs disagree on horizon or scope");
    }
}

int find_scope(const std::vector<TreatmentSequence>& scope, const TreatmentSequence& z) {
    auto it = std::lower_bound(scope.begin(), scope.end(), z);
    if (it == scope.end() || *it != z) return -1;
    return static_cast<int>(it - scope.begin());
}

// Row that averages period-t entries over scope sequences extending `plus`, minus the same for `minus`.
Eigen::RowVectorXd contrast_row(int t, const TreatmentSequence& plus, const TreatmentSequence& minus,
                                int T, const std::vector<TreatmentSequence>& scope) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(T * static_cast<int>(scope.size()));
    std::vector<int> pos, neg;
    for (int j = 0; j < static_cast<int>(scope.size()); ++j) {
        const auto prefix = subsequence(scope[j], 1, t);
        if (prefix == plus) pos.push_back(j);
        if (prefix == minus) neg.push_back(j);
    }
    if (pos.empty() || neg.empty()) {
        throw ParameterError("scope has no sequence extending " + (pos.empty() ? plus : minus).str());
    }
    for (int j : pos) row(coefficient_column(j, t, T)) += 1.0 / pos.size();
    for (int j : neg) row(coefficient_column(j, t, T)) -= 1.0 / neg.size();
    return row;
}

std::string tau_label(int t, const TreatmentSequence& history) {
    if (history.empty()) return "tau_" + std::to_string(t);
    return "tau_" + std::to_string(t) + "(" + history.str() + ")";
}

}  // namespace

EstimandSpec::EstimandSpec(int horizon, std::vector<TreatmentSequence> scope, Eigen::MatrixXd matrix,
                           std::vector<std::string> labels)
    : horizon_(horizon), scope_(std::move(scope)), matrix_(std::move(matrix)), labels_(std::move(labels)) {
    if (!std::is_sorted(scope_.begin(), scope_.end())) throw ShapeError("estimand scope must be sorted");
    if (matrix_.cols() != horizon_ * static_cast<Eigen::Index>(scope_.size())) {
        throw ShapeError("estimand matrix has " + std::to_string(matrix_.cols()) + " columns, expected " +
                         std::to_string(horizon_ * scope_.size()));
    }
    if (labels_.size() != static_cast<std::size_t>(matrix_.rows())) {
        throw ShapeError("estimand label count does not match its dimension");
    }
}

Eigen::MatrixXd EstimandSpec::weights(const TreatmentSequence& z) const {
    const int j = find_scope(scope_, z);
    if (j < 0) return Eigen::MatrixXd::Zero(dimension(), horizon_);
    return matrix_.middleCols(j * horizon_, horizon_);
}

PotentialOutcomeTable::PotentialOutcomeTable(std::vector<TreatmentSequence> scope,
                                             std::vector<Eigen::MatrixXd> outcomes)
    : scope_(std::move(scope)), outcomes_(std::move(outcomes)) {
    if (scope_.empty() || scope_.size() != outcomes_.size()) {
        throw ShapeError("outcome table needs one matrix per scope sequence");
    }
    if (!std::is_sorted(scope_.begin(), scope_.end())) throw ShapeError("table scope must be sorted");
    units_ = static_cast<int>(outcomes_[0].rows());
    horizon_ = scope_[0].length();
    for (std::size_t j = 0; j < scope_.size(); ++j) {
        if (outcomes_[j].rows() != units_ || outcomes_[j].cols() != horizon_ ||
            scope_[j].length() != horizon_) {
            throw ShapeError("outcome table is ragged at sequence " + scope_[j].str());
        }
        if (!outcomes_[j].allFinite()) throw ParameterError("outcome table has non-finite entries");
    }
}

int PotentialOutcomeTable::scope_index_or_throw(const TreatmentSequence& z) const {
    const int j = find_scope(scope_, z);
    if (j < 0) throw ShapeError("sequence " + z.str() + " is not in the table scope");
    return j;
}

const Eigen::MatrixXd& PotentialOutcomeTable::outcomes(const TreatmentSequence& z) const {
    return outcomes_[scope_index_or_throw(z)];
}

Eigen::VectorXd PotentialOutcomeTable::mean(const TreatmentSequence& z) const {
    return outcomes(z).colwise().mean().transpose();
}

Eigen::VectorXd PotentialOutcomeTable::stacked_means() const {
    Eigen::VectorXd g(horizon_ * scope_.size());
    for (std::size_t j = 0; j < scope_.size(); ++j) {
        g.segment(j * horizon_, horizon_) = outcomes_[j].colwise().mean().transpose();
    }
    return g;
}

Eigen::VectorXd PotentialOutcomeTable::stacked_unit(int i) const {
    Eigen::VectorXd g(horizon_ * scope_.size());
    for (std::size_t j = 0; j < scope_.size(); ++j) g.segment(j * horizon_, horizon_) = outcomes_[j].row(i).transpose();
    return g;
}

Eigen::MatrixXd PotentialOutcomeTable::covariance(const TreatmentSequence& z) const {
    if (units_ < 2) throw DegenerateSample("covariance needs at least two units");
    const Eigen::MatrixXd& Y = outcomes(z);
    const Eigen::MatrixXd centered = Y.rowwise() - Y.colwise().mean();
    return centered.transpose() * centered / double(units_ - 1);
}

EstimandSpec instantaneous_effect(int t, const TreatmentSequence& history, int T,
                                  const std::vector<TreatmentSequence>& scope) {
    if (t < 1 || t > T) throw IndexError("period " + std::to_string(t) + " outside [1," + std::to_string(T) + "]");
    if (history.length() != t - 1) {
        throw ShapeError("history for period " + std::to_string(t) + " must have length " + std::to_string(t - 1));
    }
    Eigen::MatrixXd B = contrast_row(t, history + 'A', history + 'B', T, scope);
    return EstimandSpec(T, scope, std::move(B), {tau_label(t, history)});
}

EstimandSpec carryover_effect(int t, int k, const TreatmentSequence& prefix, const TreatmentSequence& suffix,
                              int T, const std::vector<TreatmentSequence>& scope) {
    if (k == 0) {
        if (!suffix.empty()) throw ShapeError("order-0 carryover takes no suffix");
        return instantaneous_effect(t, prefix, T, scope);
    }
    if (k < 1 || k >= t || t > T) throw IndexError("carryover needs 1 <= k < t <= T");
    if (prefix.length() != t - k - 1 || suffix.length() != k) {
        throw ShapeError("carryover at t=" + std::to_string(t) + ", k=" + std::to_string(k) +
                         " needs prefix length " + std::to_string(t - k - 1) + " and suffix length " +
                         std::to_string(k));
    }
    Eigen::MatrixXd B = contrast_row(t, prefix + 'A' + suffix, prefix + 'B' + suffix, T, scope);
    std::string label = "tau_" + std::to_string(t) + "^" + std::to_string(k) + "(";
    label += prefix.empty() ? suffix.str() : prefix.str() + "," + suffix.str();
    label += ")";
    return EstimandSpec(T, scope, std::move(B), {label});
}

EstimandSpec linear_combination(const std::vector<EstimandSpec>& specs, const std::vector<double>& coefficients,
                                std::string label) {
    if (specs.empty() || specs.size() != coefficients.size()) {
        throw ShapeError("need one coefficient per estimand spec");
    }
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(specs[0].dimension(), specs[0].matrix().cols());
    for (std::size_t j = 0; j < specs.size(); ++j) {
        require_same_layout(specs[0], specs[j]);
        if (specs[j].dimension() != specs[0].dimension()) throw ShapeError("estimand dimensions differ");
        B += coefficients[j] * specs[j].matrix();
    }
    std::vector<std::string> labels(specs[0].dimension(), label);
    if (label.empty()) labels = specs[0].labels();
    return EstimandSpec(specs[0].horizon(), specs[0].scope(), std::move(B), std::move(labels));
}

EstimandSpec marginal_effect(const std::vector<EstimandSpec>& specs, const std::vector<double>& weights,
                             std::string label) {
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ParameterError("marginal weights must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ParameterError("marginal weights must sum to 1");
    if (label.empty() && specs.size() > 1) {
        label = "marginal(";
        for (std::size_t j = 0; j < specs.size(); ++j) label += (j ? ";" : "") + specs[j].labels()[0];
        label += ")";
    }
    return linear_combination(specs, weights, std::move(label));
}

EstimandSpec stack(const std::vector<EstimandSpec>& specs) {
    if (specs.empty()) throw ShapeError("nothing to stack");
    Eigen::Index rows = 0;
    for (const auto& s : specs) {
        require_same_layout(specs[0], s);
        rows += s.dimension();
    }
    Eigen::MatrixXd B(rows, specs[0].matrix().cols());
    std::vector<std::string> labels;
    Eigen::Index r = 0;
    for (const auto& s : specs) {
        B.middleRows(r, s.dimension()) = s.matrix();
        r += s.dimension();
        labels.insert(labels.end(), s.labels().begin(), s.labels().end());
    }
    return EstimandSpec(specs[0].horizon(), specs[0].scope(), std::move(B), std::move(labels));
}

EstimandSpec all_instantaneous_effects(int T, const std::vector<TreatmentSequence>& scope) {
    std::vector<EstimandSpec> specs{instantaneous_effect(1, TreatmentSequence(), T, scope)};
    for (int t = 2; t <= T; ++t) {
        for (const auto& h : full_sequence_set(t - 1)) specs.push_back(instantaneous_effect(t, h, T, scope));
    }
    return stack(specs);
}

EstimandSpec two_period_effects(const std::vector<TreatmentSequence>& scope) {
    const TreatmentSequence none, a("A"), b("B");
    return stack({instantaneous_effect(1, none, 2, scope), instantaneous_effect(2, a, 2, scope),
                  instantaneous_effect(2, b, 2, scope), carryover_effect(2, 1, none, a, 2, scope),
                  carryover_effect(2, 1, none, b, 2, scope)});
}

namespace {

void require_table_layout(const EstimandSpec& spec, const PotentialOutcomeTable& table) {
    if (spec.horizon() != table.horizon() || spec.scope() != table.scope()) {
        throw ShapeError("estimand and outcome table disagree on horizon or scope");
    }
}

}  // namespace

Eigen::VectorXd true_value(const EstimandSpec& spec, const PotentialOutcomeTable& table) {
    require_table_layout(spec, table);
    return spec.matrix() * table.stacked_means();
}

Eigen::VectorXd individual_effect(const EstimandSpec& spec, const PotentialOutcomeTable& table, int i) {
    require_table_layout(spec, table);
    return spec.matrix() * table.stacked_unit(i);
}

Eigen::MatrixXd individual_effect_covariance(const EstimandSpec& spec, const PotentialOutcomeTable& table) {
    require_table_layout(spec, table);
    const int N = table.units();
    if (N < 2) throw DegenerateSample("individual-effect covariance needs at least two units");
    Eigen::MatrixXd theta(N, spec.dimension());
    for (int i = 0; i < N; ++i) theta.row(i) = (spec.matrix() * table.stacked_unit(i)).transpose();
    const Eigen::MatrixXd centered = theta.rowwise() - theta.colwise().mean();
    return centered.transpose() * centered / double(N - 1);
}

}  // namespace crossover
