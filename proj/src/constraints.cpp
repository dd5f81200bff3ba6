#include "crossover/constraints.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "crossover/errors.hpp"
#include "crossover/estimands.hpp"

namespace crossover {

Scenario parse_scenario(const std::string& text) {
    if (text == "a") return Scenario::a;
    if (text == "b") return Scenario::b;
    if (text == "c") return Scenario::c;
    throw ParameterError("scenario must be a, b or c, got \"" + text + "\"");
}

char scenario_tag(Scenario s) { return s == Scenario::a ? 'a' : s == Scenario::b ? 'b' : 'c'; }

TreatmentSequence prefix_key(const TreatmentSequence& z, int t) { return subsequence(z, 1, t); }

TreatmentSequence window_key(const TreatmentSequence& z, int t, int k) {
    return subsequence(z, std::max(1, t - k + 1), t);
}

namespace {

using Classes = std::map<TreatmentSequence, std::vector<int>>;

void append_chain_rows(std::vector<Eigen::RowVectorXd>& out, const Classes& classes, int t, int T, int n) {
    for (const auto& [key, members] : classes) {
        for (std::size_t m = 0; m + 1 < members.size(); ++m) {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
            row(coefficient_column(members[m], t, T)) = 1.0;
            row(coefficient_column(members[m + 1], t, T)) = -1.0;
            out.push_back(std::move(row));
        }
    }
}

Eigen::MatrixXd to_matrix(const std::vector<Eigen::RowVectorXd>& rows, int n) {
    Eigen::MatrixXd C(rows.size(), n);
    for (std::size_t r = 0; r < rows.size(); ++r) C.row(r) = rows[r];
    return C;
}

void check_inputs(int T, const std::vector<TreatmentSequence>& scope) {
    if (T < 1) throw BoundedHorizonError("horizon must be at least 1");
    if (!std::is_sorted(scope.begin(), scope.end())) throw ShapeError("scope must be sorted");
    for (const auto& z : scope) {
        if (z.length() != T) throw ShapeError("scope sequence " + z.str() + " has wrong length");
    }
}

void check_order(int T, int k) {
    if (k < 1 || k > T) throw ParameterError("carryover order must satisfy 1 <= k <= T");
}

Classes window_classes(const std::vector<TreatmentSequence>& scope, int t, int k) {
    Classes classes;
    for (int j = 0; j < static_cast<int>(scope.size()); ++j) classes[window_key(scope[j], t, k)].push_back(j);
    return classes;
}

}  // namespace

Eigen::MatrixXd rows_no_anticipation(int T, const std::vector<TreatmentSequence>& scope) {
    check_inputs(T, scope);
    const int n = T * static_cast<int>(scope.size());
    std::vector<Eigen::RowVectorXd> rows;
    for (int t = 1; t < T; ++t) {
        Classes classes;
        for (int j = 0; j < static_cast<int>(scope.size()); ++j) classes[prefix_key(scope[j], t)].push_back(j);
        append_chain_rows(rows, classes, t, T, n);
    }
    return to_matrix(rows, n);
}

Eigen::MatrixXd rows_no_carryover(int T, const std::vector<TreatmentSequence>& scope, int k) {
    check_inputs(T, scope);
    check_order(T, k);
    const int n = T * static_cast<int>(scope.size());
    std::vector<Eigen::RowVectorXd> rows;
    for (int t = k; t <= T; ++t) append_chain_rows(rows, window_classes(scope, t, k), t, T, n);
    return to_matrix(rows, n);
}

Eigen::MatrixXd rows_time_invariant(int T, const std::vector<TreatmentSequence>& scope, int k) {
    check_inputs(T, scope);
    check_order(T, k);
    const int n = T * static_cast<int>(scope.size());
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<Classes> classes(T + 1);
    for (int t = k; t <= T; ++t) classes[t] = window_classes(scope, t, k);
    for (int t = k; t <= T; ++t) {
        for (int u = t + 1; u <= T; ++u) {
            std::vector<TreatmentSequence> shared;
            for (const auto& [w, members] : classes[t]) {
                if (classes[u].count(w)) shared.push_back(w);
            }
            for (std::size_t p = 0; p < shared.size(); ++p) {
                for (std::size_t q = p + 1; q < shared.size(); ++q) {
                    const auto& w = shared[p];
                    const auto& v = shared[q];
                    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
                    row(coefficient_column(classes[t][w].front(), t, T)) += 1.0;
                    row(coefficient_column(classes[t][v].front(), t, T)) -= 1.0;
                    row(coefficient_column(classes[u][w].front(), u, T)) -= 1.0;
                    row(coefficient_column(classes[u][v].front(), u, T)) += 1.0;
                    rows.push_back(std::move(row));
                }
            }
        }
    }
    return to_matrix(rows, n);
}

int matrix_rank(const Eigen::MatrixXd& A, double relative_tolerance) {
    if (A.size() == 0) return 0;
    const double scale = A.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(relative_tolerance);
    const auto& R = qr.matrixR();
    int rank = 0;
    for (Eigen::Index i = 0; i < std::min(A.rows(), A.cols()); ++i) {
        if (std::abs(R(i, i)) > relative_tolerance * scale) ++rank;
    }
    return rank;
}

Eigen::MatrixXd row_reduce(const Eigen::MatrixXd& C) {
    if (C.rows() == 0 || C.cwiseAbs().maxCoeff() == 0.0) return Eigen::MatrixXd(0, C.cols());
    const double scale = C.cwiseAbs().maxCoeff();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(C.transpose());
    const auto& R = qr.matrixR();
    std::vector<int> keep;
    for (Eigen::Index i = 0; i < std::min(R.rows(), R.cols()); ++i) {
        if (std::abs(R(i, i)) <= 1e-10 * scale) break;
        keep.push_back(qr.colsPermutation().indices()(i));
    }
    std::sort(keep.begin(), keep.end());
    Eigen::MatrixXd out(keep.size(), C.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) out.row(r) = C.row(keep[r]);
    return out;
}

RestrictionMatrix assemble(Scenario scenario, int T, const std::vector<TreatmentSequence>& scope, int k) {
    check_inputs(T, scope);
    std::vector<Eigen::MatrixXd> parts{rows_no_anticipation(T, scope)};
    if (scenario != Scenario::a) {
        check_order(T, k);
        parts.push_back(rows_no_carryover(T, scope, k));
    }
    if (scenario == Scenario::c) parts.push_back(rows_time_invariant(T, scope, k));
    Eigen::Index total = 0;
    for (const auto& p : parts) total += p.rows();
    Eigen::MatrixXd raw(total, T * static_cast<Eigen::Index>(scope.size()));
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        raw.middleRows(r, p.rows()) = p;
        r += p.rows();
    }
    return RestrictionMatrix{row_reduce(raw), T, scope, scenario, scenario == Scenario::a ? 0 : k};
}

RestrictionMatrix with_extra_rows(const RestrictionMatrix& C, const Eigen::MatrixXd& extra) {
    if (extra.cols() != C.rows.cols()) throw ShapeError("extra restriction rows have the wrong width");
    Eigen::MatrixXd raw(C.rows.rows() + extra.rows(), C.rows.cols());
    raw << C.rows, extra;
    RestrictionMatrix out = C;
    out.rows = row_reduce(raw);
    return out;
}

std::string restriction_csv(const RestrictionMatrix& C) {
    std::ostringstream os;
    const int T = C.horizon;
    for (std::size_t j = 0; j < C.scope.size(); ++j) {
        for (int t = 1; t <= T; ++t) os << (j || t > 1 ? "," : "") << "g" << t << "_" << C.scope[j].str();
    }
    os << "\n";
    for (Eigen::Index r = 0; r < C.rows.rows(); ++r) {
        for (Eigen::Index c = 0; c < C.rows.cols(); ++c) os << (c ? "," : "") << C.rows(r, c);
        os << "\n";
    }
    return os.str();
}

}  // namespace crossover
