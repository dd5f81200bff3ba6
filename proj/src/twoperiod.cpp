#include "crossover/twoperiod.hpp"

#include <algorithm>

#include "crossover/errors.hpp"

namespace crossover {

const GroupSummary& TwoPeriodSummary::group(const std::string& z) const {
    auto it = groups.find(TreatmentSequence(z));
    if (it == groups.end() || it->second.count < 1) throw MissingSequence("group " + z + " is not populated");
    return it->second;
}

bool TwoPeriodSummary::has(const std::string& z) const {
    auto it = groups.find(TreatmentSequence(z));
    return it != groups.end() && it->second.count > 0;
}

double TwoPeriodResult::at(const std::string& label) const {
    for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] == label) return estimates(j);
    }
    throw ParameterError("no estimate labelled " + label);
}

TwoPeriodSummary summarize(const ObservedDataset& data, const WeightModel& weights) {
    if (data.horizon() != 2) throw ShapeError("two-period summaries need T = 2");
    TwoPeriodSummary s;
    for (const auto& [z, mean] : sequence_means(data)) {
        GroupSummary g;
        g.count = static_cast<int>(data.units_of(z).size());
        g.mean = mean;
        auto it = weights.omega.find(z);
        if (it == weights.omega.end()) throw MissingSequence("no covariance for group " + z.str());
        g.covariance = it->second;
        s.groups.emplace(z, g);
    }
    return s;
}

namespace {

const char* kFour[] = {"AA", "AB", "BA", "BB"};
const char* kTwo[] = {"AB", "BA"};

std::vector<std::string> observed_names(const TwoPeriodSummary& s) {
    std::vector<std::string> names;
    for (const auto& [z, g] : s.groups) {
        if (g.count > 0) names.push_back(z.str());
    }
    return names;
}

void require_groups(const TwoPeriodSummary& s, std::initializer_list<const char*> expected) {
    const auto names = observed_names(s);
    std::vector<std::string> want(expected.begin(), expected.end());
    if (names != want) {
        std::string msg = "expected populated groups";
        for (const auto& w : want) msg += " " + w;
        throw MissingSequence(msg);
    }
}

// Column of w_t(z) in the weight vector; groups are the populated ones in lexicographic order.
int wcol(const TwoPeriodSummary& s, const std::string& z, int t) {
    const auto names = observed_names(s);
    const auto it = std::find(names.begin(), names.end(), z);
    return static_cast<int>(it - names.begin()) * 2 + (t - 1);
}

Eigen::VectorXd stacked_means(const TwoPeriodSummary& s) {
    const auto names = observed_names(s);
    Eigen::VectorXd y(2 * names.size());
    for (std::size_t j = 0; j < names.size(); ++j) y.segment<2>(2 * j) = s.group(names[j]).mean;
    return y;
}

Eigen::MatrixXd objective_matrix(const TwoPeriodSummary& s) {
    const auto names = observed_names(s);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(2 * names.size(), 2 * names.size());
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto& g = s.group(names[j]);
        Q.block<2, 2>(2 * j, 2 * j) = g.covariance / double(g.count);
    }
    return Q;
}

// Unbiasedness: mean of w' Yhat equals target' theta whenever Ybar(z) = P_z theta.
// param(z, t) names the coordinate of theta that Ybar_t(z) equals.
template <class Param>
Eigen::MatrixXd unbiasedness_rows(const TwoPeriodSummary& s, int p, Param param) {
    const auto names = observed_names(s);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, 2 * names.size());
    for (const auto& z : names) {
        for (int t = 1; t <= 2; ++t) A(param(z, t), wcol(s, z, t)) += 1.0;
    }
    return A;
}

TwoPeriodResult finish(const TwoPeriodSummary& s, std::vector<std::string> labels, Eigen::MatrixXd W) {
    TwoPeriodResult r;
    r.labels = std::move(labels);
    const Eigen::VectorXd y = stacked_means(s);
    const Eigen::MatrixXd Q = objective_matrix(s);
    r.estimates = W * y;
    r.variances.resize(W.rows());
    for (Eigen::Index k = 0; k < W.rows(); ++k) r.variances(k) = W.row(k).dot(Q * W.row(k).transpose());
    r.weights = std::move(W);
    return r;
}

TwoPeriodResult solve_targets(const TwoPeriodSummary& s, const Eigen::MatrixXd& A,
                              const std::vector<std::pair<std::string, Eigen::VectorXd>>& targets) {
    Eigen::MatrixXd W(targets.size(), A.cols());
    std::vector<std::string> labels;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        W.row(k) = min_variance_weights(s, A, targets[k].second).transpose();
        labels.push_back(targets[k].first);
    }
    return finish(s, std::move(labels), std::move(W));
}

Eigen::VectorXd unit(int p, std::initializer_list<std::pair<int, double>> entries) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
    for (const auto& [i, x] : entries) v(i) = x;
    return v;
}

}  // namespace

Eigen::VectorXd min_variance_weights(const TwoPeriodSummary& s, const Eigen::MatrixXd& A, const Eigen::VectorXd& c) {
    const Eigen::MatrixXd Q = objective_matrix(s);
    const int n = static_cast<int>(Q.rows());
    const int m = static_cast<int>(A.rows());
    if (A.cols() != n || c.size() != m) throw ShapeError("weight constraints do not match the group layout");
    for (int j = 0; j < n; j += 2) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Eigen::Matrix2d(Q.block<2, 2>(j, j)));
        if (es.eigenvalues()(0) <= 0.0) throw ConditioningError("group covariance is not positive definite");
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = 2.0 * Q;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
    rhs.tail(m) = c;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) throw ConditioningError("weight quadratic program is singular");
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (!sol.allFinite()) throw ConditioningError("weight quadratic program produced non-finite values");
    return sol.head(n);
}

TwoPeriodResult blue_4seq_scenario_a(const TwoPeriodSummary& s) {
    require_groups(s, {"AA", "AB", "BA", "BB"});
    // theta = (mu_1A, mu_1B, mu_2AA, mu_2AB, mu_2BA, mu_2BB)
    auto param = [](const std::string& z, int t) {
        if (t == 1) return z[0] == 'A' ? 0 : 1;
        return 2 + static_cast<int>(std::find(std::begin(kFour), std::end(kFour), z) - std::begin(kFour));
    };
    const Eigen::MatrixXd A = unbiasedness_rows(s, 6, param);
    return solve_targets(s, A,
                         {{"tau_1", unit(6, {{0, 1}, {1, -1}})},
                          {"tau_2(A)", unit(6, {{2, 1}, {3, -1}})},
                          {"tau_2(B)", unit(6, {{4, 1}, {5, -1}})},
                          {"tau_2^1(A)", unit(6, {{2, 1}, {4, -1}})},
                          {"tau_2^1(B)", unit(6, {{3, 1}, {5, -1}})}});
}

TwoPeriodResult blue_4seq_scenario_b(const TwoPeriodSummary& s) {
    require_groups(s, {"AA", "AB", "BA", "BB"});
    // theta = (mu_1A, mu_1B, mu_2A, mu_2B)
    auto param = [](const std::string& z, int t) { return (t - 1) * 2 + (z[t - 1] == 'A' ? 0 : 1); };
    const Eigen::MatrixXd A = unbiasedness_rows(s, 4, param);
    return solve_targets(s, A, {{"tau_1", unit(4, {{0, 1}, {1, -1}})}, {"tau_2", unit(4, {{2, 1}, {3, -1}})}});
}

TwoPeriodResult blue_4seq_scenario_c(const TwoPeriodSummary& s) {
    require_groups(s, {"AA", "AB", "BA", "BB"});
    // sum_z w_1(z) = 0, sum_z w_2(z) = 0, w_1(AA) + w_1(AB) + w_2(AA) + w_2(BA) = 1.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 8);
    for (const char* z : kFour) {
        A(0, wcol(s, z, 1)) = 1.0;
        A(1, wcol(s, z, 2)) = 1.0;
    }
    A(2, wcol(s, "AA", 1)) = 1.0;
    A(2, wcol(s, "AB", 1)) = 1.0;
    A(2, wcol(s, "AA", 2)) = 1.0;
    A(2, wcol(s, "BA", 2)) = 1.0;
    return solve_targets(s, A, {{"tau", unit(3, {{2, 1}})}});
}

TwoPeriodResult blue_2seq_scenario_a(const TwoPeriodSummary& s) {
    require_groups(s, {"AB", "BA"});
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(1, 4);
    W(0, wcol(s, "AB", 1)) = 1.0;
    W(0, wcol(s, "BA", 1)) = -1.0;
    auto r = finish(s, {"tau_1"}, std::move(W));
    r.not_estimable = {"tau_2(A)", "tau_2(B)", "tau_2^1(A)", "tau_2^1(B)"};
    return r;
}

TwoPeriodResult blue_2seq_scenario_b(const TwoPeriodSummary& s) {
    require_groups(s, {"AB", "BA"});
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(2, 4);
    W(0, wcol(s, "AB", 1)) = 1.0;
    W(0, wcol(s, "BA", 1)) = -1.0;
    W(1, wcol(s, "BA", 2)) = 1.0;
    W(1, wcol(s, "AB", 2)) = -1.0;
    return finish(s, {"tau_1", "tau_2"}, std::move(W));
}

TwoPeriodResult blue_2seq_scenario_c(const TwoPeriodSummary& s) {
    require_groups(s, {"AB", "BA"});
    const auto& ab = s.group("AB");
    const auto& ba = s.group("BA");
    auto num = [](const GroupSummary& g) { return (g.covariance(1, 1) + g.covariance(0, 1)) / g.count; };
    auto den = [](const GroupSummary& g) {
        return (g.covariance(0, 0) + g.covariance(1, 1) + 2.0 * g.covariance(0, 1)) / g.count;
    };
    const double denominator = den(ab) + den(ba);
    if (!(denominator > 0.0)) throw ConditioningError("p is undefined: zero variance of tau1 - tau2");
    const double p = (num(ab) + num(ba)) / denominator;
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(3, 4);
    W(1, wcol(s, "AB", 1)) = 1.0;
    W(1, wcol(s, "BA", 1)) = -1.0;
    W(2, wcol(s, "BA", 2)) = 1.0;
    W(2, wcol(s, "AB", 2)) = -1.0;
    W.row(0) = p * W.row(1) + (1.0 - p) * W.row(2);
    auto r = finish(s, {"tau", "tau_1", "tau_2"}, std::move(W));
    r.p = p;
    return r;
}

TwoPeriodResult count_weighted_4seq_scenario_a(const TwoPeriodSummary& s) {
    require_groups(s, {"AA", "AB", "BA", "BB"});
    auto n = [&](const char* z) { return double(s.group(z).count); };
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(5, 8);
    W(0, wcol(s, "AA", 1)) = n("AA") / (n("AA") + n("AB"));
    W(0, wcol(s, "AB", 1)) = n("AB") / (n("AA") + n("AB"));
    W(0, wcol(s, "BA", 1)) = -n("BA") / (n("BA") + n("BB"));
    W(0, wcol(s, "BB", 1)) = -n("BB") / (n("BA") + n("BB"));
    W(1, wcol(s, "AA", 2)) = 1.0;
    W(1, wcol(s, "AB", 2)) = -1.0;
    W(2, wcol(s, "BA", 2)) = 1.0;
    W(2, wcol(s, "BB", 2)) = -1.0;
    W(3, wcol(s, "AA", 2)) = 1.0;
    W(3, wcol(s, "BA", 2)) = -1.0;
    W(4, wcol(s, "AB", 2)) = 1.0;
    W(4, wcol(s, "BB", 2)) = -1.0;
    return finish(s, {"tau_1", "tau_2(A)", "tau_2(B)", "tau_2^1(A)", "tau_2^1(B)"}, std::move(W));
}

TwoPeriodResult count_weighted_4seq_scenario_b(const TwoPeriodSummary& s) {
    auto first = count_weighted_4seq_scenario_a(s);
    auto n = [&](const char* z) { return double(s.group(z).count); };
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(2, 8);
    W.row(0) = first.weights.row(0);
    W(1, wcol(s, "AA", 2)) = n("AA") / (n("AA") + n("BA"));
    W(1, wcol(s, "BA", 2)) = n("BA") / (n("AA") + n("BA"));
    W(1, wcol(s, "AB", 2)) = -n("AB") / (n("AB") + n("BB"));
    W(1, wcol(s, "BB", 2)) = -n("BB") / (n("AB") + n("BB"));
    return finish(s, {"tau_1", "tau_2"}, std::move(W));
}

TwoPeriodResult closed_form(const TwoPeriodSummary& s, Scenario scenario) {
    const auto names = observed_names(s);
    const bool four = names == std::vector<std::string>(std::begin(kFour), std::end(kFour));
    const bool two = names == std::vector<std::string>(std::begin(kTwo), std::end(kTwo));
    if (four) {
        switch (scenario) {
            case Scenario::a: return blue_4seq_scenario_a(s);
            case Scenario::b: return blue_4seq_scenario_b(s);
            case Scenario::c: return blue_4seq_scenario_c(s);
        }
    }
    if (two) {
        switch (scenario) {
            case Scenario::a: return blue_2seq_scenario_a(s);
            case Scenario::b: return blue_2seq_scenario_b(s);
            case Scenario::c: return blue_2seq_scenario_c(s);
        }
    }
    throw MissingSequence("closed forms cover the four-sequence and AB/BA designs only");
}

TwoPeriodResult conservative_variances(const TwoPeriodSummary& s, Scenario scenario) {
    return closed_form(s, scenario);
}

double two_sequence_combination_variance(const TwoPeriodSummary& s, double p) {
    require_groups(s, {"AB", "BA"});
    Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
    w(wcol(s, "AB", 1)) = p;
    w(wcol(s, "BA", 1)) = -p;
    w(wcol(s, "BA", 2)) = 1.0 - p;
    w(wcol(s, "AB", 2)) = -(1.0 - p);
    return w.dot(objective_matrix(s) * w);
}

}  // namespace crossover
