#include "crossover/identification.hpp"

#include <map>
#include <set>

#include "crossover/errors.hpp"
#include "crossover/estimands.hpp"

namespace crossover {

Eigen::MatrixXd regressor_block(const CrossoverDesign& design, const TreatmentSequence& z) {
    const int T = design.horizon();
    const auto j = design.scope_index(z);
    if (!j) throw ShapeError("sequence " + z.str() + " is not in the design scope");
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(T, design.dimension());
    X.middleCols(*j * T, T).setIdentity();
    return X;
}

Eigen::MatrixXd gram_plus_restriction(const CrossoverDesign& design, const RestrictionMatrix& C) {
    const int n = design.dimension();
    if (C.rows.cols() != n || C.scope != design.scope() || C.horizon != design.horizon()) {
        throw ShapeError("restriction matrix does not match the design layout");
    }
    Eigen::MatrixXd M = C.rows.transpose() * C.rows;
    const int T = design.horizon();
    for (const auto& [z, count] : design.counts()) {
        const int j = *design.scope_index(z);
        M.block(j * T, j * T, T, T).diagonal().array() += count;
    }
    return M;
}

int numerical_rank_svd(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double tol = 1e-8 * s(0) * std::max(M.rows(), M.cols());
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > tol;
    return rank;
}

IdentifiabilityReport is_identifiable(const CrossoverDesign& design, const RestrictionMatrix& C) {
    const Eigen::MatrixXd M = gram_plus_restriction(design, C);
    IdentifiabilityReport r;
    r.dimension = static_cast<int>(M.rows());
    r.rank = numerical_rank_svd(M);
    r.identifiable = r.rank == r.dimension;
    return r;
}

namespace {

std::optional<TreatmentSequence> first_match(const TreatmentSequence& target, const CrossoverDesign& design,
                                             int from, int to) {
    if (design.observed(target)) return target;
    const auto key = subsequence(target, from, to);
    for (const auto& z : design.observed_sequences()) {
        if (subsequence(z, from, to) == key) return z;
    }
    return std::nullopt;
}

void check_period(const TreatmentSequence& target, int t, const CrossoverDesign& design) {
    if (target.length() != design.horizon()) throw ShapeError("target " + target.str() + " has wrong length");
    if (t < 1 || t > design.horizon()) throw IndexError("period " + std::to_string(t) + " out of range");
}

}  // namespace

std::optional<TreatmentSequence> mean_identifiable_s1(const TreatmentSequence& target, int t,
                                                      const CrossoverDesign& design) {
    check_period(target, t, design);
    return first_match(target, design, 1, t);
}

std::optional<TreatmentSequence> mean_identifiable_s2(const TreatmentSequence& target, int t, int k,
                                                      const CrossoverDesign& design) {
    check_period(target, t, design);
    if (k < 1) throw ParameterError("carryover order must be at least 1");
    if (t <= k) return first_match(target, design, 1, t);
    return first_match(target, design, t - k + 1, t);
}

int Derivation::depth() const {
    int d = 0;
    for (const auto& [sign, child] : terms) d = std::max(d, child->depth());
    return d + 1;
}

std::string Derivation::summary() const {
    const std::string name = "Y" + std::to_string(period) + "(" + key.str() + ")";
    if (is_leaf()) return name + "@" + (witness ? witness->str() : "?");
    std::string out;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        const auto& [sign, child] = terms[j];
        if (j > 0 || sign < 0) out += sign < 0 ? (j ? " - " : "-") : " + ";
        out += child->is_leaf() ? child->summary() : "(" + child->summary() + ")";
    }
    return out;
}

std::optional<Derivation> mean_identifiable_s3(const TreatmentSequence& target, int t, int k,
                                               const CrossoverDesign& design) {
    check_period(target, t, design);
    if (k < 1 || k > design.horizon()) throw ParameterError("carryover order must satisfy 1 <= k <= T");
    const int T = design.horizon();
    using Key = std::pair<int, TreatmentSequence>;

    std::vector<std::set<TreatmentSequence>> universe(T + 1);
    for (const auto& z : design.scope()) {
        for (int s = 1; s <= T; ++s) universe[s].insert(window_key(z, s, k));
    }
    universe[t].insert(window_key(target, t, k));

    std::map<Key, std::shared_ptr<const Derivation>> known;
    for (const auto& z : design.observed_sequences()) {
        for (int s = 1; s <= T; ++s) {
            Key key{s, window_key(z, s, k)};
            if (known.count(key)) continue;
            auto leaf = std::make_shared<Derivation>();
            leaf->period = s;
            leaf->key = key.second;
            leaf->witness = z;
            known.emplace(key, std::move(leaf));
        }
    }

    // Ybar_s(w) = Ybar_u(w) - Ybar_u(v) + Ybar_s(v) for s, u >= k; iterate to the least fixed point.
    bool grew = true;
    while (grew) {
        grew = false;
        for (int s = k; s <= T; ++s) {
            for (const auto& w : universe[s]) {
                if (known.count({s, w})) continue;
                for (int u = k; u <= T && !known.count({s, w}); ++u) {
                    if (u == s || !known.count({u, w})) continue;
                    for (const auto& v : universe[s]) {
                        if (v == w || !known.count({s, v}) || !known.count({u, v})) continue;
                        auto node = std::make_shared<Derivation>();
                        node->period = s;
                        node->key = w;
                        node->terms = {{+1, known.at({u, w})}, {-1, known.at({u, v})}, {+1, known.at({s, v})}};
                        known.emplace(Key{s, w}, std::move(node));
                        grew = true;
                        break;
                    }
                }
            }
        }
    }

    auto it = known.find({t, window_key(target, t, k)});
    if (it == known.end()) return std::nullopt;
    Derivation out = *it->second;
    if (out.is_leaf()) out.witness = mean_identifiable_s2(target, t, k, design);
    return out;
}

std::vector<MeanVerdict> mean_identification_table(const CrossoverDesign& design, Scenario scenario, int k) {
    std::vector<MeanVerdict> out;
    for (const auto& z : design.scope()) {
        for (int t = 1; t <= design.horizon(); ++t) {
            MeanVerdict v{z, t, false, "not identified by these conditions"};
            if (scenario == Scenario::c) {
                if (auto d = mean_identifiable_s3(z, t, k, design)) {
                    v.identified = true;
                    v.detail = d->summary();
                }
            } else {
                auto w = scenario == Scenario::a ? mean_identifiable_s1(z, t, design)
                                                 : mean_identifiable_s2(z, t, k, design);
                if (w) {
                    v.identified = true;
                    v.detail = "witness " + w->str();
                }
            }
            out.push_back(std::move(v));
        }
    }
    return out;
}

}  // namespace crossover
