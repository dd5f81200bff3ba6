#pragma once

#include <initializer_list>
#include <random>
#include <string>
#include <utility>

#include "crossover/constraints.hpp"
#include "crossover/estimands.hpp"
#include "crossover/sequences.hpp"
#include "oracles.hpp"

namespace support {

using namespace crossover;

inline CrossoverDesign make_design(int T, std::initializer_list<std::pair<const char*, int>> counts,
                                   std::optional<std::vector<TreatmentSequence>> scope = std::nullopt) {
    std::map<TreatmentSequence, int> m;
    for (const auto& [z, n] : counts) m.emplace(TreatmentSequence(z), n);
    return CrossoverDesign(T, std::move(m), std::move(scope));
}

inline std::vector<TreatmentSequence> seqs(std::initializer_list<const char*> words) {
    std::vector<TreatmentSequence> out;
    for (const char* w : words) out.emplace_back(w);
    return out;
}

// Each unit's stacked outcomes are a random point of ker(C), so every unit obeys the restrictions.
inline PotentialOutcomeTable random_table(const RestrictionMatrix& C, int N, std::mt19937_64& rng, double spread = 1.0) {
    const int T = C.horizon;
    const int p = T * static_cast<int>(C.scope.size());
    const Eigen::MatrixXd Z = oracle::null_space(C.rows, p);
    std::normal_distribution<double> g;
    std::vector<Eigen::MatrixXd> Y(C.scope.size(), Eigen::MatrixXd(N, T));
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd u(Z.cols());
        for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = spread * g(rng);
        const Eigen::VectorXd y = Z * u;
        for (std::size_t s = 0; s < C.scope.size(); ++s) {
            for (int t = 1; t <= T; ++t) Y[s](i, t - 1) = y(coefficient_column(static_cast<int>(s), t, T));
        }
    }
    return PotentialOutcomeTable(C.scope, std::move(Y));
}

inline PotentialOutcomeTable restrict_table(const PotentialOutcomeTable& table, const std::vector<TreatmentSequence>& scope) {
    std::vector<Eigen::MatrixXd> Y;
    for (const auto& z : scope) Y.push_back(table.outcomes(z));
    return PotentialOutcomeTable(scope, std::move(Y));
}

}  // namespace support
