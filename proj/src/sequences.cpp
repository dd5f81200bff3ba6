#include "crossover/sequences.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>

#include "crossover/errors.hpp"

namespace crossover {

TreatmentSequence::TreatmentSequence(std::string letters) : letters_(std::move(letters)) {
    for (char c : letters_) {
        if (c != 'A' && c != 'B') {
            throw ParseError(std::string("unknown treatment symbol '") + c + "' in \"" +
                             letters_ + "\"");
        }
    }
}

char TreatmentSequence::at(int t) const {
    if (t < 1 || t > length()) throw IndexError("period " + std::to_string(t) + " out of range");
    return letters_[t - 1];
}

TreatmentSequence TreatmentSequence::operator+(const TreatmentSequence& rhs) const {
    return TreatmentSequence(letters_ + rhs.letters_);
}

TreatmentSequence TreatmentSequence::operator+(char letter) const {
    return TreatmentSequence(letters_ + letter);
}

std::vector<TreatmentSequence> full_sequence_set(int T) {
    if (T < 1 || T > kMaxHorizon) {
        throw BoundedHorizonError("horizon " + std::to_string(T) + " outside [1, " +
                                  std::to_string(kMaxHorizon) + "]");
    }
    std::vector<TreatmentSequence> out;
    out.reserve(std::size_t{1} << T);
    for (std::uint32_t mask = 0; mask < (1u << T); ++mask) {
        std::string s(T, 'A');
        for (int t = 0; t < T; ++t) {
            if (mask & (1u << (T - 1 - t))) s[t] = 'B';
        }
        out.emplace_back(std::move(s));
    }
    return out;
}

TreatmentSequence subsequence(const TreatmentSequence& z, int t1, int t2) {
    const int T = z.length();
    if (t1 < 1 || t1 > T || t2 < 1 || t2 > T) {
        throw IndexError("subsequence [" + std::to_string(t1) + "," + std::to_string(t2) +
                         "] outside [1," + std::to_string(T) + "]");
    }
    if (t1 > t2) return TreatmentSequence();
    return TreatmentSequence(z.str().substr(t1 - 1, t2 - t1 + 1));
}

CrossoverDesign::CrossoverDesign(int horizon, std::map<TreatmentSequence, int> counts,
                                 std::optional<std::vector<TreatmentSequence>> scope)
    : horizon_(horizon) {
    if (horizon < 1) throw BoundedHorizonError("horizon must be at least 1");
    for (auto& [z, n] : counts) {
        if (z.length() != horizon) {
            throw ShapeError("sequence " + z.str() + " has length " + std::to_string(z.length()) +
                             ", expected " + std::to_string(horizon));
        }
        if (n < 0) throw ParameterError("negative count for " + z.str());
        if (n == 0) continue;
        counts_.emplace(z, n);
        observed_.push_back(z);
        total_ += n;
    }
    if (total_ <= 0) throw ParameterError("design has no units");

    if (scope) {
        std::set<TreatmentSequence> s(scope->begin(), scope->end());
        for (const auto& z : s) {
            if (z.length() != horizon) throw ShapeError("scope sequence " + z.str() + " has wrong length");
        }
        for (const auto& z : observed_) {
            if (!s.count(z)) throw ShapeError("observed sequence " + z.str() + " missing from scope");
        }
        scope_.assign(s.begin(), s.end());
    } else {
        scope_ = full_sequence_set(horizon);
    }
}

int CrossoverDesign::count(const TreatmentSequence& z) const {
    auto it = counts_.find(z);
    return it == counts_.end() ? 0 : it->second;
}

std::optional<int> CrossoverDesign::scope_index(const TreatmentSequence& z) const {
    auto it = std::lower_bound(scope_.begin(), scope_.end(), z);
    if (it == scope_.end() || *it != z) return std::nullopt;
    return static_cast<int>(it - scope_.begin());
}

CrossoverDesign CrossoverDesign::with_scope(std::vector<TreatmentSequence> scope) const {
    return CrossoverDesign(horizon_, counts_, std::move(scope));
}

namespace {

std::vector<TreatmentSequence> label_multiset(const CrossoverDesign& design) {
    std::vector<TreatmentSequence> labels;
    labels.reserve(design.total());
    for (const auto& [z, n] : design.counts()) labels.insert(labels.end(), n, z);
    return labels;
}

}  // namespace

Assignment sample_assignment(const CrossoverDesign& design, std::uint64_t seed) {
    Assignment a{label_multiset(design)};
    std::mt19937_64 rng(seed);
    for (std::size_t i = a.labels.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(a.labels[i - 1], a.labels[pick(rng)]);
    }
    return a;
}

std::uint64_t assignment_count(const CrossoverDesign& design) {
    // Product of binomials C(n_1 + ... + n_j, n_j), each exact in 128-bit arithmetic.
    constexpr auto cap = std::numeric_limits<std::uint64_t>::max();
    unsigned __int128 total = 1;
    int placed = 0;
    for (const auto& [z, n] : design.counts()) {
        unsigned __int128 binom = 1;
        for (int j = 1; j <= n; ++j) {
            binom = binom * static_cast<unsigned>(placed + j) / static_cast<unsigned>(j);
            if (binom > cap) return cap;
        }
        placed += n;
        total *= binom;
        if (total > cap) return cap;
    }
    return static_cast<std::uint64_t>(total);
}

void for_each_assignment(const CrossoverDesign& design,
                         const std::function<void(const Assignment&)>& visit) {
    const auto count = assignment_count(design);
    if (count > kMaxAssignments) {
        // assignment_count saturates at the uint64 maximum.
        const std::string shown = count == std::numeric_limits<std::uint64_t>::max() ? "more than 2^64" : std::to_string(count);
        throw EnumerationTooLarge("design has " + shown + " assignments, cap is " + std::to_string(kMaxAssignments));
    }
    Assignment a{label_multiset(design)};
    do {
        visit(a);
    } while (std::next_permutation(a.labels.begin(), a.labels.end()));
}

std::vector<Assignment> enumerate_assignments(const CrossoverDesign& design) {
    std::vector<Assignment> out;
    for_each_assignment(design, [&](const Assignment& a) { out.push_back(a); });
    return out;
}

std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t x = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace crossover
