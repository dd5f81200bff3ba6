#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace crossover {

constexpr int kMaxHorizon = 16;
constexpr std::uint64_t kMaxAssignments = 1000000;

// A word over {A, B}. Ordering is lexicographic with A < B.
class TreatmentSequence {
public:
    TreatmentSequence() = default;
    explicit TreatmentSequence(std::string letters);

    int length() const { return static_cast<int>(letters_.size()); }
    bool empty() const { return letters_.empty(); }
    // 1-based period index.
    char at(int t) const;
    const std::string& str() const { return letters_; }

    TreatmentSequence operator+(const TreatmentSequence& rhs) const;
    TreatmentSequence operator+(char letter) const;

    auto operator<=>(const TreatmentSequence&) const = default;

private:
    std::string letters_;
};

std::vector<TreatmentSequence> full_sequence_set(int T);

// Letters t1..t2 inclusive; empty when t1 > t2.
TreatmentSequence subsequence(const TreatmentSequence& z, int t1, int t2);

class CrossoverDesign {
public:
    // Scope defaults to the full sequence set of length T.
    CrossoverDesign(int horizon, std::map<TreatmentSequence, int> counts,
                    std::optional<std::vector<TreatmentSequence>> scope = std::nullopt);

    int horizon() const { return horizon_; }
    int total() const { return total_; }
    const std::map<TreatmentSequence, int>& counts() const { return counts_; }
    int count(const TreatmentSequence& z) const;
    bool observed(const TreatmentSequence& z) const { return count(z) > 0; }
    const std::vector<TreatmentSequence>& observed_sequences() const { return observed_; }
    const std::vector<TreatmentSequence>& scope() const { return scope_; }
    std::optional<int> scope_index(const TreatmentSequence& z) const;
    int dimension() const { return horizon_ * static_cast<int>(scope_.size()); }

    CrossoverDesign with_scope(std::vector<TreatmentSequence> scope) const;

private:
    int horizon_;
    int total_ = 0;
    std::map<TreatmentSequence, int> counts_;
    std::vector<TreatmentSequence> observed_;
    std::vector<TreatmentSequence> scope_;
};

struct Assignment {
    std::vector<TreatmentSequence> labels;
};

Assignment sample_assignment(const CrossoverDesign& design, std::uint64_t seed);

// N! / prod N_z!, saturating at UINT64_MAX.
std::uint64_t assignment_count(const CrossoverDesign& design);

// Visits every distinct assignment once, in lexicographic order of the label vector.
void for_each_assignment(const CrossoverDesign& design,
                         const std::function<void(const Assignment&)>& visit);

std::vector<Assignment> enumerate_assignments(const CrossoverDesign& design);

// Seed of the index-th independent stream derived from base (splitmix64 finaliser).
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index);

}  // namespace crossover
