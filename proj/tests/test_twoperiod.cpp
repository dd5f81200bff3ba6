#include <gtest/gtest.h>

#include "crossover/errors.hpp"
#include "crossover/twoperiod.hpp"
#include "support.hpp"

using namespace crossover;

namespace {

TwoPeriodSummary random_summary(std::initializer_list<const char*> names, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> n(3, 40);
    TwoPeriodSummary s;
    for (const char* z : names) {
        GroupSummary grp;
        grp.count = n(rng);
        grp.mean = Eigen::Vector2d(g(rng), g(rng));
        grp.covariance = oracle::random_pd(2, rng);
        s.groups.emplace(TreatmentSequence(z), grp);
    }
    return s;
}

// Overwrites group means with true means from a table obeying the scenario.
void plant_means(TwoPeriodSummary& s, const PotentialOutcomeTable& table) {
    for (auto& [z, grp] : s.groups) grp.mean = table.mean(z);
}

double variance_of(const TwoPeriodSummary& s, const Eigen::RowVectorXd& w) {
    double v = 0.0;
    int j = 0;
    for (const auto& [z, grp] : s.groups) {
        const Eigen::Vector2d wz = w.segment<2>(2 * j++).transpose();
        v += wz.dot(grp.covariance * wz) / grp.count;
    }
    return v;
}

}  // namespace

TEST(TwoPeriod, BluesAreUnbiasedOnRestrictedMeans) {
    std::mt19937_64 rng(8);
    const auto S = full_sequence_set(2);
    const auto spec = two_period_effects(S);
    for (int rep = 0; rep < 20; ++rep) {
        for (auto sc : {Scenario::a, Scenario::b, Scenario::c}) {
            const auto table = support::random_table(assemble(sc, 2, S, 1), 5, rng);
            const Eigen::VectorXd truth = true_value(spec, table);
            auto four = random_summary({"AA", "AB", "BA", "BB"}, rng);
            plant_means(four, table);
            const auto r = closed_form(four, sc);
            if (sc == Scenario::a) {
                for (int k = 0; k < 5; ++k) EXPECT_NEAR(r.estimates(k), truth(k), 1e-10);
            } else if (sc == Scenario::b) {
                EXPECT_NEAR(r.at("tau_1"), truth(0), 1e-10);
                EXPECT_NEAR(r.at("tau_2"), truth(1), 1e-10);
            } else {
                EXPECT_NEAR(r.at("tau"), truth(0), 1e-10);
            }
            auto two = random_summary({"AB", "BA"}, rng);
            plant_means(two, table);
            const auto q = closed_form(two, sc);
            EXPECT_NEAR(q.at("tau_1"), truth(0), 1e-10);
            if (sc != Scenario::a) EXPECT_NEAR(q.at("tau_2"), truth(1), 1e-10);
            if (sc == Scenario::c) EXPECT_NEAR(q.at("tau"), truth(0), 1e-10);
        }
    }
}

TEST(TwoPeriod, BlueBeatsCountWeightedForms) {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 30; ++rep) {
        const auto s = random_summary({"AA", "AB", "BA", "BB"}, rng);
        const auto blue_a = blue_4seq_scenario_a(s);
        const auto counted_a = count_weighted_4seq_scenario_a(s);
        for (int k = 0; k < 5; ++k) EXPECT_LE(blue_a.variances(k), counted_a.variances(k) * (1 + 1e-12));
        const auto blue_b = blue_4seq_scenario_b(s);
        const auto counted_b = count_weighted_4seq_scenario_b(s);
        for (int k = 0; k < 2; ++k) EXPECT_LE(blue_b.variances(k), counted_b.variances(k) * (1 + 1e-12));
        EXPECT_NEAR(counted_b.at("tau_1"), counted_a.at("tau_1"), 1e-14);
        // Reported variance is w' Q w.
        EXPECT_NEAR(blue_a.variances(0), variance_of(s, blue_a.weights.row(0)), 1e-12);
    }
}

TEST(TwoPeriod, CountWeightedFormsAreBlueWithoutCrossPeriodCovariance) {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        auto s = random_summary({"AA", "AB", "BA", "BB"}, rng);
        std::uniform_real_distribution<double> u(0.5, 3.0);
        const double v1 = u(rng), v2 = u(rng);
        for (auto& [z, g] : s.groups) g.covariance = Eigen::Vector2d(v1, v2).asDiagonal();
        const auto blue_a = blue_4seq_scenario_a(s);
        const auto counted_a = count_weighted_4seq_scenario_a(s);
        EXPECT_LT((blue_a.estimates - counted_a.estimates).cwiseAbs().maxCoeff(), 1e-10);
        const auto blue_b = blue_4seq_scenario_b(s);
        const auto counted_b = count_weighted_4seq_scenario_b(s);
        EXPECT_LT((blue_b.estimates - counted_b.estimates).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(TwoPeriod, SecondPeriodCarriesInformationWhenCorrelated) {
    std::mt19937_64 rng(4);
    auto s = random_summary({"AA", "AB", "BA", "BB"}, rng);
    for (auto& [z, g] : s.groups) g.covariance << 1.0, 0.6, 0.6, 1.0;
    // Period-2 means carry a free parameter per sequence under scenario a, and are shared under b.
    EXPECT_NEAR(blue_4seq_scenario_a(s).weights(0, 1), 0.0, 1e-12);
    EXPECT_GT(std::abs(blue_4seq_scenario_b(s).weights(0, 1)), 1e-3);
}

TEST(TwoPeriod, TwoSequenceCombinationMinimisesVariance) {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 30; ++rep) {
        const auto s = random_summary({"AB", "BA"}, rng);
        const auto r = blue_2seq_scenario_c(s);
        ASSERT_TRUE(r.p);
        const double best = two_sequence_combination_variance(s, *r.p);
        EXPECT_NEAR(best, r.variances(0), 1e-12);
        for (double d : {-0.2, -0.01, 0.01, 0.2}) EXPECT_LE(best, two_sequence_combination_variance(s, *r.p + d));
        EXPECT_NEAR(r.at("tau"), *r.p * r.at("tau_1") + (1 - *r.p) * r.at("tau_2"), 1e-12);
    }
}

TEST(TwoPeriod, TwoSequenceNoCarryoverIsAPairedComparison) {
    std::mt19937_64 rng(2);
    auto s = random_summary({"AB", "BA"}, rng);
    const auto r = blue_2seq_scenario_b(s);
    const auto& ab = s.group("AB").mean;
    const auto& ba = s.group("BA").mean;
    EXPECT_NEAR(r.at("tau_1"), ab(0) - ba(0), 1e-14);
    EXPECT_NEAR(r.at("tau_2"), ba(1) - ab(1), 1e-14);
    const auto a = blue_2seq_scenario_a(s);
    EXPECT_EQ(a.not_estimable.size(), 4u);
}

TEST(TwoPeriod, Errors) {
    std::mt19937_64 rng(2);
    auto s = random_summary({"AB", "BA"}, rng);
    EXPECT_THROW(blue_4seq_scenario_a(s), MissingSequence);
    EXPECT_THROW(closed_form(random_summary({"AA", "AB"}, rng), Scenario::a), MissingSequence);
    auto bad = random_summary({"AA", "AB", "BA", "BB"}, rng);
    bad.groups.begin()->second.covariance = Eigen::Matrix2d::Ones();
    EXPECT_THROW(blue_4seq_scenario_b(bad), ConditioningError);
    EXPECT_THROW(s.group("AA"), MissingSequence);
    EXPECT_THROW(blue_2seq_scenario_b(s).at("tau_9"), ParameterError);
}
