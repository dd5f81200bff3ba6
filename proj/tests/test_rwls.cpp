#include <gtest/gtest.h>

#include "crossover/errors.hpp"
#include "crossover/rwls.hpp"
#include "crossover/simulator.hpp"
#include "support.hpp"

using namespace crossover;
using support::make_design;

namespace {

ObservedDataset random_dataset(const CrossoverDesign& d, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<TreatmentSequence> labels;
    for (const auto& [z, n] : d.counts())
        for (int i = 0; i < n; ++i) labels.push_back(z);
    Eigen::MatrixXd Y(labels.size(), d.horizon());
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        for (int t = 0; t < d.horizon(); ++t) Y(i, t) = g(rng) + 0.3 * t + (labels[i].at(t + 1) == 'A');
    return ObservedDataset(d, labels, Y);
}

// H and X' Omega^{-1} Ybar assembled directly from the definitions.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> normal_parts(const CrossoverDesign& d, const WeightModel& w,
                                                         const SequenceMeans& means) {
    const int n = d.dimension();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (const auto& [z, count] : d.counts()) {
        const Eigen::MatrixXd X = regressor_block(d, z);
        const Eigen::MatrixXd Oi = w.omega.at(z).inverse();
        H += count * X.transpose() * Oi * X;
        b += count * X.transpose() * Oi * means.at(z);
    }
    return {H, b};
}

oracle::UnitRegression unit_regression(const ObservedDataset& data, const WeightModel& w) {
    oracle::UnitRegression u;
    for (int i = 0; i < data.units(); ++i) {
        const auto& z = data.sequences()[i];
        u.X.push_back(regressor_block(data.design(), z));
        u.W.push_back(w.omega.at(z).inverse());
        u.y.push_back(data.outcomes().row(i).transpose());
    }
    return u;
}

}  // namespace

TEST(Rwls, KktMatchesNullSpaceOracleAndFallback) {
    std::mt19937_64 rng(31);
    const auto d = make_design(3, {{"AAB", 12}, {"ABA", 9}, {"BAA", 14}, {"BBA", 8}, {"ABB", 10}});
    for (auto s : {Scenario::b, Scenario::c}) {
        const auto C = assemble(s, 3, d.scope(), 1);
        const auto data = random_dataset(d, rng);
        const auto w = sample_covariances(data);
        const auto means = sequence_means(data);
        const auto [H, b] = normal_parts(d, w, means);
        const RwlsSolver kkt(d, w, C);
        EXPECT_FALSE(kkt.used_pseudo_normal());
        const Eigen::VectorXd expected = oracle::nullspace_qp(H, C.rows, b);
        EXPECT_LT((kkt.solve(means) - expected).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((kkt.u11() - oracle::nullspace_inverse(H, C.rows)).cwiseAbs().maxCoeff(), 1e-9);
        const RwlsSolver fallback(d, w, C, SolveOptions{true});
        EXPECT_TRUE(fallback.used_pseudo_normal());
        EXPECT_LT((fallback.solve(means) - expected).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((C.rows * kkt.solve(means)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Rwls, EhwMatchesDenseSandwich) {
    std::mt19937_64 rng(7);
    const auto d = make_design(2, {{"AA", 4}, {"AB", 6}, {"BA", 5}, {"BB", 3}});
    for (auto s : {Scenario::a, Scenario::b, Scenario::c}) {
        const auto data = random_dataset(d, rng);
        const auto C = assemble(s, 2, d.scope(), 1);
        const auto fit = feasible_rwls(data, C, WeightChoice{});
        const auto dense = oracle::dense_sandwich(unit_regression(data, fit.weights), C.rows);
        EXPECT_LT((fit.gamma - dense.gamma).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((fit.covariance - dense.covariance).cwiseAbs().maxCoeff(), 1e-10);
        FitOptions hc1;
        hc1.hc1 = true;
        const auto scaled = feasible_rwls(data, C, WeightChoice{}, hc1);
        EXPECT_LT((scaled.covariance - dense.covariance * (18.0 / 14.0)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Rwls, UnrestrictedFitReproducesObservedMeans) {
    std::mt19937_64 rng(3);
    const auto scope = support::seqs({"AB", "BA"});
    const auto d = make_design(2, {{"AB", 5}, {"BA", 4}}, scope);
    const auto data = random_dataset(d, rng);
    RestrictionMatrix none{Eigen::MatrixXd(0, 4), 2, scope, Scenario::a, 0};
    const auto fit = feasible_rwls(data, none, WeightChoice{});
    const auto means = sequence_means(data);
    EXPECT_LT((fit.gamma.head(2) - means.at(TreatmentSequence("AB"))).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((fit.gamma.tail(2) - means.at(TreatmentSequence("BA"))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rwls, RankFailureThrows) {
    std::mt19937_64 rng(3);
    const auto d = make_design(2, {{"AB", 5}, {"BA", 4}});
    const auto data = random_dataset(d, rng);
    try {
        feasible_rwls(data, Scenario::a, 1, WeightChoice{});
        FAIL() << "expected NotIdentifiable";
    } catch (const NotIdentifiable& e) {
        EXPECT_EQ(e.rank(), 6);
        EXPECT_EQ(e.dimension(), 8);
    }
}

TEST(Rwls, SampleAndPooledWeights) {
    std::mt19937_64 rng(11);
    const auto d = make_design(2, {{"AA", 4}, {"AB", 5}, {"BA", 3}, {"BB", 6}});
    const auto data = random_dataset(d, rng);
    const auto sample = sample_covariances(data);
    EXPECT_EQ(sample.provenance, WeightProvenance::sample);
    const auto& idx = data.units_of(TreatmentSequence("AB"));
    oracle::RunningMoments m1;
    for (int i : idx) m1.push(data.outcomes()(i, 0));
    EXPECT_NEAR(sample.omega.at(TreatmentSequence("AB"))(0, 0), m1.variance(), 1e-12);

    // Scenario b, k = 1: the (1,1) entry pools sequences sharing the first letter.
    const auto pooled = pooled_covariance_entries(data, Scenario::b, 1);
    double ss = 0.0;
    for (const char* z : {"AA", "AB"}) {
        const auto& id = data.units_of(TreatmentSequence(z));
        oracle::RunningMoments m;
        for (int i : id) m.push(data.outcomes()(i, 0));
        ss += m.m2;
    }
    EXPECT_NEAR(pooled.omega.at(TreatmentSequence("AA"))(0, 0), ss / (4 + 5 - 2), 1e-12);
    EXPECT_NEAR(pooled.omega.at(TreatmentSequence("AB"))(0, 0), ss / (4 + 5 - 2), 1e-12);
    // Scenario a keeps every sequence separate for the (1, 2) entry.
    const auto pa = pooled_covariance_entries(data, Scenario::a, 1);
    EXPECT_NEAR(pa.omega.at(TreatmentSequence("BB"))(0, 1), sample.omega.at(TreatmentSequence("BB"))(0, 1), 1e-12);

    const auto single = make_design(2, {{"AB", 1}, {"BA", 3}});
    EXPECT_THROW(sample_covariances(random_dataset(single, rng)), DegenerateCovariance);
}

TEST(Rwls, PdRepair) {
    Eigen::MatrixXd singular(2, 2);
    singular << 1.0, 1.0, 1.0, 1.0;
    EXPECT_TRUE(pd_repair(singular));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(singular);
    EXPECT_NEAR(es.eigenvalues()(0), 1e-8, 1e-14);
    Eigen::MatrixXd fine = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_FALSE(pd_repair(fine));
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
    EXPECT_TRUE(pd_repair(zero));
    EXPECT_NEAR(zero(0, 0), 1e-8, 1e-20);
    const auto w = user_weights({{TreatmentSequence("AB"), Eigen::MatrixXd::Ones(2, 2)}});
    EXPECT_EQ(w.repairs, std::vector<std::string>{"AB"});
}

TEST(Rwls, RestrictedRowsAreZeroedUnderNoCarryover) {
    std::mt19937_64 rng(19);
    const auto d = make_design(2, {{"AA", 4}, {"AB", 6}, {"BA", 5}, {"BB", 3}});
    const auto data = random_dataset(d, rng);
    const auto fit = feasible_rwls(data, Scenario::b, 1, WeightChoice{});
    const auto est = estimate(fit, two_period_effects(d.scope()));
    EXPECT_EQ(est.restricted, (std::vector<bool>{false, false, false, true, true}));
    EXPECT_EQ(est.point(3), 0.0);
    EXPECT_EQ(est.se(4), 0.0);
    EXPECT_NEAR(est.point(1), est.point(2), 1e-12);
    EXPECT_EQ(est.wald_df, 2);
    EXPECT_TRUE(est.wald_contains(est.point));
    EXPECT_THROW(estimate(fit, two_period_effects(d.scope()), 1.5), ParameterError);
}

TEST(Rwls, NormalQuantile) {
    EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
}

// Under constant effects the EHW covariance is consistent, so the Wald region has near-nominal coverage.
TEST(Rwls, WaldRegionCoverageUnderConstantEffects) {
    const auto d = make_design(2, {{"AA", 240}, {"AB", 240}, {"BA", 240}, {"BB", 240}});
    ScenarioGenerator gen;
    gen.kind = GeneratorKind::constant_effect;
    gen.scenario = Scenario::a;
    gen.tau1 = 0.7;
    gen.tau2_b = -0.4;
    gen.carry_a = 0.3;
    gen.carry_b = 0.5;
    const auto table = generate_table(gen, d.total(), d);
    const auto spec = two_period_effects(d.scope());
    const Eigen::VectorXd truth = true_value(spec, table);
    const auto C = assemble(Scenario::a, 2, d.scope(), 1);
    int inside = 0;
    const int reps = 800;
    for (int r = 0; r < reps; ++r) {
        const auto data = observe(d, sample_assignment(d, stream_seed(99, r)), table);
        inside += estimate(feasible_rwls(data, C, WeightChoice{}), spec).wald_contains(truth);
    }
    const double rate = double(inside) / reps;
    EXPECT_GT(rate, 0.92);
    EXPECT_LT(rate, 0.98);
}
