#include "crossover/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "crossover/errors.hpp"
#include "crossover/io.hpp"

namespace crossover {

namespace {

constexpr int AA = 0, AB = 1, BA = 2, BB = 3;

void require_full_two_period(const CrossoverDesign& design) {
    if (design.horizon() != 2 || design.scope() != full_sequence_set(2)) {
        throw ShapeError("two-period generators need T = 2 and the full sequence scope");
    }
}

}  // namespace

PotentialOutcomeTable generate_table(const ScenarioGenerator& gen, int N, const CrossoverDesign& design) {
    require_full_two_period(design);
    if (N < 2) throw ParameterError("generator needs N >= 2");
    std::mt19937_64 rng(gen.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Eigen::MatrixXd> Y(4, Eigen::MatrixXd(N, 2));

    if (gen.kind == GeneratorKind::gaussian_model) {
        if (!(gen.rho > -1.0 && gen.rho < 1.0)) throw ParameterError("rho must lie in (-1, 1)");
        const double tail = std::sqrt(1.0 - gen.rho * gen.rho);
        for (int i = 0; i < N; ++i) {
            for (int z = 0; z < 4; ++z) {
                const double e1 = normal(rng);
                const double e2 = normal(rng);
                Y[z](i, 0) = gen.beta1(z) + e1;
                Y[z](i, 1) = gen.beta2(z) + gen.rho * e1 + tail * e2;
            }
        }
        for (int i = 0; i < N; ++i) {
            Y[AB](i, 0) = Y[AA](i, 0);
            Y[BB](i, 0) = Y[BA](i, 0);
            if (gen.scenario == Scenario::a) continue;
            Y[BA](i, 1) = Y[AA](i, 1);
            Y[BB](i, 1) = Y[AB](i, 1);
            if (gen.scenario == Scenario::b) continue;
            const double shift = Y[AA](i, 0) - Y[BA](i, 0);
            Y[AA](i, 1) = shift + Y[AB](i, 1);
            Y[BA](i, 1) = shift + Y[BB](i, 1);
        }
    } else {
        if (gen.scenario != Scenario::a && (gen.carry_a != 0.0 || gen.carry_b != 0.0)) {
            throw ParameterError("carryover effects must be zero under scenarios b and c");
        }
        if (gen.scenario == Scenario::c && gen.tau2_b != gen.tau1) {
            throw ParameterError("scenario c needs tau_2(B) equal to tau_1");
        }
        for (int i = 0; i < N; ++i) {
            const double y1 = normal(rng);
            const double y2 = normal(rng);
            Y[BA](i, 0) = Y[BB](i, 0) = y1;
            Y[AA](i, 0) = Y[AB](i, 0) = y1 + gen.tau1;
            Y[BB](i, 1) = y2;
            Y[BA](i, 1) = y2 + gen.tau2_b;
            Y[AA](i, 1) = Y[BA](i, 1) + gen.carry_a;
            Y[AB](i, 1) = y2 + gen.carry_b;
        }
    }
    return PotentialOutcomeTable(design.scope(), std::move(Y));
}

WeightModel true_weights(const PotentialOutcomeTable& table, const CrossoverDesign& design) {
    std::map<TreatmentSequence, Eigen::MatrixXd> omega;
    for (const auto& z : design.observed_sequences()) omega.emplace(z, table.covariance(z));
    return user_weights(std::move(omega));
}

Eigen::MatrixXd oracle_variance(const RwlsSolver& solver, const EstimandSpec& spec, const PotentialOutcomeTable& table) {
    const auto& design = solver.design();
    const int K = spec.dimension();
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(K, K);
    for (const auto& [z, n] : design.counts()) {
        const Eigen::MatrixXd Wt = spec.matrix() * solver.mean_map(z);
        V += Wt * table.covariance(z) * Wt.transpose() / double(n);
    }
    V -= individual_effect_covariance(spec, table) / double(table.units());
    return V;
}

McReport run_monte_carlo(const PotentialOutcomeTable& table, const CrossoverDesign& design, const EstimandSpec& spec,
                         const McConfig& config) {
    if (config.replications < 2) throw ParameterError("Monte Carlo needs at least two replications");
    if (table.units() != design.total()) throw ShapeError("table and design disagree on N");
    const RestrictionMatrix C = assemble(config.scenario, design.horizon(), design.scope(), config.carryover_order);
    const auto rank = is_identifiable(design, C);
    if (!rank.identifiable) throw NotIdentifiable(rank.rank, rank.dimension);

    const int R = config.replications;
    const int K = spec.dimension();
    const Eigen::VectorXd truth = true_value(spec, table);
    const std::vector<bool> restricted = restricted_rows(spec.matrix(), C.rows);

    McReport report;
    report.scenario = scenario_tag(config.scenario);
    report.units = design.total();
    report.replications = R;
    report.seed = config.seed;
    report.replication_seeds.resize(R);
    for (int r = 0; r < R; ++r) report.replication_seeds[r] = stream_seed(config.seed, r);
    report.bias = Eigen::MatrixXd::Zero(R, K);
    report.variances = Eigen::MatrixXd::Zero(R, K);
    Eigen::MatrixXi hits = Eigen::MatrixXi::Zero(R, K);

    FitOptions options;
    options.hc1 = config.hc1;
    auto work = [&](int begin, int end) {
        for (int r = begin; r < end; ++r) {
            const auto data = observe(design, sample_assignment(design, report.replication_seeds[r]), table);
            const auto fit = feasible_rwls(data, C, config.weights, options);
            const auto est = estimate(fit, spec, config.level);
            for (int k = 0; k < K; ++k) {
                report.bias(r, k) = est.point(k) - truth(k);
                report.variances(r, k) = est.covariance(k, k);
                const double slack = est.se(k) == 0.0 ? 1e-12 * (1.0 + std::abs(truth(k))) : 0.0;
                hits(r, k) = est.ci_low(k) - slack <= truth(k) && truth(k) <= est.ci_high(k) + slack;
            }
        }
    };
    int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, R);
    if (threads == 1) {
        work(0, R);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (int w = 0; w < threads; ++w) {
            const int begin = static_cast<int>(static_cast<long>(R) * w / threads);
            const int end = static_cast<int>(static_cast<long>(R) * (w + 1) / threads);
            pool.emplace_back([&, w, begin, end] {
                try {
                    work(begin, end);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    std::optional<Eigen::MatrixXd> oracle;
    try {
        const RwlsSolver fixed(design, true_weights(table, design), C);
        oracle = oracle_variance(fixed, spec, table);
    } catch (const Error&) {
        oracle.reset();
    }

    for (int k = 0; k < K; ++k) {
        EstimandSummary s;
        s.label = spec.labels()[k];
        s.truth = truth(k);
        s.restricted = restricted[k];
        const Eigen::VectorXd b = report.bias.col(k);
        s.mean_bias = b.mean();
        const Eigen::VectorXd d = b.array() - s.mean_bias;
        s.empirical_variance = d.squaredNorm() / (R - 1);
        const double m4 = d.array().pow(4).mean();
        const double m2 = d.squaredNorm() / R;
        s.empirical_variance_se = std::sqrt(std::max(0.0, m4 - m2 * m2) / R);
        const Eigen::VectorXd v = report.variances.col(k);
        s.mean_ehw_variance = v.mean();
        s.mean_ehw_variance_se = std::sqrt((v.array() - s.mean_ehw_variance).square().sum() / (R - 1) / R);
        s.coverage = hits.col(k).cast<double>().mean();
        if (oracle) s.oracle_variance = (*oracle)(k, k);
        report.estimands.push_back(std::move(s));
    }
    return report;
}

McReport run_study(const ScenarioGenerator& gen, int N, const CrossoverDesign& design, const EstimandSpec& spec,
                   const McConfig& config) {
    return run_monte_carlo(generate_table(gen, N, design), design, spec, config);
}

AuditResult exact_randomization_audit(const PotentialOutcomeTable& table, const CrossoverDesign& design,
                                      const EstimandSpec& spec, const WeightModel& weights,
                                      const RestrictionMatrix& C) {
    const RwlsSolver solver(design, weights, C);
    const int K = spec.dimension();
    AuditResult a;
    a.labels = spec.labels();
    a.truth = true_value(spec, table);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(K);
    Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(K, K);
    std::vector<Eigen::VectorXd> points;
    for_each_assignment(design, [&](const Assignment& assignment) {
        const auto data = observe(design, assignment, table);
        const Eigen::VectorXd gamma = solver.solve(sequence_means(data));
        if (C.count() > 0) {
            const double v = (C.rows * gamma).cwiseAbs().maxCoeff() / (1.0 + gamma.cwiseAbs().maxCoeff());
            a.max_restriction_violation = std::max(a.max_restriction_violation, v);
        }
        points.push_back(spec.matrix() * gamma);
        sum += points.back();
    });
    a.assignments = points.size();
    a.exact_mean = sum / double(a.assignments);
    for (const auto& p : points) outer += (p - a.exact_mean) * (p - a.exact_mean).transpose();
    a.exact_variance = outer / double(a.assignments);
    a.formula_variance = oracle_variance(solver, spec, table);
    return a;
}

std::string emit_bias_distribution(const McReport& report) {
    std::string out = "scenario,estimand,replication,bias\n";
    for (int r = 0; r < report.replications; ++r) {
        for (std::size_t k = 0; k < report.estimands.size(); ++k) {
            out += std::string(1, report.scenario) + "," + report.estimands[k].label + "," + std::to_string(r) + "," +
                   format_number(report.bias(r, k)) + "\n";
        }
    }
    return out;
}

}  // namespace crossover
