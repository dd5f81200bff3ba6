#include "crossover/rwls.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "crossover/errors.hpp"

namespace crossover {

ObservedDataset::ObservedDataset(CrossoverDesign design, std::vector<TreatmentSequence> sequences,
                                 Eigen::MatrixXd outcomes)
    : design_(std::move(design)), sequences_(std::move(sequences)), outcomes_(std::move(outcomes)) {
    const int T = design_.horizon();
    if (outcomes_.rows() != static_cast<Eigen::Index>(sequences_.size()) || outcomes_.cols() != T) {
        throw ShapeError("outcome matrix must be N x T with one row per unit");
    }
    if (!outcomes_.allFinite()) throw ParameterError("observed outcomes must be finite");
    for (int i = 0; i < units(); ++i) {
        if (!design_.observed(sequences_[i])) {
            throw ShapeError("unit " + std::to_string(i) + " has sequence " + sequences_[i].str() +
                             " outside the design");
        }
        groups_[sequences_[i]].push_back(i);
    }
    for (const auto& [z, n] : design_.counts()) {
        const auto it = groups_.find(z);
        const int seen = it == groups_.end() ? 0 : static_cast<int>(it->second.size());
        if (seen != n) {
            throw ShapeError("sequence " + z.str() + " has " + std::to_string(seen) + " units, design says " +
                             std::to_string(n));
        }
    }
}

const std::vector<int>& ObservedDataset::units_of(const TreatmentSequence& z) const {
    auto it = groups_.find(z);
    if (it == groups_.end()) throw MissingSequence("no units observed under " + z.str());
    return it->second;
}

ObservedDataset observe(const CrossoverDesign& design, const Assignment& assignment,
                        const PotentialOutcomeTable& table) {
    const int N = static_cast<int>(assignment.labels.size());
    if (N != table.units()) throw ShapeError("assignment and table disagree on N");
    Eigen::MatrixXd Y(N, design.horizon());
    for (int i = 0; i < N; ++i) Y.row(i) = table.outcomes(assignment.labels[i]).row(i);
    return ObservedDataset(design, assignment.labels, std::move(Y));
}

std::string provenance_name(WeightProvenance p) {
    switch (p) {
        case WeightProvenance::sample: return "sample";
        case WeightProvenance::pooled: return "pooled";
        case WeightProvenance::user: return "user";
    }
    return "user";
}

bool pd_repair(Eigen::MatrixXd& omega) {
    const double T = static_cast<double>(omega.rows());
    omega = 0.5 * (omega + omega.transpose());
    const double trace = omega.trace();
    const double eps = trace > 0.0 ? 1e-8 * trace / T : 1e-8;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega, Eigen::EigenvaluesOnly);
    const double lambda_min = es.eigenvalues()(0);
    if (lambda_min >= eps) return false;
    omega.diagonal().array() += eps - lambda_min;
    return true;
}

WeightModel user_weights(std::map<TreatmentSequence, Eigen::MatrixXd> omega) {
    WeightModel w{std::move(omega), WeightProvenance::user, {}};
    for (auto& [z, m] : w.omega) {
        if (m.rows() != m.cols()) throw ShapeError("weight matrix for " + z.str() + " is not square");
        if (pd_repair(m)) w.repairs.push_back(z.str());
    }
    return w;
}

SequenceMeans sequence_means(const ObservedDataset& data) {
    SequenceMeans out;
    for (const auto& z : data.design().observed_sequences()) {
        const auto& idx = data.units_of(z);
        Eigen::VectorXd m = Eigen::VectorXd::Zero(data.horizon());
        for (int i : idx) m += data.outcomes().row(i).transpose();
        out.emplace(z, m / double(idx.size()));
    }
    return out;
}

namespace {

Eigen::MatrixXd centered_group(const ObservedDataset& data, const TreatmentSequence& z, const Eigen::VectorXd& mean) {
    const auto& idx = data.units_of(z);
    Eigen::MatrixXd D(idx.size(), data.horizon());
    for (std::size_t r = 0; r < idx.size(); ++r) D.row(r) = data.outcomes().row(idx[r]) - mean.transpose();
    return D;
}

// Positions (1-based) whose letters Y_t may depend on.
std::vector<int> dependence_positions(int t, Scenario scenario, int k) {
    const int from = scenario == Scenario::a ? 1 : std::max(1, t - k + 1);
    std::vector<int> p;
    for (int s = from; s <= t; ++s) p.push_back(s);
    return p;
}

}  // namespace

WeightModel sample_covariances(const ObservedDataset& data) {
    WeightModel w{{}, WeightProvenance::sample, {}};
    const auto means = sequence_means(data);
    for (const auto& [z, m] : means) {
        const auto n = data.units_of(z).size();
        if (n < 2) {
            throw DegenerateCovariance("sequence " + z.str() +
                                       " has one unit; use pooled or user-supplied weights");
        }
        const Eigen::MatrixXd D = centered_group(data, z, m);
        Eigen::MatrixXd S = D.transpose() * D / double(n - 1);
        if (pd_repair(S)) w.repairs.push_back(z.str());
        w.omega.emplace(z, std::move(S));
    }
    return w;
}

WeightModel pooled_covariance_entries(const ObservedDataset& data, Scenario scenario, int k) {
    const int T = data.horizon();
    if (scenario != Scenario::a && (k < 1 || k > T)) throw ParameterError("carryover order must satisfy 1 <= k <= T");
    const auto means = sequence_means(data);
    std::map<TreatmentSequence, Eigen::MatrixXd> cross;
    for (const auto& [z, m] : means) {
        const Eigen::MatrixXd D = centered_group(data, z, m);
        cross.emplace(z, D.transpose() * D);
    }
    WeightModel w{{}, WeightProvenance::pooled, {}};
    for (const auto& [z, m] : means) w.omega.emplace(z, Eigen::MatrixXd::Zero(T, T));

    for (int t = 1; t <= T; ++t) {
        for (int u = t; u <= T; ++u) {
            std::set<int> positions;
            for (int p : dependence_positions(t, scenario, k)) positions.insert(p);
            for (int p : dependence_positions(u, scenario, k)) positions.insert(p);
            std::map<std::string, std::vector<TreatmentSequence>> classes;
            for (const auto& [z, m] : means) {
                std::string key;
                for (int p : positions) key += z.at(p);
                classes[key].push_back(z);
            }
            for (const auto& [key, members] : classes) {
                double sum = 0.0;
                int dof = 0;
                for (const auto& z : members) {
                    sum += cross.at(z)(t - 1, u - 1);
                    dof += static_cast<int>(data.units_of(z).size()) - 1;
                }
                if (dof < 1) {
                    throw DegenerateCovariance("covariance entry (" + std::to_string(t) + "," + std::to_string(u) +
                                               ") has no degrees of freedom for class " + key);
                }
                for (const auto& z : members) {
                    w.omega.at(z)(t - 1, u - 1) = sum / dof;
                    w.omega.at(z)(u - 1, t - 1) = sum / dof;
                }
            }
        }
    }
    for (auto& [z, m] : w.omega) {
        if (pd_repair(m)) w.repairs.push_back(z.str());
    }
    return w;
}

RwlsSolver::RwlsSolver(const CrossoverDesign& design, const WeightModel& weights, const RestrictionMatrix& C,
                       const SolveOptions& options)
    : design_(design), weights_(weights), restriction_(C) {
    const int T = design.horizon();
    const int n = design.dimension();
    const int L = C.count();
    rank_ = is_identifiable(design, C);
    if (!rank_.identifiable) throw NotIdentifiable(rank_.rank, rank_.dimension);

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [z, count] : design.counts()) {
        auto it = weights.omega.find(z);
        if (it == weights.omega.end()) throw MissingSequence("no weight matrix for observed sequence " + z.str());
        if (it->second.rows() != T || it->second.cols() != T) throw ShapeError("weight matrix for " + z.str() + " is not T x T");
        Eigen::LDLT<Eigen::MatrixXd> ldlt(it->second);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw DegenerateCovariance("weight matrix for " + z.str() + " is not positive definite");
        }
        Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(T, T));
        inv = 0.5 * (inv + inv.transpose());
        const int j = *design.scope_index(z);
        H.block(j * T, j * T, T, T) = count * inv;
        omega_inv_.emplace(z, std::move(inv));
    }

    // Column blocks N_z Omega_z^{-1} of H; the mean map solves against these directly so that large
    // weights are not multiplied back into a rounded U11.
    Eigen::MatrixXd rhs_blocks = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [z, count] : design.counts()) {
        const int j = *design.scope_index(z);
        rhs_blocks.middleCols(j * T, T) = H.middleCols(j * T, T);
    }
    Eigen::MatrixXd map_all;

    bool solved = false;
    if (!options.force_pseudo_normal) {
        // C gamma = 0 is invariant to row scaling; matching H's magnitude keeps the pivots balanced.
        const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + L, n + L);
        K.topLeftCorner(n, n) = H;
        K.topRightCorner(n, L) = scale * C.rows.transpose();
        K.bottomLeftCorner(L, n) = scale * C.rows;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + L, 2 * n);
        rhs.topLeftCorner(n, n).setIdentity();
        rhs.topRightCorner(n, n) = rhs_blocks;
        Eigen::MatrixXd sol = lu.solve(rhs);
        const double rcond = lu.rcond();
        if (sol.allFinite() && rcond > 0.0) {
            u11_ = sol.topLeftCorner(n, n);
            map_all = sol.topRightCorner(n, n);
            condition_ = 1.0 / rcond;
            solved = true;
        }
    }
    if (!solved) {
        // Same U11 as the KKT inverse: adding C'C to H changes nothing on {gamma : C gamma = 0}.
        const Eigen::MatrixXd M = H + C.rows.transpose() * C.rows;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
        Eigen::MatrixXd Minv = ldlt.solve(Eigen::MatrixXd::Identity(n, n));
        if (L > 0) {
            const Eigen::MatrixXd MC = Minv * C.rows.transpose();
            const Eigen::MatrixXd S = C.rows * MC;
            u11_ = Minv - MC * S.ldlt().solve(MC.transpose());
        } else {
            u11_ = Minv;
        }
        map_all = u11_ * rhs_blocks;
        used_pseudo_normal_ = true;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
        const auto& s = svd.singularValues();
        condition_ = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : INFINITY;
        if (!u11_.allFinite()) throw ConditioningError("restricted WLS solve produced non-finite values");
    }
    u11_ = 0.5 * (u11_ + u11_.transpose());
    if (condition_ > options.condition_warning) {
        warnings_.push_back("ill-conditioned KKT system (condition estimate " + std::to_string(condition_) + ")");
    }

    for (const auto& [z, count] : design.counts()) {
        const int j = *design.scope_index(z);
        mean_map_.emplace(z, map_all.middleCols(j * T, T));
    }
}

Eigen::VectorXd RwlsSolver::solve(const SequenceMeans& means) const {
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(design_.dimension());
    for (const auto& [z, G] : mean_map_) {
        auto it = means.find(z);
        if (it == means.end()) throw MissingSequence("no mean supplied for observed sequence " + z.str());
        if (it->second.size() != design_.horizon()) throw ShapeError("mean for " + z.str() + " has wrong length");
        gamma += G * it->second;
    }
    return gamma;
}

RwlsFit fit_with_solver(const RwlsSolver& solver, const SequenceMeans& means) {
    RwlsFit fit;
    fit.gamma = solver.solve(means);
    fit.u11 = solver.u11();
    fit.restriction = solver.restriction();
    fit.weights = solver.weights();
    fit.rank = solver.rank();
    fit.condition = solver.condition();
    fit.warnings = solver.warnings();
    for (const auto& r : fit.weights.repairs) fit.warnings.push_back("weight matrix for " + r + " repaired to PD");
    return fit;
}

RwlsFit solve_restricted_wls(const CrossoverDesign& design, const SequenceMeans& means, const WeightModel& weights,
                             const RestrictionMatrix& C, const SolveOptions& options) {
    return fit_with_solver(RwlsSolver(design, weights, C, options), means);
}

namespace {

Eigen::MatrixXd ehw_from_parts(const RwlsFit& fit, const ObservedDataset& data,
                               const std::map<TreatmentSequence, Eigen::MatrixXd>& omega_inv, bool hc1) {
    const auto& design = data.design();
    const int T = design.horizon();
    const int n = design.dimension();
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, n);
    for (const auto& z : design.observed_sequences()) {
        const int j = *design.scope_index(z);
        Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(T, T);
        for (int i : data.units_of(z)) outer += fit.residuals.row(i).transpose() * fit.residuals.row(i);
        const Eigen::MatrixXd& Oi = omega_inv.at(z);
        const Eigen::MatrixXd U = fit.u11.middleCols(j * T, T);
        V += U * (Oi * outer * Oi) * U.transpose();
    }
    if (hc1) {
        const int N = data.units();
        const int groups = static_cast<int>(design.observed_sequences().size());
        if (N <= groups) throw DegenerateSample("HC1 factor needs N > number of observed sequences");
        V *= double(N) / double(N - groups);
    }
    return 0.5 * (V + V.transpose());
}

void fill_residuals(RwlsFit& fit, const ObservedDataset& data) {
    const auto& design = data.design();
    const int T = design.horizon();
    fit.residuals.resize(data.units(), T);
    for (int i = 0; i < data.units(); ++i) {
        const int j = *design.scope_index(data.sequences()[i]);
        fit.residuals.row(i) = data.outcomes().row(i) - fit.gamma.segment(j * T, T).transpose();
    }
}

void check_fit_layout(const RwlsFit& fit, const ObservedDataset& data) {
    if (fit.scope() != data.design().scope() || fit.horizon() != data.horizon()) {
        throw ShapeError("fit and dataset disagree on layout");
    }
}

}  // namespace

void attach_ehw(RwlsFit& fit, const RwlsSolver& solver, const ObservedDataset& data, bool hc1) {
    check_fit_layout(fit, data);
    fill_residuals(fit, data);
    std::map<TreatmentSequence, Eigen::MatrixXd> inv;
    for (const auto& z : data.design().observed_sequences()) inv.emplace(z, solver.omega_inverse(z));
    fit.covariance = ehw_from_parts(fit, data, inv, hc1);
}

Eigen::MatrixXd ehw_covariance(const RwlsFit& fit, const ObservedDataset& data, bool hc1) {
    check_fit_layout(fit, data);
    RwlsFit work = fit;
    fill_residuals(work, data);
    std::map<TreatmentSequence, Eigen::MatrixXd> inv;
    for (const auto& [z, m] : fit.weights.omega) inv.emplace(z, m.ldlt().solve(Eigen::MatrixXd::Identity(m.rows(), m.cols())));
    return ehw_from_parts(work, data, inv, hc1);
}

WeightModel estimate_weights(const ObservedDataset& data, const RestrictionMatrix& C, const WeightChoice& choice) {
    switch (choice.kind) {
        case WeightProvenance::sample: return sample_covariances(data);
        case WeightProvenance::pooled: return pooled_covariance_entries(data, C.scenario, C.carryover_order);
        case WeightProvenance::user:
            if (!choice.user) throw ParameterError("user weights requested but none supplied");
            return *choice.user;
    }
    throw ParameterError("unknown weight choice");
}

RwlsFit feasible_rwls(const ObservedDataset& data, const RestrictionMatrix& C, const WeightChoice& choice,
                      const FitOptions& options) {
    const WeightModel weights = estimate_weights(data, C, choice);
    const RwlsSolver solver(data.design(), weights, C, options.solve);
    RwlsFit fit = fit_with_solver(solver, sequence_means(data));
    attach_ehw(fit, solver, data, options.hc1);
    return fit;
}

RwlsFit feasible_rwls(const ObservedDataset& data, Scenario scenario, int k, const WeightChoice& choice,
                      const FitOptions& options) {
    const auto& d = data.design();
    return feasible_rwls(data, assemble(scenario, d.horizon(), d.scope(), k), choice, options);
}

std::vector<bool> restricted_rows(const Eigen::MatrixXd& B, const Eigen::MatrixXd& C) {
    std::vector<bool> out(B.rows(), false);
    if (C.rows() == 0) return out;
    const Eigen::MatrixXd CCt = C * C.transpose();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(CCt);
    for (Eigen::Index r = 0; r < B.rows(); ++r) {
        const Eigen::VectorXd b = B.row(r).transpose();
        const double scale = b.cwiseAbs().maxCoeff();
        if (scale == 0.0) continue;
        const Eigen::VectorXd residual = b - C.transpose() * ldlt.solve(C * b);
        out[r] = residual.cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, scale);
    }
    return out;
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

EstimateResult estimate(const RwlsFit& fit, const EstimandSpec& spec, double level) {
    if (spec.horizon() != fit.horizon() || spec.scope() != fit.scope()) {
        throw ShapeError("estimand layout does not match the fit's sequence scope");
    }
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("confidence level must lie in (0, 1)");
    const Eigen::MatrixXd& B = spec.matrix();
    const int K = spec.dimension();
    EstimateResult r;
    r.labels = spec.labels();
    r.level = level;
    r.restricted = restricted_rows(B, fit.restriction.rows);
    r.point = B * fit.gamma;
    r.covariance = fit.covariance.size() ? Eigen::MatrixXd(B * fit.covariance * B.transpose())
                                         : Eigen::MatrixXd::Zero(K, K);
    for (int a = 0; a < K; ++a) {
        if (!r.restricted[a]) continue;
        r.point(a) = 0.0;
        r.covariance.row(a).setZero();
        r.covariance.col(a).setZero();
    }
    r.covariance = 0.5 * (r.covariance + r.covariance.transpose());
    const double zq = normal_quantile(0.5 + level / 2.0);
    r.se = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    r.ci_low = r.point - zq * r.se;
    r.ci_high = r.point + zq * r.se;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.covariance);
    const auto& ev = es.eigenvalues();
    const double top = ev.size() ? std::max(0.0, ev(ev.size() - 1)) : 0.0;
    r.precision = Eigen::MatrixXd::Zero(K, K);
    for (int a = 0; a < K; ++a) {
        if (top > 0.0 && ev(a) > 1e-10 * top) {
            r.precision += es.eigenvectors().col(a) * es.eigenvectors().col(a).transpose() / ev(a);
            ++r.wald_df;
        }
    }
    if (r.wald_df > 0) {
        r.wald_statistic = r.point.dot(r.precision * r.point);
        boost::math::chi_squared chi(r.wald_df);
        r.wald_critical = boost::math::quantile(chi, level);
        r.wald_p_value = boost::math::cdf(boost::math::complement(chi, r.wald_statistic));
    }
    return r;
}

bool EstimateResult::wald_contains(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd d = point - theta;
    // Directions with zero estimated variance admit no deviation.
    const Eigen::VectorXd off_range = d - covariance * (precision * d);
    if (off_range.cwiseAbs().maxCoeff() > 1e-9 * (1.0 + d.cwiseAbs().maxCoeff())) return false;
    return wald_df == 0 || d.dot(precision * d) <= wald_critical;
}

}  // namespace crossover
