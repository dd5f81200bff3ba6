#include "crossover/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "crossover/errors.hpp"

namespace crossover {

std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

std::vector<std::string> words(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

double parse_real(const std::string& text, int row, const std::string& what) {
    if (text.empty()) throw ParseError("empty " + what, row);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || errno == ERANGE) {
        throw ParseError("non-numeric " + what + " \"" + text + "\"", row);
    }
    return v;
}

int parse_int(const std::string& text, int row, const std::string& what) {
    const double v = parse_real(text, row, what);
    if (v != static_cast<int>(v)) throw ParseError(what + " must be an integer", row);
    return static_cast<int>(v);
}

TreatmentSequence parse_sequence(const std::string& text, int row) {
    try {
        return TreatmentSequence(text);
    } catch (const ParseError& e) {
        throw ParseError(e.what(), row);
    }
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return in;
}

struct CsvRows {
    int horizon = 0;
    std::vector<std::pair<int, std::string>> keys;  // unit id, sequence text
    std::vector<TreatmentSequence> sequences;
    std::vector<std::vector<double>> values;
};

CsvRows read_outcome_csv(std::istream& in) {
    CsvRows rows;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!trim(line).empty()) break;
    }
    const auto header = split(trim(line), ',');
    if (header.size() < 3 || header[0] != "unit" || header[1] != "sequence") {
        throw ParseError("header must be unit,sequence,y1,...,yT", row);
    }
    rows.horizon = static_cast<int>(header.size()) - 2;
    for (int t = 1; t <= rows.horizon; ++t) {
        if (header[t + 1] != "y" + std::to_string(t)) throw ParseError("header column " + header[t + 1] + " should be y" + std::to_string(t), row);
    }
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (static_cast<int>(cells.size()) != rows.horizon + 2) {
            throw ParseError("expected " + std::to_string(rows.horizon + 2) + " fields, found " + std::to_string(cells.size()), row);
        }
        const auto z = parse_sequence(cells[1], row);
        if (z.length() != rows.horizon) throw ParseError("sequence " + z.str() + " does not have length " + std::to_string(rows.horizon), row);
        std::vector<double> v;
        for (int t = 0; t < rows.horizon; ++t) v.push_back(parse_real(cells[t + 2], row, "outcome"));
        rows.keys.emplace_back(parse_int(cells[0], row, "unit id"), cells[1]);
        rows.sequences.push_back(z);
        rows.values.push_back(std::move(v));
    }
    return rows;
}

}  // namespace

CrossoverDesign parse_design(std::istream& in) {
    std::optional<int> horizon;
    std::map<TreatmentSequence, int> counts;
    std::optional<std::vector<TreatmentSequence>> scope;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto w = words(line);
        if (w.empty()) continue;
        if (w[0] == "horizon" && w.size() == 2) {
            horizon = parse_int(w[1], row, "horizon");
        } else if (w[0] == "sequence" && w.size() == 3) {
            const auto z = parse_sequence(w[1], row);
            if (counts.count(z)) throw ParseError("sequence " + z.str() + " listed twice", row);
            const int n = parse_int(w[2], row, "count");
            if (n < 1) throw ParseError("count must be positive", row);
            counts.emplace(z, n);
        } else if (w[0] == "scope" && w.size() >= 2) {
            scope.emplace();
            for (std::size_t j = 1; j < w.size(); ++j) scope->push_back(parse_sequence(w[j], row));
        } else {
            throw ParseError("unrecognised design line \"" + trim(line) + "\"", row);
        }
    }
    if (!horizon) throw ParseError("design file lacks a horizon line");
    try {
        return CrossoverDesign(*horizon, std::move(counts), std::move(scope));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(std::string("invalid design: ") + e.what());
    }
}

CrossoverDesign read_design_file(const std::string& path) {
    auto in = open_or_throw(path);
    return parse_design(in);
}

std::string write_design(const CrossoverDesign& design) {
    std::ostringstream os;
    os << "horizon " << design.horizon() << "\n";
    for (const auto& [z, n] : design.counts()) os << "sequence " << z.str() << " " << n << "\n";
    os << "scope";
    for (const auto& z : design.scope()) os << " " << z.str();
    os << "\n";
    return os.str();
}

ObservedDataset parse_dataset(std::istream& in, const std::optional<CrossoverDesign>& design) {
    auto rows = read_outcome_csv(in);
    const int N = static_cast<int>(rows.sequences.size());
    if (N == 0) throw ParseError("dataset has no units");
    Eigen::MatrixXd Y(N, rows.horizon);
    std::map<TreatmentSequence, int> counts;
    for (int i = 0; i < N; ++i) {
        for (int t = 0; t < rows.horizon; ++t) Y(i, t) = rows.values[i][t];
        ++counts[rows.sequences[i]];
    }
    std::optional<CrossoverDesign> d = design;
    if (d) {
        if (d->horizon() != rows.horizon) throw ParseError("dataset horizon differs from the design");
        for (int i = 0; i < N; ++i) {
            if (!d->observed(rows.sequences[i])) throw ParseError("sequence " + rows.sequences[i].str() + " is not in the design", i + 2);
        }
        for (const auto& [z, n] : d->counts()) {
            if (counts[z] != n) {
                throw ParseError("sequence " + z.str() + " has " + std::to_string(counts[z]) + " units, design says " + std::to_string(n));
            }
        }
    } else {
        d.emplace(rows.horizon, counts);
    }
    return ObservedDataset(*d, std::move(rows.sequences), std::move(Y));
}

ObservedDataset read_dataset_file(const std::string& path, const std::optional<CrossoverDesign>& design) {
    auto in = open_or_throw(path);
    return parse_dataset(in, design);
}

std::string write_dataset(const ObservedDataset& data) {
    std::ostringstream os;
    os << "unit,sequence";
    for (int t = 1; t <= data.horizon(); ++t) os << ",y" << t;
    os << "\n";
    for (int i = 0; i < data.units(); ++i) {
        os << i + 1 << "," << data.sequences()[i].str();
        for (int t = 0; t < data.horizon(); ++t) os << "," << format_number(data.outcomes()(i, t));
        os << "\n";
    }
    return os.str();
}

PotentialOutcomeTable parse_table(std::istream& in) {
    auto rows = read_outcome_csv(in);
    std::map<TreatmentSequence, std::map<int, std::vector<double>>> cells;
    for (std::size_t r = 0; r < rows.sequences.size(); ++r) {
        auto& slot = cells[rows.sequences[r]];
        if (slot.count(rows.keys[r].first)) throw ParseError("duplicate (unit, sequence) pair", static_cast<int>(r) + 2);
        slot.emplace(rows.keys[r].first, rows.values[r]);
    }
    if (cells.empty()) throw ParseError("outcome table is empty");
    std::vector<TreatmentSequence> scope;
    std::vector<Eigen::MatrixXd> outcomes;
    const auto& reference = cells.begin()->second;
    for (const auto& [z, units] : cells) {
        if (units.size() != reference.size()) throw ParseError("sequence " + z.str() + " does not list every unit");
        Eigen::MatrixXd Y(units.size(), rows.horizon);
        int i = 0;
        for (const auto& [id, v] : units) {
            if (!reference.count(id)) throw ParseError("unit " + std::to_string(id) + " missing under some sequence");
            for (int t = 0; t < rows.horizon; ++t) Y(i, t) = v[t];
            ++i;
        }
        scope.push_back(z);
        outcomes.push_back(std::move(Y));
    }
    return PotentialOutcomeTable(std::move(scope), std::move(outcomes));
}

std::string write_table(const PotentialOutcomeTable& table) {
    std::ostringstream os;
    os << "unit,sequence";
    for (int t = 1; t <= table.horizon(); ++t) os << ",y" << t;
    os << "\n";
    for (int i = 0; i < table.units(); ++i) {
        for (std::size_t j = 0; j < table.scope().size(); ++j) {
            os << i + 1 << "," << table.scope()[j].str();
            for (int t = 0; t < table.horizon(); ++t) os << "," << format_number(table.outcomes_at(j)(i, t));
            os << "\n";
        }
    }
    return os.str();
}

namespace {

std::map<std::string, std::string> key_values(const std::vector<std::string>& w, std::size_t from) {
    std::map<std::string, std::string> kv;
    for (std::size_t j = from; j < w.size(); ++j) {
        const auto eq = w[j].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value, got \"" + w[j] + "\"");
        kv[w[j].substr(0, eq)] = w[j].substr(eq + 1);
    }
    return kv;
}

int required_int(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("estimand request lacks " + key + "=");
    return parse_int(it->second, 0, key);
}

TreatmentSequence optional_word(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    return it == kv.end() ? TreatmentSequence() : parse_sequence(it->second, 0);
}

}  // namespace

EstimandSpec parse_estimand(const std::string& raw, int T, const std::vector<TreatmentSequence>& scope) {
    const std::string text = trim(raw);
    try {
        if (text.rfind("marginal", 0) == 0) {
            const auto open = text.find('[');
            const auto close = text.rfind(']');
            if (open == std::string::npos || close == std::string::npos || close < open) {
                throw ParseError("marginal request needs [REQ; REQ; ...]");
            }
            if (trim(text.substr(8, open - 8)) != "of") throw ParseError("expected \"marginal of [...]\"");
            std::vector<EstimandSpec> parts;
            for (const auto& piece : split(text.substr(open + 1, close - open - 1), ';')) {
                if (!piece.empty()) parts.push_back(parse_estimand(piece, T, scope));
            }
            if (parts.empty()) throw ParseError("marginal request is empty");
            std::vector<double> weights(parts.size(), 1.0 / parts.size());
            const auto kv = key_values(words(text.substr(close + 1)), 0);
            if (auto it = kv.find("weights"); it != kv.end()) {
                weights.clear();
                for (const auto& w : split(it->second, ',')) weights.push_back(parse_real(w, 0, "weight"));
            }
            return marginal_effect(parts, weights);
        }
        const auto w = words(text);
        if (w.empty()) throw ParseError("empty estimand request");
        if (w[0] == "all-tau" && w.size() == 1) return all_instantaneous_effects(T, scope);
        if (w[0] == "two-period" && w.size() == 1) {
            if (T != 2) throw ParseError("two-period estimands need T = 2");
            return two_period_effects(scope);
        }
        const auto kv = key_values(w, 1);
        if (w[0] == "tau") {
            const int t = required_int(kv, "t");
            if (!kv.count("history") && t > 1) {
                std::vector<EstimandSpec> parts;
                for (const auto& h : full_sequence_set(t - 1)) parts.push_back(instantaneous_effect(t, h, T, scope));
                return marginal_effect(parts, std::vector<double>(parts.size(), 1.0 / parts.size()),
                                       "tau_" + std::to_string(t));
            }
            return instantaneous_effect(t, optional_word(kv, "history"), T, scope);
        }
        if (w[0] == "carry") {
            return carryover_effect(required_int(kv, "t"), required_int(kv, "k"), optional_word(kv, "prefix"),
                                    optional_word(kv, "suffix"), T, scope);
        }
        throw ParseError("unknown estimand request \"" + w[0] + "\"");
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError("estimand \"" + text + "\": " + e.what());
    }
}

EstimandSpec default_estimands(int T, const std::vector<TreatmentSequence>& scope) {
    if (T == 2 && scope == full_sequence_set(2)) return two_period_effects(scope);
    return all_instantaneous_effects(T, scope);
}

WeightModel parse_weights(std::istream& in) {
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("weights file: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("weights file must be an object of sequence -> matrix");
    std::map<TreatmentSequence, Eigen::MatrixXd> omega;
    for (const auto& [key, value] : j.items()) {
        const auto z = parse_sequence(key, 0);
        const int T = static_cast<int>(value.size());
        Eigen::MatrixXd M(T, T);
        for (int a = 0; a < T; ++a) {
            if (!value[a].is_array() || static_cast<int>(value[a].size()) != T) throw ParseError("weight matrix for " + key + " is not square");
            for (int b = 0; b < T; ++b) M(a, b) = value[a][b].get<double>();
        }
        omega.emplace(z, std::move(M));
    }
    return user_weights(std::move(omega));
}

Json design_json(const CrossoverDesign& design) {
    Json seqs = Json::array();
    for (const auto& [z, n] : design.counts()) seqs.push_back({{"sequence", z.str()}, {"count", n}});
    Json scope = Json::array();
    for (const auto& z : design.scope()) scope.push_back(z.str());
    return {{"horizon", design.horizon()}, {"units", design.total()}, {"sequences", seqs}, {"scope", scope}};
}

Json fit_report(const RwlsFit& fit, const EstimateResult& est, const CrossoverDesign& design) {
    Json j;
    j["engine"] = "rwls";
    j["scenario"] = std::string(1, scenario_tag(fit.restriction.scenario));
    j["carryover_order"] = fit.restriction.carryover_order;
    j["design"] = design_json(design);
    j["rank"] = {{"identifiable", fit.rank.identifiable}, {"rank", fit.rank.rank}, {"dimension", fit.rank.dimension}};
    j["restrictions"] = fit.restriction.count();
    j["condition_estimate"] = fit.condition;
    Json coef = Json::array();
    const int T = fit.horizon();
    for (std::size_t s = 0; s < fit.scope().size(); ++s) {
        for (int t = 1; t <= T; ++t) {
            const int c = coefficient_column(static_cast<int>(s), t, T);
            coef.push_back({{"period", t}, {"sequence", fit.scope()[s].str()}, {"estimate", fit.gamma(c)},
                            {"se", fit.covariance.size() ? std::sqrt(std::max(0.0, fit.covariance(c, c))) : 0.0}});
        }
    }
    j["coefficients"] = coef;
    Json rows = Json::array();
    for (std::size_t k = 0; k < est.labels.size(); ++k) {
        rows.push_back({{"name", est.labels[k]}, {"estimate", est.point(k)}, {"se", est.se(k)},
                        {"ci_low", est.ci_low(k)}, {"ci_high", est.ci_high(k)}, {"restricted", bool(est.restricted[k])}});
    }
    j["level"] = est.level;
    j["estimands"] = rows;
    j["wald"] = {{"statistic", est.wald_statistic}, {"df", est.wald_df}, {"critical", est.wald_critical},
                 {"p_value", est.wald_p_value}};
    Json weights;
    weights["provenance"] = provenance_name(fit.weights.provenance);
    weights["repaired"] = fit.weights.repairs;
    Json omega = Json::object();
    for (const auto& [z, m] : fit.weights.omega) {
        Json mat = Json::array();
        for (Eigen::Index a = 0; a < m.rows(); ++a) {
            Json r = Json::array();
            for (Eigen::Index b = 0; b < m.cols(); ++b) r.push_back(m(a, b));
            mat.push_back(r);
        }
        omega[z.str()] = mat;
    }
    weights["omega"] = omega;
    j["weights"] = weights;
    j["warnings"] = fit.warnings;
    return j;
}

Json closed_form_report(const TwoPeriodResult& r, Scenario scenario) {
    Json j;
    j["engine"] = "closed-form";
    j["scenario"] = std::string(1, scenario_tag(scenario));
    Json rows = Json::array();
    for (std::size_t k = 0; k < r.labels.size(); ++k) {
        rows.push_back({{"name", r.labels[k]}, {"estimate", r.estimates(k)},
                        {"conservative_variance", r.variances(k)}, {"se", std::sqrt(std::max(0.0, r.variances(k)))}});
    }
    j["estimands"] = rows;
    if (r.p) j["p"] = *r.p;
    if (!r.not_estimable.empty()) j["not_estimable"] = r.not_estimable;
    return j;
}

Json identification_report(const CrossoverDesign& design, Scenario scenario, int k) {
    const auto C = assemble(scenario, design.horizon(), design.scope(), k);
    const auto rank = is_identifiable(design, C);
    Json j;
    j["scenario"] = std::string(1, scenario_tag(scenario));
    j["carryover_order"] = C.carryover_order;
    j["design"] = design_json(design);
    j["identifiable"] = rank.identifiable;
    j["rank"] = rank.rank;
    j["dimension"] = rank.dimension;
    Json means = Json::array();
    for (const auto& v : mean_identification_table(design, scenario, k)) {
        means.push_back({{"sequence", v.sequence.str()}, {"period", v.period}, {"identified", v.identified}, {"detail", v.detail}});
    }
    j["means"] = means;
    return j;
}

Json mc_report_json(const McReport& report) {
    Json j;
    j["scenario"] = std::string(1, report.scenario);
    j["units"] = report.units;
    j["replications"] = report.replications;
    j["seed"] = report.seed;
    Json rows = Json::array();
    for (const auto& s : report.estimands) {
        Json r = {{"name", s.label},
                  {"truth", s.truth},
                  {"restricted", s.restricted},
                  {"mean_bias", s.mean_bias},
                  {"empirical_variance", s.empirical_variance},
                  {"empirical_variance_se", s.empirical_variance_se},
                  {"mean_ehw_variance", s.mean_ehw_variance},
                  {"mean_ehw_variance_se", s.mean_ehw_variance_se},
                  {"coverage", s.coverage}};
        r["oracle_variance"] = s.oracle_variance ? Json(*s.oracle_variance) : Json(nullptr);
        rows.push_back(r);
    }
    j["estimands"] = rows;
    return j;
}

Json audit_json(const AuditResult& a) {
    Json rows = Json::array();
    for (std::size_t k = 0; k < a.labels.size(); ++k) {
        rows.push_back({{"name", a.labels[k]}, {"truth", a.truth(k)}, {"exact_mean", a.exact_mean(k)},
                        {"exact_variance", a.exact_variance(k, k)}, {"oracle_variance", a.formula_variance(k, k)}});
    }
    return {{"assignments", a.assignments}, {"max_restriction_violation", a.max_restriction_violation}, {"estimands", rows}};
}

ScenarioGenerator parse_generator(const Json& j) {
    ScenarioGenerator g;
    try {
        const std::string kind = j.value("kind", std::string("gaussian"));
        if (kind == "gaussian") g.kind = GeneratorKind::gaussian_model;
        else if (kind == "constant") g.kind = GeneratorKind::constant_effect;
        else throw ParseError("generator kind must be gaussian or constant");
        g.scenario = parse_scenario(j.value("scenario", std::string("a")));
        if (j.contains("beta1")) for (int z = 0; z < 4; ++z) g.beta1(z) = j.at("beta1").at(z).get<double>();
        if (j.contains("beta2")) for (int z = 0; z < 4; ++z) g.beta2(z) = j.at("beta2").at(z).get<double>();
        g.rho = j.value("rho", g.rho);
        g.tau1 = j.value("tau1", g.tau1);
        g.tau2_b = j.value("tau2_b", g.tau2_b);
        g.carry_a = j.value("carry_a", g.carry_a);
        g.carry_b = j.value("carry_b", g.carry_b);
        g.seed = j.value("seed", g.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("generator config: ") + e.what());
    }
    return g;
}

}  // namespace crossover
