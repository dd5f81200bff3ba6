#include "crossover/cli.hpp"

#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "crossover/errors.hpp"
#include "crossover/io.hpp"

namespace crossover::cli {

namespace {

struct Options {
    std::string design_path;
    std::string data_path;
    std::string table_path;
    std::string config_path;
    std::string scenario = "a";
    int k = 1;
    std::vector<std::string> estimands;
    std::string weights = "sample";
    std::string scope;
    double level = 0.95;
    std::uint64_t seed = 1;
    int reps = 2000;
    int threads = 0;
    std::string out;
    std::string engine = "auto";
    std::string dump_restrictions;
    std::string bias_csv;
    std::string write_data;
    bool hc1 = false;
};

void emit(const Options& o, const std::string& text, std::ostream& out) {
    if (o.out.empty()) {
        out << text;
        return;
    }
    std::ofstream f(o.out);
    if (!f) throw Error("cannot write " + o.out);
    f << text;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << text;
}

std::vector<TreatmentSequence> parse_scope(const std::string& text) {
    std::vector<TreatmentSequence> scope;
    std::string word;
    std::istringstream is(text);
    while (std::getline(is, word, ',')) {
        std::istringstream ws(word);
        std::string w;
        while (ws >> w) scope.emplace_back(w);
    }
    if (scope.empty()) throw ParseError("--scope is empty");
    return scope;
}

CrossoverDesign apply_scope(CrossoverDesign design, const Options& o) {
    if (o.scope.empty()) return design;
    return design.with_scope(parse_scope(o.scope));
}

Json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

CrossoverDesign design_from_json(const Json& j) {
    try {
        std::map<TreatmentSequence, int> counts;
        for (const auto& [z, n] : j.at("sequences").items()) counts.emplace(TreatmentSequence(z), n.get<int>());
        std::optional<std::vector<TreatmentSequence>> scope;
        if (j.contains("scope")) {
            scope.emplace();
            for (const auto& z : j.at("scope")) scope->emplace_back(z.get<std::string>());
        }
        return CrossoverDesign(j.at("horizon").get<int>(), std::move(counts), std::move(scope));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("design object: ") + e.what());
    }
}

EstimandSpec requested_estimands(const std::vector<std::string>& requests, const CrossoverDesign& design) {
    if (requests.empty()) return default_estimands(design.horizon(), design.scope());
    std::vector<EstimandSpec> specs;
    for (const auto& r : requests) specs.push_back(parse_estimand(r, design.horizon(), design.scope()));
    return stack(specs);
}

Scenario scenario_arg(const std::string& text) {
    try {
        return parse_scenario(text);
    } catch (const ParameterError& e) {
        throw ParseError(e.what());
    }
}

WeightChoice weight_choice(const std::string& text) {
    WeightChoice choice;
    if (text == "sample") {
        choice.kind = WeightProvenance::sample;
    } else if (text == "pooled") {
        choice.kind = WeightProvenance::pooled;
    } else {
        std::ifstream in(text);
        if (!in) throw ParseError("--weights must be sample, pooled or a readable JSON file");
        choice.kind = WeightProvenance::user;
        choice.user = parse_weights(in);
    }
    return choice;
}

CrossoverDesign design_for(const Options& o) {
    if (!o.design_path.empty()) return apply_scope(read_design_file(o.design_path), o);
    if (!o.data_path.empty()) return apply_scope(read_dataset_file(o.data_path).design(), o);
    throw ParseError("need --design or --data");
}

int cmd_identify(const Options& o, std::ostream& out) {
    const auto design = design_for(o);
    const Scenario scenario = scenario_arg(o.scenario);
    const Json report = identification_report(design, scenario, o.k);
    if (!o.dump_restrictions.empty()) {
        write_file(o.dump_restrictions, restriction_csv(assemble(scenario, design.horizon(), design.scope(), o.k)));
    }
    emit(o, report.dump(2) + "\n", out);
    return report["identifiable"].get<bool>() ? ok : not_identifiable;
}

int cmd_fit(const Options& o, std::ostream& out) {
    if (o.data_path.empty()) throw ParseError("fit needs --data");
    std::optional<CrossoverDesign> design;
    if (!o.design_path.empty()) design = read_design_file(o.design_path);
    auto data = read_dataset_file(o.data_path, design);
    if (!o.scope.empty()) {
        data = ObservedDataset(apply_scope(data.design(), o), data.sequences(), data.outcomes());
    }
    const Scenario scenario = scenario_arg(o.scenario);
    const auto choice = weight_choice(o.weights);
    const RestrictionMatrix C = assemble(scenario, data.horizon(), data.design().scope(), o.k);
    if (!o.dump_restrictions.empty()) write_file(o.dump_restrictions, restriction_csv(C));

    if (o.engine == "closed-form") {
        if (data.horizon() != 2) throw ParseError("the closed-form engine needs T = 2");
        const auto weights = estimate_weights(data, C, choice);
        const auto r = closed_form(summarize(data, weights), scenario);
        emit(o, closed_form_report(r, scenario).dump(2) + "\n", out);
        return ok;
    }
    if (o.engine != "auto" && o.engine != "rwls") throw ParseError("--engine must be auto, rwls or closed-form");
    const auto spec = requested_estimands(o.estimands, data.design());
    FitOptions options;
    options.hc1 = o.hc1;
    const auto fit = feasible_rwls(data, C, choice, options);
    const auto est = estimate(fit, spec, o.level);
    emit(o, fit_report(fit, est, data.design()).dump(2) + "\n", out);
    return ok;
}

struct Study {
    ScenarioGenerator generator;
    CrossoverDesign design{2, {{TreatmentSequence("AB"), 1}, {TreatmentSequence("BA"), 1}}};
    Json config;
};

Study load_study(const Options& o) {
    if (o.config_path.empty()) throw ParseError("need --config");
    Study s;
    s.config = read_json(o.config_path);
    s.generator = parse_generator(s.config.value("generator", Json::object()));
    if (s.config.contains("design_file")) {
        s.design = read_design_file(s.config["design_file"].get<std::string>());
    } else if (s.config.contains("design")) {
        s.design = design_from_json(s.config["design"]);
    } else {
        throw ParseError("config needs design or design_file");
    }
    s.design = apply_scope(s.design, o);
    return s;
}

int cmd_simulate(const Options& o, const CLI::App& sub, std::ostream& out) {
    const Study s = load_study(o);
    const Json& j = s.config;
    McConfig config;
    try {
        config.scenario = scenario_arg(sub.count("--scenario") ? o.scenario : j.value("scenario", o.scenario));
        config.carryover_order = sub.count("--k") ? o.k : j.value("k", o.k);
        config.replications = sub.count("--reps") ? o.reps : j.value("replications", o.reps);
        config.seed = sub.count("--seed") ? o.seed : j.value("seed", o.seed);
        config.level = sub.count("--level") ? o.level : j.value("level", o.level);
        config.hc1 = o.hc1 || j.value("hc1", false);
        config.weights = weight_choice(sub.count("--weights") ? o.weights : j.value("weights", o.weights));
        config.threads = o.threads;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    std::vector<std::string> requests = o.estimands;
    if (requests.empty() && j.contains("estimands")) requests = j["estimands"].get<std::vector<std::string>>();
    const auto spec = requested_estimands(requests, s.design);
    const auto table = generate_table(s.generator, s.design.total(), s.design);
    if (!o.write_data.empty()) {
        const auto data = observe(s.design, sample_assignment(s.design, stream_seed(config.seed, 0)), table);
        write_file(o.write_data, write_dataset(data));
    }
    const auto report = run_monte_carlo(table, s.design, spec, config);
    if (!o.bias_csv.empty()) write_file(o.bias_csv, emit_bias_distribution(report));
    emit(o, mc_report_json(report).dump(2) + "\n", out);
    return ok;
}

int cmd_audit(const Options& o, std::ostream& out) {
    std::optional<PotentialOutcomeTable> table;
    std::optional<CrossoverDesign> design;
    if (!o.table_path.empty()) {
        std::ifstream in(o.table_path);
        if (!in) throw ParseError("cannot open " + o.table_path);
        table = parse_table(in);
        if (o.design_path.empty()) throw ParseError("audit with --table needs --design");
        design = read_design_file(o.design_path).with_scope(table->scope());
    } else {
        const Study s = load_study(o);
        design = s.design;
        table = generate_table(s.generator, s.design.total(), s.design);
    }
    const Scenario scenario = scenario_arg(o.scenario);
    const auto C = assemble(scenario, design->horizon(), design->scope(), o.k);
    const auto spec = requested_estimands(o.estimands, *design);
    WeightModel weights;
    if (o.weights == "true" || o.weights == "sample") {
        weights = true_weights(*table, *design);
    } else {
        std::ifstream in(o.weights);
        if (!in) throw ParseError("--weights must be true or a readable JSON file");
        weights = parse_weights(in);
    }
    const auto audit = exact_randomization_audit(*table, *design, spec, weights, C);
    emit(o, audit_json(audit).dump(2) + "\n", out);
    return ok;
}

void common(CLI::App* sub, Options& o) {
    sub->add_option("--design", o.design_path, "design file");
    sub->add_option("--scenario", o.scenario, "a, b or c");
    sub->add_option("--k", o.k, "carryover order");
    sub->add_option("--scope", o.scope, "comma separated sequences in the model scope");
    sub->add_option("--out", o.out, "output path (default stdout)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Design-based analysis of crossover experiments"};
    app.require_subcommand(1);

    auto* identify = app.add_subcommand("identify", "rank condition and mean identification table");
    common(identify, o);
    identify->add_option("--data", o.data_path, "dataset CSV (design inferred)");
    identify->add_option("--dump-restrictions", o.dump_restrictions, "write the restriction matrix as CSV");

    auto* fit = app.add_subcommand("fit", "restricted weighted least squares fit");
    common(fit, o);
    fit->add_option("--data", o.data_path, "dataset CSV")->required();
    fit->add_option("--estimand", o.estimands, "estimand request (repeatable)");
    fit->add_option("--weights", o.weights, "sample, pooled or a JSON file");
    fit->add_option("--level", o.level, "confidence level");
    fit->add_option("--engine", o.engine, "auto, rwls or closed-form");
    fit->add_flag("--hc1", o.hc1, "degrees-of-freedom correction");
    fit->add_option("--dump-restrictions", o.dump_restrictions, "write the restriction matrix as CSV");

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo study from a JSON config");
    common(simulate, o);
    simulate->add_option("--config", o.config_path, "study config JSON")->required();
    simulate->add_option("--estimand", o.estimands, "estimand request (repeatable)");
    simulate->add_option("--weights", o.weights, "sample, pooled or a JSON file");
    simulate->add_option("--level", o.level, "confidence level");
    simulate->add_option("--seed", o.seed, "base seed");
    simulate->add_option("--reps", o.reps, "replications");
    simulate->add_option("--threads", o.threads, "worker threads (0: all cores)");
    simulate->add_option("--bias-csv", o.bias_csv, "write per-replication bias");
    simulate->add_option("--write-data", o.write_data, "write the first replication's dataset");
    simulate->add_flag("--hc1", o.hc1, "degrees-of-freedom correction");

    auto* audit = app.add_subcommand("audit", "exact randomization distribution over all assignments");
    common(audit, o);
    audit->add_option("--table", o.table_path, "potential outcome table CSV");
    audit->add_option("--config", o.config_path, "study config JSON (generates the table)");
    audit->add_option("--estimand", o.estimands, "estimand request (repeatable)");
    audit->add_option("--weights", o.weights, "true or a JSON file");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return parse_failure;
    }

    try {
        if (identify->parsed()) return cmd_identify(o, out);
        if (fit->parsed()) return cmd_fit(o, out);
        if (simulate->parsed()) return cmd_simulate(o, *simulate, out);
        return cmd_audit(o, out);
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return parse_failure;
    } catch (const NotIdentifiable& e) {
        err << "not identifiable: " << e.what() << "\n";
        return not_identifiable;
    } catch (const ConditioningError& e) {
        err << "conditioning: " << e.what() << "\n";
        return conditioning;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return failure;
    }
}

}  // namespace crossover::cli
