#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "crossover/cli.hpp"
#include "crossover/errors.hpp"
#include "crossover/io.hpp"
#include "support.hpp"

using namespace crossover;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("crossover_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content = "") const {
        const auto p = (path / name).string();
        if (!content.empty()) std::ofstream(p) << content;
        return p;
    }
};

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string three_period_csv(std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::ostringstream os;
    os << "unit,sequence,y1,y2,y3\n";
    int id = 1;
    for (const char* z : {"AAB", "ABA", "BAA"}) {
        for (int i = 0; i < 6; ++i) {
            os << id++ << "," << z;
            for (int t = 1; t <= 3; ++t) os << "," << format_number(g(rng) + (z[t - 1] == 'A'));
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace

TEST(Io, FormatNumberRoundTrips) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (int i = 0; i < 1000; ++i) {
        const double x = g(rng) * std::pow(10.0, i % 40 - 20);
        EXPECT_EQ(std::stod(format_number(x)), x);
    }
}

TEST(Io, DesignFileRoundTrip) {
    std::istringstream in("# comment\nhorizon 2\nsequence AB 3  # trailing\n\nsequence BA 2\nscope AA AB BA\n");
    const auto d = parse_design(in);
    EXPECT_EQ(d.total(), 5);
    EXPECT_EQ(d.scope().size(), 3u);
    std::istringstream again(write_design(d));
    const auto e = parse_design(again);
    EXPECT_EQ(e.counts(), d.counts());
    EXPECT_EQ(e.scope(), d.scope());
    std::istringstream bad("horizon 2\nsequence AX 3\n");
    try {
        parse_design(bad);
        FAIL();
    } catch (const ParseError& err) {
        EXPECT_EQ(err.row(), 2);
    }
    std::istringstream missing("sequence AB 3\n");
    EXPECT_THROW(parse_design(missing), ParseError);
}

TEST(Io, DatasetRoundTripIsBitExact) {
    std::mt19937_64 rng(9);
    std::istringstream in(three_period_csv(rng));
    const auto data = parse_dataset(in);
    EXPECT_EQ(data.units(), 18);
    EXPECT_EQ(data.design().count(TreatmentSequence("ABA")), 6);
    std::istringstream again(write_dataset(data));
    const auto back = parse_dataset(again, data.design());
    EXPECT_EQ(back.outcomes(), data.outcomes());
    EXPECT_EQ(back.sequences(), data.sequences());
}

TEST(Io, DatasetErrorsCarryRowNumbers) {
    auto row_of = [](const std::string& text) {
        std::istringstream in(text);
        try {
            parse_dataset(in);
        } catch (const ParseError& e) {
            return e.row();
        }
        return -1;
    };
    EXPECT_EQ(row_of("unit,sequence,y1,y2\n1,AB,1,2\n2,BA,x,3\n"), 3);
    EXPECT_EQ(row_of("unit,sequence,y1,y2\n1,AB,1,2\n2,BA,1\n"), 3);
    EXPECT_EQ(row_of("unit,sequence,y1,y2\n1,AC,1,2\n"), 2);
    EXPECT_EQ(row_of("unit,sequence,y1,y2\n1,ABA,1,2\n"), 2);
    EXPECT_EQ(row_of("id,sequence,y1\n"), 1);
    std::istringstream in("unit,sequence,y1,y2\n1,AB,1,2\n2,BA,1,2\n");
    EXPECT_THROW(parse_dataset(in, support::make_design(2, {{"AB", 2}, {"BA", 1}})), ParseError);
}

TEST(Io, TableRoundTrip) {
    std::mt19937_64 rng(5);
    const auto C = assemble(Scenario::b, 2, full_sequence_set(2), 1);
    const auto table = support::random_table(C, 4, rng);
    std::istringstream in(write_table(table));
    const auto back = parse_table(in);
    for (const auto& z : table.scope()) EXPECT_EQ(back.outcomes(z), table.outcomes(z));
}

TEST(Io, EstimandGrammar) {
    const auto S = full_sequence_set(3);
    EXPECT_EQ(parse_estimand("tau t=2 history=A", 3, S).labels()[0], "tau_2(A)");
    EXPECT_EQ(parse_estimand("tau t=1", 3, S).labels()[0], "tau_1");
    const auto marginal = parse_estimand("tau t=3", 3, S);
    EXPECT_EQ(marginal.labels()[0], "tau_3");
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(1, marginal.matrix().cols());
    for (const char* h : {"AA", "AB", "BA", "BB"}) avg += 0.25 * instantaneous_effect(3, TreatmentSequence(h), 3, S).matrix();
    EXPECT_LT((marginal.matrix() - avg).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(parse_estimand("carry t=3 k=1 prefix=A suffix=B", 3, S).labels()[0], "tau_3^1(A,B)");
    const auto m = parse_estimand("marginal of [tau t=2 history=A; tau t=2 history=B] weights=0.3,0.7", 3, S);
    EXPECT_EQ(m.dimension(), 1);
    EXPECT_EQ(parse_estimand("all-tau", 3, S).dimension(), 7);
    EXPECT_EQ(parse_estimand("two-period", 2, full_sequence_set(2)).dimension(), 5);
    EXPECT_THROW(parse_estimand("tau t=2 history=AB", 3, S), ParseError);
    EXPECT_THROW(parse_estimand("effect t=2", 3, S), ParseError);
    EXPECT_THROW(parse_estimand("marginal of [tau t=1] weights=0.5", 3, S), ParseError);
    EXPECT_THROW(parse_estimand("tau t=x", 3, S), ParseError);
}

TEST(Cli, ThreePeriodFitReportsRequestedRows) {
    TempDir dir;
    std::mt19937_64 rng(3);
    const auto data = dir.file("data.csv", three_period_csv(rng));
    const auto report = dir.file("fit.json");
    const auto dump = dir.file("C.csv");
    const auto r = cli_run({"fit", "--data", data, "--scenario", "b", "--k", "1", "--estimand", "tau t=1", "--estimand",
                            "tau t=2", "--estimand", "tau t=3", "--out", report, "--dump-restrictions", dump});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(report);
    const auto j = Json::parse(in);
    ASSERT_EQ(j["estimands"].size(), 3u);
    EXPECT_EQ(j["estimands"][2]["name"], "tau_3");
    EXPECT_TRUE(j["rank"]["identifiable"].get<bool>());
    EXPECT_EQ(j["weights"]["provenance"], "sample");
    for (const auto& e : j["estimands"]) EXPECT_LT(e["ci_low"].get<double>(), e["ci_high"].get<double>());
    EXPECT_TRUE(fs::exists(dump));
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    const auto bad = dir.file("bad.csv", "unit,sequence,y1,y2\n1,AB,1,2\n2,BA,oops,2\n");
    auto r = cli_run({"fit", "--data", bad});
    EXPECT_EQ(r.code, cli::parse_failure);
    EXPECT_NE(r.err.find("row 3"), std::string::npos);

    const auto two = dir.file("two.csv", "unit,sequence,y1,y2\n1,AB,1,2\n2,AB,2,2.5\n3,BA,0,1\n4,BA,0.5,3\n");
    EXPECT_EQ(cli_run({"fit", "--data", two, "--scenario", "a"}).code, cli::not_identifiable);
    EXPECT_EQ(cli_run({"fit", "--data", two, "--scenario", "b"}).code, cli::ok);
    EXPECT_EQ(cli_run({"fit", "--data", two, "--scenario", "a", "--scope", "AB,BA", "--estimand", "tau t=1"}).code, cli::ok);
    EXPECT_EQ(cli_run({"fit", "--data", two, "--scenario", "q"}).code, cli::parse_failure);
    EXPECT_EQ(cli_run({"fit", "--data", two, "--engine", "closed-form", "--scenario", "c"}).code, cli::ok);
    EXPECT_EQ(cli_run({"identify", "--data", two, "--scenario", "a"}).code, cli::not_identifiable);
    EXPECT_EQ(cli_run({"identify", "--data", two, "--scenario", "b"}).code, cli::ok);
    EXPECT_EQ(cli_run({"frobnicate"}).code, cli::parse_failure);
    EXPECT_EQ(cli_run({"fit"}).code, cli::parse_failure);

    // Identical rows give zero sample covariances; the PD floor keeps both engines defined.
    const auto flat = dir.file("flat.csv", "unit,sequence,y1,y2\n1,AB,1,1\n2,AB,1,1\n3,BA,1,1\n4,BA,1,1\n");
    EXPECT_EQ(cli_run({"fit", "--data", flat, "--scenario", "c", "--engine", "closed-form"}).code, cli::ok);
    const auto repaired = cli_run({"fit", "--data", flat, "--scenario", "b"});
    ASSERT_EQ(repaired.code, cli::ok) << repaired.err;
    EXPECT_EQ(Json::parse(repaired.out)["weights"]["repaired"].size(), 2u);
}

TEST(Cli, SimulateWritesReproducibleOutputs) {
    TempDir dir;
    const auto config = dir.file("study.json", R"({
      "generator": {"kind": "gaussian", "scenario": "b", "seed": 5},
      "design": {"horizon": 2, "sequences": {"AA": 6, "AB": 6, "BA": 6, "BB": 6}},
      "scenario": "b", "replications": 30, "seed": 17
    })");
    const auto first = cli_run({"simulate", "--config", config, "--bias-csv", dir.file("bias.csv"),
                                "--write-data", dir.file("d.csv")});
    ASSERT_EQ(first.code, 0) << first.err;
    const auto second = cli_run({"simulate", "--config", config, "--threads", "2"});
    EXPECT_EQ(first.out, second.out);
    const auto j = Json::parse(first.out);
    EXPECT_EQ(j["replications"], 30);
    EXPECT_EQ(j["estimands"].size(), 5u);
    // The written dataset fits through the CLI.
    EXPECT_EQ(cli_run({"fit", "--data", dir.file("d.csv"), "--scenario", "b"}).code, 0);
    const auto audit = cli_run({"audit", "--config", dir.file("small.json", R"({
      "generator": {"kind": "constant", "scenario": "b", "tau1": 1.0, "tau2_b": 0.5},
      "design": {"horizon": 2, "sequences": {"AA": 2, "AB": 2, "BA": 2, "BB": 2}}
    })"), "--scenario", "b"});
    ASSERT_EQ(audit.code, 0) << audit.err;
    const auto a = Json::parse(audit.out);
    EXPECT_EQ(a["assignments"], 2520);
    for (const auto& e : a["estimands"]) {
        EXPECT_NEAR(e["exact_mean"].get<double>(), e["truth"].get<double>(), 1e-9);
        EXPECT_NEAR(e["exact_variance"].get<double>(), e["oracle_variance"].get<double>(), 1e-9);
    }
}

TEST(Cli, UserWeightsFile) {
    TempDir dir;
    const auto two = dir.file("two.csv", "unit,sequence,y1,y2\n1,AB,1,2\n2,AB,2,2.5\n3,BA,0,1\n4,BA,0.5,3\n");
    const auto w = dir.file("w.json", R"({"AB": [[1, 0.2], [0.2, 1]], "BA": [[2, 0], [0, 1]]})");
    const auto r = cli_run({"fit", "--data", two, "--scenario", "b", "--weights", w});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(Json::parse(r.out)["weights"]["provenance"], "user");
    EXPECT_EQ(cli_run({"fit", "--data", two, "--scenario", "b", "--weights", dir.file("nope.json")}).code, cli::parse_failure);
}
