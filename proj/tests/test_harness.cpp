#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "abcsmc/config.hpp"
#include "abcsmc/csv.hpp"
#include "abcsmc/diagnostics.hpp"
#include "abcsmc/error.hpp"
#include "abcsmc/runio.hpp"
#include "abcsmc/svgplot.hpp"

using namespace abcsmc;

namespace {

const std::string kDataDir = std::string(ABCSMC_SOURCE_DIR) + "/data";

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("toml subset parsing") {
    const std::string text =
        "# comment\n"
        "[run]\n"
        "model = \"gm\"   # trailing comment\n"
        "omega = 0.5\n"
        "fallback = false\n"
        "[grid]\n"
        "kernel = [\"one_hit\", \"abc_mh\"]\n"
        "replications = 2\n";
    const TomlFile file = parse_toml(text);
    CHECK(file.at("run").at("model").str == "gm");
    CHECK(file.at("run").at("omega").num == doctest::Approx(0.5));
    CHECK(file.at("grid").at("kernel").array.size() == 2);

    CHECK_THROWS_WITH_AS(parse_toml("[run]\nmodel \"gm\"\n"),
                         doctest::Contains("line 2"), Error);
    CHECK_THROWS_WITH_AS(parse_toml("[run]\nmodel = \"gm\n"),
                         doctest::Contains("unterminated"), Error);
}

TEST_CASE("grid expansion counts and seed sharing") {
    const std::string text =
        "[run]\n"
        "seed = 42\n"
        "proposal = \"mixture\"\n"
        "max_iterations = 3\n"
        "[grid]\n"
        "model = [\"gm\", \"quadratic\"]\n"
        "kernel = [\"one_hit\", \"abc_mh\"]\n"
        "replications = 3\n";
    const auto cells = expand_config(text);
    CHECK(cells.size() == 12);

    std::set<std::string> names;
    for (const auto& c : cells) names.insert(c.run_name());
    CHECK(names.size() == 12);

    // equal replication index => equal run seed across models and kernels
    for (const auto& a : cells)
        for (const auto& b : cells)
            if (a.replication == b.replication)
                CHECK(a.run_seed() == b.run_seed());
    CHECK(cells[0].run_seed() != derive_run_seed(42, 1));
}

TEST_CASE("config validation and compatibility") {
    CHECK_THROWS_WITH_AS(expand_config("[run]\nmodel = \"gm\"\n"),
                         doctest::Contains("config-invalid"), Error);
    CHECK_THROWS_WITH_AS(
        expand_config("[run]\nmodel = \"gm\"\nmax_iterations = 2\nbogus = 1\n"),
        doctest::Contains("bogus"), Error);

    ExperimentConfig cfg;
    cfg.model = "gm";
    cfg.kernel = KernelFamily::ind_one_hit;
    cfg.proposal = ProposalType::classic_rw;
    CHECK(cfg.compatibility_error(false) ==
          "ind_one_hit requires an independence proposal");
    cfg.proposal = ProposalType::mixture;
    CHECK(cfg.compatibility_error(false).empty());

    cfg.kernel = KernelFamily::r_hit_single;
    CHECK(cfg.compatibility_error(false) ==
          "r_hit_single is gated behind --allow-inefficient");
    CHECK(cfg.compatibility_error(true).empty());

    cfg.kernel = KernelFamily::one_hit;
    cfg.fallback = true;
    CHECK(!cfg.compatibility_error(false).empty());
    cfg.proposal = ProposalType::flow;
    CHECK(cfg.compatibility_error(false).empty());
}

TEST_CASE("significant figure rendering") {
    CHECK(format_sig3(0.0058462) == "5.85e-03");
    CHECK(format_sig3(25.46) == "25.5");
    CHECK(format_sig3(0.0988) == "0.0988");
    CHECK(format_sig3(1.4534e-4) == "1.45e-04");
    CHECK(format_sig3(0.0) == "0");
    CHECK(format_sig3(0.267) == "0.267");
    CHECK(format_sig3(1.39) == "1.39");
    CHECK(format_sig3(2040.0) == "2.04e+03");
    CHECK(format_sig3(-0.0058462) == "-5.85e-03");
}

TEST_CASE("trace aggregation and best flagging") {
    SUBCASE("singleton and arithmetic means") {
        std::vector<RunSummaryInput> one = {{"g", 0.7, 0.3}};
        const auto rows = trace_aggregate(one);
        CHECK(rows.size() == 1);
        CHECK(rows[0].mean_final_epsilon == doctest::Approx(0.7));
        CHECK(*rows[0].mean_wasserstein == doctest::Approx(0.3));

        std::vector<RunSummaryInput> five;
        for (int i = 1; i <= 5; ++i)
            five.push_back({"g", static_cast<double>(i), std::nullopt});
        CHECK(trace_aggregate(five)[0].mean_final_epsilon == doctest::Approx(3.0));
    }
    SUBCASE("rank flags follow the argmin order") {
        std::vector<RunSummaryInput> runs = {{"m/a", 3.0, std::nullopt},
                                             {"m/b", 1.0, std::nullopt},
                                             {"m/c", 2.0, std::nullopt},
                                             {"other/x", 0.1, std::nullopt}};
        const auto rows = trace_aggregate(runs);
        const std::string table = render_summary_table(rows, "eps");
        const auto line_of = [&](const std::string& g) {
            const auto pos = table.find('\n' + g);
            return table.substr(pos + 1, table.find('\n', pos + 1) - pos - 1);
        };
        CHECK(line_of("m/b").find("best") != std::string::npos);
        CHECK(line_of("m/c").find("2nd") != std::string::npos);
        CHECK(line_of("m/a").find("3rd") != std::string::npos);
        CHECK(line_of("other/x").find("best") != std::string::npos);
    }
    SUBCASE("empty group errors") {
        CHECK_THROWS_WITH_AS(trace_aggregate({}), doctest::Contains("empty-group"),
                             Error);
    }
}

TEST_CASE("run record json round trip and determinism replay") {
    ExperimentConfig cfg;
    cfg.model = "gm";
    cfg.kernel = KernelFamily::one_hit;
    cfg.proposal = ProposalType::mixture;
    cfg.components = 3;
    cfg.n_particles = 100;
    cfg.max_iterations = 3;
    cfg.seed = 4711;

    const RunRecord record = execute_run(cfg, kDataDir, 1);
    CHECK(record.schema == 1);
    CHECK(record.iterations.size() == 3);
    CHECK(*record.config.max_iterations == 3);

    const std::string json1 = run_record_to_json(record);
    const RunRecord parsed = run_record_from_json(json1);
    CHECK(run_record_to_json(parsed) == json1);

    // replay of the echoed config reproduces epsilon and the sample exactly
    const RunRecord replay = execute_run(record.config, kDataDir, 1);
    CHECK(replay.diagnostics.final_epsilon == record.diagnostics.final_epsilon);
    CHECK(replay.output_sample.data == record.output_sample.data);
    CHECK(records_equal_modulo_timing(replay, record));

    const RunRecord parallel = execute_run(record.config, kDataDir, 4);
    CHECK(parallel.output_sample.data == record.output_sample.data);
}

TEST_CASE("trace csv columns are pinned") {
    IterationTrace t;
    t.t = 1;
    t.epsilon = 0.5;
    t.n_simulations = 123;
    const std::string path = tmp_path("abcsmc_trace_test.csv");
    write_trace_csv(path, {t});
    const CsvTable table = read_csv(path);
    const std::vector<std::string> expected = {
        "t",           "epsilon",
        "wall_clock_s", "n_simulations",
        "accept_rate", "unique_after_resample",
        "proposal_fit_s"};
    CHECK(table.columns == expected);
    CHECK(table.values(0, 3) == doctest::Approx(123.0));
    std::filesystem::remove(path);
}

TEST_CASE("svg log-scale polyline is straight for halving epsilon") {
    PlotSeries s;
    s.label = "one_hit/mixture";
    for (int t = 1; t <= 12; ++t)
        s.points.emplace_back(static_cast<double>(t), std::pow(2.0, -t));
    PlotSpec spec;
    spec.title = "epsilon vs iteration";
    spec.log_y = true;
    const std::string svg = render_line_chart(spec, {s});
    CHECK(svg.find("viewBox=\"0 0 800 600\"") != std::string::npos);
    CHECK(svg.find(series_colour(s.label)) != std::string::npos);

    const auto start = svg.find("points=\"");
    REQUIRE(start != std::string::npos);
    const auto end = svg.find('"', start + 8);
    std::istringstream pts(svg.substr(start + 8, end - start - 8));
    std::vector<std::pair<double, double>> coords;
    std::string pair;
    while (pts >> pair) {
        const auto comma = pair.find(',');
        coords.emplace_back(std::stod(pair.substr(0, comma)),
                            std::stod(pair.substr(comma + 1)));
    }
    REQUIRE(coords.size() == 12);
    const double slope0 = (coords[1].second - coords[0].second) /
                          (coords[1].first - coords[0].first);
    for (std::size_t i = 1; i + 1 < coords.size(); ++i) {
        const double slope = (coords[i + 1].second - coords[i].second) /
                             (coords[i + 1].first - coords[i].first);
        CHECK(slope == doctest::Approx(slope0).epsilon(1e-6));
    }
}

TEST_CASE("observed targets resolve from the data directory") {
    const ObservedTarget gm = load_observed_target("gm", std::nullopt, kDataDir);
    CHECK(gm.y0_summary == Vector{0.0});

    const ObservedTarget mg1 = load_observed_target("mg1", std::nullopt, kDataDir);
    CHECK(mg1.y0_raw.size() == 20);
    CHECK(mg1.y0_summary.size() == 5);

    const ObservedTarget seir = load_observed_target("seir", std::nullopt, kDataDir);
    CHECK(seir.model->dim_summary() == static_cast<int>(seir.y0_raw.size()));

    const ObservedTarget slcp = load_observed_target("slcp", std::nullopt, kDataDir);
    CHECK(slcp.y0_raw.size() == 8);
}

TEST_CASE("build_report contracts") {
    SmcResult run;
    CHECK_THROWS_WITH_AS(build_report(run, std::nullopt),
                         doctest::Contains("no-complete-iteration"), Error);

    IterationTrace t;
    t.t = 1;
    t.epsilon = 0.25;
    run.iterations.push_back(t);
    run.output_thetas = Matrix(4, 1);
    for (std::size_t i = 0; i < 4; ++i) run.output_thetas(i, 0) = 0.1 * i;
    const DiagnosticsReport no_ref = build_report(run, std::nullopt);
    CHECK(no_ref.final_epsilon == doctest::Approx(0.25));
    CHECK(no_ref.final_iteration == 1);
    CHECK(!no_ref.wasserstein);

    Matrix ref(8, 1);
    for (std::size_t i = 0; i < 8; ++i) ref(i, 0) = 0.05 * i;
    const DiagnosticsReport with_ref = build_report(run, ref);
    REQUIRE(with_ref.wasserstein.has_value());
    CHECK(*with_ref.wasserstein >= 0.0);
}

}  // TEST_SUITE
