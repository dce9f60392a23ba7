#include <glob.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "abcsmc/csv.hpp"
#include "abcsmc/diagnostics.hpp"
#include "abcsmc/error.hpp"
#include "abcsmc/reference.hpp"
#include "abcsmc/runio.hpp"
#include "abcsmc/svgplot.hpp"

namespace {

using namespace abcsmc;

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_config = 2;
constexpr int exit_no_iteration = 3;

std::vector<std::string> glob_paths(const std::string& pattern) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::string> out;
    if (rc == 0)
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    globfree(&g);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config-invalid", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string group_label(const ExperimentConfig& c) {
    std::string label = c.model + "/" + to_string(c.kernel) + "/" + to_string(c.proposal);
    if (c.proposal == ProposalType::mixture)
        label += c.auto_components ? "(auto)" : "(" + std::to_string(c.components) + ")";
    if (c.defensive_eta) label += "+def";
    if (c.fallback) label += "+fb";
    return label;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            int workers, bool allow_inefficient, const std::string& data_dir) {
    std::vector<ExperimentConfig> cells;
    try {
        // a run-record JSON replays its own echoed config
        if (config_path.size() > 5 &&
            config_path.substr(config_path.size() - 5) == ".json") {
            cells.push_back(read_run_record(config_path).config);
        } else {
            cells = expand_config(read_file(config_path));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    }
    std::filesystem::create_directories(out_dir);
    int ok = 0, failed = 0;
    std::string last_failure_code;
    for (const auto& cell : cells) {
        const std::string name = cell.run_name();
        const std::string incompatible = cell.compatibility_error(allow_inefficient);
        if (!incompatible.empty()) {
            std::cerr << "skip " << name << ": " << incompatible << "\n";
            write_text_atomic(out_dir + "/" + name + ".skipped.txt",
                              incompatible + "\n");
            ++failed;
            last_failure_code = "config-invalid";
            continue;
        }
        try {
            const RunRecord record = execute_run(cell, data_dir, workers);
            write_run_record(out_dir + "/" + name + ".json", record);
            write_trace_csv(out_dir + "/" + name + "_trace.csv", record.iterations);
            std::cout << name << ": final_epsilon="
                      << format_sig3(record.diagnostics.final_epsilon)
                      << " iterations=" << record.diagnostics.final_iteration;
            if (record.diagnostics.wasserstein)
                std::cout << " wasserstein="
                          << format_sig3(*record.diagnostics.wasserstein);
            std::cout << "\n";
            ++ok;
        } catch (const Error& e) {
            std::cerr << "fail " << name << ": " << e.what() << "\n";
            write_text_atomic(out_dir + "/" + name + ".failed.txt",
                              std::string(e.what()) + "\n");
            ++failed;
            last_failure_code = e.code();
        }
    }
    if (ok > 0) return exit_ok;
    if (last_failure_code == "config-invalid") return exit_config;
    if (last_failure_code == "budget-exhausted-in-iteration-1" ||
        last_failure_code == "no-complete-iteration")
        return exit_no_iteration;
    return exit_failure;
}

int cmd_summarize(const std::string& pattern, const std::string& metric,
                  const std::string& csv_out) {
    const auto paths = glob_paths(pattern);
    std::vector<RunSummaryInput> inputs;
    for (const auto& p : paths) {
        if (p.size() < 5 || p.substr(p.size() - 5) != ".json") continue;
        const RunRecord r = read_run_record(p);
        RunSummaryInput in;
        in.group = group_label(r.config);
        in.final_epsilon = r.diagnostics.final_epsilon;
        in.wasserstein = r.diagnostics.wasserstein;
        inputs.push_back(std::move(in));
    }
    if (inputs.empty()) {
        std::cerr << "error: empty-glob: no records match " << pattern << "\n";
        return exit_failure;
    }
    const auto rows = trace_aggregate(inputs);
    std::cout << render_summary_table(rows, metric);
    if (!csv_out.empty()) {
        CsvTable t;
        t.columns = {"group", "n_runs", "mean_final_epsilon", "mean_wasserstein"};
        std::ostringstream body;
        for (const auto& c : t.columns)
            body << c << (&c == &t.columns.back() ? "" : ",");
        body << "\n";
        for (const auto& r : rows) {
            body << r.group << ',' << r.n_runs << ',' << r.mean_final_epsilon
                 << ',';
            if (r.mean_wasserstein) body << *r.mean_wasserstein;
            body << "\n";
        }
        write_text_atomic(csv_out, body.str());
    }
    return exit_ok;
}

int cmd_plot(const std::string& pattern, const std::string& out_dir) {
    const auto paths = glob_paths(pattern);
    std::vector<RunRecord> records;
    for (const auto& p : paths)
        if (p.size() >= 5 && p.substr(p.size() - 5) == ".json")
            records.push_back(read_run_record(p));
    if (records.empty()) {
        std::cerr << "error: empty-glob: no records match " << pattern << "\n";
        return exit_failure;
    }
    std::filesystem::create_directories(out_dir);

    // one series per (kernel, proposal); replications averaged per iteration
    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const auto& r : records)
        groups[to_string(r.config.kernel) + "/" + to_string(r.config.proposal)]
            .push_back(&r);

    struct Extract {
        std::string file, title, xlab, ylab;
        bool log_x, log_y;
        std::function<std::pair<double, double>(const IterationTrace&)> get;
    };
    const std::vector<Extract> charts = {
        {"eps_vs_time.svg", "epsilon vs time", "seconds", "epsilon", false, true,
         [](const IterationTrace& t) {
             return std::pair{t.wall_clock_s, t.epsilon};
         }},
        {"eps_vs_iteration.svg", "epsilon vs iteration", "iteration", "epsilon",
         false, true,
         [](const IterationTrace& t) {
             return std::pair{static_cast<double>(t.t), t.epsilon};
         }},
        {"time_vs_iteration.svg", "time vs iteration", "iteration", "seconds",
         false, true,
         [](const IterationTrace& t) {
             return std::pair{static_cast<double>(t.t), t.wall_clock_s};
         }},
        {"acceptance_vs_time.svg", "acceptance rate vs time", "seconds",
         "acceptance rate", false, false,
         [](const IterationTrace& t) {
             return std::pair{t.wall_clock_s, t.accept_rate};
         }},
    };
    for (const auto& chart : charts) {
        std::vector<PlotSeries> series;
        for (const auto& [label, members] : groups) {
            PlotSeries s;
            s.label = label;
            std::size_t max_len = 0;
            for (const auto* r : members)
                max_len = std::max(max_len, r->iterations.size());
            for (std::size_t i = 0; i < max_len; ++i) {
                double sx = 0, sy = 0;
                long cnt = 0;
                for (const auto* r : members)
                    if (i < r->iterations.size()) {
                        const auto [x, y] = chart.get(r->iterations[i]);
                        sx += x;
                        sy += y;
                        ++cnt;
                    }
                if (cnt > 0)
                    s.points.emplace_back(sx / static_cast<double>(cnt),
                                          sy / static_cast<double>(cnt));
            }
            series.push_back(std::move(s));
        }
        PlotSpec spec;
        spec.title = chart.title;
        spec.x_label = chart.xlab;
        spec.y_label = chart.ylab;
        spec.log_x = chart.log_x;
        spec.log_y = chart.log_y;
        write_text_atomic(out_dir + "/" + chart.file,
                          render_line_chart(spec, series));
    }
    return exit_ok;
}

int cmd_reference(const std::string& model, long n, std::uint64_t seed,
                  const std::string& out_file, const std::string& data_dir) {
    if (model != "gm" && model != "quadratic" && model != "slcp") {
        std::cerr << "error: unsupported-model: reference generation covers "
                     "gm, quadratic and slcp; supply a reference file for "
                  << model << "\n";
        return exit_config;
    }
    RandomStream rng(seed);
    Matrix sample;
    if (model == "gm") {
        const GmExactPosterior posterior(0.0);
        sample = posterior.sample_matrix(static_cast<std::size_t>(n), rng);
    } else {
        const ObservedTarget target =
            load_observed_target(model, std::nullopt, data_dir);
        sample = reference_mh_sampler(target, static_cast<std::size_t>(n), rng)
                     .sample;
    }
    CsvTable t;
    t.comments = {" model=" + model + " seed=" + std::to_string(seed)};
    for (std::size_t j = 0; j < sample.cols; ++j)
        t.columns.push_back("theta" + std::to_string(j + 1));
    t.values = sample;
    write_csv(out_file, t);
    std::cout << "wrote " << n << " reference draws to " << out_file << "\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ABC-SMC benchmark harness"};
    app.require_subcommand(1);
    int workers = 1;
    bool allow_inefficient = false;
    std::string data_dir = default_data_dir();
    app.add_option("--workers", workers, "worker threads for particle sweeps");
    app.add_flag("--allow-inefficient", allow_inefficient,
                 "permit the single-proposal r-hit kernel");
    app.add_option("--data-dir", data_dir, "directory with observed datasets");

    auto* run = app.add_subcommand("run", "execute a config (or grid) of runs");
    std::string config_path, out_dir = "runs";
    run->add_option("config", config_path, "TOML-style config file")->required();
    run->add_option("-o,--output", out_dir, "output directory");

    auto* summarize = app.add_subcommand("summarize", "aggregate run records");
    std::string pattern, metric = "eps", csv_out;
    summarize->add_option("glob", pattern, "record glob, e.g. 'runs/*.json'")
        ->required();
    summarize->add_option("--metric", metric, "eps | loss")
        ->check(CLI::IsMember({"eps", "loss"}));
    summarize->add_option("--csv", csv_out, "also write a CSV summary");

    auto* plot = app.add_subcommand("plot", "emit SVG trace plots");
    std::string plot_pattern, plot_dir = "plots";
    plot->add_option("glob", plot_pattern, "record glob")->required();
    plot->add_option("-o,--output", plot_dir, "output directory");

    auto* reference = app.add_subcommand("reference", "generate a reference sample");
    std::string ref_model, ref_out;
    long ref_n = 10000;
    std::uint64_t ref_seed = 1;
    reference->add_option("model", ref_model, "gm | quadratic | slcp")->required();
    reference->add_option("-n", ref_n, "number of draws");
    reference->add_option("--seed", ref_seed, "RNG seed");
    reference->add_option("-o,--output", ref_out, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, out_dir, workers, allow_inefficient,
                           data_dir);
        if (summarize->parsed()) return cmd_summarize(pattern, metric, csv_out);
        if (plot->parsed()) return cmd_plot(plot_pattern, plot_dir);
        if (reference->parsed())
            return cmd_reference(ref_model, ref_n, ref_seed, ref_out, data_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return std::string(e.code()) == "config-invalid" ? exit_config
                                                         : exit_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_failure;
    }
    return exit_failure;
}
