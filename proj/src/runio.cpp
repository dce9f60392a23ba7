#include "abcsmc/runio.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "abcsmc/csv.hpp"
#include "abcsmc/error.hpp"
#include "abcsmc/mixture.hpp"

namespace abcsmc {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows; ++i) rows.push_back(m.row(i));
    return json{{"cols", m.cols}, {"rows", rows}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows");
    Matrix m(rows.size(), j.at("cols").get<std::size_t>());
    for (std::size_t i = 0; i < rows.size(); ++i)
        m.set_row(i, rows[i].get<Vector>());
    return m;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["model"] = c.model;
    j["kernel"] = to_string(c.kernel);
    j["r"] = c.r;
    j["proposal"] = to_string(c.proposal);
    j["components"] = c.components;
    j["auto_components"] = c.auto_components;
    if (c.defensive_eta) j["defensive_eta"] = *c.defensive_eta;
    j["fallback"] = c.fallback;
    j["training_set"] = c.training_set == TrainingMode::a_t ? "A" : "B";
    j["n_particles"] = c.n_particles;
    j["n_train"] = c.n_train;
    j["n_test"] = c.n_test;
    j["omega"] = c.omega;
    if (std::isfinite(c.time_budget_s)) j["time_budget_s"] = c.time_budget_s;
    if (c.max_iterations) j["max_iterations"] = *c.max_iterations;
    if (c.epsilon_target) j["epsilon_target"] = *c.epsilon_target;
    j["seed"] = c.seed;
    j["replication"] = c.replication;
    if (c.observed) j["observed"] = *c.observed;
    if (c.reference) j["reference"] = *c.reference;
    j["wasserstein_order"] = c.wasserstein_order;
    j["wasserstein_max_points"] = c.wasserstein_max_points;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    c.model = j.at("model").get<std::string>();
    c.kernel = kernel_family_from_string(j.at("kernel").get<std::string>());
    c.r = j.at("r").get<int>();
    c.proposal = proposal_type_from_string(j.at("proposal").get<std::string>());
    c.components = j.at("components").get<int>();
    c.auto_components = j.at("auto_components").get<bool>();
    if (j.contains("defensive_eta"))
        c.defensive_eta = j.at("defensive_eta").get<double>();
    c.fallback = j.at("fallback").get<bool>();
    c.training_set = j.at("training_set").get<std::string>() == "A"
                         ? TrainingMode::a_t
                         : TrainingMode::b_t;
    c.n_particles = j.at("n_particles").get<long>();
    c.n_train = j.at("n_train").get<long>();
    c.n_test = j.at("n_test").get<long>();
    c.omega = j.at("omega").get<double>();
    c.time_budget_s = j.contains("time_budget_s")
                          ? j.at("time_budget_s").get<double>()
                          : std::numeric_limits<double>::infinity();
    if (j.contains("max_iterations"))
        c.max_iterations = j.at("max_iterations").get<long>();
    if (j.contains("epsilon_target"))
        c.epsilon_target = j.at("epsilon_target").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.replication = j.at("replication").get<long>();
    if (j.contains("observed")) c.observed = j.at("observed").get<std::string>();
    if (j.contains("reference")) c.reference = j.at("reference").get<std::string>();
    c.wasserstein_order = j.at("wasserstein_order").get<int>();
    c.wasserstein_max_points = j.at("wasserstein_max_points").get<long>();
    return c;
}

json trace_to_json(const IterationTrace& t) {
    return json{{"t", t.t},
                {"epsilon", t.epsilon},
                {"wall_clock_s", t.wall_clock_s},
                {"n_simulations", t.n_simulations},
                {"accept_rate", t.accept_rate},
                {"unique_after_resample", t.unique_after_resample},
                {"proposal_fit_s", t.proposal_fit_s},
                {"epsilon_reused", t.epsilon_reused},
                {"used_fallback", t.used_fallback}};
}

IterationTrace trace_from_json(const json& j) {
    IterationTrace t;
    t.t = j.at("t").get<long>();
    t.epsilon = j.at("epsilon").get<double>();
    t.wall_clock_s = j.at("wall_clock_s").get<double>();
    t.n_simulations = j.at("n_simulations").get<long>();
    t.accept_rate = j.at("accept_rate").get<double>();
    t.unique_after_resample = j.at("unique_after_resample").get<long>();
    t.proposal_fit_s = j.at("proposal_fit_s").get<double>();
    t.epsilon_reused = j.at("epsilon_reused").get<bool>();
    t.used_fallback = j.at("used_fallback").get<bool>();
    return t;
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string run_record_to_json(const RunRecord& r) {
    json j;
    j["schema"] = r.schema;
    j["config"] = config_to_json(r.config);
    json its = json::array();
    for (const auto& t : r.iterations) its.push_back(trace_to_json(t));
    j["iterations"] = its;
    j["output_sample"] = matrix_to_json(r.output_sample);
    j["test_sample"] = matrix_to_json(r.test_sample);
    json d;
    d["final_epsilon"] = r.diagnostics.final_epsilon;
    d["final_iteration"] = r.diagnostics.final_iteration;
    if (r.diagnostics.wasserstein) d["wasserstein"] = *r.diagnostics.wasserstein;
    d["n_output"] = r.diagnostics.n_output;
    d["elapsed_s"] = r.diagnostics.elapsed_s;
    j["diagnostics"] = d;
    j["version"] = r.version;
    j["started_at"] = r.started_at;
    j["finished_at"] = r.finished_at;
    return j.dump(2);
}

RunRecord run_record_from_json(const std::string& text) {
    const json j = json::parse(text);
    RunRecord r;
    r.schema = j.at("schema").get<int>();
    if (r.schema != 1)
        throw Error("config-invalid", "unsupported record schema");
    r.config = config_from_json(j.at("config"));
    for (const auto& t : j.at("iterations")) r.iterations.push_back(trace_from_json(t));
    r.output_sample = matrix_from_json(j.at("output_sample"));
    r.test_sample = matrix_from_json(j.at("test_sample"));
    const auto& d = j.at("diagnostics");
    r.diagnostics.final_epsilon = d.at("final_epsilon").get<double>();
    r.diagnostics.final_iteration = d.at("final_iteration").get<long>();
    if (d.contains("wasserstein"))
        r.diagnostics.wasserstein = d.at("wasserstein").get<double>();
    r.diagnostics.n_output = d.at("n_output").get<long>();
    r.diagnostics.elapsed_s = d.at("elapsed_s").get<double>();
    r.version = j.at("version").get<std::string>();
    r.started_at = j.at("started_at").get<std::string>();
    r.finished_at = j.at("finished_at").get<std::string>();
    return r;
}

bool records_equal_modulo_timing(const RunRecord& a, const RunRecord& b) {
    auto strip = [](const RunRecord& r) {
        json j = json::parse(run_record_to_json(r));
        j.erase("started_at");
        j.erase("finished_at");
        j["diagnostics"].erase("elapsed_s");
        for (auto& it : j["iterations"]) {
            it.erase("wall_clock_s");
            it.erase("proposal_fit_s");
        }
        return j;
    };
    return strip(a) == strip(b);
}

void write_run_record(const std::string& path, const RunRecord& record) {
    write_text_atomic(path, run_record_to_json(record));
}

RunRecord read_run_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return run_record_from_json(buf.str());
}

void write_trace_csv(const std::string& path,
                     const std::vector<IterationTrace>& iterations) {
    CsvTable t;
    t.columns = {"t",           "epsilon",
                 "wall_clock_s", "n_simulations",
                 "accept_rate", "unique_after_resample",
                 "proposal_fit_s"};
    t.values = Matrix(iterations.size(), 7);
    for (std::size_t i = 0; i < iterations.size(); ++i) {
        const auto& it = iterations[i];
        t.values.set_row(i, {static_cast<double>(it.t), it.epsilon,
                             it.wall_clock_s, static_cast<double>(it.n_simulations),
                             it.accept_rate,
                             static_cast<double>(it.unique_after_resample),
                             it.proposal_fit_s});
    }
    write_csv(path, t);
}

std::string default_data_dir() {
    if (const char* env = std::getenv("ABCSMC_DATA_DIR")) return env;
    return "data";
}

ObservedTarget load_observed_target(const std::string& model,
                                    const std::optional<std::string>& observed,
                                    const std::string& data_dir) {
    ObservedTarget target;
    if (model == "quadratic" || model == "gm") {
        target.model = make_model(model);
        target.y0_raw = {0.0};
        target.y0_summary = target.model->summarize(target.y0_raw);
        if (observed) {
            const CsvTable t = read_csv(*observed);
            target.y0_raw = t.values.row(0).size() == 1 && t.values.rows == 1
                                ? t.values.row(0)
                                : Vector{t.values(0, 0)};
            target.y0_summary = target.model->summarize(target.y0_raw);
        }
        return target;
    }
    const std::string path = observed ? *observed
                                      : data_dir + "/" + model + "_y0.csv";
    const CsvTable t = read_csv(path);
    Vector raw(t.values.rows);
    for (std::size_t i = 0; i < t.values.rows; ++i) raw[i] = t.values(i, 0);
    if (model == "seir") {
        target.model = make_model(model, static_cast<int>(raw.size()) - 1);
    } else {
        target.model = make_model(model);
        if (static_cast<int>(raw.size()) != target.model->dim_summary() &&
            model == "slcp")
            throw Error("io", "slcp observed file must hold 8 values");
    }
    target.y0_raw = raw;
    target.y0_summary = target.model->summarize(raw);
    return target;
}

Matrix load_reference_csv(const std::string& path) {
    return read_csv(path).values;
}

namespace {

ProposalFitter make_fitter(const ExperimentConfig& cfg,
                           std::shared_ptr<const Model> model) {
    const auto wrap = [cfg, model](std::unique_ptr<ProposalKernel> fitted)
        -> std::shared_ptr<const ProposalKernel> {
        std::shared_ptr<const ProposalKernel> q(fitted.release());
        if (cfg.defensive_eta)
            q = std::shared_ptr<const ProposalKernel>(
                defensive_wrap(q, model, *cfg.defensive_eta).release());
        return q;
    };
    switch (cfg.proposal) {
        case ProposalType::classic_rw:
            return [wrap](const TrainingSet& d, RandomStream&) {
                return wrap(fit_classic_rw(d));
            };
        case ProposalType::classic_independence:
            return [wrap](const TrainingSet& d, RandomStream&) {
                return wrap(fit_classic_independence(d));
            };
        case ProposalType::mixture:
            return [wrap, cfg](const TrainingSet& d, RandomStream& rng) {
                MixtureDensity mix =
                    cfg.auto_components
                        ? fit_gaussian_mixture_auto(d, rng)
                        : fit_gaussian_mixture(d, cfg.components, rng);
                return wrap(make_mixture_proposal(std::move(mix)));
            };
        case ProposalType::flow:
            throw Error("config-invalid",
                        "flow proposals run through run_transport_abc");
    }
    throw Error("config-invalid", "unreachable proposal type");
}

}  // namespace

RunRecord execute_run(const ExperimentConfig& cfg, const std::string& data_dir,
                      int workers) {
    const std::string incompatible = cfg.compatibility_error(true);
    if (!incompatible.empty()) throw Error("config-invalid", incompatible);

    RunRecord record;
    record.started_at = iso_now();
    ObservedTarget target = load_observed_target(cfg.model, cfg.observed, data_dir);
    if (cfg.reference) target.reference_sample = load_reference_csv(*cfg.reference);

    SmcConfig smc;
    smc.n_particles = cfg.n_particles;
    smc.n_train = cfg.n_train;
    smc.n_test = cfg.n_test;
    smc.omega = cfg.omega;
    smc.time_budget_s = cfg.time_budget_s;
    smc.max_iterations = cfg.max_iterations;
    smc.epsilon_target = cfg.epsilon_target;
    smc.training_mode = cfg.training_set;
    smc.workers = workers;
    smc.seed = cfg.run_seed();

    KernelConfig kernel{cfg.kernel, cfg.r};
    SmcResult result;
    if (cfg.proposal == ProposalType::flow) {
        TransportSpec spec;
        spec.architecture.dim = target.model->dim_theta();
        spec.fallback = cfg.fallback;
        spec.defensive_eta = cfg.defensive_eta;
        result = run_transport_abc(target, kernel, spec, smc);
    } else {
        result = run_abc_smc(target, kernel, make_fitter(cfg, target.model), smc);
    }

    ReportOptions ropts;
    ropts.wasserstein_order = cfg.wasserstein_order;
    ropts.max_reference_points = cfg.wasserstein_max_points;
    record.diagnostics = build_report(result, target.reference_sample, ropts);

    record.config = cfg;
    // Echo pins the achieved iteration count and lifts the wall-clock budget
    // so a replay of the echoed config reproduces the run deterministically.
    record.config.max_iterations = result.iterations.back().t;
    record.config.time_budget_s = std::numeric_limits<double>::infinity();
    record.iterations = result.iterations;
    record.output_sample = result.output_thetas;
    record.test_sample = result.test_thetas;
    record.finished_at = iso_now();
    return record;
}

}  // namespace abcsmc
