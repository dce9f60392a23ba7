#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "abcsmc/config.hpp"
#include "abcsmc/error.hpp"
#include "abcsmc/diagnostics.hpp"
#include "abcsmc/flow.hpp"
#include "abcsmc/mixture.hpp"
#include "abcsmc/model.hpp"
#include "abcsmc/reference.hpp"
#include "abcsmc/runio.hpp"
#include "abcsmc/smc.hpp"
#include "abcsmc/wasserstein.hpp"

namespace py = pybind11;
using namespace abcsmc;

namespace {

Matrix to_matrix(const std::vector<Vector>& rows) {
    if (rows.empty()) return Matrix(0, 0);
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols)
            throw Error("dimension-mismatch", "ragged row in sample");
        m.set_row(i, rows[i]);
    }
    return m;
}

std::vector<Vector> to_rows(const Matrix& m) {
    std::vector<Vector> rows(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) rows[i] = m.row(i);
    return rows;
}

// Thin model handle: simulation and prior access with explicit seeds.
struct PyModel {
    std::shared_ptr<const Model> model;

    explicit PyModel(const std::string& name, int seir_horizon)
        : model(make_model(name, seir_horizon)) {}

    Vector prior_sample(std::uint64_t seed) const {
        RandomStream rng(seed);
        return model->prior_sample(rng);
    }
    Vector simulate(const Vector& theta, std::uint64_t seed) const {
        RandomStream rng(seed);
        return model->simulate(theta, rng);
    }
};

}  // namespace

PYBIND11_MODULE(_abcsmc, m) {
    m.doc() = "ABC-SMC kernel benchmark core";
    m.attr("__version__") = library_version;

    py::register_exception<Error>(m, "AbcsmcError");

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&, int>(), py::arg("name"),
             py::arg("seir_horizon") = 30)
        .def_property_readonly("name",
                               [](const PyModel& s) { return s.model->name(); })
        .def_property_readonly(
            "dim_theta", [](const PyModel& s) { return s.model->dim_theta(); })
        .def_property_readonly(
            "dim_summary",
            [](const PyModel& s) { return s.model->dim_summary(); })
        .def("prior_sample", &PyModel::prior_sample, py::arg("seed"))
        .def("prior_logpdf",
             [](const PyModel& s, const Vector& theta) {
                 return s.model->prior_logpdf(theta);
             })
        .def("simulate", &PyModel::simulate, py::arg("theta"), py::arg("seed"))
        .def("summarize",
             [](const PyModel& s, const Vector& raw) {
                 return s.model->summarize(raw);
             })
        .def("distance", [](const PyModel& s, const Vector& a, const Vector& b) {
            return s.model->distance(a, b);
        });

    m.def(
        "systematic_resample",
        [](const Vector& weights, std::size_t n, double u) {
            return systematic_resample(weights, n, u);
        },
        py::arg("weights"), py::arg("n"), py::arg("u"));

    m.def(
        "wasserstein",
        [](const std::vector<Vector>& a, const std::vector<Vector>& b, int order) {
            return wasserstein(to_matrix(a), to_matrix(b), order);
        },
        py::arg("a"), py::arg("b"), py::arg("order") = 1);

    m.def(
        "fit_gaussian_mixture",
        [](const std::vector<Vector>& rows, int k, std::uint64_t seed) {
            TrainingSet d;
            d.thetas = to_matrix(rows);
            RandomStream rng(seed);
            const MixtureDensity mix = fit_gaussian_mixture(d, k, rng);
            py::dict out;
            py::list weights, means, covariances;
            for (const auto& c : mix.components) {
                weights.append(c.weight);
                means.append(c.mean);
                covariances.append(to_rows(c.cov));
            }
            out["weights"] = weights;
            out["means"] = means;
            out["covariances"] = covariances;
            out["log_score"] = mix.log_score;
            out["bic"] = mix.bic;
            return out;
        },
        py::arg("rows"), py::arg("k"), py::arg("seed"));

    m.def(
        "gm_exact_posterior_sample",
        [](double y0, std::size_t n, std::uint64_t seed) {
            GmExactPosterior posterior(y0);
            RandomStream rng(seed);
            Vector out(n);
            for (auto& v : out) v = posterior.sample(rng);
            return out;
        },
        py::arg("y0"), py::arg("n"), py::arg("seed"));

    m.def(
        "reference_sample",
        [](const std::string& model, std::size_t n, std::uint64_t seed,
           const std::string& data_dir) {
            RandomStream rng(seed);
            if (model == "gm") {
                GmExactPosterior posterior(0.0);
                return to_rows(posterior.sample_matrix(n, rng));
            }
            const ObservedTarget target =
                load_observed_target(model, std::nullopt, data_dir);
            return to_rows(reference_mh_sampler(target, n, rng).sample);
        },
        py::arg("model"), py::arg("n"), py::arg("seed"),
        py::arg("data_dir") = default_data_dir());

    m.def(
        "train_flow",
        [](const std::vector<Vector>& train, const std::vector<Vector>& test,
           int bins, int hidden, int blocks, double tail_bound, int max_epochs,
           std::uint64_t seed) {
            const Matrix d_train = to_matrix(train);
            FlowArchitecture arch;
            arch.dim = static_cast<int>(d_train.cols);
            arch.bins = bins;
            arch.hidden = hidden;
            arch.blocks = blocks;
            arch.tail_bound = tail_bound;
            RandomStream init_rng(seed);
            SplineFlow flow(arch, init_rng);
            FlowTrainConfig cfg;
            cfg.max_epochs = max_epochs;
            RandomStream rng(splitmix64(seed));
            const FlowTrainResult result =
                train_flow(flow, d_train, to_matrix(test), cfg, rng);
            py::dict out;
            out["flow_json"] = result.flow.to_json_string();
            out["best_test_objective"] = result.best_test_objective;
            out["epochs_run"] = result.epochs_run;
            return out;
        },
        py::arg("train"), py::arg("test"), py::arg("bins") = 50,
        py::arg("hidden") = 20, py::arg("blocks") = 2,
        py::arg("tail_bound") = 10.0, py::arg("max_epochs") = 400,
        py::arg("seed") = 1);

    m.def(
        "flow_logpdf",
        [](const std::string& flow_json, const Vector& theta) {
            return SplineFlow::from_json_string(flow_json).logpdf(theta);
        },
        py::arg("flow_json"), py::arg("theta"));

    m.def(
        "flow_sample",
        [](const std::string& flow_json, std::size_t n, std::uint64_t seed) {
            const SplineFlow flow = SplineFlow::from_json_string(flow_json);
            RandomStream rng(seed);
            std::vector<Vector> rows(n);
            for (auto& r : rows) r = flow.sample(rng);
            return rows;
        },
        py::arg("flow_json"), py::arg("n"), py::arg("seed"));

    m.def(
        "run",
        [](const std::string& config_text, const std::string& data_dir,
           int workers) {
            const auto cells = expand_config(config_text);
            py::list records;
            for (const auto& cell : cells) {
                const RunRecord record = execute_run(cell, data_dir, workers);
                py::dict d;
                d["name"] = cell.run_name();
                d["json"] = run_record_to_json(record);
                d["final_epsilon"] = record.diagnostics.final_epsilon;
                d["iterations"] = record.diagnostics.final_iteration;
                d["output_sample"] = to_rows(record.output_sample);
                if (record.diagnostics.wasserstein)
                    d["wasserstein"] = *record.diagnostics.wasserstein;
                records.append(d);
            }
            return records;
        },
        py::arg("config_text"), py::arg("data_dir") = default_data_dir(),
        py::arg("workers") = 1);

    m.def("format_sig3", &format_sig3, py::arg("x"));
}
