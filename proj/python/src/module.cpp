#include "rdmix/balance.hpp"
#include "rdmix/config.hpp"
#include "rdmix/diagnostics.hpp"
#include "rdmix/error.hpp"
#include "rdmix/estimands.hpp"
#include "rdmix/gibbs.hpp"
#include "rdmix/io.hpp"
#include "rdmix/pipeline.hpp"
#include "rdmix/synth.hpp"
#include "rdmix/window.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace rdmix;

namespace {

// JSON round trip through the stdlib module keeps dict conversion in one place.
py::object to_py(const nlohmann::ordered_json &j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object &o) {
    if (o.is_none()) return nlohmann::json::object();
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

ObservedDataset make_dataset(const std::vector<double> &s, const std::vector<int> &y, const Eigen::MatrixXd &x,
                             double s0, double eps0, std::vector<std::string> ids, std::vector<std::string> names) {
    if (y.size() != s.size()) throw DataError("data", "s and y have different lengths");
    std::vector<std::uint8_t> yy;
    for (int v : y) {
        if (v != 0 && v != 1) throw DataError("data", "outcomes must be 0 or 1");
        yy.push_back(static_cast<std::uint8_t>(v));
    }
    Eigen::MatrixXd xx = x.size() ? x : Eigen::MatrixXd(static_cast<Eigen::Index>(s.size()), 0);
    if (names.empty())
        for (Eigen::Index j = 0; j < xx.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
    return ObservedDataset(std::move(ids), s, std::move(yy), std::move(xx), s0, eps0,
                           CovariateScaling::identity(std::move(names)));
}

py::dict draws_dict(const PosteriorDraws &d) {
    const auto table = draw_table(d);
    py::array_t<double> arr({table.rows.size(), table.columns.size()});
    auto buf = arr.mutable_unchecked<2>();
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        for (std::size_t c = 0; c < table.columns.size(); ++c) buf(r, c) = table.rows[r][c];
    py::array_t<std::uint32_t> counts({d.unit_counts.size(), std::size_t{3}});
    auto cb = counts.mutable_unchecked<2>();
    for (std::size_t i = 0; i < d.unit_counts.size(); ++i)
        for (std::size_t k = 0; k < 3; ++k) cb(i, k) = d.unit_counts[i][k];
    py::dict out;
    out["columns"] = table.columns;
    out["draws"] = arr;
    out["unit_counts"] = counts;
    out["summary"] = to_py(mixture_summary(d));
    out["structural_violations"] = d.structural_violations;
    return out;
}

} // namespace

PYBIND11_MODULE(_rdmix, m) {
    m.doc() = "Bayesian three-component mixture analysis for regression-discontinuity designs";

    // Most-derived first so the Python hierarchy mirrors the C++ one.
    auto &base = py::register_exception<Error>(m, "RdmixError");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<ObservedDataset>(m, "Dataset")
        .def(py::init(&make_dataset), py::arg("s"), py::arg("y"), py::arg("x") = Eigen::MatrixXd(),
             py::arg("s0"), py::arg("eps0") = 0.5, py::arg("ids") = std::vector<std::string>{},
             py::arg("names") = std::vector<std::string>{})
        .def_property_readonly("n", &ObservedDataset::n)
        .def_property_readonly("p", &ObservedDataset::p)
        .def_property_readonly("s0", &ObservedDataset::s0)
        .def_property_readonly("s", &ObservedDataset::s)
        .def_property_readonly("z", &ObservedDataset::z)
        .def_property_readonly("y", &ObservedDataset::y)
        .def_property_readonly("x", &ObservedDataset::x)
        .def_property_readonly("log_s", &ObservedDataset::log_s)
        .def_property_readonly("unit_ids", &ObservedDataset::unit_ids);

    m.def("transform_forcing", &transform_forcing, py::arg("s"), py::arg("s0"), py::arg("eps0"));
    m.def("inverse_transform_forcing", &inverse_transform_forcing, py::arg("log_s_tilde"), py::arg("s0"),
          py::arg("eps0"));

    m.def(
        "ingest",
        [](const std::filesystem::path &path, const std::string &s, const std::string &y,
           const std::vector<std::string> &x, double s0, double eps0, std::optional<double> max_s, bool standardize,
           const std::string &id) {
            ColumnSchema schema{id, s, y, x};
            IngestOptions opt;
            opt.s0 = s0;
            opt.eps0 = eps0;
            opt.max_s = max_s;
            opt.standardize = standardize;
            auto res = ingest(path, schema, opt);
            return py::make_tuple(std::move(res.data), to_py(to_json(res.report)));
        },
        py::arg("path"), py::arg("s"), py::arg("y"), py::arg("x") = std::vector<std::string>{}, py::arg("s0"),
        py::arg("eps0") = 0.5, py::arg("max_s") = std::nullopt, py::arg("standardize") = true, py::arg("id") = "");

    m.def("scenarios", [] {
        std::vector<std::string> names;
        for (const auto &s : scenario_library()) names.push_back(s.name);
        return names;
    });

    m.def(
        "generate",
        [](const std::string &name, std::optional<std::size_t> n, std::uint64_t seed) {
            const Scenario &sc = scenario(name);
            auto res = generate(sc.theta, sc.covariates, n.value_or(sc.n), sc.s0, RngStream(seed, 0xDA7A));
            py::dict truth;
            std::vector<int> labels;
            for (auto g : res.truth.labels) labels.push_back(static_cast<int>(g));
            truth["labels"] = labels;
            truth["rr"] = res.truth.rr_defined ? py::object(py::float_(res.truth.rr)) : py::object(py::none());
            truth["label_counts"] = res.truth.label_counts;
            truth["average_mixing"] = std::vector<double>{res.truth.average_mixing.minus, res.truth.average_mixing.zero,
                                                          res.truth.average_mixing.plus};
            truth["theta"] = res.truth.theta.flatten();
            truth["y0"] = res.truth.y0;
            truth["y1"] = res.truth.y1;
            return py::make_tuple(std::move(res.data), truth);
        },
        py::arg("scenario"), py::arg("n") = std::nullopt, py::arg("seed") = 1);

    m.def(
        "sample",
        [](const ObservedDataset &data, const py::object &priors, const py::object &sampler) {
            const Priors p = parse_priors(from_py(priors));
            const SamplerConfig c = parse_sampler(from_py(sampler));
            PosteriorDraws d;
            {
                py::gil_scoped_release release;
                d = run_chains(data, p, c);
            }
            return draws_dict(d);
        },
        py::arg("data"), py::arg("priors") = py::none(), py::arg("sampler") = py::none(),
        "Runs the mixture sampler; returns draws, column names, per-unit label counts and a summary.");

    m.def("parameter_names", &ParameterState::flat_names, py::arg("p"));

    m.def(
        "summarize_series", [](const std::vector<double> &v) { return to_py(to_json(summarize_series(v))); },
        py::arg("values"));
    m.def("split_rhat", &split_rhat, py::arg("chains"));
    m.def("effective_sample_size", &effective_sample_size, py::arg("chains"));

    m.def(
        "normalized_difference",
        [](const std::vector<double> &a, const std::vector<double> &b) {
            const auto r = normalized_difference(a, b);
            return r.value ? py::object(py::float_(*r.value)) : py::object(py::none());
        },
        py::arg("x0"), py::arg("x1"));
    m.def(
        "log_sd_ratio",
        [](const std::vector<double> &a, const std::vector<double> &b) {
            const auto r = log_sd_ratio(a, b);
            return r.value ? py::object(py::float_(*r.value)) : py::object(py::none());
        },
        py::arg("x0"), py::arg("x1"));
    m.def(
        "mahalanobis_balance",
        [](const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1) { return mahalanobis_balance(x0, x1).distance; },
        py::arg("x0"), py::arg("x1"));
    m.def(
        "balance_report",
        [](const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1) { return to_py(to_json(balance_report(x0, x1))); },
        py::arg("x0"), py::arg("x1"));

    m.def(
        "local_polynomial_rd",
        [](const ObservedDataset &data, const py::object &window) {
            return to_py(to_json(local_polynomial_rd(data, parse_window(from_py(window)))));
        },
        py::arg("data"), py::arg("window"));
    m.def(
        "fixed_window",
        [](const ObservedDataset &data, const py::object &window, const py::object &priors, const py::object &sampler) {
            const WindowSpec w = parse_window(from_py(window));
            const Priors p = parse_priors(from_py(priors));
            const SamplerConfig c = parse_sampler(from_py(sampler));
            WindowDraws d;
            {
                py::gil_scoped_release release;
                d = fixed_window_sampler(data, w, p, c);
            }
            py::dict out;
            out["n"] = d.n;
            out["n_eligible"] = d.n_eligible;
            out["n_ineligible"] = d.n_ineligible;
            out["rr"] = d.rr();
            out["summary"] = to_py(to_json(d.summary));
            return out;
        },
        py::arg("data"), py::arg("window"), py::arg("priors") = py::none(), py::arg("sampler") = py::none());

    m.def(
        "rubin_combine",
        [](const std::vector<double> &est, const std::vector<double> &var) { return to_py(to_json(rubin_combine(est, var))); },
        py::arg("estimates"), py::arg("variances"));

    m.def(
        "run",
        [](const std::filesystem::path &config) {
            RunConfig c = load_config(config);
            apply_environment(c);
            c.validate();
            py::gil_scoped_release release;
            return run(c);
        },
        py::arg("config"), "Runs the full pipeline from a JSON config; returns the output directory.");

    m.attr("__version__") = kVersion;
}
