#include "hloblab/cli.hpp"
#include "hloblab/gradcheck_suite.hpp"
#include "hloblab/hlob_model.hpp"
#include "hloblab/infonet.hpp"
#include "hloblab/preprocess.hpp"
#include "hloblab/train_eval.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdlib>
#include <sstream>

namespace py = pybind11;
using namespace hloblab;

namespace {

py::exception<Error>* error_type = nullptr;

train::Confusion to_confusion(const std::vector<std::vector<std::int64_t>>& rows) {
    if (rows.size() != 3) {
        throw Error(ErrorCode::ShapeMismatch, "confusion matrix must be 3x3");
    }
    train::Confusion c{};
    for (std::size_t i = 0; i < 3; ++i) {
        if (rows[i].size() != 3) {
            throw Error(ErrorCode::ShapeMismatch, "confusion matrix must be 3x3");
        }
        std::copy(rows[i].begin(), rows[i].end(), c[i].begin());
    }
    return c;
}

py::dict complex_dict(const infonet::SimplicialComplex& sc) {
    py::dict d;
    d["tetrahedra"] = sc.tetrahedra;
    d["triangles"] = sc.triangles;
    d["edges"] = sc.edges;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Limit order book pipeline: information filtering network, HLOB model, metrics.";

    error_type = new py::exception<Error>(m, "HloblabError", PyExc_RuntimeError);  // lives as long as the module
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object err = *error_type;
            py::object instance = err(e.what());
            instance.attr("code") = std::string(to_string(e.code()));
            instance.attr("index") = e.index();
            PyErr_SetObject(err.ptr(), instance.ptr());
        }
    });

    m.def(
        "entropy", [](const std::vector<std::int32_t>& x) { return infonet::entropy(x); }, py::arg("x"),
        "Plug-in entropy of a binned column, in nats.");
    m.def(
        "mutual_information",
        [](const std::vector<std::int32_t>& x, const std::vector<std::int32_t>& y) {
            return infonet::mutual_information(x, y);
        },
        py::arg("x"), py::arg("y"),
          "Plug-in mutual information of two binned columns, in nats.");

    m.def(
        "build_tmfg",
        [](const Eigen::MatrixXd& w) {
            const auto g = infonet::build_tmfg(w);
            py::dict d;
            d["seed"] = g.seed;
            d["edges"] = g.edges;
            py::list log;
            for (const auto& ins : g.insertions) {
                log.append(py::make_tuple(ins.vertex, ins.host.vertices, ins.gain));
            }
            d["insertions"] = log;
            d["score"] = infonet::graph_score(w, g);
            d["complex"] = complex_dict(infonet::extract_simplices(g));
            return d;
        },
        py::arg("weights"), "Greedy TMFG over a symmetric weight matrix.");

    m.def(
        "synthesize_lob",
        [](std::uint64_t seed, std::size_t events, const std::string& regime) {
            const auto r = regime == "sparse" ? lob::Regime::Sparse : lob::Regime::Compact;
            const auto s = lob::synthesize_lob(seed, events, r, lob::StockMeta{"SYN", 100, 1});
            py::array_t<std::int64_t> out({s.size(), lob::kFeatures});
            auto view = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < s.size(); ++i) {
                for (std::size_t j = 0; j < lob::kFeatures; ++j) {
                    view(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = s.snapshots[i].feature(j);
                }
            }
            return out;
        },
        py::arg("seed"), py::arg("events"), py::arg("regime") = "compact",
        "Synthetic book as an N x 40 integer array in LOBSTER column order.");

    m.def(
        "label_series",
        [](const std::vector<double>& mids, std::size_t horizon, double tick) {
            std::vector<std::optional<int>> out;
            for (const auto& l : prep::label_series(mids, horizon, tick)) {
                out.push_back(l ? std::optional<int>(static_cast<int>(*l)) : std::nullopt);
            }
            return out;
        },
        py::arg("mids"), py::arg("horizon"), py::arg("tick"), "Labels in {-1, 0, 1}; None past the horizon.");

    m.def(
        "confusion_matrix",
        [](const std::vector<int>& truth, const std::vector<int>& predicted) {
            const auto c = train::confusion_matrix(truth, predicted);
            std::vector<std::vector<std::int64_t>> rows;
            for (const auto& r : c) {
                rows.emplace_back(r.begin(), r.end());
            }
            return rows;
        },
        py::arg("truth"), py::arg("predicted"));
    m.def(
        "f1_score",
        [](const std::vector<std::vector<std::int64_t>>& c, const std::string& average) {
            return train::f1_score(to_confusion(c),
                                   average == "weighted" ? train::F1Average::Weighted : train::F1Average::Macro);
        },
        py::arg("confusion"), py::arg("average") = "macro");
    m.def(
        "mcc", [](const std::vector<std::vector<std::int64_t>>& c) { return train::mcc(to_confusion(c)); },
        py::arg("confusion"));
    m.def(
        "round_trip_stats",
        [](const std::vector<int>& predictions, const std::vector<int>& labels) {
            const auto r = train::round_trip_stats(predictions, labels);
            return py::make_tuple(r.p_t, r.tt);
        },
        py::arg("predictions"), py::arg("labels"), "Returns (p_t, tt).");
    m.def("percentile", &train::percentile, py::arg("values"), py::arg("q"));

    m.def(
        "parameter_table",
        [](std::size_t window) {
            model::HlobConfig cfg;
            cfg.window = window;
            const model::HlobModel<float> net(cfg, 0);
            std::vector<std::pair<std::string, std::size_t>> rows;
            for (const auto& r : net.component_table()) {
                rows.emplace_back(r.name, r.parameters);
            }
            return rows;
        },
        py::arg("window") = 100, "Per-component parameter counts at the default geometry.");
    m.def(
        "shape_cascade",
        [](std::size_t window) {
            model::HlobConfig cfg;
            cfg.window = window;
            const model::HlobModel<float> net(cfg, 0);
            std::array<nn::Tensor<float>, 3> heads;
            for (std::size_t h = 0; h < 3; ++h) {
                heads[h] = nn::Tensor<float>({1, 1, window, cfg.widths[h]});
            }
            std::vector<model::ShapeProbe> probes;
            net.forward(heads, nn::Mode::Eval, nullptr, &probes);
            std::vector<std::pair<std::string, std::vector<std::size_t>>> rows;
            for (const auto& p : probes) {
                rows.emplace_back(p.name, p.shape);
            }
            return rows;
        },
        py::arg("window") = 100);

    m.def(
        "gradcheck",
        [](const std::string& precision, std::uint64_t seed) {
            const auto p = precision == "double" ? nn::Precision::Float64 : nn::Precision::Float32;
            py::list out;
            for (const auto& e : nn::run_gradcheck_suite(p, seed)) {
                py::dict d;
                d["name"] = e.name;
                d["max_relative_error"] = e.max_relative_error;
                d["tolerance"] = e.tolerance;
                d["passed"] = e.passed;
                out.append(d);
            }
            return out;
        },
        py::arg("precision") = "float", py::arg("seed") = 7);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out;
            std::ostringstream err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::dispatch(args, out, err, [](const char* name) { return std::getenv(name); });
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a CLI verb in-process; returns (exit code, stdout, stderr).");
}
