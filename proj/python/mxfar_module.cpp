#include <complex>
#include <cstring>
#include <sstream>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mxfar/error.hpp"
#include "mxfar/export.hpp"
#include "mxfar/panel_io.hpp"

namespace py = pybind11;
using namespace mxfar;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Panel panel_from_array(const Array& values, std::vector<int> groups, std::vector<std::string> ids) {
    if (values.ndim() != 3) throw py::value_error("values must have shape (N, k, T)");
    const auto N = static_cast<int>(values.shape(0));
    const auto k = static_cast<int>(values.shape(1));
    const auto T = static_cast<int>(values.shape(2));
    std::vector<double> v(values.data(), values.data() + values.size());
    return Panel(N, k, T, std::move(v), std::move(groups), std::move(ids));
}

Array panel_values(const Panel& p) {
    Array out({p.n_subjects(), p.n_channels(), p.n_time()});
    std::memcpy(out.mutable_data(), p.values().data(), p.values().size() * sizeof(double));
    return out;
}

/// Stacks k x kp matrices into an array of shape (outer, inner, k, kp), NaN where `missing`.
template <class Get, class Missing>
Array stack(int outer, int inner, int rows, int cols, Get get, Missing missing) {
    Array out({outer, inner, rows, cols});
    auto r = out.mutable_unchecked<4>();
    for (int o = 0; o < outer; ++o) {
        for (int i = 0; i < inner; ++i) {
            const bool gap = missing(o, i);
            const Eigen::MatrixXd m = gap ? Eigen::MatrixXd() : Eigen::MatrixXd(get(o, i));
            for (int a = 0; a < rows; ++a) {
                for (int b = 0; b < cols; ++b) r(o, i, a, b) = gap ? std::nan("") : m(a, b);
            }
        }
    }
    return out;
}

ModelConfig make_config(int p, int ref_channel, int ref_lag, double bandwidth, const std::string& kernel,
                        int grid_size, double penalty_scale) {
    ModelConfig c;
    c.p = p;
    c.reference = ReferenceSpec::from_channel(ref_channel, ref_lag);
    c.bandwidth = bandwidth;
    c.kernel = parse_kernel(kernel);
    c.grid_size = grid_size;
    c.penalty_scale = penalty_scale;
    c.validate();
    return c;
}

py::dict grid_dict(const CoefficientGrid& g) {
    const int k = g.n_channels;
    const int kp = k * g.config.p;
    const int M = g.size();
    auto gap = [&](int, int m) { return static_cast<bool>(g.fits[m].gap); };
    py::dict d;
    d["u0"] = g.grid.points;
    d["gap"] = [&] {
        std::vector<bool> v;
        for (const auto& f : g.fits) v.push_back(f.gap);
        return v;
    }();
    d["alpha"] = stack(g.n_groups, M, k, kp, [&](int grp, int m) { return g.fits[m].alpha[grp]; }, gap);
    d["beta"] = stack(g.n_groups, M, k, kp, [&](int grp, int m) { return g.fits[m].beta[grp]; }, gap);
    d["a"] = stack(g.n_subjects(), M, k, kp, [&](int n, int m) { return g.fits[m].a[n]; }, gap);
    d["b"] = stack(g.n_subjects(), M, k, kp, [&](int n, int m) { return g.fits[m].b[n]; }, gap);
    d["subject"] = stack(g.n_subjects(), M, k, kp, [&](int n, int m) { return g.subject_coefficients(n, m); }, gap);
    d["pooled_sigma2_eps"] = g.pooled_sigma2_eps();
    d["random_effects"] = g.random_effects;
    d["subject_ids"] = g.subject_ids;
    d["group_of"] = g.group_of;
    d["summary_json"] = fit_summary_json(g).dump();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mixed-effects functional-coefficient autoregression for multichannel panels";

    static py::exception<Error> error(m, "MxfarError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error, e.what());
        }
    });

    py::class_<Panel>(m, "Panel")
        .def(py::init(&panel_from_array), py::arg("values"), py::arg("groups") = std::vector<int>{},
             py::arg("subject_ids") = std::vector<std::string>{},
             "Panel from an (N, k, T) array; groups default to 0, ids to 1..N.")
        .def_property_readonly("n_subjects", &Panel::n_subjects)
        .def_property_readonly("n_channels", &Panel::n_channels)
        .def_property_readonly("n_time", &Panel::n_time)
        .def_property_readonly("n_groups", &Panel::n_groups)
        .def_property_readonly("groups", &Panel::groups)
        .def_property_readonly("subject_ids", &Panel::subject_ids)
        .def_property_readonly("values", &panel_values)
        .def("__repr__", [](const Panel& p) {
            std::ostringstream os;
            os << "<Panel N=" << p.n_subjects() << " k=" << p.n_channels() << " T=" << p.n_time()
               << " G=" << p.n_groups() << ">";
            return os.str();
        });

    m.def("read_panel_csv", &read_panel_csv, py::arg("path"));
    m.def(
        "write_panel_csv", [](const Panel& p, const std::string& path) { write_panel_csv(p, path); },
        py::arg("panel"), py::arg("path"));
    m.def(
        "validate_panel_file",
        [](const std::string& path) {
            const auto report = validate_panel_file(path);
            py::list violations;
            for (const auto& v : report.violations) {
                violations.append(py::dict(py::arg("line") = v.line, py::arg("subject") = v.subject,
                                           py::arg("message") = v.message));
            }
            return py::make_tuple(report.ok(), violations);
        },
        py::arg("path"), "Returns (ok, [violation dicts]).");

    m.def(
        "simulate",
        [](const std::string& kind, std::uint64_t seed, std::vector<int> group_sizes, int n_time,
           std::optional<double> effect_sd) {
            auto spec = GeneratorSpec::defaults(parse_generator(kind));
            spec.seed = seed;
            if (!group_sizes.empty()) spec.group_sizes = std::move(group_sizes);
            spec.n_time = n_time;
            if (effect_sd) spec.random_effect_sd = *effect_sd;
            auto sim = simulate(spec);
            return py::make_tuple(std::move(sim.panel), generator_spec_json(spec).dump());
        },
        py::arg("kind") = "expar", py::arg("seed") = 0, py::arg("group_sizes") = std::vector<int>{},
        py::arg("n_time") = 500, py::arg("effect_sd") = py::none(),
        "Simulated panel and its generator spec as JSON text.");

    m.def(
        "fit",
        [](const Panel& panel, int p, int ref_channel, int ref_lag, double bandwidth, const std::string& kernel,
           int grid_size, double penalty_scale) {
            const auto cfg = make_config(p, ref_channel, ref_lag, bandwidth, kernel, grid_size, penalty_scale);
            py::gil_scoped_release release;
            auto grid = fit_mxfar(panel, cfg);
            py::gil_scoped_acquire acquire;
            return grid_dict(grid);
        },
        py::arg("panel"), py::arg("p") = 1, py::arg("ref_channel") = 0, py::arg("ref_lag") = 1,
        py::arg("bandwidth") = 1.0, py::arg("kernel") = "epanechnikov", py::arg("grid_size") = 50,
        py::arg("penalty_scale") = 1.0,
        "Fits the model; coefficient arrays have shape (groups or subjects, M, k, k p). Channels are 0-based.");

    m.def(
        "select_model",
        [](const Panel& panel, std::vector<double> bandwidths, std::vector<int> orders,
           std::vector<std::pair<int, int>> references, int grid_size, int threads) {
            ModelConfig base;
            base.grid_size = grid_size;
            std::vector<ReferenceSpec> refs;
            for (auto [c, l] : references) refs.push_back(ReferenceSpec::from_channel(c, l));
            SelectionOptions opt;
            opt.threads = threads;
            ApeReport report;
            {
                py::gil_scoped_release release;
                report = select_model(panel, base, bandwidths, orders, refs, opt);
            }
            py::list rows;
            for (std::size_t i = 0; i < report.candidates.size(); ++i) {
                const auto& c = report.candidates[i];
                rows.append(py::dict(py::arg("bandwidth") = c.bandwidth, py::arg("p") = c.p,
                                     py::arg("ref_channel") = c.reference.channel,
                                     py::arg("ref_lag") = c.reference.lag, py::arg("ape") = report.results[i].ape,
                                     py::arg("per_subseries") = report.results[i].per_subseries));
            }
            return py::make_tuple(report.best, rows);
        },
        py::arg("panel"), py::arg("bandwidths"), py::arg("orders"), py::arg("references"),
        py::arg("grid_size") = 50, py::arg("threads") = 0, "Returns (best index, candidate rows).");

    m.def(
        "nonlinearity_test",
        [](const Panel& panel, int p, int ref_channel, int ref_lag, double bandwidth, int replicates,
           std::uint64_t seed, int threads) {
            const auto cfg = make_config(p, ref_channel, ref_lag, bandwidth, "epanechnikov", 50, 1.0);
            TestOptions opt;
            opt.bootstrap.replicates = replicates;
            opt.bootstrap.seed = seed;
            opt.bootstrap.threads = threads;
            NonlinearityTestResult res;
            {
                py::gil_scoped_release release;
                res = nonlinearity_test(panel, cfg, opt);
            }
            return py::dict(py::arg("L") = res.L, py::arg("B") = res.B, py::arg("p_value") = res.p_value,
                            py::arg("L_boot") = res.L_boot, py::arg("warnings") = res.warnings);
        },
        py::arg("panel"), py::arg("p") = 1, py::arg("ref_channel") = 0, py::arg("ref_lag") = 1,
        py::arg("bandwidth") = 1.0, py::arg("replicates") = 200, py::arg("seed") = 0, py::arg("threads") = 0);

    m.def(
        "coefficient_bands",
        [](const Panel& panel, int p, int ref_channel, int ref_lag, double bandwidth, double level, int replicates,
           std::uint64_t seed, int threads) {
            const auto cfg = make_config(p, ref_channel, ref_lag, bandwidth, "epanechnikov", 50, 1.0);
            BootstrapOptions opt;
            opt.replicates = replicates;
            opt.seed = seed;
            opt.threads = threads;
            CoefficientBand band;
            {
                py::gil_scoped_release release;
                band = coefficient_bands(panel, cfg, level, opt);
            }
            const int G = static_cast<int>(band.estimate.size());
            const int M = band.grid.size();
            const int k = panel.n_channels();
            auto never = [](int, int) { return false; };
            return py::dict(
                py::arg("u0") = band.grid.points, py::arg("B") = band.B,
                py::arg("estimate") = stack(G, M, k, k * p, [&](int g, int i) { return band.estimate[g][i]; }, never),
                py::arg("lower") = stack(G, M, k, k * p, [&](int g, int i) { return band.lower[g][i]; }, never),
                py::arg("upper") = stack(G, M, k, k * p, [&](int g, int i) { return band.upper[g][i]; }, never),
                py::arg("warnings") = band.warnings);
        },
        py::arg("panel"), py::arg("p") = 1, py::arg("ref_channel") = 0, py::arg("ref_lag") = 1,
        py::arg("bandwidth") = 1.0, py::arg("level") = 0.95, py::arg("replicates") = 200, py::arg("seed") = 0,
        py::arg("threads") = 0);

    m.def("default_omega_grid", &default_omega_grid, py::arg("n") = 64);
    m.def(
        "bar_f", [](const Eigen::MatrixXd& f, double omega) { return bar_f(f, omega); }, py::arg("coefficients"),
        py::arg("omega"));
    m.def(
        "fpdc", [](const Eigen::MatrixXd& f, double omega) { return fpdc(f, omega); }, py::arg("coefficients"),
        py::arg("omega"), "Column-normalized bar_f of a k x kp coefficient matrix.");

    m.def(
        "mean_fpdc",
        [](const Panel& panel, int group, int p, int ref_channel, int ref_lag, double bandwidth, int grid_size,
           int omega_points) {
            const auto cfg = make_config(p, ref_channel, ref_lag, bandwidth, "epanechnikov", grid_size, 1.0);
            const auto grid = fit_mxfar(panel, cfg);
            const auto s = mean_fpdc(grid, group, default_omega_grid(omega_points));
            const int M = static_cast<int>(s.u0.size());
            const int W = static_cast<int>(s.omega.size());
            const int k = panel.n_channels();
            py::array_t<std::complex<double>> out({M, W, k, k});
            auto r = out.mutable_unchecked<4>();
            for (int i = 0; i < M; ++i) {
                for (int w = 0; w < W; ++w) {
                    for (int a = 0; a < k; ++a) {
                        for (int b = 0; b < k; ++b) {
                            r(i, w, a, b) = s.gap[i] ? std::complex<double>(std::nan(""), std::nan(""))
                                                     : s.values[i][w](a, b);
                        }
                    }
                }
            }
            return py::make_tuple(s.u0, s.omega, out);
        },
        py::arg("panel"), py::arg("group") = 0, py::arg("p") = 1, py::arg("ref_channel") = 0, py::arg("ref_lag") = 1,
        py::arg("bandwidth") = 1.0, py::arg("grid_size") = 50, py::arg("omega_points") = 64,
        "Returns (u0, omega, values) with values[m, w, target, source] complex.");

    m.def(
        "edge_significance",
        [](const Panel& panel, int p, int ref_channel, int ref_lag, double bandwidth, double alpha_level,
           int replicates, int omega_points, std::uint64_t seed, int threads) {
            const auto cfg = make_config(p, ref_channel, ref_lag, bandwidth, "epanechnikov", 50, 1.0);
            SignificanceOptions opt;
            opt.alpha_level = alpha_level;
            opt.bootstrap.replicates = replicates;
            opt.bootstrap.seed = seed;
            opt.bootstrap.threads = threads;
            opt.omega = default_omega_grid(omega_points);
            EdgeSignificance sig;
            {
                py::gil_scoped_release release;
                sig = edge_significance(panel, cfg, opt);
            }
            py::list significant;
            for (const auto& per_group : sig.significant) {
                py::list g;
                for (const auto& mat : per_group) g.append(Eigen::MatrixXi(mat));
                significant.append(g);
            }
            return py::dict(py::arg("u0") = sig.u0, py::arg("regime") = sig.regime,
                            py::arg("significant") = significant, py::arg("B") = sig.B,
                            py::arg("warnings") = sig.warnings, py::arg("summary_json") = significance_json(sig).dump());
        },
        py::arg("panel"), py::arg("p") = 1, py::arg("ref_channel") = 0, py::arg("ref_lag") = 1,
        py::arg("bandwidth") = 1.0, py::arg("alpha_level") = 0.05, py::arg("replicates") = 200,
        py::arg("omega_points") = 64, py::arg("seed") = 0, py::arg("threads") = 0,
        "significant[group][point] is a k x k 0/1 matrix (target row, source column).");
}
