#include "mxfar/export.hpp"

#include <limits>
#include <ostream>
#include <type_traits>

#include "mxfar/error.hpp"
#include "mxfar/panel_io.hpp"

namespace mxfar {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) { return format_number(v); }

// Calls f(j, g, l, column) in output order: target, lag, source.
template <class F>
void for_each_coefficient(int k, int p, F&& f) {
    for (int j = 0; j < k; ++j) {
        for (int l = 1; l <= p; ++l) {
            for (int g = 0; g < k; ++g) f(j, g, l, regressor_index(k, g, l));
        }
    }
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

nlohmann::json config_json(const ModelConfig& config) {
    nlohmann::json j;
    j["p"] = config.p;
    if (config.reference.is_channel()) {
        j["reference"] = {{"source", "channel"},
                          {"channel", config.reference.channel + 1},
                          {"lag", config.reference.lag}};
    } else {
        j["reference"] = {{"source", "exogenous"}};
    }
    j["kernel"] = kernel_name(config.kernel);
    j["bandwidth"] = config.bandwidth;
    j["grid_size"] = config.grid_size;
    j["lambda"] = config.penalty_scale;
    j["grid_clip"] = {config.clip_low, config.clip_high};
    return j;
}

void write_coefficients_csv(const CoefficientGrid& grid, std::ostream& out) {
    const int k = grid.n_channels;
    const int p = grid.config.p;
    out << "channel,group,target_lag_channel,lag,u0,alpha,beta\n";
    for (int grp = 0; grp < grid.n_groups; ++grp) {
        for_each_coefficient(k, p, [&](int j, int g, int l, int c) {
            for (const auto& f : grid.fits) {
                const bool gap = f.gap;
                out << j + 1 << ',' << grp << ',' << g + 1 << ',' << l << ',' << num(f.u0) << ','
                    << num(gap ? kNan : f.alpha[grp](j, c)) << ',' << num(gap ? kNan : f.beta[grp](j, c))
                    << '\n';
            }
        });
    }
}

void write_random_effects_csv(const CoefficientGrid& grid, std::ostream& out) {
    const int k = grid.n_channels;
    const int p = grid.config.p;
    out << "subject_id,group,channel,target_lag_channel,lag,u0,a,b\n";
    for (int n = 0; n < grid.n_subjects(); ++n) {
        for_each_coefficient(k, p, [&](int j, int g, int l, int c) {
            for (const auto& f : grid.fits) {
                const bool gap = f.gap;
                out << grid.subject_ids[n] << ',' << grid.group_of[n] << ',' << j + 1 << ',' << g + 1 << ','
                    << l << ',' << num(f.u0) << ',' << num(gap ? kNan : f.a[n](j, c)) << ','
                    << num(gap ? kNan : f.b[n](j, c)) << '\n';
            }
        });
    }
}

nlohmann::json fit_summary_json(const CoefficientGrid& grid) {
    nlohmann::json j;
    j["config"] = config_json(grid.config);
    j["n_subjects"] = grid.n_subjects();
    j["n_groups"] = grid.n_groups;
    j["n_channels"] = grid.n_channels;
    j["random_effects"] = grid.random_effects;
    j["grid"] = {{"lower", grid.grid.lower}, {"upper", grid.grid.upper}, {"points", grid.grid.points}};
    if (grid.variance_components.sigma2_alpha.size() > 0) {
        j["variance_components"] = {{"sigma2_alpha", matrix_json(grid.variance_components.sigma2_alpha)},
                                    {"sigma2_beta", matrix_json(grid.variance_components.sigma2_beta)}};
    } else {
        j["variance_components"] = nullptr;
    }
    nlohmann::json sigma = nlohmann::json::array();
    nlohmann::json gaps = nlohmann::json::array();
    for (int m = 0; m < grid.size(); ++m) {
        const auto& f = grid.fits[m];
        if (f.gap) {
            gaps.push_back({{"index", m}, {"u0", f.u0}, {"reason", f.gap_reason}});
            sigma.push_back(nullptr);
            continue;
        }
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < f.sigma2_eps.size(); ++c) row.push_back(f.sigma2_eps[c]);
        sigma.push_back(std::move(row));
    }
    j["sigma2_eps"] = {{"per_grid_point", std::move(sigma)}, {"pooled", grid.pooled_sigma2_eps()}};
    j["gaps"] = std::move(gaps);
    j["subject_ids"] = grid.subject_ids;
    j["group_of"] = grid.group_of;
    return j;
}

void write_ape_csv(const ApeReport& report, std::ostream& out) {
    out << "h,p,ref_channel,ref_lag";
    for (int q = 1; q <= report.Q; ++q) out << ",ape_q" << q;
    out << ",ape,best_flag\n";
    for (std::size_t i = 0; i < report.candidates.size(); ++i) {
        const auto& c = report.candidates[i];
        const auto& r = report.results[i];
        out << num(c.bandwidth) << ',' << c.p << ',';
        if (c.reference.is_channel()) {
            out << c.reference.channel + 1 << ',' << c.reference.lag;
        } else {
            out << "exogenous,0";
        }
        for (double v : r.per_subseries) out << ',' << num(v);
        out << ',' << num(r.ape) << ',' << (static_cast<int>(i) == report.best ? 1 : 0) << '\n';
    }
}

void write_lboot_csv(const NonlinearityTestResult& result, std::ostream& out) {
    out << "replicate,L_boot\n";
    for (std::size_t b = 0; b < result.L_boot.size(); ++b) out << b + 1 << ',' << num(result.L_boot[b]) << '\n';
}

nlohmann::json test_summary_json(const NonlinearityTestResult& result) {
    return {{"L", result.L},        {"rss0", result.rss0},         {"rss1", result.rss1},
            {"B", result.B},        {"requested", result.requested}, {"p_value", result.p_value},
            {"warnings", result.warnings}};
}

void write_bands_csv(const CoefficientBand& band, std::ostream& out) {
    out << "channel,group,target_lag_channel,lag,u0,estimate,lower,upper\n";
    if (band.estimate.empty() || band.estimate.front().empty()) return;
    const int k = static_cast<int>(band.estimate.front().front().rows());
    const int p = static_cast<int>(band.estimate.front().front().cols()) / k;
    for (std::size_t grp = 0; grp < band.estimate.size(); ++grp) {
        for_each_coefficient(k, p, [&](int j, int g, int l, int c) {
            for (int m = 0; m < band.grid.size(); ++m) {
                out << j + 1 << ',' << grp << ',' << g + 1 << ',' << l << ',' << num(band.grid.points[m]) << ','
                    << num(band.estimate[grp][m](j, c)) << ',' << num(band.lower[grp][m](j, c)) << ','
                    << num(band.upper[grp][m](j, c)) << '\n';
            }
        });
    }
}

void write_fpdc_csv(const EdgeSignificance& sig, std::ostream& out) {
    out << "group,target,source,omega,u0,modulus,ci_lo,ci_hi,threshold,significant\n";
    const int k = sig.n_channels;
    for (int grp = 0; grp < sig.n_groups; ++grp) {
        for (int j = 0; j < k; ++j) {
            for (int s = 0; s < k; ++s) {
                for (std::size_t i = 0; i < sig.u0.size(); ++i) {
                    for (std::size_t w = 0; w < sig.omega.size(); ++w) {
                        out << grp << ',' << j + 1 << ',' << s + 1 << ',' << num(sig.omega[w]) << ','
                            << num(sig.u0[i]) << ',' << num(std::abs(sig.value[grp][i][w](j, s))) << ','
                            << num(sig.ci_lo[grp][i][w](j, s)) << ',' << num(sig.ci_hi[grp][i][w](j, s)) << ','
                            << num(sig.threshold[grp][i][w](j, s)) << ',' << sig.significant[grp][i](j, s) << '\n';
                    }
                }
            }
        }
    }
}

nlohmann::json significance_json(const EdgeSignificance& sig) {
    nlohmann::json points = nlohmann::json::array();
    for (std::size_t i = 0; i < sig.u0.size(); ++i) {
        points.push_back({{"grid_index", sig.grid_points[i]}, {"u0", sig.u0[i]}, {"regime", sig.regime[i]}});
    }
    nlohmann::json b_null = nlohmann::json::array();
    for (int j = 0; j < sig.n_channels; ++j) {
        for (int s = 0; s < sig.n_channels; ++s) {
            b_null.push_back({{"target", j + 1}, {"source", s + 1}, {"B", sig.B_null[j * sig.n_channels + s]}});
        }
    }
    return {{"threshold_method",
             "link-null residual bootstrap: (g->j) coefficients zeroed in the regenerating model, threshold = "
             "(1 - alpha) quantile of |fPDC| over refits, pointwise in (group, u0, omega)"},
            {"interval", "percentile interval of |fPDC| at level 1 - alpha from residual-bootstrap refits"},
            {"alpha_level", sig.alpha_level},
            {"B", sig.B},
            {"B_null", std::move(b_null)},
            {"points", std::move(points)},
            {"omega", sig.omega},
            {"warnings", sig.warnings}};
}

void write_fpdc_surface_csv(const std::vector<FpdcSurface>& surfaces, int n_channels, std::ostream& out) {
    out << "group,target,source,omega,u0,re,im,modulus\n";
    for (const auto& s : surfaces) {
        for (int j = 0; j < n_channels; ++j) {
            for (int g = 0; g < n_channels; ++g) {
                for (std::size_t m = 0; m < s.u0.size(); ++m) {
                    for (std::size_t w = 0; w < s.omega.size(); ++w) {
                        out << s.index << ',' << j + 1 << ',' << g + 1 << ',' << num(s.omega[w]) << ','
                            << num(s.u0[m]) << ',';
                        if (s.gap[m]) {
                            out << "nan,nan,nan\n";
                            continue;
                        }
                        const auto z = s.values[m][w](j, g);
                        out << num(z.real()) << ',' << num(z.imag()) << ',' << num(std::abs(z)) << '\n';
                    }
                }
            }
        }
    }
}

void write_network_csv(const NetworkSummary& summary, std::ostream& out) {
    out << "group,regime,source,target,proportion\n";
    for (const auto& e : summary.edges) {
        out << e.group << ',' << e.regime << ',' << e.source + 1 << ',' << e.target + 1 << ','
            << num(e.proportion) << '\n';
    }
}

nlohmann::json generator_spec_json(const GeneratorSpec& spec) {
    nlohmann::json s;
    s["kind"] = generator_name(spec.kind);
    s["group_sizes"] = spec.group_sizes;
    s["n_time"] = spec.n_time;
    s["burn_in"] = spec.burn_in;
    s["noise_sd"] = spec.noise_sd;
    s["random_effect_sd"] = spec.random_effect_sd;
    s["seed"] = spec.seed;
    s["ref_channel"] = spec.ref_channel + 1;
    s["ref_lag"] = spec.ref_lag;
    s["max_redraws"] = spec.max_redraws;
    nlohmann::json lags = nlohmann::json::array();
    for (const auto& m : spec.coefficients) lags.push_back(matrix_json(m));
    s["coefficients"] = std::move(lags);
    nlohmann::json high = nlohmann::json::array();
    for (const auto& m : spec.coefficients_high) high.push_back(matrix_json(m));
    s["coefficients_high"] = std::move(high);
    s["threshold"] = spec.threshold;
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : spec.curves) {
        curves.push_back({{"target", c.target + 1}, {"source", c.source + 1}, {"lag", c.lag},
                          {"knots", c.knots}, {"values", c.values}});
    }
    s["curves"] = std::move(curves);
    s["custom_channels"] = spec.custom_channels;
    s["custom_order"] = spec.custom_order;
    return s;
}

namespace {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows.at(i).size()) != c) {
            throw Error(ErrorCode::SpecError, "ragged coefficient matrix in generator spec");
        }
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows.at(i).at(j).get<double>();
    }
    return m;
}

}  // namespace

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
    try {
        GeneratorSpec s = GeneratorSpec::defaults(parse_generator(j.at("kind").get<std::string>()));
        auto take = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        take("group_sizes", s.group_sizes);
        take("n_time", s.n_time);
        take("burn_in", s.burn_in);
        take("noise_sd", s.noise_sd);
        take("random_effect_sd", s.random_effect_sd);
        take("seed", s.seed);
        take("max_redraws", s.max_redraws);
        take("threshold", s.threshold);
        take("custom_channels", s.custom_channels);
        take("custom_order", s.custom_order);
        if (j.contains("ref_channel")) s.ref_channel = j.at("ref_channel").get<int>() - 1;
        take("ref_lag", s.ref_lag);
        if (j.contains("coefficients")) {
            s.coefficients.clear();
            for (const auto& m : j.at("coefficients")) s.coefficients.push_back(matrix_from_json(m));
        }
        if (j.contains("coefficients_high")) {
            s.coefficients_high.clear();
            for (const auto& m : j.at("coefficients_high")) s.coefficients_high.push_back(matrix_from_json(m));
        }
        if (j.contains("curves")) {
            s.curves.clear();
            for (const auto& c : j.at("curves")) {
                CoefficientCurve curve;
                curve.target = c.at("target").get<int>() - 1;
                curve.source = c.at("source").get<int>() - 1;
                curve.lag = c.at("lag").get<int>();
                curve.knots = c.at("knots").get<std::vector<double>>();
                curve.values = c.at("values").get<std::vector<double>>();
                s.curves.push_back(std::move(curve));
            }
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SpecError, std::string("generator spec: ") + e.what());
    }
}

nlohmann::json simulation_json(const Simulation& sim, const ReferenceGrid& grid) {
    const auto& spec = sim.truth.spec();
    nlohmann::json s = generator_spec_json(spec);
    nlohmann::json effects = nlohmann::json::array();
    for (const auto& e : sim.truth.effects()) effects.push_back(std::vector<double>(e.data(), e.data() + e.size()));

    nlohmann::json mean = nlohmann::json::array();
    for (std::size_t g = 0; g < spec.group_sizes.size(); ++g) {
        nlohmann::json per_point = nlohmann::json::array();
        for (double u : grid.points) per_point.push_back(matrix_json(sim.truth.mean_coefficients(static_cast<int>(g), u)));
        mean.push_back(std::move(per_point));
    }
    nlohmann::json subjects = nlohmann::json::array();
    for (int n = 0; n < sim.truth.n_subjects(); ++n) {
        nlohmann::json per_point = nlohmann::json::array();
        for (double u : grid.points) per_point.push_back(matrix_json(sim.truth.subject_coefficients(n, u)));
        subjects.push_back({{"subject_id", sim.panel.subject_id(n)}, {"group", sim.panel.group_of(n)},
                            {"coefficients", std::move(per_point)}});
    }
    return {{"spec", std::move(s)},
            {"effects", std::move(effects)},
            {"layout", "coefficients[target][(lag - 1) * k + source], 1-based in names only"},
            {"grid", grid.points},
            {"true_mean_coefficients", std::move(mean)},
            {"true_subject_coefficients", std::move(subjects)}};
}

}  // namespace mxfar
