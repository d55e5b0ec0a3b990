#include "mxfar/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "mxfar/error.hpp"
#include "mxfar/random.hpp"

namespace mxfar {

Eigen::MatrixXcd bar_f(const Eigen::MatrixXd& coefficients, double omega) {
    const auto k = coefficients.rows();
    if (k == 0 || coefficients.cols() % k != 0) {
        throw Error(ErrorCode::InvalidArgument, "coefficients must be k x kp");
    }
    if (!std::isfinite(omega) || !coefficients.allFinite()) {
        throw Error(ErrorCode::InvalidArgument, "frequency and coefficients must be finite");
    }
    const auto p = coefficients.cols() / k;
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(k, k);
    for (Eigen::Index l = 1; l <= p; ++l) {
        const std::complex<double> phase = std::polar(1.0, -2.0 * std::numbers::pi * omega * static_cast<double>(l));
        out -= coefficients.middleCols((l - 1) * k, k).cast<std::complex<double>>() * phase;
    }
    return out;
}

Eigen::MatrixXcd fpdc(const Eigen::MatrixXd& coefficients, double omega) {
    Eigen::MatrixXcd f = bar_f(coefficients, omega);
    for (Eigen::Index g = 0; g < f.cols(); ++g) {
        const double norm = f.col(g).norm();
        if (norm > 0.0) f.col(g) /= norm;
    }
    return f;
}

std::vector<double> default_omega_grid(int n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "need at least one frequency");
    std::vector<double> out(n);
    for (int i = 1; i <= n; ++i) out[i - 1] = 0.5 * i / (n + 1.0);
    return out;
}

namespace {

void check_omega(const std::vector<double>& omega) {
    if (omega.empty()) throw Error(ErrorCode::InvalidArgument, "empty frequency grid");
    for (double w : omega) {
        if (!(w > 0.0 && w < 0.5)) throw Error(ErrorCode::InvalidArgument, "frequencies must lie in (0, 0.5)");
    }
}

template <class CoefficientAt>
FpdcSurface surface(const CoefficientGrid& grid, const std::vector<double>& omega, CoefficientAt&& coef) {
    check_omega(omega);
    FpdcSurface s;
    s.omega = omega;
    s.u0 = grid.grid.points;
    s.values.resize(grid.size());
    s.gap.assign(grid.size(), false);
    for (int m = 0; m < grid.size(); ++m) {
        if (grid.fits[m].gap) {
            s.gap[m] = true;
            continue;
        }
        const Eigen::MatrixXd c = coef(m);
        s.values[m].reserve(omega.size());
        for (double w : omega) s.values[m].push_back(fpdc(c, w));
    }
    return s;
}

}  // namespace

FpdcSurface mean_fpdc(const CoefficientGrid& grid, int group, const std::vector<double>& omega) {
    if (group < 0 || group >= grid.n_groups) throw Error(ErrorCode::IndexError, "group out of range");
    auto s = surface(grid, omega, [&](int m) { return grid.group_coefficients(group, m); });
    s.scope = "group";
    s.index = group;
    return s;
}

FpdcSurface subject_fpdc(const CoefficientGrid& grid, int subject, const std::vector<double>& omega) {
    if (subject < 0 || subject >= grid.n_subjects()) throw Error(ErrorCode::IndexError, "subject out of range");
    auto s = surface(grid, omega, [&](int m) { return grid.subject_coefficients(subject, m); });
    s.scope = "subject";
    s.index = subject;
    return s;
}

std::vector<Regime> default_regimes(const Panel& panel, const CoefficientGrid& grid) {
    const auto pooled = pooled_reference(panel, grid.config);
    std::vector<Regime> out;
    for (const auto& [name, prob] : {std::pair{"small", 0.2}, std::pair{"large", 0.8}}) {
        const double q = quantile(pooled, prob);
        int best = 0;
        for (int m = 1; m < grid.size(); ++m) {
            if (std::abs(grid.grid.points[m] - q) < std::abs(grid.grid.points[best] - q)) best = m;
        }
        out.push_back({name, prob, best});
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

using Cube = std::vector<std::vector<std::vector<Eigen::MatrixXd>>>;  // [group][point][omega]

// |fPDC| of every group's mean coefficients at the selected points; NaN at gaps.
Cube modulus_cube(const CoefficientGrid& grid, const std::vector<int>& points, const std::vector<double>& omega) {
    const int k = grid.n_channels;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Cube out(grid.n_groups);
    for (int g = 0; g < grid.n_groups; ++g) {
        out[g].resize(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& fit = grid.fits[points[i]];
            for (double w : omega) {
                out[g][i].push_back(fit.gap ? Eigen::MatrixXd::Constant(k, k, nan)
                                            : Eigen::MatrixXd(fpdc(fit.alpha[g], w).cwiseAbs()));
            }
        }
    }
    return out;
}

double finite_quantile(std::vector<double> v, double prob) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return quantile(std::move(v), prob);
}

}  // namespace

EdgeSignificance edge_significance(const Panel& panel, const ModelConfig& config,
                                   const SignificanceOptions& options) {
    if (!(options.alpha_level > 0.0 && options.alpha_level < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "alpha level must lie in (0, 1)");
    }
    EdgeSignificance out;
    out.alpha_level = options.alpha_level;
    out.omega = options.omega.empty() ? default_omega_grid(64) : options.omega;
    check_omega(out.omega);

    const CoefficientGrid fitted = fit_mxfar(panel, config, options.fit);
    const int k = fitted.n_channels;
    const int p = config.p;
    out.n_groups = fitted.n_groups;
    out.n_channels = k;
    if (options.grid_points.empty()) {
        for (const auto& r : default_regimes(panel, fitted)) {
            out.grid_points.push_back(r.grid_index);
            out.regime.push_back(r.name);
        }
    } else {
        for (int m : options.grid_points) {
            if (m < 0 || m >= fitted.size()) throw Error(ErrorCode::IndexError, "grid point out of range");
            out.grid_points.push_back(m);
            out.regime.push_back("u" + std::to_string(m + 1));
        }
    }
    for (int m : out.grid_points) {
        out.u0.push_back(fitted.grid.points[m]);
        if (fitted.fits[m].gap) out.warnings.push_back("grid point " + std::to_string(m) + " is a gap");
    }
    if (options.bootstrap.replicates < 2) {
        out.warnings.push_back("fewer than two bootstrap replicates: bands are degenerate and flags unreliable");
    }

    const std::size_t n_points = out.grid_points.size();
    const std::size_t n_omega = out.omega.size();

    // Estimate and percentile interval.
    const auto reps =
        bootstrap_grids(panel, fitted, options.bootstrap, Stream::Bands, {}, options.fit, &out.warnings);
    std::vector<Cube> boot;
    for (const auto& r : reps) {
        if (r) boot.push_back(modulus_cube(*r, out.grid_points, out.omega));
    }
    out.B = check_drop_rate(boot.size(), reps.size(), options.bootstrap.max_drop_fraction, out.warnings);

    const double lo_p = 0.5 * options.alpha_level;
    const double hi_p = 1.0 - 0.5 * options.alpha_level;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.value.assign(out.n_groups, std::vector<std::vector<Eigen::MatrixXcd>>(n_points));
    out.ci_lo.assign(out.n_groups, std::vector<std::vector<Eigen::MatrixXd>>(n_points));
    out.ci_hi = out.ci_lo;
    out.threshold.assign(out.n_groups, std::vector<std::vector<Eigen::MatrixXd>>(
                                           n_points, std::vector<Eigen::MatrixXd>(n_omega, Eigen::MatrixXd::Constant(k, k, nan))));
    std::vector<double> sample;
    for (int g = 0; g < out.n_groups; ++g) {
        for (std::size_t i = 0; i < n_points; ++i) {
            const auto& fit = fitted.fits[out.grid_points[i]];
            for (std::size_t w = 0; w < n_omega; ++w) {
                out.value[g][i].push_back(fit.gap ? Eigen::MatrixXcd::Constant(k, k, nan)
                                                  : fpdc(fit.alpha[g], out.omega[w]));
                Eigen::MatrixXd lo(k, k), hi(k, k);
                for (int j = 0; j < k; ++j) {
                    for (int s = 0; s < k; ++s) {
                        sample.clear();
                        for (const auto& c : boot) sample.push_back(c[g][i][w](j, s));
                        lo(j, s) = finite_quantile(sample, lo_p);
                        hi(j, s) = finite_quantile(sample, hi_p);
                    }
                }
                out.ci_lo[g][i].push_back(std::move(lo));
                out.ci_hi[g][i].push_back(std::move(hi));
            }
        }
    }

    // Link-null thresholds, one bootstrap per edge.
    out.B_null.assign(static_cast<std::size_t>(k) * k, 0);
    for (int j = 0; j < k; ++j) {
        for (int s = 0; s < k; ++s) {
            BootstrapOptions null_options = options.bootstrap;
            null_options.seed = derive_seed(options.bootstrap.seed, Stream::LinkNull,
                                            static_cast<std::uint64_t>(j * k + s));
            const auto zero_link = [&](Eigen::MatrixXd& c) {
                for (int l = 1; l <= p; ++l) c(j, regressor_index(k, s, l)) = 0.0;
            };
            const auto null_reps =
                bootstrap_grids(panel, fitted, null_options, Stream::LinkNull, zero_link, options.fit);
            std::vector<Cube> cubes;
            for (const auto& r : null_reps) {
                if (r) cubes.push_back(modulus_cube(*r, out.grid_points, out.omega));
            }
            out.B_null[j * k + s] = check_drop_rate(cubes.size(), null_reps.size(),
                                                    options.bootstrap.max_drop_fraction, out.warnings);
            for (int g = 0; g < out.n_groups; ++g) {
                for (std::size_t i = 0; i < n_points; ++i) {
                    for (std::size_t w = 0; w < n_omega; ++w) {
                        sample.clear();
                        for (const auto& c : cubes) sample.push_back(c[g][i][w](j, s));
                        out.threshold[g][i][w](j, s) = finite_quantile(sample, 1.0 - options.alpha_level);
                    }
                }
            }
        }
    }

    out.significant.assign(out.n_groups, std::vector<Eigen::MatrixXi>(n_points, Eigen::MatrixXi::Zero(k, k)));
    for (int g = 0; g < out.n_groups; ++g) {
        for (std::size_t i = 0; i < n_points; ++i) {
            for (std::size_t w = 0; w < n_omega; ++w) {
                const auto& lo = out.ci_lo[g][i][w];
                const auto& th = out.threshold[g][i][w];
                for (int j = 0; j < k; ++j) {
                    for (int s = 0; s < k; ++s) {
                        if (lo(j, s) > th(j, s)) out.significant[g][i](j, s) = 1;
                    }
                }
            }
        }
    }
    return out;
}

std::vector<EdgeSignificance> windowed_significance(const Panel& panel, const ModelConfig& config,
                                                    int window_len, const SignificanceOptions& options) {
    if (window_len < 1) throw Error(ErrorCode::InvalidArgument, "window length must be positive");
    const int windows = panel.n_time() / window_len;
    if (windows < 1) throw Error(ErrorCode::InvalidArgument, "window length exceeds the series length");
    if (!config.reference.is_channel()) {
        throw Error(ErrorCode::SpecError, "windowed analysis needs a channel reference");
    }
    std::vector<EdgeSignificance> out;
    for (int w = 0; w < windows; ++w) {
        SignificanceOptions opt = options;
        opt.bootstrap.seed = derive_seed(options.bootstrap.seed, Stream::Replicate, static_cast<std::uint64_t>(w));
        out.push_back(edge_significance(panel.window(w * window_len, window_len), config, opt));
    }
    return out;
}

NetworkSummary network_summary(const std::vector<EdgeSignificance>& windows) {
    if (windows.empty()) throw Error(ErrorCode::InvalidArgument, "network summary needs at least one window");
    const auto& first = windows.front();
    NetworkSummary out;
    out.windows = static_cast<int>(windows.size());
    out.n_channels = first.n_channels;
    for (const auto& w : windows) {
        if (w.n_channels != first.n_channels || w.n_groups != first.n_groups ||
            w.regime != first.regime) {
            throw Error(ErrorCode::InvalidArgument, "windows disagree in channels, groups or regimes");
        }
    }
    const int k = first.n_channels;
    for (int g = 0; g < first.n_groups; ++g) {
        for (std::size_t i = 0; i < first.regime.size(); ++i) {
            for (int s = 0; s < k; ++s) {
                for (int j = 0; j < k; ++j) {
                    int count = 0;
                    for (const auto& w : windows) count += w.significant[g][i](j, s);
                    out.edges.push_back({g, first.regime[i], s, j, static_cast<double>(count) / out.windows});
                }
            }
        }
    }
    return out;
}

std::string network_dot(const NetworkSummary& summary) {
    std::ostringstream os;
    os << "digraph mxfar {\n";
    std::map<std::pair<int, std::string>, std::vector<const NetworkEdge*>> slices;
    for (const auto& e : summary.edges) slices[{e.group, e.regime}].push_back(&e);
    for (const auto& [key, edges] : slices) {
        const std::string prefix = "g" + std::to_string(key.first) + "_" + key.second;
        os << "  subgraph \"cluster_" << prefix << "\" {\n";
        os << "    label=\"group " << key.first << ", " << key.second << "\";\n";
        for (int c = 0; c < summary.n_channels; ++c) {
            os << "    \"" << prefix << "_ch" << c + 1 << "\" [label=\"ch_" << c + 1 << "\"];\n";
        }
        for (const auto* e : edges) {
            if (e->source == e->target || e->proportion <= 0.0) continue;
            char label[32];
            std::snprintf(label, sizeof label, "%.3f", e->proportion);
            os << "    \"" << prefix << "_ch" << e->source + 1 << "\" -> \"" << prefix << "_ch"
               << e->target + 1 << "\" [label=\"" << label << "\", penwidth=" << 1.0 + 4.0 * e->proportion
               << "];\n";
        }
        os << "  }\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace mxfar
