#include "mxfar/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mxfar/error.hpp"
#include "mxfar/henderson.hpp"
#include "mxfar/parallel.hpp"
#include "mxfar/simulator.hpp"

namespace mxfar {

// ---------------------------------------------------------------------------
// Constant-coefficient null

namespace {

std::vector<SubjectMoments> null_moments(const Panel& panel, int p, int t0) {
    const int k = panel.n_channels();
    const int rows = panel.n_time() - t0;
    std::vector<SubjectMoments> out;
    out.reserve(panel.n_subjects());
    for (int n = 0; n < panel.n_subjects(); ++n) {
        Eigen::MatrixXd x(rows, k * p);
        Eigen::MatrixXd y(rows, k);
        for (int r = 0; r < rows; ++r) {
            x.row(r) = lagged_regressors(panel, n, t0 + r, p).transpose();
            for (int j = 0; j < k; ++j) y(r, j) = panel(n, j, t0 + r);
        }
        out.push_back(accumulate_moments(x, Eigen::VectorXd::Ones(rows), y, panel.group_of(n)));
    }
    return out;
}

// Within-group pooled variance of per-subject least-squares VAR coefficients (kp x k).
Eigen::MatrixXd null_variances(std::span<const SubjectMoments> moments, int n_groups, int k, int kp) {
    std::vector<Eigen::MatrixXd> fits;
    std::vector<int> group;
    for (const auto& m : moments) {
        SubjectMoments single = m;
        single.group = 0;
        Eigen::MatrixXd theta(kp, k);
        try {
            for (int j = 0; j < k; ++j) theta.col(j) = solve_fixed_effects(std::span(&single, 1), 1, j).theta[0];
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SingularDesign) throw;
            continue;
        }
        fits.push_back(std::move(theta));
        group.push_back(m.group);
    }
    std::vector<Eigen::MatrixXd> mean(n_groups, Eigen::MatrixXd::Zero(kp, k));
    std::vector<int> count(n_groups, 0);
    for (std::size_t i = 0; i < fits.size(); ++i) {
        mean[group[i]] += fits[i];
        ++count[group[i]];
    }
    int active = 0;
    for (int g = 0; g < n_groups; ++g) {
        if (count[g] > 0) {
            mean[g] /= count[g];
            ++active;
        }
    }
    const int dof = static_cast<int>(fits.size()) - active;
    if (dof < 1) {
        throw Error(ErrorCode::VarianceUndefined,
                    "null variance components need two subjects with usable fits in some group");
    }
    Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(kp, k);
    for (std::size_t i = 0; i < fits.size(); ++i) ss += (fits[i] - mean[group[i]]).cwiseAbs2();
    return (ss / dof).cwiseMax(kVarianceFloor);
}

}  // namespace

NullFit fit_null_mevar(const Panel& panel, int p, const NullFitOptions& options) {
    if (p < 1) throw Error(ErrorCode::InvalidArgument, "lag order p must be at least 1");
    const int t0 = options.first_time.value_or(p);
    if (t0 < p) throw Error(ErrorCode::InvalidArgument, "first response time must be at least p");
    if (p >= panel.n_time() || t0 >= panel.n_time()) {
        throw Error(ErrorCode::InvalidArgument, "T must exceed the lag order");
    }
    if (!(options.lambda > 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be positive");
    const int k = panel.n_channels();
    const int kp = k * p;
    const int n_groups = panel.n_groups();
    const auto moments = null_moments(panel, p, t0);

    NullFit fit;
    fit.p = p;
    fit.first_time = t0;
    fit.random_effects = panel.n_subjects() > 1 || options.penalty_override.has_value();
    fit.sigma2_eta = Eigen::MatrixXd::Zero(k, kp);
    if (fit.random_effects && !options.penalty_override) {
        fit.sigma2_eta = null_variances(moments, n_groups, k, kp).transpose();
    }
    fit.group_mean.assign(n_groups, Eigen::MatrixXd::Zero(k, kp));
    fit.subject.assign(panel.n_subjects(), Eigen::MatrixXd::Zero(k, kp));
    for (int j = 0; j < k; ++j) {
        HendersonSolution sol;
        if (fit.random_effects) {
            // Uniform weights, so the maximal weight in the penalty scaling is 1.
            const Eigen::VectorXd penalty =
                options.penalty_override
                    ? Eigen::VectorXd::Constant(kp, *options.penalty_override)
                    : Eigen::VectorXd(options.lambda * fit.sigma2_eta.row(j).transpose());
            sol = solve_henderson_block(moments, n_groups, penalty, j);
        } else {
            sol = solve_fixed_effects(moments, n_groups, j);
        }
        for (int g = 0; g < n_groups; ++g) fit.group_mean[g].row(j) = sol.theta[g].transpose();
        for (int n = 0; n < panel.n_subjects(); ++n) {
            fit.subject[n].row(j) = (sol.theta[panel.group_of(n)] + sol.gamma[n]).transpose();
        }
    }
    return fit;
}

Residuals null_residuals(const NullFit& fit, const Panel& panel) {
    if (static_cast<int>(fit.subject.size()) != panel.n_subjects()) {
        throw Error(ErrorCode::InvalidArgument, "null fit and panel disagree in subjects");
    }
    Residuals out;
    out.first_time = fit.first_time;
    const int k = panel.n_channels();
    const int len = panel.n_time() - fit.first_time;
    for (int n = 0; n < panel.n_subjects(); ++n) {
        Eigen::MatrixXd r(k, len);
        for (int c = 0; c < len; ++c) {
            const int t = fit.first_time + c;
            const Eigen::VectorXd pred = fit.subject[n] * lagged_regressors(panel, n, t, fit.p);
            for (int j = 0; j < k; ++j) r(j, c) = panel(n, j, t) - pred[j];
        }
        out.values.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resampling

std::vector<Eigen::MatrixXd> centered_residual_pools(const Residuals& residuals) {
    std::vector<Eigen::MatrixXd> pools;
    pools.reserve(residuals.values.size());
    for (const auto& r : residuals.values) {
        if (r.cols() == 0) throw Error(ErrorCode::InsufficientData, "empty residual series");
        Eigen::MatrixXd c = r.colwise() - r.rowwise().mean();
        pools.push_back(std::move(c));
    }
    return pools;
}

Panel regenerate_panel(const Panel& panel, int p, int initial, const std::vector<Eigen::MatrixXd>& pools,
                       bool pool_across_subjects, const CoefficientRule& coefficients, Rng& rng) {
    const int k = panel.n_channels();
    const int T = panel.n_time();
    if (initial < p || initial >= T) throw Error(ErrorCode::InvalidArgument, "bad initial segment");
    if (static_cast<int>(pools.size()) != panel.n_subjects()) {
        throw Error(ErrorCode::InvalidArgument, "one residual pool per subject is required");
    }
    std::vector<Eigen::Index> offsets{0};
    for (const auto& pool : pools) offsets.push_back(offsets.back() + pool.cols());
    std::vector<double> values(panel.values().size());
    Eigen::VectorXd x(k * p);
    const std::uint64_t base = rng();
    for (int n = 0; n < panel.n_subjects(); ++n) {
        // Keyed by subject id so that reordering subjects does not change their draws.
        Rng subject_rng(splitmix64(base ^ hash_label(panel.subject_id(n))));
        Eigen::MatrixXd y(k, T);
        for (int j = 0; j < k; ++j) {
            for (int t = 0; t < T; ++t) y(j, t) = t < initial ? panel(n, j, t) : 0.0;
        }
        for (int t = initial; t < T; ++t) {
            for (int l = 1; l <= p; ++l) x.segment((l - 1) * k, k) = y.col(t - l);
            Eigen::VectorXd next = coefficients(n, t, y) * x;
            if (pool_across_subjects) {
                std::uniform_int_distribution<Eigen::Index> pick(0, offsets.back() - 1);
                const Eigen::Index i = pick(subject_rng);
                const auto s = static_cast<std::size_t>(
                    std::upper_bound(offsets.begin(), offsets.end(), i) - offsets.begin() - 1);
                next += pools[s].col(i - offsets[s]);
            } else {
                std::uniform_int_distribution<Eigen::Index> pick(0, pools[n].cols() - 1);
                next += pools[n].col(pick(subject_rng));
            }
            if (!(next.cwiseAbs().maxCoeff() <= kBoundednessLimit)) {
                throw Error(ErrorCode::GenerationError,
                            "bootstrap series of subject " + panel.subject_id(n) + " diverged");
            }
            y.col(t) = next;
        }
        for (int j = 0; j < k; ++j) {
            for (int t = 0; t < T; ++t) values[panel.index(n, j, t)] = y(j, t);
        }
    }
    return panel.with_values(std::move(values));
}

int check_drop_rate(std::size_t kept, std::size_t requested, double max_drop_fraction,
                    std::vector<std::string>& warnings) {
    const std::size_t dropped = requested - kept;
    if (dropped > 0) {
        warnings.push_back(std::to_string(dropped) + " of " + std::to_string(requested) +
                           " bootstrap replicates failed and were dropped");
    }
    if (static_cast<double>(dropped) > max_drop_fraction * static_cast<double>(requested) || kept == 0) {
        throw Error(ErrorCode::TestError, std::to_string(dropped) + " of " + std::to_string(requested) +
                                              " bootstrap replicates failed");
    }
    return static_cast<int>(kept);
}

namespace {

bool replicate_failure(const Error& e) {
    switch (e.code()) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::SpecError:
        case ErrorCode::IndexError:
        case ErrorCode::IoError:
            return false;
        default:
            return true;
    }
}

void validate_bootstrap(const BootstrapOptions& options) {
    if (options.replicates < 1) throw Error(ErrorCode::InvalidArgument, "B must be at least 1");
    if (!(options.max_drop_fraction >= 0.0 && options.max_drop_fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "max drop fraction must lie in [0, 1]");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Nonlinearity test

NonlinearityTestResult nonlinearity_test(const Panel& panel, const ModelConfig& config,
                                         const TestOptions& options) {
    validate_bootstrap(options.bootstrap);
    config.validate(panel);
    const int t0 = config.first_time();
    NullFitOptions null_options = options.null_fit;
    null_options.first_time = t0;
    null_options.lambda = config.penalty_scale;

    const CoefficientGrid fitted = fit_mxfar(panel, config, options.fit);
    const Residuals res1 = residuals(fitted, panel);
    const NullFit null_fit = fit_null_mevar(panel, config.p, null_options);
    const Residuals res0 = null_residuals(null_fit, panel);

    NonlinearityTestResult out;
    out.rss0 = res0.sum_of_squares();
    out.rss1 = res1.sum_of_squares();
    if (!(out.rss1 > 0.0)) throw Error(ErrorCode::TestError, "MX-FAR residual sum of squares is zero");
    out.L = out.rss0 / out.rss1 - 1.0;
    out.requested = options.bootstrap.replicates;

    const auto pools = centered_residual_pools(res1);
    std::vector<std::optional<double>> boot(options.bootstrap.replicates);
    parallel_for(boot.size(), options.bootstrap.threads, [&](std::size_t b) {
        Rng rng = make_rng(options.bootstrap.seed, Stream::Bootstrap, b);
        try {
            const Panel star = regenerate_panel(
                panel, config.p, config.p, pools, options.bootstrap.pool_across_subjects,
                [&](int n, int, const Eigen::MatrixXd&) -> Eigen::MatrixXd { return null_fit.subject[n]; },
                rng);
            const CoefficientGrid g1 = fit_mxfar(star, config, options.fit);
            const double r1 = residuals(g1, star).sum_of_squares();
            const double r0 = null_residuals(fit_null_mevar(star, config.p, null_options), star).sum_of_squares();
            if (r1 > 0.0) boot[b] = r0 / r1 - 1.0;
        } catch (const Error& e) {
            if (!replicate_failure(e)) throw;
        }
    });
    for (const auto& v : boot) {
        if (v) out.L_boot.push_back(*v);
    }
    out.B = check_drop_rate(out.L_boot.size(), boot.size(), options.bootstrap.max_drop_fraction,
                            out.warnings);
    const auto exceed = std::count_if(out.L_boot.begin(), out.L_boot.end(), [&](double v) { return v >= out.L; });
    out.p_value = static_cast<double>(exceed) / out.B;
    return out;
}

// ---------------------------------------------------------------------------
// Grid bootstrap and bands

namespace {

// Unstable per-segment models (typically at thinly populated grid edges) make
// the regenerated recursion explode; they take the nearest stable segment's
// matrix instead, preferring the interior side on ties.
int stabilize_subject_coefficients(std::vector<std::vector<Eigen::MatrixXd>>& coef, const CoefficientGrid& fitted) {
    const int M = fitted.size();
    int replaced = 0;
    for (auto& subject : coef) {
        std::vector<bool> stable(M, false);
        for (int m = 0; m < M; ++m) {
            stable[m] = !fitted.fits[m].gap && companion_spectral_radius(subject[m]) < 1.0;
        }
        const std::vector<Eigen::MatrixXd> original = subject;
        for (int m = 0; m < M; ++m) {
            if (stable[m] || fitted.fits[m].gap) continue;
            const bool left_first = 2 * m >= M;
            for (int d = 1; d < M; ++d) {
                const int a = left_first ? m - d : m + d;
                const int b = left_first ? m + d : m - d;
                const int pick = (a >= 0 && a < M && stable[a]) ? a : (b >= 0 && b < M && stable[b]) ? b : -1;
                if (pick >= 0) {
                    subject[m] = original[pick];
                    ++replaced;
                    break;
                }
            }
        }
    }
    return replaced;
}

}  // namespace

std::vector<std::optional<CoefficientGrid>> bootstrap_grids(const Panel& panel, const CoefficientGrid& fitted,
                                                            const BootstrapOptions& options, Stream stream,
                                                            const CoefficientTransform& transform,
                                                            const FitOptions& fit_options,
                                                            std::vector<std::string>* warnings) {
    validate_bootstrap(options);
    const auto& config = fitted.config;
    const int t0 = config.first_time();
    const auto pools = centered_residual_pools(residuals(fitted, panel));

    // Subject coefficients per grid point, with the transform applied once.
    std::vector<std::vector<Eigen::MatrixXd>> coef(panel.n_subjects());
    for (int n = 0; n < panel.n_subjects(); ++n) {
        coef[n].resize(fitted.size());
        for (int m = 0; m < fitted.size(); ++m) {
            if (fitted.fits[m].gap) continue;
            coef[n][m] = fitted.subject_coefficients(n, m);
            if (transform) transform(coef[n][m]);
        }
    }
    const int replaced = stabilize_subject_coefficients(coef, fitted);
    if (replaced > 0 && warnings) {
        warnings->push_back(std::to_string(replaced) +
                            " unstable subject coefficient matrices replaced by the nearest stable grid point "
                            "for regeneration");
    }
    const ReferenceSpec& ref = config.reference;
    FitOptions refit = fit_options;
    refit.grid = fitted.grid;

    std::vector<std::optional<CoefficientGrid>> out(options.replicates);
    parallel_for(out.size(), options.threads, [&](std::size_t b) {
        Rng rng = make_rng(options.seed, stream, b);
        try {
            const Panel star = regenerate_panel(
                panel, config.p, t0, pools, options.pool_across_subjects,
                [&](int n, int t, const Eigen::MatrixXd& y) -> const Eigen::MatrixXd& {
                    const double u = ref.is_channel() ? y(ref.channel, t - ref.lag) : ref.exogenous[n][t];
                    const int m = fitted.grid.segment_of(u);
                    if (fitted.fits[m].gap) {
                        throw Error(ErrorCode::GapError, "regeneration reached a gap segment");
                    }
                    return coef[n][m];
                },
                rng);
            out[b] = fit_mxfar(star, config, refit);
        } catch (const Error& e) {
            if (!replicate_failure(e)) throw;
        }
    });
    return out;
}

namespace {

double finite_quantile(std::vector<double>& v, double prob) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return quantile(v, prob);
}

}  // namespace

CoefficientBand coefficient_bands(const Panel& panel, const CoefficientGrid& fitted, double level,
                                  const BootstrapOptions& options, const FitOptions& fit_options) {
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
    CoefficientBand band;
    band.grid = fitted.grid;
    band.level = level;
    band.requested = options.replicates;
    const auto reps = bootstrap_grids(panel, fitted, options, Stream::Bands, {}, fit_options, &band.warnings);
    std::vector<const CoefficientGrid*> kept;
    for (const auto& r : reps) {
        if (r) kept.push_back(&*r);
    }
    band.B = check_drop_rate(kept.size(), reps.size(), options.max_drop_fraction, band.warnings);

    const int k = fitted.n_channels;
    const int kp = k * fitted.config.p;
    const double lo_p = 0.5 * (1.0 - level);
    const double hi_p = 0.5 * (1.0 + level);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    band.estimate.assign(fitted.n_groups, {});
    band.lower.assign(fitted.n_groups, {});
    band.upper.assign(fitted.n_groups, {});
    std::vector<double> sample;
    for (int g = 0; g < fitted.n_groups; ++g) {
        for (int m = 0; m < fitted.size(); ++m) {
            Eigen::MatrixXd est = Eigen::MatrixXd::Constant(k, kp, nan);
            if (!fitted.fits[m].gap) est = fitted.fits[m].alpha[g];
            Eigen::MatrixXd lo(k, kp), hi(k, kp);
            for (int j = 0; j < k; ++j) {
                for (int c = 0; c < kp; ++c) {
                    sample.clear();
                    for (const auto* r : kept) {
                        if (!r->fits[m].gap) sample.push_back(r->fits[m].alpha[g](j, c));
                    }
                    std::vector<double> copy = sample;
                    lo(j, c) = finite_quantile(sample, lo_p);
                    hi(j, c) = finite_quantile(copy, hi_p);
                }
            }
            band.estimate[g].push_back(std::move(est));
            band.lower[g].push_back(std::move(lo));
            band.upper[g].push_back(std::move(hi));
        }
    }
    return band;
}

CoefficientBand coefficient_bands(const Panel& panel, const ModelConfig& config, double level,
                                  const BootstrapOptions& options, const FitOptions& fit_options) {
    const CoefficientGrid fitted = fit_mxfar(panel, config, fit_options);
    return coefficient_bands(panel, fitted, level, options, fit_options);
}

}  // namespace mxfar
