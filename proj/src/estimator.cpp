#include "mxfar/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mxfar/error.hpp"

namespace mxfar {

Eigen::VectorXd lagged_regressors(const Panel& panel, int subject, int t, int p) {
    const int k = panel.n_channels();
    Eigen::VectorXd x(k * p);
    for (int lag = 1; lag <= p; ++lag) {
        for (int g = 0; g < k; ++g) x[regressor_index(k, g, lag)] = panel(subject, g, t - lag);
    }
    return x;
}

// ---------------------------------------------------------------------------
// DesignCache

DesignCache::DesignCache(const Panel& panel, const ModelConfig& config) : config_(config) {
    config.validate(panel);
    const int k = panel.n_channels();
    const int t0 = config.first_time();
    const int rows = panel.n_time() - t0;
    kp_ = k * config.p;
    n_groups_ = panel.n_groups();
    group_of_ = panel.groups();
    x_.reserve(panel.n_subjects());
    for (int n = 0; n < panel.n_subjects(); ++n) {
        Eigen::MatrixXd x(rows, kp_);
        Eigen::VectorXd u(rows);
        Eigen::MatrixXd y(rows, k);
        for (int r = 0; r < rows; ++r) {
            const int t = t0 + r;
            x.row(r) = lagged_regressors(panel, n, t, config.p).transpose();
            u[r] = config.reference.value(panel, n, t);
            for (int j = 0; j < k; ++j) y(r, j) = panel(n, j, t);
        }
        x_.push_back(std::move(x));
        u_.push_back(std::move(u));
        y_.push_back(std::move(y));
    }
}

std::vector<SubjectMoments> DesignCache::moments(double u0) const {
    const int q = 2 * kp_;
    const double h = config_.bandwidth;
    const double reach = kernel_support(config_.kernel) * h;
    std::vector<SubjectMoments> out;
    out.reserve(x_.size());
    Eigen::MatrixXd zr;
    Eigen::MatrixXd yr;
    for (std::size_t n = 0; n < x_.size(); ++n) {
        const auto& x = x_[n];
        const auto& u = u_[n];
        const auto& y = y_[n];
        const auto rows = x.rows();
        zr.resize(rows, q);
        yr.resize(rows, y.cols());
        SubjectMoments m;
        m.group = group_of_[n];
        int c = 0;
        for (Eigen::Index r = 0; r < rows; ++r) {
            const double d = u[r] - u0;
            if (std::abs(d) > reach) continue;
            const double w = kernel_value(config_.kernel, d / h) / h;
            if (!(w > 0.0)) continue;
            const double sw = std::sqrt(w);
            zr.row(c).head(kp_) = sw * x.row(r);
            zr.row(c).tail(kp_) = (sw * d) * x.row(r);
            yr.row(c) = sw * y.row(r);
            m.weight_sum += w;
            m.max_weight = std::max(m.max_weight, w);
            ++c;
        }
        m.n_nonzero = c;
        const auto zt = zr.topRows(c);
        const auto yt = yr.topRows(c);
        m.gram.setZero(q, q);
        m.gram.selfadjointView<Eigen::Lower>().rankUpdate(zt.transpose());
        m.gram.triangularView<Eigen::StrictlyUpper>() = m.gram.transpose();
        m.cross = zt.transpose() * yt;
        m.yy = yt.colwise().squaredNorm().transpose();
        out.push_back(std::move(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Explicit designs

std::vector<SubjectMoments> LocalDesign::moments() const {
    std::vector<SubjectMoments> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) out.push_back(accumulate_moments(s.rows, s.weights, s.response, s.group));
    return out;
}

LocalDesign build_local_design(const Panel& panel, const ModelConfig& config, int channel, double u0) {
    config.validate(panel);
    if (channel < 0 || channel >= panel.n_channels()) {
        throw Error(ErrorCode::IndexError, "target channel out of range");
    }
    const int k = panel.n_channels();
    const int kp = k * config.p;
    const int t0 = config.first_time();
    const int rows = panel.n_time() - t0;
    if (rows < 1) throw Error(ErrorCode::EmptyDesign, "no usable rows");
    LocalDesign design;
    design.n_groups = panel.n_groups();
    design.n_coefficients = 2 * kp;
    for (int n = 0; n < panel.n_subjects(); ++n) {
        SubjectDesign s;
        s.group = panel.group_of(n);
        s.rows.resize(rows, 2 * kp);
        s.weights.resize(rows);
        s.response.resize(rows);
        for (int r = 0; r < rows; ++r) {
            const int t = t0 + r;
            const Eigen::VectorXd x = lagged_regressors(panel, n, t, config.p);
            const double d = config.reference.value(panel, n, t) - u0;
            s.rows.row(r).head(kp) = x.transpose();
            s.rows.row(r).tail(kp) = d * x.transpose();
            s.weights[r] = scaled_kernel_weight(config.kernel, d + u0, u0, config.bandwidth);
            s.response[r] = panel(n, channel, t);
        }
        design.subjects.push_back(std::move(s));
    }
    return design;
}

DenseDesign materialize(const LocalDesign& design) {
    const int q = design.n_coefficients;
    const int n_subjects = static_cast<int>(design.subjects.size());
    Eigen::Index total = 0;
    for (const auto& s : design.subjects) total += s.rows.rows();
    DenseDesign d;
    d.X = Eigen::MatrixXd::Zero(total, static_cast<Eigen::Index>(design.n_groups) * q);
    d.Z = Eigen::MatrixXd::Zero(total, static_cast<Eigen::Index>(n_subjects) * q);
    d.W.resize(total);
    d.Y.resize(total);
    Eigen::Index r0 = 0;
    for (int n = 0; n < n_subjects; ++n) {
        const auto& s = design.subjects[n];
        const auto m = s.rows.rows();
        d.X.block(r0, static_cast<Eigen::Index>(s.group) * q, m, q) = s.rows;
        d.Z.block(r0, static_cast<Eigen::Index>(n) * q, m, q) = s.rows;
        d.W.segment(r0, m) = s.weights;
        d.Y.segment(r0, m) = s.response;
        r0 += m;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Single-subject / pooled local linear fit

namespace {

SubjectMoments pooled_moments(std::span<const SubjectMoments> subjects) {
    SubjectMoments pooled = subjects.front();
    pooled.group = 0;
    for (std::size_t n = 1; n < subjects.size(); ++n) {
        const auto& s = subjects[n];
        pooled.gram += s.gram;
        pooled.cross += s.cross;
        pooled.yy += s.yy;
        pooled.weight_sum += s.weight_sum;
        pooled.max_weight = std::max(pooled.max_weight, s.max_weight);
        pooled.n_nonzero += s.n_nonzero;
    }
    return pooled;
}

// Independent fit of one set of moments for all responses; q x r, or nullopt if unusable.
std::optional<Eigen::MatrixXd> independent_fit(const SubjectMoments& m) {
    const auto q = m.gram.rows();
    if (m.n_nonzero < q) return std::nullopt;
    SubjectMoments single = m;
    single.group = 0;
    Eigen::MatrixXd theta(q, m.cross.cols());
    try {
        for (Eigen::Index j = 0; j < m.cross.cols(); ++j) {
            theta.col(j) = solve_fixed_effects(std::span(&single, 1), 1, static_cast<int>(j)).theta[0];
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::SingularDesign) return std::nullopt;
        throw;
    }
    return theta;
}

}  // namespace

LocalLinearFit fit_far_local(const Panel& panel, const ModelConfig& config, int channel, double u0) {
    if (channel < 0 || channel >= panel.n_channels()) {
        throw Error(ErrorCode::IndexError, "target channel out of range");
    }
    const DesignCache cache(panel, config);
    const auto moments = cache.moments(u0);
    const SubjectMoments pooled = pooled_moments(moments);
    const int q = cache.n_coefficients();
    if (pooled.n_nonzero < q) {
        throw Error(ErrorCode::InsufficientData,
                    "effective sample " + std::to_string(pooled.n_nonzero) + " below 2kp = " +
                        std::to_string(q) + " at u0 = " + std::to_string(u0));
    }
    const auto sol = solve_fixed_effects(std::span(&pooled, 1), 1, channel);
    const int kp = q / 2;
    return {sol.theta[0].head(kp), sol.theta[0].tail(kp)};
}

// ---------------------------------------------------------------------------
// Variance components and penalty

Eigen::VectorXd penalty_matrix(const VarianceComponents& variances, int channel, double lambda,
                               double max_weight) {
    if (!(lambda > 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be positive");
    if (!(max_weight > 0.0)) {
        throw Error(ErrorCode::EmptyNeighborhood, "no observation inside the bandwidth");
    }
    if (channel < 0 || channel >= variances.sigma2_alpha.rows()) {
        throw Error(ErrorCode::IndexError, "channel out of range for variance components");
    }
    const auto kp = variances.sigma2_alpha.cols();
    Eigen::VectorXd out(2 * kp);
    out.head(kp) = variances.sigma2_alpha.row(channel).transpose().cwiseMax(kVarianceFloor);
    out.tail(kp) = variances.sigma2_beta.row(channel).transpose().cwiseMax(kVarianceFloor);
    return out * (lambda / max_weight);
}

std::vector<double> pilot_points(const ReferenceGrid& grid, int stride) {
    if (stride < 1) throw Error(ErrorCode::InvalidArgument, "pilot stride must be positive");
    std::vector<double> out;
    for (int m = 0; m < grid.size(); m += stride) out.push_back(grid.points[m]);
    return out;
}

VarianceComponents estimate_variance_components(const Panel& panel, const ModelConfig& config,
                                                std::span<const double> points) {
    if (panel.n_subjects() < 2) {
        throw Error(ErrorCode::VarianceUndefined, "variance components need at least two subjects");
    }
    if (points.empty()) throw Error(ErrorCode::InvalidArgument, "no pilot points");
    const DesignCache cache(panel, config);
    const int k = panel.n_channels();
    const int kp = k * config.p;
    const int q = 2 * kp;
    const int n_groups = panel.n_groups();

    Eigen::MatrixXd sum_var = Eigen::MatrixXd::Zero(q, k);
    int used_points = 0;
    for (double u0 : points) {
        const auto moments = cache.moments(u0);
        std::vector<std::optional<Eigen::MatrixXd>> fits;
        fits.reserve(moments.size());
        for (const auto& m : moments) fits.push_back(independent_fit(m));

        std::vector<Eigen::MatrixXd> mean(n_groups, Eigen::MatrixXd::Zero(q, k));
        std::vector<int> count(n_groups, 0);
        for (std::size_t n = 0; n < fits.size(); ++n) {
            if (!fits[n]) continue;
            mean[moments[n].group] += *fits[n];
            ++count[moments[n].group];
        }
        int valid = 0;
        int active_groups = 0;
        for (int g = 0; g < n_groups; ++g) {
            if (count[g] > 0) {
                mean[g] /= count[g];
                valid += count[g];
                ++active_groups;
            }
        }
        const int dof = valid - active_groups;
        if (dof < 1) continue;
        Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(q, k);
        for (std::size_t n = 0; n < fits.size(); ++n) {
            if (!fits[n]) continue;
            ss += (*fits[n] - mean[moments[n].group]).cwiseAbs2();
        }
        sum_var += ss / dof;
        ++used_points;
    }
    if (used_points == 0) {
        if (panel.n_subjects() - n_groups < 1) {
            throw Error(ErrorCode::VarianceUndefined,
                        "every group has a single subject; within-group variance is undefined");
        }
        throw Error(ErrorCode::InsufficientData,
                    "per-subject pilot fits failed at every pilot point");
    }
    const Eigen::MatrixXd avg = sum_var / used_points;  // q x k
    VarianceComponents vc;
    vc.sigma2_alpha = avg.topRows(kp).transpose().cwiseMax(kVarianceFloor);
    vc.sigma2_beta = avg.bottomRows(kp).transpose().cwiseMax(kVarianceFloor);
    return vc;
}

// ---------------------------------------------------------------------------
// Mixed-effects fit

namespace {

struct PointSettings {
    int n_channels = 0;
    int kp = 0;
    int n_groups = 1;
    bool random_effects = true;
    double lambda = 1.0;
    std::optional<double> penalty_override;
};

bool effective_sample_ok(std::span<const SubjectMoments> moments, int n_groups, int q,
                         std::string& reason) {
    std::vector<int> count(n_groups, 0);
    for (const auto& m : moments) count[m.group] += m.n_nonzero;
    for (int g = 0; g < n_groups; ++g) {
        if (count[g] < q) {
            reason = "group " + std::to_string(g) + " has " + std::to_string(count[g]) +
                     " in-bandwidth rows, fewer than 2kp = " + std::to_string(q);
            return false;
        }
    }
    return true;
}

ChannelFit solve_channel(std::span<const SubjectMoments> moments, const PointSettings& s,
                         const VarianceComponents& variances, int channel) {
    const int q = 2 * s.kp;
    HendersonSolution sol;
    if (s.random_effects) {
        double max_weight = 0.0;
        for (const auto& m : moments) max_weight = std::max(max_weight, m.max_weight);
        const Eigen::VectorXd penalty =
            s.penalty_override ? Eigen::VectorXd::Constant(q, *s.penalty_override)
                               : penalty_matrix(variances, channel, s.lambda, max_weight);
        sol = solve_henderson_block(moments, s.n_groups, penalty, channel);
    } else {
        sol = solve_fixed_effects(moments, s.n_groups, channel);
    }
    ChannelFit out;
    for (const auto& th : sol.theta) {
        out.alpha.push_back(th.head(s.kp));
        out.beta.push_back(th.tail(s.kp));
    }
    double sse = 0.0;
    double wsum = 0.0;
    for (std::size_t n = 0; n < moments.size(); ++n) {
        const auto& m = moments[n];
        out.a.push_back(sol.gamma[n].head(s.kp));
        out.b.push_back(sol.gamma[n].tail(s.kp));
        const Eigen::VectorXd coef = sol.theta[m.group] + sol.gamma[n];
        sse += m.yy[channel] - 2.0 * coef.dot(m.cross.col(channel)) + coef.dot(m.gram * coef);
        wsum += m.weight_sum;
    }
    out.sigma2_eps = wsum > 0.0 ? std::max(0.0, sse / wsum) : 0.0;
    return out;
}

LocalFit fit_point(std::span<const SubjectMoments> moments, const PointSettings& s,
                   const VarianceComponents& variances, double u0) {
    LocalFit fit;
    fit.u0 = u0;
    const int q = 2 * s.kp;
    const int k = s.n_channels;
    if (!effective_sample_ok(moments, s.n_groups, q, fit.gap_reason)) {
        fit.gap = true;
        return fit;
    }
    const auto n_subjects = moments.size();
    fit.alpha.assign(s.n_groups, Eigen::MatrixXd::Zero(k, s.kp));
    fit.beta.assign(s.n_groups, Eigen::MatrixXd::Zero(k, s.kp));
    fit.a.assign(n_subjects, Eigen::MatrixXd::Zero(k, s.kp));
    fit.b.assign(n_subjects, Eigen::MatrixXd::Zero(k, s.kp));
    fit.sigma2_eps.resize(k);
    try {
        for (int j = 0; j < k; ++j) {
            const ChannelFit cf = solve_channel(moments, s, variances, j);
            for (int g = 0; g < s.n_groups; ++g) {
                fit.alpha[g].row(j) = cf.alpha[g].transpose();
                fit.beta[g].row(j) = cf.beta[g].transpose();
            }
            for (std::size_t n = 0; n < n_subjects; ++n) {
                fit.a[n].row(j) = cf.a[n].transpose();
                fit.b[n].row(j) = cf.b[n].transpose();
            }
            fit.sigma2_eps[j] = cf.sigma2_eps;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularSystem && e.code() != ErrorCode::SingularDesign) throw;
        LocalFit gap;
        gap.u0 = u0;
        gap.gap = true;
        gap.gap_reason = e.what();
        return gap;
    }
    return fit;
}

PointSettings settings_for(const Panel& panel, const ModelConfig& config, bool random_effects,
                           std::optional<double> penalty_override) {
    PointSettings s;
    s.n_channels = panel.n_channels();
    s.kp = panel.n_channels() * config.p;
    s.n_groups = panel.n_groups();
    s.random_effects = random_effects;
    s.lambda = config.penalty_scale;
    s.penalty_override = penalty_override;
    return s;
}

}  // namespace

ChannelFit fit_mxfar_channel(const Panel& panel, const ModelConfig& config, int channel, double u0,
                             const VarianceComponents& variances) {
    if (channel < 0 || channel >= panel.n_channels()) {
        throw Error(ErrorCode::IndexError, "target channel out of range");
    }
    const DesignCache cache(panel, config);
    const auto moments = cache.moments(u0);
    const auto s = settings_for(panel, config, true, std::nullopt);
    std::string reason;
    if (!effective_sample_ok(moments, s.n_groups, 2 * s.kp, reason)) {
        throw Error(ErrorCode::InsufficientData, reason);
    }
    return solve_channel(moments, s, variances, channel);
}

int CoefficientGrid::n_gaps() const noexcept {
    return static_cast<int>(std::count_if(fits.begin(), fits.end(), [](const LocalFit& f) { return f.gap; }));
}

Eigen::MatrixXd CoefficientGrid::subject_coefficients(int subject, int m) const {
    const auto& f = fits.at(m);
    if (f.gap) throw Error(ErrorCode::GapError, "no estimate at grid point " + std::to_string(m));
    return f.alpha.at(group_of.at(subject)) + f.a.at(subject);
}

const Eigen::MatrixXd& CoefficientGrid::group_coefficients(int group, int m) const {
    const auto& f = fits.at(m);
    if (f.gap) throw Error(ErrorCode::GapError, "no estimate at grid point " + std::to_string(m));
    return f.alpha.at(group);
}

double CoefficientGrid::pooled_sigma2_eps() const {
    double s = 0.0;
    int c = 0;
    for (const auto& f : fits) {
        if (f.gap) continue;
        s += f.sigma2_eps.sum();
        c += static_cast<int>(f.sigma2_eps.size());
    }
    return c > 0 ? s / c : 0.0;
}

CoefficientGrid fit_mxfar(const Panel& panel, const ModelConfig& config, const FitOptions& options) {
    config.validate(panel);
    CoefficientGrid out;
    out.config = config;
    out.grid = options.grid ? *options.grid : build_grid(panel, config);
    out.group_of = panel.groups();
    out.subject_ids = panel.subject_ids();
    out.n_groups = panel.n_groups();
    out.n_channels = panel.n_channels();
    out.random_effects = panel.n_subjects() > 1 || options.penalty_override.has_value();

    const int k = panel.n_channels();
    const int kp = k * config.p;
    if (options.variances) {
        out.variance_components = *options.variances;
    } else if (out.random_effects && !options.penalty_override) {
        const auto pilots = pilot_points(out.grid, options.pilot_stride);
        out.variance_components = estimate_variance_components(panel, config, pilots);
    } else {
        out.variance_components.sigma2_alpha = Eigen::MatrixXd::Zero(k, kp);
        out.variance_components.sigma2_beta = Eigen::MatrixXd::Zero(k, kp);
    }

    const DesignCache cache(panel, config);
    const auto settings = settings_for(panel, config, out.random_effects, options.penalty_override);
    out.fits.reserve(out.grid.size());
    for (double u0 : out.grid.points) {
        const auto moments = cache.moments(u0);
        out.fits.push_back(fit_point(moments, settings, out.variance_components, u0));
    }
    const int gaps = out.n_gaps();
    if (gaps > options.max_gap_fraction * out.grid.size()) {
        throw Error(ErrorCode::FitFailure, std::to_string(gaps) + " of " +
                                               std::to_string(out.grid.size()) +
                                               " grid points could not be estimated");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prediction

Eigen::VectorXd predict_one_step(const CoefficientGrid& grid, const Panel& panel, int subject, int t) {
    return predict_one_step(grid, panel, subject, t, grid.config.reference);
}

Eigen::VectorXd predict_one_step(const CoefficientGrid& grid, const Panel& panel, int subject, int t,
                                 const ReferenceSpec& ref) {
    const int t0 = grid.config.first_time();
    if (subject < 0 || subject >= panel.n_subjects() || subject >= grid.n_subjects()) {
        throw Error(ErrorCode::IndexError, "subject out of range");
    }
    if (t < t0 || t >= panel.n_time()) {
        throw Error(ErrorCode::IndexError, "time index " + std::to_string(t) +
                                               " outside the predictable range");
    }
    if (panel.n_channels() != grid.n_channels) {
        throw Error(ErrorCode::InvalidArgument, "panel channel count differs from the fit");
    }
    if (!ref.is_channel() && static_cast<int>(ref.exogenous.at(subject).size()) <= t) {
        throw Error(ErrorCode::IndexError, "exogenous reference shorter than the panel");
    }
    const int m = grid.grid.segment_of(ref.value(panel, subject, t));
    return grid.subject_coefficients(subject, m) * lagged_regressors(panel, subject, t, grid.config.p);
}

double Residuals::sum_of_squares() const {
    double s = 0.0;
    for (const auto& r : values) s += r.squaredNorm();
    return s;
}

Residuals residuals(const CoefficientGrid& grid, const Panel& panel) {
    Residuals out;
    out.first_time = grid.config.first_time();
    const int k = panel.n_channels();
    const int len = panel.n_time() - out.first_time;
    out.values.reserve(panel.n_subjects());
    for (int n = 0; n < panel.n_subjects(); ++n) {
        Eigen::MatrixXd r(k, len);
        for (int c = 0; c < len; ++c) {
            const int t = out.first_time + c;
            const Eigen::VectorXd pred = predict_one_step(grid, panel, n, t);
            for (int j = 0; j < k; ++j) r(j, c) = panel(n, j, t) - pred[j];
        }
        out.values.push_back(std::move(r));
    }
    return out;
}

}  // namespace mxfar
