#include "mxfar/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/Eigenvalues>

#include "mxfar/error.hpp"
#include "mxfar/random.hpp"

namespace mxfar {

std::string generator_name(GeneratorKind kind) {
    switch (kind) {
        case GeneratorKind::Expar: return "expar";
        case GeneratorKind::SigmoidTwoGroup: return "sigmoid";
        case GeneratorKind::LinearVar: return "linear-var";
        case GeneratorKind::Tar: return "tar";
        case GeneratorKind::Custom: return "custom";
    }
    return "unknown";
}

GeneratorKind parse_generator(const std::string& name) {
    for (auto kind : {GeneratorKind::Expar, GeneratorKind::SigmoidTwoGroup, GeneratorKind::LinearVar,
                      GeneratorKind::Tar, GeneratorKind::Custom}) {
        if (generator_name(kind) == name) return kind;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown generator kind '" + name + "'");
}

double CoefficientCurve::operator()(double u) const {
    if (knots.empty()) throw Error(ErrorCode::SpecError, "empty coefficient table");
    if (u < knots.front() || u > knots.back() || !std::isfinite(u)) {
        throw Error(ErrorCode::ExtrapolationError,
                    "reference value " + std::to_string(u) + " outside the tabulated range [" +
                        std::to_string(knots.front()) + ", " + std::to_string(knots.back()) + "]");
    }
    if (knots.size() == 1) return values.front();
    auto it = std::upper_bound(knots.begin(), knots.end(), u);
    std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - knots.begin()), knots.size() - 1);
    const std::size_t lo = hi - 1;
    const double w = (u - knots[lo]) / (knots[hi] - knots[lo]);
    return values[lo] + w * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------

GeneratorSpec GeneratorSpec::defaults(GeneratorKind kind) {
    GeneratorSpec s;
    s.kind = kind;
    switch (kind) {
        case GeneratorKind::Expar:
            s.random_effect_sd = 0.03;
            break;
        case GeneratorKind::SigmoidTwoGroup:
            s.group_sizes = {10, 10};
            s.random_effect_sd = 0.8;
            break;
        case GeneratorKind::LinearVar: {
            Eigen::MatrixXd a(2, 2);
            a << 0.4, 0.2, -0.1, 0.3;
            s.coefficients = {a};
            s.random_effect_sd = 0.05;
            break;
        }
        case GeneratorKind::Tar: {
            Eigen::MatrixXd low(2, 2), high(2, 2);
            low << 0.6, 0.2, 0.0, 0.3;
            high << -0.4, 0.2, 0.0, 0.3;
            s.coefficients = {low};
            s.coefficients_high = {high};
            s.random_effect_sd = 0.0;
            break;
        }
        case GeneratorKind::Custom:
            s.random_effect_sd = 0.0;
            s.custom_channels = 2;
            break;
    }
    return s;
}

int GeneratorSpec::n_subjects() const noexcept {
    int n = 0;
    for (int g : group_sizes) n += g;
    return n;
}

int GeneratorSpec::n_channels() const {
    switch (kind) {
        case GeneratorKind::Expar:
        case GeneratorKind::SigmoidTwoGroup: return 2;
        case GeneratorKind::LinearVar:
        case GeneratorKind::Tar:
            return coefficients.empty() ? 0 : static_cast<int>(coefficients.front().rows());
        case GeneratorKind::Custom: return custom_channels;
    }
    return 0;
}

int GeneratorSpec::order() const {
    switch (kind) {
        case GeneratorKind::Expar:
        case GeneratorKind::SigmoidTwoGroup: return 1;
        case GeneratorKind::LinearVar:
        case GeneratorKind::Tar: return static_cast<int>(coefficients.size());
        case GeneratorKind::Custom: return custom_order;
    }
    return 0;
}

void GeneratorSpec::validate() const {
    if (group_sizes.empty() || n_time <= 0) {
        throw Error(ErrorCode::SpecError, "generator needs at least one group and T > 0");
    }
    for (int g : group_sizes) {
        if (g <= 0) throw Error(ErrorCode::SpecError, "group sizes must be positive");
    }
    if (burn_in < 0) throw Error(ErrorCode::SpecError, "burn-in must be nonnegative");
    if (!(noise_sd >= 0.0) || !(random_effect_sd >= 0.0)) {
        throw Error(ErrorCode::SpecError, "standard deviations must be nonnegative");
    }
    if (max_redraws < 0) throw Error(ErrorCode::SpecError, "max_redraws must be nonnegative");
    const int k = n_channels();
    const int p = order();
    if (k <= 0 || p <= 0) throw Error(ErrorCode::SpecError, "generator has no coefficients");
    if (kind == GeneratorKind::SigmoidTwoGroup &&
        (group_sizes.size() != 2 || group_sizes[0] != group_sizes[1])) {
        throw Error(ErrorCode::SpecError, "the sigmoid design needs two groups of equal size");
    }
    const bool thresholded = kind == GeneratorKind::Expar || kind == GeneratorKind::SigmoidTwoGroup ||
                             kind == GeneratorKind::Tar || kind == GeneratorKind::Custom;
    if (thresholded && (ref_channel < 0 || ref_channel >= k || ref_lag < 1)) {
        throw Error(ErrorCode::SpecError, "reference channel or lag out of range");
    }
    if (kind == GeneratorKind::LinearVar || kind == GeneratorKind::Tar) {
        for (const auto& m : coefficients) {
            if (m.rows() != k || m.cols() != k) {
                throw Error(ErrorCode::SpecError, "VAR coefficient matrices must be k x k");
            }
        }
    }
    if (kind == GeneratorKind::Tar) {
        if (coefficients_high.size() != coefficients.size()) {
            throw Error(ErrorCode::SpecError, "TAR needs one high-regime matrix per lag");
        }
        for (const auto& m : coefficients_high) {
            if (m.rows() != k || m.cols() != k) {
                throw Error(ErrorCode::SpecError, "TAR coefficient matrices must be k x k");
            }
        }
    }
    if (kind == GeneratorKind::Custom) {
        if (curves.empty()) throw Error(ErrorCode::SpecError, "custom generator has an empty table");
        for (const auto& c : curves) {
            if (c.knots.empty() || c.knots.size() != c.values.size()) {
                throw Error(ErrorCode::SpecError, "coefficient table needs matching knots and values");
            }
            if (!std::is_sorted(c.knots.begin(), c.knots.end()) ||
                std::adjacent_find(c.knots.begin(), c.knots.end()) != c.knots.end()) {
                throw Error(ErrorCode::SpecError, "coefficient knots must be strictly increasing");
            }
            if (c.target < 0 || c.target >= k || c.source < 0 || c.source >= k || c.lag < 1 ||
                c.lag > p) {
                throw Error(ErrorCode::SpecError, "coefficient curve index out of range");
            }
        }
    }
}

// ---------------------------------------------------------------------------

namespace {

double logistic5(double u) { return 1.0 / (1.0 + std::exp(-5.0 * u)); }

Eigen::MatrixXd stack_lags(const std::vector<Eigen::MatrixXd>& lags) {
    const auto k = lags.front().rows();
    Eigen::MatrixXd out(k, k * static_cast<Eigen::Index>(lags.size()));
    for (std::size_t l = 0; l < lags.size(); ++l) out.middleCols(static_cast<Eigen::Index>(l) * k, k) = lags[l];
    return out;
}

int effect_length(const GeneratorSpec& spec) {
    switch (spec.kind) {
        case GeneratorKind::Expar:
        case GeneratorKind::SigmoidTwoGroup: return 2;
        case GeneratorKind::LinearVar:
        case GeneratorKind::Tar: return spec.n_channels() * spec.n_channels() * spec.order();
        case GeneratorKind::Custom: return static_cast<int>(spec.curves.size());
    }
    return 0;
}

// Reference values at which a subject model is checked for stability.
std::vector<double> probe_points(const GeneratorSpec& spec) {
    switch (spec.kind) {
        case GeneratorKind::Expar: return {0.0, 0.5, 1.0, 2.0, 4.0};
        // logistic(5u) at 0, 0.5 and 1
        case GeneratorKind::SigmoidTwoGroup: return {-50.0, 0.0, 50.0};
        case GeneratorKind::LinearVar: return {0.0};
        case GeneratorKind::Tar: return {spec.threshold - 1.0, spec.threshold + 1.0};
        case GeneratorKind::Custom: {
            std::vector<double> pts;
            for (const auto& c : spec.curves) pts.insert(pts.end(), c.knots.begin(), c.knots.end());
            std::sort(pts.begin(), pts.end());
            pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
            return pts;
        }
    }
    return {};
}

}  // namespace

TrueModel::TrueModel(GeneratorSpec spec, std::vector<Eigen::VectorXd> effects, std::vector<int> group_of)
    : spec_(std::move(spec)), effects_(std::move(effects)), group_of_(std::move(group_of)) {}

Eigen::MatrixXd TrueModel::evaluate(const Eigen::VectorXd& e, int group, double u) const {
    const int k = spec_.n_channels();
    const int p = spec_.order();
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(k, k * p);
    switch (spec_.kind) {
        case GeneratorKind::Expar: {
            const double u2 = u * u;
            f << -0.3, 0.6 * std::exp(-(0.30 + e[0]) * u2), -0.2, 0.6 * std::exp(-(0.15 + e[1]) * u2);
            break;
        }
        case GeneratorKind::SigmoidTwoGroup: {
            const double s = logistic5(u);
            f << 0.8 * s - 0.3 + e[0], 0.2, -0.9 * s + 0.5 + e[1], 0.3;
            if (group == 1) f = -f;
            break;
        }
        case GeneratorKind::LinearVar:
            f = stack_lags(spec_.coefficients);
            f += e.reshaped(k, k * p);
            break;
        case GeneratorKind::Tar:
            f = stack_lags(u <= spec_.threshold ? spec_.coefficients : spec_.coefficients_high);
            f += e.reshaped(k, k * p);
            break;
        case GeneratorKind::Custom:
            for (std::size_t c = 0; c < spec_.curves.size(); ++c) {
                const auto& curve = spec_.curves[c];
                f(curve.target, (curve.lag - 1) * k + curve.source) += curve(u) + e[static_cast<Eigen::Index>(c)];
            }
            break;
    }
    return f;
}

Eigen::MatrixXd TrueModel::subject_coefficients(int subject, double u) const {
    return evaluate(effects_.at(subject), group_of_.at(subject), u);
}

Eigen::MatrixXd TrueModel::mean_coefficients(int group, double u) const {
    return evaluate(Eigen::VectorXd::Zero(effect_length(spec_)), group, u);
}

double companion_spectral_radius(const Eigen::MatrixXd& coefficients) {
    const auto k = coefficients.rows();
    const auto kp = coefficients.cols();
    if (k == 0 || kp % k != 0) throw Error(ErrorCode::InvalidArgument, "coefficients must be k x kp");
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(kp, kp);
    companion.topRows(k) = coefficients;
    if (kp > k) companion.bottomLeftCorner(kp - k, kp - k).setIdentity();
    return Eigen::EigenSolver<Eigen::MatrixXd>(companion, false).eigenvalues().cwiseAbs().maxCoeff();
}

std::vector<Eigen::VectorXd> draw_effects(const GeneratorSpec& spec) {
    spec.validate();
    const int len = effect_length(spec);
    const int n_subjects = spec.n_subjects();
    const auto probes = probe_points(spec);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(len);

    if (spec.kind == GeneratorKind::LinearVar || spec.kind == GeneratorKind::Tar) {
        const TrueModel base(spec, {zero}, {0});
        for (double u : probes) {
            const double rho = companion_spectral_radius(base.subject_coefficients(0, u));
            if (!(rho < 1.0)) {
                throw Error(ErrorCode::StabilityError,
                            "VAR coefficients have spectral radius " + std::to_string(rho));
            }
        }
    }

    // The sigmoid design pairs group-2 subject i with group-1 subject i.
    const int independent =
        spec.kind == GeneratorKind::SigmoidTwoGroup ? spec.group_sizes.front() : n_subjects;
    std::vector<Eigen::VectorXd> effects(n_subjects);
    for (int n = 0; n < independent; ++n) {
        Rng rng = make_rng(spec.seed, Stream::Effects, static_cast<std::uint64_t>(n));
        std::normal_distribution<double> normal(0.0, 1.0);
        bool accepted = false;
        for (int attempt = 0; attempt <= spec.max_redraws && !accepted; ++attempt) {
            Eigen::VectorXd e(len);
            for (int i = 0; i < len; ++i) e[i] = spec.random_effect_sd * normal(rng);
            accepted = spec.max_redraws == 0;
            if (!accepted) {
                const TrueModel trial(spec, {e}, {0});
                accepted = std::all_of(probes.begin(), probes.end(), [&](double u) {
                    return companion_spectral_radius(trial.subject_coefficients(0, u)) < 1.0;
                });
            }
            if (accepted) effects[n] = std::move(e);
        }
        if (!accepted) {
            throw Error(ErrorCode::StabilityError, "no stable random-effect draw for subject " +
                                                       std::to_string(n) + " after " +
                                                       std::to_string(spec.max_redraws) + " redraws");
        }
    }
    for (int n = independent; n < n_subjects; ++n) effects[n] = effects[n - independent];
    return effects;
}

Simulation simulate(const GeneratorSpec& spec) {
    auto effects = draw_effects(spec);
    const int k = spec.n_channels();
    const int p = spec.order();
    const int n_subjects = spec.n_subjects();
    std::vector<int> group_of;
    for (std::size_t g = 0; g < spec.group_sizes.size(); ++g) {
        group_of.insert(group_of.end(), spec.group_sizes[g], static_cast<int>(g));
    }
    TrueModel truth(spec, std::move(effects), group_of);

    const bool has_reference = spec.kind != GeneratorKind::LinearVar;
    const int start = has_reference ? std::max(p, spec.ref_lag) : p;
    const int total = start + spec.burn_in + spec.n_time;
    std::vector<double> values(static_cast<std::size_t>(n_subjects) * k * spec.n_time);
    std::vector<std::string> ids;
    for (int n = 0; n < n_subjects; ++n) {
        Rng rng = make_rng(spec.seed, Stream::Noise, static_cast<std::uint64_t>(n));
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::MatrixXd y = Eigen::MatrixXd::Zero(k, total);
        Eigen::VectorXd x(k * p);
        for (int t = start; t < total; ++t) {
            for (int l = 1; l <= p; ++l) x.segment((l - 1) * k, k) = y.col(t - l);
            const double u = has_reference ? y(spec.ref_channel, t - spec.ref_lag) : 0.0;
            y.col(t) = truth.subject_coefficients(n, u) * x;
            for (int j = 0; j < k; ++j) y(j, t) += spec.noise_sd * normal(rng);
            if (!(y.col(t).cwiseAbs().maxCoeff() <= kBoundednessLimit)) {
                throw Error(ErrorCode::GenerationError,
                            "series of subject " + std::to_string(n) + " diverged at step " +
                                std::to_string(t - start));
            }
        }
        for (int j = 0; j < k; ++j) {
            for (int t = 0; t < spec.n_time; ++t) {
                values[(static_cast<std::size_t>(n) * k + j) * spec.n_time + t] =
                    y(j, start + spec.burn_in + t);
            }
        }
        char id[16];
        std::snprintf(id, sizeof id, "S%03d", n + 1);
        ids.emplace_back(id);
    }
    return {Panel(n_subjects, k, spec.n_time, std::move(values), group_of, std::move(ids)),
            std::move(truth)};
}

namespace {

Panel simulate_kind(const GeneratorSpec& spec, GeneratorKind kind) {
    if (spec.kind != kind) {
        throw Error(ErrorCode::SpecError, "generator spec is of kind " + generator_name(spec.kind) +
                                              ", expected " + generator_name(kind));
    }
    return simulate(spec).panel;
}

}  // namespace

Panel simulate_expar(const GeneratorSpec& spec) { return simulate_kind(spec, GeneratorKind::Expar); }
Panel simulate_sigmoid_groups(const GeneratorSpec& spec) {
    return simulate_kind(spec, GeneratorKind::SigmoidTwoGroup);
}
Panel simulate_linear_var(const GeneratorSpec& spec) { return simulate_kind(spec, GeneratorKind::LinearVar); }
Panel simulate_tar(const GeneratorSpec& spec) { return simulate_kind(spec, GeneratorKind::Tar); }
Panel simulate_custom(const GeneratorSpec& spec) { return simulate_kind(spec, GeneratorKind::Custom); }

}  // namespace mxfar
