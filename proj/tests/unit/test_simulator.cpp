#include "doctest.h"

#include <cmath>
#include <numeric>

#include "mxfar/error.hpp"
#include "mxfar/simulator.hpp"
#include "oracles.hpp"

using namespace mxfar;

namespace {

template <class F>
ErrorCode error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return static_cast<ErrorCode>(0);
}

double variance(std::span<const double> y) {
    const double m = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double s = 0.0;
    for (double v : y) s += (v - m) * (v - m);
    return s / (y.size() - 1);
}

GeneratorSpec ar1_spec(double phi, int T) {
    auto s = GeneratorSpec::defaults(GeneratorKind::LinearVar);
    s.coefficients = {Eigen::MatrixXd::Constant(1, 1, phi)};
    s.group_sizes = {1};
    s.n_time = T;
    s.random_effect_sd = 0.0;
    return s;
}

CoefficientCurve tabulated(int target, int source, double lo, double hi, int n, auto&& f) {
    CoefficientCurve c;
    c.target = target;
    c.source = source;
    for (int i = 0; i < n; ++i) {
        const double u = lo + (hi - lo) * i / (n - 1);
        c.knots.push_back(u);
        c.values.push_back(f(u));
    }
    return c;
}

}  // namespace

TEST_CASE("EXPAR coefficient matrix") {
    const auto sim = simulate(GeneratorSpec::defaults(GeneratorKind::Expar));
    CHECK(sim.panel.n_subjects() == 10);
    CHECK(sim.panel.n_channels() == 2);
    CHECK(sim.panel.n_time() == 500);
    CHECK(sim.panel.subject_id(0) == "S001");
    for (int n = 0; n < 10; ++n) {
        const auto f0 = sim.truth.subject_coefficients(n, 0.0);
        CHECK(f0(0, 1) == 0.6);
        CHECK(f0(1, 1) == 0.6);
        CHECK(f0(0, 0) == -0.3);
        CHECK(f0(1, 0) == -0.2);
        const auto e = sim.truth.effects()[n];
        CHECK(sim.truth.subject_coefficients(n, 1.5)(0, 1) == doctest::Approx(0.6 * std::exp(-(0.3 + e[0]) * 2.25)));
        CHECK(sim.truth.subject_coefficients(n, -3.0)(0, 0) == -0.3);
    }
}

TEST_CASE("generation is deterministic in the seed") {
    auto spec = GeneratorSpec::defaults(GeneratorKind::Expar);
    spec.seed = 42;
    const auto a = simulate(spec).panel;
    const auto b = simulate(spec).panel;
    CHECK(a.values() == b.values());
    spec.seed = 43;
    CHECK(simulate(spec).panel.values() != a.values());
}

TEST_CASE("sigmoid design: asymptote, negation and group labels") {
    const auto sim = simulate(GeneratorSpec::defaults(GeneratorKind::SigmoidTwoGroup));
    CHECK(sim.panel.n_subjects() == 20);
    CHECK(sim.panel.n_groups() == 2);
    CHECK(sim.panel.group_of(9) == 0);
    CHECK(sim.panel.group_of(10) == 1);
    CHECK(sim.truth.mean_coefficients(0, 50.0)(0, 0) == doctest::Approx(0.5));
    CHECK(sim.truth.mean_coefficients(0, -50.0)(0, 0) == doctest::Approx(-0.3));
    for (double u : {-2.0, -0.3, 0.0, 0.4, 3.0}) {
        CHECK(sim.truth.mean_coefficients(1, u) == -sim.truth.mean_coefficients(0, u));
        for (int i = 0; i < 10; ++i) {
            CHECK(sim.truth.subject_coefficients(10 + i, u) == -sim.truth.subject_coefficients(i, u));
        }
    }
}

TEST_CASE("sigmoid random effects have the requested spread when drawn unchecked") {
    auto spec = GeneratorSpec::defaults(GeneratorKind::SigmoidTwoGroup);
    spec.group_sizes = {4000, 4000};
    spec.max_redraws = 0;
    const auto effects = draw_effects(spec);
    const TrueModel truth(spec, effects, std::vector<int>(8000, 0));
    std::vector<double> f;
    for (int n = 0; n < 4000; ++n) f.push_back(truth.subject_coefficients(n, 0.7)(0, 0));
    CHECK(std::sqrt(variance(f)) == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("stability redraws leave only stable subject models") {
    const auto sim = simulate(GeneratorSpec::defaults(GeneratorKind::SigmoidTwoGroup));
    for (int n = 0; n < 20; ++n) {
        for (double u : {-50.0, 0.0, 50.0}) {
            CHECK(companion_spectral_radius(sim.truth.subject_coefficients(n, u)) < 1.0);
        }
    }
    CHECK(draw_effects(GeneratorSpec::defaults(GeneratorKind::SigmoidTwoGroup))[3] == sim.truth.effects()[3]);
}

TEST_CASE("AR(1) lag-one autocorrelation") {
    const auto p = simulate(ar1_spec(0.5, 5000)).panel;
    CHECK(std::abs(oracle::ar1_slope(p.series(0, 0)) - 0.5) < 0.05);
}

TEST_CASE("unstable VAR is rejected") {
    auto spec = ar1_spec(1.05, 100);
    CHECK(error_of([&] { (void)simulate(spec); }) == ErrorCode::StabilityError);
    CHECK(companion_spectral_radius(Eigen::MatrixXd::Constant(1, 1, 1.05)) == doctest::Approx(1.05));
    Eigen::MatrixXd two(1, 2);
    two << 0.5, 0.3;  // y = 0.5 y_{t-1} + 0.3 y_{t-2}: roots of z^2 - 0.5z - 0.3
    CHECK(companion_spectral_radius(two) == doctest::Approx((0.5 + std::sqrt(0.25 + 1.2)) / 2));
}

TEST_CASE("explosive generation is a generation error") {
    auto spec = ar1_spec(1.2, 400);
    spec.kind = GeneratorKind::Custom;
    spec.custom_channels = 1;
    spec.ref_channel = 0;
    spec.ref_lag = 1;
    spec.max_redraws = 0;
    spec.coefficients.clear();
    spec.curves = {tabulated(0, 0, -1e7, 1e7, 2, [](double) { return 1.2; })};
    CHECK(error_of([&] { (void)simulate(spec); }) == ErrorCode::GenerationError);
}

TEST_CASE("TAR with equal regimes is the linear AR") {
    auto lin = ar1_spec(0.5, 200);
    lin.group_sizes = {3};
    auto tar = GeneratorSpec::defaults(GeneratorKind::Tar);
    tar.coefficients = lin.coefficients;
    tar.coefficients_high = lin.coefficients;
    tar.group_sizes = {3};
    tar.n_time = 200;
    tar.random_effect_sd = 0.0;
    tar.ref_channel = 0;
    tar.ref_lag = 1;
    const auto a = simulate(lin).panel;
    const auto b = simulate(tar).panel;
    CHECK(a.values() == b.values());
}

TEST_CASE("TAR switches coefficients at the threshold") {
    const auto sim = simulate(GeneratorSpec::defaults(GeneratorKind::Tar));
    CHECK(sim.truth.mean_coefficients(0, 0.0)(0, 0) == 0.6);
    CHECK(sim.truth.mean_coefficients(0, 1e-9)(0, 0) == -0.4);
}

TEST_CASE("constant tabulated curve reproduces the linear generator") {
    auto lin = ar1_spec(0.5, 300);
    auto custom = lin;
    custom.kind = GeneratorKind::Custom;
    custom.custom_channels = 1;
    custom.coefficients.clear();
    custom.ref_channel = 0;
    custom.ref_lag = 1;
    custom.curves = {tabulated(0, 0, -100.0, 100.0, 3, [](double) { return 0.5; })};
    CHECK(simulate(custom).panel.values() == simulate(lin).panel.values());
}

TEST_CASE("tabulated EXPAR curves match the EXPAR generator") {
    auto expar = GeneratorSpec::defaults(GeneratorKind::Expar);
    expar.random_effect_sd = 0.0;
    expar.seed = 11;
    auto custom = expar;
    custom.kind = GeneratorKind::Custom;
    custom.custom_channels = 2;
    custom.max_redraws = 0;
    const int n = 6001;
    custom.curves = {
        tabulated(0, 0, -30, 30, n, [](double) { return -0.3; }),
        tabulated(0, 1, -30, 30, n, [](double u) { return 0.6 * std::exp(-0.30 * u * u); }),
        tabulated(1, 0, -30, 30, n, [](double) { return -0.2; }),
        tabulated(1, 1, -30, 30, n, [](double u) { return 0.6 * std::exp(-0.15 * u * u); }),
    };
    const auto a = simulate(expar).panel.values();
    const auto b = simulate(custom).panel.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    CHECK(worst < 1e-3);
}

TEST_CASE("custom curves: empty tables and extrapolation") {
    CoefficientCurve c;
    CHECK(error_of([&] { (void)c(0.0); }) == ErrorCode::SpecError);
    c = tabulated(0, 0, -1.0, 1.0, 3, [](double u) { return u; });
    CHECK(c(0.5) == doctest::Approx(0.5));
    CHECK(c(1.0) == doctest::Approx(1.0));
    CHECK(error_of([&] { (void)c(1.5); }) == ErrorCode::ExtrapolationError);

    auto spec = GeneratorSpec::defaults(GeneratorKind::Custom);
    spec.custom_channels = 1;
    spec.ref_channel = 0;
    spec.ref_lag = 1;
    CHECK(error_of([&] { (void)simulate(spec); }) == ErrorCode::SpecError);
    spec.curves = {tabulated(0, 0, -0.1, 0.1, 3, [](double) { return 0.2; })};
    spec.max_redraws = 0;
    CHECK(error_of([&] { (void)simulate(spec); }) == ErrorCode::ExtrapolationError);
}

TEST_CASE("kind-specific entry points check the kind") {
    const auto spec = GeneratorSpec::defaults(GeneratorKind::Expar);
    CHECK(simulate_expar(spec).values() == simulate(spec).panel.values());
    CHECK(error_of([&] { (void)simulate_tar(spec); }) == ErrorCode::SpecError);
    CHECK(parse_generator("sigmoid") == GeneratorKind::SigmoidTwoGroup);
    CHECK(generator_name(GeneratorKind::LinearVar) == "linear-var");
    CHECK(error_of([] { (void)parse_generator("garch"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("spec validation") {
    auto spec = GeneratorSpec::defaults(GeneratorKind::Expar);
    spec.n_time = 0;
    CHECK(error_of([&] { spec.validate(); }) == ErrorCode::SpecError);
    spec = GeneratorSpec::defaults(GeneratorKind::Expar);
    spec.burn_in = -1;
    CHECK(error_of([&] { spec.validate(); }) == ErrorCode::SpecError);
    spec = GeneratorSpec::defaults(GeneratorKind::SigmoidTwoGroup);
    spec.group_sizes = {10, 9};
    CHECK(error_of([&] { spec.validate(); }) == ErrorCode::SpecError);
}

TEST_CASE("doubling the burn-in barely moves the retained moments") {
    for (auto kind : {GeneratorKind::Expar, GeneratorKind::LinearVar}) {
        auto spec = GeneratorSpec::defaults(kind);
        spec.group_sizes = {1};
        spec.n_time = 200000;
        auto longer = spec;
        longer.burn_in = 2 * spec.burn_in;
        const auto a = simulate(spec).panel;
        const auto b = simulate(longer).panel;
        for (int j = 0; j < 2; ++j) {
            CHECK(variance(a.series(0, j)) == doctest::Approx(variance(b.series(0, j))).epsilon(0.02));
        }
    }
}
