#include "doctest.h"

#include <cmath>
#include <complex>

#include "mxfar/error.hpp"
#include "mxfar/simulator.hpp"
#include "mxfar/spectral.hpp"
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

CoefficientGrid constant_grid(const Eigen::MatrixXd& alpha, const std::vector<Eigen::MatrixXd>& effects, int m = 5) {
    CoefficientGrid g;
    g.config.p = static_cast<int>(alpha.cols() / alpha.rows());
    g.grid = ReferenceGrid::uniform(-1.0, 1.0, m);
    g.group_of.assign(effects.size(), 0);
    for (std::size_t n = 0; n < effects.size(); ++n) g.subject_ids.push_back("s" + std::to_string(n));
    g.n_channels = static_cast<int>(alpha.rows());
    for (int i = 0; i < m; ++i) {
        LocalFit f;
        f.u0 = g.grid.points[i];
        f.alpha = {alpha};
        f.beta = {Eigen::MatrixXd::Zero(alpha.rows(), alpha.cols())};
        f.a = effects;
        f.b.assign(effects.size(), Eigen::MatrixXd::Zero(alpha.rows(), alpha.cols()));
        f.sigma2_eps = Eigen::VectorXd::Ones(alpha.rows());
        g.fits.push_back(f);
    }
    return g;
}

void check_normalized(const Eigen::MatrixXcd& f) {
    CHECK((f.cwiseAbs().array() <= 1.0 + 1e-15).all());
    for (Eigen::Index g = 0; g < f.cols(); ++g) CHECK(std::abs(f.col(g).squaredNorm() - 1.0) < 1e-10);
}

Eigen::MatrixXd random_coefficients(int k, int p, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 0.4);
    Eigen::MatrixXd c(k, k * p);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = normal(rng);
    return c;
}

}  // namespace

TEST_CASE("bar_f by direct substitution") {
    CHECK(bar_f(Eigen::MatrixXd::Zero(3, 6), 0.17).isApprox(Eigen::MatrixXcd::Identity(3, 3)));
    const Eigen::MatrixXd half = Eigen::MatrixXd::Constant(1, 1, 0.5);
    CHECK(std::abs(bar_f(half, 1e-9)(0, 0) - std::complex<double>(0.5, 0.0)) < 1e-8);
    CHECK(std::abs(bar_f(half, 0.25)(0, 0) - std::complex<double>(1.0, 0.5)) < 1e-15);
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const auto c = random_coefficients(3, 2, rng);
        const double w = 0.02 * (rep + 1);
        CHECK((bar_f(c, -w) - bar_f(c, w).conjugate()).cwiseAbs().maxCoeff() < 1e-14);
    }
    CHECK(error_of([] { (void)bar_f(Eigen::MatrixXd::Zero(2, 3), 0.1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("fPDC normalization and the column identity") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 30; ++rep) {
        const int k = 1 + rep % 4;
        const int p = 1 + rep % 3;
        const auto c = random_coefficients(k, p, rng);
        const double w = 0.49 * (rep + 1) / 31.0;
        const auto f = fpdc(c, w);
        check_normalized(f);
        const auto raw = bar_f(c, w);
        for (int g = 0; g < k; ++g) {
            CHECK((f.col(g) * raw.col(g).norm() - raw.col(g)).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("diagonal coefficients have no cross coherence") {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 6);
    c.diagonal() << 0.5, -0.2, 0.3;
    c(1, 4) = 0.1;  // lag-2 diagonal entry
    for (double w : default_omega_grid(16)) {
        const Eigen::MatrixXd m = fpdc(c, w).cwiseAbs();
        CHECK((m - Eigen::MatrixXd(m.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
        CHECK((m.diagonal().array() - 1.0).abs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("default frequency grid") {
    const auto w = default_omega_grid();
    REQUIRE(w.size() == 64);
    CHECK(w.front() == doctest::Approx(0.5 / 65));
    CHECK(w.back() == doctest::Approx(0.5 * 64 / 65));
    CHECK(w.back() < 0.5);
}

TEST_CASE("wide-bandwidth VAR(2) fit matches the direct PDC of the generator") {
    auto spec = GeneratorSpec::defaults(GeneratorKind::LinearVar);
    Eigen::MatrixXd a1(2, 2), a2(2, 2);
    a1 << 0.5, 0.3, 0.0, 0.4;
    a2 << -0.3, 0.0, 0.2, -0.2;
    spec.coefficients = {a1, a2};
    spec.random_effect_sd = 0.0;
    spec.n_time = 1000;
    const auto sim = simulate(spec);
    ModelConfig c;
    c.p = 2;
    c.reference = ReferenceSpec::from_channel(0, 1);
    c.bandwidth = 100.0;
    c.grid_size = 10;
    const auto grid = fit_mxfar(sim.panel, c);
    const auto omega = default_omega_grid(32);
    const auto surface = mean_fpdc(grid, 0, omega);
    double worst = 0.0;
    for (int m = 0; m < grid.size(); ++m) {
        for (std::size_t w = 0; w < omega.size(); ++w) {
            check_normalized(surface.values[m][w]);
            worst = std::max(worst, (surface.modulus(m, w) - oracle::direct_pdc({a1, a2}, omega[w])).cwiseAbs().maxCoeff());
        }
    }
    CHECK(worst < 0.05);
}

TEST_CASE("mean and subject surfaces") {
    Eigen::MatrixXd alpha(2, 2);
    alpha << 0.4, 0.3, -0.1, 0.2;
    const auto one = constant_grid(alpha, {Eigen::MatrixXd::Zero(2, 2)});
    const auto omega = default_omega_grid(8);
    const auto mean = mean_fpdc(one, 0, omega);
    const auto subj = subject_fpdc(one, 0, omega);
    CHECK(mean.scope == "group");
    CHECK(subj.scope == "subject");
    for (int m = 0; m < one.size(); ++m) {
        for (std::size_t w = 0; w < omega.size(); ++w) {
            CHECK(mean.values[m][w] == subj.values[m][w]);
            CHECK(mean.values[m][w] == mean.values[0][w]);
        }
    }

    Eigen::MatrixXd d(2, 2);
    d << 0.2, -0.25, 0.3, 0.1;
    const auto two = constant_grid(alpha, {d, -d});
    const auto s0 = subject_fpdc(two, 0, omega);
    const auto s1 = subject_fpdc(two, 1, omega);
    const auto avg = mean_fpdc(two, 0, omega);
    double diff = 0.0;
    for (std::size_t w = 0; w < omega.size(); ++w) {
        const Eigen::MatrixXd average = 0.5 * (s0.modulus(0, w) + s1.modulus(0, w));
        diff = std::max(diff, (avg.modulus(0, w) - average).cwiseAbs().maxCoeff());
    }
    CHECK(diff > 1e-3);
    CHECK(error_of([&] { (void)mean_fpdc(two, 1, omega); }) == ErrorCode::IndexError);
    CHECK(error_of([&] { (void)subject_fpdc(two, 2, omega); }) == ErrorCode::IndexError);
    CHECK(error_of([&] { (void)mean_fpdc(two, 0, {0.5}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("gaps propagate to surfaces") {
    auto grid = constant_grid(Eigen::MatrixXd::Constant(1, 1, 0.3), {Eigen::MatrixXd::Zero(1, 1)});
    grid.fits[2].gap = true;
    const auto s = mean_fpdc(grid, 0, {0.1, 0.2});
    CHECK(s.gap[2]);
    CHECK(s.values[2].empty());
    CHECK_FALSE(s.gap[1]);
}

TEST_CASE("autoregression-heavy data has self coherence near one") {
    auto spec = GeneratorSpec::defaults(GeneratorKind::LinearVar);
    Eigen::MatrixXd a(3, 3);
    a << 0.6, 0.05, 0.0, 0.0, 0.5, 0.05, 0.05, 0.0, 0.55;
    spec.coefficients = {a};
    spec.random_effect_sd = 0.0;
    const auto sim = simulate(spec);
    ModelConfig c;
    c.reference = ReferenceSpec::from_channel(0, 1);
    c.grid_size = 10;
    const auto grid = fit_mxfar(sim.panel, c);
    const auto omega = default_omega_grid(16);
    const auto s = mean_fpdc(grid, 0, omega);
    for (int m = 1; m < grid.size() - 1; ++m) {
        for (std::size_t w = 0; w < omega.size(); ++w) CHECK(s.modulus(m, w).diagonal().minCoeff() > 0.9);
    }
}

TEST_CASE("regimes sit at the grid points nearest the pooled quantiles") {
    const auto sim = simulate(GeneratorSpec::defaults(GeneratorKind::Expar));
    ModelConfig c;
    c.reference = ReferenceSpec::from_channel(1, 2);
    const auto grid = fit_mxfar(sim.panel, c);
    const auto regimes = default_regimes(sim.panel, grid);
    REQUIRE(regimes.size() == 2);
    CHECK(regimes[0].name == "small");
    CHECK(regimes[1].name == "large");
    const double q = quantile(pooled_reference(sim.panel, c), 0.2);
    for (int m = 0; m < grid.size(); ++m) {
        CHECK(std::abs(grid.grid.points[regimes[0].grid_index] - q) <= std::abs(grid.grid.points[m] - q));
    }
}

TEST_CASE("EXPAR cross edge is significant where the coefficient peaks") {
    const auto sim = simulate(GeneratorSpec::defaults(GeneratorKind::Expar));
    ModelConfig c;
    c.reference = ReferenceSpec::from_channel(1, 2);
    const auto grid = build_grid(sim.panel, c);
    SignificanceOptions opt;
    opt.bootstrap.replicates = 50;
    opt.bootstrap.seed = 3;
    opt.omega = default_omega_grid(16);
    opt.grid_points = {grid.segment_of(0.0)};
    const auto sig = edge_significance(sim.panel, c, opt);
    CHECK(sig.B == 50);
    CHECK(sig.B_null.size() == 4);
    CHECK(sig.significant[0][0](0, 1) == 1);
    for (std::size_t w = 0; w < opt.omega.size(); ++w) {
        CHECK((sig.ci_lo[0][0][w].array() <= sig.ci_hi[0][0][w].array()).all());
        check_normalized(sig.value[0][0][w]);
    }
}

TEST_CASE("a single replicate still returns, with a warning") {
    auto spec = GeneratorSpec::defaults(GeneratorKind::Expar);
    spec.group_sizes = {3};
    spec.n_time = 200;
    const auto sim = simulate(spec);
    ModelConfig c;
    c.reference = ReferenceSpec::from_channel(1, 2);
    c.grid_size = 10;
    SignificanceOptions opt;
    opt.bootstrap.replicates = 1;
    opt.omega = {0.1, 0.3};
    const auto sig = edge_significance(sim.panel, c, opt);
    CHECK(sig.B == 1);
    CHECK(sig.regime == std::vector<std::string>{"small", "large"});
    CHECK_FALSE(sig.warnings.empty());
}

TEST_CASE("windowed significance and the network summary") {
    auto spec = GeneratorSpec::defaults(GeneratorKind::Expar);
    spec.group_sizes = {3};
    spec.n_time = 450;
    const auto sim = simulate(spec);
    ModelConfig c;
    c.reference = ReferenceSpec::from_channel(1, 2);
    c.grid_size = 10;
    SignificanceOptions opt;
    opt.bootstrap.replicates = 2;
    opt.omega = {0.1, 0.3};
    const auto windows = windowed_significance(sim.panel, c, 200, opt);
    REQUIRE(windows.size() == 2);
    const auto summary = network_summary(windows);
    CHECK(summary.windows == 2);
    CHECK(summary.edges.size() == 2 * 4);
    for (const auto& e : summary.edges) CHECK((e.proportion >= 0.0 && e.proportion <= 1.0));
    CHECK(error_of([&] { (void)windowed_significance(sim.panel, c, 451, opt); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("network proportions and DOT output") {
    EdgeSignificance base;
    base.n_groups = 1;
    base.n_channels = 2;
    base.regime = {"small"};
    std::vector<EdgeSignificance> windows(5, base);
    for (int w = 0; w < 5; ++w) {
        Eigen::MatrixXi s = Eigen::MatrixXi::Zero(2, 2);
        s(0, 0) = 1;            // self edge, every window
        s(1, 0) = w < 3;        // 1 -> 2 in three of five windows
        windows[w].significant = {{s}};
    }
    const auto summary = network_summary(windows);
    auto edge = [&](int source, int target) {
        for (const auto& e : summary.edges) {
            if (e.source == source && e.target == target) return e.proportion;
        }
        return -1.0;
    };
    CHECK(edge(0, 0) == 1.0);
    CHECK(edge(0, 1) == doctest::Approx(0.6));
    CHECK(edge(1, 0) == 0.0);
    const auto dot = network_dot(summary);
    CHECK(dot.find("\"g0_small_ch1\" -> \"g0_small_ch2\" [label=\"0.600\"") != std::string::npos);
    CHECK(dot.find("\"g0_small_ch1\" -> \"g0_small_ch1\"") == std::string::npos);
    CHECK(dot.find("ch2\" -> ") == std::string::npos);
    CHECK(error_of([] { (void)network_summary({}); }) == ErrorCode::InvalidArgument);
}
