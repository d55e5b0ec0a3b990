#include "doctest.h"

#include <cmath>
#include <vector>

#include "mxfar/core.hpp"
#include "mxfar/error.hpp"
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

Panel series_panel(std::vector<std::vector<double>> channels) {
    const int k = static_cast<int>(channels.size());
    const int T = static_cast<int>(channels.front().size());
    std::vector<double> v;
    for (auto& c : channels) v.insert(v.end(), c.begin(), c.end());
    return Panel(1, k, T, std::move(v));
}

}  // namespace

TEST_CASE("kernel values at the reference points") {
    CHECK(kernel_value(KernelKind::Epanechnikov, 0.0) == doctest::Approx(0.75));
    CHECK(kernel_value(KernelKind::Epanechnikov, 1.0) == 0.0);
    CHECK(kernel_value(KernelKind::Epanechnikov, -1.5) == 0.0);
    CHECK(kernel_value(KernelKind::Gaussian, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
}

TEST_CASE("scaled kernel weights") {
    CHECK(scaled_kernel_weight(KernelKind::Epanechnikov, 0.3, 0.3, 0.5) == doctest::Approx(1.5));
    for (double h : {0.1, 1.0, 7.0}) {
        CHECK(scaled_kernel_weight(KernelKind::Epanechnikov, 2.0 + h, 2.0, h) == 0.0);
        CHECK(scaled_kernel_weight(KernelKind::Gaussian, 1.0, 1.0, h) ==
              doctest::Approx(kernel_value(KernelKind::Gaussian, 0.0) / h));
    }
    CHECK(scaled_kernel_weight(KernelKind::Gaussian, 1.0, 0.0, 1.0) ==
          doctest::Approx(0.24197072451914337).epsilon(1e-12));
    CHECK(error_of([] { (void)scaled_kernel_weight(KernelKind::Gaussian, 0, 0, 0.0); }) ==
          ErrorCode::InvalidBandwidth);
    CHECK(error_of([] { (void)scaled_kernel_weight(KernelKind::Gaussian, 0, 0, -1.0); }) ==
          ErrorCode::InvalidBandwidth);
}

TEST_CASE("kernels integrate to one, are symmetric and nonnegative") {
    for (auto kind : {KernelKind::Epanechnikov, KernelKind::Gaussian}) {
        const double lim = kind == KernelKind::Epanechnikov ? 1.0 : 12.0;
        const double area = oracle::simpson([&](double u) { return kernel_value(kind, u); }, -lim, lim, 20000);
        CHECK(std::abs(area - 1.0) < 1e-6);
        for (double u = -3.0; u <= 3.0; u += 0.137) {
            CHECK(kernel_value(kind, u) == kernel_value(kind, -u));
            CHECK(kernel_value(kind, u) >= 0.0);
            CHECK(scaled_kernel_weight(kind, u, 0.2, 0.7) >= 0.0);
        }
    }
}

TEST_CASE("kernel names round trip") {
    CHECK(parse_kernel("gaussian") == KernelKind::Gaussian);
    CHECK(parse_kernel(kernel_name(KernelKind::Epanechnikov)) == KernelKind::Epanechnikov);
    CHECK(error_of([] { (void)parse_kernel("box"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("panel validation") {
    CHECK(error_of([] { Panel(1, 1, 3, {1.0, 2.0}); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([] { Panel(1, 1, 2, {1.0, NAN}); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([] { Panel(2, 1, 1, {1.0, 2.0}, {0, 2}); }) == ErrorCode::InvalidArgument);
    const Panel p(2, 1, 2, {1, 2, 3, 4}, {1, 0}, {"a", "b"});
    CHECK(p.n_groups() == 2);
    CHECK(p(1, 0, 1) == 4.0);
    CHECK(p.subject(1).subject_id(0) == "b");
    CHECK(p.truncated(1).n_time() == 1);
    const std::vector<int> order{1, 0};
    const Panel r = p.reordered(order);
    CHECK(r(0, 0, 0) == 3.0);
    CHECK(r.group_of(0) == 0);
}

TEST_CASE("reference extraction shifts by the lag") {
    const Panel p = series_panel({{9, 9, 9, 9}, {1, 2, 3, 4}});
    const auto sig = extract_reference(p, ReferenceSpec::from_channel(1, 2));
    CHECK(sig.first_usable == 2);
    CHECK(std::isnan(sig.values[0][0]));
    CHECK(std::isnan(sig.values[0][1]));
    CHECK(sig.values[0][2] == 1.0);
    CHECK(sig.values[0][3] == 2.0);

    const std::vector<std::vector<double>> exo{{0.5, 0.1, 0.2, 0.3}};
    const auto pass = extract_reference(p, ReferenceSpec::from_series(exo));
    CHECK(pass.values == exo);
    CHECK(pass.first_usable == 0);

    CHECK(error_of([&] { (void)extract_reference(p, ReferenceSpec::from_channel(1, 4)); }) == ErrorCode::SpecError);
    CHECK(error_of([&] { (void)extract_reference(p, ReferenceSpec::from_channel(2, 1)); }) == ErrorCode::SpecError);
    CHECK(error_of([&] { (void)extract_reference(p, ReferenceSpec::from_channel(0, 0)); }) == ErrorCode::SpecError);
}

TEST_CASE("model config preconditions") {
    ModelConfig c;
    c.bandwidth = 0.0;
    CHECK(error_of([&] { c.validate(); }) == ErrorCode::InvalidBandwidth);
    c.bandwidth = 1.0;
    c.penalty_scale = 0.0;
    CHECK(error_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
    c.penalty_scale = 1.0;
    c.grid_size = 1;
    CHECK(error_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
    c.grid_size = 50;
    c.clip_low = 0.7;
    c.clip_high = 0.6;
    CHECK(error_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("uniform grid midpoints") {
    const auto a = ReferenceGrid::uniform(0.0, 1.0, 2);
    CHECK(a.points == std::vector<double>{0.25, 0.75});
    const auto b = ReferenceGrid::uniform(-1.0, 1.0, 4);
    REQUIRE(b.size() == 4);
    CHECK(b.points[0] == doctest::Approx(-0.75));
    CHECK(b.points[1] == doctest::Approx(-0.25));
    CHECK(b.points[2] == doctest::Approx(0.25));
    CHECK(b.points[3] == doctest::Approx(0.75));
}

TEST_CASE("build_grid without clipping uses the pooled range") {
    // U = Y lagged 1 over t >= 1: values 0..1 in steps of 0.25.
    const Panel p = series_panel({{0.0, 0.25, 0.5, 0.75, 1.0, 0.0}});
    ModelConfig c;
    c.reference = ReferenceSpec::from_channel(0, 1);
    c.clip_low = 0.0;
    c.clip_high = 1.0;
    c.grid_size = 2;
    const auto g = build_grid(p, c);
    CHECK(g.points[0] == doctest::Approx(0.25));
    CHECK(g.points[1] == doctest::Approx(0.75));

    const Panel flat = series_panel({{2.0, 2.0, 2.0, 2.0}});
    CHECK(error_of([&] { (void)build_grid(flat, c); }) == ErrorCode::DegenerateReference);
}

TEST_CASE("build_grid points are increasing inside the clipped range") {
    const Panel p = oracle::random_panel(3, 2, 200, 11);
    ModelConfig c;
    c.reference = ReferenceSpec::from_channel(1, 2);
    c.grid_size = 37;
    const auto g = build_grid(p, c);
    REQUIRE(g.size() == 37);
    const auto pooled = pooled_reference(p, c);
    const double lo = quantile(pooled, 0.01);
    const double hi = quantile(pooled, 0.99);
    CHECK(g.lower == doctest::Approx(lo));
    CHECK(g.upper == doctest::Approx(hi));
    for (int m = 0; m < g.size(); ++m) {
        CHECK(g.points[m] > lo);
        CHECK(g.points[m] < hi);
        if (m > 0) CHECK(g.points[m] > g.points[m - 1]);
    }
}

TEST_CASE("segment assignment is left-closed and snaps out-of-range values") {
    const auto g = ReferenceGrid::uniform(-1.0, 1.0, 4);
    CHECK(g.segment_of(-5.0) == 0);
    CHECK(g.segment_of(-1.0) == 0);
    CHECK(g.segment_of(-0.5) == 1);  // boundary goes right
    CHECK(g.segment_of(0.0) == 2);
    CHECK(g.segment_of(0.49) == 2);
    CHECK(g.segment_of(1.0) == 3);  // last segment is closed
    CHECK(g.segment_of(9.0) == 3);
    for (int i = 1; i < g.size(); ++i) CHECK(g.segment_of(g.edge(i)) == i);
}

TEST_CASE("type 7 quantiles") {
    const std::vector<double> v{4, 1, 3, 2};
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 4.0);
    CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
    CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
}
