#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the block solver or the estimator's moment code.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mxfar/core.hpp"
#include "mxfar/estimator.hpp"

namespace oracle {

/// Joint Henderson system [[X'WX, X'WZ], [Z'WX, Z'WZ + G^{-1}]] solved densely.
inline Eigen::VectorXd dense_henderson(const mxfar::DenseDesign& d, const Eigen::VectorXd& block_penalty) {
    const auto nx = d.X.cols();
    const auto nz = d.Z.cols();
    const auto q = block_penalty.size();
    Eigen::MatrixXd A(nx + nz, nx + nz);
    const Eigen::MatrixXd WX = d.W.asDiagonal() * d.X;
    const Eigen::MatrixXd WZ = d.W.asDiagonal() * d.Z;
    A.topLeftCorner(nx, nx) = d.X.transpose() * WX;
    A.topRightCorner(nx, nz) = d.X.transpose() * WZ;
    A.bottomLeftCorner(nz, nx) = d.Z.transpose() * WX;
    A.bottomRightCorner(nz, nz) = d.Z.transpose() * WZ;
    for (Eigen::Index i = 0; i < nz; ++i) A(nx + i, nx + i) += block_penalty[i % q];
    Eigen::VectorXd rhs(nx + nz);
    rhs.head(nx) = WX.transpose() * d.Y;
    rhs.tail(nz) = WZ.transpose() * d.Y;
    return A.fullPivLu().solve(rhs);
}

/// Minimizer of sum w (y - X theta - Z gamma)^2 + gamma' P gamma via QR of the augmented system.
inline Eigen::VectorXd penalized_least_squares(const mxfar::DenseDesign& d, const Eigen::VectorXd& block_penalty) {
    const auto nx = d.X.cols();
    const auto nz = d.Z.cols();
    const auto n = d.Y.size();
    const auto q = block_penalty.size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + nz, nx + nz);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + nz);
    const Eigen::VectorXd sw = d.W.cwiseSqrt();
    A.topLeftCorner(n, nx) = sw.asDiagonal() * d.X;
    A.topRightCorner(n, nz) = sw.asDiagonal() * d.Z;
    b.head(n) = sw.cwiseProduct(d.Y);
    for (Eigen::Index i = 0; i < nz; ++i) A(n + i, nx + i) = std::sqrt(block_penalty[i % q]);
    return A.colPivHouseholderQr().solve(b);
}

/// Least-squares AR(1) slope without intercept: sum y_t y_{t-1} / sum y_{t-1}^2 over t >= start.
inline double ar1_slope(std::span<const double> y, int start = 1) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = static_cast<std::size_t>(start); t < y.size(); ++t) {
        num += y[t] * y[t - 1];
        den += y[t - 1] * y[t - 1];
    }
    return num / den;
}

/// Multivariate least-squares VAR(p) without intercept for one subject, k x kp.
inline Eigen::MatrixXd var_least_squares(const mxfar::Panel& panel, int subject, int p, int start) {
    const int k = panel.n_channels();
    const int rows = panel.n_time() - start;
    Eigen::MatrixXd X(rows, k * p);
    Eigen::MatrixXd Y(rows, k);
    for (int r = 0; r < rows; ++r) {
        const int t = start + r;
        for (int l = 1; l <= p; ++l) {
            for (int g = 0; g < k; ++g) X(r, (l - 1) * k + g) = panel(subject, g, t - l);
        }
        for (int j = 0; j < k; ++j) Y(r, j) = panel(subject, j, t);
    }
    return X.colPivHouseholderQr().solve(Y).transpose();
}

/// Textbook PDC from VAR matrices A_1..A_p: |Abar_{jg}| / sqrt(sum_i |Abar_{ig}|^2).
inline Eigen::MatrixXd direct_pdc(const std::vector<Eigen::MatrixXd>& lags, double omega) {
    const auto k = lags.front().rows();
    Eigen::MatrixXcd abar = Eigen::MatrixXcd::Identity(k, k);
    for (std::size_t l = 0; l < lags.size(); ++l) {
        const double arg = -2.0 * std::numbers::pi * omega * static_cast<double>(l + 1);
        const std::complex<double> z(std::cos(arg), std::sin(arg));
        for (Eigen::Index j = 0; j < k; ++j) {
            for (Eigen::Index g = 0; g < k; ++g) abar(j, g) -= lags[l](j, g) * z;
        }
    }
    Eigen::MatrixXd out(k, k);
    for (Eigen::Index g = 0; g < k; ++g) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) s += std::norm(abar(i, g));
        for (Eigen::Index j = 0; j < k; ++j) out(j, g) = std::abs(abar(j, g)) / std::sqrt(s);
    }
    return out;
}

/// Composite Simpson rule on [a, b] with n (even) intervals.
template <class F>
double simpson(F&& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

/// Random panel of standard-normal AR-ish series for solver tests.
inline mxfar::Panel random_panel(int n_subjects, int k, int T, std::uint64_t seed, int n_groups = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> v(static_cast<std::size_t>(n_subjects) * k * T);
    for (int n = 0; n < n_subjects; ++n) {
        for (int j = 0; j < k; ++j) {
            double prev = 0.0;
            for (int t = 0; t < T; ++t) {
                prev = 0.4 * prev + normal(rng);
                v[(static_cast<std::size_t>(n) * k + j) * T + t] = prev;
            }
        }
    }
    std::vector<int> groups(n_subjects);
    for (int n = 0; n < n_subjects; ++n) groups[n] = n % n_groups;
    return mxfar::Panel(n_subjects, k, T, std::move(v), groups);
}

}  // namespace oracle
