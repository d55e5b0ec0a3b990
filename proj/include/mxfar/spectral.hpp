#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mxfar/core.hpp"
#include "mxfar/estimator.hpp"
#include "mxfar/inference.hpp"

namespace mxfar {

/// delta_{jg} - sum_l f_{j,g:l} e^{-i 2 pi omega l} for k x kp coefficients.
[[nodiscard]] Eigen::MatrixXcd bar_f(const Eigen::MatrixXd& coefficients, double omega);

/// Column-normalized bar_f: entry (j, g) is the directed coherence from g to j.
[[nodiscard]] Eigen::MatrixXcd fpdc(const Eigen::MatrixXd& coefficients, double omega);

/// n equispaced frequencies 0.5 i / (n + 1), i = 1..n, inside (0, 0.5).
[[nodiscard]] std::vector<double> default_omega_grid(int n = 64);

struct FpdcSurface {
    std::vector<double> omega;
    std::vector<double> u0;
    /// "group" or "subject"
    std::string scope;
    int index = 0;  ///< group label or subject index
    /// values[m][w] is the k x k complex matrix at (u0[m], omega[w]); empty at gaps.
    std::vector<std::vector<Eigen::MatrixXcd>> values;
    std::vector<bool> gap;

    [[nodiscard]] Eigen::MatrixXd modulus(int m, int w) const { return values[m][w].cwiseAbs(); }
};

/// fPDC of the group-mean coefficients alpha[group] at every grid point.
[[nodiscard]] FpdcSurface mean_fpdc(const CoefficientGrid& grid, int group, const std::vector<double>& omega);
/// fPDC of alpha[group(n)] + a^{(n)}.
[[nodiscard]] FpdcSurface subject_fpdc(const CoefficientGrid& grid, int subject,
                                       const std::vector<double>& omega);

/// Grid indices nearest the 0.2 and 0.8 pooled reference quantiles ("small", "large").
struct Regime {
    std::string name;
    double quantile = 0.0;
    int grid_index = 0;
};
[[nodiscard]] std::vector<Regime> default_regimes(const Panel& panel, const CoefficientGrid& grid);

struct SignificanceOptions {
    BootstrapOptions bootstrap;
    double alpha_level = 0.05;
    std::vector<double> omega;     ///< empty selects default_omega_grid(64)
    std::vector<int> grid_points;  ///< empty selects the default regimes
    FitOptions fit;
};

/**
 * Edge significance of the mean fPDC. For every group, grid point u0 and
 * frequency: |fPDC| of the fit, a percentile interval at level 1 - alpha_level
 * from residual-bootstrap refits, and a threshold equal to the 1 - alpha_level
 * quantile of |fPDC| over refits whose generator has the g -> j coefficients
 * zeroed for every subject. Edge g -> j is significant at u0 when the interval's
 * lower bound exceeds the threshold at some frequency.
 */
struct EdgeSignificance {
    std::vector<double> omega;
    std::vector<int> grid_points;
    std::vector<double> u0;
    std::vector<std::string> regime;  ///< per grid point, empty when user supplied
    int n_groups = 1;
    int n_channels = 0;
    /// Indexed [group][u0 index][omega index], k x k (target row, source column).
    std::vector<std::vector<std::vector<Eigen::MatrixXcd>>> value;
    std::vector<std::vector<std::vector<Eigen::MatrixXd>>> ci_lo;
    std::vector<std::vector<std::vector<Eigen::MatrixXd>>> ci_hi;
    std::vector<std::vector<std::vector<Eigen::MatrixXd>>> threshold;
    /// [group][u0 index] k x k, 1 when significant.
    std::vector<std::vector<Eigen::MatrixXi>> significant;
    int B = 0;
    std::vector<int> B_null;  ///< kept link-null replicates per edge, row-major (j, g)
    double alpha_level = 0.05;
    std::vector<std::string> warnings;
};

[[nodiscard]] EdgeSignificance edge_significance(const Panel& panel, const ModelConfig& config,
                                                 const SignificanceOptions& options = {});

struct NetworkEdge {
    int group = 0;
    std::string regime;
    int source = 0;
    int target = 0;
    double proportion = 0.0;
};

struct NetworkSummary {
    int windows = 0;
    int n_channels = 0;
    std::vector<NetworkEdge> edges;
};

/// Proportion of windows in which each edge is significant, per group and regime.
[[nodiscard]] NetworkSummary network_summary(const std::vector<EdgeSignificance>& windows);

/// Non-overlapping windows of `window_len` samples (a trailing remainder is dropped).
[[nodiscard]] std::vector<EdgeSignificance> windowed_significance(const Panel& panel,
                                                                  const ModelConfig& config,
                                                                  int window_len,
                                                                  const SignificanceOptions& options);

/// Graphviz rendering of one group/regime slice; self-edges are omitted.
[[nodiscard]] std::string network_dot(const NetworkSummary& summary);

}  // namespace mxfar
