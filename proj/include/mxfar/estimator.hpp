#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mxfar/core.hpp"
#include "mxfar/henderson.hpp"

namespace mxfar {

// Coefficient layout: for target channel j the regressors are ordered
// Y_{1,t-1}, ..., Y_{k,t-1}, ..., Y_{1,t-p}, ..., Y_{k,t-p}, so column
// (l - 1) * k + g of a k x kp coefficient matrix holds f_{j,g:l}. A local
// design row is [x_t', x_t' (U_t - u0)], i.e. q = 2kp columns.

/// Column of f_{j,g:lag} in a k x kp coefficient matrix (g 0-based, lag 1-based).
[[nodiscard]] constexpr int regressor_index(int n_channels, int source, int lag) noexcept {
    return (lag - 1) * n_channels + source;
}

struct SubjectDesign {
    Eigen::MatrixXd rows;      ///< usable times x 2kp
    Eigen::VectorXd weights;   ///< K_h(U_t - u0)
    Eigen::VectorXd response;  ///< Y_{j,t}
    int group = 0;
};

/// The local design at one grid point for one target channel, kept per subject.
struct LocalDesign {
    int n_groups = 1;
    int n_coefficients = 0;  ///< q = 2kp
    std::vector<SubjectDesign> subjects;

    [[nodiscard]] std::vector<SubjectMoments> moments() const;
};

/// Explicit stacked matrices: X (rows x G q), block-diagonal Z (rows x N q), weights and response.
struct DenseDesign {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z;
    Eigen::VectorXd W;
    Eigen::VectorXd Y;
};

[[nodiscard]] LocalDesign build_local_design(const Panel& panel, const ModelConfig& config,
                                             int channel, double u0);
[[nodiscard]] DenseDesign materialize(const LocalDesign& design);

struct LocalLinearFit {
    Eigen::VectorXd alpha;  ///< kp intercepts, f_hat(u0)
    Eigen::VectorXd beta;   ///< kp slopes
};

/// Pooled kernel-weighted least squares over every subject of `panel` (one subject gives the FAR estimator).
[[nodiscard]] LocalLinearFit fit_far_local(const Panel& panel, const ModelConfig& config, int channel,
                                           double u0);

/// sigma^2_alpha and sigma^2_beta per target channel (rows) and regressor (columns).
struct VarianceComponents {
    Eigen::MatrixXd sigma2_alpha;
    Eigen::MatrixXd sigma2_beta;
};

inline constexpr double kVarianceFloor = 1e-8;

/**
 * G^{-1} diagonal for one subject block of target channel `channel`:
 * lambda * sigma^2 / max_weight, intercepts first then slopes. Variances
 * below kVarianceFloor are raised to it.
 */
[[nodiscard]] Eigen::VectorXd penalty_matrix(const VarianceComponents& variances, int channel,
                                             double lambda, double max_weight);

/**
 * Pilot estimate of the random-effect variances: independent per-subject
 * local fits at each pilot point, pooled within-group sample variances of the
 * subject intercepts and slopes, averaged over pilot points, floored.
 */
[[nodiscard]] VarianceComponents estimate_variance_components(const Panel& panel,
                                                              const ModelConfig& config,
                                                              std::span<const double> pilot_points);

/// Every `stride`-th point of the grid, starting with the first.
[[nodiscard]] std::vector<double> pilot_points(const ReferenceGrid& grid, int stride = 5);

/// Estimates at one grid point. Matrices are k x kp (channel rows).
struct LocalFit {
    double u0 = 0.0;
    bool gap = false;
    std::string gap_reason;
    std::vector<Eigen::MatrixXd> alpha;  ///< per group
    std::vector<Eigen::MatrixXd> beta;   ///< per group
    std::vector<Eigen::MatrixXd> a;      ///< per subject random intercepts
    std::vector<Eigen::MatrixXd> b;      ///< per subject random slopes
    Eigen::VectorXd sigma2_eps;          ///< per channel weighted residual variance
};

/// One target channel's slice of a LocalFit.
struct ChannelFit {
    std::vector<Eigen::VectorXd> alpha;  ///< per group, kp
    std::vector<Eigen::VectorXd> beta;
    std::vector<Eigen::VectorXd> a;  ///< per subject, kp
    std::vector<Eigen::VectorXd> b;
    double sigma2_eps = 0.0;
};

class CoefficientGrid {
public:
    ModelConfig config;
    ReferenceGrid grid;
    std::vector<LocalFit> fits;
    VarianceComponents variance_components;
    std::vector<int> group_of;
    std::vector<std::string> subject_ids;
    int n_groups = 1;
    int n_channels = 0;
    bool random_effects = true;

    [[nodiscard]] int size() const noexcept { return grid.size(); }
    [[nodiscard]] int n_subjects() const noexcept { return static_cast<int>(group_of.size()); }
    [[nodiscard]] int n_gaps() const noexcept;

    /// alpha[group(n)] + a[n] at grid point m; throws GapError at a gap.
    [[nodiscard]] Eigen::MatrixXd subject_coefficients(int subject, int m) const;
    [[nodiscard]] const Eigen::MatrixXd& group_coefficients(int group, int m) const;
    /// Sigma^2_eps pooled over channels and grid points, weighted equally.
    [[nodiscard]] double pooled_sigma2_eps() const;
};

struct FitOptions {
    std::optional<ReferenceGrid> grid;                   ///< fit at these points instead of build_grid
    std::optional<VarianceComponents> variances;         ///< skip pilot estimation
    std::optional<double> penalty_override;              ///< uniform G^{-1} diagonal value
    int pilot_stride = 5;
    double max_gap_fraction = 0.2;
};

[[nodiscard]] ChannelFit fit_mxfar_channel(const Panel& panel, const ModelConfig& config, int channel,
                                           double u0, const VarianceComponents& variances);

/// Fits every channel at every grid point. Single-subject panels are fitted without random effects.
[[nodiscard]] CoefficientGrid fit_mxfar(const Panel& panel, const ModelConfig& config,
                                        const FitOptions& options = {});

/// One-step prediction of all channels of subject n at 0-based time t.
[[nodiscard]] Eigen::VectorXd predict_one_step(const CoefficientGrid& grid, const Panel& panel,
                                               int subject, int t);
/// As above with the reference signal taken from `reference` (e.g. a longer exogenous series).
[[nodiscard]] Eigen::VectorXd predict_one_step(const CoefficientGrid& grid, const Panel& panel,
                                               int subject, int t, const ReferenceSpec& reference);

/// Residuals per subject as k x (T - first_time) matrices; column c is time first_time + c.
struct Residuals {
    int first_time = 0;
    std::vector<Eigen::MatrixXd> values;

    [[nodiscard]] double sum_of_squares() const;
};

[[nodiscard]] Residuals residuals(const CoefficientGrid& grid, const Panel& panel);

// ---------------------------------------------------------------------------
// Shared machinery used by the estimator, selection and the bootstraps.
// ---------------------------------------------------------------------------

/// Lagged regressors and reference values of one panel, ready for repeated local moments.
class DesignCache {
public:
    DesignCache(const Panel& panel, const ModelConfig& config);

    /// Moments of every subject at u0 with all k channels as responses.
    [[nodiscard]] std::vector<SubjectMoments> moments(double u0) const;

    [[nodiscard]] int n_subjects() const noexcept { return static_cast<int>(x_.size()); }
    [[nodiscard]] int n_groups() const noexcept { return n_groups_; }
    [[nodiscard]] int n_coefficients() const noexcept { return 2 * kp_; }

private:
    ModelConfig config_;
    int kp_ = 0;
    int n_groups_ = 1;
    std::vector<int> group_of_;
    std::vector<Eigen::MatrixXd> x_;  ///< usable times x kp
    std::vector<Eigen::VectorXd> u_;  ///< usable times
    std::vector<Eigen::MatrixXd> y_;  ///< usable times x k
};

/// Lagged regressor vector x_t (length kp) of subject n at time t.
[[nodiscard]] Eigen::VectorXd lagged_regressors(const Panel& panel, int subject, int t, int p);

}  // namespace mxfar
