#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mxfar/core.hpp"
#include "mxfar/estimator.hpp"
#include "mxfar/random.hpp"

namespace mxfar {

/// Constant-coefficient mixed-effects VAR: eta^{(n)} = group mean + subject effect, k x kp each.
struct NullFit {
    int p = 1;
    int first_time = 1;
    std::vector<Eigen::MatrixXd> group_mean;
    std::vector<Eigen::MatrixXd> subject;
    Eigen::MatrixXd sigma2_eta;  ///< k x kp intercept variances behind the penalty
    bool random_effects = true;
};

struct NullFitOptions {
    double lambda = 1.0;
    /// First response time (0-based); defaults to p. The nonlinearity test uses max(p, d).
    std::optional<int> first_time;
    std::optional<double> penalty_override;
};

[[nodiscard]] NullFit fit_null_mevar(const Panel& panel, int p, const NullFitOptions& options = {});

/// Residuals of the null fit from first_time on, same layout as `residuals`.
[[nodiscard]] Residuals null_residuals(const NullFit& fit, const Panel& panel);

struct BootstrapOptions {
    int replicates = 200;
    std::uint64_t seed = 0;
    int threads = 0;
    /// Draw every subject's residuals from one pool across subjects instead of its own.
    bool pool_across_subjects = false;
    double max_drop_fraction = 0.25;
};

/// Residuals centered per subject and channel; each column is one time point.
[[nodiscard]] std::vector<Eigen::MatrixXd> centered_residual_pools(const Residuals& residuals);

/**
 * Rebuilds a panel recursively: the first `initial` observations of every
 * subject are copied from `panel`, and for t >= initial
 *   Y_t = coefficients(n, t, Y) * x_t + r*,
 * where r* is a column drawn with replacement from the subject's pool (or from
 * all pools when `pool_across_subjects`). `coefficients` receives the partially
 * regenerated k x T series of the subject. One value is taken from `rng`; each
 * subject's draws come from a generator keyed by that value and the subject id.
 */
using CoefficientRule = std::function<Eigen::MatrixXd(int subject, int t, const Eigen::MatrixXd& y)>;
[[nodiscard]] Panel regenerate_panel(const Panel& panel, int p, int initial,
                                     const std::vector<Eigen::MatrixXd>& pools,
                                     bool pool_across_subjects, const CoefficientRule& coefficients,
                                     Rng& rng);

struct NonlinearityTestResult {
    double L = 0.0;
    double rss0 = 0.0;
    double rss1 = 0.0;
    int B = 0;  ///< replicates kept
    int requested = 0;
    std::vector<double> L_boot;
    double p_value = 1.0;
    std::vector<std::string> warnings;
};

struct TestOptions {
    BootstrapOptions bootstrap;
    FitOptions fit;
    NullFitOptions null_fit;
};

[[nodiscard]] NonlinearityTestResult nonlinearity_test(const Panel& panel, const ModelConfig& config,
                                                       const TestOptions& options = {});

/// Pointwise band for group-mean coefficients; lower/upper indexed [group][grid point], k x kp.
struct CoefficientBand {
    ReferenceGrid grid;
    double level = 0.95;
    int B = 0;
    int requested = 0;
    std::vector<std::vector<Eigen::MatrixXd>> estimate;
    std::vector<std::vector<Eigen::MatrixXd>> lower;
    std::vector<std::vector<Eigen::MatrixXd>> upper;
    std::vector<std::string> warnings;
};

/**
 * Bootstrap refits around a fitted grid: panels regenerated from the fitted
 * subject coefficients (initial max(p, d) observations copied), refitted at the
 * original grid points with the original variance components re-estimated.
 * `transform` may edit each subject's coefficient matrix before regeneration
 * (used for link-null designs). A subject matrix whose VAR companion is not
 * stable is replaced by the nearest stable grid point's for regeneration only,
 * with a note in `warnings`. Failed replicates are nullopt.
 */
using CoefficientTransform = std::function<void(Eigen::MatrixXd&)>;
[[nodiscard]] std::vector<std::optional<CoefficientGrid>> bootstrap_grids(
    const Panel& panel, const CoefficientGrid& fitted, const BootstrapOptions& options, Stream stream,
    const CoefficientTransform& transform = {}, const FitOptions& fit_options = {},
    std::vector<std::string>* warnings = nullptr);

/// Throws TestError when more than `max_drop_fraction` of the replicates failed.
int check_drop_rate(std::size_t kept, std::size_t requested, double max_drop_fraction,
                    std::vector<std::string>& warnings);

[[nodiscard]] CoefficientBand coefficient_bands(const Panel& panel, const ModelConfig& config,
                                                double level = 0.95, const BootstrapOptions& options = {},
                                                const FitOptions& fit_options = {});

/// Same as above around an existing fit.
[[nodiscard]] CoefficientBand coefficient_bands(const Panel& panel, const CoefficientGrid& fitted,
                                                double level, const BootstrapOptions& options,
                                                const FitOptions& fit_options = {});

}  // namespace mxfar
