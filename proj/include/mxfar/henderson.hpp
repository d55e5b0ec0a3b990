#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mxfar {

/**
 * Kernel-weighted sufficient statistics of one subject's local design.
 *
 * For rows z_t (length q), weights w_t and responses y_t (one column per
 * response), gram = sum w z z', cross = sum w z y', yy = sum w y^2.
 */
struct SubjectMoments {
    Eigen::MatrixXd gram;
    Eigen::MatrixXd cross;
    Eigen::VectorXd yy;
    double weight_sum = 0.0;
    double max_weight = 0.0;
    int n_nonzero = 0;
    int group = 0;
};

/// Accumulate moments from explicit rows (m x q), weights (m) and responses (m x r).
[[nodiscard]] SubjectMoments accumulate_moments(const Eigen::MatrixXd& rows,
                                                const Eigen::VectorXd& weights,
                                                const Eigen::MatrixXd& responses, int group);

struct HendersonSolution {
    std::vector<Eigen::VectorXd> theta;  ///< fixed effects, one q-vector per group
    std::vector<Eigen::VectorXd> gamma;  ///< random effects, one q-vector per subject
    double residual_norm = 0.0;
    double rhs_norm = 0.0;
};

/**
 * Solves Henderson's mixed-model equations for the layout used by the
 * local-linear estimator: subject n contributes rows z_t to its group's
 * fixed-effect block and to its own random-effect block, and every subject
 * shares the diagonal penalty `penalty` (so G^{-1} = diag(penalty) (x) I_N).
 *
 * Each subject's q x q block is absorbed into the fixed-effect equations of
 * its group; the joint (G + N) q system is never formed. The returned
 * solution satisfies the full system to a residual norm of at most
 * 1e-8 * ||rhs|| or SingularSystem is thrown.
 */
[[nodiscard]] HendersonSolution solve_henderson_block(std::span<const SubjectMoments> subjects,
                                                      int n_groups,
                                                      const Eigen::VectorXd& penalty,
                                                      int response = 0);

/// Kernel-weighted least squares with one coefficient vector per group and no random effects.
[[nodiscard]] HendersonSolution solve_fixed_effects(std::span<const SubjectMoments> subjects,
                                                    int n_groups, int response = 0);

/// Residual norm of the full Henderson system at a candidate solution.
[[nodiscard]] double henderson_residual(std::span<const SubjectMoments> subjects,
                                        const Eigen::VectorXd& penalty, int response,
                                        const HendersonSolution& solution);

}  // namespace mxfar
