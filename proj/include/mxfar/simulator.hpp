#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mxfar/core.hpp"

namespace mxfar {

enum class GeneratorKind { Expar, SigmoidTwoGroup, LinearVar, Tar, Custom };

[[nodiscard]] std::string generator_name(GeneratorKind kind);
[[nodiscard]] GeneratorKind parse_generator(const std::string& name);

/// Tabulated coefficient curve f_{target,source:lag}(u), linearly interpolated between knots.
struct CoefficientCurve {
    int target = 0;  ///< 0-based channel
    int source = 0;  ///< 0-based channel
    int lag = 1;
    std::vector<double> knots;  ///< strictly increasing
    std::vector<double> values;

    [[nodiscard]] double operator()(double u) const;  ///< throws ExtrapolationError outside the knots
};

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::Expar;
    std::vector<int> group_sizes{10};  ///< subjects per group; group g gets labels g
    int n_time = 500;
    int burn_in = 200;
    double noise_sd = 1.0;
    double random_effect_sd = 0.03;
    std::uint64_t seed = 0;
    /// Reference of the coefficient functions (EXPAR, sigmoid and TAR use channel 2 at lag 2).
    int ref_channel = 1;
    int ref_lag = 2;
    /// LinearVar: p matrices of size k x k (lag 1 first). TAR: the low-regime
    /// matrices; `coefficients_high` holds the high regime.
    std::vector<Eigen::MatrixXd> coefficients;
    std::vector<Eigen::MatrixXd> coefficients_high;
    double threshold = 0.0;  ///< TAR switch: low regime when U <= threshold
    std::vector<CoefficientCurve> curves;  ///< Custom generator (unlisted entries are 0)
    int custom_channels = 0;               ///< Custom: k
    int custom_order = 1;                  ///< Custom: p
    /// Redraw subject effects that make the subject model unstable, at most this
    /// many times per subject; 0 accepts every draw unchecked.
    int max_redraws = 1000;

    /// Standard designs for `kind`: EXPAR N=10, sigmoid 10/10, T=500, burn-in 200.
    [[nodiscard]] static GeneratorSpec defaults(GeneratorKind kind);

    [[nodiscard]] int n_subjects() const noexcept;
    [[nodiscard]] int n_channels() const;
    [[nodiscard]] int order() const;
    void validate() const;
};

/**
 * The generating model of a simulated panel: subject effects plus the rule
 * that turns them into coefficient matrices. Coefficient matrices are k x kp
 * in the estimator's layout (column (lag - 1) * k + source).
 */
class TrueModel {
public:
    TrueModel() = default;
    TrueModel(GeneratorSpec spec, std::vector<Eigen::VectorXd> effects, std::vector<int> group_of);

    [[nodiscard]] const GeneratorSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] int n_channels() const { return spec_.n_channels(); }
    [[nodiscard]] int order() const { return spec_.order(); }
    [[nodiscard]] int n_subjects() const noexcept { return static_cast<int>(effects_.size()); }
    [[nodiscard]] const std::vector<Eigen::VectorXd>& effects() const noexcept { return effects_; }
    [[nodiscard]] int group_of(int n) const { return group_of_.at(n); }

    /// f^{(n)}(u) for subject n.
    [[nodiscard]] Eigen::MatrixXd subject_coefficients(int subject, double u) const;
    /// Group mean curve: the subject rule with zero effects (group 2 of the sigmoid design negated).
    [[nodiscard]] Eigen::MatrixXd mean_coefficients(int group, double u) const;

private:
    [[nodiscard]] Eigen::MatrixXd evaluate(const Eigen::VectorXd& effects, int group, double u) const;

    GeneratorSpec spec_;
    std::vector<Eigen::VectorXd> effects_;
    std::vector<int> group_of_;
};

struct Simulation {
    Panel panel;
    TrueModel truth;
};

/// Generates the panel of `spec`; deterministic in (spec, seed).
[[nodiscard]] Simulation simulate(const GeneratorSpec& spec);

[[nodiscard]] Panel simulate_expar(const GeneratorSpec& spec);
[[nodiscard]] Panel simulate_sigmoid_groups(const GeneratorSpec& spec);
[[nodiscard]] Panel simulate_linear_var(const GeneratorSpec& spec);
[[nodiscard]] Panel simulate_tar(const GeneratorSpec& spec);
[[nodiscard]] Panel simulate_custom(const GeneratorSpec& spec);

/// Subject effects exactly as drawn by `simulate` (after any stability redraws).
[[nodiscard]] std::vector<Eigen::VectorXd> draw_effects(const GeneratorSpec& spec);

/// Largest eigenvalue modulus of the VAR companion matrix of k x kp coefficients.
[[nodiscard]] double companion_spectral_radius(const Eigen::MatrixXd& coefficients);

inline constexpr double kBoundednessLimit = 1e6;

}  // namespace mxfar
