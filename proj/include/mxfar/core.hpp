#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mxfar {

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

enum class KernelKind { Epanechnikov, Gaussian };

/// K(u). Epanechnikov: 0.75(1-u^2) on |u|<=1; Gaussian: standard normal density.
[[nodiscard]] double kernel_value(KernelKind kind, double u) noexcept;

/// K_h(u - u0) = K((u - u0) / h) / h. Throws InvalidBandwidth when h <= 0.
[[nodiscard]] double scaled_kernel_weight(KernelKind kind, double u, double u0, double h);

/// Half-width of the kernel support in units of h (infinite for Gaussian).
[[nodiscard]] double kernel_support(KernelKind kind) noexcept;

[[nodiscard]] std::string kernel_name(KernelKind kind);
[[nodiscard]] KernelKind parse_kernel(const std::string& name);

// ---------------------------------------------------------------------------
// Panel
// ---------------------------------------------------------------------------

/**
 * N subjects x k channels x T time points of a multichannel recording,
 * plus one group label per subject.
 *
 * Values are stored subject-major, then channel, then time, so that each
 * (subject, channel) series is a contiguous span. Group labels must form the
 * contiguous set {0, ..., G-1}. Immutable after construction.
 */
class Panel {
public:
    Panel() = default;
    /// An empty `group_of` puts every subject in group 0.
    Panel(int n_subjects, int n_channels, int n_time, std::vector<double> values,
          std::vector<int> group_of = {}, std::vector<std::string> subject_ids = {});

    [[nodiscard]] int n_subjects() const noexcept { return n_subjects_; }
    [[nodiscard]] int n_channels() const noexcept { return n_channels_; }
    [[nodiscard]] int n_time() const noexcept { return n_time_; }
    [[nodiscard]] int n_groups() const noexcept { return n_groups_; }

    [[nodiscard]] double operator()(int subject, int channel, int t) const noexcept {
        return values_[index(subject, channel, t)];
    }
    [[nodiscard]] std::span<const double> series(int subject, int channel) const noexcept {
        return {values_.data() + index(subject, channel, 0), static_cast<std::size_t>(n_time_)};
    }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

    [[nodiscard]] int group_of(int subject) const { return group_of_.at(subject); }
    [[nodiscard]] const std::vector<int>& groups() const noexcept { return group_of_; }
    [[nodiscard]] const std::string& subject_id(int subject) const { return subject_ids_.at(subject); }
    [[nodiscard]] const std::vector<std::string>& subject_ids() const noexcept { return subject_ids_; }

    /// First `length` time points of every subject.
    [[nodiscard]] Panel truncated(int length) const;
    /// Time points [start, start + length) of every subject.
    [[nodiscard]] Panel window(int start, int length) const;
    /// A single subject as a one-subject, one-group panel.
    [[nodiscard]] Panel subject(int n) const;
    /// Same shape and labels with replaced values.
    [[nodiscard]] Panel with_values(std::vector<double> values) const;
    /// Subjects reordered so that result subject i is this panel's subject order[i].
    [[nodiscard]] Panel reordered(std::span<const int> order) const;

    [[nodiscard]] std::size_t index(int subject, int channel, int t) const noexcept {
        return (static_cast<std::size_t>(subject) * n_channels_ + channel) * n_time_ + t;
    }

private:
    int n_subjects_ = 0;
    int n_channels_ = 0;
    int n_time_ = 0;
    int n_groups_ = 0;
    std::vector<double> values_;
    std::vector<int> group_of_;
    std::vector<std::string> subject_ids_;
};

// ---------------------------------------------------------------------------
// Reference signal
// ---------------------------------------------------------------------------

enum class ReferenceSource { Channel, Exogenous };

/// U_t = Y_{channel, t - lag} (channel-sourced, lag >= 1) or a supplied series per subject.
struct ReferenceSpec {
    ReferenceSource source = ReferenceSource::Channel;
    int channel = 0;  // 0-based
    int lag = 1;
    std::vector<std::vector<double>> exogenous;  // [subject][t], only for Exogenous

    [[nodiscard]] static ReferenceSpec from_channel(int channel, int lag) {
        return ReferenceSpec{ReferenceSource::Channel, channel, lag, {}};
    }
    [[nodiscard]] static ReferenceSpec from_series(std::vector<std::vector<double>> series) {
        return ReferenceSpec{ReferenceSource::Exogenous, 0, 0, std::move(series)};
    }
    [[nodiscard]] bool is_channel() const noexcept { return source == ReferenceSource::Channel; }

    /// Throws SpecError if the spec is not usable against `panel`.
    void validate(const Panel& panel) const;

    /// U_t for subject n; t must be >= first_usable().
    [[nodiscard]] double value(const Panel& panel, int subject, int t) const noexcept {
        return is_channel() ? panel(subject, channel, t - lag) : exogenous[subject][t];
    }
    [[nodiscard]] int first_usable() const noexcept { return is_channel() ? lag : 0; }
};

/// Reference values per subject; entries before `first_usable` are NaN and never used.
struct ReferenceSignal {
    std::vector<std::vector<double>> values;
    int first_usable = 0;
};

[[nodiscard]] ReferenceSignal extract_reference(const Panel& panel, const ReferenceSpec& spec);

// ---------------------------------------------------------------------------
// Model configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
    int p = 1;
    ReferenceSpec reference;
    KernelKind kernel = KernelKind::Epanechnikov;
    double bandwidth = 1.0;
    int grid_size = 50;
    double penalty_scale = 1.0;
    double clip_low = 0.01;
    double clip_high = 0.99;

    /// Throws InvalidArgument / InvalidBandwidth on a bad configuration.
    void validate() const;
    /// Validates against panel dimensions as well (T > max(p, d), reference in range).
    void validate(const Panel& panel) const;

    /// First 0-based time index with all lags and the reference available.
    [[nodiscard]] int first_time() const noexcept {
        return reference.is_channel() ? std::max(p, reference.lag) : p;
    }
    [[nodiscard]] int n_regressors(int n_channels) const noexcept { return n_channels * p; }
};

// ---------------------------------------------------------------------------
// Discretization of the reference support
// ---------------------------------------------------------------------------

/**
 * M equal-length segments of [lower, upper] with their midpoints.
 *
 * Segments are left-closed/right-open except the last, which is closed.
 * Values outside [lower, upper] snap to the end segments.
 */
struct ReferenceGrid {
    double lower = 0.0;
    double upper = 1.0;
    std::vector<double> points;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(points.size()); }
    [[nodiscard]] double edge(int i) const noexcept;
    [[nodiscard]] int segment_of(double u) const noexcept;

    [[nodiscard]] static ReferenceGrid uniform(double lower, double upper, int m);
};

/// Linear-interpolation sample quantile (R type 7) of an unsorted sample.
[[nodiscard]] double quantile(std::vector<double> sample, double prob);

/// Usable reference values of all subjects, pooled.
[[nodiscard]] std::vector<double> pooled_reference(const Panel& panel, const ModelConfig& config);

[[nodiscard]] ReferenceGrid build_grid(const Panel& panel, const ModelConfig& config);

}  // namespace mxfar
