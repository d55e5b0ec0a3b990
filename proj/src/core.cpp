#include "mxfar/core.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "mxfar/error.hpp"

namespace mxfar {

double kernel_value(KernelKind kind, double u) noexcept {
    switch (kind) {
        case KernelKind::Epanechnikov: {
            const double a = std::abs(u);
            return a <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
        }
        case KernelKind::Gaussian:
            return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    }
    return 0.0;
}

double scaled_kernel_weight(KernelKind kind, double u, double u0, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw Error(ErrorCode::InvalidBandwidth, "bandwidth must be positive and finite");
    }
    return kernel_value(kind, (u - u0) / h) / h;
}

double kernel_support(KernelKind kind) noexcept {
    return kind == KernelKind::Epanechnikov ? 1.0 : std::numeric_limits<double>::infinity();
}

std::string kernel_name(KernelKind kind) {
    return kind == KernelKind::Epanechnikov ? "epanechnikov" : "gaussian";
}

KernelKind parse_kernel(const std::string& name) {
    if (name == "epanechnikov") return KernelKind::Epanechnikov;
    if (name == "gaussian") return KernelKind::Gaussian;
    throw Error(ErrorCode::InvalidArgument, "unknown kernel '" + name + "'");
}

// ---------------------------------------------------------------------------

Panel::Panel(int n_subjects, int n_channels, int n_time, std::vector<double> values,
             std::vector<int> group_of, std::vector<std::string> subject_ids)
    : n_subjects_(n_subjects),
      n_channels_(n_channels),
      n_time_(n_time),
      values_(std::move(values)),
      group_of_(std::move(group_of)),
      subject_ids_(std::move(subject_ids)) {
    if (n_subjects <= 0 || n_channels <= 0 || n_time <= 0) {
        throw Error(ErrorCode::InvalidArgument, "panel dimensions must be positive");
    }
    const auto expected = static_cast<std::size_t>(n_subjects) * n_channels * n_time;
    if (values_.size() != expected) {
        throw Error(ErrorCode::InvalidArgument,
                    "panel expects " + std::to_string(expected) + " values, got " +
                        std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw Error(ErrorCode::InvalidArgument, "panel contains a non-finite value");
        }
    }
    if (group_of_.empty()) group_of_.assign(n_subjects, 0);
    if (static_cast<int>(group_of_.size()) != n_subjects) {
        throw Error(ErrorCode::InvalidArgument, "one group label per subject is required");
    }
    std::set<int> labels(group_of_.begin(), group_of_.end());
    if (*labels.begin() != 0 || *labels.rbegin() != static_cast<int>(labels.size()) - 1) {
        throw Error(ErrorCode::InvalidArgument, "group labels must be contiguous from 0");
    }
    n_groups_ = static_cast<int>(labels.size());
    if (subject_ids_.empty()) {
        for (int n = 0; n < n_subjects; ++n) subject_ids_.push_back(std::to_string(n + 1));
    }
    if (static_cast<int>(subject_ids_.size()) != n_subjects) {
        throw Error(ErrorCode::InvalidArgument, "one identifier per subject is required");
    }
    if (std::set<std::string>(subject_ids_.begin(), subject_ids_.end()).size() != subject_ids_.size()) {
        throw Error(ErrorCode::InvalidArgument, "subject identifiers must be unique");
    }
}

Panel Panel::window(int start, int length) const {
    if (start < 0 || length <= 0 || start + length > n_time_) {
        throw Error(ErrorCode::IndexError, "time window out of range");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_subjects_) * n_channels_ * length);
    for (int n = 0; n < n_subjects_; ++n) {
        for (int j = 0; j < n_channels_; ++j) {
            auto s = series(n, j);
            out.insert(out.end(), s.begin() + start, s.begin() + start + length);
        }
    }
    return Panel(n_subjects_, n_channels_, length, std::move(out), group_of_, subject_ids_);
}

Panel Panel::truncated(int length) const { return window(0, length); }

Panel Panel::subject(int n) const {
    if (n < 0 || n >= n_subjects_) throw Error(ErrorCode::IndexError, "subject out of range");
    const auto begin = values_.begin() + static_cast<std::ptrdiff_t>(index(n, 0, 0));
    std::vector<double> out(begin, begin + static_cast<std::ptrdiff_t>(n_channels_) * n_time_);
    return Panel(1, n_channels_, n_time_, std::move(out), {0}, {subject_ids_[n]});
}

Panel Panel::with_values(std::vector<double> values) const {
    return Panel(n_subjects_, n_channels_, n_time_, std::move(values), group_of_, subject_ids_);
}

Panel Panel::reordered(std::span<const int> order) const {
    if (static_cast<int>(order.size()) != n_subjects_) {
        throw Error(ErrorCode::InvalidArgument, "reorder needs a full permutation");
    }
    std::vector<double> out;
    out.reserve(values_.size());
    std::vector<int> groups;
    std::vector<std::string> ids;
    for (int src : order) {
        const auto begin = values_.begin() + static_cast<std::ptrdiff_t>(index(src, 0, 0));
        out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(n_channels_) * n_time_);
        groups.push_back(group_of_.at(src));
        ids.push_back(subject_ids_.at(src));
    }
    return Panel(n_subjects_, n_channels_, n_time_, std::move(out), std::move(groups),
                 std::move(ids));
}

// ---------------------------------------------------------------------------

void ReferenceSpec::validate(const Panel& panel) const {
    if (is_channel()) {
        if (channel < 0 || channel >= panel.n_channels()) {
            throw Error(ErrorCode::SpecError, "reference channel out of range");
        }
        if (lag < 1) throw Error(ErrorCode::SpecError, "reference lag must be at least 1");
        if (lag >= panel.n_time()) {
            throw Error(ErrorCode::SpecError, "reference lag leaves no usable time points");
        }
        return;
    }
    if (static_cast<int>(exogenous.size()) != panel.n_subjects()) {
        throw Error(ErrorCode::SpecError, "exogenous reference needs one series per subject");
    }
    for (const auto& s : exogenous) {
        if (static_cast<int>(s.size()) != panel.n_time()) {
            throw Error(ErrorCode::SpecError, "exogenous reference length differs from T");
        }
        for (double v : s) {
            if (!std::isfinite(v)) throw Error(ErrorCode::SpecError, "non-finite exogenous value");
        }
    }
}

ReferenceSignal extract_reference(const Panel& panel, const ReferenceSpec& spec) {
    spec.validate(panel);
    ReferenceSignal out;
    if (!spec.is_channel()) {
        out.values = spec.exogenous;
        out.first_usable = 0;
        return out;
    }
    out.first_usable = spec.lag;
    out.values.resize(panel.n_subjects());
    for (int n = 0; n < panel.n_subjects(); ++n) {
        auto& u = out.values[n];
        u.assign(panel.n_time(), std::numeric_limits<double>::quiet_NaN());
        auto y = panel.series(n, spec.channel);
        for (int t = spec.lag; t < panel.n_time(); ++t) u[t] = y[t - spec.lag];
    }
    return out;
}

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
    if (p < 1) throw Error(ErrorCode::InvalidArgument, "lag order p must be at least 1");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        throw Error(ErrorCode::InvalidBandwidth, "bandwidth must be positive and finite");
    }
    if (grid_size < 2) throw Error(ErrorCode::InvalidArgument, "grid size must be at least 2");
    if (!(penalty_scale > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "penalty scale lambda must be positive");
    }
    if (!(clip_low >= 0.0 && clip_high <= 1.0 && clip_low < clip_high)) {
        throw Error(ErrorCode::InvalidArgument, "grid clip quantiles must satisfy 0<=low<high<=1");
    }
}

void ModelConfig::validate(const Panel& panel) const {
    validate();
    reference.validate(panel);
    if (first_time() >= panel.n_time()) {
        throw Error(ErrorCode::InvalidArgument, "T must exceed max(p, d)");
    }
}

// ---------------------------------------------------------------------------

double ReferenceGrid::edge(int i) const noexcept {
    const int m = size();
    if (i <= 0) return lower;
    if (i >= m) return upper;
    return lower + (upper - lower) * static_cast<double>(i) / static_cast<double>(m);
}

int ReferenceGrid::segment_of(double u) const noexcept {
    const int m = size();
    if (!(u > lower)) return 0;
    if (u >= upper) return m - 1;
    int i = static_cast<int>(std::floor((u - lower) / (upper - lower) * m));
    i = std::clamp(i, 0, m - 1);
    // Correct floating-point drift against the stored edges.
    while (i > 0 && u < edge(i)) --i;
    while (i < m - 1 && u >= edge(i + 1)) ++i;
    return i;
}

ReferenceGrid ReferenceGrid::uniform(double lower, double upper, int m) {
    if (m < 1) throw Error(ErrorCode::InvalidArgument, "grid needs at least one segment");
    if (!(upper > lower)) throw Error(ErrorCode::DegenerateReference, "reference range is empty");
    ReferenceGrid g;
    g.lower = lower;
    g.upper = upper;
    g.points.resize(m);
    for (int i = 0; i < m; ++i) g.points[i] = 0.5 * (g.edge(i) + g.edge(i + 1));
    return g;
}

double quantile(std::vector<double> sample, double prob) {
    if (sample.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
    std::sort(sample.begin(), sample.end());
    const double h = (static_cast<double>(sample.size()) - 1.0) * std::clamp(prob, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sample.size() - 1);
    return sample[lo] + (h - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

std::vector<double> pooled_reference(const Panel& panel, const ModelConfig& config) {
    config.validate(panel);
    const int t0 = config.first_time();
    std::vector<double> pooled;
    pooled.reserve(static_cast<std::size_t>(panel.n_subjects()) * (panel.n_time() - t0));
    for (int n = 0; n < panel.n_subjects(); ++n) {
        for (int t = t0; t < panel.n_time(); ++t) pooled.push_back(config.reference.value(panel, n, t));
    }
    return pooled;
}

ReferenceGrid build_grid(const Panel& panel, const ModelConfig& config) {
    auto pooled = pooled_reference(panel, config);
    std::sort(pooled.begin(), pooled.end());
    if (!(pooled.back() > pooled.front())) {
        throw Error(ErrorCode::DegenerateReference, "reference signal is constant");
    }
    const double lo = quantile(pooled, config.clip_low);
    const double hi = quantile(pooled, config.clip_high);
    if (!(hi > lo)) {
        throw Error(ErrorCode::DegenerateReference, "clipped reference range is empty");
    }
    return ReferenceGrid::uniform(lo, hi, config.grid_size);
}

}  // namespace mxfar
