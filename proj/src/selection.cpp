#include "mxfar/selection.hpp"

#include <cmath>
#include <limits>

#include "mxfar/error.hpp"
#include "mxfar/parallel.hpp"

namespace mxfar {

int default_horizon(int n_time) noexcept { return n_time / 10; }

namespace {

ReferenceSpec truncated_reference(const ReferenceSpec& ref, int length) {
    if (ref.is_channel()) return ref;
    ReferenceSpec out = ref;
    for (auto& s : out.exogenous) s.resize(length);
    return out;
}

}  // namespace

ApeResult ape_for_candidate(const Panel& panel, const ModelConfig& config, int r, int Q,
                            const FitOptions& fit_options) {
    if (r < 1 || Q < 1) throw Error(ErrorCode::InvalidArgument, "r and Q must be positive");
    const int T = panel.n_time();
    if (T <= r * Q) {
        throw Error(ErrorCode::SubseriesError, "T = " + std::to_string(T) + " must exceed rQ = " +
                                                   std::to_string(r * Q));
    }
    config.validate(panel);
    ApeResult out;
    out.per_subseries.assign(Q, 0.0);
    for (int q = 1; q <= Q; ++q) {
        const int len = T - r * q;
        ModelConfig sub = config;
        sub.bandwidth = config.bandwidth * std::pow(static_cast<double>(T) / len, 0.2);
        sub.reference = truncated_reference(config.reference, len);
        double sse = 0.0;
        try {
            const CoefficientGrid grid = fit_mxfar(panel.truncated(len), sub, fit_options);
            for (int n = 0; n < panel.n_subjects(); ++n) {
                for (int t = len; t < len + r; ++t) {
                    const Eigen::VectorXd pred = predict_one_step(grid, panel, n, t, config.reference);
                    for (int j = 0; j < panel.n_channels(); ++j) {
                        const double e = panel(n, j, t) - pred[j];
                        sse += e * e;
                    }
                }
            }
        } catch (const Error& e) {
            out.failed = true;
            out.failure = "subseries " + std::to_string(q) + ": " + e.what();
            out.ape = std::numeric_limits<double>::infinity();
            std::fill(out.per_subseries.begin() + (q - 1), out.per_subseries.end(),
                      std::numeric_limits<double>::infinity());
            return out;
        }
        out.per_subseries[q - 1] = sse;
    }
    for (double v : out.per_subseries) out.ape += v;
    return out;
}

ApeReport select_model(const Panel& panel, const ModelConfig& base, const std::vector<Candidate>& candidates,
                       const SelectionOptions& options) {
    if (candidates.empty()) throw Error(ErrorCode::SelectionError, "no candidates to evaluate");
    ApeReport report;
    report.candidates = candidates;
    report.r = options.r > 0 ? options.r : default_horizon(panel.n_time());
    report.Q = options.Q;
    if (report.r < 1) throw Error(ErrorCode::SubseriesError, "T too short for a positive horizon r");
    if (panel.n_time() <= report.r * report.Q) {
        throw Error(ErrorCode::SubseriesError, "T must exceed rQ");
    }
    report.results.resize(candidates.size());
    parallel_for(candidates.size(), options.threads, [&](std::size_t i) {
        ModelConfig config = base;
        config.bandwidth = candidates[i].bandwidth;
        config.p = candidates[i].p;
        config.reference = candidates[i].reference;
        try {
            report.results[i] = ape_for_candidate(panel, config, report.r, report.Q, options.fit);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::SubseriesError) throw;
            ApeResult failed;
            failed.failed = true;
            failed.failure = e.what();
            failed.ape = std::numeric_limits<double>::infinity();
            failed.per_subseries.assign(report.Q, std::numeric_limits<double>::infinity());
            report.results[i] = std::move(failed);
        }
    });
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (report.results[i].failed) continue;
        if (report.best < 0) {
            report.best = static_cast<int>(i);
            continue;
        }
        const auto& cur = report.results[report.best];
        const auto& cb = candidates[report.best];
        const auto& ci = candidates[i];
        const double a = report.results[i].ape;
        if (a < cur.ape || (a == cur.ape && (ci.p < cb.p || (ci.p == cb.p && ci.bandwidth < cb.bandwidth)))) {
            report.best = static_cast<int>(i);
        }
    }
    if (report.best < 0) throw Error(ErrorCode::SelectionError, "every candidate failed");
    return report;
}

ApeReport select_model(const Panel& panel, const ModelConfig& base, const std::vector<double>& h_grid,
                       const std::vector<int>& p_grid, const std::vector<ReferenceSpec>& references,
                       const SelectionOptions& options) {
    std::vector<Candidate> candidates;
    for (const auto& ref : references) {
        for (int p : p_grid) {
            for (double h : h_grid) candidates.push_back({h, p, ref});
        }
    }
    return select_model(panel, base, candidates, options);
}

}  // namespace mxfar
