#pragma once

#include <string>
#include <vector>

#include "mxfar/core.hpp"
#include "mxfar/estimator.hpp"

namespace mxfar {

struct ApeResult {
    double ape = 0.0;
    std::vector<double> per_subseries;  ///< APE_q for q = 1..Q
    bool failed = false;
    std::string failure;
};

/// Default evaluation horizon r = floor(0.1 T).
[[nodiscard]] int default_horizon(int n_time) noexcept;

/**
 * Accumulated prediction error of one candidate: for q = 1..Q the model is
 * refitted on the first T - rq points with bandwidth h [T / (T - rq)]^{1/5}
 * and predicts the next r points one step ahead from observed lags. A failed
 * refit marks the candidate failed with infinite APE.
 */
[[nodiscard]] ApeResult ape_for_candidate(const Panel& panel, const ModelConfig& config, int r, int Q,
                                          const FitOptions& fit_options = {});

struct Candidate {
    double bandwidth = 1.0;
    int p = 1;
    ReferenceSpec reference;
};

struct ApeReport {
    std::vector<Candidate> candidates;
    std::vector<ApeResult> results;
    int best = -1;
    int r = 0;
    int Q = 4;
};

struct SelectionOptions {
    int r = 0;  ///< 0 selects floor(0.1 T)
    int Q = 4;
    int threads = 0;
    FitOptions fit;
};

/**
 * Evaluates every (h, p, reference) combination of the grids, in that nesting
 * order (reference outermost, h innermost). `base` supplies kernel, grid size,
 * lambda and clipping. Ties break to smaller p, then smaller h, then order.
 */
[[nodiscard]] ApeReport select_model(const Panel& panel, const ModelConfig& base,
                                     const std::vector<double>& h_grid, const std::vector<int>& p_grid,
                                     const std::vector<ReferenceSpec>& references,
                                     const SelectionOptions& options = {});

/// Candidate list form; the order of `candidates` is the final tie-break.
[[nodiscard]] ApeReport select_model(const Panel& panel, const ModelConfig& base,
                                     const std::vector<Candidate>& candidates,
                                     const SelectionOptions& options = {});

}  // namespace mxfar
