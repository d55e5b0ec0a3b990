#include "mxfar/henderson.hpp"

#include <cmath>
#include <string>

#include "mxfar/error.hpp"

namespace mxfar {

namespace {

constexpr double kJitter = 1e-8;
constexpr double kResidualTolerance = 1e-8;
constexpr double kRefineTarget = 1e-14;
constexpr int kMaxRefinements = 12;
constexpr double kMinRcond = 1e-15;

double diagonal_scale(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    return m.diagonal().cwiseAbs().mean();
}

// Relative ridge so that the jitter is meaningful for any data scale.
double jitter_for(const Eigen::MatrixXd& m) { return kJitter * diagonal_scale(m); }

// Right-hand side of the full system in block form.
struct BlockVector {
    std::vector<Eigen::VectorXd> fixed;   // per group
    std::vector<Eigen::VectorXd> random;  // per subject
};

double squared_norm(const BlockVector& v) {
    double s = 0.0;
    for (const auto& x : v.fixed) s += x.squaredNorm();
    for (const auto& x : v.random) s += x.squaredNorm();
    return s;
}

void validate_inputs(std::span<const SubjectMoments> subjects, int n_groups, int response) {
    if (subjects.empty()) throw Error(ErrorCode::EmptyDesign, "no subjects in design");
    if (n_groups < 1) throw Error(ErrorCode::InvalidArgument, "at least one group is required");
    const auto q = subjects.front().gram.rows();
    for (const auto& s : subjects) {
        if (s.gram.rows() != q || s.gram.cols() != q || s.cross.rows() != q) {
            throw Error(ErrorCode::InvalidArgument, "subject moments have inconsistent shapes");
        }
        if (response < 0 || response >= s.cross.cols()) {
            throw Error(ErrorCode::InvalidArgument, "response index out of range");
        }
        if (s.group < 0 || s.group >= n_groups) {
            throw Error(ErrorCode::InvalidArgument, "subject group out of range");
        }
    }
}

/// Factorizations of the (jittered) absorbed system; reusable for any right-hand side.
class AbsorbedSystem {
public:
    AbsorbedSystem(std::span<const SubjectMoments> subjects, int n_groups,
                   const Eigen::VectorXd& penalty)
        : subjects_(subjects), n_groups_(n_groups) {
        const auto q = subjects.front().gram.rows();
        subject_penalty_.reserve(subjects.size());
        subject_factor_.reserve(subjects.size());
        std::vector<Eigen::MatrixXd> schur(n_groups, Eigen::MatrixXd::Zero(q, q));
        for (std::size_t n = 0; n < subjects.size(); ++n) {
            const auto& s = subjects[n];
            Eigen::MatrixXd block = s.gram;
            block.diagonal() += penalty;
            const double eps = jitter_for(block);
            Eigen::VectorXd eff_penalty = penalty.array() + eps;
            block.diagonal().array() += eps;
            Eigen::LDLT<Eigen::MatrixXd> factor(block);
            if (factor.info() != Eigen::Success || !(factor.rcond() > kMinRcond)) {
                throw Error(ErrorCode::SingularSystem,
                            "random-effect block of subject " + std::to_string(n) + " is singular");
            }
            // C (C + P)^{-1} C subtracted from C equals P (C + P)^{-1} C.
            schur[s.group] += eff_penalty.asDiagonal() * factor.solve(s.gram);
            subject_penalty_.push_back(std::move(eff_penalty));
            subject_factor_.push_back(std::move(factor));
        }
        group_factor_.reserve(n_groups);
        for (int g = 0; g < n_groups; ++g) {
            Eigen::MatrixXd sym = 0.5 * (schur[g] + schur[g].transpose());
            sym.diagonal().array() += jitter_for(sym);
            Eigen::LDLT<Eigen::MatrixXd> factor(sym);
            if (diagonal_scale(sym) == 0.0 || factor.info() != Eigen::Success ||
                !(factor.rcond() > kMinRcond)) {
                throw Error(ErrorCode::SingularSystem,
                            "absorbed fixed-effect block of group " + std::to_string(g) +
                                " is singular");
            }
            group_factor_.push_back(std::move(factor));
        }
    }

    [[nodiscard]] BlockVector solve(const BlockVector& rhs) const {
        BlockVector x;
        x.fixed.resize(n_groups_);
        x.random.resize(subjects_.size());
        std::vector<Eigen::VectorXd> reduced(n_groups_);
        for (int g = 0; g < n_groups_; ++g) reduced[g] = rhs.fixed[g];
        // f_g - sum C D^{-1} e = (f_g - sum e) + sum P D^{-1} e
        for (std::size_t n = 0; n < subjects_.size(); ++n) {
            const int g = subjects_[n].group;
            reduced[g] -= rhs.random[n];
            reduced[g] += subject_penalty_[n].asDiagonal() * subject_factor_[n].solve(rhs.random[n]);
        }
        for (int g = 0; g < n_groups_; ++g) x.fixed[g] = group_factor_[g].solve(reduced[g]);
        for (std::size_t n = 0; n < subjects_.size(); ++n) {
            const auto& s = subjects_[n];
            x.random[n] = subject_factor_[n].solve(rhs.random[n] - s.gram * x.fixed[s.group]);
        }
        return x;
    }

private:
    std::span<const SubjectMoments> subjects_;
    int n_groups_;
    std::vector<Eigen::VectorXd> subject_penalty_;
    std::vector<Eigen::LDLT<Eigen::MatrixXd>> subject_factor_;
    std::vector<Eigen::LDLT<Eigen::MatrixXd>> group_factor_;
};

BlockVector full_rhs(std::span<const SubjectMoments> subjects, int n_groups, int response) {
    const auto q = subjects.front().gram.rows();
    BlockVector rhs;
    rhs.fixed.assign(n_groups, Eigen::VectorXd::Zero(q));
    rhs.random.reserve(subjects.size());
    for (const auto& s : subjects) {
        rhs.fixed[s.group] += s.cross.col(response);
        rhs.random.push_back(s.cross.col(response));
    }
    return rhs;
}

BlockVector full_residual(std::span<const SubjectMoments> subjects, const Eigen::VectorXd& penalty,
                          const BlockVector& rhs, const HendersonSolution& x) {
    BlockVector r;
    r.fixed = rhs.fixed;
    r.random.resize(subjects.size());
    for (std::size_t n = 0; n < subjects.size(); ++n) {
        const auto& s = subjects[n];
        const Eigen::VectorXd fitted = s.gram * (x.theta[s.group] + x.gamma[n]);
        r.fixed[s.group] -= fitted;
        r.random[n] = rhs.random[n] - fitted - penalty.cwiseProduct(x.gamma[n]);
    }
    return r;
}

}  // namespace

SubjectMoments accumulate_moments(const Eigen::MatrixXd& rows, const Eigen::VectorXd& weights,
                                  const Eigen::MatrixXd& responses, int group) {
    if (rows.rows() != weights.size() || rows.rows() != responses.rows()) {
        throw Error(ErrorCode::InvalidArgument, "design, weights and responses disagree in rows");
    }
    SubjectMoments m;
    m.group = group;
    const Eigen::VectorXd sw = weights.cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd zr = sw.asDiagonal() * rows;
    const Eigen::MatrixXd yr = sw.asDiagonal() * responses;
    m.gram = zr.transpose() * zr;
    m.cross = zr.transpose() * yr;
    m.yy = yr.colwise().squaredNorm().transpose();
    m.weight_sum = weights.sum();
    m.max_weight = weights.size() > 0 ? weights.maxCoeff() : 0.0;
    m.n_nonzero = static_cast<int>((weights.array() > 0.0).count());
    return m;
}

double henderson_residual(std::span<const SubjectMoments> subjects, const Eigen::VectorXd& penalty,
                          int response, const HendersonSolution& solution) {
    const int n_groups = static_cast<int>(solution.theta.size());
    const auto rhs = full_rhs(subjects, n_groups, response);
    return std::sqrt(squared_norm(full_residual(subjects, penalty, rhs, solution)));
}

HendersonSolution solve_henderson_block(std::span<const SubjectMoments> subjects, int n_groups,
                                        const Eigen::VectorXd& penalty, int response) {
    validate_inputs(subjects, n_groups, response);
    const auto q = subjects.front().gram.rows();
    if (penalty.size() != q) {
        throw Error(ErrorCode::InvalidArgument, "penalty length must match the random-effect block");
    }
    if ((penalty.array() < 0.0).any() || !penalty.allFinite()) {
        throw Error(ErrorCode::InvalidArgument, "penalty entries must be finite and nonnegative");
    }

    const AbsorbedSystem system(subjects, n_groups, penalty);
    const BlockVector rhs = full_rhs(subjects, n_groups, response);
    const double rhs_norm = std::sqrt(squared_norm(rhs));

    HendersonSolution x;
    {
        auto first = system.solve(rhs);
        x.theta = std::move(first.fixed);
        x.gamma = std::move(first.random);
    }
    // Iterative refinement against the unjittered system.
    double res_norm = 0.0;
    for (int it = 0;; ++it) {
        const BlockVector res = full_residual(subjects, penalty, rhs, x);
        res_norm = std::sqrt(squared_norm(res));
        if (res_norm <= kRefineTarget * rhs_norm || it == kMaxRefinements) break;
        const BlockVector delta = system.solve(res);
        for (int g = 0; g < n_groups; ++g) x.theta[g] += delta.fixed[g];
        for (std::size_t n = 0; n < subjects.size(); ++n) x.gamma[n] += delta.random[n];
    }
    if (!(res_norm <= kResidualTolerance * rhs_norm) && rhs_norm > 0.0) {
        throw Error(ErrorCode::SingularSystem,
                    "Henderson system residual " + std::to_string(res_norm) +
                        " exceeds tolerance; design is near-singular");
    }
    x.residual_norm = res_norm;
    x.rhs_norm = rhs_norm;
    return x;
}

HendersonSolution solve_fixed_effects(std::span<const SubjectMoments> subjects, int n_groups,
                                      int response) {
    validate_inputs(subjects, n_groups, response);
    const auto q = subjects.front().gram.rows();
    std::vector<Eigen::MatrixXd> gram(n_groups, Eigen::MatrixXd::Zero(q, q));
    std::vector<Eigen::VectorXd> rhs(n_groups, Eigen::VectorXd::Zero(q));
    for (const auto& s : subjects) {
        gram[s.group] += s.gram;
        rhs[s.group] += s.cross.col(response);
    }
    HendersonSolution x;
    x.gamma.assign(subjects.size(), Eigen::VectorXd::Zero(q));
    double res2 = 0.0;
    double rhs2 = 0.0;
    for (int g = 0; g < n_groups; ++g) {
        Eigen::MatrixXd jittered = gram[g];
        const double scale = diagonal_scale(jittered);
        jittered.diagonal().array() += kJitter * scale;
        Eigen::LDLT<Eigen::MatrixXd> factor(jittered);
        if (scale == 0.0 || factor.info() != Eigen::Success || !(factor.rcond() > kMinRcond)) {
            throw Error(ErrorCode::SingularDesign,
                        "normal matrix of group " + std::to_string(g) + " is singular");
        }
        Eigen::VectorXd theta = factor.solve(rhs[g]);
        Eigen::VectorXd res = rhs[g] - gram[g] * theta;
        for (int it = 0; it < kMaxRefinements && res.norm() > kRefineTarget * rhs[g].norm(); ++it) {
            theta += factor.solve(res);
            res = rhs[g] - gram[g] * theta;
        }
        res2 += res.squaredNorm();
        rhs2 += rhs[g].squaredNorm();
        x.theta.push_back(std::move(theta));
    }
    x.residual_norm = std::sqrt(res2);
    x.rhs_norm = std::sqrt(rhs2);
    if (!(x.residual_norm <= kResidualTolerance * x.rhs_norm) && x.rhs_norm > 0.0) {
        throw Error(ErrorCode::SingularDesign, "weighted normal equations are near-singular");
    }
    return x;
}

}  // namespace mxfar
