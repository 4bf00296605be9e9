#pragma once

#include <Eigen/Dense>
#include <optional>
#include <ostream>
#include <vector>

#include "gridscreen/power_flow.hpp"

namespace gridscreen {

// Per-bus demand growth direction (pu), target minus base. Positive entries
// mean the demand at that bus grows as lambda increases.
struct TransferSchedule {
    Eigen::VectorXd dp;
    Eigen::VectorXd dq;

    bool is_zero() const { return dp.isZero(0.0) && dq.isZero(0.0); }
};

enum class CpfScheme { Natural, PseudoArcLength };

struct CpfOptions {
    CpfScheme scheme = CpfScheme::PseudoArcLength;
    double step = 0.1;
    double step_min = 1e-5;
    double step_max = 0.5;
    bool adapt = true;
    double corrector_tol = 1e-8;
    int max_steps = 500;
};

struct CpfPoint {
    PFState state;
    double lambda = 0.0;
    double dlambda = 0.0;  // lambda component of the tangent at this point
};

enum class CpfTermination { NoseDetected, TargetReached, StepUnderflow, CorrectorFailed };

struct CpfTrace {
    std::vector<CpfPoint> points;
    double max_lambda = 0.0;
    PFState critical_state;
    CpfTermination terminated = CpfTermination::TargetReached;
};

struct BaseCaseDiverged : GridscreenError {
    BaseCaseDiverged() : GridscreenError("base case power flow did not converge") {}
};
struct SingularAugmentedSystem : GridscreenError {
    SingularAugmentedSystem() : GridscreenError("augmented predictor system is singular") {}
};

inline TransferSchedule transfer_schedule(const NetworkCase& base, double target_scale) {
    if (!(target_scale > 1.0)) throw GridscreenError("transfer_schedule: target_scale must exceed 1");
    const int n = base.n();
    TransferSchedule ts;
    ts.dp = Eigen::VectorXd::Zero(n);
    ts.dq = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        ts.dp[i] = (target_scale - 1.0) * base.buses[i].pd / base.base_mva;
        ts.dq[i] = (target_scale - 1.0) * base.buses[i].qd / base.base_mva;
    }
    return ts;
}

namespace detail {

// Schedule mapped onto mismatch rows; this is d f / d lambda.
inline Eigen::VectorXd schedule_rows(const NetworkCase& c, const TransferSchedule& ts) {
    const MismatchIndex idx(c);
    Eigen::VectorXd d(idx.rows());
    int r = 0;
    for (int i : idx.pvpq) d[r++] = ts.dp[i];
    for (int i : idx.pq) d[r++] = ts.dq[i];
    return d;
}

// f(x, lambda) = g(x) + lambda * d  (demand growth lowers scheduled injection)
inline Eigen::VectorXd cpf_mismatch(const NetworkCase& c, const PFState& s, double lambda,
                                    const Eigen::VectorXd& d, const Eigen::MatrixXcd& ybus) {
    return mismatch(c, s, ybus) + lambda * d;
}

// Row of the parameterization constraint in the augmented system.
inline Eigen::VectorXd param_row(CpfScheme scheme, const Eigen::VectorXd& tangent, int dim) {
    if (scheme == CpfScheme::Natural || tangent.size() == 0) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
        e[dim - 1] = 1.0;
        return e;
    }
    return tangent;
}

// Solve [[J, d], [row^T]] z = e_last and normalize.
inline Eigen::VectorXd solve_tangent(const NetworkCase& c, const PFState& s, const Eigen::VectorXd& d,
                                     const Eigen::MatrixXcd& ybus, const Eigen::VectorXd& row) {
    const Eigen::MatrixXd jac = jacobian(c, s, ybus);
    const int m = static_cast<int>(jac.rows());
    Eigen::MatrixXd aug(m + 1, m + 1);
    aug.topLeftCorner(m, m) = jac;
    aug.topRightCorner(m, 1) = d;
    aug.bottomRows(1) = row.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
    rhs[m] = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(aug);
    if (!lu.isInvertible()) throw SingularAugmentedSystem();
    Eigen::VectorXd z = lu.solve(rhs);
    if (!z.allFinite()) throw SingularAugmentedSystem();
    return z / z.norm();
}

inline void apply_delta(const NetworkCase& c, PFState& s, double& lambda, const Eigen::VectorXd& dz, double scale) {
    const MismatchIndex idx(c);
    const int npvpq = static_cast<int>(idx.pvpq.size());
    for (int k = 0; k < npvpq; ++k) s.va[idx.pvpq[k]] += scale * dz[k];
    for (int k = 0; k < static_cast<int>(idx.pq.size()); ++k) s.vm[idx.pq[k]] += scale * dz[npvpq + k];
    lambda += scale * dz[dz.size() - 1];
}

}  // namespace detail

struct PredictorResult {
    PFState state_hat;
    double lambda_hat = 0.0;
    Eigen::VectorXd tangent;  // normalized, length rows+1
};

struct CorrectorResult {
    PFState state;
    double lambda = 0.0;
    int iterations = 0;
};

// Tangent step: z solves the augmented system with rhs (0,...,0,1), gets
// normalized, and advances the point by opts.step * z_bar. Orientation
// continuity with prev_tangent is enforced by the constraint row itself
// (prev^T z = 1 > 0).
inline PredictorResult predictor(const PFState& state, double lambda, const Eigen::VectorXd& prev_tangent,
                                 const NetworkCase& c, const TransferSchedule& ts, const CpfOptions& opts) {
    const Eigen::MatrixXcd ybus = build_ybus(c);
    const Eigen::VectorXd d = detail::schedule_rows(c, ts);
    const MismatchIndex idx(c);
    const int dim = idx.rows() + 1;
    const Eigen::VectorXd row = detail::param_row(opts.scheme, prev_tangent, dim);
    PredictorResult out;
    out.tangent = detail::solve_tangent(c, state, d, ybus, row);
    out.state_hat = state;
    out.lambda_hat = lambda;
    detail::apply_delta(c, out.state_hat, out.lambda_hat, out.tangent, opts.step);
    return out;
}

// Newton iteration on [f(x,lambda); p(x,lambda)] = 0. Natural fixes lambda at
// lambda_hat, pseudo arc length enforces tangent^T ([x;l] - [x_hat;l_hat]) = 0.
// Divergence is reported as nullopt so the step control can halve.
inline std::optional<CorrectorResult> corrector(const PFState& state_hat, double lambda_hat,
                                                const Eigen::VectorXd& tangent, const NetworkCase& c,
                                                const TransferSchedule& ts, const CpfOptions& opts) {
    const Eigen::MatrixXcd ybus = build_ybus(c);
    const Eigen::VectorXd d = detail::schedule_rows(c, ts);
    const MismatchIndex idx(c);
    const int m = idx.rows();
    const Eigen::VectorXd row = detail::param_row(opts.scheme, tangent, m + 1);

    CorrectorResult res;
    res.state = state_hat;
    res.lambda = lambda_hat;
    constexpr int kMaxCorrector = 10;
    for (int it = 0; it <= kMaxCorrector; ++it) {
        Eigen::VectorXd f = detail::cpf_mismatch(c, res.state, res.lambda, d, ybus);
        double p = 0.0;
        if (opts.scheme == CpfScheme::PseudoArcLength) {
            const MismatchIndex ix(c);
            int r = 0;
            for (int i : ix.pvpq) p += row[r++] * (res.state.va[i] - state_hat.va[i]);
            for (int i : ix.pq) p += row[r++] * (res.state.vm[i] - state_hat.vm[i]);
            p += row[m] * (res.lambda - lambda_hat);
        } else {
            p = res.lambda - lambda_hat;
        }
        const double err = std::max(f.cwiseAbs().maxCoeff(), std::abs(p));
        if (!std::isfinite(err)) return std::nullopt;
        if (err <= opts.corrector_tol) {
            res.iterations = it;
            return res;
        }
        if (it == kMaxCorrector) return std::nullopt;

        Eigen::MatrixXd aug(m + 1, m + 1);
        aug.topLeftCorner(m, m) = jacobian(c, res.state, ybus);
        aug.topRightCorner(m, 1) = d;
        aug.bottomRows(1) = row.transpose();
        Eigen::VectorXd rhs(m + 1);
        rhs.head(m) = -f;
        rhs[m] = -p;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(aug);
        if (!lu.isInvertible()) return std::nullopt;
        const Eigen::VectorXd dz = lu.solve(rhs);
        if (!dz.allFinite()) return std::nullopt;
        detail::apply_delta(c, res.state, res.lambda, dz, 1.0);
    }
    return std::nullopt;
}

// Safety cap far beyond any schedule target; a trace that climbs this high
// has no nose worth refining.
inline constexpr double kLambdaCap = 10.0;

// Trace the nose curve from the base solution. Terminates NoseDetected once
// the corrected tangent's dlambda crosses <= 0 and the step-bisection
// refinement has shrunk below step_min; max_lambda is the lambda of the last
// pre-nose corrected point.
inline CpfTrace run_cpf(const NetworkCase& c, const TransferSchedule& ts, const CpfOptions& opts) {
    const PFSolution base = solve_newton(c, flat_start(c), opts.corrector_tol, 30);
    if (!base.converged) throw BaseCaseDiverged();

    CpfTrace trace;
    trace.critical_state = base.state;
    if (ts.is_zero()) {
        trace.points.push_back({base.state, 0.0, 0.0});
        trace.max_lambda = 0.0;
        trace.terminated = CpfTermination::TargetReached;
        return trace;
    }

    const Eigen::MatrixXcd ybus = build_ybus(c);
    const Eigen::VectorXd d = detail::schedule_rows(c, ts);
    const MismatchIndex idx(c);
    const int dim = idx.rows() + 1;

    PFState cur = base.state;
    double cur_lambda = 0.0;
    Eigen::VectorXd prev_tangent = detail::param_row(CpfScheme::Natural, {}, dim);  // e_lambda seed
    {
        const Eigen::VectorXd z0 =
            detail::solve_tangent(c, cur, d, ybus, detail::param_row(opts.scheme, prev_tangent, dim));
        trace.points.push_back({cur, 0.0, z0[dim - 1]});
        prev_tangent = z0;
    }

    double alpha = opts.step;
    bool nose_seen = false;
    std::optional<CpfTermination> term;

    for (int step = 0; step < opts.max_steps; ++step) {
        if (alpha < opts.step_min) {
            term = nose_seen ? CpfTermination::NoseDetected : CpfTermination::StepUnderflow;
            break;
        }
        CpfOptions step_opts = opts;
        step_opts.step = alpha;

        PredictorResult pred;
        try {
            pred = predictor(cur, cur_lambda, prev_tangent, c, ts, step_opts);
        } catch (const SingularAugmentedSystem&) {
            alpha *= 0.5;
            continue;
        }
        const auto corr = corrector(pred.state_hat, pred.lambda_hat, pred.tangent, c, ts, step_opts);
        if (!corr || corr->lambda <= cur_lambda) {
            alpha *= 0.5;
            continue;
        }
        Eigen::VectorXd znew;
        try {
            znew = detail::solve_tangent(c, corr->state, d, ybus,
                                         detail::param_row(opts.scheme, pred.tangent, dim));
        } catch (const SingularAugmentedSystem&) {
            alpha *= 0.5;
            continue;
        }
        if (znew[dim - 1] <= 0.0) {
            nose_seen = true;
            alpha *= 0.5;
            continue;
        }

        cur = corr->state;
        cur_lambda = corr->lambda;
        prev_tangent = znew;
        trace.points.push_back({cur, cur_lambda, znew[dim - 1]});
        if (cur_lambda >= kLambdaCap) {
            term = CpfTermination::TargetReached;
            break;
        }
        if (opts.adapt && !nose_seen && corr->iterations <= 3) alpha = std::min(alpha * 1.5, opts.step_max);
    }

    if (!term) term = nose_seen ? CpfTermination::NoseDetected : CpfTermination::StepUnderflow;
    trace.terminated = *term;
    trace.max_lambda = cur_lambda;
    trace.critical_state = cur;
    return trace;
}

inline void dump_cpf_trace_csv(const CpfTrace& trace, const NetworkCase& c, std::ostream& os) {
    os << "step,lambda,dlambda,vm_min_bus,vm_min\n";
    for (std::size_t k = 0; k < trace.points.size(); ++k) {
        const CpfPoint& p = trace.points[k];
        int arg = 0;
        const double vmin = p.state.vm.minCoeff(&arg);
        os << k << ',' << p.lambda << ',' << p.dlambda << ',' << c.buses[arg].id << ',' << vmin << '\n';
    }
}

}  // namespace gridscreen
