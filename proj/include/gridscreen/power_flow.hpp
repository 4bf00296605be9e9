#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "gridscreen/case_model.hpp"

namespace gridscreen {

struct PFState {
    Eigen::VectorXd va;  // bus angles, rad
    Eigen::VectorXd vm;  // bus magnitudes, pu
};

struct PFSolution {
    PFState state;
    int iterations = 0;
    bool converged = false;
    double max_mismatch = 0.0;  // pu, infinity norm
};

// Row layout of the mismatch vector: P rows for [pv; pq] buses, then Q rows
// for pq buses (MATPOWER ordering).
struct MismatchIndex {
    std::vector<int> pv, pq, pvpq;

    explicit MismatchIndex(const NetworkCase& c) {
        pv = c.pv_indices();
        pq = c.pq_indices();
        pvpq = pv;
        pvpq.insert(pvpq.end(), pq.begin(), pq.end());
    }

    int rows() const { return static_cast<int>(pvpq.size() + pq.size()); }
};

inline PFState flat_start(const NetworkCase& c) {
    const int n = c.n();
    PFState s;
    s.va = Eigen::VectorXd::Constant(n, c.buses[c.slack_index()].va * M_PI / 180.0);
    s.vm = Eigen::VectorXd::Ones(n);
    for (const Generator& g : c.gens) {
        if (!g.status) continue;
        s.vm[c.bus_index(g.bus)] = g.vg;
    }
    return s;
}

// Scheduled injections (Pg - Pd)/baseMVA and (Qg - Qd)/baseMVA per bus.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> scheduled_injections(const NetworkCase& c) {
    const int n = c.n();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        p[i] -= c.buses[i].pd;
        q[i] -= c.buses[i].qd;
    }
    for (const Generator& g : c.gens) {
        if (!g.status) continue;
        const int i = c.bus_index(g.bus);
        p[i] += g.pg;
        q[i] += g.qg;
    }
    p /= c.base_mva;
    q /= c.base_mva;
    return {p, q};
}

inline Eigen::VectorXcd complex_voltage(const PFState& s) {
    const int n = static_cast<int>(s.vm.size());
    Eigen::VectorXcd v(n);
    for (int i = 0; i < n; ++i) v[i] = std::polar(s.vm[i], s.va[i]);
    return v;
}

// Network injections P_T, Q_T (pu) from the admittance matrix.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> injections(const Eigen::MatrixXcd& ybus, const PFState& s) {
    const Eigen::VectorXcd v = complex_voltage(s);
    const Eigen::VectorXcd sbus = v.cwiseProduct((ybus * v).conjugate());
    return {sbus.real(), sbus.imag()};
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> injections(const NetworkCase& c, const PFState& s) {
    return injections(build_ybus(c), s);
}

inline Eigen::VectorXd mismatch(const NetworkCase& c, const PFState& s, const Eigen::MatrixXcd& ybus) {
    const MismatchIndex idx(c);
    const auto [p_calc, q_calc] = injections(ybus, s);
    const auto [p_sched, q_sched] = scheduled_injections(c);
    Eigen::VectorXd m(idx.rows());
    int r = 0;
    for (int i : idx.pvpq) m[r++] = p_calc[i] - p_sched[i];
    for (int i : idx.pq) m[r++] = q_calc[i] - q_sched[i];
    return m;
}

inline Eigen::VectorXd mismatch(const NetworkCase& c, const PFState& s) {
    return mismatch(c, s, build_ybus(c));
}

// Analytic Jacobian d(mismatch)/d(va_pvpq, vm_pq) using the complex-voltage
// derivative identities:
//   dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
//   dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
inline Eigen::MatrixXd jacobian(const NetworkCase& c, const PFState& s, const Eigen::MatrixXcd& ybus) {
    const MismatchIndex idx(c);
    const int n = c.n();
    const Eigen::VectorXcd v = complex_voltage(s);
    const Eigen::VectorXcd ibus = ybus * v;
    Eigen::VectorXcd vnorm(n);
    for (int i = 0; i < n; ++i) vnorm[i] = std::polar(1.0, s.va[i]);

    Eigen::MatrixXcd ds_dva = Eigen::MatrixXcd::Zero(n, n);
    Eigen::MatrixXcd ds_dvm = Eigen::MatrixXcd::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const std::complex<double> yv = ybus(i, j) * v[j];
            ds_dva(i, j) = std::complex<double>(0, 1) * v[i] * std::conj((i == j ? ibus[i] : 0.0) - yv);
            ds_dvm(i, j) = v[i] * std::conj(ybus(i, j) * vnorm[j]);
            if (i == j) ds_dvm(i, j) += std::conj(ibus[i]) * vnorm[i];
        }
    }

    const int npvpq = static_cast<int>(idx.pvpq.size());
    const int npq = static_cast<int>(idx.pq.size());
    Eigen::MatrixXd jac(idx.rows(), npvpq + npq);
    for (int rj = 0; rj < npvpq; ++rj) {
        for (int ri = 0; ri < npvpq; ++ri) jac(ri, rj) = ds_dva(idx.pvpq[ri], idx.pvpq[rj]).real();
        for (int ri = 0; ri < npq; ++ri) jac(npvpq + ri, rj) = ds_dva(idx.pq[ri], idx.pvpq[rj]).imag();
    }
    for (int cj = 0; cj < npq; ++cj) {
        for (int ri = 0; ri < npvpq; ++ri) jac(ri, npvpq + cj) = ds_dvm(idx.pvpq[ri], idx.pq[cj]).real();
        for (int ri = 0; ri < npq; ++ri) jac(npvpq + ri, npvpq + cj) = ds_dvm(idx.pq[ri], idx.pq[cj]).imag();
    }
    return jac;
}

inline Eigen::MatrixXd jacobian(const NetworkCase& c, const PFState& s) {
    return jacobian(c, s, build_ybus(c));
}

// Newton-Raphson solve. Non-convergence (divergence, singular Jacobian,
// iteration budget) is reported through `converged`, never thrown.
inline PFSolution solve_newton(const NetworkCase& c, const PFState& init, double tol = 1e-8, int max_iter = 30) {
    if (!(tol > 0.0) || max_iter < 1) throw GridscreenError("solve_newton: bad tolerance or iteration budget");
    const Eigen::MatrixXcd ybus = build_ybus(c);
    const MismatchIndex idx(c);
    const int npvpq = static_cast<int>(idx.pvpq.size());

    PFSolution sol;
    sol.state = init;
    for (int it = 0; it <= max_iter; ++it) {
        const Eigen::VectorXd mis = mismatch(c, sol.state, ybus);
        sol.max_mismatch = mis.size() == 0 ? 0.0 : mis.cwiseAbs().maxCoeff();
        sol.iterations = it;
        if (!std::isfinite(sol.max_mismatch)) return sol;
        if (sol.max_mismatch <= tol) {
            sol.converged = true;
            return sol;
        }
        if (it == max_iter) return sol;

        const Eigen::MatrixXd jac = jacobian(c, sol.state, ybus);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) return sol;
        const Eigen::VectorXd dx = lu.solve(-mis);
        if (!dx.allFinite()) return sol;
        for (int k = 0; k < npvpq; ++k) sol.state.va[idx.pvpq[k]] += dx[k];
        for (int k = 0; k < static_cast<int>(idx.pq.size()); ++k) sol.state.vm[idx.pq[k]] += dx[npvpq + k];
    }
    return sol;
}

}  // namespace gridscreen
