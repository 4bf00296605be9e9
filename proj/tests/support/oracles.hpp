#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is deliberately written the straightforward way and must
// not call the code paths it validates.

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <utility>
#include <vector>

#include "gridscreen/cpf.hpp"
#include "gridscreen/power_flow.hpp"

namespace gridscreen::testing {

// Injections from the trigonometric sums over polar Ybus entries.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> injections_trig(const NetworkCase& c, const PFState& s) {
    const Eigen::MatrixXcd y = build_ybus(c);
    const int n = c.n();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double ymag = std::abs(y(i, j));
            if (ymag == 0.0) continue;
            const double nu = std::arg(y(i, j));
            p[i] += s.vm[i] * s.vm[j] * ymag * std::cos(s.va[i] - s.va[j] - nu);
            q[i] += s.vm[i] * s.vm[j] * ymag * std::sin(s.va[i] - s.va[j] - nu);
        }
    }
    return {p, q};
}

// Central finite differences of the mismatch vector wrt (va_pvpq, vm_pq).
inline Eigen::MatrixXd fd_jacobian(const NetworkCase& c, const PFState& s, double h = 1e-6) {
    const MismatchIndex idx(c);
    const int npvpq = static_cast<int>(idx.pvpq.size());
    const int npq = static_cast<int>(idx.pq.size());
    Eigen::MatrixXd jac(idx.rows(), npvpq + npq);
    for (int k = 0; k < npvpq + npq; ++k) {
        PFState up = s, dn = s;
        if (k < npvpq) {
            up.va[idx.pvpq[k]] += h;
            dn.va[idx.pvpq[k]] -= h;
        } else {
            up.vm[idx.pq[k - npvpq]] += h;
            dn.vm[idx.pq[k - npvpq]] -= h;
        }
        jac.col(k) = (mismatch(c, up) - mismatch(c, dn)) / (2.0 * h);
    }
    return jac;
}

// Breadth-first reachability over in-service branches.
inline bool reachable_all(const NetworkCase& c) {
    const int n = c.n();
    std::vector<std::vector<int>> adj(n);
    for (const Branch& b : c.branches) {
        if (!b.status) continue;
        adj[c.bus_index(b.from)].push_back(c.bus_index(b.to));
        adj[c.bus_index(b.to)].push_back(c.bus_index(b.from));
    }
    std::vector<char> seen(n, 0);
    std::deque<int> queue{0};
    seen[0] = 1;
    int count = 1;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                ++count;
                queue.push_back(v);
            }
        }
    }
    return count == n;
}

// Case with demand grown along the schedule to a given lambda.
inline NetworkCase case_at_lambda(const NetworkCase& c, const TransferSchedule& ts, double lambda) {
    NetworkCase out = c;
    for (int i = 0; i < c.n(); ++i) {
        out.buses[i].pd += lambda * ts.dp[i] * c.base_mva;
        out.buses[i].qd += lambda * ts.dq[i] * c.base_mva;
    }
    return out;
}

// Dense lambda sweep: warm-started Newton solves on a uniform grid; the
// margin is the last grid point that still converges.
inline double sweep_max_lambda(const NetworkCase& c, const TransferSchedule& ts, double grid = 1e-3,
                               double lambda_cap = 4.0) {
    PFState state = flat_start(c);
    PFSolution sol = solve_newton(c, state, 1e-8, 30);
    if (!sol.converged) return -1.0;
    state = sol.state;
    double last_ok = 0.0;
    for (double lambda = grid; lambda <= lambda_cap + grid / 2; lambda += grid) {
        const NetworkCase scaled = case_at_lambda(c, ts, lambda);
        sol = solve_newton(scaled, state, 1e-8, 15);
        if (!sol.converged) break;
        state = sol.state;
        last_ok = lambda;
    }
    return last_ok;
}

}  // namespace gridscreen::testing
