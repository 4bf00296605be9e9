
#include <catch2/catch_amalgamated.hpp>

#include "gridscreen/common.hpp"
#include "gridscreen/power_flow.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace gridscreen;
using Catch::Approx;
namespace gt = gridscreen::testing;

namespace {

PFState random_state(const NetworkCase& c, Rng& rng, double va_span = 0.3, double vm_span = 0.1) {
    PFState s = flat_start(c);
    for (int i = 0; i < c.n(); ++i) {
        s.va[i] += va_span * (rng.uniform() - 0.5);
        s.vm[i] += vm_span * (rng.uniform() - 0.5);
    }
    return s;
}

}  // namespace

TEST_CASE("injections vanish on a flat lossless line", "[power_flow]") {
    NetworkCase c = parse_matpower_case(gt::kTwoBusText);
    c.branches[0].r = 0.0;
    c.branches[0].b_charging = 0.0;
    PFState s;
    s.va = Eigen::VectorXd::Zero(2);
    s.vm = Eigen::VectorXd::Ones(2);
    const auto [p, q] = injections(c, s);
    REQUIRE(p.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(q.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("isolated bus row has zero injection", "[power_flow]") {
    NetworkCase c = parse_matpower_case(gt::kTwoBusText);
    c.buses.push_back({3, BusKind::PQ, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 230.0});
    PFState s;
    s.va = Eigen::VectorXd::Zero(3);
    s.vm = Eigen::VectorXd::Ones(3);
    const auto [p, q] = injections(c, s);
    REQUIRE(p[2] == 0.0);
    REQUIRE(q[2] == 0.0);
}

TEST_CASE("solved IEEE-6 injections match schedule at non-slack buses", "[power_flow]") {
    const NetworkCase c = gt::ieee6();
    const PFSolution sol = solve_newton(c, flat_start(c), 1e-10, 30);
    REQUIRE(sol.converged);
    const auto [p, q] = injections(c, sol.state);
    const auto [ps, qs] = scheduled_injections(c);
    for (int i = 0; i < c.n(); ++i) {
        if (c.buses[i].kind == BusKind::Slack) continue;
        REQUIRE(p[i] == Approx(ps[i]).margin(1e-8));
        if (c.buses[i].kind == BusKind::PQ) REQUIRE(q[i] == Approx(qs[i]).margin(1e-8));
    }
}

TEST_CASE("mismatch at a solution is within tolerance", "[power_flow]") {
    const NetworkCase c = gt::ieee14();
    const PFSolution sol = solve_newton(c, flat_start(c), 1e-9, 30);
    REQUIRE(sol.converged);
    REQUIRE(mismatch(c, sol.state).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("zero-injection flat network has zero mismatch", "[power_flow]") {
    NetworkCase c = gt::triangle();
    for (Bus& b : c.buses) {
        b.pd = 0.0;
        b.qd = 0.0;
    }
    for (Branch& b : c.branches) b.b_charging = 0.0;  // keep flat profile exact
    PFState s;
    s.va = Eigen::VectorXd::Zero(3);
    s.vm = Eigen::VectorXd::Ones(3);
    REQUIRE(mismatch(c, s).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mismatch equals independent trig-loop evaluation", "[power_flow]") {
    const NetworkCase c = gt::ieee14();
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const PFState s = random_state(c, rng);
        const auto [p, q] = injections(c, s);
        const auto [pt, qt] = gt::injections_trig(c, s);
        REQUIRE((p - pt).cwiseAbs().maxCoeff() < 1e-10);
        REQUIRE((q - qt).cwiseAbs().maxCoeff() < 1e-10);

        // and the assembled mismatch vector agrees row by row
        const MismatchIndex idx(c);
        const auto [ps, qs] = scheduled_injections(c);
        const Eigen::VectorXd m = mismatch(c, s);
        int r = 0;
        for (int i : idx.pvpq) REQUIRE(m[r++] == Approx(pt[i] - ps[i]).margin(1e-10));
        for (int i : idx.pq) REQUIRE(m[r++] == Approx(qt[i] - qs[i]).margin(1e-10));
    }
}

TEST_CASE("jacobian matches central finite differences", "[power_flow]") {
    const NetworkCase c = gt::ieee6();
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const PFState s = random_state(c, rng);
        const Eigen::MatrixXd a = jacobian(c, s);
        const Eigen::MatrixXd f = gt::fd_jacobian(c, s, 1e-6);
        REQUIRE((a - f).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("jacobian reduces to the angle block without PQ buses", "[power_flow]") {
    NetworkCase c = gt::triangle();
    c.buses[1].kind = BusKind::PV;
    c.buses[2].kind = BusKind::PV;
    c.gens.push_back({2, 10.0, 0.0, 1.0, true});
    c.gens.push_back({3, 10.0, 0.0, 1.0, true});
    const PFState s = flat_start(c);
    const Eigen::MatrixXd j = jacobian(c, s);
    REQUIRE(j.rows() == 2);
    REQUIRE(j.cols() == 2);
    const Eigen::MatrixXd f = gt::fd_jacobian(c, s, 1e-6);
    REQUIRE((j - f).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("jacobian dimensions follow bus types", "[power_flow]") {
    const NetworkCase c = gt::ieee14();
    const int npv = static_cast<int>(c.pv_indices().size());
    const int npq = static_cast<int>(c.pq_indices().size());
    const Eigen::MatrixXd j = jacobian(c, flat_start(c));
    REQUIRE(j.rows() == npv + 2 * npq);
    REQUIRE(j.cols() == npv + 2 * npq);
}

TEST_CASE("newton solve on the three case studies", "[power_flow]") {
    for (const NetworkCase& c : {gt::ieee6(), gt::ieee14(), gt::ieee30()}) {
        const PFSolution sol = solve_newton(c, flat_start(c), 1e-8, 30);
        INFO("case " << c.name);
        REQUIRE(sol.converged);
        REQUIRE(sol.iterations <= 10);
        REQUIRE(sol.max_mismatch <= 1e-8);
        // idempotent verification
        REQUIRE(mismatch(c, sol.state).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("zero-injection network converges immediately to the flat profile", "[power_flow]") {
    NetworkCase c = gt::triangle();
    for (Bus& b : c.buses) {
        b.pd = 0.0;
        b.qd = 0.0;
    }
    for (Branch& b : c.branches) b.b_charging = 0.0;
    const PFSolution sol = solve_newton(c, flat_start(c), 1e-10, 30);
    REQUIRE(sol.converged);
    REQUIRE(sol.iterations <= 1);
    REQUIRE(sol.state.va.cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((sol.state.vm.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("far-beyond-collapse load is reported, not thrown", "[power_flow]") {
    NetworkCase c = gt::ieee14();
    for (Bus& b : c.buses) {
        b.pd *= 20.0;
        b.qd *= 20.0;
    }
    PFSolution sol;
    REQUIRE_NOTHROW(sol = solve_newton(c, flat_start(c), 1e-8, 30));
    REQUIRE_FALSE(sol.converged);
}

TEST_CASE("solution independent of bus input ordering", "[power_flow]") {
    const NetworkCase c = gt::ieee14();
    const PFSolution ref = solve_newton(c, flat_start(c), 1e-12, 40);
    REQUIRE(ref.converged);

    NetworkCase shuffled = c;
    std::reverse(shuffled.buses.begin(), shuffled.buses.end());
    std::reverse(shuffled.branches.begin(), shuffled.branches.end());
    const PFSolution per = solve_newton(shuffled, flat_start(shuffled), 1e-12, 40);
    REQUIRE(per.converged);

    for (int i = 0; i < c.n(); ++i) {
        const int j = shuffled.bus_index(c.buses[i].id);
        REQUIRE(per.state.vm[j] == Approx(ref.state.vm[i]).margin(1e-10));
        REQUIRE(per.state.va[j] == Approx(ref.state.va[i]).margin(1e-10));
    }
}
