
#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "gridscreen/case_model.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace gridscreen;
using Catch::Approx;
namespace gt = gridscreen::testing;

TEST_CASE("parse minimal 2-bus case", "[case_model]") {
    const NetworkCase c = parse_matpower_case(gt::kTwoBusText);
    REQUIRE(c.n() == 2);
    REQUIRE(c.branches.size() == 1);
    REQUIRE(c.gens.size() == 1);
    REQUIRE(c.base_mva == 100.0);
    REQUIRE(c.name == "two_bus");
    REQUIRE(c.buses[0].kind == BusKind::Slack);
    REQUIRE(c.buses[1].kind == BusKind::PQ);
    REQUIRE(c.buses[1].pd == 50.0);
    REQUIRE(c.branches[0].tap == 1.0);  // 0 in the file means no transformer
}

TEST_CASE("parse IEEE cases from disk", "[case_model]") {
    const NetworkCase c14 = gt::ieee14();
    REQUIRE(c14.n() == 14);
    REQUIRE(c14.branches.size() == 20);
    REQUIRE(c14.gens.size() == 5);

    const NetworkCase c6 = gt::ieee6();
    REQUIRE(c6.n() == 6);
    REQUIRE(c6.branches.size() == 11);

    const NetworkCase c30 = gt::ieee30();
    REQUIRE(c30.n() == 30);
    REQUIRE(c30.branches.size() == 41);
    REQUIRE(c30.gens.size() == 6);
}

TEST_CASE("parse errors", "[case_model]") {
    SECTION("missing bus section") {
        const char* text = "mpc.baseMVA = 100;\nmpc.gen = [1 0 0 0 0 1 100 1;];\nmpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1;];\n";
        REQUIRE_THROWS_AS(parse_matpower_case(text), MissingSection);
    }
    SECTION("malformed row carries line number") {
        std::string text = gt::kTwoBusText;
        const auto pos = text.find("1  2  0.01");
        text.replace(pos, 10, "1  2  zz.bad");
        try {
            parse_matpower_case(text);
            FAIL("expected MalformedRow");
        } catch (const MalformedRow& e) {
            REQUIRE(e.line > 0);
        }
    }
    SECTION("no slack bus") {
        std::string text = gt::kTwoBusText;
        const auto pos = text.find("1  3  0");
        text.replace(pos, 7, "1  1  0");
        REQUIRE_THROWS_AS(parse_matpower_case(text), NoSlackBus);
    }
    SECTION("duplicate bus id") {
        std::string text = gt::kTwoBusText;
        const auto pos = text.find("2  1  50");
        text.replace(pos, 8, "1  1  50");
        REQUIRE_THROWS_AS(parse_matpower_case(text), DuplicateBusId);
    }
}

TEST_CASE("parse -> json -> parse round-trips identically", "[case_model]") {
    for (const NetworkCase& c : {gt::ieee6(), gt::ieee14(), gt::ieee30()}) {
        const NetworkCase back = case_from_json(case_to_json(c));
        REQUIRE(back.base_mva == c.base_mva);
        REQUIRE(back.buses.size() == c.buses.size());
        for (std::size_t i = 0; i < c.buses.size(); ++i) {
            REQUIRE(back.buses[i].id == c.buses[i].id);
            REQUIRE(back.buses[i].kind == c.buses[i].kind);
            REQUIRE(back.buses[i].pd == c.buses[i].pd);
            REQUIRE(back.buses[i].qd == c.buses[i].qd);
            REQUIRE(back.buses[i].gs == c.buses[i].gs);
            REQUIRE(back.buses[i].bs == c.buses[i].bs);
            REQUIRE(back.buses[i].vm == c.buses[i].vm);
            REQUIRE(back.buses[i].va == c.buses[i].va);
            REQUIRE(back.buses[i].base_kv == c.buses[i].base_kv);
        }
        for (std::size_t i = 0; i < c.gens.size(); ++i) {
            REQUIRE(back.gens[i].bus == c.gens[i].bus);
            REQUIRE(back.gens[i].pg == c.gens[i].pg);
            REQUIRE(back.gens[i].vg == c.gens[i].vg);
        }
        for (std::size_t i = 0; i < c.branches.size(); ++i) {
            REQUIRE(back.branches[i].from == c.branches[i].from);
            REQUIRE(back.branches[i].to == c.branches[i].to);
            REQUIRE(back.branches[i].r == c.branches[i].r);
            REQUIRE(back.branches[i].x == c.branches[i].x);
            REQUIRE(back.branches[i].b_charging == c.branches[i].b_charging);
            REQUIRE(back.branches[i].tap == c.branches[i].tap);
            REQUIRE(back.branches[i].status == c.branches[i].status);
        }
    }
}

TEST_CASE("ybus of a single line", "[case_model]") {
    NetworkCase c = parse_matpower_case(gt::kTwoBusText);
    c.branches[0].b_charging = 0.0;  // pure series element
    const Eigen::MatrixXcd y = build_ybus(c);
    const std::complex<double> ys = 1.0 / std::complex<double>(0.01, 0.1);
    REQUIRE(std::abs(y(0, 0) - ys) < 1e-15);
    REQUIRE(std::abs(y(1, 1) - ys) < 1e-15);
    REQUIRE(std::abs(y(0, 1) + ys) < 1e-15);
    REQUIRE(std::abs(y(1, 0) + ys) < 1e-15);
}

TEST_CASE("ybus symmetry without transformers", "[case_model]") {
    const NetworkCase c = gt::ieee6();
    const Eigen::MatrixXcd y = build_ybus(c);
    REQUIRE((y - y.transpose()).cwiseAbs().maxCoeff() == 0.0);
    // disconnected pairs are exact zeros
    const ConnectionMatrix cm = connection_matrix(c);
    for (int i = 0; i < c.n(); ++i)
        for (int j = 0; j < c.n(); ++j)
            if (i != j && cm.c(i, j) == 0) REQUIRE(y(i, j) == std::complex<double>(0, 0));
}

// Independent per-branch stamp assembly, written against the pi model from
// first principles rather than reusing build_ybus internals.
static Eigen::MatrixXcd stamp_oracle(const NetworkCase& c) {
    const int n = c.n();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const Branch& br : c.branches) {
        if (!br.status) continue;
        const int f = c.bus_index(br.from);
        const int t = c.bus_index(br.to);
        const double denom = br.r * br.r + br.x * br.x;
        const std::complex<double> ys(br.r / denom, -br.x / denom);
        const std::complex<double> half_b(0.0, 0.5 * br.b_charging);
        const double a = br.tap;
        y(f, f) += (ys + half_b) / (a * a);
        y(t, t) += ys + half_b;
        y(f, t) -= ys / a;
        y(t, f) -= ys / a;
    }
    for (int i = 0; i < n; ++i) y(i, i) += std::complex<double>(c.buses[i].gs, c.buses[i].bs) / c.base_mva;
    return y;
}

TEST_CASE("ybus row sums match per-branch stamp oracle", "[case_model]") {
    for (const NetworkCase& c : {gt::ieee6(), gt::ieee14()}) {
        const Eigen::MatrixXcd y = build_ybus(c);
        const Eigen::MatrixXcd ref = stamp_oracle(c);
        REQUIRE((y.rowwise().sum() - ref.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE((y - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("connection matrix basics", "[case_model]") {
    const NetworkCase tri = gt::triangle();
    const ConnectionMatrix cm = connection_matrix(tri);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) REQUIRE(cm.c(i, j) == (i == j ? 0 : 1));

    SECTION("branch out of service clears exactly its pair") {
        NetworkCase tri2 = tri;
        tri2.branches[0].status = false;  // 1-2
        const ConnectionMatrix cm2 = connection_matrix(tri2);
        REQUIRE(cm2.c(0, 1) == 0);
        REQUIRE(cm2.c(1, 0) == 0);
        REQUIRE(cm2.c(0, 2) == 1);
        REQUIRE(cm2.c(1, 2) == 1);
    }

    SECTION("parallel branch keeps the pair connected") {
        NetworkCase twin = tri;
        twin.branches.push_back({1, 2, 0.05, 0.2, 0.0, 1.0, true});
        NetworkCase removed = apply_outage(twin, 0);
        REQUIRE(connection_matrix(removed).c(0, 1) == 1);
    }
}

TEST_CASE("IEEE-14 connection degrees match incidence counts", "[case_model]") {
    const NetworkCase c = gt::ieee14();
    const ConnectionMatrix cm = connection_matrix(c);
    std::vector<int> degree(c.n(), 0);
    for (const Branch& b : c.branches) {
        if (!b.status) continue;
        ++degree[c.bus_index(b.from)];
        ++degree[c.bus_index(b.to)];
    }
    for (int i = 0; i < c.n(); ++i) REQUIRE(cm.c.row(i).sum() == degree[i]);
    // symmetric, zero diagonal, even total
    REQUIRE((cm.c - cm.c.transpose()).cwiseAbs().sum() == 0);
    REQUIRE(cm.c.diagonal().sum() == 0);
    REQUIRE(cm.c.sum() % 2 == 0);
}

TEST_CASE("apply_outage", "[case_model]") {
    const NetworkCase c = gt::ieee14();
    const NetworkCase out = apply_outage(c, 3);
    REQUIRE(c.branches[3].status);  // input untouched
    REQUIRE_FALSE(out.branches[3].status);
    REQUIRE(out.in_service_branch_count() == c.in_service_branch_count() - 1);

    REQUIRE_THROWS_AS(apply_outage(c, 99), IndexOutOfRange);
    REQUIRE_THROWS_AS(apply_outage(c, -1), IndexOutOfRange);
    REQUIRE_THROWS_AS(apply_outage(out, 3), AlreadyOut);

    SECTION("connection matrix never gains entries after an outage") {
        const ConnectionMatrix before = connection_matrix(c);
        for (int k = 0; k < static_cast<int>(c.branches.size()); ++k) {
            const ConnectionMatrix after = connection_matrix(apply_outage(c, k));
            REQUIRE(((after.c - before.c).array() <= 0).all());
        }
    }

    SECTION("radial branch islanding") {
        // branch feeding bus 8 (7-8) is the only radial line of IEEE-14
        int idx = -1;
        for (int k = 0; k < static_cast<int>(c.branches.size()); ++k)
            if (c.branches[k].from == 7 && c.branches[k].to == 8) idx = k;
        REQUIRE(idx >= 0);
        REQUIRE_FALSE(is_connected(apply_outage(c, idx)));
    }
}

TEST_CASE("is_connected agrees with BFS oracle over all IEEE-30 removals", "[case_model]") {
    const NetworkCase c = gt::ieee30();
    REQUIRE(is_connected(c));
    for (int k = 0; k < static_cast<int>(c.branches.size()); ++k) {
        const NetworkCase out = apply_outage(c, k);
        REQUIRE(is_connected(out) == gt::reachable_all(out));
    }
}

TEST_CASE("json case files load through the same entry point", "[case_model]") {
    const NetworkCase c = gt::ieee14();
    const auto path = std::filesystem::temp_directory_path() / "gridscreen_case14.json";
    std::ofstream(path) << case_to_json(c).dump(2);
    const NetworkCase back = load_case_file(path.string());
    REQUIRE(back.n() == 14);
    REQUIRE(back.branches.size() == 20);
    REQUIRE(back.buses[8].bs == c.buses[8].bs);
}

TEST_CASE("two-bus case with only branch out is disconnected", "[case_model]") {
    NetworkCase c = parse_matpower_case(gt::kTwoBusText);
    c.branches[0].status = false;
    REQUIRE_FALSE(is_connected(c));
}
