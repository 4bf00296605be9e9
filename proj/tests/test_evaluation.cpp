#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "gridscreen/evaluation.hpp"
#include "support/fixtures.hpp"

using namespace gridscreen;
using Catch::Approx;
namespace gt = gridscreen::testing;

namespace {

// Generated samples with a chosen outage per row, bypassing the model.
std::vector<GeneratedSample> stub_rows(const NetworkCase& c, int n, std::uint64_t seed,
                                       const std::function<OutageId(const RankingTable&, Rng&)>& pick,
                                       const RankingTable& table, const Eigen::VectorXd& base_p,
                                       const Eigen::VectorXd& base_q, double target_scale) {
    std::vector<GeneratedSample> rows;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        GeneratedSample g;
        g.index = i;
        g.base_seed = seed;
        g.base_p = base_p;
        g.base_q = base_q;
        g.outage = pick(table, rng);
        // perfect critical profiles for the chosen outage
        const auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const RankingRow& r) {
            return r.outage.branch_index == g.outage.branch_index;
        });
        const double margin = it == table.rows.end() ? 0.1 : it->max_lambda;
        g.gen_crit_p = base_p * (1.0 + margin * (target_scale - 1.0));
        g.gen_crit_q = base_q * (1.0 + margin * (target_scale - 1.0));
        rows.push_back(std::move(g));
    }
    return rows;
}

Normalizer wide_normalizer() {
    Normalizer nz;
    nz.lo = {0, 0, 0, 0, 0, 0};
    nz.hi = {400, 400, 1, 900, 900, 1};
    return nz;
}

}  // namespace

TEST_CASE("threshold rank is the median position", "[evaluation]") {
    REQUIRE(threshold_rank(11) == 6);
    REQUIRE(threshold_rank(1) == 1);
    REQUIRE(threshold_rank(20) == 10);
    REQUIRE(threshold_rank(19) == 10);
    REQUIRE_THROWS_AS(threshold_rank(0), GridscreenError);
}

TEST_CASE("mae_profiles", "[evaluation]") {
    const Normalizer nz = wide_normalizer();
    Eigen::VectorXd p(3), q(3);
    p << 100, 0, 50;
    q << 30, 0, 20;

    SECTION("identical profiles give zero") {
        const auto [mp, mq] = mae_profiles(p, q, p, q, nz);
        REQUIRE(mp == 0.0);
        REQUIRE(mq == 0.0);
    }
    SECTION("constant offset on load buses is recovered exactly") {
        // +0.01 in normalized units on every load bus
        Eigen::VectorXd gp = p, gq = q;
        for (int i = 0; i < 3; ++i) {
            if (p[i] != 0.0) gp[i] += 0.01 * (nz.hi[kTgtP] - nz.lo[kTgtP]);
            if (q[i] != 0.0) gq[i] += 0.01 * (nz.hi[kTgtQ] - nz.lo[kTgtQ]);
        }
        const auto [mp, mq] = mae_profiles(gp, gq, p, q, nz);
        REQUIRE(mp == Approx(0.01).margin(1e-12));
        REQUIRE(mq == Approx(0.01).margin(1e-12));
    }
    SECTION("sign symmetric") {
        Eigen::VectorXd gp = p;
        gp[0] += 9.0;
        const double up = mae_profiles(gp, q, p, q, nz).first;
        gp[0] = p[0] - 9.0;
        const double dn = mae_profiles(gp, q, p, q, nz).first;
        REQUIRE(up == Approx(dn).margin(1e-15));
        REQUIRE(up > 0.0);
    }
    SECTION("length mismatch rejected") {
        REQUIRE_THROWS_AS(mae_profiles(p, q, Eigen::VectorXd::Zero(2), q, nz), LengthMismatch);
    }
}

TEST_CASE("stub samplers bound the score", "[evaluation]") {
    const NetworkCase c = gt::ieee6();
    const double scale = 2.5;
    const TransferSchedule ts = transfer_schedule(c, scale);
    const RankingTable table = rank_all(c, ts, CpfOptions{});
    Eigen::VectorXd base_p(c.n()), base_q(c.n());
    for (int i = 0; i < c.n(); ++i) {
        base_p[i] = c.buses[i].pd;
        base_q[i] = c.buses[i].qd;
    }
    EvalConfig cfg;
    cfg.n_eval_samples = 120;
    cfg.target_scale = scale;
    const Normalizer nz = wide_normalizer();

    SECTION("always rank-1 stub scores 1.0 with zero MAE") {
        const auto rows = stub_rows(c, 20, 1,
                                    [](const RankingTable& t, Rng&) { return t.rows.front().outage; }, table,
                                    base_p, base_q, scale);
        const EvalReport rep = evaluate_generated(c, rows, nz, cfg);
        REQUIRE(rep.included == 20);
        REQUIRE(rep.score == 1.0);
        REQUIRE(rep.mae_p == Approx(0.0).margin(1e-12));
        REQUIRE(rep.histogram.at(1) == 20);
    }

    SECTION("uniform-random stub stays near the median fraction") {
        const auto rows = stub_rows(c, 120, 2,
                                    [](const RankingTable& t, Rng& r) {
                                        return t.rows[r.uniform_int(static_cast<int>(t.rows.size()))].outage;
                                    },
                                    table, base_p, base_q, scale);
        const EvalReport rep = evaluate_generated(c, rows, nz, cfg);
        const double expect = static_cast<double>(threshold_rank(11)) / 11.0;
        const double sigma = std::sqrt(expect * (1.0 - expect) / 120.0);
        REQUIRE(rep.score >= expect - 3.0 * sigma);
        REQUIRE(rep.score <= expect + 3.0 * sigma);
    }

    SECTION("worst-rank stub scores 0") {
        const auto rows = stub_rows(c, 10, 3,
                                    [](const RankingTable& t, Rng&) { return t.rows.back().outage; }, table,
                                    base_p, base_q, scale);
        const EvalReport rep = evaluate_generated(c, rows, nz, cfg);
        REQUIRE(rep.score == 0.0);
    }
}

TEST_CASE("exclusions are counted and dropped from the score", "[evaluation]") {
    const NetworkCase c = gt::ieee14();  // its 7-8 branch islands the grid
    const double scale = 2.5;
    Eigen::VectorXd base_p(c.n()), base_q(c.n());
    for (int i = 0; i < c.n(); ++i) {
        base_p[i] = c.buses[i].pd;
        base_q[i] = c.buses[i].qd;
    }
    int islanding = -1;
    for (int k = 0; k < static_cast<int>(c.branches.size()); ++k)
        if (c.branches[k].from == 7 && c.branches[k].to == 8) islanding = k;
    REQUIRE(islanding >= 0);

    std::vector<GeneratedSample> rows(2);
    rows[0].index = 0;
    rows[0].base_p = base_p;
    rows[0].base_q = base_q;
    rows[0].outage = {islanding, 7, 8};  // not rankable
    rows[0].gen_crit_p = base_p;
    rows[0].gen_crit_q = base_q;
    rows[1] = rows[0];
    rows[1].index = 1;
    rows[1].decode_failed = true;

    EvalConfig cfg;
    cfg.target_scale = scale;
    const EvalReport rep = evaluate_generated(c, rows, wide_normalizer(), cfg);
    REQUIRE(rep.exclusions == 2);
    REQUIRE(rep.included == 0);
    REQUIRE(rep.score == 0.0);
    REQUIRE(rep.rows[0].exclusion_reason == "outage_not_rankable");
    REQUIRE(rep.rows[1].exclusion_reason == "decode_failed");
}

TEST_CASE("oracle consistency of recorded ranks", "[evaluation]") {
    const NetworkCase c = gt::ieee6();
    const double scale = 2.5;
    EvalConfig cfg;
    cfg.n_eval_samples = 4;
    cfg.seed = 77;
    cfg.target_scale = scale;
    // fabricate draws on fresh perturbed bases
    std::vector<GeneratedSample> rows;
    for (int i = 0; i < cfg.n_eval_samples; ++i) {
        GeneratedSample g;
        g.index = i;
        g.base_seed = derive_seed(cfg.seed, 2, i);
        Rng rng(g.base_seed);
        const NetworkCase pert = perturb_loads(c, rng);
        g.base_p = Eigen::VectorXd(c.n());
        g.base_q = Eigen::VectorXd(c.n());
        for (int k = 0; k < c.n(); ++k) {
            g.base_p[k] = pert.buses[k].pd;
            g.base_q[k] = pert.buses[k].qd;
        }
        g.outage = {2 + i, c.branches[2 + i].from, c.branches[2 + i].to};
        g.gen_crit_p = g.base_p;
        g.gen_crit_q = g.base_q;
        rows.push_back(std::move(g));
    }
    const EvalReport rep = evaluate_generated(c, rows, wide_normalizer(), cfg, CpfOptions{}, 2);
    for (int i = 0; i < cfg.n_eval_samples; ++i) {
        NetworkCase pert = c;
        for (int k = 0; k < c.n(); ++k) {
            pert.buses[k].pd = rows[i].base_p[k];
            pert.buses[k].qd = rows[i].base_q[k];
        }
        const RankingTable table = rank_all(pert, transfer_schedule(pert, scale), CpfOptions{});
        REQUIRE(rep.rows[i].oracle_rank == rank_of(rows[i].outage, table));
        REQUIRE(rep.rows[i].feasible_count == static_cast<int>(table.rows.size()));
        REQUIRE(rep.rows[i].below_threshold ==
                (rep.rows[i].oracle_rank <= threshold_rank(rep.rows[i].feasible_count)));
    }
}

TEST_CASE("report emission", "[evaluation]") {
    EvalReport rep;
    rep.histogram[1] = 3;
    rep.histogram[4] = 1;
    rep.score = 0.75;
    rep.mae_p = 0.01;
    rep.mae_q = 0.02;
    rep.included = 4;
    rep.exclusions = 1;
    EvalRow row;
    row.index = 0;
    row.outage = {0, 1, 2};
    row.oracle_rank = 1;
    row.feasible_count = 11;
    row.below_threshold = true;
    rep.rows.push_back(row);
    rep.config_echo = {{"note", "fixture"}};

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "gridscreen_report_test";
    fs::remove_all(dir);
    const auto files = emit_report(rep, dir.string());
    REQUIRE(files.size() == 5);
    for (const std::string& f : files) REQUIRE(fs::exists(f));

    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    const std::string first = slurp(dir / "summary.json") + slurp(dir / "report.csv") +
                              slurp(dir / "histogram.csv") + slurp(dir / "rank_frequency.svg") +
                              slurp(dir / "score.svg");
    emit_report(rep, dir.string());
    const std::string second = slurp(dir / "summary.json") + slurp(dir / "report.csv") +
                               slurp(dir / "histogram.csv") + slurp(dir / "rank_frequency.svg") +
                               slurp(dir / "score.svg");
    REQUIRE(first == second);  // byte-identical re-emit

    int mass = 0;
    for (const auto& [rank, count] : rep.histogram) mass += count;
    REQUIRE(mass == rep.included);
    const nlohmann::json j = nlohmann::json::parse(slurp(dir / "summary.json"));
    REQUIRE(j["score"] == 0.75);
    REQUIRE(j["exclusions"] == 1);

    SECTION("empty report still writes valid headers and svg") {
        const EvalReport empty;
        const fs::path edir = fs::temp_directory_path() / "gridscreen_report_empty";
        fs::remove_all(edir);
        emit_report(empty, edir.string());
        REQUIRE(slurp(edir / "report.csv").starts_with("sample,"));
        REQUIRE(slurp(edir / "histogram.csv") == "rank,count\n");
        REQUIRE(slurp(edir / "rank_frequency.svg").starts_with("<svg"));
    }
}
