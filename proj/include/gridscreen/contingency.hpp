#pragma once

#include <algorithm>
#include <future>
#include <ostream>
#include <thread>
#include <vector>

#include "gridscreen/cpf.hpp"

namespace gridscreen {

struct OutageId {
    int branch_index = -1;
    int from = 0;  // external bus ids
    int to = 0;
};

struct RankingRow {
    OutageId outage;
    double max_lambda = 0.0;
    int rank = 0;
};

struct RankingTable {
    std::vector<RankingRow> rows;             // feasible, converged, ranked
    std::vector<OutageId> unconverged;        // flagged and excluded from ranking
    Eigen::VectorXd base_p, base_q;           // MW / MVar of the ranked operating point
};

struct NotInTable : GridscreenError {
    using GridscreenError::GridscreenError;
};

// Feasible N-1 line outages: removals that keep the network connected.
inline std::vector<OutageId> enumerate_n1(const NetworkCase& c) {
    std::vector<OutageId> out;
    for (int k = 0; k < static_cast<int>(c.branches.size()); ++k) {
        if (!c.branches[k].status) continue;
        if (!is_connected(apply_outage(c, k))) continue;
        out.push_back({k, c.branches[k].from, c.branches[k].to});
    }
    return out;
}

namespace detail {

// Static index partition so results are identical for any worker count.
template <typename Fn>
void parallel_for(int count, int jobs, Fn&& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            for (int i = w; i < count; i += jobs) fn(i);
        });
    }
    for (auto& t : workers) t.join();
}

}  // namespace detail

// Sort ascending by margin with (from,to) tie-breaking, then assign
// competition ranks: ties within 1e-9 of the group leader share its rank.
inline void sort_and_rank(std::vector<RankingRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const RankingRow& a, const RankingRow& b) {
        if (a.max_lambda != b.max_lambda) return a.max_lambda < b.max_lambda;
        if (a.outage.from != b.outage.from) return a.outage.from < b.outage.from;
        return a.outage.to < b.outage.to;
    });
    constexpr double kTieTol = 1e-9;
    double group_margin = 0.0;
    for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
        if (i == 0 || rows[i].max_lambda - group_margin > kTieTol) {
            rows[i].rank = i + 1;
            group_margin = rows[i].max_lambda;
        } else {
            rows[i].rank = rows[i - 1].rank;
        }
    }
}

// Severity ranking of every feasible single-line outage: run CPF per outage,
// rank 1 = most severe (lowest margin).
inline RankingTable rank_all(const NetworkCase& c, const TransferSchedule& ts, const CpfOptions& opts,
                             int jobs = 1) {
    const std::vector<OutageId> outages = enumerate_n1(c);
    const int m = static_cast<int>(outages.size());

    std::vector<double> margins(m, 0.0);
    std::vector<char> ok(m, 0);
    detail::parallel_for(m, jobs, [&](int i) {
        try {
            const CpfTrace tr = run_cpf(apply_outage(c, outages[i].branch_index), ts, opts);
            if (tr.max_lambda > 0.0) {
                margins[i] = tr.max_lambda;
                ok[i] = 1;
            }
        } catch (const GridscreenError&) {
            // flagged below
        }
    });

    RankingTable table;
    table.base_p = Eigen::VectorXd::Zero(c.n());
    table.base_q = Eigen::VectorXd::Zero(c.n());
    for (int i = 0; i < c.n(); ++i) {
        table.base_p[i] = c.buses[i].pd;
        table.base_q[i] = c.buses[i].qd;
    }

    for (int i = 0; i < m; ++i) {
        if (ok[i])
            table.rows.push_back({outages[i], margins[i], 0});
        else
            table.unconverged.push_back(outages[i]);
    }
    sort_and_rank(table.rows);
    return table;
}

inline int rank_of(const OutageId& outage, const RankingTable& table) {
    for (const RankingRow& row : table.rows)
        if (row.outage.branch_index == outage.branch_index) return row.rank;
    throw NotInTable("outage " + std::to_string(outage.from) + "-" + std::to_string(outage.to) +
                     " (branch " + std::to_string(outage.branch_index) + ") not in ranking table");
}

inline void dump_ranking_csv(const RankingTable& table, std::ostream& os) {
    os << "outage_from,outage_to,max_lambda,rank\n";
    char buf[64];
    for (const RankingRow& row : table.rows) {
        std::snprintf(buf, sizeof(buf), "%.12g", row.max_lambda);
        os << row.outage.from << ',' << row.outage.to << ',' << buf << ',' << row.rank << '\n';
    }
}

}  // namespace gridscreen
