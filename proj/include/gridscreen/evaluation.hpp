#pragma once

#include <filesystem>
#include <map>
#include <unordered_map>

#include "gridscreen/checkpoint.hpp"
#include "gridscreen/contingency.hpp"
#include "gridscreen/dataset.hpp"
#include "gridscreen/diffusion.hpp"

namespace gridscreen {

struct EvalConfig {
    int n_eval_samples = 100;
    std::uint64_t seed = 0;
    double target_scale = 2.5;
};

struct LengthMismatch : GridscreenError {
    using GridscreenError::GridscreenError;
};
struct IoFailure : GridscreenError {
    using GridscreenError::GridscreenError;
};

// Median-position threshold: generated contingencies ranked at or below it
// count as screening successes.
inline int threshold_rank(int m) {
    if (m < 1) throw GridscreenError("threshold_rank: need at least one contingency");
    return (m + 1) / 2;
}

// Normalized mean absolute error over load buses (buses where the actual
// profile is nonzero).
inline std::pair<double, double> mae_profiles(const Eigen::VectorXd& gen_p, const Eigen::VectorXd& gen_q,
                                              const Eigen::VectorXd& act_p, const Eigen::VectorXd& act_q,
                                              const Normalizer& nz) {
    if (gen_p.size() != act_p.size() || gen_q.size() != act_q.size() || gen_p.size() != gen_q.size())
        throw LengthMismatch("mae_profiles: profile lengths differ");
    double sum_p = 0.0, sum_q = 0.0;
    int n_p = 0, n_q = 0;
    for (int i = 0; i < act_p.size(); ++i) {
        if (act_p[i] != 0.0 || gen_p[i] != 0.0) {
            sum_p += std::abs(nz.normalize(kTgtP, gen_p[i]) - nz.normalize(kTgtP, act_p[i]));
            ++n_p;
        }
        if (act_q[i] != 0.0 || gen_q[i] != 0.0) {
            sum_q += std::abs(nz.normalize(kTgtQ, gen_q[i]) - nz.normalize(kTgtQ, act_q[i]));
            ++n_q;
        }
    }
    return {n_p ? sum_p / n_p : 0.0, n_q ? sum_q / n_q : 0.0};
}

// One decoded draw from the generative model on a fresh perturbed base state.
struct GeneratedSample {
    int index = 0;
    std::uint64_t base_seed = 0;
    Eigen::VectorXd base_p, base_q;
    OutageId outage;
    Eigen::VectorXd gen_crit_p, gen_crit_q;
    int raw_edges_removed = 0;  // 0.5-threshold binarization diagnostics
    bool decode_failed = false;
};

struct EvalRow {
    int index = 0;
    std::uint64_t base_seed = 0;
    OutageId outage;
    int oracle_rank = 0;
    int feasible_count = 0;
    bool below_threshold = false;
    bool excluded = false;
    std::string exclusion_reason;
    double mae_p = 0.0, mae_q = 0.0;
    int raw_edges_removed = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::map<int, int> histogram;  // oracle rank -> count over included rows
    double score = 0.0;
    // headline MAE: generated and actual critical profiles are each min-max
    // normalized across the testing dataset before comparison
    double mae_p = 0.0, mae_q = 0.0;
    // per-pair MAE in training-normalizer space, kept as a diagnostic
    double mae_p_trainnorm = 0.0, mae_q_trainnorm = 0.0;
    int exclusions = 0;
    int included = 0;
    nlohmann::json config_echo;
};

namespace detail {

inline NetworkCase with_loads(const NetworkCase& c, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    NetworkCase out = c;
    for (int i = 0; i < c.n(); ++i) {
        out.buses[i].pd = p[i];
        out.buses[i].qd = q[i];
    }
    return out;
}

inline std::uint64_t loads_hash(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    std::string bytes(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(double));
    bytes.append(reinterpret_cast<const char*>(q.data()), q.size() * sizeof(double));
    return fnv1a(bytes);
}

}  // namespace detail

// Stage 1: draw perturbed base states and sample the model on them.
inline std::vector<GeneratedSample> draw_generated(const Checkpoint& ck, const NetworkCase& intact_case,
                                                   const EvalConfig& cfg, int jobs = 1) {
    const NoiseSchedule sched = ck.schedule();
    std::vector<GeneratedSample> out(cfg.n_eval_samples);
    const ConnectionMatrix intact = connection_matrix(intact_case);
    detail::parallel_for(cfg.n_eval_samples, jobs, [&](int i) {
        GeneratedSample g;
        g.index = i;
        g.base_seed = derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(i));
        Rng base_rng(g.base_seed);
        const NetworkCase perturbed = perturb_loads(intact_case, base_rng);
        g.base_p = Eigen::VectorXd::Zero(intact_case.n());
        g.base_q = Eigen::VectorXd::Zero(intact_case.n());
        for (int k = 0; k < intact_case.n(); ++k) {
            g.base_p[k] = perturbed.buses[k].pd;
            g.base_q[k] = perturbed.buses[k].qd;
        }
        const Tensor cond = condition_tensor(g.base_p, g.base_q, intact_case, ck.normalizer);
        Rng sample_rng(derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(i)));
        const Tensor y = sample(ck.params, sched, cond, sample_rng);
        try {
            const DecodedContingency dec = decode_generated(y, intact_case, ck.normalizer);
            g.outage = dec.outage;
            g.gen_crit_p = dec.crit_p;
            g.gen_crit_q = dec.crit_q;
        } catch (const NoEdgeSelected&) {
            g.decode_failed = true;
            g.gen_crit_p = g.base_p;
            g.gen_crit_q = g.base_q;
        }
        const Eigen::MatrixXi bin = threshold_binarize(y, kTgtC);
        int removed = 0;
        for (int a = 0; a < intact.n; ++a)
            for (int b = a + 1; b < intact.n; ++b)
                if (intact.c(a, b) == 1 && bin(a, b) == 0 && bin(b, a) == 0) ++removed;
        g.raw_edges_removed = removed;
        out[i] = std::move(g);
    });
    return out;
}

// Stage 2: score the draws against per-base-state oracle ranking tables.
inline EvalReport evaluate_generated(const NetworkCase& intact_case, const std::vector<GeneratedSample>& gen,
                                     const Normalizer& nz, const EvalConfig& cfg,
                                     const CpfOptions& opts = CpfOptions{}, int jobs = 1) {
    // oracle tables per distinct base state, built in parallel, keyed by hash
    std::vector<std::uint64_t> keys(gen.size());
    std::unordered_map<std::uint64_t, int> slot_of;
    std::vector<const GeneratedSample*> unique;
    for (std::size_t i = 0; i < gen.size(); ++i) {
        keys[i] = detail::loads_hash(gen[i].base_p, gen[i].base_q);
        if (slot_of.emplace(keys[i], static_cast<int>(unique.size())).second) unique.push_back(&gen[i]);
    }
    std::vector<RankingTable> tables(unique.size());
    detail::parallel_for(static_cast<int>(unique.size()), jobs, [&](int u) {
        const NetworkCase base = detail::with_loads(intact_case, unique[u]->base_p, unique[u]->base_q);
        tables[u] = rank_all(base, transfer_schedule(base, cfg.target_scale), opts, 1);
    });

    EvalReport report;
    double mae_p_sum = 0.0, mae_q_sum = 0.0;
    // profiles retained for the testing-set-normalized MAE
    std::vector<Eigen::VectorXd> gen_ps, gen_qs, act_ps, act_qs;
    for (std::size_t i = 0; i < gen.size(); ++i) {
        const GeneratedSample& g = gen[i];
        const RankingTable& table = tables[slot_of.at(keys[i])];
        EvalRow row;
        row.index = g.index;
        row.base_seed = g.base_seed;
        row.outage = g.outage;
        row.feasible_count = static_cast<int>(table.rows.size());
        row.raw_edges_removed = g.raw_edges_removed;
        if (g.decode_failed) {
            row.excluded = true;
            row.exclusion_reason = "decode_failed";
        } else {
            try {
                row.oracle_rank = rank_of(g.outage, table);
                row.below_threshold = row.oracle_rank <= threshold_rank(row.feasible_count);
                // actual critical profile for the decoded outage at this base
                const auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const RankingRow& r) {
                    return r.outage.branch_index == g.outage.branch_index;
                });
                const double margin = it->max_lambda;
                const Eigen::VectorXd act_p = g.base_p * (1.0 + margin * (cfg.target_scale - 1.0));
                const Eigen::VectorXd act_q = g.base_q * (1.0 + margin * (cfg.target_scale - 1.0));
                const auto [mp, mq] = mae_profiles(g.gen_crit_p, g.gen_crit_q, act_p, act_q, nz);
                row.mae_p = mp;
                row.mae_q = mq;
                gen_ps.push_back(g.gen_crit_p);
                gen_qs.push_back(g.gen_crit_q);
                act_ps.push_back(act_p);
                act_qs.push_back(act_q);
            } catch (const NotInTable&) {
                row.excluded = true;
                row.exclusion_reason = "outage_not_rankable";
            }
        }
        if (row.excluded) {
            ++report.exclusions;
        } else {
            ++report.included;
            ++report.histogram[row.oracle_rank];
            if (row.below_threshold) report.score += 1.0;
            mae_p_sum += row.mae_p;
            mae_q_sum += row.mae_q;
        }
        report.rows.push_back(std::move(row));
    }
    if (report.included > 0) {
        report.score /= report.included;
        report.mae_p_trainnorm = mae_p_sum / report.included;
        report.mae_q_trainnorm = mae_q_sum / report.included;
        auto testset_mae = [](const std::vector<Eigen::VectorXd>& gen_v,
                              const std::vector<Eigen::VectorXd>& act_v) {
            // min-max statistics over load buses of each set separately
            double glo = std::numeric_limits<double>::infinity(), ghi = -glo;
            double alo = glo, ahi = -glo;
            for (std::size_t s = 0; s < gen_v.size(); ++s) {
                for (int i = 0; i < gen_v[s].size(); ++i) {
                    if (act_v[s][i] == 0.0 && gen_v[s][i] == 0.0) continue;
                    glo = std::min(glo, gen_v[s][i]);
                    ghi = std::max(ghi, gen_v[s][i]);
                    alo = std::min(alo, act_v[s][i]);
                    ahi = std::max(ahi, act_v[s][i]);
                }
            }
            const double gr = ghi > glo ? ghi - glo : 1.0;
            const double ar = ahi > alo ? ahi - alo : 1.0;
            double sum = 0.0;
            long count = 0;
            for (std::size_t s = 0; s < gen_v.size(); ++s) {
                for (int i = 0; i < gen_v[s].size(); ++i) {
                    if (act_v[s][i] == 0.0 && gen_v[s][i] == 0.0) continue;
                    sum += std::abs((gen_v[s][i] - glo) / gr - (act_v[s][i] - alo) / ar);
                    ++count;
                }
            }
            return count ? sum / count : 0.0;
        };
        report.mae_p = testset_mae(gen_ps, act_ps);
        report.mae_q = testset_mae(gen_qs, act_qs);
    }
    return report;
}

inline EvalReport evaluate(const Checkpoint& ck, const NetworkCase& intact_case, const EvalConfig& cfg,
                           const CpfOptions& opts = CpfOptions{}, int jobs = 1) {
    const std::vector<GeneratedSample> gen = draw_generated(ck, intact_case, cfg, jobs);
    return evaluate_generated(intact_case, gen, ck.normalizer, cfg, opts, jobs);
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Plain bar chart on a fixed 800x500 canvas.
inline std::string bar_chart_svg(const std::vector<std::pair<std::string, int>>& bars, const std::string& title,
                                 const std::string& x_label, const std::string& y_label) {
    const int width = 800, height = 500;
    const int left = 70, right = 20, top = 50, bottom = 60;
    const int plot_w = width - left - right, plot_h = height - top - bottom;
    int max_count = 1;
    for (const auto& [label, count] : bars) max_count = std::max(max_count, count);

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" viewBox=\"0 0 800 500\">\n";
    s += "<rect width=\"800\" height=\"500\" fill=\"white\"/>\n";
    s += "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"18\">" + title +
         "</text>\n";
    s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top + plot_h) + "\" x2=\"" +
         std::to_string(left + plot_w) + "\" y2=\"" + std::to_string(top + plot_h) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top) + "\" x2=\"" +
         std::to_string(left) + "\" y2=\"" + std::to_string(top + plot_h) + "\" stroke=\"black\"/>\n";
    for (int g = 0; g <= 4; ++g) {
        const int yv = max_count * g / 4;
        const int y = top + plot_h - plot_h * g / 4;
        s += "<text x=\"" + std::to_string(left - 8) + "\" y=\"" + std::to_string(y + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" + std::to_string(yv) +
             "</text>\n";
    }
    const int nbars = std::max<std::size_t>(1, bars.size());
    const int slot = plot_w / nbars;
    const int bw = std::max(4, slot * 7 / 10);
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const int h = static_cast<int>(static_cast<long long>(plot_h) * bars[i].second / max_count);
        const int x = left + static_cast<int>(i) * slot + (slot - bw) / 2;
        const int y = top + plot_h - h;
        s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(bw) + "\" height=\"" + std::to_string(h) + "\" fill=\"#4878a8\"/>\n";
        s += "<text x=\"" + std::to_string(x + bw / 2) + "\" y=\"" + std::to_string(top + plot_h + 18) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + bars[i].first +
             "</text>\n";
    }
    s += "<text x=\"" + std::to_string(left + plot_w / 2) + "\" y=\"" + std::to_string(height - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + x_label + "</text>\n";
    s += "<text x=\"20\" y=\"" + std::to_string(top + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" transform=\"rotate(-90 20 " +
         std::to_string(top + plot_h / 2) + ")\">" + y_label + "</text>\n";
    s += "</svg>\n";
    return s;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot write " + path.string());
    f << content;
    if (!f) throw IoFailure("write failed for " + path.string());
}

}  // namespace detail

inline nlohmann::json summary_json(const EvalReport& report) {
    nlohmann::json j;
    j["score"] = report.score;
    j["mae_p"] = report.mae_p;
    j["mae_q"] = report.mae_q;
    j["mae_p_trainnorm"] = report.mae_p_trainnorm;
    j["mae_q_trainnorm"] = report.mae_q_trainnorm;
    j["exclusions"] = report.exclusions;
    j["included"] = report.included;
    j["histogram"] = nlohmann::json::object();
    for (const auto& [rank, count] : report.histogram) j["histogram"][std::to_string(rank)] = count;
    j["config"] = report.config_echo;
    return j;
}

// Writes report.csv, histogram.csv, summary.json, rank_frequency.svg and
// score.svg; re-emitting the same report is byte-identical.
inline std::vector<std::string> emit_report(const EvalReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoFailure("cannot create " + out_dir);

    std::string rows = "sample,base_seed,outage_from,outage_to,oracle_rank,feasible_count,below_threshold,"
                       "excluded,exclusion_reason,mae_p,mae_q,raw_edges_removed\n";
    for (const EvalRow& r : report.rows) {
        rows += std::to_string(r.index) + ',' + std::to_string(r.base_seed) + ',' +
                std::to_string(r.outage.from) + ',' + std::to_string(r.outage.to) + ',' +
                std::to_string(r.oracle_rank) + ',' + std::to_string(r.feasible_count) + ',' +
                (r.below_threshold ? "1" : "0") + ',' + (r.excluded ? "1" : "0") + ',' + r.exclusion_reason +
                ',' + detail::fmt_double(r.mae_p) + ',' + detail::fmt_double(r.mae_q) + ',' +
                std::to_string(r.raw_edges_removed) + '\n';
    }

    std::string hist = "rank,count\n";
    std::vector<std::pair<std::string, int>> bars;
    for (const auto& [rank, count] : report.histogram) {
        hist += std::to_string(rank) + ',' + std::to_string(count) + '\n';
        bars.push_back({std::to_string(rank), count});
    }

    const std::string rank_svg =
        detail::bar_chart_svg(bars, "Generated contingency oracle ranks", "oracle rank", "count");
    const std::string score_svg = detail::bar_chart_svg(
        {{"below", static_cast<int>(std::lround(report.score * report.included))},
         {"above", report.included - static_cast<int>(std::lround(report.score * report.included))},
         {"excluded", report.exclusions}},
        "Threshold score " + detail::fmt_double(report.score), "outcome", "samples");

    const fs::path dir(out_dir);
    detail::write_file(dir / "report.csv", rows);
    detail::write_file(dir / "histogram.csv", hist);
    detail::write_file(dir / "summary.json", summary_json(report).dump(2) + "\n");
    detail::write_file(dir / "rank_frequency.svg", rank_svg);
    detail::write_file(dir / "score.svg", score_svg);
    return {(dir / "report.csv").string(), (dir / "histogram.csv").string(), (dir / "summary.json").string(),
            (dir / "rank_frequency.svg").string(), (dir / "score.svg").string()};
}

}  // namespace gridscreen
