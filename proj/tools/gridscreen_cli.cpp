// Command-line front end for the contingency screening toolkit: case
// inspection, power flow, continuation power flow, oracle ranking, dataset
// generation, model training, sampling and evaluation.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "gridscreen/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

void log_line(const std::string& msg) { std::cout << msg << std::endl; }

int cmd_case_info(const std::string& case_path, bool as_json, bool dump) {
    const gridscreen::NetworkCase c = gridscreen::load_case_file(case_path);
    if (dump) {
        std::cout << gridscreen::case_to_json(c).dump(2) << std::endl;
        return kExitOk;
    }
    const bool connected = gridscreen::is_connected(c);
    const int slack = c.buses[c.slack_index()].id;
    if (as_json) {
        nlohmann::json j{{"name", c.name},
                         {"buses", c.n()},
                         {"branches", c.branches.size()},
                         {"in_service_branches", c.in_service_branch_count()},
                         {"gens", c.gens.size()},
                         {"slack_bus", slack},
                         {"base_mva", c.base_mva},
                         {"connected", connected}};
        std::cout << j.dump(2) << std::endl;
    } else {
        std::printf("%s: %d buses, %zu branches (%d in service), %zu gens\n", c.name.c_str(), c.n(),
                    c.branches.size(), c.in_service_branch_count(), c.gens.size());
        std::printf("slack bus %d, base %.1f MVA, %s\n", slack, c.base_mva,
                    connected ? "connected" : "NOT connected");
    }
    return kExitOk;
}

int cmd_pf(const std::string& case_path, double tol, int max_iter) {
    const gridscreen::NetworkCase c = gridscreen::load_case_file(case_path);
    const gridscreen::PFSolution sol = gridscreen::solve_newton(c, gridscreen::flat_start(c), tol, max_iter);
    if (!sol.converged) {
        std::fprintf(stderr, "power flow did not converge (%d iterations, mismatch %.3e)\n", sol.iterations,
                     sol.max_mismatch);
        return kExitNumeric;
    }
    std::printf("converged in %d iterations, max mismatch %.3e pu\n", sol.iterations, sol.max_mismatch);
    std::printf("%6s %10s %10s\n", "bus", "vm(pu)", "va(deg)");
    for (int i = 0; i < c.n(); ++i)
        std::printf("%6d %10.5f %10.4f\n", c.buses[i].id, sol.state.vm[i], sol.state.va[i] * 180.0 / M_PI);
    return kExitOk;
}

int cmd_cpf(const std::string& case_path, double target_scale, const std::string& trace_path, int outage) {
    gridscreen::NetworkCase c = gridscreen::load_case_file(case_path);
    const gridscreen::TransferSchedule ts = gridscreen::transfer_schedule(c, target_scale);
    if (outage >= 0) c = gridscreen::apply_outage(c, outage);
    const gridscreen::CpfTrace tr = gridscreen::run_cpf(c, ts, gridscreen::CpfOptions{});
    const char* kind = nullptr;
    switch (tr.terminated) {
        case gridscreen::CpfTermination::NoseDetected: kind = "nose detected"; break;
        case gridscreen::CpfTermination::TargetReached: kind = "target reached"; break;
        case gridscreen::CpfTermination::StepUnderflow: kind = "step underflow"; break;
        case gridscreen::CpfTermination::CorrectorFailed: kind = "corrector failed"; break;
    }
    std::printf("max_lambda %.6f (%s), %zu trace points\n", tr.max_lambda, kind, tr.points.size());
    int arg = 0;
    const double vmin = tr.critical_state.vm.minCoeff(&arg);
    std::printf("critical point: vm_min %.4f pu at bus %d\n", vmin, c.buses[arg].id);
    if (!trace_path.empty()) {
        std::ofstream f(trace_path, std::ios::trunc);
        if (!f) {
            std::fprintf(stderr, "cannot write %s\n", trace_path.c_str());
            return kExitIo;
        }
        gridscreen::dump_cpf_trace_csv(tr, c, f);
    }
    return kExitOk;
}

int cmd_rank(const std::string& case_path, double target_scale, const std::string& out_path, int jobs) {
    const gridscreen::NetworkCase c = gridscreen::load_case_file(case_path);
    const gridscreen::TransferSchedule ts = gridscreen::transfer_schedule(c, target_scale);
    const gridscreen::RankingTable table = gridscreen::rank_all(c, ts, gridscreen::CpfOptions{}, jobs);
    if (out_path.empty()) {
        gridscreen::dump_ranking_csv(table, std::cout);
    } else {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) {
            std::fprintf(stderr, "cannot write %s\n", out_path.c_str());
            return kExitIo;
        }
        gridscreen::dump_ranking_csv(table, f);
    }
    for (const gridscreen::OutageId& o : table.unconverged)
        std::fprintf(stderr, "unconverged outage excluded: %d-%d\n", o.from, o.to);
    return kExitOk;
}

int run_stages(const std::string& config_path, int jobs, const std::string& upto) {
    gridscreen::RunConfig rc = gridscreen::load_run_config(config_path);
    gridscreen::PipelineContext ctx = gridscreen::make_pipeline_context(rc, jobs, log_line);
    gridscreen::stage_gen_data(ctx);
    if (upto == "gen-data") return kExitOk;
    gridscreen::stage_train(ctx);
    if (upto == "train") return kExitOk;
    gridscreen::stage_sample(ctx);
    if (upto == "sample") return kExitOk;
    const gridscreen::EvalReport report = gridscreen::run_pipeline(ctx);
    std::printf("score %.3f  mae_p %.5f  mae_q %.5f  exclusions %d\n", report.score, report.mae_p,
                report.mae_q, report.exclusions);
    std::printf("artifacts in %s\n", ctx.dir.string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffusion-based contingency screening toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    int jobs = 1;
    app.add_option("--jobs,-j", jobs, "worker parallelism (results are identical for any value)")
        ->capture_default_str();

    std::string case_path, config_path, out_path, trace_path;
    bool as_json = false;
    double tol = 1e-8, target_scale = 2.5;
    int max_iter = 30, outage = -1;

    bool dump_case = false;
    auto* info = app.add_subcommand("case-info", "parse a case and print a summary");
    info->add_option("case", case_path)->required();
    info->add_flag("--json", as_json, "machine-readable output");
    info->add_flag("--dump", dump_case, "print the canonical JSON dump of the case");

    auto* pf = app.add_subcommand("pf", "Newton-Raphson power flow from flat start");
    pf->add_option("case", case_path)->required();
    pf->add_option("--tol", tol)->capture_default_str();
    pf->add_option("--max-iter", max_iter)->capture_default_str();

    auto* cpf = app.add_subcommand("cpf", "continuation power flow to the collapse point");
    cpf->add_option("case", case_path)->required();
    cpf->add_option("--target-scale", target_scale)->capture_default_str();
    cpf->add_option("--trace", trace_path, "write the trace as CSV");
    cpf->add_option("--outage", outage, "apply this branch outage first");

    auto* rank = app.add_subcommand("rank", "rank all feasible N-1 line outages by load margin");
    rank->add_option("case", case_path)->required();
    rank->add_option("--target-scale", target_scale)->capture_default_str();
    rank->add_option("--out", out_path, "CSV output path (stdout otherwise)");

    const char* stage_names[] = {"gen-data", "train", "sample", "eval", "pipeline"};
    const char* stage_help[] = {"generate the worst-contingency dataset", "train the denoiser",
                                "sample candidate contingencies", "score samples against the oracle",
                                "run every stage"};
    std::vector<CLI::App*> stage_cmds;
    for (int i = 0; i < 5; ++i) {
        auto* sc = app.add_subcommand(stage_names[i], stage_help[i]);
        sc->add_option("--config", config_path, "run configuration JSON")->required();
        stage_cmds.push_back(sc);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (info->parsed()) return cmd_case_info(case_path, as_json, dump_case);
        if (pf->parsed()) return cmd_pf(case_path, tol, max_iter);
        if (cpf->parsed()) return cmd_cpf(case_path, target_scale, trace_path, outage);
        if (rank->parsed()) return cmd_rank(case_path, target_scale, out_path, jobs);
        for (int i = 0; i < 5; ++i)
            if (stage_cmds[i]->parsed())
                return run_stages(config_path, jobs, i == 4 ? "eval" : stage_names[i]);
    } catch (const gridscreen::BaseCaseDiverged& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const gridscreen::IoFailure& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const gridscreen::GridscreenError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }
    return kExitOk;
}
