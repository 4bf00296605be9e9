#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "gridscreen/evaluation.hpp"

namespace gridscreen {

// Everything one end-to-end run needs; defaults are materialized so the
// echoed config fully describes the run.
struct RunConfig {
    std::string case_path;
    std::string out_dir;
    double target_scale = 2.5;
    int dataset_attempts = 5000;
    TrainingConfig training;
    UNetConfig unet;  // pad_to resolved against the case at load time
    EvalConfig eval;
    std::uint64_t master_seed = 1;

    bool training_seed_explicit = false;
    bool eval_seed_explicit = false;

    void resolve(const NetworkCase& c) {
        unet.pad_to = default_pad(c.n(), unet.depth);
        if (!training_seed_explicit) training.seed = derive_seed(master_seed, 10);
        if (!eval_seed_explicit) eval.seed = derive_seed(master_seed, 20);
        eval.target_scale = target_scale;
    }
};

inline nlohmann::json run_config_to_json(const RunConfig& rc) {
    return nlohmann::json{
        {"case_path", rc.case_path},
        {"out_dir", rc.out_dir},
        {"target_scale", rc.target_scale},
        {"dataset", {{"attempts", rc.dataset_attempts}}},
        {"training",
         {{"T", rc.training.T},
          {"beta_start", rc.training.beta_start},
          {"beta_end", rc.training.beta_end},
          {"epochs", rc.training.epochs},
          {"batch_size", rc.training.batch_size},
          {"learning_rate", rc.training.learning_rate},
          {"seed", rc.training.seed}}},
        {"unet",
         {{"in_channels", rc.unet.in_channels},
          {"base_width", rc.unet.base_width},
          {"depth", rc.unet.depth},
          {"time_embed_dim", rc.unet.time_embed_dim},
          {"pad_to", rc.unet.pad_to}}},
        {"eval",
         {{"n_eval_samples", rc.eval.n_eval_samples},
          {"seed", rc.eval.seed},
          {"target_scale", rc.eval.target_scale}}},
        {"master_seed", rc.master_seed}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig rc;
    rc.case_path = j.at("case_path").get<std::string>();
    rc.out_dir = j.value("out_dir", std::string("out"));
    rc.target_scale = j.value("target_scale", 2.5);
    if (j.contains("dataset")) rc.dataset_attempts = j["dataset"].value("attempts", 5000);
    if (j.contains("training")) {
        const auto& t = j["training"];
        rc.training.T = t.value("T", rc.training.T);
        rc.training.beta_start = t.value("beta_start", rc.training.beta_start);
        rc.training.beta_end = t.value("beta_end", rc.training.beta_end);
        rc.training.epochs = t.value("epochs", rc.training.epochs);
        rc.training.batch_size = t.value("batch_size", rc.training.batch_size);
        rc.training.learning_rate = t.value("learning_rate", rc.training.learning_rate);
        if (t.contains("seed")) {
            rc.training.seed = t["seed"].get<std::uint64_t>();
            rc.training_seed_explicit = true;
        }
    }
    if (j.contains("unet")) {
        const auto& u = j["unet"];
        rc.unet.base_width = u.value("base_width", rc.unet.base_width);
        rc.unet.depth = u.value("depth", rc.unet.depth);
        rc.unet.time_embed_dim = u.value("time_embed_dim", rc.unet.time_embed_dim);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        rc.eval.n_eval_samples = e.value("n_eval_samples", rc.eval.n_eval_samples);
        if (e.contains("seed")) {
            rc.eval.seed = e["seed"].get<std::uint64_t>();
            rc.eval_seed_explicit = true;
        }
    }
    rc.master_seed = j.value("master_seed", 1);
    // environment override for the output directory only
    if (const char* env = std::getenv("GRIDSCREEN_OUT_DIR")) rc.out_dir = env;
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw GridscreenError("cannot open config " + path);
    nlohmann::json j;
    f >> j;
    RunConfig rc = run_config_from_json(j);
    // a relative case path is resolved against the config file's directory
    // (or its parent, so configs/ can reference ../data/)
    const std::filesystem::path cp(rc.case_path);
    if (cp.is_relative() && !std::filesystem::exists(cp)) {
        const std::filesystem::path dir = std::filesystem::absolute(path).parent_path();
        for (const std::filesystem::path& root : {dir, dir.parent_path()}) {
            if (std::filesystem::exists(root / cp)) {
                rc.case_path = (root / cp).string();
                break;
            }
        }
    }
    return rc;
}

// ---------------------------------------------------------------------------
// Stage orchestration with content-hash skipping
// ---------------------------------------------------------------------------

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw GridscreenError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::uint64_t json_hash(const nlohmann::json& j) { return fnv1a(j.dump()); }

inline bool stage_done(const std::filesystem::path& dir, const std::string& stage, std::uint64_t hash,
                       const std::vector<std::string>& outputs) {
    const auto done = dir / (stage + ".done.json");
    if (!std::filesystem::exists(done)) return false;
    try {
        nlohmann::json j;
        std::ifstream f(done);
        f >> j;
        if (j.value("hash", std::uint64_t{0}) != hash) return false;
    } catch (...) {
        return false;
    }
    for (const std::string& out : outputs)
        if (!std::filesystem::exists(dir / out)) return false;
    return true;
}

inline void mark_stage_done(const std::filesystem::path& dir, const std::string& stage, std::uint64_t hash) {
    nlohmann::json j{{"stage", stage}, {"hash", hash}};
    write_file(dir / (stage + ".done.json"), j.dump(2) + "\n");
}

}  // namespace detail

struct PipelineContext {
    RunConfig config;
    NetworkCase intact_case;
    std::filesystem::path dir;
    int jobs = 1;
    std::function<void(const std::string&)> log = [](const std::string&) {};

    std::uint64_t gen_hash = 0, train_hash = 0, sample_hash = 0, eval_hash = 0;
};

inline PipelineContext make_pipeline_context(const RunConfig& rc_in, int jobs,
                                             std::function<void(const std::string&)> log = nullptr) {
    PipelineContext ctx;
    ctx.config = rc_in;
    ctx.intact_case = load_case_file(rc_in.case_path);
    ctx.config.resolve(ctx.intact_case);
    ctx.dir = ctx.config.out_dir;
    ctx.jobs = std::max(1, jobs);
    if (log) ctx.log = std::move(log);
    std::filesystem::create_directories(ctx.dir);

    const nlohmann::json echo = run_config_to_json(ctx.config);
    const std::uint64_t case_hash = fnv1a(detail::read_file(rc_in.case_path));
    ctx.gen_hash = detail::json_hash(nlohmann::json{{"case", case_hash},
                                                    {"attempts", ctx.config.dataset_attempts},
                                                    {"target_scale", ctx.config.target_scale},
                                                    {"master_seed", ctx.config.master_seed}});
    ctx.train_hash = detail::json_hash(nlohmann::json{{"gen", ctx.gen_hash},
                                                      {"training", echo["training"]},
                                                      {"unet", echo["unet"]}});
    ctx.sample_hash = detail::json_hash(nlohmann::json{{"train", ctx.train_hash}, {"eval", echo["eval"]}});
    ctx.eval_hash = detail::json_hash(nlohmann::json{{"sample", ctx.sample_hash}});
    return ctx;
}

// --- gen-data ---------------------------------------------------------------

inline void stage_gen_data(PipelineContext& ctx) {
    const std::vector<std::string> outputs{"dataset.jsonl", "normalizer.json"};
    if (detail::stage_done(ctx.dir, "gen_data", ctx.gen_hash, outputs)) {
        ctx.log("gen-data: up to date, skipped");
        return;
    }
    ctx.log("gen-data: sampling " + std::to_string(ctx.config.dataset_attempts) + " attempts");
    const auto ds = generate_dataset(ctx.intact_case, ctx.config.dataset_attempts, ctx.config.target_scale,
                                     ctx.config.master_seed, ctx.jobs);
    const Normalizer nz = fit_normalizer(ds);
    write_dataset_jsonl(ds, (ctx.dir / "dataset.jsonl").string());
    detail::write_file(ctx.dir / "normalizer.json", normalizer_to_json(nz).dump(2) + "\n");
    detail::mark_stage_done(ctx.dir, "gen_data", ctx.gen_hash);
    ctx.log("gen-data: kept " + std::to_string(ds.size()) + " worst samples");
}

// --- train -------------------------------------------------------------------

inline void stage_train(PipelineContext& ctx) {
    const std::vector<std::string> outputs{"checkpoint.bin", "loss_history.csv"};
    if (detail::stage_done(ctx.dir, "train", ctx.train_hash, outputs)) {
        ctx.log("train: up to date, skipped");
        return;
    }
    const auto ds = read_dataset_jsonl((ctx.dir / "dataset.jsonl").string());
    Normalizer nz;
    {
        std::ifstream f(ctx.dir / "normalizer.json");
        nlohmann::json j;
        f >> j;
        nz = normalizer_from_json(j);
    }
    ctx.log("train: " + std::to_string(ds.size()) + " samples, " + std::to_string(ctx.config.training.epochs) +
            " epochs");
    const auto pairs = build_training_pairs(ds, ctx.intact_case, nz);
    const DenoiserParams init = init_params(ctx.config.unet, derive_seed(ctx.config.master_seed, 11));
    const TrainResult res = train(pairs, ctx.config.training, init, ctx.jobs);

    Checkpoint ck;
    ck.params = res.params;
    ck.T = ctx.config.training.T;
    ck.beta_start = ctx.config.training.beta_start;
    ck.beta_end = ctx.config.training.beta_end;
    ck.normalizer = nz;
    ck.case_name = ctx.intact_case.name;
    ck.n = ctx.intact_case.n();
    save_checkpoint(ck, (ctx.dir / "checkpoint.bin").string());

    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < res.loss_history.size(); ++e)
        csv += std::to_string(e + 1) + ',' + detail::fmt_double(res.loss_history[e]) + '\n';
    detail::write_file(ctx.dir / "loss_history.csv", csv);
    {
        std::ostringstream ss;
        dump_schedule_csv(make_schedule(ck.T, ck.beta_start, ck.beta_end), ss);
        detail::write_file(ctx.dir / "schedule.csv", ss.str());
    }
    detail::mark_stage_done(ctx.dir, "train", ctx.train_hash);
    ctx.log("train: final loss " + detail::fmt_double(res.loss_history.back()));
}

// --- sample -------------------------------------------------------------------

inline nlohmann::json generated_to_json(const GeneratedSample& g) {
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return nlohmann::json{{"index", g.index},
                          {"base_seed", g.base_seed},
                          {"base_p", vec(g.base_p)},
                          {"base_q", vec(g.base_q)},
                          {"outage",
                           {{"branch_index", g.outage.branch_index}, {"from", g.outage.from}, {"to", g.outage.to}}},
                          {"gen_crit_p", vec(g.gen_crit_p)},
                          {"gen_crit_q", vec(g.gen_crit_q)},
                          {"raw_edges_removed", g.raw_edges_removed},
                          {"decode_failed", g.decode_failed}};
}

inline GeneratedSample generated_from_json(const nlohmann::json& j) {
    auto vec = [](const nlohmann::json& a) {
        Eigen::VectorXd v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
        return v;
    };
    GeneratedSample g;
    g.index = j.at("index").get<int>();
    g.base_seed = j.at("base_seed").get<std::uint64_t>();
    g.base_p = vec(j.at("base_p"));
    g.base_q = vec(j.at("base_q"));
    g.outage.branch_index = j.at("outage").at("branch_index").get<int>();
    g.outage.from = j.at("outage").at("from").get<int>();
    g.outage.to = j.at("outage").at("to").get<int>();
    g.gen_crit_p = vec(j.at("gen_crit_p"));
    g.gen_crit_q = vec(j.at("gen_crit_q"));
    g.raw_edges_removed = j.at("raw_edges_removed").get<int>();
    g.decode_failed = j.at("decode_failed").get<bool>();
    return g;
}

inline void stage_sample(PipelineContext& ctx) {
    const std::vector<std::string> outputs{"generated.jsonl"};
    if (detail::stage_done(ctx.dir, "sample", ctx.sample_hash, outputs)) {
        ctx.log("sample: up to date, skipped");
        return;
    }
    const Checkpoint ck = load_checkpoint((ctx.dir / "checkpoint.bin").string());
    ctx.log("sample: drawing " + std::to_string(ctx.config.eval.n_eval_samples) + " candidates");
    const auto gen = draw_generated(ck, ctx.intact_case, ctx.config.eval, ctx.jobs);
    std::ofstream f(ctx.dir / "generated.jsonl", std::ios::trunc);
    if (!f) throw IoFailure("cannot write generated.jsonl");
    for (const GeneratedSample& g : gen) f << generated_to_json(g).dump() << '\n';
    detail::mark_stage_done(ctx.dir, "sample", ctx.sample_hash);
}

// --- eval ---------------------------------------------------------------------

inline EvalReport stage_eval(PipelineContext& ctx) {
    const Checkpoint ck = load_checkpoint((ctx.dir / "checkpoint.bin").string());
    std::vector<GeneratedSample> gen;
    {
        std::ifstream f(ctx.dir / "generated.jsonl");
        if (!f) throw IoFailure("cannot read generated.jsonl");
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) gen.push_back(generated_from_json(nlohmann::json::parse(line)));
    }
    ctx.log("eval: ranking " + std::to_string(gen.size()) + " generated contingencies against the oracle");
    EvalReport report = evaluate_generated(ctx.intact_case, gen, ck.normalizer, ctx.config.eval, CpfOptions{},
                                           ctx.jobs);
    report.config_echo = run_config_to_json(ctx.config);
    emit_report(report, ctx.dir.string());
    detail::mark_stage_done(ctx.dir, "eval", ctx.eval_hash);
    return report;
}

inline EvalReport run_pipeline(PipelineContext& ctx) {
    stage_gen_data(ctx);
    stage_train(ctx);
    stage_sample(ctx);
    const std::vector<std::string> outputs{"summary.json", "report.csv", "histogram.csv"};
    if (detail::stage_done(ctx.dir, "eval", ctx.eval_hash, outputs)) {
        ctx.log("eval: up to date, skipped");
        EvalReport report;
        std::ifstream f(ctx.dir / "summary.json");
        nlohmann::json j;
        f >> j;
        report.score = j.value("score", 0.0);
        report.mae_p = j.value("mae_p", 0.0);
        report.mae_q = j.value("mae_q", 0.0);
        report.exclusions = j.value("exclusions", 0);
        report.included = j.value("included", 0);
        report.config_echo = j.value("config", nlohmann::json::object());
        return report;
    }
    return stage_eval(ctx);
}

}  // namespace gridscreen
