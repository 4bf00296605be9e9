#pragma once

#include <Eigen/Dense>
#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "gridscreen/common.hpp"
#include "gridscreen/contingency.hpp"
#include "gridscreen/tensor.hpp"
#include "json.hpp"

namespace gridscreen {

// One record of the worst-contingency corpus: a perturbed base load profile,
// the drawn line outage, and the load profile at the collapse point.
struct ContingencySample {
    Eigen::VectorXd base_p, base_q;  // MW / MVar
    OutageId outage;
    Eigen::VectorXd crit_p, crit_q;  // MW / MVar at the saddle point
    double max_lambda = 0.0;
    std::uint64_t seed = 0;
};

struct TooFewConverged : GridscreenError {
    using GridscreenError::GridscreenError;
};
struct NoEdgeSelected : GridscreenError {
    using GridscreenError::GridscreenError;
};

// Image channel layout.
enum GridChannel : int {
    kBaseP = 0,
    kBaseQ = 1,
    kBaseC = 2,
    kTgtP = 3,
    kTgtQ = 4,
    kTgtC = 5,
};

// Per-channel min/max fit on the training split. Load channels map into
// [0,1]; connection channels pass through unchanged.
struct Normalizer {
    std::array<double, 6> lo{0, 0, 0, 0, 0, 0};
    std::array<double, 6> hi{1, 1, 1, 1, 1, 1};

    static bool is_load_channel(int ch) { return ch != kBaseC && ch != kTgtC; }

    double normalize(int ch, double v) const {
        if (!is_load_channel(ch)) return v;
        return (v - lo[ch]) / (hi[ch] - lo[ch]);
    }
    double denormalize(int ch, double v) const {
        if (!is_load_channel(ch)) return v;
        return lo[ch] + v * (hi[ch] - lo[ch]);
    }
};

inline Normalizer fit_normalizer(const std::vector<ContingencySample>& samples) {
    if (samples.empty()) throw GridscreenError("fit_normalizer: empty training split");
    Normalizer nz;
    auto fit = [](int, const auto& get, const std::vector<ContingencySample>& ss, double& lo, double& hi) {
        lo = std::numeric_limits<double>::infinity();
        hi = -std::numeric_limits<double>::infinity();
        for (const ContingencySample& s : ss) {
            const Eigen::VectorXd& v = get(s);
            lo = std::min(lo, v.minCoeff());
            hi = std::max(hi, v.maxCoeff());
        }
    };
    fit(kBaseP, [](const ContingencySample& s) -> const Eigen::VectorXd& { return s.base_p; }, samples,
        nz.lo[kBaseP], nz.hi[kBaseP]);
    fit(kBaseQ, [](const ContingencySample& s) -> const Eigen::VectorXd& { return s.base_q; }, samples,
        nz.lo[kBaseQ], nz.hi[kBaseQ]);
    fit(kTgtP, [](const ContingencySample& s) -> const Eigen::VectorXd& { return s.crit_p; }, samples,
        nz.lo[kTgtP], nz.hi[kTgtP]);
    fit(kTgtQ, [](const ContingencySample& s) -> const Eigen::VectorXd& { return s.crit_q; }, samples,
        nz.lo[kTgtQ], nz.hi[kTgtQ]);
    for (int ch : {kBaseP, kBaseQ, kTgtP, kTgtQ}) {
        if (!(nz.hi[ch] > nz.lo[ch]))
            throw GridscreenError("fit_normalizer: degenerate load channel " + std::to_string(ch));
    }
    return nz;
}

// ---------------------------------------------------------------------------
// Sampling (Algorithm: perturb, draw outage, solve CPF, keep or discard)
// ---------------------------------------------------------------------------

// Each bus load scaled by an independent factor in [0.5, 1.5]: the factor is
// 1 + clamp(z/3, -1, 1)/2 with z standard normal, shared between P and Q so
// the power factor is preserved. Zero loads stay zero.
inline NetworkCase perturb_loads(const NetworkCase& c, Rng& rng) {
    NetworkCase out = c;
    for (Bus& b : out.buses) {
        const double z = rng.normal();
        const double factor = 1.0 + 0.5 * std::clamp(z / 3.0, -1.0, 1.0);
        b.pd *= factor;
        b.qd *= factor;
    }
    return out;
}

inline std::optional<ContingencySample> generate_sample(const NetworkCase& c, double schedule_scale, Rng& rng,
                                                        const CpfOptions& opts = CpfOptions{}) {
    const NetworkCase base = perturb_loads(c, rng);

    std::vector<int> in_service;
    for (int k = 0; k < static_cast<int>(base.branches.size()); ++k)
        if (base.branches[k].status) in_service.push_back(k);
    if (in_service.empty()) return std::nullopt;
    const int branch_index = in_service[rng.uniform_int(static_cast<int>(in_service.size()))];

    const NetworkCase outaged = apply_outage(base, branch_index);
    if (!is_connected(outaged)) return std::nullopt;

    const TransferSchedule ts = transfer_schedule(base, schedule_scale);
    CpfTrace trace;
    try {
        trace = run_cpf(outaged, ts, opts);
    } catch (const GridscreenError&) {
        return std::nullopt;
    }
    if (trace.terminated != CpfTermination::NoseDetected || !(trace.max_lambda > 0.0)) return std::nullopt;

    ContingencySample s;
    s.base_p = Eigen::VectorXd::Zero(base.n());
    s.base_q = Eigen::VectorXd::Zero(base.n());
    for (int i = 0; i < base.n(); ++i) {
        s.base_p[i] = base.buses[i].pd;
        s.base_q[i] = base.buses[i].qd;
    }
    s.outage = {branch_index, base.branches[branch_index].from, base.branches[branch_index].to};
    s.max_lambda = trace.max_lambda;
    // critical loads on the linear transfer ray
    s.crit_p = s.base_p + trace.max_lambda * ts.dp * base.base_mva;
    s.crit_q = s.base_q + trace.max_lambda * ts.dq * base.base_mva;
    return s;
}

// Attempts N samples with per-attempt derived seeds, keeps the lowest-margin
// tenth (rounded up) of the converged ones, sorted ascending.
inline std::vector<ContingencySample> generate_dataset(const NetworkCase& c, int attempts, double schedule_scale,
                                                       std::uint64_t master_seed, int jobs = 1,
                                                       const CpfOptions& opts = CpfOptions{}) {
    if (attempts < 10) throw GridscreenError("generate_dataset: need at least 10 attempts");
    std::vector<std::optional<ContingencySample>> slots(attempts);
    detail::parallel_for(attempts, jobs, [&](int i) {
        const std::uint64_t seed = derive_seed(master_seed, 1, static_cast<std::uint64_t>(i));
        Rng rng(seed);
        slots[i] = generate_sample(c, schedule_scale, rng, opts);
        if (slots[i]) slots[i]->seed = seed;
    });

    std::vector<ContingencySample> converged;
    for (auto& s : slots)
        if (s) converged.push_back(std::move(*s));
    if (static_cast<int>(converged.size()) < 10)
        throw TooFewConverged("only " + std::to_string(converged.size()) + " attempts converged");

    std::sort(converged.begin(), converged.end(), [](const ContingencySample& a, const ContingencySample& b) {
        if (a.max_lambda != b.max_lambda) return a.max_lambda < b.max_lambda;
        return a.seed < b.seed;
    });
    const std::size_t keep = (converged.size() + 9) / 10;  // ceil(0.1 * count)
    converged.resize(keep);
    return converged;
}

// ---------------------------------------------------------------------------
// Image encoding
// ---------------------------------------------------------------------------

// 6 x N x N tensor: normalized base loads on the diagonals of channels 0-1,
// intact connection matrix in channel 2, critical loads in channels 3-4 and
// the post-outage connection matrix in channel 5.
inline Tensor encode_sample(const ContingencySample& s, const NetworkCase& intact_case, const Normalizer& nz) {
    const int n = intact_case.n();
    if (s.base_p.size() != n) throw ShapeMismatch("sample dimension does not match case");
    Tensor t(6, n, n);
    const ConnectionMatrix intact = connection_matrix(intact_case);
    const ConnectionMatrix outaged = connection_matrix(apply_outage(intact_case, s.outage.branch_index));
    for (int i = 0; i < n; ++i) {
        t.at(kBaseP, i, i) = nz.normalize(kBaseP, s.base_p[i]);
        t.at(kBaseQ, i, i) = nz.normalize(kBaseQ, s.base_q[i]);
        t.at(kTgtP, i, i) = nz.normalize(kTgtP, s.crit_p[i]);
        t.at(kTgtQ, i, i) = nz.normalize(kTgtQ, s.crit_q[i]);
        for (int j = 0; j < n; ++j) {
            t.at(kBaseC, i, j) = intact.c(i, j);
            t.at(kTgtC, i, j) = outaged.c(i, j);
        }
    }
    return t;
}

// Conditioning tensor for a bare base state: true base channels, target
// channels initialized to copies of them.
inline Tensor condition_tensor(const Eigen::VectorXd& base_p, const Eigen::VectorXd& base_q,
                               const NetworkCase& intact_case, const Normalizer& nz) {
    const int n = intact_case.n();
    Tensor t(6, n, n);
    const ConnectionMatrix intact = connection_matrix(intact_case);
    for (int i = 0; i < n; ++i) {
        t.at(kBaseP, i, i) = nz.normalize(kBaseP, base_p[i]);
        t.at(kBaseQ, i, i) = nz.normalize(kBaseQ, base_q[i]);
        t.at(kTgtP, i, i) = nz.normalize(kTgtP, base_p[i]);
        t.at(kTgtQ, i, i) = nz.normalize(kTgtQ, base_q[i]);
        for (int j = 0; j < n; ++j) {
            t.at(kBaseC, i, j) = intact.c(i, j);
            t.at(kTgtC, i, j) = intact.c(i, j);
        }
    }
    return t;
}

struct DecodedContingency {
    Eigen::VectorXd crit_p, crit_q;  // MW / MVar, clamped at >= 0
    OutageId outage;
};

// Raw 0.5-threshold binarization of a connection channel, for diagnostics.
inline Eigen::MatrixXi threshold_binarize(const Tensor& t, int channel) {
    Eigen::MatrixXi m(t.h, t.w);
    for (int i = 0; i < t.h; ++i)
        for (int j = 0; j < t.w; ++j) m(i, j) = t.at(channel, i, j) >= 0.5 ? 1 : 0;
    return m;
}

// The generated outage is the intact-connected bus pair whose symmetrized
// channel-5 value is smallest (the edge the sampler removed most strongly),
// mapped back to the first in-service branch joining the pair.
inline DecodedContingency decode_generated(const Tensor& t, const NetworkCase& intact_case, const Normalizer& nz) {
    const int n = intact_case.n();
    if (t.c != 6 || t.h != n || t.w != n) throw ShapeMismatch("tensor dimension does not match case");
    if (!t.all_finite()) throw NoEdgeSelected("generated tensor is not finite");

    DecodedContingency out;
    out.crit_p = Eigen::VectorXd::Zero(n);
    out.crit_q = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        out.crit_p[i] = std::max(0.0, nz.denormalize(kTgtP, t.at(kTgtP, i, i)));
        out.crit_q[i] = std::max(0.0, nz.denormalize(kTgtQ, t.at(kTgtQ, i, i)));
    }

    const ConnectionMatrix intact = connection_matrix(intact_case);
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (intact.c(i, j) == 0) continue;
            const double score = 0.5 * (t.at(kTgtC, i, j) + t.at(kTgtC, j, i));
            if (score < best) {
                best = score;
                bi = i;
                bj = j;
            }
        }
    }
    if (bi < 0) throw NoEdgeSelected("case has no intact edges");

    for (int k = 0; k < static_cast<int>(intact_case.branches.size()); ++k) {
        const Branch& br = intact_case.branches[k];
        if (!br.status) continue;
        const int f = intact_case.bus_index(br.from);
        const int tt = intact_case.bus_index(br.to);
        if ((f == bi && tt == bj) || (f == bj && tt == bi)) {
            out.outage = {k, br.from, br.to};
            return out;
        }
    }
    throw NoEdgeSelected("selected pair has no in-service branch");  // unreachable by construction
}

// ---------------------------------------------------------------------------
// Persistence: JSON Lines dataset + sidecar normalizer
// ---------------------------------------------------------------------------

inline nlohmann::json sample_to_json(const ContingencySample& s) {
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    return nlohmann::json{{"base_p", vec(s.base_p)},
                          {"base_q", vec(s.base_q)},
                          {"outage",
                           {{"branch_index", s.outage.branch_index}, {"from", s.outage.from}, {"to", s.outage.to}}},
                          {"crit_p", vec(s.crit_p)},
                          {"crit_q", vec(s.crit_q)},
                          {"max_lambda", s.max_lambda},
                          {"seed", s.seed}};
}

inline ContingencySample sample_from_json(const nlohmann::json& j) {
    auto vec = [](const nlohmann::json& a) {
        Eigen::VectorXd v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
        return v;
    };
    ContingencySample s;
    s.base_p = vec(j.at("base_p"));
    s.base_q = vec(j.at("base_q"));
    s.crit_p = vec(j.at("crit_p"));
    s.crit_q = vec(j.at("crit_q"));
    s.outage.branch_index = j.at("outage").at("branch_index").get<int>();
    s.outage.from = j.at("outage").at("from").get<int>();
    s.outage.to = j.at("outage").at("to").get<int>();
    s.max_lambda = j.at("max_lambda").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

inline void write_dataset_jsonl(const std::vector<ContingencySample>& samples, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw GridscreenError("cannot write " + path);
    for (const ContingencySample& s : samples) f << sample_to_json(s).dump() << '\n';
}

inline std::vector<ContingencySample> read_dataset_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw GridscreenError("cannot read " + path);
    std::vector<ContingencySample> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(sample_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

inline nlohmann::json normalizer_to_json(const Normalizer& nz) {
    return nlohmann::json{{"lo", nz.lo}, {"hi", nz.hi}};
}

inline Normalizer normalizer_from_json(const nlohmann::json& j) {
    Normalizer nz;
    for (int ch = 0; ch < 6; ++ch) {
        nz.lo[ch] = j.at("lo")[ch].get<double>();
        nz.hi[ch] = j.at("hi")[ch].get<double>();
    }
    return nz;
}

}  // namespace gridscreen
