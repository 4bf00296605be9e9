#pragma once

#include <Eigen/Dense>
#include <functional>
#include <ostream>
#include <thread>
#include <vector>

#include "gridscreen/dataset.hpp"
#include "gridscreen/tensor.hpp"
#include "gridscreen/unet.hpp"

namespace gridscreen {

struct BadRange : GridscreenError {
    using GridscreenError::GridscreenError;
};
struct BadTimestep : GridscreenError {
    using GridscreenError::GridscreenError;
};
struct NonFiniteLoss : GridscreenError {
    using GridscreenError::GridscreenError;
};

struct NoiseSchedule {
    int T = 0;
    Eigen::VectorXd beta, alpha, alpha_bar, sigma;
};

inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1 || !(beta_start > 0.0) || !(beta_end >= beta_start) || !(beta_end < 1.0))
        throw BadRange("make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.sigma.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
        s.sigma[t] = std::sqrt(s.beta[t]);
    }
    return s;
}

inline void dump_schedule_csv(const NoiseSchedule& s, std::ostream& os) {
    os << "t,beta,alpha,alpha_bar,sigma\n";
    char buf[160];
    for (int t = 0; t < s.T; ++t) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g\n", t + 1, s.beta[t], s.alpha[t],
                      s.alpha_bar[t], s.sigma[t]);
        os << buf;
    }
}

// Residual noise: the signed base-to-target discrepancy.
inline Tensor residual_noise(const Tensor& y0, const Tensor& x0) { return y0 - x0; }

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, deterministic in eps.
inline Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw BadTimestep("forward_diffuse: t out of range");
    const double ab = sched.alpha_bar[t - 1];
    return lincomb(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

// ---------------------------------------------------------------------------
// Training (gradient descent on || eps - eps_theta(x_t, t) ||^2)
// ---------------------------------------------------------------------------

struct TrainingConfig {
    int T = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int epochs = 2000;  // one optimizer step on one sampled minibatch per epoch
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
};

inline void validate_training_config(const TrainingConfig& c) {
    if (c.T < 10) throw GridscreenError("training: T must be at least 10");
    if (c.epochs < 1 || c.batch_size < 1 || !(c.learning_rate > 0.0))
        throw GridscreenError("training: epochs, batch_size, learning_rate must be positive");
    (void)make_schedule(c.T, c.beta_start, c.beta_end);
}

struct TrainingPair {
    Tensor x0;   // base channels + target channels initialized to base copies
    Tensor y0;   // full encoded sample
    Tensor eps;  // y0 - x0
};

inline std::vector<TrainingPair> build_training_pairs(const std::vector<ContingencySample>& samples,
                                                      const NetworkCase& intact_case, const Normalizer& nz) {
    std::vector<TrainingPair> pairs;
    pairs.reserve(samples.size());
    for (const ContingencySample& s : samples) {
        TrainingPair p;
        p.x0 = condition_tensor(s.base_p, s.base_q, intact_case, nz);
        p.y0 = encode_sample(s, intact_case, nz);
        // The regression target is the displacement the sampler must
        // re-impose: the reverse update *subtracts* scaled predictions, so
        // the residual is oriented base minus critical. Training on the
        // opposite orientation makes the chain erase the outage pattern and
        // anti-select the trained edges.
        p.eps = residual_noise(p.x0, p.y0);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

struct DiffusionBatch {
    std::vector<int> index;  // into the training pairs
    std::vector<int> t;      // per-member timestep in [1, T]
};

struct AdamState {
    ParamSet m, v;
    long step = 0;
};

inline void adam_step(ParamSet& params, const ParamSet& grads, AdamState& st, double lr, double b1 = 0.9,
                      double b2 = 0.999, double eps = 1e-8) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
    for (const NamedTensor& g : grads.items) {
        NamedTensor& p = params.at(g.name);
        NamedTensor& m = st.m.at(g.name);
        NamedTensor& v = st.v.at(g.name);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
            p.data[i] -= lr * (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + eps);
        }
    }
}

struct TrainResult {
    DenoiserParams params;
    std::vector<double> loss_history;  // one entry per epoch
};

// Minibatch gradient descent: per epoch draw a batch (shuffled stream without
// replacement), per member draw t, form x_t and regress eps. Per-sample
// gradients are reduced in member order so results are identical for any jobs
// count.
inline TrainResult train(const std::vector<TrainingPair>& pairs, const TrainingConfig& cfg,
                         const DenoiserParams& init, int jobs = 1) {
    if (pairs.empty()) throw GridscreenError("train: empty dataset");
    validate_training_config(cfg);
    const NoiseSchedule sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);

    TrainResult result;
    result.params = init;
    AdamState adam;
    adam.m = zero_params_like(init.config);
    adam.v = zero_params_like(init.config);

    Rng rng(cfg.seed);
    const int n = static_cast<int>(pairs.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    int pos = n;  // forces an initial shuffle
    auto next_index = [&]() {
        if (pos >= n) {
            for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
            pos = 0;
        }
        return order[pos++];
    };

    const int batch = std::min(cfg.batch_size, n);
    const std::size_t numel = pairs[0].x0.size();
    result.loss_history.reserve(cfg.epochs);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        DiffusionBatch db;
        for (int b = 0; b < batch; ++b) {
            db.index.push_back(next_index());
            db.t.push_back(1 + rng.uniform_int(cfg.T));
        }

        std::vector<ParamSet> member_grads(batch);
        std::vector<double> member_loss(batch, 0.0);
        const double scale = 2.0 / (static_cast<double>(batch) * static_cast<double>(numel));
        detail::parallel_for(batch, jobs, [&](int b) {
            const TrainingPair& pair = pairs[db.index[b]];
            const Tensor x_t = forward_diffuse(pair.x0, pair.eps, db.t[b], sched);
            unet_detail::Workspace ws;
            const Tensor eps_hat = unet_forward_ws(result.params, x_t, db.t[b], ws);
            Tensor diff = eps_hat - pair.eps;
            double sq = 0.0;
            for (double v : diff.v) sq += v * v;
            member_loss[b] = sq / static_cast<double>(numel);
            for (double& v : diff.v) v *= scale;
            member_grads[b] = unet_backward_ws(result.params, ws, diff);
        });

        double loss = 0.0;
        ParamSet grads = std::move(member_grads[0]);
        loss += member_loss[0];
        for (int b = 1; b < batch; ++b) {
            loss += member_loss[b];
            for (std::size_t k = 0; k < grads.items.size(); ++k) {
                NamedTensor& acc = grads.items[k];
                const NamedTensor& add = member_grads[b].items[k];
                for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += add.data[i];
            }
        }
        loss /= static_cast<double>(batch);
        if (!std::isfinite(loss))
            throw NonFiniteLoss("training diverged at epoch " + std::to_string(epoch + 1) + " (loss " +
                                std::to_string(loss) + ")");
        result.loss_history.push_back(loss);
        adam_step(result.params.tensors, grads, adam, cfg.learning_rate);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Ancestral sampling with base-state conditioning
// ---------------------------------------------------------------------------

namespace detail {

// Base channels re-noised to the manifold level of step t (t = 0 means exact).
inline void overwrite_base_channels(Tensor& y, const Tensor& cond, int t, const NoiseSchedule& sched) {
    const double f = t == 0 ? 1.0 : std::sqrt(sched.alpha_bar[t - 1]);
    const std::size_t plane = static_cast<std::size_t>(y.h) * y.w;
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) y.v[c * plane + i] = f * cond.v[c * plane + i];
}

}  // namespace detail

// One reverse chain. The denoiser is injectable so tests can run stubs; the
// stochastic flag exposes the sigma_t z term (z = 0 at t = 1 always).
//
// Conditioning: the known base channels are re-noised and overwritten after
// every step; the generated channels start at the condition forward-diffused
// to level T with the Gaussian draw in the residual slot, so the first
// denoiser input already lies on the conditional manifold the network was
// trained on.
template <typename DenoiserFn>
Tensor sample_chain(const NoiseSchedule& sched, const Tensor& base_condition, Rng& rng, DenoiserFn&& denoiser,
                    bool stochastic = true) {
    Tensor y(base_condition.c, base_condition.h, base_condition.w);
    for (double& v : y.v) v = rng.normal();
    {
        const double sab = std::sqrt(sched.alpha_bar[sched.T - 1]);
        const double snb = std::sqrt(1.0 - sched.alpha_bar[sched.T - 1]);
        const std::size_t plane = static_cast<std::size_t>(y.h) * y.w;
        for (std::size_t i = 3 * plane; i < y.v.size(); ++i)
            y.v[i] = sab * base_condition.v[i] + snb * y.v[i];
    }
    detail::overwrite_base_channels(y, base_condition, sched.T, sched);

    for (int t = sched.T; t >= 1; --t) {
        const Tensor eps_hat = denoiser(y, t);
        const double a = sched.alpha[t - 1];
        const double ab = sched.alpha_bar[t - 1];
        const double k = (1.0 - a) / std::sqrt(1.0 - ab);
        y = lincomb(1.0 / std::sqrt(a), y, -k / std::sqrt(a), eps_hat);
        if (t > 1 && stochastic) {
            const double s = sched.sigma[t - 1];
            for (double& v : y.v) v += s * rng.normal();
        }
        detail::overwrite_base_channels(y, base_condition, t - 1, sched);
    }
    return y;
}

inline Tensor sample(const DenoiserParams& params, const NoiseSchedule& sched, const Tensor& base_condition,
                     Rng& rng) {
    return sample_chain(sched, base_condition, rng,
                        [&](const Tensor& y, int t) { return unet_forward(params, y, t); });
}

}  // namespace gridscreen
