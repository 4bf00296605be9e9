#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "gridscreen/common.hpp"
#include "gridscreen/tensor.hpp"

namespace gridscreen {

struct UNetConfig {
    int in_channels = 6;
    int base_width = 32;
    int depth = 2;
    int time_embed_dim = 64;
    int pad_to = 8;
};

inline int default_pad(int n, int depth) {
    const int mult = 1 << depth;
    int p = ((n + mult - 1) / mult) * mult;
    return std::max(p, mult * 2);
}

inline void validate_unet_config(const UNetConfig& cfg) {
    if (cfg.base_width < 8) throw GridscreenError("unet: base_width must be at least 8");
    if (cfg.depth < 1) throw GridscreenError("unet: depth must be at least 1");
    if (cfg.time_embed_dim < 8 || cfg.time_embed_dim % 2 != 0)
        throw GridscreenError("unet: time_embed_dim must be even and at least 8");
    if (cfg.pad_to % (1 << cfg.depth) != 0) throw GridscreenError("unet: pad_to must be a multiple of 2^depth");
}

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;

    std::size_t numel() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }
};

struct ParamSet {
    std::vector<NamedTensor> items;

    NamedTensor& add(const std::string& name, std::vector<int> shape) {
        items.push_back({name, std::move(shape), {}});
        items.back().data.assign(items.back().numel(), 0.0);
        return items.back();
    }
    int index_of(const std::string& name) const {
        for (int i = 0; i < static_cast<int>(items.size()); ++i)
            if (items[i].name == name) return i;
        return -1;
    }
    const NamedTensor& at(const std::string& name) const {
        const int i = index_of(name);
        if (i < 0) throw GridscreenError("unknown parameter tensor " + name);
        return items[i];
    }
    NamedTensor& at(const std::string& name) {
        const int i = index_of(name);
        if (i < 0) throw GridscreenError("unknown parameter tensor " + name);
        return items[i];
    }
    bool has(const std::string& name) const { return index_of(name) >= 0; }
};

struct DenoiserParams {
    UNetConfig config;
    ParamSet tensors;
    std::set<std::string> frozen;  // names excluded from gradient results
};

namespace unet_detail {

// Stage names in execution order: enc0, down1..down{depth}, mid,
// up{depth-1}..up0.
struct StageSpec {
    std::string name;
    int cin = 0, cout = 0, stride = 1;
};

inline std::vector<StageSpec> stage_specs(const UNetConfig& cfg) {
    std::vector<StageSpec> specs;
    const int w = cfg.base_width;
    specs.push_back({"enc0", cfg.in_channels, w, 1});
    for (int l = 1; l <= cfg.depth; ++l) specs.push_back({"down" + std::to_string(l), w << (l - 1), w << l, 2});
    specs.push_back({"mid", w << cfg.depth, w << cfg.depth, 1});
    for (int l = cfg.depth - 1; l >= 0; --l)
        specs.push_back({"up" + std::to_string(l), (w << (l + 1)) + (w << l), w << l, 1});
    return specs;
}

inline int norm_groups(int channels) {
    for (int g = 8; g >= 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

constexpr double kGnEps = 1e-5;

// ---------------------------------------------------------------------------
// Primitive layers
// ---------------------------------------------------------------------------

inline Tensor conv3x3(const Tensor& x, const NamedTensor& w, const NamedTensor& b, int stride) {
    const int cin = w.shape[1], cout = w.shape[0];
    const int hout = (x.h - 1) / stride + 1, wout = (x.w - 1) / stride + 1;
    Tensor y(cout, hout, wout);
    for (int co = 0; co < cout; ++co) {
        const double bias = b.data[co];
        for (int i = 0; i < hout * wout; ++i) y.v[static_cast<std::size_t>(co) * hout * wout + i] = bias;
        for (int ci = 0; ci < cin; ++ci) {
            const double* wv = &w.data[((static_cast<std::size_t>(co) * cin + ci) * 3) * 3];
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double wk = wv[ky * 3 + kx];
                    if (wk == 0.0) continue;
                    for (int yo = 0; yo < hout; ++yo) {
                        const int iy = yo * stride - 1 + ky;
                        if (iy < 0 || iy >= x.h) continue;
                        const double* xrow = &x.v[(static_cast<std::size_t>(ci) * x.h + iy) * x.w];
                        double* yrow = &y.v[(static_cast<std::size_t>(co) * hout + yo) * wout];
                        for (int xo = 0; xo < wout; ++xo) {
                            const int ix = xo * stride - 1 + kx;
                            if (ix < 0 || ix >= x.w) continue;
                            yrow[xo] += wk * xrow[ix];
                        }
                    }
                }
            }
        }
    }
    return y;
}

inline void conv3x3_backward(const Tensor& x, const NamedTensor& w, int stride, const Tensor& dy, Tensor& dx,
                             NamedTensor& dw, NamedTensor& db) {
    const int cin = w.shape[1], cout = w.shape[0];
    const int hout = dy.h, wout = dy.w;
    dx = Tensor(x.c, x.h, x.w);
    for (int co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (int i = 0; i < hout * wout; ++i) acc += dy.v[static_cast<std::size_t>(co) * hout * wout + i];
        db.data[co] += acc;
        for (int ci = 0; ci < cin; ++ci) {
            double* dwv = &dw.data[((static_cast<std::size_t>(co) * cin + ci) * 3) * 3];
            const double* wv = &w.data[((static_cast<std::size_t>(co) * cin + ci) * 3) * 3];
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double wk = wv[ky * 3 + kx];
                    double dwk = 0.0;
                    for (int yo = 0; yo < hout; ++yo) {
                        const int iy = yo * stride - 1 + ky;
                        if (iy < 0 || iy >= x.h) continue;
                        const double* xrow = &x.v[(static_cast<std::size_t>(ci) * x.h + iy) * x.w];
                        double* dxrow = &dx.v[(static_cast<std::size_t>(ci) * x.h + iy) * x.w];
                        const double* dyrow = &dy.v[(static_cast<std::size_t>(co) * hout + yo) * wout];
                        for (int xo = 0; xo < wout; ++xo) {
                            const int ix = xo * stride - 1 + kx;
                            if (ix < 0 || ix >= x.w) continue;
                            dwk += xrow[ix] * dyrow[xo];
                            dxrow[ix] += wk * dyrow[xo];
                        }
                    }
                    dwv[ky * 3 + kx] += dwk;
                }
            }
        }
    }
}

struct GnCache {
    Tensor xhat;
    std::vector<double> inv_std;  // per group
    int groups = 1;
};

inline Tensor group_norm(const Tensor& x, const NamedTensor& gamma, const NamedTensor& beta, GnCache& cache) {
    const int g = norm_groups(x.c);
    const int cpg = x.c / g;
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    cache.groups = g;
    cache.inv_std.assign(g, 0.0);
    cache.xhat = Tensor(x.c, x.h, x.w);
    Tensor y(x.c, x.h, x.w);
    for (int gi = 0; gi < g; ++gi) {
        const std::size_t base = static_cast<std::size_t>(gi) * cpg * plane;
        const std::size_t count = static_cast<std::size_t>(cpg) * plane;
        double mean = 0.0;
        for (std::size_t i = 0; i < count; ++i) mean += x.v[base + i];
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double d = x.v[base + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(count);
        const double inv = 1.0 / std::sqrt(var + kGnEps);
        cache.inv_std[gi] = inv;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = gi * cpg + cc;
            const double gs = gamma.data[ch], bs = beta.data[ch];
            for (std::size_t i = 0; i < plane; ++i) {
                const double xh = (x.v[base + cc * plane + i] - mean) * inv;
                cache.xhat.v[base + cc * plane + i] = xh;
                y.v[base + cc * plane + i] = gs * xh + bs;
            }
        }
    }
    return y;
}

inline Tensor group_norm_backward(const GnCache& cache, const NamedTensor& gamma, const Tensor& dy,
                                  NamedTensor& dgamma, NamedTensor& dbeta) {
    const Tensor& xhat = cache.xhat;
    const int g = cache.groups;
    const int cpg = xhat.c / g;
    const std::size_t plane = static_cast<std::size_t>(xhat.h) * xhat.w;
    Tensor dx(xhat.c, xhat.h, xhat.w);
    for (int gi = 0; gi < g; ++gi) {
        const std::size_t base = static_cast<std::size_t>(gi) * cpg * plane;
        const std::size_t count = static_cast<std::size_t>(cpg) * plane;
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = gi * cpg + cc;
            const double gs = gamma.data[ch];
            double dg = 0.0, dbt = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double dyv = dy.v[base + cc * plane + i];
                const double xh = xhat.v[base + cc * plane + i];
                dg += dyv * xh;
                dbt += dyv;
                const double dxh = dyv * gs;
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh;
            }
            dgamma.data[ch] += dg;
            dbeta.data[ch] += dbt;
        }
        const double inv_n = 1.0 / static_cast<double>(count);
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = gi * cpg + cc;
            const double gs = gamma.data[ch];
            for (std::size_t i = 0; i < plane; ++i) {
                const double dxh = dy.v[base + cc * plane + i] * gs;
                const double xh = xhat.v[base + cc * plane + i];
                dx.v[base + cc * plane + i] =
                    cache.inv_std[gi] * (dxh - inv_n * sum_dxhat - xh * inv_n * sum_dxhat_xhat);
            }
        }
    }
    return dx;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor silu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.v) v = v * sigmoid(v);
    return y;
}

inline Tensor silu_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i) {
        const double s = sigmoid(x.v[i]);
        dx.v[i] *= s * (1.0 + x.v[i] * (1.0 - s));
    }
    return dx;
}

inline Tensor upsample2(const Tensor& x) {
    Tensor y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        for (int i = 0; i < y.h; ++i)
            for (int j = 0; j < y.w; ++j) y.at(c, i, j) = x.at(c, i / 2, j / 2);
    return y;
}

inline Tensor upsample2_backward(const Tensor& dy) {
    Tensor dx(dy.c, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dy.c; ++c)
        for (int i = 0; i < dy.h; ++i)
            for (int j = 0; j < dy.w; ++j) dx.at(c, i / 2, j / 2) += dy.at(c, i, j);
    return dx;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor y(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return y;
}

inline Tensor pad_corner(const Tensor& x, int p) {
    Tensor y(x.c, p, p);
    for (int c = 0; c < x.c; ++c)
        for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j) y.at(c, i, j) = x.at(c, i, j);
    return y;
}

inline Tensor crop_corner(const Tensor& x, int n) {
    Tensor y(x.c, n, n);
    for (int c = 0; c < x.c; ++c)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) y.at(c, i, j) = x.at(c, i, j);
    return y;
}

inline std::vector<double> sinusoid_embedding(int t, int dim) {
    const int half = dim / 2;
    std::vector<double> e(dim, 0.0);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

// ---------------------------------------------------------------------------
// Stage = conv3x3 -> +time bias -> group norm -> SiLU
// ---------------------------------------------------------------------------

struct StageCache {
    Tensor conv_in;
    Tensor pre_gn;
    GnCache gn;
    Tensor act_in;
    Tensor out;
};

inline void stage_forward(const ParamSet& ps, const StageSpec& spec, const Tensor& in,
                          const std::vector<double>& temb, StageCache& cache) {
    cache.conv_in = in;
    cache.pre_gn = conv3x3(in, ps.at(spec.name + ".conv.w"), ps.at(spec.name + ".conv.b"), spec.stride);
    const NamedTensor& tw = ps.at(spec.name + ".time.w");
    const NamedTensor& tb = ps.at(spec.name + ".time.b");
    const int d = static_cast<int>(temb.size());
    const std::size_t plane = static_cast<std::size_t>(cache.pre_gn.h) * cache.pre_gn.w;
    for (int c = 0; c < spec.cout; ++c) {
        double bias = tb.data[c];
        for (int k = 0; k < d; ++k) bias += tw.data[static_cast<std::size_t>(c) * d + k] * temb[k];
        for (std::size_t i = 0; i < plane; ++i) cache.pre_gn.v[c * plane + i] += bias;
    }
    cache.act_in = group_norm(cache.pre_gn, ps.at(spec.name + ".gn.g"), ps.at(spec.name + ".gn.b"), cache.gn);
    cache.out = silu(cache.act_in);
}

inline Tensor stage_backward(const ParamSet& ps, const StageSpec& spec, const StageCache& cache,
                             const Tensor& dout, const std::vector<double>& temb, ParamSet& grads,
                             std::vector<double>& dtemb) {
    const Tensor dact = silu_backward(cache.act_in, dout);
    Tensor dpre = group_norm_backward(cache.gn, ps.at(spec.name + ".gn.g"), dact,
                                      grads.at(spec.name + ".gn.g"), grads.at(spec.name + ".gn.b"));
    // time bias: d(bias_c) = sum over the spatial plane
    const NamedTensor& tw = ps.at(spec.name + ".time.w");
    NamedTensor& dtw = grads.at(spec.name + ".time.w");
    NamedTensor& dtb = grads.at(spec.name + ".time.b");
    const int d = static_cast<int>(temb.size());
    const std::size_t plane = static_cast<std::size_t>(dpre.h) * dpre.w;
    for (int c = 0; c < spec.cout; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += dpre.v[c * plane + i];
        dtb.data[c] += acc;
        for (int k = 0; k < d; ++k) {
            dtw.data[static_cast<std::size_t>(c) * d + k] += acc * temb[k];
            dtemb[k] += tw.data[static_cast<std::size_t>(c) * d + k] * acc;
        }
    }
    Tensor din;
    conv3x3_backward(cache.conv_in, ps.at(spec.name + ".conv.w"), spec.stride, dpre, din,
                     grads.at(spec.name + ".conv.w"), grads.at(spec.name + ".conv.b"));
    return din;
}

struct Workspace {
    int n = 0;
    std::vector<double> emb, mlp_pre, temb;
    std::vector<StageCache> stages;  // execution order per stage_specs
    Tensor out_conv_in;
    Tensor out_padded;
};

}  // namespace unet_detail

// ---------------------------------------------------------------------------
// Parameter construction
// ---------------------------------------------------------------------------

inline ParamSet zero_params_like(const UNetConfig& cfg) {
    validate_unet_config(cfg);
    ParamSet ps;
    const int d = cfg.time_embed_dim;
    ps.add("time.mlp.w", {d, d});
    ps.add("time.mlp.b", {d});
    for (const auto& spec : unet_detail::stage_specs(cfg)) {
        ps.add(spec.name + ".conv.w", {spec.cout, spec.cin, 3, 3});
        ps.add(spec.name + ".conv.b", {spec.cout});
        ps.add(spec.name + ".time.w", {spec.cout, d});
        ps.add(spec.name + ".time.b", {spec.cout});
        ps.add(spec.name + ".gn.g", {spec.cout});
        ps.add(spec.name + ".gn.b", {spec.cout});
    }
    ps.add("out.w", {cfg.in_channels, cfg.base_width, 3, 3});
    ps.add("out.b", {cfg.in_channels});
    return ps;
}

inline std::size_t param_count(const UNetConfig& cfg) {
    std::size_t n = 0;
    for (const NamedTensor& t : zero_params_like(cfg).items) n += t.numel();
    return n;
}

// Fan-in scaled uniform initialization; gains of the normalization layers
// start at one.
inline DenoiserParams init_params(const UNetConfig& cfg, std::uint64_t seed) {
    DenoiserParams params;
    params.config = cfg;
    params.tensors = zero_params_like(cfg);
    Rng rng(seed);
    auto fill_uniform = [&](NamedTensor& t, double k) {
        for (double& v : t.data) v = k * (2.0 * rng.uniform() - 1.0);
    };
    for (NamedTensor& t : params.tensors.items) {
        if (t.name.ends_with(".gn.g")) {
            std::fill(t.data.begin(), t.data.end(), 1.0);
        } else if (t.name.ends_with(".conv.w")) {
            fill_uniform(t, 1.0 / std::sqrt(static_cast<double>(t.shape[1]) * 9.0));
        } else if (t.name.ends_with(".w")) {  // time projections and mlp
            fill_uniform(t, 1.0 / std::sqrt(static_cast<double>(t.shape.back())));
        }
        // biases and gn offsets stay zero
    }
    return params;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

inline Tensor unet_forward_ws(const DenoiserParams& params, const Tensor& x, int t,
                              unet_detail::Workspace& ws) {
    using namespace unet_detail;
    const UNetConfig& cfg = params.config;
    if (x.c != cfg.in_channels || x.h != x.w) throw ShapeMismatch("unet input must be C x N x N");
    if (x.h > cfg.pad_to) throw ShapeMismatch("unet input exceeds pad_to");
    if (t < 1) throw GridscreenError("unet: timestep must be positive");

    ws.n = x.h;
    const ParamSet& ps = params.tensors;
    const std::vector<StageSpec> specs = stage_specs(cfg);
    ws.stages.assign(specs.size(), StageCache{});

    // timestep embedding -> one hidden layer with SiLU
    ws.emb = sinusoid_embedding(t, cfg.time_embed_dim);
    const NamedTensor& mw = ps.at("time.mlp.w");
    const NamedTensor& mb = ps.at("time.mlp.b");
    const int d = cfg.time_embed_dim;
    ws.mlp_pre.assign(d, 0.0);
    for (int i = 0; i < d; ++i) {
        double acc = mb.data[i];
        for (int j = 0; j < d; ++j) acc += mw.data[static_cast<std::size_t>(i) * d + j] * ws.emb[j];
        ws.mlp_pre[i] = acc;
    }
    ws.temb.assign(d, 0.0);
    for (int i = 0; i < d; ++i) ws.temb[i] = ws.mlp_pre[i] * sigmoid(ws.mlp_pre[i]);

    const Tensor x_pad = pad_corner(x, cfg.pad_to);

    // encoder
    int si = 0;
    stage_forward(ps, specs[si], x_pad, ws.temb, ws.stages[si]);  // enc0
    for (int l = 1; l <= cfg.depth; ++l) {
        stage_forward(ps, specs[si + 1], ws.stages[si].out, ws.temb, ws.stages[si + 1]);
        ++si;
    }
    // bottleneck
    stage_forward(ps, specs[si + 1], ws.stages[si].out, ws.temb, ws.stages[si + 1]);
    ++si;
    // decoder
    for (int l = cfg.depth - 1; l >= 0; --l) {
        const Tensor up = upsample2(ws.stages[si].out);
        const Tensor cat = concat_channels(up, ws.stages[l].out);  // skip index == encoder stage index
        stage_forward(ps, specs[si + 1], cat, ws.temb, ws.stages[si + 1]);
        ++si;
    }

    ws.out_conv_in = ws.stages[si].out;
    ws.out_padded = conv3x3(ws.out_conv_in, ps.at("out.w"), ps.at("out.b"), 1);
    return crop_corner(ws.out_padded, ws.n);
}

inline ParamSet unet_backward_ws(const DenoiserParams& params, const unet_detail::Workspace& ws,
                                 const Tensor& upstream) {
    using namespace unet_detail;
    const UNetConfig& cfg = params.config;
    const ParamSet& ps = params.tensors;
    const std::vector<StageSpec> specs = stage_specs(cfg);
    ParamSet grads = zero_params_like(cfg);
    std::vector<double> dtemb(cfg.time_embed_dim, 0.0);

    // crop backward = corner pad of the upstream gradient
    const Tensor dout_padded = pad_corner(upstream, cfg.pad_to);
    Tensor d_cur;
    conv3x3_backward(ws.out_conv_in, ps.at("out.w"), 1, dout_padded, d_cur, grads.at("out.w"),
                     grads.at("out.b"));

    // decoder stages in reverse execution order
    std::vector<Tensor> d_skip(cfg.depth + 1);  // gradient into encoder stage outputs
    int si = static_cast<int>(specs.size()) - 1;
    for (int l = 0; l <= cfg.depth - 1; ++l) {
        const Tensor dcat = stage_backward(ps, specs[si], ws.stages[si], d_cur, ws.temb, grads, dtemb);
        const int up_channels = cfg.base_width << (l + 1);
        Tensor d_up(up_channels, dcat.h, dcat.w);
        std::copy(dcat.v.begin(), dcat.v.begin() + static_cast<std::ptrdiff_t>(d_up.v.size()), d_up.v.begin());
        Tensor d_sk(dcat.c - up_channels, dcat.h, dcat.w);
        std::copy(dcat.v.begin() + static_cast<std::ptrdiff_t>(d_up.v.size()), dcat.v.end(), d_sk.v.begin());
        d_skip[l] = std::move(d_sk);
        d_cur = upsample2_backward(d_up);
        --si;
    }
    // bottleneck
    d_cur = stage_backward(ps, specs[si], ws.stages[si], d_cur, ws.temb, grads, dtemb);
    --si;
    // encoder stages down{depth}..down1 then enc0; outputs of stages < depth
    // also fed the decoder skips
    for (int l = cfg.depth; l >= 0; --l) {
        if (l < cfg.depth) d_cur = d_cur + d_skip[l];
        d_cur = stage_backward(ps, specs[si], ws.stages[si], d_cur, ws.temb, grads, dtemb);
        --si;
    }

    // time MLP backward
    const int d = cfg.time_embed_dim;
    NamedTensor& dmw = grads.at("time.mlp.w");
    NamedTensor& dmb = grads.at("time.mlp.b");
    for (int i = 0; i < d; ++i) {
        const double s = sigmoid(ws.mlp_pre[i]);
        const double dpre = dtemb[i] * s * (1.0 + ws.mlp_pre[i] * (1.0 - s));
        dmb.data[i] += dpre;
        for (int j = 0; j < d; ++j) dmw.data[static_cast<std::size_t>(i) * d + j] += dpre * ws.emb[j];
    }

    if (!params.frozen.empty()) {
        ParamSet filtered;
        for (NamedTensor& t : grads.items)
            if (!params.frozen.count(t.name)) filtered.items.push_back(std::move(t));
        return filtered;
    }
    return grads;
}

inline Tensor unet_forward(const DenoiserParams& params, const Tensor& x_t, int t) {
    unet_detail::Workspace ws;
    return unet_forward_ws(params, x_t, t, ws);
}

inline ParamSet unet_backward(const DenoiserParams& params, const Tensor& x_t, int t, const Tensor& upstream) {
    unet_detail::Workspace ws;
    unet_forward_ws(params, x_t, t, ws);
    return unet_backward_ws(params, ws, upstream);
}

}  // namespace gridscreen
