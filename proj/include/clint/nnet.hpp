#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "clint/errors.hpp"
#include "clint/mat.hpp"
#include "clint/rng.hpp"
#include "clint/tokenizer.hpp"

namespace clint {

struct ModelConfig {
    int num_layers = 2;
    int hidden_size = 32;
    int num_heads = 2;
    int ff_size = 64;
    int vocab_size = 100;
    int max_positions = 64;
    double dropout = 0.1;
    uint64_t seed = 0;

    void validate() const;
    int64_t param_count() const;

    static ModelConfig bert_base();
    static ModelConfig bert_large();

    bool operator==(const ModelConfig&) const = default;
};

std::string config_to_kv(const ModelConfig& cfg);
ModelConfig config_from_kv(const std::string& text);

template <typename S>
struct LayerParams {
    Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
    Mat<S> ln1_g, ln1_b;
    Mat<S> w1, b1;  // H x F
    Mat<S> w2, b2;  // F x H
    Mat<S> ln2_g, ln2_b;
};

template <typename S>
struct Parameters {
    ModelConfig config;
    Mat<S> tok_emb;   // V x H
    Mat<S> pos_emb;   // P x H
    std::vector<LayerParams<S>> layers;
    Mat<S> final_ln_g, final_ln_b;
    Mat<S> cls_w;     // H x 2
    Mat<S> cls_b;     // 1 x 2
    Mat<S> mlm_bias;  // 1 x V

    // Zero-filled tensors with shapes implied by the config.
    static Parameters shaped(const ModelConfig& cfg) {
        cfg.validate();
        const int H = cfg.hidden_size, F = cfg.ff_size;
        Parameters p;
        p.config = cfg;
        p.tok_emb = Mat<S>(cfg.vocab_size, H);
        p.pos_emb = Mat<S>(cfg.max_positions, H);
        p.layers.resize(static_cast<size_t>(cfg.num_layers));
        for (auto& l : p.layers) {
            l.wq = Mat<S>(H, H); l.bq = Mat<S>(1, H);
            l.wk = Mat<S>(H, H); l.bk = Mat<S>(1, H);
            l.wv = Mat<S>(H, H); l.bv = Mat<S>(1, H);
            l.wo = Mat<S>(H, H); l.bo = Mat<S>(1, H);
            l.ln1_g = Mat<S>(1, H); l.ln1_b = Mat<S>(1, H);
            l.w1 = Mat<S>(H, F); l.b1 = Mat<S>(1, F);
            l.w2 = Mat<S>(F, H); l.b2 = Mat<S>(1, H);
            l.ln2_g = Mat<S>(1, H); l.ln2_b = Mat<S>(1, H);
        }
        p.final_ln_g = Mat<S>(1, H);
        p.final_ln_b = Mat<S>(1, H);
        p.cls_w = Mat<S>(H, 2);
        p.cls_b = Mat<S>(1, 2);
        p.mlm_bias = Mat<S>(1, cfg.vocab_size);
        return p;
    }
};

// Gradients share the Parameters layout tensor for tensor.
template <typename S>
using GradientSet = Parameters<S>;

// Visits every tensor in a fixed order; the order defines checkpoint layout.
template <typename S, typename F>
void for_each_tensor(Parameters<S>& p, F&& fn) {
    fn(std::string("token_embedding"), p.tok_emb);
    fn(std::string("position_embedding"), p.pos_emb);
    for (size_t i = 0; i < p.layers.size(); ++i) {
        const std::string base = "layer" + std::to_string(i) + ".";
        auto& l = p.layers[i];
        fn(base + "attn.wq", l.wq); fn(base + "attn.bq", l.bq);
        fn(base + "attn.wk", l.wk); fn(base + "attn.bk", l.bk);
        fn(base + "attn.wv", l.wv); fn(base + "attn.bv", l.bv);
        fn(base + "attn.wo", l.wo); fn(base + "attn.bo", l.bo);
        fn(base + "norm1.gamma", l.ln1_g); fn(base + "norm1.beta", l.ln1_b);
        fn(base + "ffn.w1", l.w1); fn(base + "ffn.b1", l.b1);
        fn(base + "ffn.w2", l.w2); fn(base + "ffn.b2", l.b2);
        fn(base + "norm2.gamma", l.ln2_g); fn(base + "norm2.beta", l.ln2_b);
    }
    fn(std::string("final_norm.gamma"), p.final_ln_g);
    fn(std::string("final_norm.beta"), p.final_ln_b);
    fn(std::string("classifier.weight"), p.cls_w);
    fn(std::string("classifier.bias"), p.cls_b);
    fn(std::string("mlm.bias"), p.mlm_bias);
}

template <typename S, typename F>
void for_each_tensor(const Parameters<S>& p, F&& fn) {
    for_each_tensor(const_cast<Parameters<S>&>(p),
                    [&fn](const std::string& name, Mat<S>& m) {
                        fn(name, static_cast<const Mat<S>&>(m));
                    });
}

template <typename S, typename F>
void for_each_tensor_pair(Parameters<S>& a, Parameters<S>& b, F&& fn) {
    std::vector<Mat<S>*> bs;
    for_each_tensor(b, [&bs](const std::string&, Mat<S>& m) { bs.push_back(&m); });
    size_t i = 0;
    for_each_tensor(a, [&](const std::string& name, Mat<S>& m) { fn(name, m, *bs[i++]); });
}

template <typename S>
void add_scaled(Parameters<S>& dst, const Parameters<S>& src, S alpha) {
    for_each_tensor_pair(dst, const_cast<Parameters<S>&>(src),
                         [alpha](const std::string&, Mat<S>& d, Mat<S>& s) {
                             for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += alpha * s.data[i];
                         });
}

template <typename S>
void scale_params(Parameters<S>& p, S alpha) {
    for_each_tensor(p, [alpha](const std::string&, Mat<S>& m) {
        for (S& v : m.data) v *= alpha;
    });
}

// Weights ~ truncated normal(0, 0.02), biases 0, norm scales 1, shifts 0.
template <typename S>
Parameters<S> init_params(const ModelConfig& cfg) {
    Parameters<S> p = Parameters<S>::shaped(cfg);
    Rng rng(cfg.seed);
    const auto fill_tn = [&rng](Mat<S>& m) {
        for (S& v : m.data) v = static_cast<S>(rng.truncated_normal(0.0, 0.02));
    };
    const auto fill_ones = [](Mat<S>& m) { std::fill(m.data.begin(), m.data.end(), S(1)); };
    fill_tn(p.tok_emb);
    fill_tn(p.pos_emb);
    for (auto& l : p.layers) {
        fill_tn(l.wq); fill_tn(l.wk); fill_tn(l.wv); fill_tn(l.wo);
        fill_ones(l.ln1_g);
        fill_tn(l.w1); fill_tn(l.w2);
        fill_ones(l.ln2_g);
    }
    fill_ones(p.final_ln_g);
    fill_tn(p.cls_w);
    return p;
}

namespace detail {

constexpr double kLnEps = 1e-5;

template <typename S>
S gelu(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865476)));
}

template <typename S>
S gelu_grad(S x) {
    const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.7071067811865476)));
    const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
    return cdf + x * pdf;
}

// y = gamma * (x - mean) / sqrt(var + eps) + beta, per row.
template <typename S>
void layer_norm(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, Mat<S>& xhat,
                std::vector<S>& inv_std, Mat<S>& y) {
    const int T = x.rows, H = x.cols;
    xhat = Mat<S>(T, H);
    y = Mat<S>(T, H);
    inv_std.assign(static_cast<size_t>(T), S(0));
    for (int t = 0; t < T; ++t) {
        const S* xr = x.row(t);
        S mean = S(0);
        for (int j = 0; j < H; ++j) mean += xr[j];
        mean /= S(H);
        S var = S(0);
        for (int j = 0; j < H; ++j) {
            const S d = xr[j] - mean;
            var += d * d;
        }
        var /= S(H);
        const S inv = S(1) / std::sqrt(var + S(kLnEps));
        inv_std[static_cast<size_t>(t)] = inv;
        S* xh = xhat.row(t);
        S* yr = y.row(t);
        for (int j = 0; j < H; ++j) {
            xh[j] = (xr[j] - mean) * inv;
            yr[j] = gamma.data[static_cast<size_t>(j)] * xh[j] + beta.data[static_cast<size_t>(j)];
        }
    }
}

template <typename S>
void layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat, const std::vector<S>& inv_std,
                         const Mat<S>& gamma, Mat<S>& dx, Mat<S>& dgamma, Mat<S>& dbeta) {
    const int T = dy.rows, H = dy.cols;
    dx = Mat<S>(T, H);
    for (int t = 0; t < T; ++t) {
        const S* dyr = dy.row(t);
        const S* xh = xhat.row(t);
        S* dxr = dx.row(t);
        S m1 = S(0), m2 = S(0);
        for (int j = 0; j < H; ++j) {
            const S dxh = dyr[j] * gamma.data[static_cast<size_t>(j)];
            m1 += dxh;
            m2 += dxh * xh[j];
            dgamma.data[static_cast<size_t>(j)] += dyr[j] * xh[j];
            dbeta.data[static_cast<size_t>(j)] += dyr[j];
        }
        m1 /= S(H);
        m2 /= S(H);
        const S inv = inv_std[static_cast<size_t>(t)];
        for (int j = 0; j < H; ++j) {
            const S dxh = dyr[j] * gamma.data[static_cast<size_t>(j)];
            dxr[j] = inv * (dxh - m1 - xh[j] * m2);
        }
    }
}

// y = x * w + b (b broadcast over rows)
template <typename S>
void linear(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b, Mat<S>& y) {
    matmul(x, w, y);
    for (int t = 0; t < y.rows; ++t) {
        S* yr = y.row(t);
        for (int j = 0; j < y.cols; ++j) yr[j] += b.data[static_cast<size_t>(j)];
    }
}

template <typename S>
void linear_backward(const Mat<S>& x, const Mat<S>& w, const Mat<S>& dy, Mat<S>& dx_acc,
                     Mat<S>& dw, Mat<S>& db) {
    matmul_nt_acc(dy, w, dx_acc);
    matmul_tn_acc(x, dy, dw);
    for (int t = 0; t < dy.rows; ++t) {
        const S* dyr = dy.row(t);
        for (int j = 0; j < dy.cols; ++j) db.data[static_cast<size_t>(j)] += dyr[j];
    }
}

template <typename S>
struct LayerTrace {
    Mat<S> x_in;
    Mat<S> q, k, v;
    std::vector<Mat<S>> attn;       // per head, T x T; masked keys hold exact zeros
    Mat<S> ctx;
    Mat<S> attn_proj;
    std::vector<uint8_t> drop1;
    Mat<S> res1, ln1_xhat, h1;
    std::vector<S> ln1_inv;
    Mat<S> ff_pre, ff_act, ff_out;
    std::vector<uint8_t> drop2;
    Mat<S> res2, ln2_xhat, h2;
    std::vector<S> ln2_inv;
};

template <typename S>
struct ForwardTrace {
    Mat<S> emb;
    std::vector<LayerTrace<S>> layers;
    Mat<S> fin_xhat, hidden;
    std::vector<S> fin_inv;
};

template <typename S>
void apply_dropout(Mat<S>& x, double rate, Rng& rng, std::vector<uint8_t>& keep) {
    keep.assign(x.data.size(), 1);
    const S inv_keep = S(1.0 / (1.0 - rate));
    for (size_t i = 0; i < x.data.size(); ++i) {
        if (rng.uniform() < rate) {
            keep[i] = 0;
            x.data[i] = S(0);
        } else {
            x.data[i] *= inv_keep;
        }
    }
}

template <typename S>
void dropout_backward(Mat<S>& dx, double rate, const std::vector<uint8_t>& keep) {
    const S inv_keep = S(1.0 / (1.0 - rate));
    for (size_t i = 0; i < dx.data.size(); ++i) {
        dx.data[i] = keep[i] ? dx.data[i] * inv_keep : S(0);
    }
}

template <typename S>
ForwardTrace<S> forward(const Parameters<S>& p, const std::vector<TokenId>& ids,
                        const std::vector<uint8_t>& mask, bool train_mode, Rng& rng) {
    const ModelConfig& cfg = p.config;
    const int T = static_cast<int>(ids.size());
    const int H = cfg.hidden_size;
    const int A = cfg.num_heads;
    const int dh = H / A;
    if (T == 0) throw InputError("empty sequence");
    if (T > cfg.max_positions) {
        throw InputError("sequence length " + std::to_string(T) + " exceeds max positions " +
                         std::to_string(cfg.max_positions));
    }
    if (mask.size() != ids.size()) throw InputError("mask length does not match ids");
    bool any_real = false;
    for (const uint8_t m : mask) any_real = any_real || m != 0;
    if (!any_real) throw InputError("mask has no real positions");
    for (const TokenId id : ids) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw InputError("token id " + std::to_string(id) + " out of vocab range");
        }
    }

    const bool use_dropout = train_mode && cfg.dropout > 0.0;
    const S att_scale = S(1.0 / std::sqrt(static_cast<double>(dh)));

    ForwardTrace<S> tr;
    tr.emb = Mat<S>(T, H);
    for (int t = 0; t < T; ++t) {
        const S* te = p.tok_emb.row(ids[static_cast<size_t>(t)]);
        const S* pe = p.pos_emb.row(t);
        S* e = tr.emb.row(t);
        for (int j = 0; j < H; ++j) e[j] = te[j] + pe[j];
    }

    tr.layers.resize(p.layers.size());
    const Mat<S>* x = &tr.emb;
    for (size_t li = 0; li < p.layers.size(); ++li) {
        const LayerParams<S>& lp = p.layers[li];
        LayerTrace<S>& lt = tr.layers[li];
        lt.x_in = *x;

        linear(lt.x_in, lp.wq, lp.bq, lt.q);
        linear(lt.x_in, lp.wk, lp.bk, lt.k);
        linear(lt.x_in, lp.wv, lp.bv, lt.v);

        lt.attn.assign(static_cast<size_t>(A), Mat<S>(T, T));
        lt.ctx = Mat<S>(T, H);
        std::vector<S> scores(static_cast<size_t>(T));
        for (int a = 0; a < A; ++a) {
            Mat<S>& P = lt.attn[static_cast<size_t>(a)];
            const int off = a * dh;
            for (int qi = 0; qi < T; ++qi) {
                const S* qr = lt.q.row(qi) + off;
                S mx = S(0);
                bool have = false;
                for (int ki = 0; ki < T; ++ki) {
                    if (!mask[static_cast<size_t>(ki)]) continue;
                    const S* kr = lt.k.row(ki) + off;
                    S s = S(0);
                    for (int j = 0; j < dh; ++j) s += qr[j] * kr[j];
                    s *= att_scale;
                    scores[static_cast<size_t>(ki)] = s;
                    if (!have || s > mx) {
                        mx = s;
                        have = true;
                    }
                }
                S denom = S(0);
                for (int ki = 0; ki < T; ++ki) {
                    if (!mask[static_cast<size_t>(ki)]) continue;
                    const S e = std::exp(scores[static_cast<size_t>(ki)] - mx);
                    P.at(qi, ki) = e;
                    denom += e;
                }
                S* ctx_r = lt.ctx.row(qi) + off;
                for (int ki = 0; ki < T; ++ki) {
                    if (!mask[static_cast<size_t>(ki)]) continue;
                    const S w = P.at(qi, ki) / denom;
                    P.at(qi, ki) = w;
                    const S* vr = lt.v.row(ki) + off;
                    for (int j = 0; j < dh; ++j) ctx_r[j] += w * vr[j];
                }
            }
        }

        linear(lt.ctx, lp.wo, lp.bo, lt.attn_proj);
        Mat<S> attn_dropped = lt.attn_proj;
        if (use_dropout) apply_dropout(attn_dropped, cfg.dropout, rng, lt.drop1);

        lt.res1 = Mat<S>(T, H);
        for (size_t i = 0; i < lt.res1.data.size(); ++i) {
            lt.res1.data[i] = lt.x_in.data[i] + attn_dropped.data[i];
        }
        layer_norm(lt.res1, lp.ln1_g, lp.ln1_b, lt.ln1_xhat, lt.ln1_inv, lt.h1);

        linear(lt.h1, lp.w1, lp.b1, lt.ff_pre);
        lt.ff_act = lt.ff_pre;
        for (S& v : lt.ff_act.data) v = gelu(v);
        linear(lt.ff_act, lp.w2, lp.b2, lt.ff_out);
        Mat<S> ff_dropped = lt.ff_out;
        if (use_dropout) apply_dropout(ff_dropped, cfg.dropout, rng, lt.drop2);

        lt.res2 = Mat<S>(T, H);
        for (size_t i = 0; i < lt.res2.data.size(); ++i) {
            lt.res2.data[i] = lt.h1.data[i] + ff_dropped.data[i];
        }
        layer_norm(lt.res2, lp.ln2_g, lp.ln2_b, lt.ln2_xhat, lt.ln2_inv, lt.h2);
        x = &lt.h2;
    }

    layer_norm(*x, p.final_ln_g, p.final_ln_b, tr.fin_xhat, tr.fin_inv, tr.hidden);
    return tr;
}

// Propagates d(loss)/d(hidden) back to every parameter; embeddings included.
template <typename S>
void backward(const Parameters<S>& p, const std::vector<TokenId>& ids,
              const std::vector<uint8_t>& mask, const ForwardTrace<S>& tr, Mat<S>& dhidden,
              bool train_mode, GradientSet<S>& g) {
    const ModelConfig& cfg = p.config;
    const int T = static_cast<int>(ids.size());
    const int H = cfg.hidden_size;
    const int A = cfg.num_heads;
    const int dh = H / A;
    const bool use_dropout = train_mode && cfg.dropout > 0.0;
    const S att_scale = S(1.0 / std::sqrt(static_cast<double>(dh)));

    Mat<S> d;
    layer_norm_backward(dhidden, tr.fin_xhat, tr.fin_inv, p.final_ln_g, d, g.final_ln_g,
                        g.final_ln_b);

    for (int li = static_cast<int>(p.layers.size()) - 1; li >= 0; --li) {
        const LayerParams<S>& lp = p.layers[static_cast<size_t>(li)];
        const LayerTrace<S>& lt = tr.layers[static_cast<size_t>(li)];
        LayerParams<S>& lg = g.layers[static_cast<size_t>(li)];

        // d is d(loss)/d(h2)
        Mat<S> dres2;
        layer_norm_backward(d, lt.ln2_xhat, lt.ln2_inv, lp.ln2_g, dres2, lg.ln2_g, lg.ln2_b);

        Mat<S> dh1 = dres2;  // residual branch
        Mat<S> dff_out = dres2;
        if (use_dropout) dropout_backward(dff_out, cfg.dropout, lt.drop2);

        Mat<S> dff_act(T, cfg.ff_size);
        linear_backward(lt.ff_act, lp.w2, dff_out, dff_act, lg.w2, lg.b2);
        Mat<S> dff_pre = dff_act;
        for (size_t i = 0; i < dff_pre.data.size(); ++i) {
            dff_pre.data[i] *= gelu_grad(lt.ff_pre.data[i]);
        }
        linear_backward(lt.h1, lp.w1, dff_pre, dh1, lg.w1, lg.b1);

        Mat<S> dres1;
        layer_norm_backward(dh1, lt.ln1_xhat, lt.ln1_inv, lp.ln1_g, dres1, lg.ln1_g, lg.ln1_b);

        Mat<S> dx = dres1;  // residual branch
        Mat<S> dattn_proj = dres1;
        if (use_dropout) dropout_backward(dattn_proj, cfg.dropout, lt.drop1);

        Mat<S> dctx(T, H);
        linear_backward(lt.ctx, lp.wo, dattn_proj, dctx, lg.wo, lg.bo);

        Mat<S> dq(T, H), dk(T, H), dv(T, H);
        std::vector<S> dP(static_cast<size_t>(T)), ds(static_cast<size_t>(T));
        for (int a = 0; a < A; ++a) {
            const Mat<S>& P = lt.attn[static_cast<size_t>(a)];
            const int off = a * dh;
            for (int qi = 0; qi < T; ++qi) {
                const S* dctx_r = dctx.row(qi) + off;
                S dot_dp_p = S(0);
                for (int ki = 0; ki < T; ++ki) {
                    if (!mask[static_cast<size_t>(ki)]) continue;
                    const S* vr = lt.v.row(ki) + off;
                    S acc = S(0);
                    for (int j = 0; j < dh; ++j) acc += dctx_r[j] * vr[j];
                    dP[static_cast<size_t>(ki)] = acc;
                    const S w = P.at(qi, ki);
                    S* dvr = dv.row(ki) + off;
                    for (int j = 0; j < dh; ++j) dvr[j] += w * dctx_r[j];
                    dot_dp_p += acc * w;
                }
                const S* qr = lt.q.row(qi) + off;
                S* dqr = dq.row(qi) + off;
                for (int ki = 0; ki < T; ++ki) {
                    if (!mask[static_cast<size_t>(ki)]) continue;
                    const S w = P.at(qi, ki);
                    const S dscore = w * (dP[static_cast<size_t>(ki)] - dot_dp_p) * att_scale;
                    const S* kr = lt.k.row(ki) + off;
                    S* dkr = dk.row(ki) + off;
                    for (int j = 0; j < dh; ++j) {
                        dqr[j] += dscore * kr[j];
                        dkr[j] += dscore * qr[j];
                    }
                }
            }
        }

        linear_backward(lt.x_in, lp.wq, dq, dx, lg.wq, lg.bq);
        linear_backward(lt.x_in, lp.wk, dk, dx, lg.wk, lg.bk);
        linear_backward(lt.x_in, lp.wv, dv, dx, lg.wv, lg.bv);
        d = std::move(dx);
    }

    for (int t = 0; t < T; ++t) {
        const S* dr = d.row(t);
        S* gt = g.tok_emb.row(ids[static_cast<size_t>(t)]);
        S* gp = g.pos_emb.row(t);
        for (int j = 0; j < H; ++j) {
            gt[j] += dr[j];
            gp[j] += dr[j];
        }
    }
}

template <typename S>
void softmax_row(std::vector<S>& z) {
    S mx = z[0];
    for (const S v : z) mx = std::max(mx, v);
    S denom = S(0);
    for (S& v : z) {
        v = std::exp(v - mx);
        denom += v;
    }
    for (S& v : z) v /= denom;
}

}  // namespace detail

// Final hidden states (T x H) for a padded id sequence.
template <typename S>
Mat<S> encode_sequence(const Parameters<S>& params, const std::vector<TokenId>& ids,
                       const std::vector<uint8_t>& mask, bool train_mode, Rng& rng) {
    return detail::forward(params, ids, mask, train_mode, rng).hidden;
}

template <typename S>
Mat<S> encode_sequence(const Parameters<S>& params, const std::vector<TokenId>& ids,
                       const std::vector<uint8_t>& mask) {
    Rng rng(0);
    return encode_sequence(params, ids, mask, false, rng);
}

// Attention probabilities per layer and head, for inspection.
template <typename S>
std::vector<std::vector<Mat<S>>> attention_probs(const Parameters<S>& params,
                                                 const std::vector<TokenId>& ids,
                                                 const std::vector<uint8_t>& mask) {
    Rng rng(0);
    auto tr = detail::forward(params, ids, mask, false, rng);
    std::vector<std::vector<Mat<S>>> out;
    out.reserve(tr.layers.size());
    for (auto& lt : tr.layers) out.push_back(std::move(lt.attn));
    return out;
}

// Probability that the sequence is in the positive class, from the CLS state.
template <typename S>
S classify(const Parameters<S>& params, const std::vector<TokenId>& ids,
           const std::vector<uint8_t>& mask) {
    Rng rng(0);
    const auto tr = detail::forward(params, ids, mask, false, rng);
    std::vector<S> logits(2, S(0));
    const S* h = tr.hidden.row(0);
    for (int c = 0; c < 2; ++c) {
        S z = params.cls_b.data[static_cast<size_t>(c)];
        for (int j = 0; j < params.config.hidden_size; ++j) z += h[j] * params.cls_w.at(j, c);
        logits[static_cast<size_t>(c)] = z;
    }
    detail::softmax_row(logits);
    return logits[1];
}

template <typename S>
struct LossResult {
    S loss = S(0);
    GradientSet<S> grads;
    int64_t correct_targets = 0;  // targets whose top-1 prediction was right
};

// Mean cross-entropy over the Cloze target positions, with gradients.
// The MLM projection is tied to the token embedding table.
template <typename S>
LossResult<S> mlm_loss(const Parameters<S>& params, const std::vector<TokenId>& masked_ids,
                       const std::vector<uint8_t>& mask, const std::vector<int>& target_positions,
                       const std::vector<TokenId>& target_ids, bool train_mode, Rng& rng) {
    if (target_positions.empty()) throw InputError("no target positions");
    if (target_positions.size() != target_ids.size()) {
        throw InputError("target positions and ids differ in length");
    }
    const int T = static_cast<int>(masked_ids.size());
    const int V = params.config.vocab_size;
    const int H = params.config.hidden_size;
    for (size_t i = 0; i < target_positions.size(); ++i) {
        const int pos = target_positions[i];
        if (pos < 0 || pos >= T || !mask[static_cast<size_t>(pos)]) {
            throw InputError("target position " + std::to_string(pos) + " not a real position");
        }
        if (target_ids[i] < 0 || target_ids[i] >= V) throw InputError("target id out of range");
    }

    const auto tr = detail::forward(params, masked_ids, mask, train_mode, rng);

    LossResult<S> out;
    out.grads = GradientSet<S>::shaped(params.config);
    Mat<S> dhidden(T, H);
    const S inv_n = S(1) / S(static_cast<double>(target_positions.size()));

    std::vector<S> logits(static_cast<size_t>(V));
    for (size_t i = 0; i < target_positions.size(); ++i) {
        const int pos = target_positions[i];
        const TokenId target = target_ids[i];
        const S* h = tr.hidden.row(pos);
        for (int v = 0; v < V; ++v) {
            const S* e = params.tok_emb.row(v);
            S z = params.mlm_bias.data[static_cast<size_t>(v)];
            for (int j = 0; j < H; ++j) z += e[j] * h[j];
            logits[static_cast<size_t>(v)] = z;
        }
        detail::softmax_row(logits);
        out.loss -= std::log(std::max(logits[static_cast<size_t>(target)],
                                      std::numeric_limits<S>::min())) *
                    inv_n;
        int best = 0;
        for (int v = 1; v < V; ++v) {
            if (logits[static_cast<size_t>(v)] > logits[static_cast<size_t>(best)]) best = v;
        }
        if (best == target) ++out.correct_targets;

        logits[static_cast<size_t>(target)] -= S(1);
        S* dh = dhidden.row(pos);
        for (int v = 0; v < V; ++v) {
            const S dz = logits[static_cast<size_t>(v)] * inv_n;
            if (dz == S(0)) continue;
            out.grads.mlm_bias.data[static_cast<size_t>(v)] += dz;
            const S* e = params.tok_emb.row(v);
            S* ge = out.grads.tok_emb.row(v);
            for (int j = 0; j < H; ++j) {
                dh[j] += dz * e[j];
                ge[j] += dz * h[j];
            }
        }
    }

    detail::backward(params, masked_ids, mask, tr, dhidden, train_mode, out.grads);
    return out;
}

template <typename S>
struct LabeledInput {
    std::vector<TokenId> ids;
    std::vector<uint8_t> mask;
    int label = 0;  // 1 = hyperpartisan
};

template <typename S>
struct ClassificationLossResult {
    S loss = S(0);
    GradientSet<S> grads;
    std::vector<S> prob_positive;  // per example, from the same forward passes
};

// Mean cross-entropy over a labeled batch, with gradients.
template <typename S>
ClassificationLossResult<S> classification_loss(const Parameters<S>& params,
                                                const std::vector<LabeledInput<S>>& batch,
                                                bool train_mode, Rng& rng) {
    if (batch.empty()) throw InputError("empty batch");
    const int H = params.config.hidden_size;

    ClassificationLossResult<S> out;
    out.grads = GradientSet<S>::shaped(params.config);
    const S inv_b = S(1) / S(static_cast<double>(batch.size()));

    for (const LabeledInput<S>& ex : batch) {
        if (ex.label != 0 && ex.label != 1) throw InputError("label must be 0 or 1");
        const auto tr = detail::forward(params, ex.ids, ex.mask, train_mode, rng);
        const S* h = tr.hidden.row(0);
        std::vector<S> logits(2, S(0));
        for (int c = 0; c < 2; ++c) {
            S z = params.cls_b.data[static_cast<size_t>(c)];
            for (int j = 0; j < H; ++j) z += h[j] * params.cls_w.at(j, c);
            logits[static_cast<size_t>(c)] = z;
        }
        detail::softmax_row(logits);
        out.prob_positive.push_back(logits[1]);
        out.loss -= std::log(std::max(logits[static_cast<size_t>(ex.label)],
                                      std::numeric_limits<S>::min())) *
                    inv_b;

        logits[static_cast<size_t>(ex.label)] -= S(1);
        Mat<S> dhidden(static_cast<int>(ex.ids.size()), H);
        S* dh = dhidden.row(0);
        for (int c = 0; c < 2; ++c) {
            const S dz = logits[static_cast<size_t>(c)] * inv_b;
            out.grads.cls_b.data[static_cast<size_t>(c)] += dz;
            for (int j = 0; j < H; ++j) {
                out.grads.cls_w.at(j, c) += dz * h[j];
                dh[j] += dz * params.cls_w.at(j, c);
            }
        }
        detail::backward(params, ex.ids, ex.mask, tr, dhidden, train_mode, out.grads);
    }
    return out;
}

}  // namespace clint
