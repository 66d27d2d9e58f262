#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/codec.hpp"
#include "rar/degrade.hpp"
#include "rar/params.hpp"
#include "rar/rng.hpp"
#include "rar/tape.hpp"
#include "rar/tensor.hpp"

namespace rar {

// Latent Quality Assessment: degradation identification and a pairwise quality
// comparator, both reading codec latents through an image adapter. The
// comparator is a difference of one learned scalar score, which makes
// antisymmetry and zero self-margin architectural rather than trained.

struct LqaConfig {
    int latent_size = 8;
    int latent_channels = 8;
    int adapter_channels = 16;  // image adapter output
    int trunk_channels = 32;
    int feat_dim = 64;
    int d_cond = 32;
    double delta = 0.0;  // verdict threshold on the score margin

    Shape latent_shape() const { return {latent_size, latent_size, latent_channels}; }
    int trunk_flat() const { return (latent_size / 2) * (latent_size / 2) * trunk_channels; }
};

// Post-projection norm bound on conditioning embeddings.
constexpr double kEmbeddingNormCap = 10.0;

enum class Decision { kContinue, kStop };

struct Verdict {
    Decision decision = Decision::kStop;
    double margin = 0.0;  // q(new) - q(prev)
};

struct Assessment {
    std::array<double, kNumKinds> probs{0, 0, 0, 0};
    TensorF embedding;
    double quality = 0.0;
};

template <typename T>
ParamSet<T> make_lqa_params(const LqaConfig& cfg, Rng rng) {
    ParamSet<T> ps;
    auto conv = [&](const std::string& name, int cin, int cout) {
        ps.add(name + ".w", Tensor<T>::uniform_fan_in({3, 3, cin, cout}, 9 * cin, rng));
        ps.add(name + ".b", Tensor<T>::zeros({cout}));
    };
    auto dense = [&](const std::string& name, int n, int m) {
        ps.add(name + ".w", Tensor<T>::uniform_fan_in({n, m}, n, rng));
        ps.add(name + ".b", Tensor<T>::zeros({m}));
    };
    conv("ai", 2 * cfg.latent_channels, cfg.adapter_channels);  // image adapter, sees [z, high-pass z]
    conv("trunk0", 2 * cfg.adapter_channels, cfg.trunk_channels);
    conv("trunk1", cfg.trunk_channels, cfg.trunk_channels);
    conv("trunk2", cfg.trunk_channels, cfg.trunk_channels);
    dense("trunk_fc", cfg.trunk_flat(), cfg.feat_dim);
    dense("ident", cfg.feat_dim, kNumKinds);
    dense("aq", cfg.feat_dim, cfg.d_cond);  // embedding adapter
    dense("quality", cfg.feat_dim, 1);
    // per-kind embedding rows (clean row first); filled from class means after training
    ps.add("text_table", Tensor<T>::uniform_fan_in({1 + kNumKinds, cfg.d_cond}, cfg.d_cond, rng));
    return ps;
}

// Shared trunk: every head consumes these features. The input is the latent
// alongside its high-pass residual (cell-scale structure is where noise
// lives), and the adapter output rides alongside its elementwise square so
// local energy statistics are directly available to the trunk.
template <typename T>
typename Tape<T>::Var lqa_features_node(Tape<T>& t, ParamSet<T>& ps, typename Tape<T>::Var z) {
    const auto& zshape = t.val(z).shape;
    const int c_lat = zshape[2];
    Tensor<T> box({3, 3, c_lat, c_lat});
    for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
            for (int c = 0; c < c_lat; ++c)
                box[((static_cast<std::size_t>(ky) * 3 + kx) * c_lat + c) * c_lat + c] = T(1) / T(9);
    auto smooth = t.conv2d(z, t.constant(std::move(box)), t.constant(Tensor<T>::zeros({c_lat})), 1, 1);
    auto x = t.concat_channels(z, t.sub(z, smooth));
    auto a = t.silu(t.conv2d(x, t.param(ps, "ai.w"), t.param(ps, "ai.b"), 1, 1));
    auto h = t.concat_channels(a, t.mul(a, a));
    h = t.silu(t.conv2d(h, t.param(ps, "trunk0.w"), t.param(ps, "trunk0.b"), 1, 1));
    h = t.silu(t.conv2d(h, t.param(ps, "trunk1.w"), t.param(ps, "trunk1.b"), 1, 1));
    h = t.silu(t.conv2d(h, t.param(ps, "trunk2.w"), t.param(ps, "trunk2.b"), 2, 1));
    return t.silu(t.dense(h, t.param(ps, "trunk_fc.w"), t.param(ps, "trunk_fc.b")));
}

template <typename T>
typename Tape<T>::Var lqa_ident_logits_node(Tape<T>& t, ParamSet<T>& ps, typename Tape<T>::Var feat) {
    return t.dense(feat, t.param(ps, "ident.w"), t.param(ps, "ident.b"));
}

template <typename T>
typename Tape<T>::Var lqa_quality_node(Tape<T>& t, ParamSet<T>& ps, typename Tape<T>::Var feat) {
    return t.dense(feat, t.param(ps, "quality.w"), t.param(ps, "quality.b"));
}

struct Lqa {
    LqaConfig cfg;
    ParamSet<float> params;
};

inline void require_latent_shape(const LqaConfig& cfg, const TensorF& z, const char* what) {
    if (z.shape != cfg.latent_shape())
        throw std::invalid_argument(std::string(what) + ": latent " + shape_str(z.shape) +
                                    " does not match " + shape_str(cfg.latent_shape()));
}

inline TensorF clamp_embedding_norm(TensorF q) {
    const double norm = q.l2_norm();
    if (norm > kEmbeddingNormCap) {
        const float s = static_cast<float>(kEmbeddingNormCap / norm);
        for (auto& x : q.data) x *= s;
    }
    return q;
}

inline Assessment identify(Lqa& lqa, const TensorF& z) {
    require_latent_shape(lqa.cfg, z, "identify");
    Tape<float> t;
    auto feat = lqa_features_node(t, lqa.params, t.input(z));
    const TensorF logits = t.val(lqa_ident_logits_node(t, lqa.params, feat));
    const TensorF quality = t.val(lqa_quality_node(t, lqa.params, feat));
    const TensorF& f = t.val(feat);

    Assessment a;
    for (int k = 0; k < kNumKinds; ++k) a.probs[k] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[k])));
    a.quality = static_cast<double>(quality[0]);

    const TensorF& w = lqa.params.value("aq.w");
    const TensorF& b = lqa.params.value("aq.b");
    TensorF q({lqa.cfg.d_cond});
    for (int j = 0; j < lqa.cfg.d_cond; ++j) {
        float acc = b[j];
        for (int i = 0; i < lqa.cfg.feat_dim; ++i) acc += f[i] * w[static_cast<std::size_t>(i) * lqa.cfg.d_cond + j];
        q[j] = acc;
    }
    a.embedding = clamp_embedding_norm(std::move(q));
    return a;
}

inline float quality_score(Lqa& lqa, const TensorF& z) {
    require_latent_shape(lqa.cfg, z, "compare");
    Tape<float> t;
    auto feat = lqa_features_node(t, lqa.params, t.input(z));
    return t.val(lqa_quality_node(t, lqa.params, feat))[0];
}

// Margin is the difference of two float scores taken in double, so it is
// exact: margins negate and chain-sum without rounding.
inline Verdict compare(Lqa& lqa, const TensorF& z_prev, const TensorF& z_new, double delta) {
    Verdict v;
    v.margin = static_cast<double>(quality_score(lqa, z_new)) - static_cast<double>(quality_score(lqa, z_prev));
    v.decision = v.margin > delta ? Decision::kContinue : Decision::kStop;
    return v;
}

inline Verdict compare(Lqa& lqa, const TensorF& z_prev, const TensorF& z_new) {
    return compare(lqa, z_prev, z_new, lqa.cfg.delta);
}

// The lossy "text" conditioning baseline: only the thresholded kind bits
// survive, severity does not. Lookup-and-sum over fixed table rows.
inline TensorF text_embedding(Lqa& lqa, const std::array<int, kNumKinds>& label_bits) {
    const TensorF& table = lqa.params.value("text_table");
    const int d = lqa.cfg.d_cond;
    TensorF q({d});
    bool any = false;
    for (int k = 0; k < kNumKinds; ++k) {
        if (!label_bits[k]) continue;
        any = true;
        for (int j = 0; j < d; ++j) q[j] += table[static_cast<std::size_t>(1 + k) * d + j];
    }
    if (!any)
        for (int j = 0; j < d; ++j) q[j] = table[j];  // clean row
    return clamp_embedding_norm(std::move(q));
}

inline std::array<int, kNumKinds> threshold_bits(const Assessment& a, double cut = 0.5) {
    std::array<int, kNumKinds> bits{0, 0, 0, 0};
    for (int k = 0; k < kNumKinds; ++k) bits[k] = a.probs[k] > cut ? 1 : 0;
    return bits;
}

// --- training ------------------------------------------------

struct LqaTrainConfig {
    int stage1_steps = 1200;
    int stage2_steps = 1200;
    double lr = 3e-3;
    double lr_final = 5e-4;  // cosine-decayed floor, applied per stage
    int batch = 16;       // identification samples per step
    int pair_batch = 8;   // comparison pairs per step (stage 2)
    int augment = 4;      // fresh composite chains per corpus sample
    std::uint64_t seed = 0;
};

struct LqaTrainLog {
    std::vector<double> stage1_losses;
    std::vector<double> stage2_losses;
};

namespace detail {

struct LatentPool {
    std::vector<TensorF> latents;
    std::vector<std::array<int, kNumKinds>> labels;
    // per source sample: indices of its prefix chain, clean first
    std::vector<std::vector<std::size_t>> chains;
};

// Encode every prefix of every composite: each prefix is a labeled training
// latent in its own right, and adjacent prefixes make ordered quality pairs.
// Replaying each sample's own apply seed keeps the final prefix bit-identical
// to its stored degraded image. Each clean image additionally contributes
// `augment` freshly sampled composite chains so the identifier keys on the
// corruption signature rather than on image content.
inline LatentPool build_latent_pool(Codec& codec, const std::vector<LabeledSample>& corpus, int augment,
                                    Rng aug_rng) {
    LatentPool pool;
    auto push_chain = [&pool, &codec](const Image& clean, const CompositeSpec& spec, std::uint64_t seed) {
        const auto prefixes = apply_prefixes(clean, spec, seed);
        std::vector<std::size_t> chain;
        std::array<int, kNumKinds> label{0, 0, 0, 0};
        for (std::size_t j = 0; j < prefixes.size(); ++j) {
            if (j > 0) label[static_cast<int>(spec.steps[j - 1].kind)] = 1;
            chain.push_back(pool.latents.size());
            pool.latents.push_back(encode(codec, prefixes[j]));
            pool.labels.push_back(label);
        }
        pool.chains.push_back(std::move(chain));
    };
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& sample = corpus[i];
        push_chain(sample.clean, sample.spec, sample.apply_seed);
        Rng sample_rng = aug_rng.derive(i);
        for (int a = 0; a < augment; ++a) {
            // lean toward singles: composite pair pools all carry Noise, so a
            // uniform group mix would leave the pool's noise prior far above
            // what single-degradation inputs show at assessment time
            const double u = sample_rng.uniform();
            const auto group = u < 0.4 ? GroupTag::kSingle
                                       : static_cast<GroupTag>(1 + sample_rng.uniform_index(kNumGroups - 1));
            const CompositeSpec spec = sample_spec(group, sample_rng.next_u64());
            push_chain(sample.clean, spec, sample_rng.next_u64());
        }
    }
    return pool;
}

template <typename T>
typename Tape<T>::Var bce_with_logits_node(Tape<T>& t, typename Tape<T>::Var logits,
                                           const std::array<int, kNumKinds>& label) {
    Tensor<T> y({kNumKinds});
    for (int k = 0; k < kNumKinds; ++k) y[k] = static_cast<T>(label[k]);
    auto target = t.constant(std::move(y));
    return t.mean_all(t.sub(t.softplus(logits), t.mul(logits, target)));
}

}  // namespace detail

// Two-stage schedule. Stage 1: adapter + trunk + identification head on
// identification BCE. Stage 2: everything unfrozen, identification BCE plus a
// logistic comparison loss on ordered prefix pairs (less degraded scores
// higher) and occasional (z, z) self-pairs with a STOP target.
inline LqaTrainLog train_lqa(Lqa& lqa, const std::vector<LabeledSample>& corpus, Codec& codec,
                             const LqaTrainConfig& tc) {
    if (corpus.empty()) throw std::invalid_argument("train_lqa: empty corpus");
    Rng root(tc.seed);
    auto pool = detail::build_latent_pool(codec, corpus, tc.augment, root.derive("lqa.augment"));

    AdamState<float> opt;
    opt.lr = tc.lr;
    LqaTrainLog log;

    Rng s1 = root.derive("lqa.stage1");
    for (int step = 0; step < tc.stage1_steps; ++step) {
        Tape<float> t;
        typename Tape<float>::Var total{};
        for (int b = 0; b < tc.batch; ++b) {
            const std::size_t i = s1.uniform_index(pool.latents.size());
            auto feat = lqa_features_node(t, lqa.params, t.input(pool.latents[i]));
            auto loss = detail::bce_with_logits_node(t, lqa_ident_logits_node(t, lqa.params, feat), pool.labels[i]);
            total = (b == 0) ? loss : t.add(total, loss);
        }
        auto mean_loss = t.scale(total, 1.0 / tc.batch);
        const double lv = static_cast<double>(t.val(mean_loss)[0]);
        if (!std::isfinite(lv)) throw std::runtime_error("train_lqa: stage 1 loss non-finite at step " + std::to_string(step));
        log.stage1_losses.push_back(lv);
        lqa.params.zero_grads();
        t.backward(mean_loss);
        opt.lr = tc.lr_final +
                 (tc.lr - tc.lr_final) * 0.5 * (1.0 + std::cos(3.14159265358979 * step / tc.stage1_steps));
        adam_update(lqa.params, opt);
    }

    Rng s2 = root.derive("lqa.stage2");
    for (int step = 0; step < tc.stage2_steps; ++step) {
        Tape<float> t;
        typename Tape<float>::Var total{};
        int terms = 0;
        for (int b = 0; b < tc.batch; ++b) {
            const std::size_t i = s2.uniform_index(pool.latents.size());
            auto feat = lqa_features_node(t, lqa.params, t.input(pool.latents[i]));
            auto loss = detail::bce_with_logits_node(t, lqa_ident_logits_node(t, lqa.params, feat), pool.labels[i]);
            total = (terms == 0) ? loss : t.add(total, loss);
            ++terms;
        }
        for (int p = 0; p < tc.pair_batch; ++p) {
            const auto& chain = pool.chains[s2.uniform_index(pool.chains.size())];
            typename Tape<float>::Var loss{};
            if (s2.uniform() < 0.125) {
                // self-pair, STOP target
                const std::size_t i = chain[s2.uniform_index(chain.size())];
                auto feat = lqa_features_node(t, lqa.params, t.input(pool.latents[i]));
                auto q = lqa_quality_node(t, lqa.params, feat);
                auto feat2 = lqa_features_node(t, lqa.params, t.input(pool.latents[i]));
                auto q2 = lqa_quality_node(t, lqa.params, feat2);
                loss = t.softplus(t.sub(q2, q));
            } else {
                std::size_t lo = s2.uniform_index(chain.size());
                std::size_t hi = s2.uniform_index(chain.size());
                if (lo == hi) hi = (hi + 1) % chain.size();
                if (lo > hi) std::swap(lo, hi);
                // chain[hi] carries more degradations than chain[lo]
                auto feat_less = lqa_features_node(t, lqa.params, t.input(pool.latents[chain[lo]]));
                auto q_less = lqa_quality_node(t, lqa.params, feat_less);
                auto feat_more = lqa_features_node(t, lqa.params, t.input(pool.latents[chain[hi]]));
                auto q_more = lqa_quality_node(t, lqa.params, feat_more);
                loss = t.softplus(t.scale(t.sub(q_less, q_more), -1.0));
            }
            total = t.add(total, loss);
            ++terms;
        }
        auto mean_loss = t.scale(total, 1.0 / terms);
        const double lv = static_cast<double>(t.val(mean_loss)[0]);
        if (!std::isfinite(lv)) throw std::runtime_error("train_lqa: stage 2 loss non-finite at step " + std::to_string(step));
        log.stage2_losses.push_back(lv);
        lqa.params.zero_grads();
        t.backward(mean_loss);
        opt.lr = tc.lr_final +
                 (tc.lr - tc.lr_final) * 0.5 * (1.0 + std::cos(3.14159265358979 * step / tc.stage2_steps));
        adam_update(lqa.params, opt);
    }

    // Freeze the text table to class-mean embeddings: row 0 from clean
    // latents, row 1+k from latents carrying exactly kind k.
    {
        const int d = lqa.cfg.d_cond;
        std::vector<TensorF> sums(1 + kNumKinds, TensorF({d}));
        std::vector<int> counts(1 + kNumKinds, 0);
        for (std::size_t i = 0; i < pool.latents.size(); ++i) {
            int bits = 0, last = -1;
            for (int k = 0; k < kNumKinds; ++k)
                if (pool.labels[i][k]) {
                    ++bits;
                    last = k;
                }
            int row = -1;
            if (bits == 0) row = 0;
            else if (bits == 1) row = 1 + last;
            else continue;
            const TensorF emb = identify(lqa, pool.latents[i]).embedding;
            for (int j = 0; j < d; ++j) sums[row][j] += emb[j];
            counts[row] += 1;
        }
        TensorF& table = lqa.params.value("text_table");
        for (int row = 0; row < 1 + kNumKinds; ++row) {
            if (counts[row] == 0) continue;  // keep seeded row if a class never occurred
            for (int j = 0; j < d; ++j)
                table[static_cast<std::size_t>(row) * d + j] = sums[row][j] / static_cast<float>(counts[row]);
        }
    }
    return log;
}

// --- evaluation ------------------------------------------------

struct F1Scores {
    std::array<double, kNumKinds> per_kind{0, 0, 0, 0};
    double macro = 0.0;
    double micro = 0.0;
};

inline F1Scores identification_f1(Lqa& lqa, Codec& codec, const std::vector<LabeledSample>& samples) {
    std::array<long, kNumKinds> tp{}, fp{}, fn{};
    for (const auto& s : samples) {
        const auto bits = threshold_bits(identify(lqa, encode(codec, s.degraded)));
        for (int k = 0; k < kNumKinds; ++k) {
            if (bits[k] && s.label[k]) ++tp[k];
            else if (bits[k] && !s.label[k]) ++fp[k];
            else if (!bits[k] && s.label[k]) ++fn[k];
        }
    }
    F1Scores out;
    long tp_all = 0, fp_all = 0, fn_all = 0;
    double macro_acc = 0.0;
    for (int k = 0; k < kNumKinds; ++k) {
        const double denom = 2.0 * tp[k] + fp[k] + fn[k];
        out.per_kind[k] = denom > 0.0 ? 2.0 * tp[k] / denom : 1.0;
        macro_acc += out.per_kind[k];
        tp_all += tp[k];
        fp_all += fp[k];
        fn_all += fn[k];
    }
    out.macro = macro_acc / kNumKinds;
    const double denom = 2.0 * tp_all + fp_all + fn_all;
    out.micro = denom > 0.0 ? 2.0 * tp_all / denom : 1.0;
    return out;
}

}  // namespace rar
