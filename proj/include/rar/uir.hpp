#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rar/codec.hpp"
#include "rar/degrade.hpp"
#include "rar/lqa.hpp"
#include "rar/params.hpp"
#include "rar/rng.hpp"
#include "rar/tape.hpp"
#include "rar/tensor.hpp"

namespace rar {

// Unified restoration velocity field. Noise-free flow matching: the source
// distribution is the degraded-latent distribution itself, the target is the
// clean-latent distribution, and the regression target is the constant
// displacement between the two endpoints. A noise-conditioned baseline (source
// is Gaussian noise, degraded latent concatenated as context) exists for the
// convergence and conditioning ablations.

struct UirConfig {
    int latent_size = 8;
    int latent_channels = 8;
    int hidden = 32;
    int temb_dim = 16;
    int d_cond = 32;
    bool noise_conditioned = false;

    int in_channels() const { return noise_conditioned ? 2 * latent_channels : latent_channels; }
    Shape latent_shape() const { return {latent_size, latent_size, latent_channels}; }
};

template <typename T>
ParamSet<T> make_uir_params(const UirConfig& cfg, Rng rng) {
    ParamSet<T> ps;
    auto conv = [&](const std::string& name, int cin, int cout) {
        ps.add(name + ".w", Tensor<T>::uniform_fan_in({3, 3, cin, cout}, 9 * cin, rng));
        ps.add(name + ".b", Tensor<T>::zeros({cout}));
    };
    auto dense = [&](const std::string& name, int n, int m) {
        ps.add(name + ".w", Tensor<T>::uniform_fan_in({n, m}, n, rng));
        ps.add(name + ".b", Tensor<T>::zeros({m}));
    };
    conv("conv0", cfg.in_channels(), cfg.hidden);
    conv("conv1", cfg.hidden, cfg.hidden);
    conv("conv2", cfg.hidden, cfg.hidden);
    conv("out", cfg.hidden, cfg.latent_channels);
    dense("temb_fc", cfg.temb_dim, cfg.hidden);
    dense("film1s", cfg.d_cond, cfg.hidden);
    dense("film1b", cfg.d_cond, cfg.hidden);
    dense("film2s", cfg.d_cond, cfg.hidden);
    dense("film2b", cfg.d_cond, cfg.hidden);
    return ps;
}

// Sinusoidal time embedding injected additively after a dense projection;
// conditioning injected twice as per-channel scale-and-shift.
template <typename T>
typename Tape<T>::Var uir_velocity_node(Tape<T>& t, ParamSet<T>& ps, const UirConfig& cfg,
                                        typename Tape<T>::Var x, typename Tape<T>::Var q,
                                        typename Tape<T>::Var time) {
    const int hs = cfg.latent_size;
    auto film = [&](typename Tape<T>::Var h, const std::string& s_name, const std::string& b_name) {
        auto s = t.dense(q, t.param(ps, s_name + ".w"), t.param(ps, s_name + ".b"));
        auto b = t.dense(q, t.param(ps, b_name + ".w"), t.param(ps, b_name + ".b"));
        auto unit = t.constant(Tensor<T>::full({cfg.hidden}, T(1)));
        auto scaled = t.mul(h, t.broadcast_channels(t.add(unit, s), hs, hs));
        return t.add(scaled, t.broadcast_channels(b, hs, hs));
    };

    auto h = t.conv2d(x, t.param(ps, "conv0.w"), t.param(ps, "conv0.b"), 1, 1);
    auto temb = t.dense(t.time_embed(time, cfg.temb_dim), t.param(ps, "temb_fc.w"), t.param(ps, "temb_fc.b"));
    h = t.silu(t.add(h, t.broadcast_channels(temb, hs, hs)));
    h = film(h, "film1s", "film1b");
    h = t.silu(t.conv2d(h, t.param(ps, "conv1.w"), t.param(ps, "conv1.b"), 1, 1));
    h = film(h, "film2s", "film2b");
    h = t.silu(t.conv2d(h, t.param(ps, "conv2.w"), t.param(ps, "conv2.b"), 1, 1));
    return t.conv2d(h, t.param(ps, "out.w"), t.param(ps, "out.b"), 1, 1);
}

struct Uir {
    UirConfig cfg;
    ParamSet<float> params;
};

inline TensorF velocity(Uir& uir, const TensorF& z, const TensorF& q, double time) {
    if (z.shape != Shape{uir.cfg.latent_size, uir.cfg.latent_size, uir.cfg.in_channels()})
        throw std::invalid_argument("velocity: input " + shape_str(z.shape) + " incompatible with field input " +
                                    shape_str({uir.cfg.latent_size, uir.cfg.latent_size, uir.cfg.in_channels()}));
    if (q.numel() != static_cast<std::size_t>(uir.cfg.d_cond))
        throw std::invalid_argument("velocity: conditioning length " + std::to_string(q.numel()) + " != " +
                                    std::to_string(uir.cfg.d_cond));
    if (time < 0.0 || time > 1.0)
        throw std::invalid_argument("velocity: t=" + std::to_string(time) + " outside [0,1]");
    Tape<float> t;
    return t.val(uir_velocity_node(t, uir.params, uir.cfg, t.input(z), t.input(q),
                                   t.input(TensorF::scalar(static_cast<float>(time)))));
}

// z_t = (1 - t) a + t b; endpoints return the operand bit-exactly.
template <typename T>
Tensor<T> interpolate(const Tensor<T>& z_deg, const Tensor<T>& z_hq, double time) {
    z_deg.require_same_shape(z_hq, "interpolate");
    if (time < 0.0 || time > 1.0)
        throw std::invalid_argument("interpolate: t=" + std::to_string(time) + " outside [0,1]");
    if (time == 0.0) return z_deg;
    if (time == 1.0) return z_hq;
    Tensor<T> out(z_deg.shape);
    const T w1 = static_cast<T>(1.0 - time), w2 = static_cast<T>(time);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = w1 * z_deg[i] + w2 * z_hq[i];
    return out;
}

// t = sigmoid(m + s * N(0,1)): supervision concentrates mid-trajectory.
inline double sample_t_logit_normal(Rng& rng, double location = 0.0, double scale = 1.0) {
    if (!(scale > 0.0)) throw std::invalid_argument("sample_t_logit_normal: scale must be > 0");
    const double x = location + scale * rng.normal();
    return 1.0 / (1.0 + std::exp(-x));
}

struct FlowBatch {
    std::vector<TensorF> z_deg;
    std::vector<TensorF> z_hq;
    std::vector<TensorF> q;
    std::vector<double> t;
    std::vector<TensorF> eps;  // noise endpoints, only for the noise-conditioned baseline

    void validate(bool need_eps) const {
        if (z_deg.size() != z_hq.size() || z_deg.size() != q.size() || z_deg.size() != t.size())
            throw std::invalid_argument("FlowBatch: field lengths differ");
        if (need_eps && eps.size() != z_deg.size())
            throw std::invalid_argument("FlowBatch: missing noise endpoints");
        if (z_deg.empty()) throw std::invalid_argument("FlowBatch: empty batch");
        for (double tv : t)
            if (tv < 0.0 || tv > 1.0) throw std::invalid_argument("FlowBatch: t outside [0,1]");
    }
};

namespace detail {

inline TensorF displacement(const TensorF& to, const TensorF& from) {
    to.require_same_shape(from, "displacement");
    TensorF out(to.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = to[i] - from[i];
    return out;
}

}  // namespace detail

// Regression kernel shared by both objectives: mean squared error between a
// predicted velocity and its constant target.
inline typename Tape<float>::Var velocity_regression_node(Tape<float>& t, typename Tape<float>::Var v,
                                                          const TensorF& target) {
    return t.mean_square(t.sub(v, t.input(target)));
}

// Mean over batch and elements of || v(z_t, Q, t) - (z_hq - z_deg) ||^2.
inline typename Tape<float>::Var fm_loss_node(Tape<float>& t, Uir& uir, const FlowBatch& batch) {
    batch.validate(false);
    if (uir.cfg.noise_conditioned)
        throw std::invalid_argument("fm_loss: params belong to the noise-conditioned baseline");
    typename Tape<float>::Var total{};
    for (std::size_t i = 0; i < batch.z_deg.size(); ++i) {
        auto z_t = t.input(interpolate(batch.z_deg[i], batch.z_hq[i], batch.t[i]));
        auto v = uir_velocity_node(t, uir.params, uir.cfg, z_t, t.input(batch.q[i]),
                                   t.input(TensorF::scalar(static_cast<float>(batch.t[i]))));
        auto loss = velocity_regression_node(t, v, detail::displacement(batch.z_hq[i], batch.z_deg[i]));
        total = (i == 0) ? loss : t.add(total, loss);
    }
    return t.scale(total, 1.0 / static_cast<double>(batch.z_deg.size()));
}

inline double fm_loss(Uir& uir, const FlowBatch& batch) {
    Tape<float> t;
    const double v = static_cast<double>(t.val(fm_loss_node(t, uir, batch))[0]);
    if (!std::isfinite(v)) throw std::runtime_error("fm_loss: non-finite loss");
    return v;
}

// Baseline objective: z_t interpolates noise toward z_hq, the target velocity
// is z_hq - eps, and the degraded latent rides along as channel context.
inline typename Tape<float>::Var fm_loss_noise_conditioned_node(Tape<float>& t, Uir& uir, const FlowBatch& batch) {
    batch.validate(true);
    if (!uir.cfg.noise_conditioned)
        throw std::invalid_argument("fm_loss_noise_conditioned: params are not the noise-conditioned variant");
    typename Tape<float>::Var total{};
    for (std::size_t i = 0; i < batch.z_deg.size(); ++i) {
        auto z_t = t.input(interpolate(batch.eps[i], batch.z_hq[i], batch.t[i]));
        auto x = t.concat_channels(z_t, t.input(batch.z_deg[i]));
        auto v = uir_velocity_node(t, uir.params, uir.cfg, x, t.input(batch.q[i]),
                                   t.input(TensorF::scalar(static_cast<float>(batch.t[i]))));
        auto loss = velocity_regression_node(t, v, detail::displacement(batch.z_hq[i], batch.eps[i]));
        total = (i == 0) ? loss : t.add(total, loss);
    }
    return t.scale(total, 1.0 / static_cast<double>(batch.z_deg.size()));
}

inline double fm_loss_noise_conditioned(Uir& uir, const FlowBatch& batch) {
    Tape<float> t;
    const double v = static_cast<double>(t.val(fm_loss_noise_conditioned_node(t, uir, batch))[0]);
    if (!std::isfinite(v)) throw std::runtime_error("fm_loss_noise_conditioned: non-finite loss");
    return v;
}

// --- Euler integration ------------------------------------------------

using VelocityFn = std::function<TensorF(const TensorF&, const TensorF&, double)>;

// T explicit-Euler steps of size 1/T on the left-endpoint grid {0, 1/T, ...},
// conditioning held fixed for the whole round.
template <typename T>
Tensor<T> euler_round(Tensor<T> z, const Tensor<T>& q, int steps,
                      const std::function<Tensor<T>(const Tensor<T>&, const Tensor<T>&, double)>& field) {
    if (steps < 1) throw std::invalid_argument("euler_round: T must be >= 1");
    const T h = T(1) / static_cast<T>(steps);
    for (int k = 0; k < steps; ++k) {
        const Tensor<T> v = field(z, q, static_cast<double>(k) / static_cast<double>(steps));
        v.require_same_shape(z, "euler_round velocity");
        for (std::size_t i = 0; i < z.numel(); ++i) z[i] += h * v[i];
        if (!z.all_finite())
            throw std::runtime_error("euler_round: non-finite latent at step " + std::to_string(k));
    }
    return z;
}

inline TensorF euler_round(const TensorF& z, const TensorF& q, int steps, Uir& uir) {
    return euler_round<float>(
        z, q, steps, [&uir](const TensorF& zz, const TensorF& qq, double tt) { return velocity(uir, zz, qq, tt); });
}

// --- training ------------------------------------------------

enum class Conditioning { kEmbedding, kText };

inline TensorF condition_for(Lqa& lqa, const TensorF& z, Conditioning mode) {
    const Assessment a = identify(lqa, z);
    if (mode == Conditioning::kEmbedding) return a.embedding;
    return text_embedding(lqa, threshold_bits(a));
}

struct UirTrainConfig {
    double lr = 2e-3;
    int steps = 3000;
    int batch = 8;
    int euler_steps = 4;   // T, steps per round in iterative rollouts
    int rounds_train = 4;  // rollout depth n is drawn from {0, ..., rounds_train-1}
    double logit_normal_m = 0.0;
    double logit_normal_s = 1.0;
    Conditioning conditioning = Conditioning::kEmbedding;
    std::uint64_t seed = 0;
};

// Re-assessed rollout: n rounds of the current field with the conditioning
// refreshed after every round. No gradients flow through this.
inline std::pair<TensorF, TensorF> rollout(Uir& uir, Lqa& lqa, const TensorF& z0, int n, int euler_steps,
                                           Conditioning mode) {
    TensorF z = z0;
    TensorF q = condition_for(lqa, z, mode);
    for (int r = 0; r < n; ++r) {
        z = euler_round(z, q, euler_steps, uir);
        q = condition_for(lqa, z, mode);
    }
    return {std::move(z), std::move(q)};
}

namespace detail {

struct PairSample {
    TensorF z_deg;
    TensorF z_hq;
};

// Fresh composite per draw: pick a clean image, sample a spec from a uniform
// group mix, degrade, encode both endpoints.
inline PairSample draw_pair(const std::vector<Image>& clean_corpus, const std::vector<TensorF>& clean_latents,
                            Codec& codec, Rng& rng) {
    const std::size_t idx = rng.uniform_index(clean_corpus.size());
    const auto group = static_cast<GroupTag>(rng.uniform_index(kNumGroups));
    const CompositeSpec spec = sample_spec(group, rng.next_u64());
    const Image degraded = apply_composite(clean_corpus[idx], spec, rng.next_u64());
    PairSample p;
    p.z_deg = encode(codec, degraded);
    p.z_hq = clean_latents[idx];
    return p;
}

inline TensorF gaussian_latent(const Shape& shape, Rng& rng) {
    TensorF out(shape);
    for (auto& x : out.data) x = static_cast<float>(rng.normal());
    return out;
}

}  // namespace detail

// Direct (non-iterative) objective. Codec and LQA stay frozen.
inline std::vector<double> train_uir(Uir& uir, const std::vector<Image>& clean_corpus, Codec& codec, Lqa& lqa,
                                     const UirTrainConfig& tc) {
    if (clean_corpus.empty()) throw std::invalid_argument("train_uir: empty corpus");
    Rng root(tc.seed);
    Rng data = root.derive("uir.data");
    Rng tdraw = root.derive("uir.t");
    Rng eps_rng = root.derive("uir.eps");
    std::vector<TensorF> clean_latents;
    clean_latents.reserve(clean_corpus.size());
    for (const auto& img : clean_corpus) clean_latents.push_back(encode(codec, img));

    AdamState<float> opt;
    opt.lr = tc.lr;
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(tc.steps));
    for (int step = 0; step < tc.steps; ++step) {
        FlowBatch batch;
        for (int b = 0; b < tc.batch; ++b) {
            auto pair = detail::draw_pair(clean_corpus, clean_latents, codec, data);
            batch.q.push_back(condition_for(lqa, pair.z_deg, tc.conditioning));
            batch.t.push_back(sample_t_logit_normal(tdraw, tc.logit_normal_m, tc.logit_normal_s));
            if (uir.cfg.noise_conditioned)
                batch.eps.push_back(detail::gaussian_latent(pair.z_deg.shape, eps_rng));
            batch.z_deg.push_back(std::move(pair.z_deg));
            batch.z_hq.push_back(std::move(pair.z_hq));
        }
        Tape<float> t;
        auto loss = uir.cfg.noise_conditioned ? fm_loss_noise_conditioned_node(t, uir, batch)
                                              : fm_loss_node(t, uir, batch);
        const double lv = static_cast<double>(t.val(loss)[0]);
        if (!std::isfinite(lv)) throw std::runtime_error("train_uir: loss non-finite at step " + std::to_string(step));
        losses.push_back(lv);
        uir.params.zero_grads();
        t.backward(loss);
        adam_update(uir.params, opt);
    }
    return losses;
}

// Iterative-conditioning objective: the source endpoint is the latent reached
// after n re-assessed rounds of the current model, so training matches the
// states the inference loop actually visits. The rollout is gradient-free;
// the loss applies to the final velocity prediction only.
inline std::vector<double> train_uir_iterative(Uir& uir, const std::vector<Image>& clean_corpus, Codec& codec,
                                               Lqa& lqa, const UirTrainConfig& tc) {
    if (clean_corpus.empty()) throw std::invalid_argument("train_uir_iterative: empty corpus");
    if (uir.cfg.noise_conditioned)
        throw std::invalid_argument("train_uir_iterative: defined for the noise-free variant only");
    Rng root(tc.seed);
    Rng data = root.derive("uir.data");
    Rng tdraw = root.derive("uir.t");
    Rng round_rng = root.derive("uir.rounds");
    std::vector<TensorF> clean_latents;
    clean_latents.reserve(clean_corpus.size());
    for (const auto& img : clean_corpus) clean_latents.push_back(encode(codec, img));

    AdamState<float> opt;
    opt.lr = tc.lr;
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(tc.steps));
    for (int step = 0; step < tc.steps; ++step) {
        FlowBatch batch;
        for (int b = 0; b < tc.batch; ++b) {
            auto pair = detail::draw_pair(clean_corpus, clean_latents, codec, data);
            const int n = static_cast<int>(round_rng.uniform_index(static_cast<std::uint64_t>(tc.rounds_train)));
            auto [z_n, q_n] = rollout(uir, lqa, pair.z_deg, n, tc.euler_steps, tc.conditioning);
            batch.z_deg.push_back(std::move(z_n));
            batch.q.push_back(std::move(q_n));
            batch.t.push_back(sample_t_logit_normal(tdraw, tc.logit_normal_m, tc.logit_normal_s));
            batch.z_hq.push_back(std::move(pair.z_hq));
        }
        Tape<float> t;
        auto loss = fm_loss_node(t, uir, batch);
        const double lv = static_cast<double>(t.val(loss)[0]);
        if (!std::isfinite(lv))
            throw std::runtime_error("train_uir_iterative: loss non-finite at step " + std::to_string(step));
        losses.push_back(lv);
        uir.params.zero_grads();
        t.backward(loss);
        adam_update(uir.params, opt);
    }
    return losses;
}

}  // namespace rar
