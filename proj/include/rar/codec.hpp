#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/image.hpp"
#include "rar/params.hpp"
#include "rar/rng.hpp"
#include "rar/tape.hpp"
#include "rar/tensor.hpp"

namespace rar {

// Shared latent space: a small convolutional autoencoder with downsample
// factor 4. Deterministic (no variational term); frozen after training so the
// assessor and the restorer operate in one fixed latent geometry.

struct CodecConfig {
    int image_size = 32;
    int image_channels = 3;
    int latent_channels = 8;
    int enc1 = 32;
    int enc2 = 64;

    int latent_size() const { return image_size / 4; }
    Shape latent_shape() const { return {latent_size(), latent_size(), latent_channels}; }
    Shape image_shape() const { return {image_size, image_size, image_channels}; }
};

template <typename T>
ParamSet<T> make_codec_params(const CodecConfig& cfg, Rng rng) {
    ParamSet<T> ps;
    auto conv = [&](const std::string& name, int kh, int cin, int cout) {
        ps.add(name + ".w", Tensor<T>::uniform_fan_in({kh, kh, cin, cout}, kh * kh * cin, rng));
        ps.add(name + ".b", Tensor<T>::zeros({cout}));
    };
    conv("enc0", 3, cfg.image_channels, cfg.enc1);
    conv("enc1", 3, cfg.enc1, cfg.enc2);
    conv("enc2", 3, cfg.enc2, cfg.latent_channels);
    conv("dec0", 3, cfg.latent_channels, cfg.enc2);
    conv("dec1", 4, cfg.enc2, cfg.enc1);  // tconv, 2x upsample
    conv("dec2", 4, cfg.enc1, cfg.enc1);  // tconv, 2x upsample
    conv("dec3", 3, cfg.enc1, cfg.image_channels);
    return ps;
}

template <typename T>
typename Tape<T>::Var codec_encode_node(Tape<T>& t, ParamSet<T>& ps, typename Tape<T>::Var x) {
    auto h = t.silu(t.conv2d(x, t.param(ps, "enc0.w"), t.param(ps, "enc0.b"), 2, 1));
    h = t.silu(t.conv2d(h, t.param(ps, "enc1.w"), t.param(ps, "enc1.b"), 2, 1));
    return t.conv2d(h, t.param(ps, "enc2.w"), t.param(ps, "enc2.b"), 1, 1);
}

template <typename T>
typename Tape<T>::Var codec_decode_node(Tape<T>& t, ParamSet<T>& ps, typename Tape<T>::Var z) {
    auto h = t.silu(t.conv2d(z, t.param(ps, "dec0.w"), t.param(ps, "dec0.b"), 1, 1));
    h = t.silu(t.tconv2d(h, t.param(ps, "dec1.w"), t.param(ps, "dec1.b"), 2, 1));
    h = t.silu(t.tconv2d(h, t.param(ps, "dec2.w"), t.param(ps, "dec2.b"), 2, 1));
    return t.sigmoid(t.conv2d(h, t.param(ps, "dec3.w"), t.param(ps, "dec3.b"), 1, 1));
}

struct Codec {
    CodecConfig cfg;
    ParamSet<float> params;
};

inline TensorF encode(Codec& codec, const Image& img) {
    if (img.shape != codec.cfg.image_shape())
        throw std::invalid_argument("encode: image " + shape_str(img.shape) + " does not match trained resolution " +
                                    shape_str(codec.cfg.image_shape()));
    Tape<float> t;
    return t.val(codec_encode_node(t, codec.params, t.input(img)));
}

inline Image decode(Codec& codec, const TensorF& latent) {
    if (latent.shape != codec.cfg.latent_shape())
        throw std::invalid_argument("decode: latent " + shape_str(latent.shape) + " does not match codec latent " +
                                    shape_str(codec.cfg.latent_shape()));
    Tape<float> t;
    return t.val(codec_decode_node(t, codec.params, t.input(latent)));
}

struct CodecTrainConfig {
    double lr = 2.5e-3;
    double lr_final = 5e-5;  // cosine-decayed floor
    int steps = 4500;
    int batch = 8;
    std::uint64_t seed = 0;
};

// Mean-square reconstruction over a mixed pool of clean and degraded images,
// so degraded content stays representable in the shared latent.
inline std::vector<double> train_codec(Codec& codec, const std::vector<Image>& corpus,
                                       const CodecTrainConfig& tc) {
    if (corpus.empty()) throw std::invalid_argument("train_codec: empty corpus");
    Rng root(tc.seed);
    Rng batch_rng = root.derive("train.codec");
    AdamState<float> opt;
    opt.lr = tc.lr;
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(tc.steps));
    for (int step = 0; step < tc.steps; ++step) {
        Tape<float> t;
        typename Tape<float>::Var total{};
        for (int b = 0; b < tc.batch; ++b) {
            const Image& img = corpus[batch_rng.uniform_index(corpus.size())];
            auto x = t.input(img);
            auto recon = codec_decode_node(t, codec.params, codec_encode_node(t, codec.params, x));
            auto loss = t.mean_square(t.sub(recon, x));
            total = (b == 0) ? loss : t.add(total, loss);
        }
        auto mean_loss = t.scale(total, 1.0 / tc.batch);
        const double loss_val = static_cast<double>(t.val(mean_loss)[0]);
        if (!std::isfinite(loss_val))
            throw std::runtime_error("train_codec: loss diverged (non-finite) at step " + std::to_string(step));
        losses.push_back(loss_val);
        codec.params.zero_grads();
        t.backward(mean_loss);
        opt.lr = tc.lr_final +
                 (tc.lr - tc.lr_final) * 0.5 * (1.0 + std::cos(3.14159265358979 * step / tc.steps));
        adam_update(codec.params, opt);
    }
    return losses;
}

}  // namespace rar
