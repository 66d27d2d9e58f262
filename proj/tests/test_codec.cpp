#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rar/codec.hpp"
#include "rar/degrade.hpp"

using namespace rar;

namespace {

Codec make_test_codec(std::uint64_t seed = 1) {
    Codec codec;
    codec.params = make_codec_params<float>(codec.cfg, Rng(seed));
    return codec;
}

bool tensors_equal(const TensorF& a, const TensorF& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.numel() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("encode maps 32x32x3 to 8x8x8 deterministically") {
    Codec codec = make_test_codec();
    const Image img = gen_clean(5, 1, 32)[0];
    const TensorF z1 = encode(codec, img);
    CHECK(z1.shape == Shape{8, 8, 8});
    const TensorF z2 = encode(codec, img);
    CHECK(tensors_equal(z1, z2));
}

TEST_CASE("encode rejects resolution mismatch") {
    Codec codec = make_test_codec();
    CHECK_THROWS_AS(encode(codec, make_image(16, 16)), std::invalid_argument);
}

TEST_CASE("decode maps 8x8x8 to 32x32x3 in range, bit-stable") {
    Codec codec = make_test_codec();
    const TensorF z = TensorF::zeros({8, 8, 8});
    const Image img1 = decode(codec, z);
    CHECK(img1.shape == Shape{32, 32, 3});
    for (float p : img1.data) {
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
    }
    const Image img2 = decode(codec, z);
    CHECK(tensors_equal(img1, img2));
    CHECK_THROWS_AS(decode(codec, TensorF::zeros({4, 4, 8})), std::invalid_argument);
}

TEST_CASE("degradations are visible in latent space") {
    Codec codec = make_test_codec();
    const Image img = gen_clean(23, 1, 32)[0];
    const Image noisy = apply(img, DegradationSpec::noise(0.2), 9);
    CHECK(encode(codec, img).l2_distance(encode(codec, noisy)) > 0.0);
}

TEST_CASE("train_codec overfits a single image") {
    Codec codec = make_test_codec(3);
    const Image img = gen_clean(8, 1, 32)[0];
    CodecTrainConfig tc;
    tc.steps = 500;
    tc.batch = 1;
    tc.seed = 4;
    const auto losses = train_codec(codec, {img}, tc);
    REQUIRE(losses.size() == 500);
    CHECK(losses.back() < 1e-3);
    CHECK(losses.front() > losses.back());
}

TEST_CASE("train_codec is deterministic per seed") {
    const auto corpus = gen_clean(11, 4, 32);
    CodecTrainConfig tc;
    tc.steps = 60;
    tc.batch = 2;
    tc.seed = 21;
    Codec a = make_test_codec(5);
    Codec b = make_test_codec(5);
    const auto la = train_codec(a, corpus, tc);
    const auto lb = train_codec(b, corpus, tc);
    CHECK(la.back() == lb.back());
    for (const auto& name : a.params.names()) CHECK(tensors_equal(a.params.value(name), b.params.value(name)));
}

TEST_CASE("train_codec rejects an empty corpus") {
    Codec codec = make_test_codec();
    CHECK_THROWS_AS(train_codec(codec, {}, CodecTrainConfig{}), std::invalid_argument);
}
