#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/image.hpp"
#include "rar/rng.hpp"

namespace rar {

enum class Kind { kNoise = 0, kBlur = 1, kLowLight = 2, kHaze = 3 };
constexpr int kNumKinds = 4;

inline const char* kind_name(Kind k) {
    switch (k) {
        case Kind::kNoise: return "Noise";
        case Kind::kBlur: return "Blur";
        case Kind::kLowLight: return "LowLight";
        case Kind::kHaze: return "Haze";
    }
    return "?";
}

inline Kind kind_from_name(const std::string& s) {
    for (int i = 0; i < kNumKinds; ++i)
        if (s == kind_name(static_cast<Kind>(i))) return static_cast<Kind>(i);
    throw std::invalid_argument("unknown degradation kind '" + s + "'");
}

// One corruption and its parameters. Degenerate parameters (sigma=0, g=1 with
// gamma=1, tau=1) are exact identity maps.
struct DegradationSpec {
    Kind kind = Kind::kNoise;
    double sigma = 0.0;    // Noise: additive Gaussian std
    double sigma_b = 0.0;  // Blur: Gaussian blur std
    double gain = 1.0;     // LowLight: multiplicative gain in (0,1]
    double gamma = 1.0;    // LowLight: exponent >= 1
    double airlight = 0.0; // Haze: airlight level in [0,1]
    double tau = 1.0;      // Haze: transmission in (0,1]

    static DegradationSpec noise(double sigma) {
        DegradationSpec d;
        d.kind = Kind::kNoise;
        d.sigma = sigma;
        return d;
    }
    static DegradationSpec blur(double sigma_b) {
        DegradationSpec d;
        d.kind = Kind::kBlur;
        d.sigma_b = sigma_b;
        return d;
    }
    static DegradationSpec low_light(double gain, double gamma) {
        DegradationSpec d;
        d.kind = Kind::kLowLight;
        d.gain = gain;
        d.gamma = gamma;
        return d;
    }
    static DegradationSpec haze(double airlight, double tau) {
        DegradationSpec d;
        d.kind = Kind::kHaze;
        d.airlight = airlight;
        d.tau = tau;
        return d;
    }

    void validate() const {
        switch (kind) {
            case Kind::kNoise:
                if (sigma < 0.0 || sigma > 0.5)
                    throw std::invalid_argument("Noise sigma out of [0, 0.5]: " + std::to_string(sigma));
                return;
            case Kind::kBlur:
                if (sigma_b < 0.0 || sigma_b > 3.0)
                    throw std::invalid_argument("Blur sigma_b out of [0, 3]: " + std::to_string(sigma_b));
                return;
            case Kind::kLowLight:
                if (gain <= 0.0 || gain > 1.0)
                    throw std::invalid_argument("LowLight gain out of (0, 1]: " + std::to_string(gain));
                if (gamma < 1.0)
                    throw std::invalid_argument("LowLight gamma must be >= 1: " + std::to_string(gamma));
                return;
            case Kind::kHaze:
                if (airlight < 0.0 || airlight > 1.0)
                    throw std::invalid_argument("Haze airlight out of [0, 1]: " + std::to_string(airlight));
                if (tau <= 0.0 || tau > 1.0)
                    throw std::invalid_argument("Haze tau out of (0, 1]: " + std::to_string(tau));
                return;
        }
    }
};

enum class GroupTag { kSingle = 0, kGroupA = 1, kGroupB = 2, kGroupC = 3 };
constexpr int kNumGroups = 4;

inline const char* group_name(GroupTag g) {
    switch (g) {
        case GroupTag::kSingle: return "Single";
        case GroupTag::kGroupA: return "GroupA";
        case GroupTag::kGroupB: return "GroupB";
        case GroupTag::kGroupC: return "GroupC";
    }
    return "?";
}

inline GroupTag group_from_name(const std::string& s) {
    for (int i = 0; i < kNumGroups; ++i)
        if (s == group_name(static_cast<GroupTag>(i))) return static_cast<GroupTag>(i);
    throw std::invalid_argument("unknown group tag '" + s + "'");
}

// Ordered corruption sequence. Single: 1 step, GroupA/B: 2, GroupC: 3; no kind
// repeats within one composite.
struct CompositeSpec {
    std::vector<DegradationSpec> steps;
    GroupTag group = GroupTag::kSingle;

    void validate() const {
        const std::size_t want = group == GroupTag::kSingle ? 1 : (group == GroupTag::kGroupC ? 3 : 2);
        if (steps.size() != want)
            throw std::invalid_argument(std::string("composite length ") + std::to_string(steps.size()) +
                                        " invalid for " + group_name(group));
        bool seen[kNumKinds] = {false, false, false, false};
        for (const auto& s : steps) {
            s.validate();
            const int k = static_cast<int>(s.kind);
            if (seen[k]) throw std::invalid_argument("composite repeats kind " + std::string(kind_name(s.kind)));
            seen[k] = true;
        }
    }

    std::array<int, kNumKinds> multi_hot() const {
        std::array<int, kNumKinds> label{0, 0, 0, 0};
        for (const auto& s : steps) label[static_cast<int>(s.kind)] = 1;
        return label;
    }
};

struct LabeledSample {
    Image clean;
    Image degraded;
    CompositeSpec spec;
    std::array<int, kNumKinds> label{0, 0, 0, 0};
    std::uint64_t apply_seed = 0;  // degraded == apply_composite(clean, spec, apply_seed)
};

// --- clean image synthesis ------------------------------------------------

// Procedural clean images: a smooth multi-wave gradient base, one to three
// anti-aliased shapes (discs / axis-aligned boxes), band-limited texture, and
// a fixed-phase high-frequency carrier with a random per-image amplitude.
// Content texture stays below the latent Nyquist so the codec can represent
// it; the carrier occupies the top band, which keeps blur and noise
// statistically distinguishable after encoding (blur attenuates it, noise
// perturbs it incoherently).
inline Image gen_clean_one(Rng rng, int size) {
    Image img = make_image(size, size);
    const int H = size, W = size;

    // low-frequency base: two directional cosine waves plus offset
    const double a0 = rng.uniform(0.25, 0.45);
    const double th0 = rng.uniform(0.0, 6.2831853);
    const double f0 = rng.uniform(0.5, 1.5);
    const double a1 = rng.uniform(0.1, 0.25);
    const double th1 = rng.uniform(0.0, 6.2831853);
    const double f1 = rng.uniform(1.0, 2.5);
    double base_rgb[3];
    for (double& b : base_rgb) b = rng.uniform(0.35, 0.65);

    std::vector<double> lum(static_cast<std::size_t>(H) * W, 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double u = (x + 0.5) / W, v = (y + 0.5) / H;
            const double p0 = std::cos(th0) * u + std::sin(th0) * v;
            const double p1 = std::cos(th1) * u + std::sin(th1) * v;
            lum[static_cast<std::size_t>(y) * W + x] =
                a0 * std::cos(6.2831853 * f0 * p0) + a1 * std::cos(6.2831853 * f1 * p1);
        }

    // band-limited texture kept under the latent Nyquist (4 cycles per 32 px)
    const int waves = 2 + static_cast<int>(rng.uniform_index(3));
    for (int k = 0; k < waves; ++k) {
        const double amp = rng.uniform(0.03, 0.08);
        const double th = rng.uniform(0.0, 6.2831853);
        const double f = rng.uniform(1.5, 3.5);
        const double ph = rng.uniform(0.0, 6.2831853);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double u = (x + 0.5) / W, v = (y + 0.5) / H;
                const double p = std::cos(th) * u + std::sin(th) * v;
                lum[static_cast<std::size_t>(y) * W + x] += amp * std::sin(6.2831853 * f * p + ph);
            }
    }

    // top-band carriers: two fixed-phase diagonal waves at 0.3125 cyc/px
    // sharing one smooth random amplitude field. Local carrier strength is
    // content the encoder has to track cell by cell, and the two readings
    // agree on clean images while pixel noise jitters them independently.
    const double carrier_amp = rng.uniform(0.08, 0.14);
    const double mod_th = rng.uniform(0.0, 6.2831853);
    const double mod_f = rng.uniform(0.8, 1.8);
    const double mod_ph = rng.uniform(0.0, 6.2831853);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double u = (x + 0.5) / W, v = (y + 0.5) / H;
            const double p = std::cos(mod_th) * u + std::sin(mod_th) * v;
            const double local_amp =
                carrier_amp * (1.0 + 0.4 * std::cos(6.2831853 * mod_f * p + mod_ph));
            lum[static_cast<std::size_t>(y) * W + x] +=
                local_amp * 0.70710678 *
                (std::sin(6.2831853 * 0.3125 * (x + y)) + std::sin(6.2831853 * 0.3125 * (x - y)));
        }

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                img[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
                    static_cast<float>(base_rgb[c] + lum[static_cast<std::size_t>(y) * W + x]);

    // anti-aliased shapes with per-channel contrast
    const int shapes = 1 + static_cast<int>(rng.uniform_index(3));
    for (int s = 0; s < shapes; ++s) {
        const bool disc = rng.uniform() < 0.5;
        const double cx = rng.uniform(0.2, 0.8) * W;
        const double cy = rng.uniform(0.2, 0.8) * H;
        const double r = rng.uniform(0.12, 0.3) * W;
        double col[3];
        const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
        for (double& c : col) c = sign * rng.uniform(0.3, 0.6);
        const double soft = 1.0;  // one-pixel soft edge
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double d;
                if (disc) {
                    d = std::sqrt((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy)) - r;
                } else {
                    const double dx = std::abs(x + 0.5 - cx) - r * 0.8;
                    const double dy = std::abs(y + 0.5 - cy) - r * 0.6;
                    d = std::max(dx, dy);
                }
                const double t = std::clamp(0.5 - d / soft, 0.0, 1.0);
                if (t <= 0.0) continue;
                for (int c = 0; c < 3; ++c) {
                    auto& px = img[(static_cast<std::size_t>(y) * W + x) * 3 + c];
                    px = static_cast<float>(px + t * col[c]);
                }
            }
    }

    for (auto& p : img.data) p = clamp01(p);
    return img;
}

inline std::vector<Image> gen_clean(std::uint64_t seed, int count, int size = 32) {
    if (size < 8) throw std::invalid_argument("gen_clean: size must be >= 8, got " + std::to_string(size));
    if ((size & (size - 1)) != 0) throw std::invalid_argument("gen_clean: size must be a power of two");
    if (count < 1) throw std::invalid_argument("gen_clean: count must be >= 1");
    Rng root(seed);
    Rng stream = root.derive("gen_clean");
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(gen_clean_one(stream.derive(static_cast<std::uint64_t>(i)), size));
    return out;
}

// --- degradation application ------------------------------------------------

inline Image apply(const Image& img, const DegradationSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int H = img.shape[0], W = img.shape[1], C = img.shape[2];
    Image out = img;
    switch (spec.kind) {
        case Kind::kNoise: {
            if (spec.sigma == 0.0) return out;
            Rng rng(seed);
            for (auto& p : out.data) p = clamp01(p + static_cast<float>(spec.sigma * rng.normal()));
            return out;
        }
        case Kind::kBlur: {
            const int radius = static_cast<int>(std::ceil(3.0 * spec.sigma_b));
            if (radius == 0) return out;
            std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
            double sum = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const double v = std::exp(-0.5 * (i * i) / (spec.sigma_b * spec.sigma_b));
                kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
                sum += v;
            }
            for (auto& k : kernel) k = static_cast<float>(k / sum);
            // reflect padding avoids dark halos at borders
            auto reflect = [](int i, int n) {
                while (i < 0 || i >= n) {
                    if (i < 0) i = -i - 1;
                    if (i >= n) i = 2 * n - 1 - i;
                }
                return i;
            };
            Image tmp = img;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < C; ++c) {
                        float acc = 0.0f;
                        for (int i = -radius; i <= radius; ++i)
                            acc += kernel[static_cast<std::size_t>(i + radius)] *
                                   img[(static_cast<std::size_t>(y) * W + reflect(x + i, W)) * C + c];
                        tmp[(static_cast<std::size_t>(y) * W + x) * C + c] = acc;
                    }
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < C; ++c) {
                        float acc = 0.0f;
                        for (int i = -radius; i <= radius; ++i)
                            acc += kernel[static_cast<std::size_t>(i + radius)] *
                                   tmp[(static_cast<std::size_t>(reflect(y + i, H)) * W + x) * C + c];
                        out[(static_cast<std::size_t>(y) * W + x) * C + c] = clamp01(acc);
                    }
            return out;
        }
        case Kind::kLowLight: {
            if (spec.gain == 1.0 && spec.gamma == 1.0) return out;
            for (auto& p : out.data)
                p = clamp01(static_cast<float>(std::pow(spec.gain * static_cast<double>(p), spec.gamma)));
            return out;
        }
        case Kind::kHaze: {
            if (spec.tau == 1.0) return out;
            const float t = static_cast<float>(spec.tau);
            const float a = static_cast<float>(spec.airlight * (1.0 - spec.tau));
            for (auto& p : out.data) p = clamp01(t * p + a);
            return out;
        }
    }
    return out;
}

inline Image apply_composite(const Image& img, const CompositeSpec& composite, std::uint64_t seed) {
    composite.validate();
    Rng root(seed);
    Image out = img;
    for (std::size_t i = 0; i < composite.steps.size(); ++i)
        out = apply(out, composite.steps[i], root.derive(i).next_u64());
    return out;
}

// Degraded states after each prefix of the composite: index j holds the image
// after applying steps [0, j). Index 0 is the clean input; the last entry
// equals apply_composite.
inline std::vector<Image> apply_prefixes(const Image& img, const CompositeSpec& composite, std::uint64_t seed) {
    composite.validate();
    Rng root(seed);
    std::vector<Image> out;
    out.reserve(composite.steps.size() + 1);
    out.push_back(img);
    for (std::size_t i = 0; i < composite.steps.size(); ++i)
        out.push_back(apply(out.back(), composite.steps[i], root.derive(i).next_u64()));
    return out;
}

// --- spec sampling ------------------------------------------------

// Parameter sub-ranges kept clearly visible so every sampled degradation is
// detectable in both pixel and latent space.
struct VisibleRanges {
    double sigma_lo = 0.05, sigma_hi = 0.2;
    double sigma_b_lo = 0.5, sigma_b_hi = 1.5;
    double gain_lo = 0.2, gain_hi = 0.5;
    double gamma_lo = 1.0, gamma_hi = 2.2;
    double tau_lo = 0.4, tau_hi = 0.8;
    double airlight_lo = 0.7, airlight_hi = 1.0;
};

inline DegradationSpec sample_params(Kind kind, Rng& rng, const VisibleRanges& r = {}) {
    switch (kind) {
        case Kind::kNoise: return DegradationSpec::noise(rng.uniform(r.sigma_lo, r.sigma_hi));
        case Kind::kBlur: return DegradationSpec::blur(rng.uniform(r.sigma_b_lo, r.sigma_b_hi));
        case Kind::kLowLight:
            return DegradationSpec::low_light(rng.uniform(r.gain_lo, r.gain_hi),
                                              rng.uniform(r.gamma_lo, r.gamma_hi));
        case Kind::kHaze:
            return DegradationSpec::haze(rng.uniform(r.airlight_lo, r.airlight_hi),
                                         rng.uniform(r.tau_lo, r.tau_hi));
    }
    throw std::logic_error("sample_params: bad kind");
}

// Kind selection per group. GroupA and GroupB draw from disjoint fixed pair
// pools; GroupC picks one of the four 3-subsets uniformly. Application order
// is shuffled, never fixed.
inline CompositeSpec sample_spec(GroupTag group, std::uint64_t seed) {
    Rng rng(seed);
    CompositeSpec cs;
    cs.group = group;
    std::vector<Kind> kinds;
    switch (group) {
        case GroupTag::kSingle:
            kinds = {static_cast<Kind>(rng.uniform_index(kNumKinds))};
            break;
        case GroupTag::kGroupA: {
            static const std::array<std::array<Kind, 2>, 2> pool = {
                std::array<Kind, 2>{Kind::kNoise, Kind::kBlur},
                std::array<Kind, 2>{Kind::kNoise, Kind::kHaze}};
            const auto& pair = pool[rng.uniform_index(pool.size())];
            kinds = {pair[0], pair[1]};
            break;
        }
        case GroupTag::kGroupB: {
            static const std::array<std::array<Kind, 2>, 2> pool = {
                std::array<Kind, 2>{Kind::kBlur, Kind::kHaze},
                std::array<Kind, 2>{Kind::kLowLight, Kind::kNoise}};
            const auto& pair = pool[rng.uniform_index(pool.size())];
            kinds = {pair[0], pair[1]};
            break;
        }
        case GroupTag::kGroupC: {
            const int excluded = static_cast<int>(rng.uniform_index(kNumKinds));
            for (int k = 0; k < kNumKinds; ++k)
                if (k != excluded) kinds.push_back(static_cast<Kind>(k));
            break;
        }
    }
    // Fisher-Yates order shuffle
    for (std::size_t i = kinds.size(); i > 1; --i)
        std::swap(kinds[i - 1], kinds[rng.uniform_index(i)]);
    for (Kind k : kinds) cs.steps.push_back(sample_params(k, rng));
    cs.validate();
    return cs;
}

// --- spec/manifest text round-trip ------------------------------------------------

inline std::string spec_to_string(const CompositeSpec& cs) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < cs.steps.size(); ++i) {
        const auto& s = cs.steps[i];
        if (i) os << "|";
        os << kind_name(s.kind) << ":";
        switch (s.kind) {
            case Kind::kNoise: os << "sigma=" << s.sigma; break;
            case Kind::kBlur: os << "sigma_b=" << s.sigma_b; break;
            case Kind::kLowLight: os << "gain=" << s.gain << ",gamma=" << s.gamma; break;
            case Kind::kHaze: os << "airlight=" << s.airlight << ",tau=" << s.tau; break;
        }
    }
    return os.str();
}

inline CompositeSpec spec_from_string(const std::string& text, GroupTag group) {
    CompositeSpec cs;
    cs.group = group;
    std::istringstream is(text);
    std::string step;
    while (std::getline(is, step, '|')) {
        const auto colon = step.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("bad spec step '" + step + "'");
        DegradationSpec d;
        d.kind = kind_from_name(step.substr(0, colon));
        std::istringstream ps(step.substr(colon + 1));
        std::string kv;
        while (std::getline(ps, kv, ',')) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("bad spec param '" + kv + "'");
            const std::string key = kv.substr(0, eq);
            const double v = std::stod(kv.substr(eq + 1));
            if (key == "sigma") d.sigma = v;
            else if (key == "sigma_b") d.sigma_b = v;
            else if (key == "gain") d.gain = v;
            else if (key == "gamma") d.gamma = v;
            else if (key == "airlight") d.airlight = v;
            else if (key == "tau") d.tau = v;
            else throw std::invalid_argument("unknown spec param '" + key + "'");
        }
        cs.steps.push_back(d);
    }
    cs.validate();
    return cs;
}

}  // namespace rar
