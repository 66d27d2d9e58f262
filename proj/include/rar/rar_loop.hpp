#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/codec.hpp"
#include "rar/image.hpp"
#include "rar/lqa.hpp"
#include "rar/metrics.hpp"
#include "rar/uir.hpp"


namespace rar {

// Restore/assess loop. One round is T Euler steps under fixed conditioning
// followed by a pairwise verdict; STOP returns the latent from before the
// rejected round. The budget counts rounds, not individual Euler steps.

struct RarConfig {
    int euler_steps = 4;  // T, steps per round
    int max_rounds = 8;   // N_max
    double delta = 0.0;   // forwarded to compare
    Conditioning conditioning = Conditioning::kEmbedding;
    bool trace_latents = false;
};

enum class StopReason { kVerdictStop, kBudgetExhausted };

inline const char* stop_reason_name(StopReason r) {
    return r == StopReason::kVerdictStop ? "VerdictStop" : "BudgetExhausted";
}

struct RarRoundRecord {
    int round = 0;  // 1-based
    Assessment assessment;
    Verdict verdict;
    bool terminal = false;
    double psnr_db = std::numeric_limits<double>::quiet_NaN();
    double ssim_val = std::numeric_limits<double>::quiet_NaN();
    TensorF pre_latent;   // populated only when trace_latents
    TensorF post_latent;  // populated only when trace_latents
};

struct RarTrace {
    std::vector<RarRoundRecord> rounds;
};

struct RarResult {
    Image restored;
    int rounds_executed = 0;
    StopReason reason = StopReason::kBudgetExhausted;
    RarTrace trace;
};

inline void require_compatible_stack(Codec& codec, Lqa& lqa, Uir& uir) {
    if (codec.cfg.latent_shape() != lqa.cfg.latent_shape())
        throw std::invalid_argument("rar: codec latent " + shape_str(codec.cfg.latent_shape()) +
                                    " does not match assessor input " + shape_str(lqa.cfg.latent_shape()));
    if (codec.cfg.latent_shape() != uir.cfg.latent_shape())
        throw std::invalid_argument("rar: codec latent " + shape_str(codec.cfg.latent_shape()) +
                                    " does not match velocity field " + shape_str(uir.cfg.latent_shape()));
    if (lqa.cfg.d_cond != uir.cfg.d_cond)
        throw std::invalid_argument("rar: conditioning width " + std::to_string(lqa.cfg.d_cond) + " vs " +
                                    std::to_string(uir.cfg.d_cond));
    if (uir.cfg.noise_conditioned)
        throw std::invalid_argument("rar: inference loop requires the noise-free velocity field");
}

namespace detail {

inline RarResult rar_run(const Image& img, Codec& codec, Lqa& lqa, Uir& uir, const RarConfig& cfg, int rounds,
                         bool adaptive, const Image* reference) {
    require_compatible_stack(codec, lqa, uir);
    if (cfg.euler_steps < 1) throw std::invalid_argument("rar: T must be >= 1");
    if (rounds < 1) throw std::invalid_argument("rar: round budget must be >= 1");

    RarResult res;
    TensorF z = encode(codec, img);
    TensorF q = condition_for(lqa, z, cfg.conditioning);

    for (int round = 1; round <= rounds; ++round) {
        TensorF z_new;
        try {
            z_new = euler_round(z, q, cfg.euler_steps, uir);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("rar: round " + std::to_string(round) + ": " + e.what());
        }
        RarRoundRecord rec;
        rec.round = round;
        rec.verdict = compare(lqa, z, z_new, cfg.delta);
        rec.assessment = identify(lqa, z_new);
        if (cfg.trace_latents) {
            rec.pre_latent = z;
            rec.post_latent = z_new;
        }
        if (reference != nullptr) {
            const Image decoded = decode(codec, z_new);
            rec.psnr_db = psnr(decoded, *reference);
            rec.ssim_val = ssim(decoded, *reference);
        }
        res.rounds_executed = round;
        const bool stop = adaptive && rec.verdict.decision == Decision::kStop;
        rec.terminal = stop || round == rounds;
        res.trace.rounds.push_back(std::move(rec));
        if (stop) {
            res.reason = StopReason::kVerdictStop;
            res.restored = decode(codec, z);  // latent from before the rejected round
            return res;
        }
        q = cfg.conditioning == Conditioning::kEmbedding
                ? res.trace.rounds.back().assessment.embedding
                : text_embedding(lqa, threshold_bits(res.trace.rounds.back().assessment));
        z = std::move(z_new);
    }
    res.reason = StopReason::kBudgetExhausted;
    res.restored = decode(codec, z);
    return res;
}

}  // namespace detail

inline RarResult rar_infer(const Image& img, Codec& codec, Lqa& lqa, Uir& uir, const RarConfig& cfg,
                           const Image* reference = nullptr) {
    if (cfg.max_rounds < 1) throw std::invalid_argument("rar_infer: N_max must be >= 1");
    return detail::rar_run(img, codec, lqa, uir, cfg, cfg.max_rounds, /*adaptive=*/true, reference);
}

// Ablation mode: exactly n rounds, verdicts recorded but never acted on.
inline RarResult rar_infer_fixed(const Image& img, Codec& codec, Lqa& lqa, Uir& uir, int n_rounds,
                                 const RarConfig& cfg, const Image* reference = nullptr) {
    return detail::rar_run(img, codec, lqa, uir, cfg, n_rounds, /*adaptive=*/false, reference);
}

// Line-delimited trace record schema:
//   round=<i> probs=<p0,p1,p2,p3> quality=<q> margin=<m> verdict=<CONTINUE|STOP>
//   terminal=<0|1> [psnr=<dB> ssim=<v>]
inline std::string trace_to_text(const RarTrace& trace) {
    std::ostringstream os;
    os << std::setprecision(10);
    for (const auto& r : trace.rounds) {
        os << "round=" << r.round << " probs=";
        for (int k = 0; k < kNumKinds; ++k) os << (k ? "," : "") << r.assessment.probs[k];
        os << " quality=" << r.assessment.quality << " margin=" << r.verdict.margin << " verdict="
           << (r.verdict.decision == Decision::kContinue ? "CONTINUE" : "STOP")
           << " terminal=" << (r.terminal ? 1 : 0);
        if (!std::isnan(r.psnr_db)) os << " psnr=" << r.psnr_db << " ssim=" << r.ssim_val;
        os << "\n";
    }
    return os.str();
}

inline void write_trace(const std::string& path, const RarTrace& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_trace: cannot open '" + path + "'");
    os << trace_to_text(trace);
}

}  // namespace rar
