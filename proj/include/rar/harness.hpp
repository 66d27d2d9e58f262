#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/checkpoint.hpp"
#include "rar/codec.hpp"
#include "rar/config.hpp"
#include "rar/dataset.hpp"
#include "rar/eval.hpp"
#include "rar/lqa.hpp"
#include "rar/rar_loop.hpp"
#include "rar/uir.hpp"

namespace rar {

// Staged CLI commands. Each consumes a config, writes its artifacts under the
// output directory, and echoes the resolved keys as a manifest that replays
// the run byte-identically.

namespace harness {

inline void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

inline std::string require_file(const std::string& path, const std::string& missing_stage) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error("missing prerequisite '" + path + "': run '" + missing_stage + "' first");
    return path;
}

inline void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "'");
    os << std::setprecision(10) << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) os << i << "," << losses[i] << "\n";
}

inline CodecConfig codec_config(const RunConfig& cfg) {
    CodecConfig c;
    c.image_size = static_cast<int>(cfg.get_int("data.image_size", 32));
    c.latent_channels = static_cast<int>(cfg.get_int("codec.latent_channels", 8));
    c.enc1 = static_cast<int>(cfg.get_int("codec.enc1", 32));
    c.enc2 = static_cast<int>(cfg.get_int("codec.enc2", 64));
    return c;
}

inline LqaConfig lqa_config(const RunConfig& cfg) {
    LqaConfig c;
    const CodecConfig cc = codec_config(cfg);
    c.latent_size = cc.latent_size();
    c.latent_channels = cc.latent_channels;
    c.adapter_channels = static_cast<int>(cfg.get_int("lqa.adapter_channels", 16));
    c.trunk_channels = static_cast<int>(cfg.get_int("lqa.trunk_channels", 32));
    c.feat_dim = static_cast<int>(cfg.get_int("lqa.feat_dim", 64));
    c.d_cond = static_cast<int>(cfg.get_int("lqa.d_cond", 32));
    c.delta = cfg.get_double("lqa.delta", 0.0);
    return c;
}

inline UirConfig uir_config(const RunConfig& cfg, bool noise_conditioned = false) {
    UirConfig c;
    const CodecConfig cc = codec_config(cfg);
    c.latent_size = cc.latent_size();
    c.latent_channels = cc.latent_channels;
    c.hidden = static_cast<int>(cfg.get_int("uir.hidden", 32));
    c.temb_dim = static_cast<int>(cfg.get_int("uir.temb_dim", 16));
    c.d_cond = static_cast<int>(cfg.get_int("lqa.d_cond", 32));
    c.noise_conditioned = noise_conditioned;
    return c;
}

inline RarConfig rar_config(const RunConfig& cfg) {
    RarConfig c;
    c.euler_steps = static_cast<int>(cfg.get_int("uir.T", 4));
    c.max_rounds = static_cast<int>(cfg.get_int("rar.n_max", 8));
    c.delta = cfg.get_double("lqa.delta", 0.0);
    return c;
}

inline UirTrainConfig uir_train_config(const RunConfig& cfg, std::uint64_t seed) {
    UirTrainConfig tc;
    tc.lr = cfg.get_double("uir.lr", 2e-3);
    tc.steps = static_cast<int>(cfg.get_int("uir.steps", 3000));
    tc.batch = static_cast<int>(cfg.get_int("uir.batch", 8));
    tc.euler_steps = static_cast<int>(cfg.get_int("uir.T", 4));
    tc.rounds_train = static_cast<int>(cfg.get_int("uir.rounds_train", 4));
    tc.logit_normal_m = cfg.get_double("uir.logit_normal_m", 0.0);
    tc.logit_normal_s = cfg.get_double("uir.logit_normal_s", 1.0);
    tc.seed = seed;
    return tc;
}

inline Codec load_codec(const RunConfig& cfg, const std::string& out) {
    Codec codec{codec_config(cfg), {}};
    codec.params = load_checkpoint<float>(require_file(out + "/codec.ckpt", "train-codec"));
    return codec;
}

inline Lqa load_lqa(const RunConfig& cfg, const std::string& out) {
    Lqa lqa{lqa_config(cfg), {}};
    lqa.params = load_checkpoint<float>(require_file(out + "/lqa.ckpt", "train-lqa"));
    return lqa;
}

inline Uir load_uir(const RunConfig& cfg, const std::string& out, const std::string& file,
                    const std::string& stage, bool noise_conditioned = false) {
    Uir uir{uir_config(cfg, noise_conditioned), {}};
    uir.params = load_checkpoint<float>(require_file(out + "/" + file, stage));
    return uir;
}

}  // namespace harness

inline void cmd_gen_data(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    const std::uint64_t seed = cfg.seed();
    const int train_count = static_cast<int>(cfg.get_int("data.train_count", 240));
    const int test_count = static_cast<int>(cfg.get_int("data.test_count", 80));
    const int image_size = static_cast<int>(cfg.get_int("data.image_size", 32));
    Rng root(seed);
    save_dataset(gen_dataset(root.derive("data.train").next_u64(), train_count, image_size), out + "/dataset_train");
    save_dataset(gen_dataset(root.derive("data.test").next_u64(), test_count, image_size), out + "/dataset_test");
    cfg.write_manifest(out + "/manifest_gen_data.txt");
}

inline void cmd_train_codec(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    const std::uint64_t seed = cfg.seed();
    harness::require_file(out + "/dataset_train/manifest.txt", "gen-data");
    const Dataset train = load_dataset(out + "/dataset_train");

    Codec codec{harness::codec_config(cfg), {}};
    Rng root(seed);
    codec.params = make_codec_params<float>(codec.cfg, root.derive("init.codec"));

    std::vector<Image> corpus;
    for (const auto& s : train.samples) {
        corpus.push_back(s.clean);
        corpus.push_back(s.degraded);
    }
    CodecTrainConfig tc;
    tc.lr = cfg.get_double("codec.lr", 2.5e-3);
    tc.lr_final = cfg.get_double("codec.lr_final", 5e-5);
    tc.steps = static_cast<int>(cfg.get_int("codec.steps", 4500));
    tc.batch = static_cast<int>(cfg.get_int("codec.batch", 8));
    tc.seed = root.derive("train.codec").next_u64();
    const auto losses = train_codec(codec, corpus, tc);

    save_checkpoint(out + "/codec.ckpt", codec.params);
    harness::write_loss_csv(out + "/codec_loss.csv", losses);
    cfg.write_manifest(out + "/manifest_train_codec.txt");
}

inline void cmd_train_lqa(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    const std::uint64_t seed = cfg.seed();
    harness::require_file(out + "/dataset_train/manifest.txt", "gen-data");
    Codec codec = harness::load_codec(cfg, out);
    const Dataset train = load_dataset(out + "/dataset_train");

    Lqa lqa{harness::lqa_config(cfg), {}};
    Rng root(seed);
    lqa.params = make_lqa_params<float>(lqa.cfg, root.derive("init.lqa"));

    LqaTrainConfig tc;
    tc.stage1_steps = static_cast<int>(cfg.get_int("lqa.stage1_steps", 1200));
    tc.stage2_steps = static_cast<int>(cfg.get_int("lqa.stage2_steps", 1200));
    tc.lr = cfg.get_double("lqa.lr", 3e-3);
    tc.lr_final = cfg.get_double("lqa.lr_final", 5e-4);
    tc.batch = static_cast<int>(cfg.get_int("lqa.batch", 16));
    tc.pair_batch = static_cast<int>(cfg.get_int("lqa.pair_batch", 8));
    tc.seed = root.derive("train.lqa").next_u64();
    const auto log = train_lqa(lqa, train.samples, codec, tc);

    save_checkpoint(out + "/lqa.ckpt", lqa.params);
    harness::write_loss_csv(out + "/lqa_stage1_loss.csv", log.stage1_losses);
    harness::write_loss_csv(out + "/lqa_stage2_loss.csv", log.stage2_losses);
    cfg.write_manifest(out + "/manifest_train_lqa.txt");
}

namespace harness {

// Shared by train-uir, train-uir-iter and the ablations that train variants.
inline std::vector<double> train_uir_variant(const RunConfig& cfg, const std::string& out, Uir& uir,
                                             bool iterative, Conditioning conditioning, std::uint64_t seed) {
    Codec codec = load_codec(cfg, out);
    Lqa lqa = load_lqa(cfg, out);
    const Dataset train = load_dataset(out + "/dataset_train");
    const auto clean = train.clean_images();
    Rng root(seed);
    uir.params = make_uir_params<float>(uir.cfg, root.derive("init.uir"));
    UirTrainConfig tc = uir_train_config(cfg, root.derive("train.uir").next_u64());
    tc.conditioning = conditioning;
    if (iterative) return train_uir_iterative(uir, clean, codec, lqa, tc);
    return train_uir(uir, clean, codec, lqa, tc);
}

}  // namespace harness

inline void cmd_train_uir(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    const std::uint64_t seed = cfg.seed();
    harness::require_file(out + "/dataset_train/manifest.txt", "gen-data");
    const bool noise_conditioned = cfg.get_bool("uir.noise_conditioned", false);
    const std::string cond = cfg.get_string("uir.conditioning", "embedding");
    Uir uir{harness::uir_config(cfg, noise_conditioned), {}};
    const auto losses = harness::train_uir_variant(
        cfg, out, uir, /*iterative=*/false, cond == "text" ? Conditioning::kText : Conditioning::kEmbedding, seed);
    const std::string name = cfg.get_string("uir.checkpoint", noise_conditioned ? "uir_nc.ckpt" : "uir.ckpt");
    save_checkpoint(out + "/" + name, uir.params);
    harness::write_loss_csv(out + "/" + name + ".loss.csv", losses);
    cfg.write_manifest(out + "/manifest_train_uir.txt");
}

inline void cmd_train_uir_iter(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    const std::uint64_t seed = cfg.seed();
    harness::require_file(out + "/dataset_train/manifest.txt", "gen-data");
    Uir uir{harness::uir_config(cfg, false), {}};
    const auto losses =
        harness::train_uir_variant(cfg, out, uir, /*iterative=*/true, Conditioning::kEmbedding, seed);
    const std::string name = cfg.get_string("uir.checkpoint", "uir_iter.ckpt");
    save_checkpoint(out + "/" + name, uir.params);
    harness::write_loss_csv(out + "/" + name + ".loss.csv", losses);
    cfg.write_manifest(out + "/manifest_train_uir_iter.txt");
}

inline void cmd_infer(const RunConfig& cfg, const std::string& out, const std::string& input_path,
                      const std::string& reference_path = "", bool trace_latents = false) {
    harness::ensure_dir(out);
    Codec codec = harness::load_codec(cfg, out);
    Lqa lqa = harness::load_lqa(cfg, out);
    Uir uir = harness::load_uir(cfg, out, cfg.get_string("infer.checkpoint", "uir.ckpt"), "train-uir");

    RarConfig rc = harness::rar_config(cfg);
    rc.trace_latents = trace_latents;
    const Image input = read_ppm(input_path);
    Image reference;
    const bool have_ref = !reference_path.empty();
    if (have_ref) reference = read_ppm(reference_path);
    const RarResult res = rar_infer(input, codec, lqa, uir, rc, have_ref ? &reference : nullptr);

    write_ppm(out + "/restored.ppm", res.restored);
    write_trace(out + "/trace.txt", res.trace);
    if (trace_latents) {
        harness::ensure_dir(out + "/rounds");
        char name[64];
        for (const auto& r : res.trace.rounds) {
            std::snprintf(name, sizeof(name), "/rounds/round_%02d.ppm", r.round);
            write_ppm(out + name, decode(codec, r.post_latent));
        }
    }
    cfg.write_manifest(out + "/manifest_infer.txt");
}

inline EvalSummary cmd_eval(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    harness::require_file(out + "/dataset_test/manifest.txt", "gen-data");
    Codec codec = harness::load_codec(cfg, out);
    Lqa lqa = harness::load_lqa(cfg, out);
    Uir uir = harness::load_uir(cfg, out, cfg.get_string("eval.checkpoint", "uir.ckpt"), "train-uir");
    const Dataset test = load_dataset(out + "/dataset_test");

    EvalOptions opt;
    opt.rar = harness::rar_config(cfg);
    const std::string mode = cfg.get_string("eval.mode", "adaptive");
    if (mode == "adaptive") opt.mode = EvalMode::kAdaptive;
    else if (mode == "fixed") opt.mode = EvalMode::kFixed;
    else if (mode == "oracle-stop") opt.mode = EvalMode::kOracleStop;
    else throw std::invalid_argument("eval.mode must be adaptive, fixed or oracle-stop");
    opt.fixed_rounds = static_cast<int>(cfg.get_int("eval.fixed_rounds", 4));

    const EvalSummary summary = eval_suite(test.samples, codec, lqa, uir, opt);
    write_eval_csvs(summary, out + "/eval_samples.csv", out + "/eval_groups.csv");
    cfg.write_manifest(out + "/manifest_eval.txt");
    return summary;
}

// --- ablations ------------------------------------------------

namespace harness {

struct GroupEval {
    double psnr = 0.0;
    double ssim_val = 0.0;
    double avg_rounds = 0.0;
};

inline GroupEval eval_group(const std::vector<LabeledSample>& samples, Codec& codec, Lqa& lqa, Uir& uir,
                            const EvalOptions& opt) {
    const EvalSummary s = eval_suite(samples, codec, lqa, uir, opt);
    GroupEval g;
    int n = 0;
    for (const auto& r : s.samples) {
        g.psnr += r.psnr_restored;
        g.ssim_val += r.ssim_restored;
        g.avg_rounds += r.rounds;
        ++n;
    }
    if (n > 0) {
        g.psnr /= n;
        g.ssim_val /= n;
        g.avg_rounds /= n;
    }
    return g;
}

}  // namespace harness

// Fixed round counts 1..4 against the adaptive criterion, Group-C test split.
inline void cmd_ablate_stopping(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    harness::require_file(out + "/dataset_test/manifest.txt", "gen-data");
    Codec codec = harness::load_codec(cfg, out);
    Lqa lqa = harness::load_lqa(cfg, out);
    Uir uir = harness::load_uir(cfg, out, cfg.get_string("eval.checkpoint", "uir.ckpt"), "train-uir");
    const Dataset test = load_dataset(out + "/dataset_test");
    const auto group_c = test.by_group(GroupTag::kGroupC);

    std::ofstream os(out + "/ablate_stopping.csv");
    os << std::setprecision(10) << "mode,rounds,psnr,ssim\n";
    for (int n = 1; n <= 4; ++n) {
        EvalOptions opt;
        opt.mode = EvalMode::kFixed;
        opt.fixed_rounds = n;
        opt.rar = harness::rar_config(cfg);
        const auto g = harness::eval_group(group_c, codec, lqa, uir, opt);
        os << "fixed_" << n << "," << g.avg_rounds << "," << g.psnr << "," << g.ssim_val << "\n";
    }
    EvalOptions opt;
    opt.mode = EvalMode::kAdaptive;
    opt.rar = harness::rar_config(cfg);
    const auto g = harness::eval_group(group_c, codec, lqa, uir, opt);
    os << "adaptive," << g.avg_rounds << "," << g.psnr << "," << g.ssim_val << "\n";
    os.close();

    // adaptive rounds by group, Table S.4 flavor
    std::ofstream gs(out + "/ablate_stopping_groups.csv");
    gs << std::setprecision(10) << "group,avg_rounds,psnr,ssim\n";
    for (int gi = 0; gi < kNumGroups; ++gi) {
        const auto subset = test.by_group(static_cast<GroupTag>(gi));
        const auto ge = harness::eval_group(subset, codec, lqa, uir, opt);
        gs << group_name(static_cast<GroupTag>(gi)) << "," << ge.avg_rounds << "," << ge.psnr << "," << ge.ssim_val
           << "\n";
    }
    cfg.write_manifest(out + "/manifest_ablate_stopping.txt");
}

// Budget sensitivity: adaptive vs fixed at N_max 4 and 16, Group-C split.
inline void cmd_ablate_nmax(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    harness::require_file(out + "/dataset_test/manifest.txt", "gen-data");
    Codec codec = harness::load_codec(cfg, out);
    Lqa lqa = harness::load_lqa(cfg, out);
    Uir uir = harness::load_uir(cfg, out, cfg.get_string("eval.checkpoint", "uir.ckpt"), "train-uir");
    const Dataset test = load_dataset(out + "/dataset_test");
    const auto group_c = test.by_group(GroupTag::kGroupC);

    std::ofstream os(out + "/ablate_nmax.csv");
    os << std::setprecision(10) << "mode,nmax,avg_rounds,psnr,ssim\n";
    for (int nmax : {4, 16}) {
        EvalOptions opt;
        opt.mode = EvalMode::kAdaptive;
        opt.rar = harness::rar_config(cfg);
        opt.rar.max_rounds = nmax;
        const auto g = harness::eval_group(group_c, codec, lqa, uir, opt);
        os << "adaptive," << nmax << "," << g.avg_rounds << "," << g.psnr << "," << g.ssim_val << "\n";
    }
    for (int nmax : {4, 16}) {
        EvalOptions opt;
        opt.mode = EvalMode::kFixed;
        opt.fixed_rounds = nmax;
        opt.rar = harness::rar_config(cfg);
        opt.rar.max_rounds = nmax;
        const auto g = harness::eval_group(group_c, codec, lqa, uir, opt);
        os << "fixed," << nmax << "," << g.avg_rounds << "," << g.psnr << "," << g.ssim_val << "\n";
    }
    cfg.write_manifest(out + "/manifest_ablate_nmax.txt");
}

// Embedding vs thresholded-text conditioning, same seed and budget.
inline void cmd_ablate_cond_space(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    const std::uint64_t seed = cfg.seed();
    Codec codec = harness::load_codec(cfg, out);
    Lqa lqa = harness::load_lqa(cfg, out);
    const Dataset test = load_dataset(out + "/dataset_test");
    const auto group_c = test.by_group(GroupTag::kGroupC);

    std::ofstream os(out + "/ablate_cond_space.csv");
    os << std::setprecision(10) << "conditioning,psnr,ssim\n";
    for (const auto mode : {Conditioning::kEmbedding, Conditioning::kText}) {
        Uir uir{harness::uir_config(cfg, false), {}};
        harness::train_uir_variant(cfg, out, uir, /*iterative=*/false, mode, seed);
        const char* label = mode == Conditioning::kEmbedding ? "embedding" : "text";
        save_checkpoint(out + "/uir_condspace_" + std::string(label) + ".ckpt", uir.params);
        EvalOptions opt;
        opt.mode = EvalMode::kAdaptive;
        opt.rar = harness::rar_config(cfg);
        const auto g = harness::eval_group(group_c, codec, lqa, uir, opt);
        os << label << "," << g.psnr << "," << g.ssim_val << "\n";
    }
    cfg.write_manifest(out + "/manifest_ablate_cond_space.txt");
}

// Direct vs iterative-conditioning training, same seed and budget.
inline void cmd_ablate_iterative(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    const std::uint64_t seed = cfg.seed();
    Codec codec = harness::load_codec(cfg, out);
    Lqa lqa = harness::load_lqa(cfg, out);
    const Dataset test = load_dataset(out + "/dataset_test");
    const auto group_c = test.by_group(GroupTag::kGroupC);

    std::ofstream os(out + "/ablate_iterative.csv");
    os << std::setprecision(10) << "training,psnr,ssim\n";
    for (const bool iterative : {false, true}) {
        Uir uir{harness::uir_config(cfg, false), {}};
        harness::train_uir_variant(cfg, out, uir, iterative, Conditioning::kEmbedding, seed);
        const char* label = iterative ? "iterative" : "direct";
        save_checkpoint(out + "/uir_abliter_" + std::string(label) + ".ckpt", uir.params);
        EvalOptions opt;
        opt.mode = EvalMode::kAdaptive;
        opt.rar = harness::rar_config(cfg);
        const auto g = harness::eval_group(group_c, codec, lqa, uir, opt);
        os << label << "," << g.psnr << "," << g.ssim_val << "\n";
    }
    cfg.write_manifest(out + "/manifest_ablate_iterative.txt");
}

// Training-loss curves: noise-free flow matching vs the noise-conditioned
// baseline, per seed, equal step counts.
inline void cmd_ablate_convergence(const RunConfig& cfg, const std::string& out) {
    harness::ensure_dir(out);
    const std::uint64_t seed = cfg.seed();
    Codec codec = harness::load_codec(cfg, out);
    Lqa lqa = harness::load_lqa(cfg, out);
    const Dataset train = load_dataset(out + "/dataset_train");
    const auto clean = train.clean_images();

    const int steps = static_cast<int>(cfg.get_int("ablate.convergence_steps", 1200));
    const int seeds = static_cast<int>(cfg.get_int("ablate.convergence_seeds", 3));
    std::vector<std::vector<double>> nf_curves, nc_curves;
    for (int s = 0; s < seeds; ++s) {
        Rng root(seed);
        Rng run = root.derive("ablate.convergence").derive(static_cast<std::uint64_t>(s));
        UirTrainConfig tc = harness::uir_train_config(cfg, run.derive("train").next_u64());
        tc.steps = steps;

        Uir nf{harness::uir_config(cfg, false), {}};
        nf.params = make_uir_params<float>(nf.cfg, run.derive("init.nf"));
        nf_curves.push_back(train_uir(nf, clean, codec, lqa, tc));

        Uir nc{harness::uir_config(cfg, true), {}};
        nc.params = make_uir_params<float>(nc.cfg, run.derive("init.nc"));
        nc_curves.push_back(train_uir(nc, clean, codec, lqa, tc));
    }
    auto write_curves = [&](const std::string& path, const std::vector<std::vector<double>>& curves) {
        std::ofstream os(path);
        os << std::setprecision(10) << "step";
        for (int s = 0; s < seeds; ++s) os << ",loss_seed" << s;
        os << "\n";
        for (int i = 0; i < steps; ++i) {
            os << i;
            for (int s = 0; s < seeds; ++s) os << "," << curves[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
            os << "\n";
        }
    };
    write_curves(out + "/convergence_noise_free.csv", nf_curves);
    write_curves(out + "/convergence_noise_conditioned.csv", nc_curves);
    cfg.write_manifest(out + "/manifest_ablate_convergence.txt");
}

inline void cmd_ablate(const RunConfig& cfg, const std::string& out, const std::string& name) {
    if (name == "stopping") return cmd_ablate_stopping(cfg, out);
    if (name == "nmax") return cmd_ablate_nmax(cfg, out);
    if (name == "cond-space") return cmd_ablate_cond_space(cfg, out);
    if (name == "iterative") return cmd_ablate_iterative(cfg, out);
    if (name == "convergence") return cmd_ablate_convergence(cfg, out);
    throw std::invalid_argument("unknown ablation '" + name +
                                "' (expected stopping, nmax, cond-space, iterative or convergence)");
}

}  // namespace rar
