#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rar/rar.hpp"

namespace {

rar::RunConfig load_config(const std::string& path, const std::string& seed_override) {
    rar::RunConfig cfg = rar::RunConfig::from_file(path);
    if (!seed_override.empty()) cfg.set("seed", seed_override);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"restore/assess/repeat pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs/default";
    std::string seed_override;
    app.add_option("--config", config_path, "config file path")->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed_override, "override the config seed");

    auto* gen = app.add_subcommand("gen-data", "generate train/test datasets");
    auto* tcodec = app.add_subcommand("train-codec", "train the latent autoencoder");
    auto* tlqa = app.add_subcommand("train-lqa", "train the latent quality assessor");
    auto* tuir = app.add_subcommand("train-uir", "train the restoration velocity field");
    auto* tuiri = app.add_subcommand("train-uir-iter", "train with iterative conditioning");

    auto* infer = app.add_subcommand("infer", "restore one image");
    std::string input_path, reference_path;
    bool trace = false;
    infer->add_option("--input", input_path, "input PPM")->required();
    infer->add_option("--reference", reference_path, "clean reference PPM for per-round metrics");
    infer->add_flag("--trace", trace, "dump per-round latents and images");

    auto* eval = app.add_subcommand("eval", "evaluate the trained stack on the test set");

    auto* ablate = app.add_subcommand("ablate", "run one named ablation");
    std::string ablation;
    ablate->add_option("name", ablation, "stopping | nmax | cond-space | iterative | convergence")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const rar::RunConfig cfg = load_config(config_path, seed_override);
        if (gen->parsed()) rar::cmd_gen_data(cfg, out_dir);
        else if (tcodec->parsed()) rar::cmd_train_codec(cfg, out_dir);
        else if (tlqa->parsed()) rar::cmd_train_lqa(cfg, out_dir);
        else if (tuir->parsed()) rar::cmd_train_uir(cfg, out_dir);
        else if (tuiri->parsed()) rar::cmd_train_uir_iter(cfg, out_dir);
        else if (infer->parsed()) rar::cmd_infer(cfg, out_dir, input_path, reference_path, trace);
        else if (eval->parsed()) rar::cmd_eval(cfg, out_dir);
        else if (ablate->parsed()) rar::cmd_ablate(cfg, out_dir, ablation);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
