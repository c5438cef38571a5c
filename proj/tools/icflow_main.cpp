// icflow CLI: train / restore / degrade / eval / make-data
#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "icflow/checkpoint.hpp"
#include "icflow/config.hpp"
#include "icflow/dataset.hpp"
#include "icflow/degrade.hpp"
#include "icflow/evaluate.hpp"
#include "icflow/image.hpp"
#include "icflow/train.hpp"

namespace {

using namespace icflow;

int cmd_train(const std::string& config_path, const std::string& out_path) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    Backbone model(cfg.model, cfg.init_seed);
    const Corpus corpus = make_dataset(cfg.n_identities, cfg.refs_per_identity, cfg.data_seed,
                                       cfg.model.image_size, cfg.model.image_channels);
    std::cout << "training: " << cfg.train_steps << " steps, " << cfg.n_identities
              << " identities, " << model.params().total_scalars() << " parameters\n";
    const TrainResult result = train_model(model, corpus, cfg);
    CheckpointMeta meta;
    meta.train_steps = static_cast<std::uint64_t>(cfg.train_steps);
    meta.train_seed = cfg.train_seed;
    save_checkpoint(out_path, model, meta);
    write_loss_csv(out_path + ".losses.csv", result.curve);
    if (!result.curve.empty()) {
        std::cout << "final loss: total=" << result.curve.back().loss.total
                  << " flow=" << result.curve.back().loss.l_fm << "\n";
    }
    std::cout << "checkpoint written to " << out_path << "\n";
    return 0;
}

int cmd_restore(const std::string& ckpt, const std::string& deg_path,
                const std::vector<std::string>& ref_paths, const std::string& out_path,
                int steps, double guidance, std::uint64_t seed) {
    if (ref_paths.size() > static_cast<std::size_t>(kMaxReferences)) {
        std::cerr << "error: at most " << kMaxReferences << " references\n";
        return 2;
    }
    const Backbone model = load_checkpoint(ckpt);
    const Index c = model.config().image_channels;
    auto load = [&](const std::string& p) {
        Tensor img = read_image(p);
        return (c == 1) ? to_gray(img) : img;
    };
    const Tensor deg = load(deg_path);
    std::vector<Tensor> refs;
    for (const auto& p : ref_paths) refs.push_back(load(p));
    SamplerConfig sampler;
    sampler.steps = steps;
    sampler.guidance_scale = guidance;
    sampler.seed = seed;
    write_image(out_path, restore_image(model, deg, refs, sampler));
    std::cout << "restored image written to " << out_path << "\n";
    return 0;
}

int cmd_degrade(const std::string& in_path, int strength, std::uint64_t seed,
                const std::string& out_path) {
    write_image(out_path, degrade(read_image(in_path), strength, seed));
    std::cout << "degraded image written to " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& corpus_dir, const std::string& mode_str,
             const std::string& report_path, int steps, double guidance, std::uint64_t seed) {
    const Backbone model = load_checkpoint(ckpt);
    const CorpusOnDisk corpus(corpus_dir);
    const EvalMode mode = (mode_str == "with-ref") ? EvalMode::WithRef : EvalMode::NoRef;
    SamplerConfig sampler;
    sampler.steps = steps;
    sampler.guidance_scale = guidance;
    sampler.seed = seed;
    const EvalReport report = evaluate(model, corpus, mode, sampler);
    write_report_csv(report_path, report);
    std::cout << report.config_echo << "\n"
              << "ref_cosine=" << report.ref_cosine_mean << " gt_cosine=" << report.gt_cosine_mean
              << " psnr=" << report.psnr_mean << " used=" << report.n_used
              << " skipped=" << report.n_skipped << "\n"
              << "report written to " << report_path << "\n";
    return 0;
}

int cmd_make_data(Index n, Index refs, std::uint64_t seed, int strength, Index image_size,
                  Index channels, const std::string& out_dir) {
    const Corpus corpus = make_dataset(n, refs, seed, image_size, channels);
    write_corpus(out_dir, corpus, strength);
    std::cout << "corpus with " << n << " identities written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reference-conditioned flow-matching face restoration (desk scale)"};
    app.require_subcommand(1);

    std::string config_path, out_path, ckpt, deg_path, in_path, corpus_dir, mode_str, report_path;
    std::vector<std::string> ref_paths;
    int steps = 12, strength = 0;
    double guidance = 4.0;
    std::uint64_t seed = 42;
    icflow::Index n = 32, refs = 3, image_size = 16, channels = 1;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "key=value config file (defaults when omitted)");
    train->add_option("--out", out_path, "output checkpoint path")->required();

    auto* restore = app.add_subcommand("restore", "restore one degraded image");
    restore->add_option("--ckpt", ckpt)->required();
    restore->add_option("--deg", deg_path, "degraded input image")->required();
    restore->add_option("--ref", ref_paths, "reference image (repeatable, up to 3)");
    restore->add_option("--out", out_path)->required();
    restore->add_option("--steps", steps);
    restore->add_option("--guidance", guidance);
    restore->add_option("--seed", seed);

    auto* degrade_cmd = app.add_subcommand("degrade", "apply the synthetic degradation chain");
    degrade_cmd->add_option("--in", in_path)->required();
    degrade_cmd->add_option("--strength", strength, "0..16")->required();
    degrade_cmd->add_option("--seed", seed);
    degrade_cmd->add_option("--out", out_path)->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    eval->add_option("--ckpt", ckpt)->required();
    eval->add_option("--corpus", corpus_dir)->required();
    eval->add_option("--mode", mode_str, "with-ref | no-ref")
        ->required()
        ->check(CLI::IsMember({"with-ref", "no-ref"}));
    eval->add_option("--report", report_path, "output CSV")->required();
    eval->add_option("--steps", steps);
    eval->add_option("--guidance", guidance);
    eval->add_option("--seed", seed);

    int md_strength = 16;
    auto* make_data = app.add_subcommand("make-data", "generate a synthetic identity corpus");
    make_data->add_option("--n", n, "number of identities")->required();
    make_data->add_option("--refs", refs, "references per identity");
    make_data->add_option("--seed", seed);
    make_data->add_option("--strength", md_strength, "degradation strength for deg.png (default 16)");
    make_data->add_option("--image-size", image_size);
    make_data->add_option("--channels", channels);
    make_data->add_option("--out", out_path, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config_path, out_path);
        if (*restore) return cmd_restore(ckpt, deg_path, ref_paths, out_path, steps, guidance, seed);
        if (*degrade_cmd) return cmd_degrade(in_path, strength, seed, out_path);
        if (*eval) return cmd_eval(ckpt, corpus_dir, mode_str, report_path, steps, guidance, seed);
        if (*make_data) return cmd_make_data(n, refs, seed, md_strength, image_size, channels, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
