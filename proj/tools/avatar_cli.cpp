#include "avatar/pipeline/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct SharedFlags {
    std::string config;
    std::uint64_t seed = 0;
    std::string layer = "all";
    bool fixed_light = false;
    bool reference = false;
    std::string fields;
};

avatar::CommandOptions to_options(const SharedFlags& f, const CLI::App& cmd) {
    avatar::CommandOptions o;
    if (!f.config.empty()) o.config = f.config;
    if (cmd.count("--seed") > 0) o.seed = f.seed;
    o.layers = avatar::parse_layer_mask(f.layer);
    o.fixed_light = f.fixed_light;
    o.reference = f.reference;
    if (!f.fields.empty()) o.fields = f.fields;
    return o;
}

void add_shared(CLI::App* cmd, SharedFlags& f, bool render_flags) {
    cmd->add_option("--config", f.config, "Config the bundle was generated from (checked against the manifest)");
    cmd->add_option("--seed", f.seed, "Master seed override");
    cmd->add_option("--layer", f.layer, "body, garment, hair or all")
        ->check(CLI::IsMember({"body", "garment", "hair", "all"}));
    if (render_flags) {
        cmd->add_flag("--fixed-light", f.fixed_light, "Use the configured light instead of a seeded sample");
        cmd->add_flag("--reference", f.reference, "Use the brute-force reference rasterizer");
        cmd->add_option("--fields", f.fields, "Directory whose fields/ replace the bundle's trained fields");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layered Gaussian avatar pipeline"};
    app.require_subcommand(1);

    std::string config_path, out, bundle, provider = "null", format = "ply", poses;
    std::uint64_t seed = 0;
    bool resume = false;
    int until = -1;

    auto* gen = app.add_subcommand("generate", "Build an avatar bundle from a config");
    gen->add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--seed", seed, "Master seed override");
    gen->add_option("--out", out, "Bundle directory")->required();

    SharedFlags render_flags, animate_flags, optimize_flags, export_flags;

    auto* rnd = app.add_subcommand("render", "Render the canonical bundle to render.png");
    rnd->add_option("bundle", bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
    rnd->add_option("--out", out, "Output directory")->required();
    add_shared(rnd, render_flags, true);

    auto* anim = app.add_subcommand("animate", "Simulate and render a pose sequence");
    anim->add_option("bundle", bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
    anim->add_option("--out", out, "Output directory")->required();
    anim->add_option("--poses", poses, "Pose sequence file (defaults to the config animation)")
        ->check(CLI::ExistingFile);
    add_shared(anim, animate_flags, true);

    auto* opt = app.add_subcommand("optimize", "Train the appearance fields");
    opt->add_option("bundle", bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
    opt->add_option("--out", out, "Output directory (defaults to the bundle)");
    opt->add_option("--provider", provider, "null, noise, constant:<c> or photometric:<png>");
    opt->add_flag("--resume", resume, "Continue from <out>/checkpoint.json");
    opt->add_option("--until", until, "Stop before this iteration");
    add_shared(opt, optimize_flags, false);

    auto* exp = app.add_subcommand("export", "Write PLY, OBJ or strand assets");
    exp->add_option("bundle", bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
    exp->add_option("--out", out, "Output directory")->required();
    exp->add_option("--format", format, "ply, obj, strands or all");
    add_shared(exp, export_flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            avatar::PipelineConfig config = avatar::PipelineConfig::load(config_path);
            if (gen->count("--seed") > 0) config.seed = seed;
            const avatar::Bundle b = avatar::cmd_generate(config, out);
            std::cout << "bundle " << out << " (asset hash " << b.config_hash << ")\n";
        } else if (rnd->parsed()) {
            avatar::cmd_render(bundle, out, to_options(render_flags, *rnd));
            std::cout << "wrote " << (avatar::fs::path(out) / "render.png").string() << '\n';
        } else if (anim->parsed()) {
            std::optional<avatar::PoseSequence> seq;
            if (!poses.empty()) seq = avatar::read_pose_sequence(poses);
            const auto stats = avatar::cmd_animate(bundle, out, to_options(animate_flags, *anim), seq);
            std::cout << "wrote " << stats.size() << " frames to " << out << '\n';
        } else if (opt->parsed()) {
            avatar::OptimizeOptions o;
            o.provider = provider;
            o.resume = resume;
            o.until = until;
            const auto log = avatar::cmd_optimize(bundle, out.empty() ? bundle : out, o, to_options(optimize_flags, *opt));
            std::cout << "ran " << log.size() << " iterations";
            if (!log.empty()) std::cout << ", final loss " << log.back().total;
            std::cout << '\n';
        } else if (exp->parsed()) {
            for (const auto& p : avatar::cmd_export(bundle, out, format, to_options(export_flags, *exp)))
                std::cout << "wrote " << p.string() << '\n';
        }
    } catch (const avatar::PipelineError& e) {
        std::cerr << "avatar: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "avatar: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
