#include <cstdint>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "ulre/commands.hpp"

namespace {

const std::map<std::string, std::string> kDescriptions = {
    {"toy-gaussian", "Train evidential and sigmoid heads on two 1-D Gaussians; write grid CSV and summary"},
    {"gen-synthetic", "Generate synthetic feature scenes with a composited outlier object"},
    {"train", "Train an estimator on feature/label tensor files; write a checkpoint"},
    {"score", "Score feature maps with a checkpoint; write likelihood-ratio maps"},
    {"eval", "Compute average precision and FPR at 95% TPR from score and label files"},
    {"extrapolate", "Bin probe probabilities by cosine distance to the training class means"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-aware likelihood-ratio estimation for pixel-wise OOD detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ulre::kCodeVersion));

    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::map<std::string, CLI::App*> subs;
    std::map<std::string, CLI::Option*> seed_opts;
    for (const std::string& name : ulre::command_names()) {
        CLI::App* sub = app.add_subcommand(name, kDescriptions.at(name));
        sub->add_option("--config", config, "Flat key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output directory")->required();
        seed_opts[name] = sub->add_option("--seed", seed, "Seed overriding the config's `seed`");
        subs[name] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ulre::ExitCode::config);
    }

    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) continue;
        ulre::CommandOptions options;
        options.config = config;
        options.out = out;
        if (seed_opts[name]->count() > 0) options.seed = seed;
        return ulre::run_command_guarded(name, options, std::cout, std::cerr);
    }
    return static_cast<int>(ulre::ExitCode::config);
}
