#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <scbridge/errors.hpp>

#include "commands.hpp"
#include "config.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::string seed;
    std::string out;
    std::vector<std::string> sets;
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help, CommonFlags& flags) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON file of dotted-key settings");
    sub->add_option("--seed", flags.seed, "Random seed (required here or in the config)");
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--set", flags.sets, "Override a setting, e.g. --set bridge.sigma=0.2")->allow_extra_args(false);
    return sub;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace scbridge;

    CLI::App app{"Perturbation response modelling with continuous and discrete bridges"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "scbridge 0.1.0");

    CommonFlags flags;
    CLI::App* synth = add_command(app, "synth", "Write a synthetic benchmark dataset", flags);
    CLI::App* train = add_command(app, "train", "Split a dataset and train a model", flags);
    CLI::App* generate = add_command(app, "generate", "Generate perturbed cells from controls", flags);
    CLI::App* evaluate = add_command(app, "evaluate", "Score a model on a held-out split", flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        cli::Config cfg;
        if (!flags.config.empty()) {
            cfg.merge_file(flags.config);
        }
        for (const auto& assignment : flags.sets) {
            cfg.set(assignment);
        }
        if (!flags.seed.empty()) {
            cfg.set("seed=" + flags.seed);
        }
        if (!flags.out.empty()) {
            cfg.set("out", flags.out);
        }
        if (!cfg.has("seed")) {
            throw cli::UsageError("a seed is required: pass --seed or set 'seed' in the config");
        }
        cfg.get_uint("seed");

        if (synth->parsed()) {
            cli::cmd_synth(cfg);
        } else if (train->parsed()) {
            cli::cmd_train(cfg);
        } else if (generate->parsed()) {
            cli::cmd_generate(cfg);
        } else if (evaluate->parsed()) {
            cli::cmd_evaluate(cfg);
        }
    } catch (const cli::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const RangeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
