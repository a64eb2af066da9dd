#include "climeco/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"climeco: climate-econometrics pipeline"};
    app.set_version_flag("--version", std::string(climeco::kVersion));
    app.require_subcommand(1);

    const std::vector<std::string> stages = {"aggregate", "build-panel", "estimate",
                                             "margins",   "diagnose",    "bootstrap",
                                             "adaptation", "project",    "plot-data"};
    std::string config_path;
    std::string chosen;
    for (const auto& stage : stages) {
        auto* sub = app.add_subcommand(stage, "run the " + stage + " stage");
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->callback([&chosen, stage] { chosen = stage; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    return climeco::run_stage(chosen, config_path, std::cerr);
}
