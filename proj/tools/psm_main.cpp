#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "psm/harness.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular proto successor measures: collect data, train, infer and evaluate"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::vector<std::string> overrides;

    for (const char* name : {"collect", "train", "infer", "eval"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config,-c", config_path, "key = value experiment file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "overrides rng_seed");
        sub->add_option("--out", out_dir, "overrides out");
        sub->add_option("--set", overrides, "extra key=value lines applied after the file");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        std::string text = psm::read_file(config_path);
        for (const auto& line : overrides) text += "\n" + line;
        if (seed) text += "\nrng_seed = " + std::to_string(*seed);
        if (!out_dir.empty()) text += "\nout = " + out_dir;
        const std::filesystem::path path(config_path);
        // Command-line paths resolve against the working directory, file paths against the file.
        psm::ExperimentConfig config = psm::parse_config(text, path.has_parent_path() ? path.parent_path() : ".");
        if (!out_dir.empty()) config.out_dir = std::filesystem::absolute(out_dir);

        const std::string command = app.get_subcommands().front()->get_name();
        if (command == "collect") psm::cmd_collect(config, std::cout);
        else if (command == "train") psm::cmd_train(config, std::cout);
        else if (command == "infer") psm::cmd_infer(config, std::cout);
        else psm::cmd_eval(config, std::cout);
    } catch (const psm::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const psm::DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
