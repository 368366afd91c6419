// Command-line front end: train / eval / gradcheck / ablate.
//
// Exit codes: 0 success, 1 invalid input (bad config, bad arguments,
// malformed files), 2 numerical failure (non-finite values, failed
// gradient verification).

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "a2po/harness.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool require_out) {
    cmd->add_option("--config", args.config_path, "experiment config file (key = value lines)");
    auto* seed_opt = cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->callback([&args, seed_opt]() { args.seed_set = seed_opt->count() > 0; });
    auto* out_opt = cmd->add_option("--out", args.out_dir, "output directory");
    if (require_out)
        out_opt->required();
}

a2po::ExperimentConfig load_config(const CommonArgs& args) {
    a2po::ExperimentConfig cfg;
    if (!args.config_path.empty())
        cfg = a2po::parse_config(args.config_path);
    if (args.seed_set) {
        cfg.seed = args.seed;
        cfg.train.seed = args.seed;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"keyed-lookup policy-optimization testbed"};
    app.require_subcommand(1);

    CommonArgs train_args, eval_args, grad_args, ablate_args;
    std::string checkpoint_path, tasks_path;

    CLI::App* train_cmd = app.add_subcommand("train", "warm start then reinforcement training");
    add_common(train_cmd, train_args, true);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a saved checkpoint");
    add_common(eval_cmd, eval_args, true);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint to load")->required();
    eval_cmd->add_option("--tasks", tasks_path, "task suite JSONL (default: freshly generated eval suite)");

    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(grad_cmd, grad_args, false);

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the component-toggle comparison");
    add_common(ablate_cmd, ablate_args, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed())
            return a2po::cmd_train(load_config(train_args), train_args.out_dir);
        if (eval_cmd->parsed())
            return a2po::cmd_eval(checkpoint_path, load_config(eval_args), tasks_path, eval_args.out_dir);
        if (grad_cmd->parsed())
            return a2po::cmd_gradcheck(load_config(grad_args));
        if (ablate_cmd->parsed())
            return a2po::cmd_ablate(load_config(ablate_args), ablate_args.out_dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
