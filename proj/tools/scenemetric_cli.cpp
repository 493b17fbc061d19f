// scenemetric: generate, train, evaluate and project traffic-scenario embeddings.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "scenemetric/pipeline.hpp"

namespace sm = scenemetric;

namespace {

struct Options {
    std::string config;
    std::string dataset;
    std::string out;
    std::string checkpoint;
    std::string metrics;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy;
};

sm::RunConfig resolve_config(const Options& o)
{
    sm::RunConfig cfg = o.config.empty() ? sm::parse_run_config("") : sm::load_run_config(o.config);
    if (o.seed)
        cfg.apply_seed(*o.seed);
    if (o.strategy) {
        try {
            cfg.training.strategy = sm::parse_strategy(*o.strategy);
        } catch (const sm::Error& e) {
            throw sm::ConfigError(e.what());
        }
    }
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Expert-knowledge-aided metric learning for traffic scenarios"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "INI run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override the global seed");
    };

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    common(gen);
    gen->add_option("--out", o.out, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    common(train);
    train->add_option("--dataset", o.dataset, "dataset directory")->required();
    train->add_option("--out", o.out, "output checkpoint file")->required();
    train->add_option("--metrics", o.metrics, "per-epoch metrics CSV (default <out>.metrics.csv)");
    train->add_option("--strategy", o.strategy, "negative sampling: random, group or random-excl")
        ->check(CLI::IsMember({"random", "group", "random-excl"}));

    auto* eval = app.add_subcommand("eval", "evaluate embeddings of a dataset");
    common(eval);
    eval->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
    eval->add_option("--dataset", o.dataset, "dataset directory")->required();
    eval->add_option("--out", o.out, "output report JSON")->required();

    auto* project = app.add_subcommand("project", "write a 2-D projection of the embeddings");
    common(project);
    project->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
    project->add_option("--dataset", o.dataset, "dataset directory")->required();
    project->add_option("--out", o.out, "output CSV")->required();

    auto* mine = app.add_subcommand("mine", "dump one epoch of mined quadruplets");
    common(mine);
    mine->add_option("--dataset", o.dataset, "dataset directory")->required();
    mine->add_option("--out", o.out, "output CSV")->required();
    mine->add_option("--strategy", o.strategy, "negative sampling: random, group or random-excl")
        ->check(CLI::IsMember({"random", "group", "random-excl"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const sm::RunConfig cfg = resolve_config(o);
        if (gen->parsed()) {
            sm::cmd_gen(cfg, o.out, std::cout);
        } else if (train->parsed()) {
            const std::string metrics = o.metrics.empty() ? o.out + ".metrics.csv" : o.metrics;
            sm::cmd_train(cfg, o.dataset, o.out, metrics, std::cout);
        } else if (eval->parsed()) {
            sm::cmd_eval(cfg, o.checkpoint, o.dataset, o.out);
            std::cout << "wrote report " << o.out << "\n";
        } else if (project->parsed()) {
            sm::cmd_project(o.checkpoint, o.dataset, o.out, std::cerr);
            std::cout << "wrote projection " << o.out << "\n";
        } else if (mine->parsed()) {
            sm::cmd_mine(cfg, o.dataset, o.out, std::cout);
        }
    } catch (const sm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
