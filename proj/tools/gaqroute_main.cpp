#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gaq/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fog-region vehicle rerouting: training, evaluation and controls"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint_path;
    std::string out_csv;
    std::string priority;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<double> ratio;
    std::optional<int> total;
    std::vector<std::string> summary_paths;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "override the base seed");
        cmd->add_option("--out", out_dir, "override the output directory");
        cmd->add_option("--priority", priority, "rerouting priority: near or far")
            ->check(CLI::IsMember({"near", "far"}));
        cmd->add_option("--ratio", ratio, "override the managed-fleet ratio")
            ->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--total", total, "override the per-episode vehicle total")
            ->check(CLI::NonNegativeNumber);
    };

    CLI::App* train = app.add_subcommand("train", "train the rerouting agent");
    add_common(train);
    CLI::App* test = app.add_subcommand("test", "evaluate a checkpoint over the test grid");
    add_common(test);
    test->add_option("--checkpoint", checkpoint_path, "checkpoint JSON from a training run")
        ->required()
        ->check(CLI::ExistingFile);
    CLI::App* baseline =
        app.add_subcommand("baseline", "occupancy-weighted rerouting without an agent");
    add_common(baseline);
    CLI::App* random_arm = app.add_subcommand("random", "uniform random actions every step");
    add_common(random_arm);

    CLI::App* compare = app.add_subcommand("compare", "tabulate run summaries side by side");
    compare
        ->add_option("summaries", summary_paths,
                     "summary.json files; deltas are taken against the first")
        ->required()
        ->check(CLI::ExistingFile);
    compare->add_option("--out", out_csv, "also write the table as CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (compare->parsed()) {
            std::vector<std::string> labels;
            std::vector<gaq::MetricsSummary> summaries;
            for (const std::string& p : summary_paths) {
                const std::filesystem::path fp(p);
                std::string label = fp.parent_path().filename().string();
                if (label.empty()) label = fp.stem().string();
                labels.push_back(std::move(label));
                summaries.push_back(gaq::read_summary_json(fp));
            }
            const gaq::ComparisonTable table = gaq::compare_summaries(labels, summaries);
            gaq::print_comparison(std::cout, table);
            if (!out_csv.empty()) gaq::write_comparison_csv(out_csv, table);
            return 0;
        }

        gaq::ConfigOverrides ov;
        ov.seed = seed;
        if (out_dir) ov.out_dir = *out_dir;
        if (!priority.empty())
            ov.priority =
                priority == "near" ? gaq::PriorityMode::Near : gaq::PriorityMode::Far;
        ov.ratio = ratio;
        ov.total = total;

        gaq::ExperimentConfig cfg = gaq::load_experiment_config(config_path);
        gaq::apply_overrides(cfg, ov);

        if (train->parsed())
            gaq::run_training(cfg, std::cout);
        else if (test->parsed())
            gaq::run_test(cfg, checkpoint_path, std::cout);
        else if (baseline->parsed())
            gaq::run_baseline(cfg, std::cout);
        else
            gaq::run_random(cfg, std::cout);
        std::cout << "outputs written to " << cfg.out_dir.string() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
