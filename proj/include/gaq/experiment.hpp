#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gaq/agent.hpp"
#include "gaq/env.hpp"

namespace gaq {

/// Everything a run needs beyond the network and scenario files themselves.
struct ExperimentConfig {
    std::filesystem::path network_path;
    std::filesystem::path scenario_path;

    int episodes = 200;
    int warmup_episodes = 50;
    int eval_episodes = 20;

    AgentConfig agent;
    RouterConfig router;

    double rerouting_ratio = 0.5;  // managed share of the fleet
    int total_vehicles = 100;
    std::vector<double> test_ratios;  // evaluation grid; empty -> rerouting_ratio
    std::vector<int> test_totals;     // evaluation grid; empty -> total_vehicles

    /// Spawn rates are scaled so each class's budget is expected to be used
    /// up after this fraction of the episode.
    double spawn_window_fraction = 0.5;

    /// Episodes from this index on count as converged; -1 picks the second
    /// half of the post-warm-up phase.
    int post_convergence_episode = -1;

    std::optional<uint64_t> seed;  // falls back to the scenario seed
    std::filesystem::path out_dir = "runs/out";
    bool router_diagnostics = false;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// CLI overrides applied after the file is parsed.
struct ConfigOverrides {
    std::optional<uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    std::optional<PriorityMode> priority;
    std::optional<double> ratio;
    std::optional<int> total;
};
void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& ov);

struct EpisodeRow {
    int episode = 0;
    std::string mode;  // warmup | train | eval | baseline | random
    double reward = 0.0;
    int steps = 0;
    bool hit_cap = false;
    double mean_rv_speed = 0.0;
    std::optional<double> mean_loss;  // empty when no update ran
    std::optional<double> epsilon;    // empty for policies without one
};

struct CellSummary {
    double ratio = 0.0;
    int total = 0;
    int episodes = 0;
    double mean_reward = 0.0;
    double post_conv_mean_reward = 0.0;
    double mean_rv_speed = 0.0;
    double cap_probability = 0.0;
};

struct MetricsSummary {
    std::string mode;
    uint64_t seed = 0;
    int post_convergence_from = 0;  // episode index, train runs only
    std::vector<EpisodeRow> episodes;
    std::vector<CellSummary> cells;
    /// Trailing-window (50 episodes) cap-hit share, one value per episode,
    /// windows restarting at each cell boundary.
    std::vector<double> rolling_cap_probability;
};

/// Episode seed derivation shared by every run mode, so runs with the same
/// base seed see identical traffic per episode index regardless of policy.
uint64_t episode_seed(uint64_t base_seed, int cell_index, int episode);

/// Per-inflow budgets and scaled spawn rates for one (ratio, total) cell.
/// The class totals are split across that class's inflows proportionally to
/// rate (largest remainder), and rates are scaled so the expected spawn
/// count inside the spawn window equals the budget.
std::vector<Inflow> budgeted_inflows(const std::vector<Inflow>& base, const SimParams& sim,
                                     double ratio, int total, double window_fraction);

MetricsSummary run_training(const ExperimentConfig& cfg, std::ostream& log);
MetricsSummary run_test(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                        std::ostream& log);
MetricsSummary run_baseline(const ExperimentConfig& cfg, std::ostream& log);
/// Uniform random actions every step; the no-learning control arm.
MetricsSummary run_random(const ExperimentConfig& cfg, std::ostream& log);

void write_episode_csv(const std::filesystem::path& path, const std::vector<EpisodeRow>& rows);
void write_summary_csv(const std::filesystem::path& path, const MetricsSummary& summary);
void write_summary_json(const std::filesystem::path& path, const MetricsSummary& summary);
MetricsSummary read_summary_json(const std::filesystem::path& path);

struct ComparisonTable {
    std::vector<std::string> labels;
    std::vector<CellSummary> base_cells;                 // grid definition
    std::vector<std::vector<CellSummary>> cells;         // per label, aligned with base_cells
};

/// All summaries must share the same (ratio, total) grid; deltas in the
/// rendered output are taken against the first summary.
ComparisonTable compare_summaries(const std::vector<std::string>& labels,
                                  const std::vector<MetricsSummary>& summaries);
void write_comparison_csv(const std::filesystem::path& path, const ComparisonTable& table);
void print_comparison(std::ostream& out, const ComparisonTable& table);

/// Shortest round-trip decimal text for a double (plain integers untouched).
std::string format_double(double v);

}  // namespace gaq
