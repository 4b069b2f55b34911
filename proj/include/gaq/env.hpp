#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gaq/network.hpp"
#include "gaq/router.hpp"
#include "gaq/simulator.hpp"
#include "gaq/state_reward.hpp"

namespace gaq {

/// Traffic demand plus simulator timing, parsed from a scenario file.
struct ScenarioConfig {
    std::vector<Inflow> inflows;
    SimParams sim;
    double tau = 100.0;
    RewardWeights reward;
    uint64_t seed = 0;
};

/// Scenario JSON: "inflows" (entry_road, class, rate_vph, destination) plus
/// optional "tick_seconds", "ticks_per_control_step", "max_control_steps",
/// "jam_density_per_lane", "seed", "tau" and "reward_weights"
/// {base, bonus, penalty}. Unknown keys are rejected.
ScenarioConfig parse_scenario_json(const std::string& text);
ScenarioConfig load_scenario_file(const std::filesystem::path& path);

struct RouterConfig {
    PriorityMode priority = PriorityMode::Near;
    int high_priority_x = 1;
    int k = 3;
    double t1 = 1.0;
    double t2 = 1.0;
    PopularityObjective objective = PopularityObjective::Min;
};

/// One rerouting decision, kept for the optional diagnostics dump.
struct RouteDiagnostic {
    int control_step = 0;
    std::string vehicle;
    int priority_rank = 0;
    bool high_priority = false;
    int candidate_count = 0;
    double weight = 0.0;
    double popularity = 0.0;
};

/// Control-step wrapper around the simulator: each step reroutes the active
/// managed fleet under the chosen road weights, runs the tick block, and
/// scores the outcome. An episode finishes either when the managed fleet has
/// fully spawned and cleared (done) or at the step cap (at_cap).
class TrafficEnv {
public:
    TrafficEnv(const RoadNetwork& net, const FogPartition& partition, ScenarioConfig scenario,
               RouterConfig router);

    /// Starts a fresh episode; all simulator state and diagnostics reset.
    void reset(uint64_t episode_seed);

    int region_count() const { return partition_.region_count(); }
    const Matrix& adjacency() const { return adjacency_; }
    Matrix observe() const;

    struct StepResult {
        RewardResult reward;
        bool done = false;
        bool at_cap = false;
        int rerouted = 0;
        int step_index = 0;  // 1-based, after this step
    };

    /// Reroutes with action-derived road weights, then advances one control
    /// step. actions has one entry per region.
    StepResult step(const std::vector<int>& actions);
    /// Same cycle with occupancy-only weights (no control input).
    StepResult step_baseline();

    const Simulation& sim() const { return *sim_; }
    bool fleet_complete() const;
    int max_steps() const { return scenario_.sim.max_control_steps; }

    const std::vector<RouteDiagnostic>& diagnostics() const { return diagnostics_; }

private:
    StepResult run_step(const std::vector<double>& weights);

    const RoadNetwork& net_;
    const FogPartition& partition_;
    ScenarioConfig scenario_;
    RouterConfig router_;
    Matrix adjacency_;
    std::unique_ptr<Simulation> sim_;
    double prev_mean_rv_speed_ = 0.0;
    std::vector<RouteDiagnostic> diagnostics_;
};

}  // namespace gaq
