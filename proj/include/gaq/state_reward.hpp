#pragma once

#include "gaq/matrix.hpp"
#include "gaq/network.hpp"
#include "gaq/simulator.hpp"

namespace gaq {

/// Mean speed is penalised or rewarded against the previous control step;
/// a drop of at least this many m/s draws the penalty term.
inline constexpr double kSpeedDropThreshold = 5.0;

struct RewardWeights {
    double base = 10.0;
    double bonus = 50.0;
    double penalty = 50.0;
};

struct RewardResult {
    double reward = 0.0;
    double mean_rv_speed = 0.0;  // over active rerouting-class vehicles, 0 when none
    double delta = 0.0;          // mean_rv_speed minus the previous step's value
    int rv_count = 0;
};

/// Per-region observation matrix, one row per region: column 0 is the mean
/// speed of the vehicles currently in the region (all classes), column 1 the
/// mean over the region's roads of occupancy * tau / (lanes * length). A
/// region with no vehicles reports the mean speed limit of its roads and a
/// zero congestion level.
Matrix node_features(const Simulation& sim, const FogPartition& partition, double tau);

RewardResult compute_reward(const Simulation& sim, double prev_mean_rv_speed,
                            const RewardWeights& weights);

}  // namespace gaq
