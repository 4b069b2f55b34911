#include "gaq/state_reward.hpp"

#include <stdexcept>

namespace gaq {

Matrix node_features(const Simulation& sim, const FogPartition& partition, double tau) {
    if (!(tau > 0.0)) throw std::runtime_error("node_features: tau must be positive");
    const RoadNetwork& net = sim.network();
    const int n = partition.region_count();

    std::vector<double> speed_sum(n, 0.0);
    std::vector<int> count(n, 0);
    for (const Vehicle& v : sim.vehicles()) {
        const int region = partition.region_of[v.current_road()];
        speed_sum[region] += v.speed_mps;
        count[region] += 1;
    }

    Matrix x(n, 2);
    for (int i = 0; i < n; ++i) {
        const auto& roads = partition.region_roads[i];
        if (count[i] > 0) {
            x(i, 0) = speed_sum[i] / count[i];
        } else {
            double limit_sum = 0.0;
            for (int r : roads) limit_sum += net.road(r).speed_limit_mps;
            x(i, 0) = roads.empty() ? 0.0 : limit_sum / static_cast<double>(roads.size());
        }
        double density_sum = 0.0;
        for (int r : roads) {
            const Road& road = net.road(r);
            density_sum += sim.occupancy(r) * tau / (road.lanes * road.length_m);
        }
        x(i, 1) = roads.empty() ? 0.0 : density_sum / static_cast<double>(roads.size());
    }
    return x;
}

RewardResult compute_reward(const Simulation& sim, double prev_mean_rv_speed,
                            const RewardWeights& weights) {
    RewardResult out;
    double sum = 0.0;
    for (const Vehicle& v : sim.vehicles()) {
        if (v.cls != VehicleClass::Rv) continue;
        sum += v.speed_mps;
        out.rv_count += 1;
    }
    out.mean_rv_speed = out.rv_count > 0 ? sum / out.rv_count : 0.0;
    out.delta = out.mean_rv_speed - prev_mean_rv_speed;
    out.reward = weights.base * out.mean_rv_speed;
    if (out.delta > 0.0) out.reward += weights.bonus;
    if (out.delta <= -kSpeedDropThreshold) out.reward -= weights.penalty;
    return out;
}

}  // namespace gaq
