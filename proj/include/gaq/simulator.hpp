#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gaq/network.hpp"
#include "gaq/rng.hpp"

namespace gaq {

enum class VehicleClass { Rv, Bv };

inline const char* vehicle_class_name(VehicleClass c) {
    return c == VehicleClass::Rv ? "rv" : "bv";
}

struct Vehicle {
    std::string id;
    VehicleClass cls = VehicleClass::Bv;
    std::vector<int> route;  // road indices; route[route_pos] is the current road
    int route_pos = 0;
    double offset_m = 0.0;   // distance from the start of the current road
    double speed_mps = 0.0;  // speed it moved with during the last tick
    int destination = -1;    // junction index
    double spawn_time_s = 0.0;

    int current_road() const { return route[route_pos]; }
    bool on_last_road() const { return route_pos + 1 == static_cast<int>(route.size()); }
};

struct Arrival {
    std::string id;
    VehicleClass cls;
    double spawn_time_s = 0.0;
    double arrival_time_s = 0.0;
};

struct Inflow {
    std::string entry_road;
    VehicleClass cls = VehicleClass::Bv;
    double rate_vph = 0.0;
    std::string destination;
    /// Hard cap on how many vehicles this inflow may ever create; empty
    /// means unlimited. Attempts suppressed by a jammed entry road do not
    /// count against it.
    std::optional<long> budget;
};

struct SimParams {
    double tick_seconds = 1.0;
    int ticks_per_control_step = 60;
    int max_control_steps = 10;
    double jam_density_per_lane = 0.15;  // vehicles per metre per lane
    double min_speed_fraction = 0.05;    // lower bound of the speed-density relation
};

/// Maps (entry road, destination junction) to a route. Used when a vehicle
/// is created; the default is the static shortest route by length.
using RoutePlanner = std::function<std::vector<int>(int entry_road, int dest_junction)>;

/// Queue-free mesoscopic traffic model. Each road carries a vehicle count;
/// link speed follows a linear speed-density relation with a floor, and a
/// vehicle that cannot enter a jammed next road waits at the boundary with
/// speed zero. All stochastic behaviour (spawn draws) comes from the seed
/// given at construction, and vehicles are processed in a sorted order, so
/// two simulations built with identical inputs stay bitwise identical.
class Simulation {
public:
    Simulation(const RoadNetwork& net, SimParams params, std::vector<Inflow> inflows,
               uint64_t seed);

    void set_planner(VehicleClass cls, RoutePlanner planner);

    /// One Bernoulli spawn attempt per inflow, probability rate*dt/3600.
    void spawn();
    /// Advances every vehicle by one tick using speeds snapshotted at entry.
    void step_tick();
    /// ticks_per_control_step repetitions of spawn-then-tick.
    void run_control_step();

    double clock_s() const { return clock_s_; }
    int control_steps_done() const { return control_steps_; }

    const std::vector<Vehicle>& vehicles() const { return vehicles_; }
    const std::vector<Arrival>& arrivals() const { return arrivals_; }

    int occupancy(int road) const { return occupancy_[road]; }
    double density(int road) const;
    /// Speed a vehicle would travel at on this road right now.
    double link_speed(int road) const;
    /// Vehicle count at which the road stops admitting new vehicles.
    double jam_capacity(int road) const;
    bool at_jam(int road) const;

    long spawned(VehicleClass cls) const { return spawned_[cls == VehicleClass::Rv ? 0 : 1]; }
    long spawned_total() const { return spawned_[0] + spawned_[1]; }

    /// True when every inflow of the class has a budget and has used it up.
    bool budget_exhausted(VehicleClass cls) const;
    /// Sum of budgets for the class; empty if any inflow of it is unlimited.
    std::optional<long> budget_total(VehicleClass cls) const;

    int count_active(VehicleClass cls) const;

    /// Replaces the route of the vehicle at `index` in vehicles(). The new
    /// route must start at the vehicle's current road, be connected, and end
    /// at its destination; violations throw std::logic_error.
    void set_route(size_t index, std::vector<int> route);

    const SimParams& params() const { return params_; }
    const RoadNetwork& network() const { return net_; }

    /// Order-sensitive digest of the full dynamic state.
    uint64_t state_hash() const;

private:
    struct InflowState {
        Inflow spec;
        int entry_road = -1;
        int destination = -1;
        long spawned = 0;
    };

    void validate_route(const std::vector<int>& route, int start_road, int destination) const;

    const RoadNetwork& net_;
    SimParams params_;
    std::vector<InflowState> inflows_;
    Rng rng_;
    RoutePlanner planners_[2];

    std::vector<Vehicle> vehicles_;
    std::vector<Arrival> arrivals_;
    std::vector<int> occupancy_;
    double clock_s_ = 0.0;
    int control_steps_ = 0;
    long spawned_[2] = {0, 0};
    long next_vehicle_number_[2] = {1, 1};
};

}  // namespace gaq
