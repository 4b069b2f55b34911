#include "gaq/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace gaq {

namespace {

// FNV-1a, applied to raw bytes. Used only for state digests.
struct Fnv {
    uint64_t h = 1469598103934665603ULL;
    void bytes(const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    }
    void add(double v) { bytes(&v, sizeof v); }
    void add(int v) { bytes(&v, sizeof v); }
    void add(long v) { bytes(&v, sizeof v); }
    void add(const std::string& s) { bytes(s.data(), s.size()); }
};

}  // namespace

Simulation::Simulation(const RoadNetwork& net, SimParams params, std::vector<Inflow> inflows,
                       uint64_t seed)
    : net_(net), params_(params), rng_(seed), occupancy_(net.road_count(), 0) {
    if (!(params_.tick_seconds > 0.0))
        throw std::runtime_error("simulation: tick_seconds must be positive");
    if (params_.ticks_per_control_step < 1)
        throw std::runtime_error("simulation: ticks_per_control_step must be at least 1");
    if (params_.max_control_steps < 1)
        throw std::runtime_error("simulation: max_control_steps must be at least 1");
    if (!(params_.jam_density_per_lane > 0.0))
        throw std::runtime_error("simulation: jam_density_per_lane must be positive");

    planners_[0] = planners_[1] = [this](int entry, int dest) {
        return shortest_route_by_length(net_, entry, dest);
    };

    for (Inflow& f : inflows) {
        InflowState st;
        st.entry_road = net_.road_index(f.entry_road);
        st.destination = net_.junction_index(f.destination);
        if (f.rate_vph < 0.0 || !std::isfinite(f.rate_vph))
            throw std::runtime_error("inflow on \"" + f.entry_road + "\": bad rate");
        if (f.budget && *f.budget < 0)
            throw std::runtime_error("inflow on \"" + f.entry_road + "\": negative budget");
        if (shortest_route_by_length(net_, st.entry_road, st.destination).empty())
            throw std::runtime_error("inflow on \"" + f.entry_road + "\": destination \"" +
                                     f.destination + "\" is unreachable");
        st.spec = std::move(f);
        inflows_.push_back(std::move(st));
    }
}

void Simulation::set_planner(VehicleClass cls, RoutePlanner planner) {
    planners_[cls == VehicleClass::Rv ? 0 : 1] = std::move(planner);
}

double Simulation::density(int road) const {
    const Road& r = net_.road(road);
    return occupancy_[road] / (r.lanes * r.length_m);
}

double Simulation::link_speed(int road) const {
    const Road& r = net_.road(road);
    const double fraction = 1.0 - density(road) / params_.jam_density_per_lane;
    return r.speed_limit_mps * std::max(params_.min_speed_fraction, fraction);
}

double Simulation::jam_capacity(int road) const {
    const Road& r = net_.road(road);
    return params_.jam_density_per_lane * r.lanes * r.length_m;
}

bool Simulation::at_jam(int road) const {
    // Occupancy is integral while capacity is real; the slack keeps a road
    // whose capacity lands exactly on an integer from flapping on rounding.
    return occupancy_[road] >= jam_capacity(road) - 1e-9;
}

bool Simulation::budget_exhausted(VehicleClass cls) const {
    for (const InflowState& f : inflows_) {
        if (f.spec.cls != cls) continue;
        if (!f.spec.budget || f.spawned < *f.spec.budget) return false;
    }
    return true;
}

std::optional<long> Simulation::budget_total(VehicleClass cls) const {
    long total = 0;
    for (const InflowState& f : inflows_) {
        if (f.spec.cls != cls) continue;
        if (!f.spec.budget) return std::nullopt;
        total += *f.spec.budget;
    }
    return total;
}

int Simulation::count_active(VehicleClass cls) const {
    return static_cast<int>(
        std::count_if(vehicles_.begin(), vehicles_.end(),
                      [cls](const Vehicle& v) { return v.cls == cls; }));
}

void Simulation::spawn() {
    for (InflowState& f : inflows_) {
        if (f.spec.budget && f.spawned >= *f.spec.budget) continue;
        const double p =
            std::clamp(f.spec.rate_vph * params_.tick_seconds / 3600.0, 0.0, 1.0);
        if (p <= 0.0) continue;
        if (!rng_.bernoulli(p)) continue;
        // The draw happened but a jammed entry road swallows the vehicle
        // without consuming budget.
        if (at_jam(f.entry_road)) continue;

        RoutePlanner& plan = planners_[f.spec.cls == VehicleClass::Rv ? 0 : 1];
        std::vector<int> route = plan(f.entry_road, f.destination);
        if (route.empty())
            throw std::logic_error("spawn: planner returned no route for inflow on \"" +
                                   f.spec.entry_road + "\"");
        validate_route(route, f.entry_road, f.destination);

        Vehicle v;
        const int slot = f.spec.cls == VehicleClass::Rv ? 0 : 1;
        v.id = std::string(vehicle_class_name(f.spec.cls)) + "-" +
               std::to_string(next_vehicle_number_[slot]++);
        v.cls = f.spec.cls;
        v.route = std::move(route);
        v.destination = f.destination;
        v.spawn_time_s = clock_s_;
        occupancy_[f.entry_road] += 1;
        vehicles_.push_back(std::move(v));
        f.spawned += 1;
        spawned_[slot] += 1;
    }
}

void Simulation::step_tick() {
    const double dt = params_.tick_seconds;

    // Speeds are snapshotted per road before anyone moves, so the outcome of
    // a tick does not depend on how occupancy shifts mid-tick. Entry checks
    // (jam) do read live occupancy: that is what makes spillback block.
    std::vector<double> speed(net_.road_count());
    for (int r = 0; r < net_.road_count(); ++r) speed[r] = link_speed(r);

    std::vector<size_t> order(vehicles_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const Vehicle& va = vehicles_[a];
        const Vehicle& vb = vehicles_[b];
        const int ra = net_.id_rank(va.current_road());
        const int rb = net_.id_rank(vb.current_road());
        if (ra != rb) return ra < rb;
        if (va.offset_m != vb.offset_m) return va.offset_m > vb.offset_m;
        return va.id < vb.id;
    });

    std::vector<bool> arrived(vehicles_.size(), false);
    for (size_t idx : order) {
        Vehicle& v = vehicles_[idx];
        double remaining = dt;
        while (true) {
            const int road = v.current_road();
            const double vel = speed[road];
            const double len = net_.road(road).length_m;
            const double dist = vel * remaining;
            if (v.offset_m + dist < len) {
                v.offset_m += dist;
                v.speed_mps = vel;
                break;
            }
            const double to_boundary = (len - v.offset_m) / vel;
            if (v.on_last_road()) {
                if (net_.road(road).to != v.destination)
                    throw std::logic_error("vehicle \"" + v.id +
                                           "\" ran out of route before its destination");
                occupancy_[road] -= 1;
                arrivals_.push_back(Arrival{v.id, v.cls, v.spawn_time_s, clock_s_ + dt});
                arrived[idx] = true;
                break;
            }
            const int next = v.route[v.route_pos + 1];
            if (at_jam(next)) {
                // Hold at the boundary; the vehicle occupies this road with
                // zero speed until the next road has room.
                v.offset_m = len;
                v.speed_mps = 0.0;
                break;
            }
            occupancy_[road] -= 1;
            occupancy_[next] += 1;
            v.route_pos += 1;
            v.offset_m = 0.0;
            v.speed_mps = speed[next];
            remaining -= to_boundary;
            if (remaining <= 0.0) break;
        }
    }

    if (!arrivals_.empty()) {
        size_t keep = 0;
        for (size_t i = 0; i < vehicles_.size(); ++i) {
            if (arrived[i]) continue;
            if (keep != i) vehicles_[keep] = std::move(vehicles_[i]);
            ++keep;
        }
        vehicles_.resize(keep);
    }

    clock_s_ += dt;
}

void Simulation::run_control_step() {
    for (int t = 0; t < params_.ticks_per_control_step; ++t) {
        spawn();
        step_tick();
    }
    control_steps_ += 1;
}

void Simulation::validate_route(const std::vector<int>& route, int start_road,
                                int destination) const {
    if (route.empty() || route.front() != start_road)
        throw std::logic_error("route must start at the vehicle's current road");
    for (size_t i = 0; i + 1 < route.size(); ++i) {
        if (net_.road(route[i]).to != net_.road(route[i + 1]).from)
            throw std::logic_error("route is not connected at \"" + net_.road(route[i]).id +
                                   "\" -> \"" + net_.road(route[i + 1]).id + "\"");
    }
    if (net_.road(route.back()).to != destination)
        throw std::logic_error("route does not end at the vehicle's destination");
}

void Simulation::set_route(size_t index, std::vector<int> route) {
    Vehicle& v = vehicles_.at(index);
    validate_route(route, v.current_road(), v.destination);
    v.route = std::move(route);
    v.route_pos = 0;
}

uint64_t Simulation::state_hash() const {
    Fnv h;
    h.add(clock_s_);
    h.add(control_steps_);
    h.add(spawned_[0]);
    h.add(spawned_[1]);
    h.add(static_cast<long>(vehicles_.size()));
    for (const Vehicle& v : vehicles_) {
        h.add(v.id);
        h.add(static_cast<int>(v.cls));
        for (int r : v.route) h.add(r);
        h.add(v.route_pos);
        h.add(v.offset_m);
        h.add(v.speed_mps);
        h.add(v.destination);
        h.add(v.spawn_time_s);
    }
    h.add(static_cast<long>(arrivals_.size()));
    for (const Arrival& a : arrivals_) {
        h.add(a.id);
        h.add(static_cast<int>(a.cls));
        h.add(a.spawn_time_s);
        h.add(a.arrival_time_s);
    }
    for (int occ : occupancy_) h.add(occ);
    return h.h;
}

}  // namespace gaq
