#include "gaq/env.hpp"

#include <fstream>
#include <sstream>

#include "gaq/detail/json_util.hpp"

namespace gaq {

using detail::json;

namespace {

VehicleClass parse_class(const std::string& s, const std::string& ctx) {
    if (s == "rv") return VehicleClass::Rv;
    if (s == "bv") return VehicleClass::Bv;
    throw std::runtime_error(ctx + ": unknown vehicle class \"" + s + "\" (expected rv or bv)");
}

}  // namespace

ScenarioConfig parse_scenario_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("scenario file: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw std::runtime_error("scenario file: top level must be an object");
    detail::reject_unknown_keys(doc,
                                {"inflows", "tick_seconds", "ticks_per_control_step",
                                 "max_control_steps", "jam_density_per_lane", "seed", "tau",
                                 "reward_weights"},
                                "scenario file");

    ScenarioConfig sc;
    const json& inflows = detail::require_key(doc, "inflows", "scenario file");
    if (!inflows.is_array())
        throw std::runtime_error("scenario file: \"inflows\" must be an array");
    for (const json& f : inflows) {
        if (!f.is_object())
            throw std::runtime_error("scenario file: inflow entries must be objects");
        detail::reject_unknown_keys(f, {"entry_road", "class", "rate_vph", "destination"},
                                    "inflow");
        Inflow in;
        in.entry_road = detail::get_string(f, "entry_road", "inflow");
        in.cls = parse_class(detail::get_string(f, "class", "inflow"), "inflow");
        in.rate_vph = detail::get_number(f, "rate_vph", "inflow");
        in.destination = detail::get_string(f, "destination", "inflow");
        if (in.rate_vph < 0.0)
            throw std::runtime_error("inflow on \"" + in.entry_road + "\": negative rate");
        sc.inflows.push_back(std::move(in));
    }

    if (doc.contains("tick_seconds")) sc.sim.tick_seconds = doc["tick_seconds"].get<double>();
    if (doc.contains("ticks_per_control_step"))
        sc.sim.ticks_per_control_step = doc["ticks_per_control_step"].get<int>();
    if (doc.contains("max_control_steps"))
        sc.sim.max_control_steps = doc["max_control_steps"].get<int>();
    if (doc.contains("jam_density_per_lane"))
        sc.sim.jam_density_per_lane = doc["jam_density_per_lane"].get<double>();
    if (doc.contains("seed")) sc.seed = doc["seed"].get<uint64_t>();
    if (doc.contains("tau")) {
        sc.tau = doc["tau"].get<double>();
        if (!(sc.tau > 0.0)) throw std::runtime_error("scenario file: tau must be positive");
    }
    if (doc.contains("reward_weights")) {
        const json& rw = doc["reward_weights"];
        if (!rw.is_object())
            throw std::runtime_error("scenario file: \"reward_weights\" must be an object");
        detail::reject_unknown_keys(rw, {"base", "bonus", "penalty"}, "reward_weights");
        if (rw.contains("base")) sc.reward.base = rw["base"].get<double>();
        if (rw.contains("bonus")) sc.reward.bonus = rw["bonus"].get<double>();
        if (rw.contains("penalty")) sc.reward.penalty = rw["penalty"].get<double>();
    }
    return sc;
}

ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario_json(buf.str());
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

TrafficEnv::TrafficEnv(const RoadNetwork& net, const FogPartition& partition,
                       ScenarioConfig scenario, RouterConfig router)
    : net_(net),
      partition_(partition),
      scenario_(std::move(scenario)),
      router_(router),
      adjacency_(region_adjacency(net, partition)) {
    if (static_cast<int>(partition_.region_of.size()) != net_.road_count())
        throw std::runtime_error("environment: partition does not cover the network");
    if (router_.k < 1) throw std::runtime_error("environment: k must be at least 1");
    reset(scenario_.seed);
}

void TrafficEnv::reset(uint64_t episode_seed) {
    sim_ = std::make_unique<Simulation>(net_, scenario_.sim, scenario_.inflows, episode_seed);
    prev_mean_rv_speed_ = 0.0;
    diagnostics_.clear();
}

Matrix TrafficEnv::observe() const { return node_features(*sim_, partition_, scenario_.tau); }

bool TrafficEnv::fleet_complete() const {
    const std::optional<long> total = sim_->budget_total(VehicleClass::Rv);
    return total.has_value() && *total > 0 && sim_->budget_exhausted(VehicleClass::Rv) &&
           sim_->count_active(VehicleClass::Rv) == 0;
}

TrafficEnv::StepResult TrafficEnv::step(const std::vector<int>& actions) {
    return run_step(action_road_weights(actions, partition_, *sim_, router_.t1, router_.t2));
}

TrafficEnv::StepResult TrafficEnv::step_baseline() {
    return run_step(occupancy_road_weights(*sim_, router_.t2));
}

TrafficEnv::StepResult TrafficEnv::run_step(const std::vector<double>& weights) {
    if (sim_->control_steps_done() >= scenario_.sim.max_control_steps)
        throw std::logic_error("environment: episode already over, reset() required");

    // Gather the managed fleet in simulator order; requests[i] corresponds
    // to vehicle_index[i].
    std::vector<RvRequest> requests;
    std::vector<size_t> vehicle_index;
    const std::vector<Vehicle>& vehicles = sim_->vehicles();
    for (size_t i = 0; i < vehicles.size(); ++i) {
        const Vehicle& v = vehicles[i];
        if (v.cls != VehicleClass::Rv) continue;
        requests.push_back(RvRequest{v.id, v.current_road(), v.offset_m, v.destination});
        vehicle_index.push_back(i);
    }

    const AssignResult assigned =
        assign_routes(requests, net_, weights, router_.priority, router_.high_priority_x,
                      router_.k, router_.objective);
    for (const RouteAssignment& a : assigned.assignments) {
        sim_->set_route(vehicle_index[a.request], a.roads);
        diagnostics_.push_back(RouteDiagnostic{sim_->control_steps_done() + 1,
                                               requests[a.request].id, a.priority_rank,
                                               a.high_priority, a.candidate_count, a.weight,
                                               a.popularity});
    }

    sim_->run_control_step();

    StepResult res;
    res.rerouted = static_cast<int>(assigned.assignments.size());
    res.reward = compute_reward(*sim_, prev_mean_rv_speed_, scenario_.reward);
    prev_mean_rv_speed_ = res.reward.mean_rv_speed;
    res.step_index = sim_->control_steps_done();
    res.done = fleet_complete();
    res.at_cap = !res.done && res.step_index >= scenario_.sim.max_control_steps;
    return res;
}

}  // namespace gaq
