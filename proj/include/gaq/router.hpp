#pragma once

#include <string>
#include <vector>

#include "gaq/network.hpp"
#include "gaq/simulator.hpp"

namespace gaq {

/// Additive floor that keeps every road weight strictly positive, which the
/// path search relies on.
inline constexpr double kWeightFloor = 1e-6;

/// Per-road costs from the per-region control actions: each road pays its
/// region's action index times t1 plus t2 times its current occupancy.
std::vector<double> action_road_weights(const std::vector<int>& actions,
                                        const FogPartition& partition,
                                        const Simulation& sim, double t1, double t2);

/// Occupancy-only costs (no control term); the non-learning reference policy.
std::vector<double> occupancy_road_weights(const Simulation& sim, double t2);

struct RouteCandidate {
    std::vector<int> roads;  // starts at the querying vehicle's current road
    double weight = 0.0;     // sum of road weights, first road included
};

/// Up to k cheapest junction-simple routes that start on from_road and end
/// on a road entering dest_junction. "Junction-simple" counts from_road's
/// own endpoints, so no junction repeats anywhere along a candidate. Results
/// are ordered by (weight, lexicographic road-id sequence) and that same
/// order breaks every internal tie. Fewer than k routes exist, fewer are
/// returned; none exist, the result is empty. Weights must all be strictly
/// positive.
std::vector<RouteCandidate> k_shortest_routes(const RoadNetwork& net,
                                              const std::vector<double>& weights, int from_road,
                                              int dest_junction, int k);

enum class PriorityMode { Near, Far };

/// One rerouting query: where the vehicle is and where it is going.
struct RvRequest {
    std::string id;
    int current_road = -1;
    double offset_m = 0.0;
    int destination = -1;
};

struct PriorityResult {
    std::vector<int> order;        // request indices, highest priority first
    std::vector<double> distance;  // metres to destination, per request
    std::vector<int> unreachable;  // request indices with no route, excluded from order
};

/// Ranks vehicles by remaining free-flow distance to their destination
/// (rest of the current road plus the static shortest path onward). Near
/// mode puts the closest vehicle first, far mode the furthest; ties fall
/// back to the vehicle id.
PriorityResult compute_priority(const std::vector<RvRequest>& requests, const RoadNetwork& net,
                                PriorityMode mode);

/// Static per-road spread weight: roads that are short, wide and fast count
/// for more when measuring how concentrated the current assignments are.
struct FootprintTable {
    std::vector<double> omega;  // per road
    std::vector<int> counts;    // vehicles assigned onto the road so far

    double fc(int road) const { return counts[road] * omega[road]; }
};

FootprintTable make_footprint_table(const RoadNetwork& net);

/// Shannon entropy of the footprint distribution restricted to the route's
/// roads (normalised by their footprint sum). Zero when the sum is zero.
double route_entropy(const std::vector<int>& roads, const FootprintTable& table);

/// exp(route_entropy): 1 for untouched routes, larger for contested ones.
double route_popularity(const std::vector<int>& roads, const FootprintTable& table);

enum class PopularityObjective { Min, Max };

struct RouteAssignment {
    int request = -1;  // index into the request vector
    std::vector<int> roads;
    double weight = 0.0;
    double popularity = 0.0;
    int priority_rank = -1;
    bool high_priority = false;
    int candidate_count = 0;
};

struct AssignResult {
    std::vector<RouteAssignment> assignments;  // in priority order
    std::vector<int> unreachable;              // request indices left unassigned
};

/// Orders the fleet by priority, then walks it: the first high_priority_x
/// vehicles take their cheapest candidate, the rest pick the candidate that
/// optimises popularity against everything assigned before them (ties to
/// the cheaper candidate). Footprints accumulate within this call only.
AssignResult assign_routes(const std::vector<RvRequest>& requests, const RoadNetwork& net,
                           const std::vector<double>& weights, PriorityMode mode,
                           int high_priority_x, int k, PopularityObjective objective);

}  // namespace gaq
