#include "gaq/router.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>

namespace gaq {

std::vector<double> action_road_weights(const std::vector<int>& actions,
                                        const FogPartition& partition,
                                        const Simulation& sim, double t1, double t2) {
    if (static_cast<int>(actions.size()) != partition.region_count())
        throw std::invalid_argument("action_road_weights: one action per region required");
    for (int a : actions)
        if (a < 0) throw std::invalid_argument("action_road_weights: negative action index");
    const int roads = sim.network().road_count();
    std::vector<double> w(roads);
    for (int r = 0; r < roads; ++r)
        w[r] = actions[partition.region_of[r]] * t1 + t2 * sim.occupancy(r) + kWeightFloor;
    return w;
}

std::vector<double> occupancy_road_weights(const Simulation& sim, double t2) {
    const int roads = sim.network().road_count();
    std::vector<double> w(roads);
    for (int r = 0; r < roads; ++r) w[r] = t2 * sim.occupancy(r) + kWeightFloor;
    return w;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Cheapest cost of a route suffix [r, ..., end] whose last road enters
/// dest, including r's own weight, running backwards over predecessor
/// links. Junctions marked banned may not appear inside a suffix; a road's
/// own start junction is the caller's responsibility.
std::vector<double> suffix_costs(const RoadNetwork& net, const std::vector<double>& w, int dest,
                                 const std::vector<char>& banned_junction) {
    std::vector<double> h(net.road_count(), kInf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    for (int r : net.roads_in(dest)) {
        h[r] = w[r];
        heap.emplace(h[r], r);
    }
    while (!heap.empty()) {
        auto [d, r] = heap.top();
        heap.pop();
        if (d > h[r]) continue;
        // Prepending a road p in front of r makes r's start junction an
        // interior junction of the suffix, so it must not be banned.
        if (banned_junction[net.road(r).from]) continue;
        for (int p : net.predecessors(r)) {
            const double nd = w[p] + d;
            if (nd < h[p]) {
                h[p] = nd;
                heap.emplace(nd, p);
            }
        }
    }
    return h;
}

/// Follows the suffix costs greedily from start (already on the path) to
/// dest, always taking the smallest road id among cost-consistent
/// successors. Returns the roads after start.
std::vector<int> reconstruct_suffix(const RoadNetwork& net, const std::vector<double>& w,
                                    const std::vector<double>& h, int start, int dest) {
    std::vector<int> suffix;
    int cur = start;
    while (net.road(cur).to != dest) {
        int best = -1;
        for (int q : net.successors(cur)) {  // id-ordered, first match is lex-smallest
            if (!std::isfinite(h[q])) continue;
            if (w[cur] + h[q] == h[cur]) {
                best = q;
                break;
            }
        }
        if (best < 0) throw std::logic_error("route search: inconsistent suffix costs");
        suffix.push_back(best);
        cur = best;
    }
    return suffix;
}

struct PathEntry {
    std::vector<int> roads;
    std::vector<int> ranks;  // id ranks of roads, for lexicographic ordering
    double weight = 0.0;
};

struct PathOrder {
    bool operator()(const PathEntry& a, const PathEntry& b) const {
        if (a.weight != b.weight) return a.weight < b.weight;
        return a.ranks < b.ranks;
    }
};

}  // namespace

std::vector<RouteCandidate> k_shortest_routes(const RoadNetwork& net,
                                              const std::vector<double>& weights, int from_road,
                                              int dest_junction, int k) {
    if (k < 1) throw std::invalid_argument("k_shortest_routes: k must be at least 1");
    if (from_road < 0 || from_road >= net.road_count())
        throw std::invalid_argument("k_shortest_routes: bad road index");
    if (dest_junction < 0 || dest_junction >= net.junction_count())
        throw std::invalid_argument("k_shortest_routes: bad junction index");
    if (static_cast<int>(weights.size()) != net.road_count())
        throw std::invalid_argument("k_shortest_routes: one weight per road required");
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w))
            throw std::invalid_argument("k_shortest_routes: weights must be strictly positive");

    auto make_entry = [&](std::vector<int> roads) {
        PathEntry e;
        e.ranks.reserve(roads.size());
        for (int r : roads) e.ranks.push_back(net.id_rank(r));
        e.weight = 0.0;
        for (int r : roads) e.weight += weights[r];  // canonical front-to-back sum
        e.roads = std::move(roads);
        return e;
    };

    // Every candidate starts by crossing from_road, so its start junction is
    // already spent; ending there again would repeat it. The tail searches
    // below only keep it off interior positions, hence the explicit check.
    if (net.road(from_road).from == dest_junction) return {};

    // A route already standing on a road into the destination cannot be
    // extended or varied: leaving the destination junction would have to
    // come back to it, which junction-simplicity forbids.
    if (net.road(from_road).to == dest_junction)
        return {RouteCandidate{{from_road}, weights[from_road]}};

    std::vector<PathEntry> accepted;
    std::set<PathEntry, PathOrder> pool;
    std::set<std::vector<int>> seen;

    {
        // Both of from_road's junctions are off limits for the tail's
        // interior; a walk that is cheapest-from-a-fixed-first-road may
        // otherwise loop back through the junction that road starts from.
        // The ban also stops the backward search from reaching from_road
        // itself, so the tail is read off the cheapest successor instead.
        std::vector<char> banned(net.junction_count(), 0);
        banned[net.road(from_road).from] = 1;
        banned[net.road(from_road).to] = 1;
        const std::vector<double> h = suffix_costs(net, weights, dest_junction, banned);

        int first = -1;
        double first_cost = kInf;
        for (int q : net.successors(from_road)) {
            if (h[q] < first_cost) {  // strict: first among equals is lex-smallest
                first_cost = h[q];
                first = q;
            }
        }
        if (first < 0 || !std::isfinite(first_cost)) return {};

        std::vector<int> roads{from_road, first};
        if (net.road(first).to != dest_junction) {
            const std::vector<int> suffix =
                reconstruct_suffix(net, weights, h, first, dest_junction);
            roads.insert(roads.end(), suffix.begin(), suffix.end());
        }
        seen.insert(roads);
        pool.insert(make_entry(std::move(roads)));
    }

    while (!pool.empty() && static_cast<int>(accepted.size()) < k) {
        PathEntry path = *pool.begin();
        pool.erase(pool.begin());
        accepted.push_back(path);
        if (static_cast<int>(accepted.size()) == k) break;

        // Spur from every junction along the accepted path: keep the prefix
        // up to road i, forbid the prefix's junctions and every already
        // accepted continuation of it, and search for the cheapest new tail.
        for (size_t i = 0; i + 1 < path.roads.size(); ++i) {
            std::vector<char> banned(net.junction_count(), 0);
            banned[net.road(path.roads[0]).from] = 1;
            for (size_t j = 0; j <= i; ++j) banned[net.road(path.roads[j]).to] = 1;

            std::set<int> banned_first;
            for (const PathEntry& a : accepted)
                if (a.roads.size() > i + 1 &&
                    std::equal(path.roads.begin(), path.roads.begin() + i + 1, a.roads.begin()))
                    banned_first.insert(a.roads[i + 1]);

            const std::vector<double> h = suffix_costs(net, weights, dest_junction, banned);

            int spur = -1;
            double spur_cost = kInf;
            for (int q : net.successors(path.roads[i])) {
                if (banned_first.count(q)) continue;
                if (h[q] < spur_cost) {  // strict: first among equals is lex-smallest
                    spur_cost = h[q];
                    spur = q;
                }
            }
            if (spur < 0 || !std::isfinite(spur_cost)) continue;

            std::vector<int> roads(path.roads.begin(), path.roads.begin() + i + 1);
            roads.push_back(spur);
            if (net.road(spur).to != dest_junction) {
                const std::vector<int> suffix =
                    reconstruct_suffix(net, weights, h, spur, dest_junction);
                roads.insert(roads.end(), suffix.begin(), suffix.end());
            }
            if (seen.insert(roads).second) pool.insert(make_entry(std::move(roads)));
        }
    }

    std::vector<RouteCandidate> out;
    out.reserve(accepted.size());
    for (PathEntry& e : accepted) out.push_back(RouteCandidate{std::move(e.roads), e.weight});
    return out;
}

PriorityResult compute_priority(const std::vector<RvRequest>& requests, const RoadNetwork& net,
                                PriorityMode mode) {
    PriorityResult out;
    out.distance.assign(requests.size(), kInf);

    std::map<int, std::vector<double>> dist_cache;
    for (size_t i = 0; i < requests.size(); ++i) {
        const RvRequest& rq = requests[i];
        const Road& road = net.road(rq.current_road);
        auto it = dist_cache.find(rq.destination);
        if (it == dist_cache.end())
            it = dist_cache.emplace(rq.destination, junction_distance_to(net, rq.destination))
                     .first;
        const double onward = it->second[road.to];
        if (!std::isfinite(onward)) {
            out.unreachable.push_back(static_cast<int>(i));
            continue;
        }
        out.distance[i] = (road.length_m - rq.offset_m) + onward;
        out.order.push_back(static_cast<int>(i));
    }

    std::sort(out.order.begin(), out.order.end(), [&](int a, int b) {
        const double da = out.distance[a];
        const double db = out.distance[b];
        if (da != db) return mode == PriorityMode::Near ? da < db : da > db;
        return requests[a].id < requests[b].id;
    });
    return out;
}

FootprintTable make_footprint_table(const RoadNetwork& net) {
    FootprintTable t;
    t.omega.resize(net.road_count());
    t.counts.assign(net.road_count(), 0);
    const double mean_len = net.mean_length_m();
    const double mean_limit = net.mean_speed_limit_mps();
    for (int r = 0; r < net.road_count(); ++r) {
        const Road& road = net.road(r);
        t.omega[r] = (mean_len / road.length_m) * road.lanes * (mean_limit / road.speed_limit_mps);
    }
    return t;
}

double route_entropy(const std::vector<int>& roads, const FootprintTable& table) {
    double sum = 0.0;
    for (int r : roads) sum += table.fc(r);
    if (sum <= 0.0) return 0.0;
    double entropy = 0.0;
    for (int r : roads) {
        const double fc = table.fc(r);
        if (fc <= 0.0) continue;
        const double p = fc / sum;
        entropy -= p * std::log(p);
    }
    return entropy;
}

double route_popularity(const std::vector<int>& roads, const FootprintTable& table) {
    return std::exp(route_entropy(roads, table));
}

AssignResult assign_routes(const std::vector<RvRequest>& requests, const RoadNetwork& net,
                           const std::vector<double>& weights, PriorityMode mode,
                           int high_priority_x, int k, PopularityObjective objective) {
    if (high_priority_x < 0)
        throw std::invalid_argument("assign_routes: high_priority_x must be non-negative");

    const PriorityResult priority = compute_priority(requests, net, mode);
    FootprintTable table = make_footprint_table(net);

    AssignResult out;
    out.unreachable = priority.unreachable;

    int rank = 0;
    for (int req_idx : priority.order) {
        const RvRequest& rq = requests[req_idx];
        const std::vector<RouteCandidate> candidates =
            k_shortest_routes(net, weights, rq.current_road, rq.destination, k);
        if (candidates.empty()) {
            // Statically reachable destinations always yield candidates
            // (weights are positive on the same graph), but stay defensive.
            out.unreachable.push_back(req_idx);
            ++rank;
            continue;
        }

        RouteAssignment a;
        a.request = req_idx;
        a.priority_rank = rank;
        a.high_priority = rank < high_priority_x;
        a.candidate_count = static_cast<int>(candidates.size());

        const RouteCandidate* chosen = &candidates[0];
        double chosen_pop = route_popularity(chosen->roads, table);
        if (!a.high_priority) {
            // Candidates arrive cheapest-first, so strict improvement keeps
            // the cheaper route among popularity ties.
            for (size_t c = 1; c < candidates.size(); ++c) {
                const double pop = route_popularity(candidates[c].roads, table);
                const bool better = objective == PopularityObjective::Min ? pop < chosen_pop
                                                                          : pop > chosen_pop;
                if (better) {
                    chosen = &candidates[c];
                    chosen_pop = pop;
                }
            }
        }

        a.roads = chosen->roads;
        a.weight = chosen->weight;
        a.popularity = chosen_pop;
        for (int r : a.roads) table.counts[r] += 1;
        out.assignments.push_back(std::move(a));
        ++rank;
    }
    return out;
}

}  // namespace gaq
