#include "gaq/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "gaq/detail/json_util.hpp"

namespace gaq {

using detail::json;

RoadNetwork::RoadNetwork(std::vector<std::string> junction_names,
                         const std::vector<RoadSpec>& roads)
    : junction_names_(std::move(junction_names)) {
    for (int j = 0; j < static_cast<int>(junction_names_.size()); ++j) {
        if (junction_names_[j].empty())
            throw std::runtime_error("network: empty junction name");
        if (!junction_index_.emplace(junction_names_[j], j).second)
            throw std::runtime_error("network: duplicate junction \"" + junction_names_[j] + "\"");
    }

    roads_.reserve(roads.size());
    for (const RoadSpec& spec : roads) {
        if (spec.id.empty())
            throw std::runtime_error("network: road with empty id");
        if (road_index_.count(spec.id))
            throw std::runtime_error("network: duplicate road id \"" + spec.id + "\"");
        auto from = junction_index_.find(spec.from);
        if (from == junction_index_.end())
            throw std::runtime_error("network: road \"" + spec.id + "\" references unknown junction \"" +
                                     spec.from + "\"");
        auto to = junction_index_.find(spec.to);
        if (to == junction_index_.end())
            throw std::runtime_error("network: road \"" + spec.id + "\" references unknown junction \"" +
                                     spec.to + "\"");
        if (!(spec.length_m > 0.0) || !std::isfinite(spec.length_m))
            throw std::runtime_error("network: road \"" + spec.id + "\" has non-positive length");
        if (spec.lanes < 1)
            throw std::runtime_error("network: road \"" + spec.id + "\" has lane count below 1");
        if (!(spec.speed_limit_mps > 0.0) || !std::isfinite(spec.speed_limit_mps))
            throw std::runtime_error("network: road \"" + spec.id + "\" has non-positive speed limit");

        road_index_.emplace(spec.id, static_cast<int>(roads_.size()));
        roads_.push_back(Road{spec.id, from->second, to->second, spec.length_m, spec.lanes,
                              spec.speed_limit_mps});
    }

    // Lexicographic ranks over road ids; all neighbour lists are kept in
    // this order so that iteration order is a property of the network, not
    // of insertion order.
    std::vector<int> by_id(roads_.size());
    std::iota(by_id.begin(), by_id.end(), 0);
    std::sort(by_id.begin(), by_id.end(),
              [&](int a, int b) { return roads_[a].id < roads_[b].id; });
    id_rank_.assign(roads_.size(), 0);
    for (int rank = 0; rank < static_cast<int>(by_id.size()); ++rank)
        id_rank_[by_id[rank]] = rank;

    roads_out_.assign(junction_names_.size(), {});
    roads_in_.assign(junction_names_.size(), {});
    for (int rank = 0; rank < static_cast<int>(by_id.size()); ++rank) {
        const int r = by_id[rank];
        roads_out_[roads_[r].from].push_back(r);
        roads_in_[roads_[r].to].push_back(r);
    }

    successors_.assign(roads_.size(), {});
    predecessors_.assign(roads_.size(), {});
    for (int r = 0; r < static_cast<int>(roads_.size()); ++r) {
        successors_[r] = roads_out_[roads_[r].to];
        predecessors_[r] = roads_in_[roads_[r].from];
    }

    if (!roads_.empty()) {
        double len = 0.0, lim = 0.0;
        for (const Road& r : roads_) {
            len += r.length_m;
            lim += r.speed_limit_mps;
        }
        mean_length_m_ = len / static_cast<double>(roads_.size());
        mean_speed_limit_mps_ = lim / static_cast<double>(roads_.size());
    }
}

int RoadNetwork::junction_index(const std::string& name) const {
    auto it = junction_index_.find(name);
    if (it == junction_index_.end())
        throw std::runtime_error("network: unknown junction \"" + name + "\"");
    return it->second;
}

int RoadNetwork::road_index(const std::string& id) const {
    auto it = road_index_.find(id);
    if (it == road_index_.end())
        throw std::runtime_error("network: unknown road \"" + id + "\"");
    return it->second;
}

FogPartition make_partition(const RoadNetwork& net,
                            const std::vector<std::pair<int, std::vector<std::string>>>& regions) {
    const int count = static_cast<int>(regions.size());
    std::vector<bool> seen_index(count, false);
    FogPartition p;
    p.region_roads.assign(count, {});
    p.region_of.assign(net.road_count(), -1);

    for (const auto& [index, road_ids] : regions) {
        if (index < 0 || index >= count)
            throw std::runtime_error("fog regions: index " + std::to_string(index) +
                                     " outside 0.." + std::to_string(count - 1));
        if (seen_index[index])
            throw std::runtime_error("fog regions: duplicate index " + std::to_string(index));
        seen_index[index] = true;
        for (const std::string& id : road_ids) {
            if (!net.has_road(id))
                throw std::runtime_error("fog regions: unknown road \"" + id + "\"");
            const int r = net.road_index(id);
            if (p.region_of[r] != -1)
                throw std::runtime_error("fog regions: road \"" + id + "\" assigned to regions " +
                                         std::to_string(p.region_of[r]) + " and " +
                                         std::to_string(index));
            p.region_of[r] = index;
            p.region_roads[index].push_back(r);
        }
    }
    for (int r = 0; r < net.road_count(); ++r)
        if (p.region_of[r] == -1)
            throw std::runtime_error("fog regions: road \"" + net.road(r).id +
                                     "\" not assigned to any region");
    for (auto& roads : p.region_roads) std::sort(roads.begin(), roads.end());
    return p;
}

Matrix region_adjacency(const RoadNetwork& net, const FogPartition& partition) {
    const int n = partition.region_count();
    std::vector<std::set<int>> junctions(n);
    for (int i = 0; i < n; ++i)
        for (int r : partition.region_roads[i]) {
            junctions[i].insert(net.road(r).from);
            junctions[i].insert(net.road(r).to);
        }
    Matrix a(n, n);
    for (int i = 0; i < n; ++i) {
        a(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            const bool share = std::any_of(junctions[i].begin(), junctions[i].end(),
                                           [&](int q) { return junctions[j].count(q) > 0; });
            if (share) a(i, j) = a(j, i) = 1.0;
        }
    }
    return a;
}

namespace {

NetworkFile parse_network_impl(const json& doc) {
    if (!doc.is_object()) throw std::runtime_error("network file: top level must be an object");
    detail::reject_unknown_keys(doc, {"junctions", "roads", "fog_regions"}, "network file");

    const json& junctions = detail::require_key(doc, "junctions", "network file");
    if (!junctions.is_array())
        throw std::runtime_error("network file: \"junctions\" must be an array");
    std::vector<std::string> names;
    for (const json& j : junctions) {
        if (!j.is_string())
            throw std::runtime_error("network file: junction entries must be strings");
        names.push_back(j.get<std::string>());
    }

    const json& roads = detail::require_key(doc, "roads", "network file");
    if (!roads.is_array()) throw std::runtime_error("network file: \"roads\" must be an array");
    std::vector<RoadSpec> specs;
    for (const json& r : roads) {
        if (!r.is_object())
            throw std::runtime_error("network file: road entries must be objects");
        detail::reject_unknown_keys(r, {"id", "from", "to", "length_m", "lanes", "speed_limit_mps"},
                                    "network file road");
        RoadSpec s;
        s.id = detail::get_string(r, "id", "road");
        const std::string ctx = "road \"" + s.id + "\"";
        s.from = detail::get_string(r, "from", ctx);
        s.to = detail::get_string(r, "to", ctx);
        s.length_m = detail::get_number(r, "length_m", ctx);
        s.lanes = static_cast<int>(detail::get_integer(r, "lanes", ctx));
        s.speed_limit_mps = detail::get_number(r, "speed_limit_mps", ctx);
        specs.push_back(std::move(s));
    }

    NetworkFile out{RoadNetwork(std::move(names), specs), std::nullopt};

    if (doc.contains("fog_regions")) {
        const json& regions = doc["fog_regions"];
        if (!regions.is_array())
            throw std::runtime_error("network file: \"fog_regions\" must be an array");
        std::vector<std::pair<int, std::vector<std::string>>> parsed;
        for (const json& reg : regions) {
            if (!reg.is_object())
                throw std::runtime_error("network file: fog region entries must be objects");
            detail::reject_unknown_keys(reg, {"index", "roads"}, "fog region");
            const int index = static_cast<int>(detail::get_integer(reg, "index", "fog region"));
            const json& ids = detail::require_key(reg, "roads", "fog region");
            if (!ids.is_array())
                throw std::runtime_error("fog region: \"roads\" must be an array");
            std::vector<std::string> road_ids;
            for (const json& id : ids) {
                if (!id.is_string())
                    throw std::runtime_error("fog region: road entries must be strings");
                road_ids.push_back(id.get<std::string>());
            }
            parsed.emplace_back(index, std::move(road_ids));
        }
        out.partition = make_partition(out.network, parsed);
    }
    return out;
}

}  // namespace

NetworkFile parse_network_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("network file: invalid JSON: ") + e.what());
    }
    return parse_network_impl(doc);
}

NetworkFile load_network_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open network file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_network_json(buf.str());
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::string network_to_json(const RoadNetwork& net, const FogPartition* partition) {
    json doc;
    doc["junctions"] = json::array();
    for (int j = 0; j < net.junction_count(); ++j) doc["junctions"].push_back(net.junction_name(j));
    doc["roads"] = json::array();
    for (int r = 0; r < net.road_count(); ++r) {
        const Road& road = net.road(r);
        doc["roads"].push_back({{"id", road.id},
                                {"from", net.junction_name(road.from)},
                                {"to", net.junction_name(road.to)},
                                {"length_m", road.length_m},
                                {"lanes", road.lanes},
                                {"speed_limit_mps", road.speed_limit_mps}});
    }
    if (partition) {
        doc["fog_regions"] = json::array();
        for (int i = 0; i < partition->region_count(); ++i) {
            json reg;
            reg["index"] = i;
            reg["roads"] = json::array();
            for (int r : partition->region_roads[i]) reg["roads"].push_back(net.road(r).id);
            doc["fog_regions"].push_back(reg);
        }
    }
    return doc.dump(2) + "\n";
}

void save_network_file(const std::filesystem::path& path, const RoadNetwork& net,
                       const FogPartition* partition) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write network file: " + path.string());
    out << network_to_json(net, partition);
}

RoadNetwork make_grid_network(int rows, int cols, double length_m, int lanes,
                              double speed_limit_mps, bool bidirectional) {
    if (rows < 1 || cols < 1) throw std::runtime_error("grid: rows and cols must be at least 1");
    auto name = [](int r, int c) { return "J" + std::to_string(r) + "_" + std::to_string(c); };
    std::vector<std::string> junctions;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) junctions.push_back(name(r, c));

    std::vector<RoadSpec> roads;
    auto add = [&](const std::string& from, const std::string& to) {
        roads.push_back(RoadSpec{from + "->" + to, from, to, length_m, lanes, speed_limit_mps});
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) {
                add(name(r, c), name(r, c + 1));
                if (bidirectional) add(name(r, c + 1), name(r, c));
            }
            if (r + 1 < rows) {
                add(name(r, c), name(r + 1, c));
                if (bidirectional) add(name(r + 1, c), name(r, c));
            }
        }
    return RoadNetwork(std::move(junctions), roads);
}

FogPartition make_grid_band_partition(const RoadNetwork& net, int rows, int regions) {
    if (regions < 1 || rows < regions)
        throw std::runtime_error("grid partition: need 1 <= regions <= rows");
    std::vector<std::pair<int, std::vector<std::string>>> spec(regions);
    for (int i = 0; i < regions; ++i) spec[i].first = i;
    for (int r = 0; r < net.road_count(); ++r) {
        const std::string& from = net.junction_name(net.road(r).from);
        // Junction names are J<row>_<col>; recover the row.
        const auto underscore = from.find('_');
        const int row = std::stoi(from.substr(1, underscore - 1));
        const int band = std::min(regions - 1, row * regions / rows);
        spec[band].second.push_back(net.road(r).id);
    }
    return make_partition(net, spec);
}

std::vector<double> junction_distance_to(const RoadNetwork& net, int dest_junction) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(net.junction_count(), kInf);
    dist[dest_junction] = 0.0;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    heap.emplace(0.0, dest_junction);
    while (!heap.empty()) {
        auto [d, j] = heap.top();
        heap.pop();
        if (d > dist[j]) continue;
        for (int r : net.roads_in(j)) {
            const Road& road = net.road(r);
            const double nd = d + road.length_m;
            if (nd < dist[road.from]) {
                dist[road.from] = nd;
                heap.emplace(nd, road.from);
            }
        }
    }
    return dist;
}

std::vector<int> shortest_route_by_length(const RoadNetwork& net, int entry_road,
                                          int dest_junction) {
    const std::vector<double> dist = junction_distance_to(net, dest_junction);
    std::vector<int> route{entry_road};
    int at = net.road(entry_road).to;
    if (at != dest_junction && !std::isfinite(dist[at])) return {};
    while (at != dest_junction) {
        int best = -1;
        double best_cost = std::numeric_limits<double>::infinity();
        for (int r : net.roads_out(at)) {
            const double cost = net.road(r).length_m + dist[net.road(r).to];
            // roads_out is id-ordered, so strict < keeps the first (smallest
            // id) road among equals.
            if (cost < best_cost) {
                best_cost = cost;
                best = r;
            }
        }
        if (best < 0) return {};
        route.push_back(best);
        at = net.road(best).to;
    }
    return route;
}

}  // namespace gaq
