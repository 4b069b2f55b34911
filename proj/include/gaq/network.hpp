#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gaq/matrix.hpp"

namespace gaq {

/// Input description of one directed road, as it appears in network files.
struct RoadSpec {
    std::string id;
    std::string from;
    std::string to;
    double length_m = 0.0;
    int lanes = 0;
    double speed_limit_mps = 0.0;
};

/// A directed road with junction endpoints resolved to indices.
struct Road {
    std::string id;
    int from = -1;
    int to = -1;
    double length_m = 0.0;
    int lanes = 0;
    double speed_limit_mps = 0.0;
};

/// Immutable directed road graph. Junctions and roads are addressed by dense
/// indices; every lookup table (successors, predecessors, id ranks) is built
/// once in the constructor.
///
/// Validation throws std::runtime_error with a message naming the offending
/// entity: duplicate road ids, unknown junction references, non-positive
/// lengths or speed limits, lane counts below one.
class RoadNetwork {
public:
    RoadNetwork(std::vector<std::string> junction_names, const std::vector<RoadSpec>& roads);

    int junction_count() const { return static_cast<int>(junction_names_.size()); }
    int road_count() const { return static_cast<int>(roads_.size()); }

    const std::string& junction_name(int j) const { return junction_names_.at(j); }
    const Road& road(int r) const { return roads_.at(r); }

    /// Throws std::runtime_error when the id is unknown.
    int junction_index(const std::string& name) const;
    int road_index(const std::string& id) const;

    bool has_junction(const std::string& name) const { return junction_index_.count(name) > 0; }
    bool has_road(const std::string& id) const { return road_index_.count(id) > 0; }

    /// Roads leaving road r's end junction, ordered by road id.
    const std::vector<int>& successors(int r) const { return successors_.at(r); }
    /// Roads ending at road r's start junction, ordered by road id.
    const std::vector<int>& predecessors(int r) const { return predecessors_.at(r); }

    const std::vector<int>& roads_out(int junction) const { return roads_out_.at(junction); }
    const std::vector<int>& roads_in(int junction) const { return roads_in_.at(junction); }

    /// Position of road r in the lexicographic ordering of all road ids.
    int id_rank(int r) const { return id_rank_.at(r); }

    double mean_length_m() const { return mean_length_m_; }
    double mean_speed_limit_mps() const { return mean_speed_limit_mps_; }

private:
    std::vector<std::string> junction_names_;
    std::vector<Road> roads_;
    std::unordered_map<std::string, int> junction_index_;
    std::unordered_map<std::string, int> road_index_;
    std::vector<std::vector<int>> successors_;
    std::vector<std::vector<int>> predecessors_;
    std::vector<std::vector<int>> roads_out_;
    std::vector<std::vector<int>> roads_in_;
    std::vector<int> id_rank_;
    double mean_length_m_ = 0.0;
    double mean_speed_limit_mps_ = 0.0;
};

/// Partition of the road set into fog regions. Region indices are dense
/// (0..R-1); every road belongs to exactly one region.
struct FogPartition {
    std::vector<std::vector<int>> region_roads;  // sorted road indices per region
    std::vector<int> region_of;                  // region index per road

    int region_count() const { return static_cast<int>(region_roads.size()); }
};

/// Builds and validates a partition from region -> road-id lists.
FogPartition make_partition(const RoadNetwork& net,
                            const std::vector<std::pair<int, std::vector<std::string>>>& regions);

/// Region adjacency as a 0/1 matrix: entry (i,j) is 1 when regions i and j
/// share at least one junction, and the diagonal is always 1.
Matrix region_adjacency(const RoadNetwork& net, const FogPartition& partition);

/// Parsed contents of a network file.
struct NetworkFile {
    RoadNetwork network;
    std::optional<FogPartition> partition;
};

/// Parses the JSON network format. Top-level keys: "junctions" (list of
/// names), "roads" (list of {id, from, to, length_m, lanes,
/// speed_limit_mps}), optional "fog_regions" (list of {index, roads}).
/// Unknown keys anywhere are an error, as are all the graph-level problems
/// RoadNetwork itself rejects.
NetworkFile parse_network_json(const std::string& text);
NetworkFile load_network_file(const std::filesystem::path& path);

std::string network_to_json(const RoadNetwork& net, const FogPartition* partition);
void save_network_file(const std::filesystem::path& path, const RoadNetwork& net,
                       const FogPartition* partition);

/// Rectangular lattice with junctions named J<row>_<col> and roads named
/// <from>-><to>. Every neighbouring junction pair gets one road in each
/// direction when bidirectional is set, otherwise only the east/south one.
RoadNetwork make_grid_network(int rows, int cols, double length_m, int lanes,
                              double speed_limit_mps, bool bidirectional);

/// Splits a grid network into horizontal bands by the row of each road's
/// start junction: band r covers rows in [r*rows/regions, (r+1)*rows/regions).
FogPartition make_grid_band_partition(const RoadNetwork& net, int rows, int regions);

/// Free-flow distance in metres from every junction to dest, measured as the
/// sum of road lengths along the cheapest directed path. Unreachable
/// junctions get +infinity.
std::vector<double> junction_distance_to(const RoadNetwork& net, int dest_junction);

/// Shortest route (by total road length) starting on entry_road and ending
/// on a road whose end junction is dest. The entry road is the first element.
/// Returns an empty vector when dest is unreachable. Ties are broken towards
/// the lexicographically smallest road-id sequence.
std::vector<int> shortest_route_by_length(const RoadNetwork& net, int entry_road,
                                          int dest_junction);

}  // namespace gaq
