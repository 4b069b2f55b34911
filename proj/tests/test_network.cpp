#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "gaq/network.hpp"
#include "support/oracles.hpp"

using namespace gaq;

namespace {

RoadNetwork tiny_y() {
    // X -> Y forks into Y -> Z and Y -> X (back edge).
    return RoadNetwork({"X", "Y", "Z"}, {{"a", "X", "Y", 100.0, 1, 10.0},
                                         {"b", "Y", "Z", 200.0, 2, 20.0},
                                         {"c", "Y", "X", 150.0, 1, 15.0}});
}

}  // namespace

TEST_CASE("road and junction lookups resolve both directions") {
    RoadNetwork net = tiny_y();
    CHECK(net.junction_count() == 3);
    CHECK(net.road_count() == 3);
    CHECK(net.junction_index("Y") == 1);
    CHECK(net.road(net.road_index("b")).lanes == 2);
    CHECK(net.junction_name(net.road(net.road_index("b")).to) == "Z");
    CHECK(net.has_road("c"));
    CHECK(!net.has_road("zz"));
    CHECK_THROWS(net.road_index("zz"));
    CHECK_THROWS(net.junction_index("W"));
}

TEST_CASE("successor and predecessor tables follow junction incidence") {
    RoadNetwork net = tiny_y();
    const int a = net.road_index("a");
    const int b = net.road_index("b");
    const int c = net.road_index("c");

    CHECK(net.successors(a) == std::vector<int>{b, c});  // both leave Y, id order
    CHECK(net.successors(b).empty());
    CHECK(net.successors(c) == std::vector<int>{a});
    CHECK(net.predecessors(b) == std::vector<int>{a});
    CHECK(net.predecessors(a) == std::vector<int>{c});
    CHECK(net.roads_out(net.junction_index("Y")) == std::vector<int>{b, c});
    CHECK(net.roads_in(net.junction_index("Y")) == std::vector<int>{a});
}

TEST_CASE("mean length and speed cover all roads") {
    RoadNetwork net = tiny_y();
    CHECK(net.mean_length_m() == doctest::Approx(150.0));
    CHECK(net.mean_speed_limit_mps() == doctest::Approx(15.0));
}

TEST_CASE("id rank is the lexicographic position of the road id") {
    RoadNetwork net({"X", "Y"}, {{"m", "X", "Y", 10, 1, 5},
                                 {"a", "X", "Y", 10, 1, 5},
                                 {"z", "Y", "X", 10, 1, 5}});
    CHECK(net.id_rank(net.road_index("a")) == 0);
    CHECK(net.id_rank(net.road_index("m")) == 1);
    CHECK(net.id_rank(net.road_index("z")) == 2);
}

TEST_CASE("construction rejects malformed inputs by name") {
    std::vector<std::string> js{"X", "Y"};
    CHECK_THROWS_WITH_AS(RoadNetwork(js, {{"a", "X", "Q", 10, 1, 5}}),
                         doctest::Contains("Q"), std::runtime_error);
    CHECK_THROWS_WITH_AS(RoadNetwork(js, {{"a", "X", "Y", 10, 1, 5}, {"a", "Y", "X", 10, 1, 5}}),
                         doctest::Contains("a"), std::runtime_error);
    CHECK_THROWS(RoadNetwork(js, {{"a", "X", "Y", 0.0, 1, 5}}));
    CHECK_THROWS(RoadNetwork(js, {{"a", "X", "Y", 10, 0, 5}}));
    CHECK_THROWS(RoadNetwork(js, {{"a", "X", "Y", 10, 1, 0.0}}));
}

TEST_CASE("grid generator produces the expected lattice") {
    RoadNetwork two = make_grid_network(2, 2, 100.0, 1, 15.0, true);
    CHECK(two.junction_count() == 4);
    CHECK(two.road_count() == 8);

    RoadNetwork oneway = make_grid_network(2, 2, 100.0, 1, 15.0, false);
    CHECK(oneway.road_count() == 4);

    RoadNetwork four = make_grid_network(4, 4, 100.0, 2, 15.0, true);
    CHECK(four.junction_count() == 16);
    CHECK(four.road_count() == 48);
    CHECK(make_grid_network(4, 4, 100.0, 2, 15.0, false).road_count() == 24);

    CHECK(four.has_junction("J0_0"));
    CHECK(four.has_junction("J3_3"));
    CHECK(four.has_road("J0_0->J0_1"));
    CHECK(four.has_road("J0_1->J0_0"));
    const Road& r = four.road(four.road_index("J2_1->J3_1"));
    CHECK(r.length_m == 100.0);
    CHECK(r.lanes == 2);
    CHECK(r.speed_limit_mps == 15.0);
}

TEST_CASE("band partition groups roads by their start row") {
    RoadNetwork net = make_grid_network(4, 4, 100.0, 2, 15.0, true);
    FogPartition part = make_grid_band_partition(net, 4, 2);
    REQUIRE(part.region_count() == 2);
    REQUIRE(static_cast<int>(part.region_of.size()) == net.road_count());

    int counted = 0;
    for (int r = 0; r < net.road_count(); ++r) {
        const std::string& from = net.junction_name(net.road(r).from);
        const int row = from[1] - '0';
        CHECK(part.region_of[r] == (row < 2 ? 0 : 1));
        ++counted;
    }
    CHECK(counted == 48);

    std::set<int> seen;
    for (int region = 0; region < part.region_count(); ++region)
        for (int r : part.region_roads[region]) {
            CHECK(part.region_of[r] == region);
            seen.insert(r);
        }
    CHECK(static_cast<int>(seen.size()) == net.road_count());
}

TEST_CASE("region adjacency marks shared junctions and keeps a unit diagonal") {
    RoadNetwork net = make_grid_network(4, 4, 100.0, 2, 15.0, true);
    FogPartition bands = make_grid_band_partition(net, 4, 2);
    Matrix adj = region_adjacency(net, bands);
    REQUIRE(adj.rows() == 2);
    CHECK(adj(0, 0) == 1.0);
    CHECK(adj(1, 1) == 1.0);
    CHECK(adj(0, 1) == 1.0);  // rows 1 and 2 meet at the row-1/2 junctions
    CHECK(adj(1, 0) == 1.0);

    FogPartition solo = make_grid_band_partition(net, 4, 1);
    Matrix one = region_adjacency(net, solo);
    CHECK(one.rows() == 1);
    CHECK(one(0, 0) == 1.0);
}

TEST_CASE("network json round-trips including the partition") {
    RoadNetwork net = make_grid_network(3, 3, 80.0, 2, 12.5, true);
    FogPartition part = make_grid_band_partition(net, 3, 2);
    std::string text = network_to_json(net, &part);
    NetworkFile parsed = parse_network_json(text);

    CHECK(parsed.network.junction_count() == net.junction_count());
    CHECK(parsed.network.road_count() == net.road_count());
    REQUIRE(parsed.partition.has_value());
    for (int r = 0; r < net.road_count(); ++r) {
        const Road& a = net.road(r);
        const Road& b = parsed.network.road(parsed.network.road_index(a.id));
        CHECK(a.length_m == b.length_m);
        CHECK(a.lanes == b.lanes);
        CHECK(a.speed_limit_mps == b.speed_limit_mps);
        CHECK(parsed.network.junction_name(b.from) == net.junction_name(a.from));
        CHECK(parsed.partition->region_of[parsed.network.road_index(a.id)] ==
              part.region_of[r]);
    }
}

TEST_CASE("network json rejects unknown keys and broken references") {
    CHECK_THROWS(parse_network_json(R"({"junctions": ["A"], "roads": [], "extra": 1})"));
    CHECK_THROWS(parse_network_json(R"({"junctions": ["A", "B"], "roads": [
        {"id": "r", "from": "A", "to": "C", "length_m": 10, "lanes": 1,
         "speed_limit_mps": 5}]})"));
    CHECK_THROWS(parse_network_json("not json"));
}

TEST_CASE("network file save and load round-trip on disk") {
    testsupport::ScratchDir dir("network");
    RoadNetwork net = make_grid_network(2, 3, 100.0, 1, 10.0, true);
    const auto path = dir.path() / "net.json";
    save_network_file(path, net, nullptr);
    NetworkFile loaded = load_network_file(path);
    CHECK(loaded.network.road_count() == net.road_count());
    CHECK(!loaded.partition.has_value());
    CHECK_THROWS(load_network_file(dir.path() / "missing.json"));
}

TEST_CASE("junction distances and shortest routes follow road lengths") {
    // A -> B -> C with a long direct A -> C detour.
    RoadNetwork net({"A", "B", "C"}, {{"ab", "A", "B", 100.0, 1, 10.0},
                                      {"bc", "B", "C", 100.0, 1, 10.0},
                                      {"ac", "A", "C", 500.0, 1, 10.0}});
    std::vector<double> dist = junction_distance_to(net, net.junction_index("C"));
    CHECK(dist[net.junction_index("C")] == 0.0);
    CHECK(dist[net.junction_index("B")] == 100.0);
    CHECK(dist[net.junction_index("A")] == 200.0);

    std::vector<int> route =
        shortest_route_by_length(net, net.road_index("ab"), net.junction_index("C"));
    CHECK(testsupport::road_ids(net, route) == std::vector<std::string>{"ab", "bc"});

    // Unreachable destination.
    RoadNetwork oneway({"A", "B"}, {{"ab", "A", "B", 100.0, 1, 10.0}});
    CHECK(shortest_route_by_length(oneway, 0, oneway.junction_index("A")).empty());
}

TEST_CASE("make_partition validates coverage and rejects overlap") {
    RoadNetwork net = tiny_y();
    FogPartition ok = make_partition(net, {{0, {"a", "c"}}, {1, {"b"}}});
    CHECK(ok.region_count() == 2);
    CHECK(ok.region_of[net.road_index("b")] == 1);

    CHECK_THROWS(make_partition(net, {{0, {"a"}}, {1, {"b"}}}));            // c missing
    CHECK_THROWS(make_partition(net, {{0, {"a", "b"}}, {1, {"b", "c"}}}));  // b twice
    CHECK_THROWS(make_partition(net, {{0, {"a", "b", "c", "zz"}}}));        // unknown id
}
