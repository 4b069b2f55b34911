#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gaq/network.hpp"

int main(int argc, char** argv) {
    CLI::App app{"grid road network generator"};

    int rows = 4;
    int cols = 4;
    int lanes = 1;
    int regions = 2;
    double length = 100.0;
    double limit = 15.0;
    std::vector<double> band_limits;
    bool one_way = false;
    std::string out;

    app.add_option("--rows", rows, "junction rows")->check(CLI::PositiveNumber);
    app.add_option("--cols", cols, "junction columns")->check(CLI::PositiveNumber);
    app.add_option("--length", length, "road length in metres")->check(CLI::PositiveNumber);
    app.add_option("--lanes", lanes, "lanes per road")->check(CLI::PositiveNumber);
    app.add_option("--limit", limit, "speed limit in m/s")->check(CLI::PositiveNumber);
    app.add_option("--band-limits", band_limits,
                   "per-band speed limits in m/s, one per fog band (overrides --limit)");
    app.add_option("--regions", regions, "horizontal fog bands")->check(CLI::PositiveNumber);
    app.add_flag("--one-way", one_way, "east/south roads only");
    app.add_option("--out", out, "output network JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        gaq::RoadNetwork net = gaq::make_grid_network(rows, cols, length, lanes, limit, !one_way);
        gaq::FogPartition partition = gaq::make_grid_band_partition(net, rows, regions);
        if (!band_limits.empty()) {
            if (static_cast<int>(band_limits.size()) != partition.region_count())
                throw std::runtime_error("--band-limits needs one value per fog band");
            std::vector<std::string> junctions;
            for (int j = 0; j < net.junction_count(); ++j)
                junctions.push_back(net.junction_name(j));
            std::vector<gaq::RoadSpec> specs;
            for (int r = 0; r < net.road_count(); ++r) {
                const gaq::Road& road = net.road(r);
                specs.push_back(gaq::RoadSpec{road.id, net.junction_name(road.from),
                                              net.junction_name(road.to), road.length_m,
                                              road.lanes,
                                              band_limits[partition.region_of[r]]});
            }
            net = gaq::RoadNetwork(junctions, specs);
            partition = gaq::make_grid_band_partition(net, rows, regions);
        }
        gaq::save_network_file(out, net, &partition);
        std::cout << "wrote " << out << ": " << net.junction_count() << " junctions, "
                  << net.road_count() << " roads, " << partition.region_count() << " regions\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
