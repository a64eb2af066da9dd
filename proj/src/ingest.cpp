#include "climeco/ingest.hpp"

#include "climeco/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace climeco {

namespace {

void validate_ring(const std::vector<std::array<double, 2>>& ring, const std::string& region_id) {
    if (ring.size() < 4 || ring.front() != ring.back())
        throw std::invalid_argument("region " + region_id + ": ring not closed");
    std::set<std::pair<double, double>> distinct;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) distinct.insert({ring[i][0], ring[i][1]});
    if (distinct.size() < 3)
        throw std::invalid_argument("region " + region_id +
                                    ": degenerate ring with fewer than 3 distinct vertices");
}

bool on_segment(double px, double py, const std::array<double, 2>& a,
                const std::array<double, 2>& b) {
    const double cross = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
    if (cross != 0.0) return false;
    const double dot = (px - a[0]) * (b[0] - a[0]) + (py - a[1]) * (b[1] - a[1]);
    const double len2 = (b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]);
    return dot >= 0.0 && dot <= len2;
}

std::vector<std::vector<std::array<double, 2>>> parse_polygon(const nlohmann::json& coords,
                                                              const std::string& region_id) {
    std::vector<std::vector<std::array<double, 2>>> rings;
    for (const auto& ring_json : coords) {
        std::vector<std::array<double, 2>> ring;
        for (const auto& vertex : ring_json) {
            if (!vertex.is_array() || vertex.size() < 2)
                throw std::invalid_argument("region " + region_id + ": malformed vertex");
            ring.push_back({vertex[0].get<double>(), vertex[1].get<double>()});
        }
        validate_ring(ring, region_id);
        rings.push_back(std::move(ring));
    }
    return rings;
}

} // namespace

std::vector<RegionShape> read_region_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open region file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("type", "") != "FeatureCollection")
        throw std::invalid_argument(path + ": expected a FeatureCollection");

    std::vector<RegionShape> regions;
    std::set<std::string> seen;
    for (const auto& feature : j.at("features")) {
        RegionShape shape;
        const auto& props = feature.at("properties");
        shape.region_id = props.at("region_id").get<std::string>();
        shape.country_id = props.at("country_id").get<std::string>();
        if (!seen.insert(shape.region_id).second)
            throw std::invalid_argument("duplicate region_id: " + shape.region_id);
        const auto& geometry = feature.at("geometry");
        const std::string type = geometry.at("type").get<std::string>();
        const auto& coords = geometry.at("coordinates");
        if (type == "Polygon") {
            shape.rings = parse_polygon(coords, shape.region_id);
        } else if (type == "MultiPolygon") {
            for (const auto& poly : coords) {
                auto rings = parse_polygon(poly, shape.region_id);
                for (auto& ring : rings) shape.rings.push_back(std::move(ring));
            }
        } else {
            throw std::invalid_argument("region " + shape.region_id +
                                        ": unsupported geometry type " + type);
        }
        regions.push_back(std::move(shape));
    }
    return regions;
}

PointLocation locate_point(double lon, double lat, const RegionShape& shape) {
    bool inside = false;
    for (const auto& ring : shape.rings) {
        for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
            const auto& a = ring[i];
            const auto& b = ring[i + 1];
            if (on_segment(lon, lat, a, b)) return PointLocation::boundary;
            // even-odd ray crossing, half-open in latitude
            if ((a[1] > lat) != (b[1] > lat)) {
                const double x_int = a[0] + (lat - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if (lon < x_int) inside = !inside;
            }
        }
    }
    return inside ? PointLocation::inside : PointLocation::outside;
}

std::map<std::string, std::string> assign_cells(const std::vector<CellSite>& cells,
                                                const std::vector<RegionShape>& regions) {
    for (const auto& region : regions)
        for (const auto& ring : region.rings) validate_ring(ring, region.region_id);

    // sorted region order makes the smallest-id tie-break a first-match rule
    std::vector<const RegionShape*> ordered;
    ordered.reserve(regions.size());
    for (const auto& r : regions) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const RegionShape* a, const RegionShape* b) { return a->region_id < b->region_id; });

    std::map<std::string, std::string> assignment;
    for (const auto& cell : cells) {
        for (const RegionShape* region : ordered) {
            if (locate_point(cell.lon, cell.lat, *region) != PointLocation::outside) {
                assignment.emplace(cell.cell_id, region->region_id);
                break;
            }
        }
    }
    return assignment;
}

DataTable aggregate_climate(const DataTable& cells,
                            const std::map<std::string, std::string>& assignment,
                            AnnualStatistic statistic, const std::string& value_name,
                            AggregateLog* log) {
    const auto& cell_id = cells.strings("cell_id");
    const auto& area = cells.numeric("area_km2");
    const auto& year = cells.numeric("year");
    const auto& month = cells.numeric("month");
    const auto& value = cells.numeric("value");

    struct MonthAcc {
        double weighted = 0.0;
        double area = 0.0;
    };
    // (region, year) -> per-month accumulators
    std::map<std::pair<std::string, int>, std::array<MonthAcc, 12>> acc;
    std::set<std::string> mapped_regions;
    for (std::size_t i = 0; i < cells.n_rows(); ++i) {
        const auto it = assignment.find(cell_id[i]);
        if (it == assignment.end()) continue;
        if (is_missing(year[i]) || is_missing(month[i]) || is_missing(value[i]) ||
            is_missing(area[i]))
            throw std::invalid_argument("cell table row " + std::to_string(i + 2) +
                                        " has missing fields");
        if (area[i] <= 0.0)
            throw std::invalid_argument("cell " + cell_id[i] + " has nonpositive area");
        const int m = static_cast<int>(month[i]);
        if (m < 1 || m > 12)
            throw std::invalid_argument("cell table row " + std::to_string(i + 2) +
                                        " has month outside 1..12");
        auto& slot = acc[{it->second, static_cast<int>(year[i])}][static_cast<std::size_t>(m - 1)];
        slot.weighted += area[i] * value[i];
        slot.area += area[i];
        mapped_regions.insert(it->second);
    }
    if (log) {
        std::set<std::string> all_regions;
        for (const auto& [cid, rid] : assignment) all_regions.insert(rid);
        for (const auto& rid : all_regions)
            if (!mapped_regions.count(rid))
                log->warnings.push_back("region " + rid + " has no contributing cells, excluded");
    }

    DataTable out;
    out.add_string("region_id");
    out.add_numeric("year");
    out.add_numeric(value_name);
    std::size_t rows = 0;
    for (const auto& [key, months] : acc) {
        bool complete = true;
        double total = 0.0;
        for (const auto& slot : months) {
            if (slot.area <= 0.0) {
                complete = false;
                break;
            }
            total += slot.weighted / slot.area;
        }
        if (!complete) {
            if (log)
                log->warnings.push_back("region " + key.first + " year " +
                                        std::to_string(key.second) +
                                        " missing months, dropped");
            continue;
        }
        out.resize_rows(rows + 1);
        out.strings("region_id")[rows] = key.first;
        out.numeric("year")[rows] = key.second;
        out.numeric(value_name)[rows] =
            statistic == AnnualStatistic::mean ? total / 12.0 : total;
        ++rows;
    }
    return out;
}

DataTable aggregate_population(const DataTable& urban_cells, const DataTable& rural_cells,
                               const std::map<std::string, std::string>& assignment,
                               AggregateLog* log) {
    auto accumulate = [&](const DataTable& table, const char* label) {
        const auto& cell_id = table.strings("cell_id");
        const auto& year = table.numeric("year");
        const auto& value = table.numeric("value");
        std::map<std::pair<std::string, int>, double> sums;
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            const auto it = assignment.find(cell_id[i]);
            if (it == assignment.end()) continue;
            if (is_missing(year[i]) || is_missing(value[i])) continue;
            if (value[i] < 0.0)
                throw std::invalid_argument(std::string(label) + " population negative at cell " +
                                            cell_id[i]);
            sums[{it->second, static_cast<int>(year[i])}] += value[i];
        }
        return sums;
    };
    const auto urban = accumulate(urban_cells, "urban");
    const auto rural = accumulate(rural_cells, "rural");

    std::set<std::pair<std::string, int>> keys;
    for (const auto& [key, v] : urban) keys.insert(key);
    for (const auto& [key, v] : rural) keys.insert(key);

    DataTable out;
    out.add_string("region_id");
    out.add_numeric("year");
    out.add_numeric("pop");
    out.add_numeric("urb");
    std::size_t rows = 0;
    for (const auto& key : keys) {
        const double u = urban.count(key) ? urban.at(key) : 0.0;
        const double r = rural.count(key) ? rural.at(key) : 0.0;
        const double total = u + r;
        out.resize_rows(rows + 1);
        out.strings("region_id")[rows] = key.first;
        out.numeric("year")[rows] = key.second;
        out.numeric("pop")[rows] = total;
        out.numeric("urb")[rows] = total > 0.0 ? u / total : 0.0;
        if (total <= 0.0 && log)
            log->warnings.push_back("region " + key.first + " year " + std::to_string(key.second) +
                                    " has zero population; urbanization set to 0");
        ++rows;
    }
    return out;
}

void merge_region_years(DataTable& base, const DataTable& extra) {
    const auto& base_region = base.strings("region_id");
    const auto& base_year = base.numeric("year");
    const auto& extra_region = extra.strings("region_id");
    const auto& extra_year = extra.numeric("year");
    std::map<std::pair<std::string, double>, std::size_t> lookup;
    for (std::size_t i = 0; i < extra.n_rows(); ++i)
        lookup[{extra_region[i], extra_year[i]}] = i;

    for (const auto& name : extra.column_names()) {
        if (name == "region_id" || name == "year") continue;
        if (extra.is_numeric(name)) {
            const auto& src = extra.numeric(name);
            auto& dst = base.has_column(name) ? base.numeric(name) : base.add_numeric(name);
            for (std::size_t i = 0; i < base.n_rows(); ++i) {
                const auto it = lookup.find({base_region[i], base_year[i]});
                if (it != lookup.end()) dst[i] = src[it->second];
            }
        } else {
            const auto& src = extra.strings(name);
            auto& dst = base.has_column(name) ? base.strings(name) : base.add_string(name);
            for (std::size_t i = 0; i < base.n_rows(); ++i) {
                const auto it = lookup.find({base_region[i], base_year[i]});
                if (it != lookup.end()) dst[i] = src[it->second];
            }
        }
    }
}

} // namespace climeco
