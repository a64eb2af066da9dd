#pragma once

#include "climeco/table.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace climeco {

/// Region polygon in plain lon/lat: a set of closed rings (outer boundaries
/// and holes, even-odd rule). First vertex equals the last in each ring.
struct RegionShape {
    std::string region_id;
    std::string country_id;
    std::vector<std::vector<std::array<double, 2>>> rings;
};

/// Minimal GeoJSON subset: FeatureCollection of Polygon / MultiPolygon
/// features with region_id and country_id properties. Rejects degenerate
/// rings (fewer than 3 distinct vertices) and duplicate region ids.
std::vector<RegionShape> read_region_file(const std::string& path);

enum class PointLocation { outside, inside, boundary };

PointLocation locate_point(double lon, double lat, const RegionShape& shape);

struct CellSite {
    std::string cell_id;
    double lon = 0.0;
    double lat = 0.0;
};

/// Centroid rule: a cell maps to the region containing its centroid under the
/// even-odd rule; centroids on a boundary (or in overlapping regions) go to
/// the lexicographically smallest region_id. Cells inside no region stay
/// unmapped. Order of the inputs does not matter.
std::map<std::string, std::string> assign_cells(const std::vector<CellSite>& cells,
                                                const std::vector<RegionShape>& regions);

enum class AnnualStatistic { mean, sum };

struct AggregateLog {
    std::vector<std::string> warnings;
};

/// Area-weighted aggregation of a monthly cell table (cell_id, lon, lat,
/// area_km2, year, month, value) to region-years. Region-month value is the
/// area-weighted mean over mapped cells; the annual value is the mean
/// (temperature) or sum (precipitation) of the 12 region-months. Region-years
/// missing any month are dropped and logged; regions with no mapped cells are
/// logged once.
DataTable aggregate_climate(const DataTable& cells,
                            const std::map<std::string, std::string>& assignment,
                            AnnualStatistic statistic, const std::string& value_name,
                            AggregateLog* log = nullptr);

/// Population and urbanization per region-year from annual urban and rural
/// cell tables (cell_id, year, value) on the same cell index. Zero-population
/// region-years get urbanization 0 and a log entry; negative values are
/// rejected.
DataTable aggregate_population(const DataTable& urban_cells, const DataTable& rural_cells,
                               const std::map<std::string, std::string>& assignment,
                               AggregateLog* log = nullptr);

/// Left-joins additional region-year tables onto `base` on (region_id, year).
void merge_region_years(DataTable& base, const DataTable& extra);

} // namespace climeco
