#include "climeco/panel.hpp"

#include "climeco/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace climeco {

namespace {

// Row index of the region's previous time observation, -1 when absent. The
// time column must step by exactly 1 between adjacent observations.
std::vector<std::ptrdiff_t> lag_rows(const DataTable& panel, const std::string& time_column,
                                     PanelLog* log) {
    const auto order = panel.order_by({"region_id", time_column});
    const auto& region = panel.strings("region_id");
    const auto& time = panel.numeric(time_column);
    std::vector<std::ptrdiff_t> lag(panel.n_rows(), -1);
    for (std::size_t k = 1; k < order.size(); ++k) {
        const std::size_t cur = order[k];
        const std::size_t prev = order[k - 1];
        if (region[cur] != region[prev]) continue;
        const double gap = time[cur] - time[prev];
        if (gap == 0.0)
            throw std::invalid_argument("duplicate (region_id, " + time_column + ") at region " +
                                        region[cur]);
        if (gap == 1.0) {
            lag[cur] = static_cast<std::ptrdiff_t>(prev);
        } else if (log) {
            log->warn("gap of " + format_double(gap) + " in " + time_column + " for region " +
                      region[cur]);
        }
    }
    return lag;
}

void difference_terms(DataTable& panel, const std::string& var, LagForm form,
                      const std::vector<std::ptrdiff_t>& lag) {
    const auto& x = panel.numeric(var);
    const std::vector<double> values = x;
    auto& d = panel.add_numeric("d_" + var);
    auto& sq = panel.add_numeric(var + "_sq");
    auto* contemporaneous = (form == LagForm::contemporaneous || form == LagForm::all)
                                ? &panel.add_numeric("d_" + var + "_x_" + var)
                                : nullptr;
    auto* lagged = (form == LagForm::lagged || form == LagForm::all)
                       ? &panel.add_numeric("d_" + var + "_x_l" + var)
                       : nullptr;
    auto* summed = (form == LagForm::summed || form == LagForm::all)
                       ? &panel.add_numeric("d_" + var + "_x_" + var + "l" + var)
                       : nullptr;
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        const double cur = values[i];
        if (!is_missing(cur)) sq[i] = cur * cur;
        if (lag[i] < 0) continue;
        const double prev = values[static_cast<std::size_t>(lag[i])];
        if (is_missing(cur) || is_missing(prev)) continue;
        const double diff = cur - prev;
        d[i] = diff;
        if (contemporaneous) (*contemporaneous)[i] = diff * cur;
        if (lagged) (*lagged)[i] = diff * prev;
        if (summed) (*summed)[i] = diff * (cur + prev);
    }
}

bool is_derived_column(const std::string& name) {
    return name.rfind("d_", 0) == 0 || name.rfind("bin_t_", 0) == 0 ||
           name.rfind("bin_p_", 0) == 0 || name.rfind("w_", 0) == 0 || name == "poor";
}

} // namespace

void growth_rates(DataTable& panel, PanelLog* log, const std::string& value_column,
                  const std::string& time_column) {
    const auto lag = lag_rows(panel, time_column, log);
    const auto& y = panel.numeric(value_column);
    const std::vector<double> values = y;
    const auto& region = panel.strings("region_id");
    auto& g = panel.add_numeric(columns::growth);
    auto usable = [&](std::size_t i) {
        if (is_missing(values[i])) return false;
        if (values[i] <= 0.0) {
            if (log)
                log->warn("nonpositive " + value_column + " rejected for region " + region[i]);
            return false;
        }
        return true;
    };
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        if (lag[i] < 0) continue;
        const auto prev = static_cast<std::size_t>(lag[i]);
        if (usable(i) && usable(prev)) g[i] = std::log(values[i]) - std::log(values[prev]);
    }
}

void weather_terms(DataTable& panel, LagForm form, const std::string& time_column) {
    const auto lag = lag_rows(panel, time_column, nullptr);
    difference_terms(panel, "t", form, lag);
    difference_terms(panel, "p", form, lag);
}

DataTable period_average(const DataTable& panel, int m, PanelLog* log) {
    if (m < 2) throw std::invalid_argument("period length must be at least 2 years");
    const auto& year = panel.numeric("year");
    const auto& region = panel.strings("region_id");
    double y0 = kMissing, y1 = kMissing;
    for (double y : year) {
        if (is_missing(y)) continue;
        if (is_missing(y0) || y < y0) y0 = y;
        if (is_missing(y1) || y > y1) y1 = y;
    }
    if (is_missing(y0)) throw std::invalid_argument("panel has no years");
    const int n_periods = static_cast<int>((y1 - y0 + 1.0)) / m;
    if (n_periods < 1) throw std::invalid_argument("panel spans less than one period");

    std::vector<std::string> mean_columns;
    std::vector<std::string> id_columns;
    for (const auto& name : panel.column_names()) {
        if (name == "year" || is_derived_column(name)) continue;
        if (panel.is_numeric(name)) mean_columns.push_back(name);
        else id_columns.push_back(name);
    }

    // group rows by (region, period)
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        if (is_missing(year[i]) || region[i].empty()) continue;
        const int offset = static_cast<int>(year[i] - y0);
        const int p = offset / m;
        if (p < 0 || p >= n_periods) continue;
        groups[{region[i], p}].push_back(i);
    }

    DataTable out;
    for (const auto& name : id_columns) out.add_string(name);
    out.add_numeric("period");
    out.add_numeric("start_year");
    out.add_numeric("m");
    for (const auto& name : mean_columns) out.add_numeric(name);

    std::size_t rows = 0;
    for (const auto& [key, members] : groups) {
        if (static_cast<int>(members.size()) != m) {
            if (log)
                log->warn("region " + key.first + " period " + std::to_string(key.second) +
                          " incomplete (" + std::to_string(members.size()) + "/" +
                          std::to_string(m) + " years), dropped");
            continue;
        }
        out.resize_rows(rows + 1);
        for (const auto& name : id_columns)
            out.strings(name)[rows] = panel.strings(name)[members.front()];
        out.numeric("period")[rows] = key.second;
        out.numeric("start_year")[rows] = y0 + key.second * m;
        out.numeric("m")[rows] = m;
        for (const auto& name : mean_columns) {
            const auto& src = panel.numeric(name);
            double sum = 0.0;
            bool complete = true;
            for (std::size_t i : members) {
                if (is_missing(src[i])) {
                    complete = false;
                    break;
                }
                sum += src[i];
            }
            out.numeric(name)[rows] = complete ? sum / m : kMissing;
        }
        ++rows;
    }
    out.sort_by({"region_id", "period"});

    // period growth from the period means of gdppc
    if (out.has_column("gdppc")) growth_rates(out, log, "gdppc", "period");
    return out;
}

void long_difference(DataTable& period_panel, LagForm form) {
    weather_terms(period_panel, form, "period");
}

int temperature_bin(double t) {
    if (t < 0.0) return 0;
    if (t >= 27.0) return 11;
    return 1 + static_cast<int>(t / 3.0);
}

int precipitation_bin(double p) {
    if (p < 0.0) throw std::invalid_argument("negative precipitation");
    if (p >= 2.2) return 11;
    return static_cast<int>(p / 0.2);
}

void bin_indicators(DataTable& panel) {
    const auto& t = panel.numeric("t");
    const auto& p = panel.numeric("p");
    std::vector<DataTable::NumericColumn*> tb(12), pb(12);
    char name[16];
    for (int b = 0; b < 12; ++b) {
        std::snprintf(name, sizeof(name), "bin_t_%02d", b);
        tb[static_cast<std::size_t>(b)] = &panel.add_numeric(name);
        std::snprintf(name, sizeof(name), "bin_p_%02d", b);
        pb[static_cast<std::size_t>(b)] = &panel.add_numeric(name);
    }
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        if (!is_missing(t[i])) {
            for (int b = 0; b < 12; ++b) (*tb[static_cast<std::size_t>(b)])[i] = 0.0;
            (*tb[static_cast<std::size_t>(temperature_bin(t[i]))])[i] = 1.0;
        }
        if (!is_missing(p[i])) {
            for (int b = 0; b < 12; ++b) (*pb[static_cast<std::size_t>(b)])[i] = 0.0;
            (*pb[static_cast<std::size_t>(precipitation_bin(p[i]))])[i] = 1.0;
        }
    }
}

void compute_weights(DataTable& panel, WeightScheme scheme, PanelLog* log) {
    if (scheme == WeightScheme::population) {
        const auto& pop = panel.numeric("pop");
        auto& w = panel.add_numeric("w_pop");
        for (std::size_t i = 0; i < panel.n_rows(); ++i) {
            if (is_missing(pop[i])) continue;
            if (pop[i] < 0.0) throw std::invalid_argument("negative population weight");
            w[i] = pop[i];
            if (pop[i] == 0.0 && log)
                log->warn("zero population weight for region " + panel.strings("region_id")[i]);
        }
        return;
    }
    const std::string time_column = panel.has_column("year") ? "year" : "period";
    const auto& country = panel.strings("country_id");
    const auto& time = panel.numeric(time_column);
    std::map<std::pair<std::string, double>, double> counts;
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        if (country[i].empty() || is_missing(time[i]))
            throw std::invalid_argument("region weights need country_id and " + time_column);
        counts[{country[i], time[i]}] += 1.0;
    }
    auto& w = panel.add_numeric("w_region");
    for (std::size_t i = 0; i < panel.n_rows(); ++i)
        w[i] = 1.0 / counts[{country[i], time[i]}];
}

void classify_rich_poor(DataTable& panel, PanelLog* log, int period_years) {
    const auto& year = panel.numeric("year");
    const auto& region = panel.strings("region_id");
    const auto& country = panel.strings("country_id");
    const auto& gdppc = panel.numeric("gdppc");
    double y0 = kMissing;
    for (double y : year)
        if (!is_missing(y) && (is_missing(y0) || y < y0)) y0 = y;
    if (is_missing(y0)) throw std::invalid_argument("panel has no years");

    // period-average gdppc per region within each classification block
    struct Cell {
        double sum = 0.0;
        long count = 0;
        std::string country;
    };
    std::map<std::pair<int, std::string>, Cell> cells;
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        if (is_missing(year[i]) || region[i].empty() || is_missing(gdppc[i])) continue;
        const int p = static_cast<int>(year[i] - y0) / period_years;
        auto& cell = cells[{p, region[i]}];
        cell.sum += gdppc[i];
        cell.count += 1;
        cell.country = country[i];
    }

    // region weighting inside each period: 1 / (regions of the country present)
    std::map<std::pair<int, std::string>, double> country_regions;
    for (const auto& [key, cell] : cells) country_regions[{key.first, cell.country}] += 1.0;

    std::map<int, double> medians;
    {
        std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_period;
        for (const auto& [key, cell] : cells) {
            by_period[key.first].first.push_back(cell.sum / static_cast<double>(cell.count));
            by_period[key.first].second.push_back(1.0 /
                                                  country_regions[{key.first, cell.country}]);
        }
        for (auto& [p, vw] : by_period) {
            medians[p] = weighted_median(vw.first, vw.second);
            if (log)
                log->warn("classification period " + std::to_string(p) + " median gdppc " +
                          format_double(medians[p]) + " over " +
                          std::to_string(vw.first.size()) + " regions");
        }
    }

    auto& poor = panel.add_numeric("poor");
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        if (is_missing(year[i]) || region[i].empty()) continue;
        const int p = static_cast<int>(year[i] - y0) / period_years;
        auto it = cells.find({p, region[i]});
        if (it == cells.end()) continue;
        const double avg = it->second.sum / static_cast<double>(it->second.count);
        poor[i] = avg <= medians[p] ? 1.0 : 0.0;
    }
}

void build_panel_columns(DataTable& panel, const BuildPanelOptions& options, PanelLog* log) {
    panel.sort_by({"region_id", "year"});
    growth_rates(panel, log);
    weather_terms(panel, options.lag_form);
    if (options.bins) bin_indicators(panel);
    if (options.weights) {
        compute_weights(panel, WeightScheme::region, log);
        if (panel.has_column("pop")) compute_weights(panel, WeightScheme::population, log);
    }
    if (options.rich_poor) classify_rich_poor(panel, log);
}

} // namespace climeco
