#pragma once

#include "climeco/table.hpp"

#include <string>
#include <vector>

namespace climeco {

/// Column dictionary for derived panel variables. The annual and the period
/// panel share the same derived names so one regression spec fits both:
///   d_lny       log growth of gdppc (annual) or of the period mean (period)
///   d_t, d_p    first differences of t / p over the panel's time index
///   d_t_x_t     difference times contemporaneous level
///   d_t_x_lt    difference times lagged level
///   d_t_x_tlt   difference times (level + lagged level)
///   t_sq, p_sq  squared levels
///   bin_t_00..bin_t_11, bin_p_00..bin_p_11   bin indicators
///   w_region, w_pop                          weight columns
///   poor        1 below or at the weighted median, 0 above
namespace columns {
inline constexpr const char* growth = "d_lny";
}

enum class LagForm { contemporaneous, lagged, summed, all };

struct PanelLog {
    std::vector<std::string> warnings;
    void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

/// d_lny = ln(y_t) - ln(y_{t-1}) within region over consecutive time values.
/// Nonpositive gdppc rows are rejected: their growth entries stay missing and
/// a warning is recorded.
void growth_rates(DataTable& panel, PanelLog* log = nullptr,
                  const std::string& value_column = "gdppc",
                  const std::string& time_column = "year");

/// Differences, interactions and squared levels for t and p.
void weather_terms(DataTable& panel, LagForm form = LagForm::all,
                   const std::string& time_column = "year");

/// Collapses the annual panel to non-overlapping m-year period means starting
/// at the panel's first year; trailing years that do not fill a period are
/// left out. Adds period growth d_lny from the period means of gdppc.
/// Region-periods missing any year are dropped and logged.
DataTable period_average(const DataTable& panel, int m, PanelLog* log = nullptr);

/// Interperiod differences on the period panel (n = 1): same construction as
/// weather_terms with the period index as the time variable.
void long_difference(DataTable& period_panel, LagForm form = LagForm::all);

/// Temperature bins: bin 0 for t < 0, interior 3-degree bins over [0, 27),
/// top bin 11 for t >= 27. Precipitation bins: 0.2 m bins over [0, 2.2), top
/// bin 11 for p >= 2.2. Twelve indicator columns per variable; the
/// temperature layout leaves bin_t_10 structurally empty.
void bin_indicators(DataTable& panel);
int temperature_bin(double t);
int precipitation_bin(double p);

enum class WeightScheme { region, population };

/// w_region = 1 / (regions of the country present in that year); w_pop = pop.
void compute_weights(DataTable& panel, WeightScheme scheme, PanelLog* log = nullptr);

/// Rich/poor dummy per 10-year classification period: regions at or below the
/// region-weighted median of period-average gdppc get poor = 1, above get 0.
void classify_rich_poor(DataTable& panel, PanelLog* log = nullptr, int period_years = 10);

/// Applies the full derived-column battery used by the pipeline.
struct BuildPanelOptions {
    LagForm lag_form = LagForm::all;
    bool bins = true;
    bool rich_poor = true;
    bool weights = true;
};
void build_panel_columns(DataTable& panel, const BuildPanelOptions& options,
                         PanelLog* log = nullptr);

} // namespace climeco
