#pragma once

#include "climeco/table.hpp"

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace climeco {

/// Region-by-year temperature paths for one climate simulation.
struct ClimateScenario {
    std::string id;
    std::vector<std::string> regions;
    int first_year = 0;
    int last_year = 0;
    Eigen::MatrixXd temperature; // regions x years

    int n_years() const { return last_year - first_year + 1; }
};

/// Growth damage function g(T) = quad*T^2 + lin*T for one bootstrap draw.
/// Long-difference draws are annualized with the signed tenth root before
/// differencing; g <= -1 on the evaluated path flags the draw.
struct DamageFunction {
    enum class Source { annual_panel, long_difference };
    Source source = Source::annual_panel;
    double quad = 0.0;
    double lin = 0.0;
};

/// Mean 2015-2019 temperature per region. Throws if any region misses a year,
/// listing the offenders.
std::map<std::string, double> baseline_climate(const DataTable& history,
                                               int first_year = 2015, int last_year = 2019);

struct RegionPath {
    Eigen::VectorXd psi; // cumulative log deviation per scenario year
    bool flagged = false; // annualization domain violation
};

/// Cumulative growth deviation: phi_t = g(T_t) - g(T_0), psi_t = sum phi_s.
RegionPath project_region(const DamageFunction& damage, const Eigen::VectorXd& temperature_path,
                          double baseline_temperature);

/// Uniform draws over the (bootstrap draw, scenario) grid, with replacement.
std::vector<std::pair<int, int>> sample_uncertainty(int n_draws, int n_scenarios, int n_samples,
                                                    std::uint64_t seed);

/// Per-year, per-region weights interpolated linearly between the years
/// provided in a socioeconomic table.
class WeightSeries {
public:
    WeightSeries(const DataTable& socio, const std::string& column);
    double at(const std::string& region, double year) const;
    bool has(const std::string& region) const;

private:
    std::map<std::string, std::map<double, double>> points_;
};

struct ProjectionOptions {
    int n_samples = 1000;
    std::uint64_t seed = 0;
    std::string weight_column = "pop"; // "pop" or "gdppc"
    int threads = 1;
};

struct ProjectionSummary {
    std::vector<std::string> groups;       // subcontinents plus "global" last
    std::vector<int> years;
    // per group: distribution of weighted percentage change over sampled pairs
    Eigen::MatrixXd group_mean;            // groups x years
    Eigen::MatrixXd group_sd;
    Eigen::MatrixXd group_p10;
    Eigen::MatrixXd group_p90;
    std::vector<std::string> regions;
    Eigen::VectorXd region_mean_2100;      // mean e^psi - 1 in the final year
    Eigen::MatrixXd global_by_pair;        // unflagged pairs x years, global value
    std::vector<std::string> warnings;
    int flagged_pairs = 0;
    int sampled_pairs = 0;

    nlohmann::json to_json() const;
    void write_group_paths_csv(const std::string& path) const;
    void write_region_table_csv(const std::string& path) const;
};

/// Full projection: sample (draw, scenario) pairs, accumulate psi paths per
/// region, aggregate to groups in level space, value = sum w (e^psi - 1)/sum w.
ProjectionSummary project(const std::vector<DamageFunction>& draws,
                          const std::vector<ClimateScenario>& scenarios,
                          const std::map<std::string, double>& baseline,
                          const WeightSeries& weights,
                          const std::map<std::string, std::string>& region_groups,
                          const ProjectionOptions& options);

/// Scenario CSV columns: scenario_id, region_id, year, t.
std::vector<ClimateScenario> read_scenarios(const DataTable& table);

} // namespace climeco
