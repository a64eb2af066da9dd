#include "climeco/project.hpp"

#include "climeco/parallel.hpp"
#include "climeco/rng.hpp"
#include "climeco/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace climeco {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double damage_value(const DamageFunction& d, double t) {
    return d.quad * t * t + d.lin * t;
}

} // namespace

std::map<std::string, double> baseline_climate(const DataTable& history, int first_year,
                                               int last_year) {
    const auto& region = history.strings("region_id");
    const auto& year = history.numeric("year");
    const auto& t = history.numeric("t");
    std::map<std::string, std::pair<double, int>> acc;
    std::map<std::string, std::set<int>> seen;
    for (std::size_t i = 0; i < history.n_rows(); ++i) {
        if (region[i].empty() || is_missing(year[i]) || is_missing(t[i])) continue;
        const int y = static_cast<int>(year[i]);
        if (y < first_year || y > last_year) continue;
        acc[region[i]].first += t[i];
        acc[region[i]].second += 1;
        seen[region[i]].insert(y);
    }
    const int span = last_year - first_year + 1;
    std::vector<std::string> incomplete;
    std::map<std::string, double> out;
    for (const auto& [id, sums] : acc) {
        if (static_cast<int>(seen[id].size()) != span) {
            incomplete.push_back(id);
            continue;
        }
        out[id] = sums.first / sums.second;
    }
    if (!incomplete.empty()) {
        std::ostringstream msg;
        msg << "baseline_climate: missing years for " << incomplete.size() << " region(s):";
        for (std::size_t i = 0; i < std::min<std::size_t>(incomplete.size(), 8); ++i)
            msg << ' ' << incomplete[i];
        if (incomplete.size() > 8) msg << " ...";
        throw std::invalid_argument(msg.str());
    }
    if (out.empty()) throw std::invalid_argument("baseline_climate: no regions in window");
    return out;
}

RegionPath project_region(const DamageFunction& damage, const Eigen::VectorXd& temperature_path,
                          double baseline_temperature) {
    RegionPath path;
    path.psi.resize(temperature_path.size());
    double base = damage_value(damage, baseline_temperature);
    if (damage.source == DamageFunction::Source::long_difference) {
        if (base <= -1.0) {
            path.flagged = true;
            path.psi.setConstant(kMissing);
            return path;
        }
        base = std::pow(1.0 + base, 0.1) - 1.0;
    }
    double cum = 0.0;
    for (Index s = 0; s < temperature_path.size(); ++s) {
        double g = damage_value(damage, temperature_path[s]);
        if (damage.source == DamageFunction::Source::long_difference) {
            if (g <= -1.0) {
                path.flagged = true;
                path.psi.setConstant(kMissing);
                return path;
            }
            g = std::pow(1.0 + g, 0.1) - 1.0;
        }
        cum += g - base;
        path.psi[s] = cum;
    }
    return path;
}

std::vector<std::pair<int, int>> sample_uncertainty(int n_draws, int n_scenarios, int n_samples,
                                                    std::uint64_t seed) {
    if (n_draws < 1 || n_scenarios < 1)
        throw std::invalid_argument("sample_uncertainty: need at least one draw and scenario");
    auto rng = seeded_stream(seed, 0);
    std::uniform_int_distribution<long> pick(0, static_cast<long>(n_draws) * n_scenarios - 1);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) {
        const long idx = pick(rng);
        pairs.emplace_back(static_cast<int>(idx / n_scenarios),
                           static_cast<int>(idx % n_scenarios));
    }
    return pairs;
}

WeightSeries::WeightSeries(const DataTable& socio, const std::string& column) {
    const auto& region = socio.strings("region_id");
    const auto& year = socio.numeric("year");
    const auto& value = socio.numeric(column);
    for (std::size_t i = 0; i < socio.n_rows(); ++i) {
        if (region[i].empty() || is_missing(year[i]) || is_missing(value[i])) continue;
        points_[region[i]][year[i]] = value[i];
    }
    if (points_.empty())
        throw std::invalid_argument("socioeconomic table has no usable rows for " + column);
}

bool WeightSeries::has(const std::string& region) const { return points_.count(region) != 0; }

double WeightSeries::at(const std::string& region, double year) const {
    const auto it = points_.find(region);
    if (it == points_.end()) throw std::out_of_range("no weight series for region " + region);
    const auto& series = it->second;
    auto hi = series.lower_bound(year);
    if (hi == series.end()) return std::prev(series.end())->second; // flat beyond last year
    if (hi->first == year || hi == series.begin()) return hi->second;
    const auto lo = std::prev(hi);
    const double f = (year - lo->first) / (hi->first - lo->first);
    return (1.0 - f) * lo->second + f * hi->second;
}

std::vector<ClimateScenario> read_scenarios(const DataTable& table) {
    const auto& sid = table.strings("scenario_id");
    const auto& region = table.strings("region_id");
    const auto& year = table.numeric("year");
    const auto& t = table.numeric("t");

    std::map<std::string, std::map<std::string, std::map<int, double>>> nested;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        if (sid[i].empty() || region[i].empty() || is_missing(year[i]) || is_missing(t[i]))
            throw std::invalid_argument("scenario table has an incomplete row " +
                                        std::to_string(i + 2));
        nested[sid[i]][region[i]][static_cast<int>(year[i])] = t[i];
    }
    if (nested.empty()) throw std::invalid_argument("scenario table is empty");

    std::vector<ClimateScenario> out;
    std::vector<std::string> reference_regions;
    for (const auto& [id, regions] : nested) {
        ClimateScenario sc;
        sc.id = id;
        int y0 = 0, y1 = 0;
        bool first_region = true;
        for (const auto& [rid, series] : regions) {
            sc.regions.push_back(rid);
            if (first_region) {
                y0 = series.begin()->first;
                y1 = series.rbegin()->first;
                first_region = false;
            }
        }
        sc.first_year = y0;
        sc.last_year = y1;
        sc.temperature.resize(static_cast<Index>(sc.regions.size()), y1 - y0 + 1);
        Index r = 0;
        for (const auto& [rid, series] : regions) {
            if (series.begin()->first != y0 || series.rbegin()->first != y1 ||
                static_cast<int>(series.size()) != y1 - y0 + 1)
                throw std::invalid_argument("scenario " + id + " region " + rid +
                                            " has a non-contiguous year path");
            for (const auto& [y, temp] : series) sc.temperature(r, y - y0) = temp;
            ++r;
        }
        if (reference_regions.empty()) reference_regions = sc.regions;
        else if (reference_regions != sc.regions)
            throw std::invalid_argument("scenario " + id + " covers a different region set");
        out.push_back(std::move(sc));
    }
    for (std::size_t s = 1; s < out.size(); ++s)
        if (out[s].first_year != out[0].first_year || out[s].last_year != out[0].last_year)
            throw std::invalid_argument("scenarios cover different year ranges");
    return out;
}

ProjectionSummary project(const std::vector<DamageFunction>& draws,
                          const std::vector<ClimateScenario>& scenarios,
                          const std::map<std::string, double>& baseline,
                          const WeightSeries& weights,
                          const std::map<std::string, std::string>& region_groups,
                          const ProjectionOptions& options) {
    if (draws.empty()) throw std::invalid_argument("project: no damage-function draws");
    if (scenarios.empty()) throw std::invalid_argument("project: no scenarios");

    const auto& regions = scenarios.front().regions;
    const int y0 = scenarios.front().first_year;
    const int n_years = scenarios.front().n_years();

    {
        std::vector<std::string> missing;
        for (const auto& r : regions)
            if (!baseline.count(r)) missing.push_back(r);
        if (!missing.empty())
            throw std::invalid_argument("project: " + std::to_string(missing.size()) +
                                        " scenario region(s) missing a baseline, first: " +
                                        missing.front());
    }

    ProjectionSummary summary;
    summary.regions = regions;
    for (int y = 0; y < n_years; ++y) summary.years.push_back(y0 + y);

    // region weights per year, fixed across pairs; regions without a weight
    // series are excluded from aggregation with a warning
    const auto n_regions = static_cast<Index>(regions.size());
    MatrixXd weight(n_regions, n_years);
    std::vector<char> weighted(regions.size(), 1);
    long excluded = 0;
    for (Index r = 0; r < n_regions; ++r) {
        if (!weights.has(regions[static_cast<std::size_t>(r)])) {
            weighted[static_cast<std::size_t>(r)] = 0;
            weight.row(r).setZero();
            ++excluded;
            continue;
        }
        for (int y = 0; y < n_years; ++y)
            weight(r, y) = weights.at(regions[static_cast<std::size_t>(r)], y0 + y);
    }

    // group bookkeeping: named groups first, "global" last
    std::set<std::string> group_names;
    for (const auto& r : regions) {
        auto it = region_groups.find(r);
        if (it != region_groups.end()) group_names.insert(it->second);
    }
    summary.groups.assign(group_names.begin(), group_names.end());
    summary.groups.push_back("global");
    const auto n_groups = static_cast<Index>(summary.groups.size());
    std::vector<int> group_of(regions.size(), -1);
    for (std::size_t r = 0; r < regions.size(); ++r) {
        auto it = region_groups.find(regions[r]);
        if (it != region_groups.end())
            group_of[r] = static_cast<int>(
                std::distance(summary.groups.begin(),
                              std::find(summary.groups.begin(), summary.groups.end(), it->second)));
    }

    const auto pairs = sample_uncertainty(static_cast<int>(draws.size()),
                                          static_cast<int>(scenarios.size()), options.n_samples,
                                          options.seed);
    const auto n_pairs = static_cast<Index>(pairs.size());
    summary.sampled_pairs = static_cast<int>(pairs.size());

    // per-pair group paths and per-pair final-year region changes
    std::vector<MatrixXd> group_value(static_cast<std::size_t>(n_groups));
    for (auto& m : group_value) m.setConstant(n_pairs, n_years, kMissing);
    MatrixXd region_final(n_pairs, n_regions);
    std::vector<char> pair_ok(pairs.size(), 0);

    parallel_for(pairs.size(), options.threads, [&](std::size_t k) {
        const auto& [b, c] = pairs[k];
        const DamageFunction& damage = draws[static_cast<std::size_t>(b)];
        const ClimateScenario& scenario = scenarios[static_cast<std::size_t>(c)];
        MatrixXd level(n_regions, n_years); // e^psi - 1
        for (Index r = 0; r < n_regions; ++r) {
            const RegionPath path =
                project_region(damage, scenario.temperature.row(r).transpose(),
                               baseline.at(regions[static_cast<std::size_t>(r)]));
            if (path.flagged) return; // pair stays flagged
            level.row(r) = (path.psi.array().exp() - 1.0).transpose();
        }
        for (Index g = 0; g < n_groups; ++g) {
            const bool global = g == n_groups - 1;
            for (int y = 0; y < n_years; ++y) {
                double num = 0.0, den = 0.0;
                for (Index r = 0; r < n_regions; ++r) {
                    if (!weighted[static_cast<std::size_t>(r)]) continue;
                    if (!global && group_of[static_cast<std::size_t>(r)] != g) continue;
                    num += weight(r, y) * level(r, y);
                    den += weight(r, y);
                }
                group_value[static_cast<std::size_t>(g)](static_cast<Index>(k), y) =
                    den > 0.0 ? num / den : kMissing;
            }
        }
        region_final.row(static_cast<Index>(k)) = level.col(n_years - 1).transpose();
        pair_ok[k] = 1;
    });

    std::vector<Index> ok_rows;
    for (std::size_t k = 0; k < pairs.size(); ++k)
        if (pair_ok[k]) ok_rows.push_back(static_cast<Index>(k));
    summary.flagged_pairs = static_cast<int>(pairs.size() - ok_rows.size());
    if (ok_rows.empty()) throw std::runtime_error("project: every sampled pair was flagged");

    summary.group_mean.resize(n_groups, n_years);
    summary.group_sd.resize(n_groups, n_years);
    summary.group_p10.resize(n_groups, n_years);
    summary.group_p90.resize(n_groups, n_years);
    std::vector<double> buf(ok_rows.size());
    for (Index g = 0; g < n_groups; ++g) {
        for (int y = 0; y < n_years; ++y) {
            double sum = 0.0;
            for (std::size_t i = 0; i < ok_rows.size(); ++i) {
                buf[i] = group_value[static_cast<std::size_t>(g)](ok_rows[i], y);
                sum += buf[i];
            }
            const double mean = sum / static_cast<double>(buf.size());
            double var = 0.0;
            for (double v : buf) var += (v - mean) * (v - mean);
            var = buf.size() > 1 ? var / static_cast<double>(buf.size() - 1) : 0.0;
            std::sort(buf.begin(), buf.end());
            summary.group_mean(g, y) = mean;
            summary.group_sd(g, y) = std::sqrt(var);
            summary.group_p10(g, y) = quantile_sorted(std::span<const double>(buf), 0.10);
            summary.group_p90(g, y) = quantile_sorted(std::span<const double>(buf), 0.90);
        }
    }
    summary.region_mean_2100.resize(n_regions);
    for (Index r = 0; r < n_regions; ++r) {
        double sum = 0.0;
        for (Index i : ok_rows) sum += region_final(i, r);
        summary.region_mean_2100[r] = sum / static_cast<double>(ok_rows.size());
    }

    // per-pair global path retained for downstream percentile recomputation
    summary.global_by_pair.resize(static_cast<Index>(ok_rows.size()), n_years);
    for (std::size_t i = 0; i < ok_rows.size(); ++i)
        summary.global_by_pair.row(static_cast<Index>(i)) =
            group_value[static_cast<std::size_t>(n_groups - 1)].row(ok_rows[i]);
    if (excluded > 0)
        summary.warnings.push_back(std::to_string(excluded) +
                                   " region(s) had no weight series and were excluded");
    return summary;
}

nlohmann::json ProjectionSummary::to_json() const {
    nlohmann::json j;
    j["sampled_pairs"] = sampled_pairs;
    j["flagged_pairs"] = flagged_pairs;
    j["years"] = years;
    nlohmann::json groups_json;
    const int final_col = static_cast<int>(years.size()) - 1;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto gi = static_cast<Index>(g);
        groups_json[groups[g]] = {{"mean", group_mean(gi, final_col)},
                                  {"sd", group_sd(gi, final_col)},
                                  {"p10", group_p10(gi, final_col)},
                                  {"p90", group_p90(gi, final_col)}};
    }
    j["final_year"] = years.empty() ? 0 : years.back();
    j["groups"] = groups_json;
    if (!warnings.empty()) j["warnings"] = warnings;
    return j;
}

void ProjectionSummary::write_group_paths_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "group,year,mean,sd,p10,p90\n";
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto gi = static_cast<Index>(g);
        for (std::size_t y = 0; y < years.size(); ++y) {
            const auto yi = static_cast<int>(y);
            out << groups[g] << ',' << years[y] << ',' << format_double(group_mean(gi, yi)) << ','
                << format_double(group_sd(gi, yi)) << ',' << format_double(group_p10(gi, yi))
                << ',' << format_double(group_p90(gi, yi)) << '\n';
        }
    }
}

void ProjectionSummary::write_region_table_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "region_id,change_mean\n";
    for (std::size_t r = 0; r < regions.size(); ++r)
        out << regions[r] << ',' << format_double(region_mean_2100[static_cast<Index>(r)]) << '\n';
}

} // namespace climeco
