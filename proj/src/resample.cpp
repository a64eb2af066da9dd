#include "climeco/resample.hpp"

#include "climeco/panel.hpp"
#include "climeco/parallel.hpp"
#include "climeco/rng.hpp"
#include "climeco/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>

namespace climeco {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct CountryRows {
    std::string id;
    std::vector<std::size_t> rows;
};

std::vector<CountryRows> rows_by_country(const DataTable& panel, const std::string& column) {
    const auto& country = panel.strings(column);
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        if (country[i].empty()) continue;
        groups[country[i]].push_back(i);
    }
    std::vector<CountryRows> out;
    out.reserve(groups.size());
    for (auto& [id, rows] : groups) out.push_back({id, std::move(rows)});
    return out;
}

// Replicate panel for one draw: rows of each drawn country concatenated, with
// country and region ids tagged per draw so duplicates are distinct blocks.
DataTable replicate_panel(const DataTable& panel, const std::vector<CountryRows>& countries,
                          const std::vector<std::size_t>& draw) {
    std::vector<std::size_t> rows;
    for (std::size_t j : draw)
        rows.insert(rows.end(), countries[j].rows.begin(), countries[j].rows.end());
    DataTable rep = panel.select_rows(rows);
    auto& country = rep.strings("country_id");
    auto* region = rep.has_column("region_id") ? &rep.strings("region_id") : nullptr;
    std::size_t at = 0;
    for (std::size_t k = 0; k < draw.size(); ++k) {
        const std::string tag = "#" + std::to_string(k);
        for (std::size_t r = 0; r < countries[draw[k]].rows.size(); ++r, ++at) {
            country[at] += tag;
            if (region) (*region)[at] += tag;
        }
    }
    return rep;
}

} // namespace

Eigen::VectorXd BootstrapRun::column(const std::string& name) const {
    for (std::size_t j = 0; j < coef_names.size(); ++j)
        if (coef_names[j] == name) return draws.col(static_cast<Index>(j));
    throw std::out_of_range("no bootstrap coefficient named " + name);
}

double BootstrapRun::percentile(const std::string& name, double p) const {
    const VectorXd v = column(name);
    std::vector<double> sorted(v.data(), v.data() + v.size());
    std::sort(sorted.begin(), sorted.end());
    return quantile_sorted(std::span<const double>(sorted), p);
}

void BootstrapRun::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "replicate";
    for (const auto& name : coef_names) out << ',' << name;
    out << '\n';
    for (Index r = 0; r < draws.rows(); ++r) {
        out << replicate_ids[static_cast<std::size_t>(r)];
        for (Index c = 0; c < draws.cols(); ++c) out << ',' << format_double(draws(r, c));
        out << '\n';
    }
}

BootstrapRun BootstrapRun::read_csv(const std::string& path) {
    const DataTable table = DataTable::read_csv(path);
    BootstrapRun run;
    for (const auto& name : table.column_names())
        if (name != "replicate") run.coef_names.push_back(name);
    const auto n = static_cast<Index>(table.n_rows());
    run.draws.resize(n, static_cast<Index>(run.coef_names.size()));
    for (std::size_t j = 0; j < run.coef_names.size(); ++j) {
        const auto& col = table.numeric(run.coef_names[j]);
        for (Index i = 0; i < n; ++i) run.draws(i, static_cast<Index>(j)) = col[static_cast<std::size_t>(i)];
    }
    const auto& rep = table.numeric("replicate");
    run.replicate_ids.resize(table.n_rows());
    for (std::size_t i = 0; i < table.n_rows(); ++i)
        run.replicate_ids[i] = static_cast<int>(rep[i]);
    run.replicates = static_cast<int>(table.n_rows());
    return run;
}

nlohmann::json BootstrapRun::summary_json(const std::vector<double>& levels) const {
    nlohmann::json j;
    j["replicates_requested"] = replicates;
    j["replicates_used"] = draws.rows();
    j["failures"] = failures;
    j["seed"] = seed;
    j["panel_hash"] = panel_hash;
    nlohmann::json coefs;
    for (std::size_t c = 0; c < coef_names.size(); ++c) {
        const VectorXd v = draws.col(static_cast<Index>(c));
        std::vector<double> sorted(v.data(), v.data() + v.size());
        std::sort(sorted.begin(), sorted.end());
        nlohmann::json entry;
        entry["mean"] = v.size() ? v.mean() : kMissing;
        for (double p : levels)
            entry["p" + format_double(100.0 * p)] =
                sorted.empty() ? kMissing : quantile_sorted(std::span<const double>(sorted), p);
        coefs[coef_names[c]] = entry;
    }
    j["coefficients"] = coefs;
    if (!failure_notes.empty()) j["failure_notes"] = failure_notes;
    return j;
}

BootstrapRun block_bootstrap(const DataTable& panel, const RegressionSpec& spec,
                             const BootstrapOptions& options) {
    if (options.replicates < 1) throw std::invalid_argument("bootstrap needs B >= 1");
    const std::string country_column = spec.weights.country_column;
    const auto countries = rows_by_country(panel, country_column);
    if (countries.size() < 2) throw std::invalid_argument("bootstrap needs at least 2 countries");

    BootstrapRun run;
    run.replicates = options.replicates;
    run.seed = options.seed;
    run.panel_hash = panel.content_hash();

    // coefficient ordering fixed by the point estimate
    const FitResult point = fit(panel, spec, options.fit);
    run.coef_names = point.names;
    const auto n_coef = static_cast<Index>(point.names.size());

    const auto b_total = static_cast<std::size_t>(options.replicates);
    MatrixXd all(b_total, n_coef);
    std::vector<char> ok(b_total, 0);
    std::vector<std::string> notes(b_total);

    parallel_for(b_total, options.threads, [&](std::size_t b) {
        std::vector<std::size_t> draw(countries.size());
        if (options.identity_resample) {
            for (std::size_t j = 0; j < countries.size(); ++j) draw[j] = j;
        } else {
            auto rng = seeded_stream(options.seed, b);
            std::uniform_int_distribution<std::size_t> pick(0, countries.size() - 1);
            for (auto& d : draw) d = pick(rng);
        }
        try {
            DataTable rep = replicate_panel(panel, countries, draw);
            if (!spec.interaction_dummy.empty() && options.recompute_rich_poor &&
                rep.has_column(spec.interaction_dummy) && rep.has_column("gdppc") &&
                rep.has_column("year")) {
                rep.drop_column(spec.interaction_dummy);
                PanelLog log;
                classify_rich_poor(rep, &log);
                if (spec.interaction_dummy != "poor") {
                    // the re-derived dummy lands in "poor"; mirror it
                    auto& target = rep.add_numeric(spec.interaction_dummy);
                    target = rep.numeric("poor");
                }
            }
            FitOptions fo = options.fit;
            fo.compute_vcov = false;
            fo.keep_sample = false;
            const FitResult f = fit(rep, spec, fo);
            if (f.names != run.coef_names)
                throw std::runtime_error("replicate dropped " +
                                         std::to_string(run.coef_names.size() - f.names.size()) +
                                         " coefficient(s)");
            all.row(static_cast<Index>(b)) = f.beta.transpose();
            ok[b] = 1;
        } catch (const std::exception& e) {
            notes[b] = "replicate " + std::to_string(b) + ": " + e.what();
        }
    });

    std::size_t kept = 0;
    for (char c : ok) kept += c;
    run.draws.resize(static_cast<Index>(kept), n_coef);
    run.replicate_ids.reserve(kept);
    Index at = 0;
    for (std::size_t b = 0; b < b_total; ++b) {
        if (ok[b]) {
            run.draws.row(at++) = all.row(static_cast<Index>(b));
            run.replicate_ids.push_back(static_cast<int>(b));
        } else {
            ++run.failures;
            run.failure_notes.push_back(notes[b]);
        }
    }
    return run;
}

AdaptationDistribution adaptation_ratio(const BootstrapRun& fe_run, const BootstrapRun& ld_run,
                                        const Eigen::VectorXd& grid,
                                        const AdaptationOptions& options) {
    if (fe_run.replicates != ld_run.replicates)
        throw std::invalid_argument("adaptation_ratio: runs have different replicate counts");

    // pair replicates by id; failures in either run drop the pair
    std::map<int, Index> ld_row;
    for (std::size_t i = 0; i < ld_run.replicate_ids.size(); ++i)
        ld_row[ld_run.replicate_ids[i]] = static_cast<Index>(i);
    std::vector<std::pair<Index, Index>> pairs;
    for (std::size_t i = 0; i < fe_run.replicate_ids.size(); ++i) {
        auto it = ld_row.find(fe_run.replicate_ids[i]);
        if (it != ld_row.end()) pairs.emplace_back(static_cast<Index>(i), it->second);
    }
    if (pairs.empty()) throw std::invalid_argument("adaptation_ratio: no paired replicates");

    const VectorXd fe_lin = fe_run.column(options.variable);
    const VectorXd fe_quad = fe_run.column(options.variable + "_sq");
    const VectorXd ld_lin = ld_run.column(options.variable);
    const VectorXd ld_quad = ld_run.column(options.variable + "_sq");

    AdaptationDistribution out;
    out.grid = grid;
    out.levels = options.levels;
    out.quantiles.resize(grid.size(), static_cast<Index>(options.levels.size()));
    out.filtered.assign(static_cast<std::size_t>(grid.size()), 0);
    out.used.assign(static_cast<std::size_t>(grid.size()), 0);

    for (Index g = 0; g < grid.size(); ++g) {
        const double temp = grid[g];
        std::vector<double> ratios;
        ratios.reserve(pairs.size());
        int filtered = 0;
        for (const auto& [fe_i, ld_i] : pairs) {
            const double tau_fe = fe_lin[fe_i] + 2.0 * fe_quad[fe_i] * temp;
            const double phi = ld_lin[ld_i] + 2.0 * ld_quad[ld_i] * temp;
            if (std::abs(tau_fe) < options.fe_floor || !(std::abs(phi) < 1.0)) {
                ++filtered;
                continue;
            }
            const double tau_ld = annualize_decadal(phi, options.convention);
            ratios.push_back(1.0 - tau_ld / tau_fe);
        }
        out.filtered[static_cast<std::size_t>(g)] = filtered;
        out.used[static_cast<std::size_t>(g)] = static_cast<int>(ratios.size());
        std::sort(ratios.begin(), ratios.end());
        for (std::size_t l = 0; l < options.levels.size(); ++l)
            out.quantiles(g, static_cast<Index>(l)) =
                ratios.empty() ? kMissing
                               : quantile_sorted(std::span<const double>(ratios), options.levels[l]);
    }
    return out;
}

nlohmann::json AdaptationDistribution::to_json() const {
    nlohmann::json j;
    j["levels"] = levels;
    nlohmann::json points = nlohmann::json::array();
    for (Index g = 0; g < grid.size(); ++g) {
        nlohmann::json p;
        p["level"] = grid[g];
        for (std::size_t l = 0; l < levels.size(); ++l)
            p["q" + format_double(100.0 * levels[l])] = quantiles(g, static_cast<Index>(l));
        p["replicates_used"] = used[static_cast<std::size_t>(g)];
        p["replicates_filtered"] = filtered[static_cast<std::size_t>(g)];
        points.push_back(p);
    }
    j["points"] = points;
    return j;
}

} // namespace climeco
