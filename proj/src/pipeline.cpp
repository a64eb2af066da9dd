#include "climeco/pipeline.hpp"

#include "climeco/diagnostics.hpp"
#include "climeco/estimator.hpp"
#include "climeco/inference.hpp"
#include "climeco/ingest.hpp"
#include "climeco/panel.hpp"
#include "climeco/project.hpp"
#include "climeco/resample.hpp"
#include "climeco/stats.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace climeco {

namespace fs = std::filesystem;

std::string expand_path(const std::string& path) {
    std::string out;
    for (std::size_t i = 0; i < path.size();) {
        if (path[i] == '$' && i + 1 < path.size() && path[i + 1] == '{') {
            const auto end = path.find('}', i + 2);
            if (end == std::string::npos) throw ConfigError("unterminated ${ in path: " + path);
            const std::string name = path.substr(i + 2, end - i - 2);
            const char* value = std::getenv(name.c_str());
            if (!value) throw ConfigError("environment variable not set: " + name);
            out += value;
            i = end + 1;
        } else {
            out += path[i++];
        }
    }
    return out;
}

namespace {

// Writes every output through a temporary and renames on commit, so failed
// stages never leave partial outputs behind.
class StagedOutputs {
public:
    ~StagedOutputs() {
        if (committed_) return;
        for (const auto& [tmp, final_path] : staged_) {
            std::error_code ec;
            fs::remove(tmp, ec);
        }
    }
    std::string stage(const std::string& final_path) {
        const std::string tmp = final_path + ".tmp" + std::to_string(staged_.size());
        staged_.emplace_back(tmp, final_path);
        return tmp;
    }
    void commit() {
        for (const auto& [tmp, final_path] : staged_) fs::rename(tmp, final_path);
        committed_ = true;
    }

private:
    std::vector<std::pair<std::string, std::string>> staged_;
    bool committed_ = false;
};

class Config {
public:
    Config(nlohmann::json j, std::string stage) : j_(std::move(j)), stage_(std::move(stage)) {
        if (!j_.is_object()) throw ConfigError("config root must be a JSON object");
    }

    std::string input_path(const std::string& name, bool required = true) const {
        return path_field("inputs", name, required, true);
    }
    std::string output_path(const std::string& name, bool required = true) const {
        return path_field("outputs", name, required, false);
    }
    bool has_input(const std::string& name) const {
        return j_.contains("inputs") && j_.at("inputs").contains(name);
    }
    bool has_output(const std::string& name) const {
        return j_.contains("outputs") && j_.at("outputs").contains(name);
    }

    const nlohmann::json& options() const {
        static const nlohmann::json empty = nlohmann::json::object();
        return j_.contains("options") ? j_.at("options") : empty;
    }
    template <typename T>
    T option(const std::string& name, const T& fallback) const {
        try {
            return options().value(name, fallback);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("options." + name + ": " + e.what());
        }
    }
    bool has_option(const std::string& name) const { return options().contains(name); }

    std::uint64_t seed(bool required) const {
        if (!j_.contains("seed")) {
            if (required) throw ConfigError("seed: required for stochastic stage " + stage_);
            return 0;
        }
        if (!j_.at("seed").is_number_integer()) throw ConfigError("seed: must be an integer");
        return j_.at("seed").get<std::uint64_t>();
    }
    int threads() const {
        const int t = j_.value("threads", 1);
        if (t < 1) throw ConfigError("threads: must be >= 1");
        return t;
    }
    const nlohmann::json& raw() const { return j_; }

    std::map<std::string, std::string> input_paths() const {
        std::map<std::string, std::string> out;
        if (!j_.contains("inputs")) return out;
        for (const auto& [name, value] : j_.at("inputs").items())
            out[name] = expand_path(value.get<std::string>());
        return out;
    }

private:
    std::string path_field(const char* section, const std::string& name, bool required,
                           bool must_exist) const {
        if (!j_.contains(section) || !j_.at(section).contains(name)) {
            if (!required) return {};
            throw ConfigError(std::string(section) + "." + name + ": required for stage " + stage_);
        }
        const auto& v = j_.at(section).at(name);
        if (!v.is_string())
            throw ConfigError(std::string(section) + "." + name + ": must be a string path");
        const std::string path = expand_path(v.get<std::string>());
        if (must_exist && !fs::exists(path))
            throw ConfigError(std::string(section) + "." + name + ": file does not exist: " + path);
        return path;
    }

    nlohmann::json j_;
    std::string stage_;
};

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

RegressionSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open spec file: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return RegressionSpec::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("spec file " + path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError("spec file " + path + ": " + e.what());
    }
}

FitOptions fit_options_from(const Config& config) {
    FitOptions options;
    options.absorb.tolerance = config.option("absorb_tolerance", options.absorb.tolerance);
    options.absorb.max_iterations =
        config.option("absorb_max_iterations", options.absorb.max_iterations);
    options.rank_tolerance = config.option("rank_tolerance", options.rank_tolerance);
    return options;
}

Eigen::VectorXd grid_from(const Config& config) {
    if (!config.has_option("grid")) throw ConfigError("options.grid: required");
    const auto& g = config.options().at("grid");
    const double lo = g.value("min", 0.0);
    const double hi = g.value("max", 0.0);
    const double step = g.value("step", 1.0);
    if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("options.grid: need min <= max, step > 0");
    std::vector<double> points;
    for (double x = lo; x <= hi + 1e-9 * step; x += step) points.push_back(x);
    return Eigen::Map<const Eigen::VectorXd>(points.data(), static_cast<Eigen::Index>(points.size()));
}

// --- stages ------------------------------------------------------------

void stage_aggregate(const Config& config, StagedOutputs& staged, std::ostream& log) {
    const auto regions = read_region_file(config.input_path("regions"));
    const bool has_t = config.has_input("temperature");
    const bool has_p = config.has_input("precipitation");
    const bool has_u = config.has_input("urban");
    const bool has_r = config.has_input("rural");
    if (has_u != has_r) throw ConfigError("inputs.urban and inputs.rural must come together");
    if (!has_t && !has_p && !has_u)
        throw ConfigError("inputs: need at least one of temperature, precipitation, urban+rural");

    // cell sites from every provided table
    std::map<std::string, CellSite> sites;
    auto collect = [&](const DataTable& t) {
        const auto& id = t.strings("cell_id");
        const auto& lon = t.numeric("lon");
        const auto& lat = t.numeric("lat");
        for (std::size_t i = 0; i < t.n_rows(); ++i) {
            if (id[i].empty() || is_missing(lon[i]) || is_missing(lat[i]))
                throw std::invalid_argument("cell table row " + std::to_string(i + 2) +
                                            " missing cell_id/lon/lat");
            sites.insert({id[i], {id[i], lon[i], lat[i]}});
        }
    };

    DataTable temperature, precipitation, urban, rural;
    if (has_t) {
        temperature = DataTable::read_csv(config.input_path("temperature"));
        collect(temperature);
    }
    if (has_p) {
        precipitation = DataTable::read_csv(config.input_path("precipitation"));
        collect(precipitation);
    }
    if (has_u) {
        urban = DataTable::read_csv(config.input_path("urban"));
        rural = DataTable::read_csv(config.input_path("rural"));
        collect(urban);
        collect(rural);
    }
    std::vector<CellSite> cells;
    cells.reserve(sites.size());
    for (const auto& [id, site] : sites) cells.push_back(site);
    const auto assignment = assign_cells(cells, regions);
    log << "aggregate: " << assignment.size() << "/" << cells.size() << " cells mapped to "
        << regions.size() << " regions\n";

    AggregateLog alog;
    DataTable base;
    base.add_string("region_id");
    base.add_string("country_id");
    base.add_numeric("year");

    // all region-years seen across variables
    std::set<std::pair<std::string, int>> keys;
    std::vector<DataTable> parts;
    if (has_t) parts.push_back(aggregate_climate(temperature, assignment, AnnualStatistic::mean,
                                                 "t", &alog));
    if (has_p) parts.push_back(aggregate_climate(precipitation, assignment, AnnualStatistic::sum,
                                                 "p", &alog));
    if (has_u) parts.push_back(aggregate_population(urban, rural, assignment, &alog));
    for (const auto& part : parts) {
        const auto& rid = part.strings("region_id");
        const auto& year = part.numeric("year");
        for (std::size_t i = 0; i < part.n_rows(); ++i)
            keys.insert({rid[i], static_cast<int>(year[i])});
    }
    std::map<std::string, std::string> country_of;
    for (const auto& region : regions) country_of[region.region_id] = region.country_id;
    base.resize_rows(keys.size());
    std::size_t row = 0;
    for (const auto& [rid, year] : keys) {
        base.strings("region_id")[row] = rid;
        base.strings("country_id")[row] = country_of.at(rid);
        base.numeric("year")[row] = year;
        ++row;
    }
    for (const auto& part : parts) merge_region_years(base, part);
    base.sort_by({"region_id", "year"});

    std::set<std::string> mapped;
    for (const auto& [cid, rid] : assignment) mapped.insert(rid);
    for (const auto& region : regions)
        if (!mapped.count(region.region_id))
            alog.warnings.push_back("region " + region.region_id + " has zero mapped cells");
    for (const auto& w : alog.warnings) log << "aggregate: " << w << '\n';

    base.write_csv(staged.stage(config.output_path("table")));
}

void stage_build_panel(const Config& config, StagedOutputs& staged, std::ostream& log) {
    DataTable panel = DataTable::read_csv(config.input_path("table"));
    if (config.has_input("merge")) {
        const DataTable extra = DataTable::read_csv(config.input_path("merge"));
        merge_region_years(panel, extra);
    }
    for (const auto& name : {"region_id", "country_id", "year", "gdppc", "t", "p"})
        if (!panel.has_column(name))
            throw ConfigError(std::string("inputs.table: missing required column ") + name);

    BuildPanelOptions options;
    const std::string lag = config.option<std::string>("lag_form", "all");
    if (lag == "contemporaneous") options.lag_form = LagForm::contemporaneous;
    else if (lag == "lagged") options.lag_form = LagForm::lagged;
    else if (lag == "summed") options.lag_form = LagForm::summed;
    else if (lag == "all") options.lag_form = LagForm::all;
    else throw ConfigError("options.lag_form: unknown value " + lag);
    options.bins = config.option("bins", true);
    options.rich_poor = config.option("rich_poor", true);
    options.weights = config.option("weights", true);

    PanelLog plog;
    build_panel_columns(panel, options, &plog);
    for (const auto& w : plog.warnings) log << "build-panel: " << w << '\n';
    panel.write_csv(staged.stage(config.output_path("panel")));

    if (config.has_output("period_panel")) {
        const int m = config.option("period_years", 10);
        PanelLog period_log;
        DataTable period = period_average(panel, m, &period_log);
        long_difference(period, options.lag_form);
        if (options.weights) compute_weights(period, WeightScheme::region, &period_log);
        for (const auto& w : period_log.warnings) log << "build-panel: " << w << '\n';
        period.write_csv(staged.stage(config.output_path("period_panel")));
    }
}

void stage_estimate(const Config& config, StagedOutputs& staged, std::ostream& log) {
    const DataTable panel = DataTable::read_csv(config.input_path("panel"));
    const RegressionSpec spec = load_spec(config.input_path("spec"));
    const FitOptions options = fit_options_from(config);

    FitResult result;
    if (config.has_option("heterogeneous")) {
        const auto& h = config.options().at("heterogeneous");
        const std::string dummy = h.value("dummy", "poor");
        const auto interacted = h.value("interacted", std::vector<std::string>{"t", "t_sq"});
        result = fit_heterogeneous(panel, spec, dummy, interacted, options);
    } else if (config.has_option("binned")) {
        const auto& b = config.options().at("binned");
        result = fit_binned(panel, spec, b.value("reference_t_bin", 5),
                            b.value("reference_p_bin", 5), options);
    } else {
        result = fit(panel, spec, options);
    }
    log << "estimate: n=" << result.n << " rank=" << result.rank
        << " absorbed=" << result.absorbed_params << " iterations=" << result.absorb_iterations
        << " r2=" << result.r2 << '\n';
    for (const auto& name : result.dropped) log << "estimate: dropped collinear column " << name << '\n';

    write_json_file(staged.stage(config.output_path("fit")), result.to_json());
    result.write_coefficient_csv(staged.stage(config.output_path("coefficients")));
}

void stage_margins(const Config& config, StagedOutputs& staged, std::ostream&) {
    std::ifstream in(config.input_path("fit"));
    nlohmann::json j;
    in >> j;
    const FitResult fit_result = FitResult::from_json(j);

    const std::string kind_name = config.option<std::string>("kind", "growth");
    EffectKind kind;
    if (kind_name == "growth") kind = EffectKind::growth;
    else if (kind_name == "level") kind = EffectKind::level;
    else throw ConfigError("options.kind: must be growth or level");
    const std::string variable = config.option<std::string>("variable", "t");
    const double confidence = config.option("confidence", 0.90);
    const Eigen::VectorXd grid = grid_from(config);

    MarginalCurve curve;
    if (config.has_option("group")) {
        const auto& g = config.options().at("group");
        curve = marginal_effect_grouped(fit_result, g.value("dummy", "poor"),
                                        g.value("value", 1.0), variable, grid, confidence);
    } else {
        curve = marginal_effect(fit_result, kind, variable, grid, confidence);
    }
    curve.write_csv(staged.stage(config.output_path("curve")));

    if (config.has_output("optimum")) {
        nlohmann::json opt_json;
        try {
            const OptimalLevel opt = optimal_level(fit_result, variable);
            opt_json = {{"level", opt.level}, {"se", opt.se}, {"concavity", opt.concavity}};
        } catch (const std::invalid_argument& e) {
            opt_json = {{"error", e.what()}};
        }
        write_json_file(staged.stage(config.output_path("optimum")), opt_json);
    }
}

void stage_diagnose(const Config& config, StagedOutputs& staged, std::ostream& log) {
    const std::string test = config.option<std::string>("test", "");
    nlohmann::json out;
    if (test == "harris_tzavalis") {
        const DataTable panel = DataTable::read_csv(config.input_path("panel"));
        HarrisTzavalisOptions options;
        options.trend = config.option("trend", false);
        options.cross_demean = config.option("cross_demean", false);
        const std::string variable = config.option<std::string>("variable", "t");
        out = harris_tzavalis(panel, variable, options).to_json();
    } else if (test == "lm_serial") {
        const DataTable panel = DataTable::read_csv(config.input_path("panel"));
        const RegressionSpec spec = load_spec(config.input_path("spec"));
        const FitResult f = fit(panel, spec, fit_options_from(config));
        // residuals grouped by region in time order
        const auto& region = panel.strings("region_id");
        const auto& year = panel.numeric("year");
        std::map<std::string, std::map<double, double>> grouped;
        for (std::size_t i = 0; i < f.sample_rows.size(); ++i) {
            const std::size_t r = f.sample_rows[i];
            grouped[region[r]][year[r]] = f.residuals[static_cast<Eigen::Index>(i)];
        }
        std::vector<std::vector<double>> resid;
        for (const auto& [rid, series] : grouped) {
            std::vector<double> v;
            v.reserve(series.size());
            for (const auto& [y, e] : series) v.push_back(e);
            resid.push_back(std::move(v));
        }
        int detrend_degree = 0;
        for (const auto& term : spec.fixed_effects)
            if (term.trend_degree > 0 && term.factor == "region_id")
                detrend_degree = std::max(detrend_degree, term.trend_degree);
        out = nlohmann::json::array();
        for (const int order : config.option("orders", std::vector<int>{1})) {
            const TestReport report = lm_serial(resid, order, detrend_degree);
            log << "diagnose: lm_serial order " << order << " z=" << report.z << '\n';
            out.push_back(report.to_json());
        }
    } else if (test == "compare") {
        const DataTable table = DataTable::read_csv(config.input_path("table"));
        const std::string col_a = config.option<std::string>("a", "");
        const std::string col_b = config.option<std::string>("b", "");
        if (col_a.empty() || col_b.empty()) throw ConfigError("options.a and options.b: required");
        const auto& a = table.numeric(col_a);
        const auto& b = table.numeric(col_b);
        std::vector<double> va, vb;
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            if (is_missing(a[i]) || is_missing(b[i])) continue;
            va.push_back(a[i]);
            vb.push_back(b[i]);
        }
        out = compare_series(va, vb).to_json();
    } else if (test == "simulate") {
        const std::uint64_t seed = config.seed(true);
        const std::string which = config.option<std::string>("simulate", "harris_tzavalis");
        const int sims = config.option("sims", 500);
        const int n_regions = config.option("n_regions", 1000);
        const int n_years = config.option("n_years", 26);
        const double alpha = config.option("alpha", 0.05);
        if (which == "harris_tzavalis") {
            HarrisTzavalisOptions options;
            options.trend = config.option("trend", false);
            options.cross_demean = config.option("cross_demean", false);
            const bool unit_root = config.option("unit_root", true);
            const SizePowerResult r = simulate_harris_tzavalis(
                n_regions, n_years, unit_root, options, sims, alpha, seed, config.threads());
            out = {{"test", "harris_tzavalis"}, {"unit_root", unit_root}, {"sims", r.sims},
                   {"alpha", r.alpha},          {"rejection_rate", r.rejection_rate}};
        } else if (which == "lm_serial") {
            const int order = config.option("order", 1);
            const double rho = config.option("ar_rho", 0.0);
            const SizePowerResult r = simulate_lm_serial(n_regions, n_years, order, rho, sims,
                                                         alpha, seed, config.threads());
            out = {{"test", "lm_serial"}, {"order", order},
                   {"ar_rho", rho},       {"sims", r.sims},
                   {"alpha", r.alpha},    {"rejection_rate", r.rejection_rate}};
        } else {
            throw ConfigError("options.simulate: unknown test " + which);
        }
    } else {
        throw ConfigError("options.test: must be harris_tzavalis, lm_serial, compare, or simulate");
    }
    write_json_file(staged.stage(config.output_path("report")), out);
}

void stage_bootstrap(const Config& config, StagedOutputs& staged, std::ostream& log) {
    const DataTable panel = DataTable::read_csv(config.input_path("panel"));
    const RegressionSpec spec = load_spec(config.input_path("spec"));
    BootstrapOptions options;
    options.replicates = config.option("replicates", 1000);
    options.seed = config.seed(true);
    options.threads = config.threads();
    options.recompute_rich_poor = config.option("recompute_rich_poor", true);
    options.fit = fit_options_from(config);

    const BootstrapRun run = block_bootstrap(panel, spec, options);
    log << "bootstrap: " << run.draws.rows() << "/" << options.replicates
        << " replicates succeeded\n";
    for (const auto& note : run.failure_notes) log << "bootstrap: " << note << '\n';

    run.write_csv(staged.stage(config.output_path("draws")));
    const auto levels = config.option("percentiles", std::vector<double>{0.05, 0.5, 0.95});
    write_json_file(staged.stage(config.output_path("summary")), run.summary_json(levels));
}

void stage_adaptation(const Config& config, StagedOutputs& staged, std::ostream& log) {
    const BootstrapRun fe_run = BootstrapRun::read_csv(config.input_path("fe_draws"));
    const BootstrapRun ld_run = BootstrapRun::read_csv(config.input_path("ld_draws"));
    AdaptationOptions options;
    options.fe_floor = config.option("fe_floor", 1e-4);
    options.levels = config.option("levels", std::vector<double>{0.05, 0.5, 0.95});
    options.variable = config.option<std::string>("variable", "t");
    if (config.option<std::string>("convention", "magnitude") == "signed")
        options.convention = AnnualizeConvention::signed_root;
    const Eigen::VectorXd grid = grid_from(config);

    const AdaptationDistribution dist = adaptation_ratio(fe_run, ld_run, grid, options);
    int filtered = 0;
    for (int f : dist.filtered) filtered += f;
    log << "adaptation: " << grid.size() << " grid points, " << filtered
        << " replicate evaluations filtered\n";
    write_json_file(staged.stage(config.output_path("summary")), dist.to_json());

    if (config.has_output("table")) {
        std::ofstream out(staged.stage(config.output_path("table")), std::ios::trunc);
        out << "level";
        for (double l : dist.levels) out << ",q" << format_double(100.0 * l);
        out << ",used,filtered\n";
        for (Eigen::Index g = 0; g < dist.grid.size(); ++g) {
            out << format_double(dist.grid[g]);
            for (std::size_t l = 0; l < dist.levels.size(); ++l)
                out << ',' << format_double(dist.quantiles(g, static_cast<Eigen::Index>(l)));
            out << ',' << dist.used[static_cast<std::size_t>(g)] << ','
                << dist.filtered[static_cast<std::size_t>(g)] << '\n';
        }
    }
}

void stage_project(const Config& config, StagedOutputs& staged, std::ostream& log) {
    const auto scenarios = read_scenarios(DataTable::read_csv(config.input_path("scenarios")));
    const DataTable history = DataTable::read_csv(config.input_path("baseline"));
    const auto baseline =
        baseline_climate(history, config.option("baseline_first_year", 2015),
                         config.option("baseline_last_year", 2019));

    const std::string source_name = config.option<std::string>("source", "annual_panel");
    DamageFunction::Source source;
    if (source_name == "annual_panel") source = DamageFunction::Source::annual_panel;
    else if (source_name == "long_difference") source = DamageFunction::Source::long_difference;
    else throw ConfigError("options.source: must be annual_panel or long_difference");

    const std::string lin_name = config.option<std::string>("linear_coef", "t");
    const std::string quad_name = config.option<std::string>("quadratic_coef", "t_sq");
    std::vector<DamageFunction> draws;
    if (config.has_input("draws")) {
        const BootstrapRun run = BootstrapRun::read_csv(config.input_path("draws"));
        const Eigen::VectorXd lin = run.column(lin_name);
        const Eigen::VectorXd quad = run.column(quad_name);
        for (Eigen::Index i = 0; i < lin.size(); ++i)
            draws.push_back({source, quad[i], lin[i]});
    } else if (config.has_input("fit")) {
        std::ifstream in(config.input_path("fit"));
        nlohmann::json j;
        in >> j;
        const FitResult f = FitResult::from_json(j);
        draws.push_back({source, f.coef(quad_name), f.coef(lin_name)});
    } else {
        throw ConfigError("inputs: need draws (bootstrap CSV) or fit (JSON)");
    }

    const DataTable socio = DataTable::read_csv(config.input_path("socioeconomic"));
    const WeightSeries weights(socio, config.option<std::string>("weight_column", "pop"));

    std::map<std::string, std::string> groups;
    if (config.has_input("groups")) {
        const DataTable g = DataTable::read_csv(config.input_path("groups"));
        const auto& rid = g.strings("region_id");
        const auto& group = g.strings("group");
        for (std::size_t i = 0; i < g.n_rows(); ++i)
            if (!rid[i].empty() && !group[i].empty()) groups[rid[i]] = group[i];
    }

    ProjectionOptions options;
    options.n_samples = config.option("n_samples", 1000);
    options.seed = config.seed(true);
    options.threads = config.threads();
    options.weight_column = config.option<std::string>("weight_column", "pop");

    const ProjectionSummary summary =
        project(draws, scenarios, baseline, weights, groups, options);
    log << "project: " << summary.sampled_pairs << " pairs sampled, " << summary.flagged_pairs
        << " flagged\n";
    for (const auto& w : summary.warnings) log << "project: " << w << '\n';

    write_json_file(staged.stage(config.output_path("summary")), summary.to_json());
    summary.write_group_paths_csv(staged.stage(config.output_path("group_paths")));
    summary.write_region_table_csv(staged.stage(config.output_path("region_table")));
    if (config.has_output("pairs")) {
        std::ofstream out(staged.stage(config.output_path("pairs")), std::ios::trunc);
        out << "pair";
        for (int y : summary.years) out << ",y" << y;
        out << '\n';
        for (Eigen::Index r = 0; r < summary.global_by_pair.rows(); ++r) {
            out << r;
            for (Eigen::Index c = 0; c < summary.global_by_pair.cols(); ++c)
                out << ',' << format_double(summary.global_by_pair(r, c));
            out << '\n';
        }
    }
}

void stage_plot_data(const Config& config, StagedOutputs& staged, std::ostream&) {
    const std::string mode = config.option<std::string>("mode", "margins");
    if (mode == "margins") {
        const DataTable curve = DataTable::read_csv(config.input_path("curve"));
        const DataTable panel = DataTable::read_csv(config.input_path("panel"));
        const std::string variable = config.option<std::string>("variable", "t");
        const auto& level = curve.numeric("level");
        if (level.empty()) throw std::invalid_argument("plot-data: empty marginal curve grid");
        const auto& values = panel.numeric(variable);
        const double step = level.size() > 1 ? level[1] - level[0] : 1.0;
        std::vector<long> counts(level.size(), 0);
        for (double v : values) {
            if (is_missing(v)) continue;
            for (std::size_t g = 0; g < level.size(); ++g) {
                if (v >= level[g] - 0.5 * step && v < level[g] + 0.5 * step) {
                    ++counts[g];
                    break;
                }
            }
        }
        std::ofstream out(staged.stage(config.output_path("figure")), std::ios::trunc);
        out << "level,effect,se,lo,hi,hist_count\n";
        for (std::size_t g = 0; g < level.size(); ++g)
            out << format_double(level[g]) << ',' << format_double(curve.numeric("effect")[g])
                << ',' << format_double(curve.numeric("se")[g]) << ','
                << format_double(curve.numeric("lo")[g]) << ','
                << format_double(curve.numeric("hi")[g]) << ',' << counts[g] << '\n';
    } else if (mode == "projection") {
        const DataTable pairs = DataTable::read_csv(config.input_path("pairs"));
        std::vector<std::string> year_columns;
        for (const auto& name : pairs.column_names())
            if (name.rfind("y", 0) == 0 && name != "pair") year_columns.push_back(name);
        if (year_columns.empty()) throw std::invalid_argument("plot-data: no year columns in pairs");
        std::ofstream out(staged.stage(config.output_path("figure")), std::ios::trunc);
        out << "year,mean,p10,p90\n";
        for (const auto& name : year_columns) {
            const auto& col = pairs.numeric(name);
            std::vector<double> values(col.begin(), col.end());
            double sum = 0.0;
            for (double v : values) sum += v;
            std::sort(values.begin(), values.end());
            out << name.substr(1) << ',' << format_double(sum / values.size()) << ','
                << format_double(quantile_sorted(std::span<const double>(values), 0.10)) << ','
                << format_double(quantile_sorted(std::span<const double>(values), 0.90)) << '\n';
        }
    } else {
        throw ConfigError("options.mode: must be margins or projection");
    }
}

} // namespace

int run_stage(const std::string& stage, const std::string& config_path, std::ostream& log) {
    const auto started = std::chrono::steady_clock::now();
    try {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file: " + config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        const Config config(std::move(j), stage);

        // input hashes recorded before the stage runs
        nlohmann::json inputs = nlohmann::json::object();
        for (const auto& [name, path] : config.input_paths()) {
            if (!fs::exists(path))
                throw ConfigError("inputs." + name + ": file does not exist: " + path);
            inputs[name] = {{"path", path},
                            {"fnv1a64", fnv1a64_file(path)}};
        }

        StagedOutputs staged;
        if (stage == "aggregate") stage_aggregate(config, staged, log);
        else if (stage == "build-panel") stage_build_panel(config, staged, log);
        else if (stage == "estimate") stage_estimate(config, staged, log);
        else if (stage == "margins") stage_margins(config, staged, log);
        else if (stage == "diagnose") stage_diagnose(config, staged, log);
        else if (stage == "bootstrap") stage_bootstrap(config, staged, log);
        else if (stage == "adaptation") stage_adaptation(config, staged, log);
        else if (stage == "project") stage_project(config, staged, log);
        else if (stage == "plot-data") stage_plot_data(config, staged, log);
        else throw ConfigError("unknown stage: " + stage);

        // manifest written last, also atomically
        nlohmann::json manifest;
        manifest["stage"] = stage;
        manifest["version"] = kVersion;
        manifest["inputs"] = inputs;
        manifest["outputs"] = config.raw().contains("outputs") ? config.raw().at("outputs")
                                                               : nlohmann::json::object();
        if (config.raw().contains("seed")) manifest["seed"] = config.raw().at("seed");
        manifest["threads"] = config.threads();
        manifest["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started)
                                  .count();
        std::string manifest_path;
        if (config.has_output("manifest")) {
            manifest_path = config.output_path("manifest");
        } else if (config.raw().contains("outputs") && !config.raw().at("outputs").empty()) {
            manifest_path =
                expand_path(config.raw().at("outputs").begin().value().get<std::string>()) +
                ".manifest.json";
        } else {
            throw ConfigError("outputs: at least one output is required");
        }
        write_json_file(staged.stage(manifest_path), manifest);
        staged.commit();
        return 0;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace climeco
