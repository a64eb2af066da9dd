#pragma once

#include "climeco/table.hpp"

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace climeco {

/// One absorbed fixed-effect term. Variants:
///   - categorical:           {factor}
///   - categorical x trend:   {factor, trend_degree 1|2, trend_column}
///   - categorical x categorical: {factor, interact_factor}
/// Trend terms project, per level, onto the polynomial basis (1, t, ..., t^d)
/// in the trend column, which also absorbs the level intercepts.
struct FixedEffectTerm {
    std::string factor;
    std::string interact_factor;
    int trend_degree = 0;
    std::string trend_column = "year";

    std::string label() const;
};

struct WeightSpec {
    enum class Scheme { unit, column, region, population };
    Scheme scheme = Scheme::unit;
    std::string column;         // data column for Scheme::column / ::population
    std::string country_column = "country_id";
    std::string year_column = "year";
};

struct VcovSpec {
    enum class Kind { classical, robust, cluster_oneway, cluster_twoway, hac };
    Kind kind = Kind::classical;
    std::string factor_a;
    std::string factor_b;
    int bandwidth = 0;              // HAC Bartlett bandwidth L
    std::string time_column = "year";
    bool small_sample = true;
};

struct RegressionSpec {
    std::string response;
    std::vector<std::string> regressors;
    std::vector<FixedEffectTerm> fixed_effects;
    WeightSpec weights;
    VcovSpec vcov;
    std::string interaction_dummy; // set by fit_heterogeneous

    void validate() const;
    static RegressionSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Preprocessed absorption term: a partition of rows into groups with a
/// per-row polynomial basis (degree 0 = plain weighted demeaning).
struct FeIndex {
    std::vector<std::int32_t> group; // per-row group code, all >= 0
    int n_groups = 0;
    int degree = 0;
    std::vector<double> time;        // per-row, used when degree > 0
    std::string label;
};

struct AbsorbOptions {
    double tolerance = 1e-8;  // max-abs column change per sweep
    int max_iterations = 10000;
    bool accelerate = true;   // Irons-Tuck extrapolation every third sweep
};

struct AbsorbResult {
    int iterations = 0;
    double last_delta = 0.0;
};

/// Alternating weighted projections of every column of `columns` on the
/// orthogonal complement of the fixed-effect span. Demeans in place; throws
/// if the iteration cap is hit, carrying the last delta in the message.
AbsorbResult absorb(Eigen::Ref<Eigen::MatrixXd> columns, const std::vector<FeIndex>& terms,
                    const Eigen::VectorXd& weights, const AbsorbOptions& options = {});

FeIndex build_fe_index(const DataTable& table, std::span<const std::size_t> rows,
                       const FixedEffectTerm& term);

struct FitOptions {
    AbsorbOptions absorb;
    double rank_tolerance = 1e-10; // relative pivot threshold for dropping columns
    bool compute_vcov = true;
    bool keep_sample = true;       // retain design/residuals for post-estimation
};

struct FitResult {
    std::vector<std::string> names;    // kept coefficient names
    Eigen::VectorXd beta;
    Eigen::MatrixXd vcov;
    std::vector<std::string> dropped;  // collinear columns, by name

    long n = 0;
    double r2 = 0.0;
    long dof = 0;                      // n - rank - absorbed_params
    long rank = 0;
    long absorbed_params = 0;
    int absorb_iterations = 0;
    double rss = 0.0;
    double tss = 0.0;
    std::string vcov_note;
    std::string absorbed_note;

    // Estimation-sample data for post-estimation (sandwich covariances,
    // bootstrap pairing); populated when FitOptions::keep_sample is set.
    Eigen::MatrixXd design;        // absorbed kept regressors, weighted metric not applied
    Eigen::VectorXd weights;
    Eigen::VectorXd residuals;
    Eigen::VectorXd fitted;        // on the original response
    Eigen::MatrixXd bread;         // (X' W X)^{-1} on absorbed kept columns
    std::unordered_map<std::string, DataTable::Factor> factors;
    std::vector<std::size_t> sample_rows; // rows of the input table kept

    double se(Eigen::Index k) const { return std::sqrt(vcov(k, k)); }
    Eigen::Index coef_index(const std::string& name) const; // -1 if absent
    double coef(const std::string& name) const;             // throws if absent

    nlohmann::json to_json() const;
    static FitResult from_json(const nlohmann::json& j);
    void write_coefficient_csv(const std::string& path) const;
};

/// Weighted least squares with fixed-effect absorption and rank-revealing
/// collinearity handling.
FitResult fit(const DataTable& panel, const RegressionSpec& spec, const FitOptions& options = {});

/// Heterogeneity variant: adds dummy-interacted copies of `interacted`
/// regressors (dummy x T, dummy x T^2 by default).
FitResult fit_heterogeneous(const DataTable& panel, RegressionSpec spec, const std::string& dummy,
                            const std::vector<std::string>& interacted = {"t", "t_sq"},
                            const FitOptions& options = {});

/// Nonparametric bin regression: regressors are the bin indicator columns
/// minus one omitted reference bin per variable; empty bins are dropped.
FitResult fit_binned(const DataTable& panel, RegressionSpec spec, int reference_t_bin = 5,
                     int reference_p_bin = 5, const FitOptions& options = {});

/// Post-deletion region-scheme weights: 1 / (regions of the row's country
/// present in that year's sample).
Eigen::VectorXd region_scheme_weights(const DataTable& table, std::span<const std::size_t> rows,
                                      const std::string& country_column,
                                      const std::string& year_column);

} // namespace climeco
