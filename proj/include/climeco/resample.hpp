#pragma once

#include "climeco/estimator.hpp"
#include "climeco/inference.hpp"

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace climeco {

struct BootstrapOptions {
    int replicates = 1000;
    std::uint64_t seed = 0;
    int threads = 1;
    bool identity_resample = false;   // test hook: every country drawn exactly once
    bool recompute_rich_poor = true;  // re-derive the poor dummy inside each replicate
    FitOptions fit;
};

struct BootstrapRun {
    int replicates = 0;
    std::uint64_t seed = 0;
    std::uint64_t panel_hash = 0;
    std::vector<std::string> coef_names;
    Eigen::MatrixXd draws;            // successful replicates x coefficients
    std::vector<int> replicate_ids;   // which b each row came from
    int failures = 0;
    std::vector<std::string> failure_notes;

    Eigen::VectorXd column(const std::string& name) const;
    /// Percentile of one coefficient's draws (linear interpolation).
    double percentile(const std::string& name, double p) const;
    void write_csv(const std::string& path) const;
    static BootstrapRun read_csv(const std::string& path);
    nlohmann::json summary_json(const std::vector<double>& levels = {0.05, 0.5, 0.95}) const;
};

/// Country-block bootstrap: each replicate resamples countries with
/// replacement (duplicates get distinct country and region ids), re-derives
/// sample-dependent panel columns, and re-fits the spec. Replicate b draws
/// from the documented stream (seed, b), so runs on the same country universe
/// pair across calls with the same seed.
BootstrapRun block_bootstrap(const DataTable& panel, const RegressionSpec& spec,
                             const BootstrapOptions& options);

struct AdaptationOptions {
    double fe_floor = 1e-4; // |tau_FE| below this filters the replicate
    AnnualizeConvention convention = AnnualizeConvention::magnitude;
    std::vector<double> levels = {0.05, 0.5, 0.95};
    std::string variable = "t";
};

struct AdaptationDistribution {
    Eigen::VectorXd grid;
    Eigen::MatrixXd quantiles;      // grid x levels
    std::vector<double> levels;
    std::vector<int> filtered;      // replicates dropped per grid point
    std::vector<int> used;          //
    nlohmann::json to_json() const;
};

/// Per-replicate adaptation ratio 1 - tau_LD / tau_FE on a temperature grid,
/// pairing replicate b of the annual-panel and long-difference runs.
/// tau_FE is the growth marginal effect from the annual fit; tau_LD is the
/// annualized growth marginal effect from the long-difference fit.
AdaptationDistribution adaptation_ratio(const BootstrapRun& fe_run, const BootstrapRun& ld_run,
                                        const Eigen::VectorXd& grid,
                                        const AdaptationOptions& options = {});

} // namespace climeco
