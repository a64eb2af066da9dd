#pragma once

#include "climeco/table.hpp"

#include <cstdint>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

namespace climeco {

struct TestReport {
    std::string test;
    std::string null_hypothesis;
    double statistic = 0.0; // headline statistic (rho for HT, z for LM, t for compare)
    double z = 0.0;         // standardized form where applicable
    double p_value = 0.0;
    std::map<std::string, std::string> options;
    std::map<std::string, double> extras;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct HarrisTzavalisOptions {
    bool trend = false;        // panel-specific linear trends in the test regression
    bool cross_demean = false; // subtract cross-sectional means first
};

/// Fixed-T panel unit root test on the largest balanced sub-panel of
/// `variable`. The headline statistic is the pooled within rho; z is the
/// bias-centered standardized statistic under the unit-root null.
TestReport harris_tzavalis(const DataTable& panel, const std::string& variable,
                           const HarrisTzavalisOptions& options = {});

/// Bias-corrected heteroskedasticity-robust LM test for serial correlation of
/// a given order in fixed-effects residuals. `residuals_by_region` holds each
/// region's time-ordered residual series; `detrend_degree` names the per-panel
/// polynomial basis removed by the fixed effects (0 = demeaning only,
/// 1 adds a linear trend, 2 quadratic). Asymptotically standard normal.
TestReport lm_serial(const std::vector<std::vector<double>>& residuals_by_region, int order,
                     int detrend_degree = 0);

struct SeriesComparison {
    double t = 0.0;
    double t_p = 0.0;
    double pearson_r = 0.0;
    double pearson_p = 0.0;
    double spearman_rho = 0.0;
    double spearman_p = 0.0;
    long n = 0;

    nlohmann::json to_json() const;
};

/// Paired t test, Pearson correlation, and Spearman rank correlation with
/// midrank ties for two paired series.
SeriesComparison compare_series(std::span<const double> a, std::span<const double> b);

// --- simulation harness -----------------------------------------------------

struct SizePowerResult {
    int sims = 0;
    int rejections = 0;
    double rejection_rate = 0.0;
    double alpha = 0.05;
};

/// Rejection rate of the HT test over simulated panels: random walks when
/// `unit_root`, iid noise otherwise.
SizePowerResult simulate_harris_tzavalis(int n_regions, int n_years, bool unit_root,
                                         const HarrisTzavalisOptions& options, int sims,
                                         double alpha, std::uint64_t seed, int threads = 1);

/// Rejection rate of the LM serial test over simulated within-demeaned
/// residual panels with AR(1) coefficient `ar_rho` (0 under the null).
SizePowerResult simulate_lm_serial(int n_regions, int n_years, int order, double ar_rho, int sims,
                                   double alpha, std::uint64_t seed, int threads = 1);

} // namespace climeco
