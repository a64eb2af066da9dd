#pragma once

#include "climeco/estimator.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace climeco {

struct VcovResult {
    Eigen::MatrixXd matrix;
    bool eigenvalue_floored = false;
    std::string note;
};

/// One-way cluster-robust sandwich with CR1 correction
/// G/(G-1) * (N-1)/(N-K), K counting kept regressors plus absorbed parameters.
VcovResult vcov_cluster(const FitResult& fit, const std::string& factor, bool small_sample = true);

/// Two-way clustering: V(a) + V(b) - V(a n b); indefinite results are floored
/// at zero eigenvalues and flagged.
VcovResult vcov_twoway(const FitResult& fit, const std::string& factor_a,
                       const std::string& factor_b, bool small_sample = true);

/// Heteroskedasticity-robust sandwich (no clustering); correction N/(N-K).
VcovResult vcov_robust(const FitResult& fit, bool small_sample = true);

/// Bartlett-kernel HAC over the time dimension: the lag-0 term is the
/// heteroskedasticity-robust meat, lagged autocovariances pool scores within
/// each time period (Driscoll-Kraay style), weights 1 - l/(L+1).
VcovResult vcov_hac(const FitResult& fit, int bandwidth, const std::string& time_column = "year",
                    bool small_sample = true);

VcovResult compute_vcov(const FitResult& fit, const VcovSpec& spec);

enum class EffectKind { growth, level };

struct MarginalCurve {
    Eigen::VectorXd grid;
    Eigen::VectorXd effect;
    Eigen::VectorXd se;
    double confidence = 0.90;
    EffectKind kind = EffectKind::growth;

    Eigen::VectorXd lower() const;
    Eigen::VectorXd upper() const;
    void write_csv(const std::string& path) const;
};

// Closed-form marginal effects of a quadratic response. The growth effect at
// level T is d + 2*g*T from the (T, T^2) pair; the level effect is b + a*T
// from the (dT, dT*T) pair.
Eigen::VectorXd quadratic_marginal(double linear, double quad, const Eigen::VectorXd& grid);

/// Marginal-effect curve with delta-method standard errors from the fit's
/// covariance. `variable` is the panel variable stem ("t" or "p"); coefficient
/// names are resolved as (v, v_sq) for growth and (d_v, d_v_x_v) for level.
MarginalCurve marginal_effect(const FitResult& fit, EffectKind kind, const std::string& variable,
                              const Eigen::VectorXd& grid, double confidence = 0.90);

/// Group-specific curve from a heterogeneous fit: adds the dummy-interacted
/// coefficient pair scaled by the dummy value (0 or 1).
MarginalCurve marginal_effect_grouped(const FitResult& fit, const std::string& dummy,
                                      double dummy_value, const std::string& variable,
                                      const Eigen::VectorXd& grid, double confidence = 0.90);

struct OptimalLevel {
    double level = 0.0;
    double se = 0.0;
    int concavity = 0; // sign of the quadratic coefficient
};

/// Vertex of the quadratic response, -linear/(2*quad), with delta-method SE.
OptimalLevel optimal_level(double linear, double quad, const Eigen::Matrix2d& vcov_pair,
                           double quad_tolerance = 1e-10);
OptimalLevel optimal_level(const FitResult& fit, const std::string& variable,
                           double quad_tolerance = 1e-10);

enum class AnnualizeConvention {
    magnitude, // sign(phi) * ((1+|phi|)^(1/10) - 1), the paper's arithmetic
    signed_root // (1+phi)^(1/10) - 1
};

/// Converts a decadal growth effect to an annual one via the tenth root.
double annualize_decadal(double phi, AnnualizeConvention convention = AnnualizeConvention::magnitude);

} // namespace climeco
