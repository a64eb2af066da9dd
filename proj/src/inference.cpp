#include "climeco/inference.hpp"

#include "climeco/stats.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <unordered_map>

namespace climeco {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_sample(const FitResult& fit) {
    if (fit.design.size() == 0)
        throw std::invalid_argument(
            "fit does not carry its estimation sample (sandwich covariances need a fresh fit)");
}

const DataTable::Factor& find_factor(const FitResult& fit, const std::string& name) {
    auto it = fit.factors.find(name);
    if (it == fit.factors.end())
        throw std::invalid_argument("cluster factor not available on fit: " + name);
    return it->second;
}

double residual_correction(const FitResult& fit) {
    const double n = static_cast<double>(fit.n);
    const double k = static_cast<double>(fit.rank + fit.absorbed_params);
    if (n - k <= 0.0) throw std::runtime_error("nonpositive residual degrees of freedom");
    return (n - 1.0) / (n - k);
}

// Sum of per-cluster outer score products; scores are w_i e_i x_i.
MatrixXd cluster_meat(const FitResult& fit, const std::vector<std::int32_t>& codes, int n_groups) {
    const Index k = fit.design.cols();
    MatrixXd sums = MatrixXd::Zero(n_groups, k);
    for (Index i = 0; i < fit.design.rows(); ++i)
        sums.row(codes[static_cast<std::size_t>(i)]) +=
            fit.weights[i] * fit.residuals[i] * fit.design.row(i);
    return sums.transpose() * sums;
}

MatrixXd one_way(const FitResult& fit, const std::vector<std::int32_t>& codes, int n_groups,
                 bool small_sample) {
    const double g = static_cast<double>(n_groups);
    double c = 1.0;
    if (small_sample) {
        c = residual_correction(fit);
        if (n_groups > 1) c *= g / (g - 1.0);
    }
    const MatrixXd meat = cluster_meat(fit, codes, n_groups);
    MatrixXd v = c * fit.bread * meat * fit.bread;
    return 0.5 * (v + v.transpose());
}

std::pair<std::vector<std::int32_t>, int> intersect_codes(const DataTable::Factor& a,
                                                          const DataTable::Factor& b) {
    std::unordered_map<std::int64_t, std::int32_t> pairs;
    std::vector<std::int32_t> codes(a.codes.size());
    std::int32_t next = 0;
    for (std::size_t i = 0; i < a.codes.size(); ++i) {
        const std::int64_t key = (static_cast<std::int64_t>(a.codes[i]) << 32) |
                                 static_cast<std::uint32_t>(b.codes[i]);
        auto [it, inserted] = pairs.emplace(key, next);
        if (inserted) ++next;
        codes[i] = it->second;
    }
    return {std::move(codes), next};
}

} // namespace

VcovResult vcov_cluster(const FitResult& fit, const std::string& factor, bool small_sample) {
    require_sample(fit);
    const auto& f = find_factor(fit, factor);
    if (f.n_levels() < 2) throw std::invalid_argument("clustered vcov needs at least 2 clusters");
    return {one_way(fit, f.codes, f.n_levels(), small_sample), false, ""};
}

VcovResult vcov_twoway(const FitResult& fit, const std::string& factor_a,
                       const std::string& factor_b, bool small_sample) {
    require_sample(fit);
    const auto& fa = find_factor(fit, factor_a);
    const auto& fb = find_factor(fit, factor_b);
    auto [ab_codes, ab_groups] = intersect_codes(fa, fb);
    MatrixXd v = one_way(fit, fa.codes, fa.n_levels(), small_sample) +
                 one_way(fit, fb.codes, fb.n_levels(), small_sample) -
                 one_way(fit, ab_codes, ab_groups, small_sample);
    v = 0.5 * (v + v.transpose());
    VcovResult out{std::move(v), false, ""};
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(out.matrix);
    if (es.eigenvalues().minCoeff() < 0.0) {
        const VectorXd floored = es.eigenvalues().cwiseMax(0.0);
        out.matrix = es.eigenvectors() * floored.asDiagonal() * es.eigenvectors().transpose();
        out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
        out.eigenvalue_floored = true;
        out.note = "two-way vcov indefinite; negative eigenvalues floored at zero";
    }
    return out;
}

VcovResult vcov_robust(const FitResult& fit, bool small_sample) {
    require_sample(fit);
    const Index n = fit.design.rows();
    const Index k = fit.design.cols();
    MatrixXd meat = MatrixXd::Zero(k, k);
    for (Index i = 0; i < n; ++i) {
        const double s = fit.weights[i] * fit.residuals[i];
        meat.noalias() += (s * s) * fit.design.row(i).transpose() * fit.design.row(i);
    }
    double c = 1.0;
    if (small_sample) {
        const double nn = static_cast<double>(fit.n);
        const double kk = static_cast<double>(fit.rank + fit.absorbed_params);
        if (nn - kk <= 0.0) throw std::runtime_error("nonpositive residual degrees of freedom");
        c = nn / (nn - kk);
    }
    MatrixXd v = c * fit.bread * meat * fit.bread;
    return {0.5 * (v + v.transpose()), false, ""};
}

VcovResult vcov_hac(const FitResult& fit, int bandwidth, const std::string& time_column,
                    bool small_sample) {
    require_sample(fit);
    if (bandwidth < 0) throw std::invalid_argument("hac bandwidth must be nonnegative");
    const auto& time = find_factor(fit, time_column);
    const int t_levels = time.n_levels();
    if (bandwidth >= t_levels)
        throw std::invalid_argument("hac bandwidth must be smaller than the number of periods");

    const Index n = fit.design.rows();
    const Index k = fit.design.cols();

    // lag 0: heteroskedasticity-robust meat; lags >= 1: scores pooled within
    // each time period, Bartlett weights 1 - l/(L+1)
    MatrixXd meat = MatrixXd::Zero(k, k);
    MatrixXd pooled = MatrixXd::Zero(t_levels, k);
    for (Index i = 0; i < n; ++i) {
        const double s = fit.weights[i] * fit.residuals[i];
        meat.noalias() += (s * s) * fit.design.row(i).transpose() * fit.design.row(i);
        pooled.row(time.codes[static_cast<std::size_t>(i)]) += s * fit.design.row(i);
    }
    for (int l = 1; l <= bandwidth; ++l) {
        const double w = 1.0 - static_cast<double>(l) / (bandwidth + 1.0);
        MatrixXd omega = MatrixXd::Zero(k, k);
        for (int t = l; t < t_levels; ++t)
            omega.noalias() += pooled.row(t).transpose() * pooled.row(t - l);
        meat.noalias() += w * (omega + omega.transpose());
    }
    double c = 1.0;
    if (small_sample) {
        const double nn = static_cast<double>(fit.n);
        const double kk = static_cast<double>(fit.rank + fit.absorbed_params);
        if (nn - kk <= 0.0) throw std::runtime_error("nonpositive residual degrees of freedom");
        c = nn / (nn - kk);
    }
    MatrixXd v = c * fit.bread * meat * fit.bread;
    return {0.5 * (v + v.transpose()), false, ""};
}

VcovResult compute_vcov(const FitResult& fit, const VcovSpec& spec) {
    switch (spec.kind) {
    case VcovSpec::Kind::classical: {
        const double sigma2 =
            fit.dof > 0 ? fit.rss / static_cast<double>(fit.dof) : kMissing;
        MatrixXd v = sigma2 * fit.bread;
        return {std::move(v), false, ""};
    }
    case VcovSpec::Kind::robust: return vcov_robust(fit, spec.small_sample);
    case VcovSpec::Kind::cluster_oneway:
        return vcov_cluster(fit, spec.factor_a, spec.small_sample);
    case VcovSpec::Kind::cluster_twoway:
        return vcov_twoway(fit, spec.factor_a, spec.factor_b, spec.small_sample);
    case VcovSpec::Kind::hac:
        return vcov_hac(fit, spec.bandwidth, spec.time_column, spec.small_sample);
    }
    throw std::logic_error("unreachable vcov kind");
}

Eigen::VectorXd MarginalCurve::lower() const {
    const double z = normal_quantile(0.5 + confidence / 2.0);
    return effect - z * se;
}

Eigen::VectorXd MarginalCurve::upper() const {
    const double z = normal_quantile(0.5 + confidence / 2.0);
    return effect + z * se;
}

void MarginalCurve::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const VectorXd lo = lower();
    const VectorXd hi = upper();
    out << "level,effect,se,lo,hi\n";
    for (Index i = 0; i < grid.size(); ++i)
        out << format_double(grid[i]) << ',' << format_double(effect[i]) << ','
            << format_double(se[i]) << ',' << format_double(lo[i]) << ','
            << format_double(hi[i]) << '\n';
}

Eigen::VectorXd quadratic_marginal(double linear, double quad, const Eigen::VectorXd& grid) {
    return linear + 2.0 * quad * grid.array();
}

namespace {

void check_grid(const VectorXd& grid) {
    if (grid.size() == 0) throw std::invalid_argument("marginal effect grid is empty");
    for (Index i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw std::invalid_argument("marginal effect grid must be strictly increasing");
}

// Delta-method curve for ME(x) = sum_j c_j(x) beta_j over named coefficients.
MarginalCurve linear_combination_curve(const FitResult& fit, EffectKind kind,
                                       const std::vector<std::string>& coef_names,
                                       const std::vector<std::function<double(double)>>& grads,
                                       const VectorXd& grid, double confidence) {
    check_grid(grid);
    std::vector<Index> idx;
    for (const auto& name : coef_names) {
        const Index i = fit.coef_index(name);
        if (i < 0) throw std::invalid_argument("missing coefficient: " + name);
        idx.push_back(i);
    }
    MarginalCurve curve;
    curve.kind = kind;
    curve.confidence = confidence;
    curve.grid = grid;
    curve.effect.resize(grid.size());
    curve.se.resize(grid.size());
    VectorXd g(static_cast<Index>(idx.size()));
    for (Index p = 0; p < grid.size(); ++p) {
        double eff = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            g[static_cast<Index>(j)] = grads[j](grid[p]);
            eff += g[static_cast<Index>(j)] * fit.beta[idx[j]];
        }
        double var = 0.0;
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = 0; b < idx.size(); ++b)
                var += g[static_cast<Index>(a)] * g[static_cast<Index>(b)] *
                       fit.vcov(idx[a], idx[b]);
        curve.effect[p] = eff;
        curve.se[p] = std::sqrt(std::max(var, 0.0));
    }
    return curve;
}

} // namespace

MarginalCurve marginal_effect(const FitResult& fit, EffectKind kind, const std::string& variable,
                              const Eigen::VectorXd& grid, double confidence) {
    if (kind == EffectKind::growth) {
        return linear_combination_curve(
            fit, kind, {variable, variable + "_sq"},
            {[](double) { return 1.0; }, [](double x) { return 2.0 * x; }}, grid, confidence);
    }
    return linear_combination_curve(
        fit, kind, {"d_" + variable, "d_" + variable + "_x_" + variable},
        {[](double) { return 1.0; }, [](double x) { return x; }}, grid, confidence);
}

MarginalCurve marginal_effect_grouped(const FitResult& fit, const std::string& dummy,
                                      double dummy_value, const std::string& variable,
                                      const Eigen::VectorXd& grid, double confidence) {
    if (dummy_value == 0.0) return marginal_effect(fit, EffectKind::growth, variable, grid, confidence);
    const double d = dummy_value;
    return linear_combination_curve(
        fit, EffectKind::growth,
        {variable, variable + "_sq", dummy + "_x_" + variable, dummy + "_x_" + variable + "_sq"},
        {[](double) { return 1.0; }, [](double x) { return 2.0 * x; }, [d](double) { return d; },
         [d](double x) { return 2.0 * x * d; }},
        grid, confidence);
}

OptimalLevel optimal_level(double linear, double quad, const Eigen::Matrix2d& vcov_pair,
                           double quad_tolerance) {
    if (std::abs(quad) <= quad_tolerance)
        throw std::invalid_argument("quadratic coefficient too small for an interior optimum");
    OptimalLevel opt;
    opt.level = -linear / (2.0 * quad);
    const Eigen::Vector2d grad(-1.0 / (2.0 * quad), linear / (2.0 * quad * quad));
    opt.se = std::sqrt(std::max(0.0, double(grad.transpose() * vcov_pair * grad)));
    opt.concavity = quad > 0.0 ? 1 : -1;
    return opt;
}

OptimalLevel optimal_level(const FitResult& fit, const std::string& variable,
                           double quad_tolerance) {
    const Index il = fit.coef_index(variable);
    const Index iq = fit.coef_index(variable + "_sq");
    if (il < 0) throw std::invalid_argument("missing coefficient: " + variable);
    if (iq < 0) throw std::invalid_argument("missing coefficient: " + variable + "_sq");
    Eigen::Matrix2d v;
    v << fit.vcov(il, il), fit.vcov(il, iq), fit.vcov(iq, il), fit.vcov(iq, iq);
    return optimal_level(fit.beta[il], fit.beta[iq], v, quad_tolerance);
}

double annualize_decadal(double phi, AnnualizeConvention convention) {
    if (!(std::abs(phi) < 1.0))
        throw std::domain_error("annualize_decadal requires |phi| < 1");
    if (convention == AnnualizeConvention::magnitude) {
        const double m = std::pow(1.0 + std::abs(phi), 0.1) - 1.0;
        return phi < 0.0 ? -m : m;
    }
    return std::pow(1.0 + phi, 0.1) - 1.0;
}

} // namespace climeco
