#include "climeco/diagnostics.hpp"

#include "climeco/parallel.hpp"
#include "climeco/rng.hpp"
#include "climeco/stats.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace climeco {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Residualizes columns of a T x c block on the polynomial basis (1, t, ...,
// t^degree) over rows; returns the projector complement I - H as needed.
MatrixXd poly_basis(int t_len, int degree) {
    MatrixXd z(t_len, degree + 1);
    for (int t = 0; t < t_len; ++t) {
        const double x = t_len > 1 ? 2.0 * t / (t_len - 1.0) - 1.0 : 0.0;
        z(t, 0) = 1.0;
        if (degree >= 1) z(t, 1) = x;
        if (degree >= 2) z(t, 2) = x * x;
    }
    return z;
}

VectorXd residualize(const VectorXd& y, const MatrixXd& z) {
    return y - z * (z.colPivHouseholderQr().solve(y));
}

} // namespace

nlohmann::json TestReport::to_json() const {
    nlohmann::json j;
    j["test"] = test;
    j["null_hypothesis"] = null_hypothesis;
    j["statistic"] = statistic;
    j["z"] = z;
    j["p_value"] = p_value;
    j["options"] = options;
    j["extras"] = extras;
    j["warnings"] = warnings;
    return j;
}

TestReport harris_tzavalis(const DataTable& panel, const std::string& variable,
                           const HarrisTzavalisOptions& options) {
    const auto& region = panel.strings("region_id");
    const auto& year = panel.numeric("year");
    const auto& value = panel.numeric(variable);

    // per-region observed years
    std::map<std::string, std::map<int, double>> series;
    int ymin = 1 << 30, ymax = -(1 << 30);
    for (std::size_t i = 0; i < panel.n_rows(); ++i) {
        if (region[i].empty() || is_missing(year[i]) || is_missing(value[i])) continue;
        const int y = static_cast<int>(year[i]);
        series[region[i]][y] = value[i];
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (series.empty()) throw std::invalid_argument("harris_tzavalis: no usable observations");

    // largest balanced block: contiguous year window maximizing regions*years.
    // run[r][y] = consecutive observed years starting at y for region r.
    const int span = ymax - ymin + 1;
    std::vector<std::vector<int>> run;
    run.reserve(series.size());
    for (const auto& [id, obs] : series) {
        std::vector<int> r(static_cast<std::size_t>(span), 0);
        for (int y = span - 1; y >= 0; --y)
            if (obs.count(ymin + y))
                r[static_cast<std::size_t>(y)] =
                    1 + (y + 1 < span ? r[static_cast<std::size_t>(y + 1)] : 0);
        run.push_back(std::move(r));
    }
    int best_a = ymin, best_len = 0;
    std::size_t best_obs = 0, best_n = 0;
    for (int a = 0; a < span; ++a) {
        std::vector<std::size_t> at_least(static_cast<std::size_t>(span - a + 1), 0);
        for (const auto& r : run) {
            const int len = std::min(r[static_cast<std::size_t>(a)], span - a);
            if (len > 0) ++at_least[static_cast<std::size_t>(len)];
        }
        for (int len = span - a - 1; len >= 1; --len)
            at_least[static_cast<std::size_t>(len)] += at_least[static_cast<std::size_t>(len + 1)];
        for (int len = 3; len <= span - a; ++len) {
            const std::size_t total = at_least[static_cast<std::size_t>(len)] *
                                      static_cast<std::size_t>(len);
            if (total > best_obs) {
                best_obs = total;
                best_a = ymin + a;
                best_len = len;
                best_n = at_least[static_cast<std::size_t>(len)];
            }
        }
    }
    const int levels = best_len;
    if (levels < 3) throw std::invalid_argument("harris_tzavalis: needs at least 3 periods");
    const auto n_panels = static_cast<Index>(best_n);
    if (n_panels < 2) throw std::invalid_argument("harris_tzavalis: needs at least 2 balanced panels");
    const int best_b = best_a + best_len - 1;

    MatrixXd data(n_panels, levels);
    {
        Index r = 0;
        std::size_t k = 0;
        for (const auto& [id, obs] : series) {
            const auto& reach = run[k++];
            if (reach[static_cast<std::size_t>(best_a - ymin)] < best_len) continue;
            for (int y = best_a; y <= best_b; ++y) data(r, y - best_a) = obs.at(y);
            ++r;
        }
    }
    if (options.cross_demean)
        data.rowwise() -= data.colwise().mean();

    // pooled within regression of y_t on y_{t-1}, demeaned or detrended per panel
    const int rows = levels - 1; // regression rows per panel; HT's fixed T
    const MatrixXd z = poly_basis(rows, options.trend ? 1 : 0);
    double num = 0.0, den = 0.0;
    for (Index i = 0; i < n_panels; ++i) {
        VectorXd cur(rows), lag(rows);
        for (int t = 0; t < rows; ++t) {
            cur[t] = data(i, t + 1);
            lag[t] = data(i, t);
        }
        const VectorXd rc = residualize(cur, z);
        const VectorXd rl = residualize(lag, z);
        num += rc.dot(rl);
        den += rl.squaredNorm();
    }
    if (!(den > 0.0))
        throw std::invalid_argument("harris_tzavalis: degenerate (zero within variance)");
    const double rho = num / den;

    // fixed-T null moments (demeaned / demeaned+trended panels)
    const double T = rows;
    double bias, variance;
    if (!options.trend) {
        bias = -3.0 / (T + 1.0);
        variance = 3.0 * (17.0 * T * T - 20.0 * T + 17.0) /
                   (5.0 * (T - 1.0) * std::pow(T + 1.0, 3));
    } else {
        bias = -15.0 / (2.0 * (T + 2.0));
        variance = 15.0 * (193.0 * T * T - 728.0 * T + 1147.0) /
                   (112.0 * std::pow(T + 2.0, 3) * (T - 2.0));
    }
    const double z_stat =
        std::sqrt(static_cast<double>(n_panels)) * (rho - 1.0 - bias) / std::sqrt(variance);

    TestReport report;
    report.test = "harris_tzavalis";
    report.null_hypothesis = "all panels contain unit roots";
    report.statistic = rho;
    report.z = z_stat;
    report.p_value = normal_cdf(z_stat); // one-sided, reject for small rho
    report.options["trend"] = options.trend ? "true" : "false";
    report.options["cross_demean"] = options.cross_demean ? "true" : "false";
    report.extras["n_panels"] = static_cast<double>(n_panels);
    report.extras["levels"] = levels;
    report.extras["first_year"] = best_a;
    report.extras["last_year"] = best_b;
    if (n_panels < 10) report.warnings.push_back("fewer than 10 panels; fixed-T asymptotics in N");
    return report;
}

TestReport lm_serial(const std::vector<std::vector<double>>& residuals_by_region, int order,
                     int detrend_degree) {
    if (order < 1) throw std::invalid_argument("lm_serial: order must be >= 1");
    if (detrend_degree < 0 || detrend_degree > 2)
        throw std::invalid_argument("lm_serial: detrend degree must be 0, 1, or 2");
    std::size_t t_max = 0;
    for (const auto& r : residuals_by_region) t_max = std::max(t_max, r.size());
    if (static_cast<std::size_t>(order) >= (t_max == 0 ? 0 : t_max - 1))
        throw std::invalid_argument("lm_serial: order must be smaller than T - 1");

    // E[sum_t e_t e_{t-k}] = sigma^2 * (k-th subdiagonal sum of I - H) under
    // the null, H the per-panel hat matrix of the absorbed time basis
    const int basis_dim = detrend_degree + 1;
    std::map<std::size_t, double> correction; // T -> c_k
    auto correction_for = [&](std::size_t t_len) {
        auto it = correction.find(t_len);
        if (it != correction.end()) return it->second;
        const int tl = static_cast<int>(t_len);
        const MatrixXd z = poly_basis(tl, detrend_degree);
        const MatrixXd h = z * (z.transpose() * z).ldlt().solve(z.transpose());
        double c = 0.0;
        for (int t = order; t < tl; ++t) c -= h(t, t - order); // I contributes nothing off-diagonal
        correction.emplace(t_len, c);
        return c;
    };

    double sum_z = 0.0, sum_z2 = 0.0;
    long used = 0;
    for (const auto& resid : residuals_by_region) {
        const auto t_len = resid.size();
        if (t_len <= static_cast<std::size_t>(order) ||
            static_cast<int>(t_len) - basis_dim <= 0)
            continue;
        const double c_k = correction_for(t_len);
        double auto_k = 0.0, ss = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) {
            ss += resid[t] * resid[t];
            if (t >= static_cast<std::size_t>(order))
                auto_k += resid[t] * resid[t - static_cast<std::size_t>(order)];
        }
        const double sigma2 = ss / (static_cast<double>(t_len) - basis_dim);
        const double z_i = auto_k - c_k * sigma2;
        sum_z += z_i;
        sum_z2 += z_i * z_i;
        ++used;
    }
    if (used < 2 || !(sum_z2 > 0.0))
        throw std::invalid_argument("lm_serial: insufficient usable panels");
    const double stat = sum_z / std::sqrt(sum_z2);

    TestReport report;
    report.test = "lm_serial";
    report.null_hypothesis = "no serial correlation at the tested order";
    report.statistic = stat;
    report.z = stat;
    report.p_value = normal_two_sided_p(stat);
    report.options["order"] = std::to_string(order);
    report.options["detrend_degree"] = std::to_string(detrend_degree);
    report.extras["panels_used"] = static_cast<double>(used);
    return report;
}

SeriesComparison compare_series(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("compare_series: length mismatch");
    if (a.size() < 3) throw std::invalid_argument("compare_series: need at least 3 pairs");
    const auto n = static_cast<double>(a.size());

    SeriesComparison out;
    out.n = static_cast<long>(a.size());

    double dsum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dsum += a[i] - b[i];
    const double dmean = dsum / n;
    double dvar = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i] - dmean;
        dvar += d * d;
    }
    dvar /= (n - 1.0);
    if (dvar > 0.0) {
        out.t = dmean / std::sqrt(dvar / n);
        out.t_p = student_t_two_sided_p(out.t, n - 1.0);
    } else {
        out.t = 0.0;
        out.t_p = 1.0;
    }

    out.pearson_r = pearson(a, b);
    const auto ra = midranks(a);
    const auto rb = midranks(b);
    out.spearman_rho = pearson(ra, rb);
    auto corr_p = [n](double r) {
        if (std::abs(r) >= 1.0) return 0.0;
        const double t = r * std::sqrt((n - 2.0) / (1.0 - r * r));
        return student_t_two_sided_p(t, n - 2.0);
    };
    out.pearson_p = corr_p(out.pearson_r);
    out.spearman_p = corr_p(out.spearman_rho);
    return out;
}

nlohmann::json SeriesComparison::to_json() const {
    return nlohmann::json{{"t", t},
                          {"t_p", t_p},
                          {"pearson_r", pearson_r},
                          {"pearson_p", pearson_p},
                          {"spearman_rho", spearman_rho},
                          {"spearman_p", spearman_p},
                          {"n", n}};
}

SizePowerResult simulate_harris_tzavalis(int n_regions, int n_years, bool unit_root,
                                         const HarrisTzavalisOptions& options, int sims,
                                         double alpha, std::uint64_t seed, int threads) {
    const double critical = normal_quantile(alpha); // left tail
    std::atomic<int> rejections{0};
    parallel_for(static_cast<std::size_t>(sims), threads, [&](std::size_t s) {
        auto rng = seeded_stream(seed, s);
        std::normal_distribution<double> noise(0.0, 1.0);
        DataTable panel;
        auto& region = panel.add_string("region_id");
        auto& year = panel.add_numeric("year");
        auto& x = panel.add_numeric("x");
        panel.resize_rows(static_cast<std::size_t>(n_regions) * static_cast<std::size_t>(n_years));
        std::size_t row = 0;
        for (int i = 0; i < n_regions; ++i) {
            double level = noise(rng);
            for (int t = 0; t < n_years; ++t) {
                const double e = noise(rng);
                level = unit_root ? level + e : e;
                region[row] = "r" + std::to_string(i);
                year[row] = 1990 + t;
                x[row] = level;
                ++row;
            }
        }
        const TestReport report = harris_tzavalis(panel, "x", options);
        if (report.z < critical) rejections.fetch_add(1);
    });
    SizePowerResult out;
    out.sims = sims;
    out.alpha = alpha;
    out.rejections = rejections.load();
    out.rejection_rate = static_cast<double>(out.rejections) / sims;
    return out;
}

SizePowerResult simulate_lm_serial(int n_regions, int n_years, int order, double ar_rho, int sims,
                                   double alpha, std::uint64_t seed, int threads) {
    const double critical = normal_quantile(1.0 - alpha / 2.0);
    std::atomic<int> rejections{0};
    parallel_for(static_cast<std::size_t>(sims), threads, [&](std::size_t s) {
        auto rng = seeded_stream(seed, s);
        std::normal_distribution<double> noise(0.0, 1.0);
        std::vector<std::vector<double>> resid(static_cast<std::size_t>(n_regions));
        for (auto& series : resid) {
            series.resize(static_cast<std::size_t>(n_years));
            double u = noise(rng) / std::sqrt(std::max(1.0 - ar_rho * ar_rho, 1e-12));
            double mean = 0.0;
            for (auto& v : series) {
                u = ar_rho * u + noise(rng);
                v = u;
                mean += v;
            }
            mean /= static_cast<double>(n_years);
            for (auto& v : series) v -= mean; // within transformation
        }
        const TestReport report = lm_serial(resid, order, 0);
        if (std::abs(report.z) > critical) rejections.fetch_add(1);
    });
    SizePowerResult out;
    out.sims = sims;
    out.alpha = alpha;
    out.rejections = rejections.load();
    out.rejection_rate = static_cast<double>(out.rejections) / sims;
    return out;
}

} // namespace climeco
