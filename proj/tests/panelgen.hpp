// Synthetic panel builders shared by the estimator tests and the acceptance
// suite.
#pragma once

#include "climeco/panel.hpp"
#include "climeco/table.hpp"

#include <cstdio>
#include <random>
#include <string>

namespace panelgen {

inline std::string padded(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
    return buf;
}

// Random panel with id structure, regressors x1..x3, weight column w, and a
// response y with region effects; no missing values.
inline climeco::DataTable random_panel(std::mt19937_64& rng, int n_regions, int n_years,
                                       int n_countries, int n_continents) {
    using climeco::DataTable;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.5, 2.0);

    DataTable t;
    auto& region = t.add_string("region_id");
    auto& country = t.add_string("country_id");
    auto& continent = t.add_string("continent_id");
    auto& year = t.add_numeric("year");
    auto& x1 = t.add_numeric("x1");
    auto& x2 = t.add_numeric("x2");
    auto& x3 = t.add_numeric("x3");
    auto& w = t.add_numeric("w");
    auto& y = t.add_numeric("y");
    t.resize_rows(static_cast<std::size_t>(n_regions) * static_cast<std::size_t>(n_years));

    std::vector<double> region_effect(static_cast<std::size_t>(n_regions));
    std::vector<double> region_trend(static_cast<std::size_t>(n_regions));
    for (auto& v : region_effect) v = normal(rng);
    for (auto& v : region_trend) v = 0.1 * normal(rng);

    std::size_t row = 0;
    for (int r = 0; r < n_regions; ++r) {
        const int c = r % n_countries;
        for (int yy = 0; yy < n_years; ++yy, ++row) {
            region[row] = padded("r", r);
            country[row] = padded("c", c);
            continent[row] = padded("k", c % n_continents);
            year[row] = 1990 + yy;
            x1[row] = normal(rng);
            x2[row] = normal(rng);
            x3[row] = normal(rng);
            w[row] = uniform(rng);
            y[row] = region_effect[static_cast<std::size_t>(r)] +
                     region_trend[static_cast<std::size_t>(r)] * yy + 1.5 * x1[row] -
                     0.7 * x2[row] + 0.2 * x3[row] + normal(rng);
        }
    }
    return t;
}

struct GrowthDgp {
    double level_quad = 0.0005;  // alpha0, on dT*T and dT*LT
    double level_lin = -0.006;   // beta0, on dT
    double growth_quad = -0.0008; // gamma0, on T^2
    double growth_lin = 0.022;    // delta0, on T
    double sigma_idio = 0.02;
    double sigma_country_year = 0.01;
    double sigma_region_effect = 0.005;
    int n_regions = 1600;
    int n_years = 26;
    int n_countries = 50;
    int first_year = 1990;
};

// Panel generated from the structural growth model: annual log gdppc evolves
// with a level term in T and a growth term in T; temperatures are stationary
// around region-specific means. Country-year shocks make country clustering
// meaningful. gdppc levels are exponentiated so the pipeline transforms
// reconstruct the growth equation.
inline climeco::DataTable growth_model_panel(std::mt19937_64& rng, const GrowthDgp& dgp) {
    using climeco::DataTable;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> base_temp(2.0, 28.0);

    DataTable t;
    auto& region = t.add_string("region_id");
    auto& country = t.add_string("country_id");
    auto& year = t.add_numeric("year");
    auto& temp = t.add_numeric("t");
    auto& precip = t.add_numeric("p");
    auto& gdppc = t.add_numeric("gdppc");
    t.resize_rows(static_cast<std::size_t>(dgp.n_regions) *
                  static_cast<std::size_t>(dgp.n_years));

    // year effects shared across regions; country-year shocks for clustering
    std::vector<double> year_effect(static_cast<std::size_t>(dgp.n_years));
    for (auto& v : year_effect) v = 0.005 * normal(rng);
    std::vector<std::vector<double>> country_shock(
        static_cast<std::size_t>(dgp.n_countries),
        std::vector<double>(static_cast<std::size_t>(dgp.n_years)));
    for (auto& series : country_shock)
        for (auto& v : series) v = dgp.sigma_country_year * normal(rng);

    std::size_t row = 0;
    for (int r = 0; r < dgp.n_regions; ++r) {
        const int c = r % dgp.n_countries;
        const double t_base = base_temp(rng);
        const double g_i = dgp.sigma_region_effect * normal(rng);
        double log_y = std::log(5000.0) + 0.2 * normal(rng);
        double t_prev = t_base + 0.8 * normal(rng);
        for (int yy = 0; yy < dgp.n_years; ++yy, ++row) {
            const double t_cur = t_base + 0.8 * normal(rng);
            const double d_t = t_cur - t_prev;
            const double growth = g_i + year_effect[static_cast<std::size_t>(yy)] +
                                  dgp.level_quad * d_t * t_cur + dgp.level_quad * d_t * t_prev +
                                  dgp.level_lin * d_t + dgp.growth_quad * t_cur * t_cur +
                                  dgp.growth_lin * t_cur +
                                  country_shock[static_cast<std::size_t>(c)]
                                               [static_cast<std::size_t>(yy)] +
                                  dgp.sigma_idio * normal(rng);
            log_y += growth;
            region[row] = padded("r", r);
            country[row] = padded("c", c);
            year[row] = dgp.first_year + yy;
            temp[row] = t_cur;
            precip[row] = 1.0;
            gdppc[row] = std::exp(log_y);
            t_prev = t_cur;
        }
    }
    return t;
}

} // namespace panelgen
