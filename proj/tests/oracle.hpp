// Test-only oracles, independent of the library's estimation path: the dense
// dummy-variable WLS used to check fixed-effect absorption, and a winding
// number point-in-polygon check.
#pragma once

#include "climeco/estimator.hpp"
#include "climeco/table.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace oracle {

// Explicit dummy columns for a fixed-effect term list: one indicator per
// level, plus indicator*(t - tbar) and indicator*(t - tbar)^2 columns for
// trend terms. Spans the same space as the library's absorbed projections.
inline Eigen::MatrixXd dummy_matrix(const climeco::DataTable& table,
                                    const std::vector<climeco::FixedEffectTerm>& terms) {
    using Eigen::Index;
    const auto n = static_cast<Index>(table.n_rows());
    std::vector<Eigen::VectorXd> cols;

    auto level_key = [&](const std::string& column, std::size_t row) -> std::string {
        if (table.is_numeric(column)) return climeco::format_double(table.numeric(column)[row]);
        return table.strings(column)[row];
    };

    for (const auto& term : terms) {
        std::map<std::string, int> levels;
        std::vector<int> code(table.n_rows());
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            std::string key = level_key(term.factor, i);
            if (!term.interact_factor.empty()) key += "|" + level_key(term.interact_factor, i);
            auto [it, inserted] = levels.emplace(key, static_cast<int>(levels.size()));
            code[i] = it->second;
        }
        const int g = static_cast<int>(levels.size());
        std::vector<Eigen::VectorXd> indicators(static_cast<std::size_t>(g),
                                                Eigen::VectorXd::Zero(n));
        for (std::size_t i = 0; i < table.n_rows(); ++i)
            indicators[static_cast<std::size_t>(code[i])][static_cast<Index>(i)] = 1.0;
        double tbar = 0.0;
        Eigen::VectorXd t;
        if (term.trend_degree > 0) {
            const auto& tv = table.numeric(term.trend_column);
            t.resize(n);
            for (std::size_t i = 0; i < table.n_rows(); ++i) t[static_cast<Index>(i)] = tv[i];
            tbar = t.mean();
        }
        for (auto& ind : indicators) {
            cols.push_back(ind);
            if (term.trend_degree >= 1) cols.push_back(ind.cwiseProduct(t.array() - tbar));
            if (term.trend_degree >= 2)
                cols.push_back(ind.cwiseProduct((t.array() - tbar).square().matrix()));
        }
    }
    Eigen::MatrixXd d(n, static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) d.col(static_cast<Index>(c)) = cols[c];
    return d;
}

struct DenseWls {
    Eigen::VectorXd beta;   // coefficients on X
    Eigen::VectorXd fitted; // on the original response
};

// Weighted least squares of y on [X D] via projection: residualize the
// weighted X and y on an orthonormal basis of the weighted dummies, then
// solve the small system. Coefficients on X equal the partitioned regression.
inline DenseWls dense_wls(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& d, const Eigen::VectorXd& w) {
    using Eigen::Index;
    const Eigen::VectorXd sw = w.array().sqrt();
    Eigen::MatrixXd xw = x.array().colwise() * sw.array();
    Eigen::VectorXd yw = y.array() * sw.array();

    if (d.cols() > 0) {
        Eigen::MatrixXd dw = d.array().colwise() * sw.array();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dw);
        const Index rank = qr.rank();
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dw.rows(), rank);
        xw -= q * (q.transpose() * xw);
        yw -= q * (q.transpose() * yw);
    }
    DenseWls out;
    out.beta = xw.colPivHouseholderQr().solve(yw);
    const Eigen::VectorXd resid_w = yw - xw * out.beta;
    out.fitted = y - (resid_w.array() / sw.array()).matrix();
    return out;
}

// Winding number of a single closed ring around (px, py).
inline int winding_number(double px, double py, const std::vector<std::array<double, 2>>& ring) {
    double angle = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const double ax = ring[i][0] - px, ay = ring[i][1] - py;
        const double bx = ring[i + 1][0] - px, by = ring[i + 1][1] - py;
        angle += std::atan2(ax * by - ay * bx, ax * bx + ay * by);
    }
    return static_cast<int>(std::lround(angle / (2.0 * M_PI)));
}

inline bool winding_inside(double px, double py,
                           const std::vector<std::vector<std::array<double, 2>>>& rings) {
    int winding = 0;
    for (const auto& ring : rings) winding += winding_number(px, py, ring);
    return winding % 2 != 0;
}

} // namespace oracle
