#include "climeco/estimator.hpp"

#include "climeco/inference.hpp"
#include "climeco/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace climeco {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Per-term projection workspace: packed per-group inverse Gram matrices over
// the (possibly polynomial) basis, plus per-row basis values.
struct TermWork {
    const FeIndex* index = nullptr;
    int dim = 1;
    std::vector<double> phi1;      // centered/scaled trend value per row
    std::vector<double> ginv;      // n_groups * dim * dim
    std::vector<double> rhs;       // scratch: n_groups * dim
    std::vector<double> coef;      // scratch: n_groups * dim
};

TermWork prepare_term(const FeIndex& idx, const VectorXd& w) {
    TermWork work;
    work.index = &idx;
    work.dim = idx.degree + 1;
    const auto n = static_cast<std::size_t>(w.size());
    const int G = idx.n_groups;
    const int dim = work.dim;

    // effective weights: unweighted fallback for groups with zero weight sum
    std::vector<double> wsum(static_cast<std::size_t>(G), 0.0);
    for (std::size_t i = 0; i < n; ++i) wsum[static_cast<std::size_t>(idx.group[i])] += w[static_cast<Index>(i)];
    auto eff_w = [&](std::size_t i) {
        const double s = wsum[static_cast<std::size_t>(idx.group[i])];
        return s > 0.0 ? w[static_cast<Index>(i)] : 1.0;
    };

    if (dim == 1) {
        work.ginv.assign(static_cast<std::size_t>(G), 0.0);
        std::vector<double> sums(static_cast<std::size_t>(G), 0.0);
        for (std::size_t i = 0; i < n; ++i) sums[static_cast<std::size_t>(idx.group[i])] += eff_w(i);
        for (int g = 0; g < G; ++g)
            work.ginv[static_cast<std::size_t>(g)] = sums[static_cast<std::size_t>(g)] > 0.0
                                                         ? 1.0 / sums[static_cast<std::size_t>(g)]
                                                         : 0.0;
    } else {
        // center and scale the trend per group, then invert the small Gram
        std::vector<double> tsum(static_cast<std::size_t>(G), 0.0), tw(static_cast<std::size_t>(G), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = static_cast<std::size_t>(idx.group[i]);
            tsum[g] += eff_w(i) * idx.time[i];
            tw[g] += eff_w(i);
        }
        std::vector<double> center(static_cast<std::size_t>(G), 0.0);
        for (int g = 0; g < G; ++g) {
            const auto gs = static_cast<std::size_t>(g);
            center[gs] = tw[gs] > 0.0 ? tsum[gs] / tw[gs] : 0.0;
        }
        std::vector<double> scale(static_cast<std::size_t>(G), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = static_cast<std::size_t>(idx.group[i]);
            scale[g] = std::max(scale[g], std::abs(idx.time[i] - center[g]));
        }
        for (auto& s : scale)
            if (s <= 0.0) s = 1.0;

        work.phi1.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = static_cast<std::size_t>(idx.group[i]);
            work.phi1[i] = (idx.time[i] - center[g]) / scale[g];
        }

        std::vector<MatrixXd> gram(static_cast<std::size_t>(G), MatrixXd::Zero(dim, dim));
        VectorXd basis(dim);
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = static_cast<std::size_t>(idx.group[i]);
            basis(0) = 1.0;
            basis(1) = work.phi1[i];
            if (dim > 2) basis(2) = work.phi1[i] * work.phi1[i];
            gram[g].noalias() += eff_w(i) * basis * basis.transpose();
        }
        work.ginv.assign(static_cast<std::size_t>(G) * static_cast<std::size_t>(dim * dim), 0.0);
        for (int g = 0; g < G; ++g) {
            // pseudo-inverse: groups with fewer distinct time points than the
            // basis dimension project onto the representable span only
            Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(gram[static_cast<std::size_t>(g)]);
            MatrixXd pinv = cod.pseudoInverse();
            for (int r = 0; r < dim; ++r)
                for (int c = 0; c < dim; ++c)
                    work.ginv[(static_cast<std::size_t>(g) * static_cast<std::size_t>(dim) +
                               static_cast<std::size_t>(r)) *
                                  static_cast<std::size_t>(dim) +
                              static_cast<std::size_t>(c)] = pinv(r, c);
        }
    }
    work.rhs.assign(static_cast<std::size_t>(G * dim), 0.0);
    work.coef.assign(static_cast<std::size_t>(G * dim), 0.0);
    return work;
}

void project_out(TermWork& work, const VectorXd& w, double* col, std::size_t n) {
    const FeIndex& idx = *work.index;
    const int dim = work.dim;
    const auto G = static_cast<std::size_t>(idx.n_groups);

    if (dim == 1) {
        std::fill(work.rhs.begin(), work.rhs.end(), 0.0);
        std::vector<double>& rhs = work.rhs;
        for (std::size_t i = 0; i < n; ++i)
            rhs[static_cast<std::size_t>(idx.group[i])] += w[static_cast<Index>(i)] * col[i];
        for (std::size_t g = 0; g < G; ++g) work.coef[g] = rhs[g] * work.ginv[g];
        for (std::size_t i = 0; i < n; ++i) col[i] -= work.coef[static_cast<std::size_t>(idx.group[i])];
        return;
    }

    std::fill(work.rhs.begin(), work.rhs.end(), 0.0);
    const auto d = static_cast<std::size_t>(dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = static_cast<std::size_t>(idx.group[i]);
        const double wx = w[static_cast<Index>(i)] * col[i];
        const double p1 = work.phi1[i];
        work.rhs[g * d + 0] += wx;
        work.rhs[g * d + 1] += wx * p1;
        if (dim > 2) work.rhs[g * d + 2] += wx * p1 * p1;
    }
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c)
                acc += work.ginv[(g * d + r) * d + c] * work.rhs[g * d + c];
            work.coef[g * d + r] = acc;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = static_cast<std::size_t>(idx.group[i]);
        const double p1 = work.phi1[i];
        double fitv = work.coef[g * d + 0] + work.coef[g * d + 1] * p1;
        if (dim > 2) fitv += work.coef[g * d + 2] * p1 * p1;
        col[i] -= fitv;
    }
}

// Weighted-group-zero correction uses raw weights in the projections; rows in
// zero-weight groups were already handled by the unweighted Gram fallback, so
// project with max(w, 0) and a per-row effective weight of 1 in those groups.
VectorXd effective_weights(const FeIndex& idx, const VectorXd& w) {
    std::vector<double> wsum(static_cast<std::size_t>(idx.n_groups), 0.0);
    for (std::size_t i = 0; i < idx.group.size(); ++i)
        wsum[static_cast<std::size_t>(idx.group[i])] += w[static_cast<Index>(i)];
    VectorXd eff = w;
    for (std::size_t i = 0; i < idx.group.size(); ++i)
        if (wsum[static_cast<std::size_t>(idx.group[i])] <= 0.0) eff[static_cast<Index>(i)] = 1.0;
    return eff;
}

} // namespace

std::string FixedEffectTerm::label() const {
    std::string s = factor;
    if (!interact_factor.empty()) s += "#" + interact_factor;
    if (trend_degree > 0) s += "#trend" + std::to_string(trend_degree) + "(" + trend_column + ")";
    return s;
}

void RegressionSpec::validate() const {
    if (response.empty()) throw std::invalid_argument("spec: response is required");
    if (regressors.empty()) throw std::invalid_argument("spec: at least one regressor is required");
    for (const auto& r : regressors)
        if (r == response) throw std::invalid_argument("spec: response among regressors: " + r);
    std::set<std::string> seen(regressors.begin(), regressors.end());
    if (seen.size() != regressors.size())
        throw std::invalid_argument("spec: duplicate regressor names");
    for (const auto& term : fixed_effects) {
        if (term.factor.empty()) throw std::invalid_argument("spec: fixed effect without factor");
        if (term.trend_degree < 0 || term.trend_degree > 2)
            throw std::invalid_argument("spec: trend degree must be 1 or 2");
        if (term.trend_degree > 0 && !term.interact_factor.empty())
            throw std::invalid_argument("spec: trend and interaction on one term");
    }
}

RegressionSpec RegressionSpec::from_json(const nlohmann::json& j) {
    RegressionSpec spec;
    spec.response = j.at("response").get<std::string>();
    spec.regressors = j.at("regressors").get<std::vector<std::string>>();
    if (j.contains("fixed_effects")) {
        for (const auto& t : j.at("fixed_effects")) {
            FixedEffectTerm term;
            term.factor = t.at("factor").get<std::string>();
            term.interact_factor = t.value("interact", "");
            term.trend_degree = t.value("trend_degree", 0);
            term.trend_column = t.value("trend_column", "year");
            spec.fixed_effects.push_back(std::move(term));
        }
    }
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        if (w.contains("scheme")) {
            const std::string scheme = w.at("scheme").get<std::string>();
            if (scheme == "unit") spec.weights.scheme = WeightSpec::Scheme::unit;
            else if (scheme == "region") spec.weights.scheme = WeightSpec::Scheme::region;
            else if (scheme == "population") spec.weights.scheme = WeightSpec::Scheme::population;
            else if (scheme == "column") spec.weights.scheme = WeightSpec::Scheme::column;
            else throw std::invalid_argument("spec: unknown weight scheme: " + scheme);
        } else if (w.contains("column")) {
            spec.weights.scheme = WeightSpec::Scheme::column;
        }
        spec.weights.column =
            w.value("column", spec.weights.scheme == WeightSpec::Scheme::population ? "pop" : "");
        spec.weights.country_column = w.value("country_column", "country_id");
        spec.weights.year_column = w.value("year_column", "year");
        if (spec.weights.scheme == WeightSpec::Scheme::column && spec.weights.column.empty())
            throw std::invalid_argument("spec: weight column missing");
    }
    if (j.contains("vcov")) {
        const auto& v = j.at("vcov");
        const std::string kind = v.value("kind", "classical");
        if (kind == "classical") spec.vcov.kind = VcovSpec::Kind::classical;
        else if (kind == "robust") spec.vcov.kind = VcovSpec::Kind::robust;
        else if (kind == "cluster") {
            spec.vcov.kind = VcovSpec::Kind::cluster_oneway;
            spec.vcov.factor_a = v.at("factor").get<std::string>();
        } else if (kind == "twoway") {
            spec.vcov.kind = VcovSpec::Kind::cluster_twoway;
            const auto factors = v.at("factors").get<std::vector<std::string>>();
            if (factors.size() != 2)
                throw std::invalid_argument("spec: twoway vcov needs exactly two factors");
            spec.vcov.factor_a = factors[0];
            spec.vcov.factor_b = factors[1];
        } else if (kind == "hac") {
            spec.vcov.kind = VcovSpec::Kind::hac;
            spec.vcov.bandwidth = v.at("bandwidth").get<int>();
            spec.vcov.time_column = v.value("time", "year");
        } else {
            throw std::invalid_argument("spec: unknown vcov kind: " + kind);
        }
        spec.vcov.small_sample = v.value("small_sample", true);
    }
    spec.interaction_dummy = j.value("interaction_dummy", "");
    spec.validate();
    return spec;
}

nlohmann::json RegressionSpec::to_json() const {
    nlohmann::json j;
    j["response"] = response;
    j["regressors"] = regressors;
    j["fixed_effects"] = nlohmann::json::array();
    for (const auto& t : fixed_effects) {
        nlohmann::json jt{{"factor", t.factor}};
        if (!t.interact_factor.empty()) jt["interact"] = t.interact_factor;
        if (t.trend_degree > 0) {
            jt["trend_degree"] = t.trend_degree;
            jt["trend_column"] = t.trend_column;
        }
        j["fixed_effects"].push_back(jt);
    }
    switch (weights.scheme) {
    case WeightSpec::Scheme::unit: break;
    case WeightSpec::Scheme::column: j["weights"] = {{"column", weights.column}}; break;
    case WeightSpec::Scheme::region:
        j["weights"] = {{"scheme", "region"},
                        {"country_column", weights.country_column},
                        {"year_column", weights.year_column}};
        break;
    case WeightSpec::Scheme::population:
        j["weights"] = {{"scheme", "population"}, {"column", weights.column}};
        break;
    }
    switch (vcov.kind) {
    case VcovSpec::Kind::classical: j["vcov"] = {{"kind", "classical"}}; break;
    case VcovSpec::Kind::robust: j["vcov"] = {{"kind", "robust"}}; break;
    case VcovSpec::Kind::cluster_oneway:
        j["vcov"] = {{"kind", "cluster"}, {"factor", vcov.factor_a}};
        break;
    case VcovSpec::Kind::cluster_twoway:
        j["vcov"] = {{"kind", "twoway"}, {"factors", {vcov.factor_a, vcov.factor_b}}};
        break;
    case VcovSpec::Kind::hac:
        j["vcov"] = {{"kind", "hac"}, {"bandwidth", vcov.bandwidth}, {"time", vcov.time_column}};
        break;
    }
    if (vcov.kind != VcovSpec::Kind::classical) j["vcov"]["small_sample"] = vcov.small_sample;
    if (!interaction_dummy.empty()) j["interaction_dummy"] = interaction_dummy;
    return j;
}

FeIndex build_fe_index(const DataTable& table, std::span<const std::size_t> rows,
                       const FixedEffectTerm& term) {
    const DataTable::Factor full = term.interact_factor.empty()
                                       ? table.factor(term.factor)
                                       : table.factor_pair(term.factor, term.interact_factor);
    FeIndex idx;
    idx.label = term.label();
    idx.degree = term.trend_degree;
    idx.group.resize(rows.size());
    std::vector<std::int32_t> remap(full.levels.size(), -1);
    std::int32_t next = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::int32_t code = full.codes[rows[i]];
        if (code < 0)
            throw std::invalid_argument("fixed effect " + idx.label + " has missing level in sample");
        if (remap[static_cast<std::size_t>(code)] < 0) remap[static_cast<std::size_t>(code)] = next++;
        idx.group[i] = remap[static_cast<std::size_t>(code)];
    }
    idx.n_groups = next;
    if (term.trend_degree > 0) {
        const auto& t = table.numeric(term.trend_column);
        idx.time.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) idx.time[i] = t[rows[i]];
    }
    return idx;
}

AbsorbResult absorb(Eigen::Ref<MatrixXd> columns, const std::vector<FeIndex>& terms,
                    const VectorXd& weights, const AbsorbOptions& options) {
    AbsorbResult result;
    if (terms.empty() || columns.cols() == 0) return result;
    const auto n = static_cast<std::size_t>(columns.rows());
    for (const auto& term : terms)
        if (term.group.size() != n)
            throw std::invalid_argument("absorb: term row count mismatch for " + term.label);
    if (weights.size() != columns.rows())
        throw std::invalid_argument("absorb: weight length mismatch");

    std::vector<TermWork> work;
    std::vector<VectorXd> eff;
    work.reserve(terms.size());
    for (const auto& term : terms) {
        eff.push_back(effective_weights(term, weights));
        work.push_back(prepare_term(term, eff.back()));
    }

    const Index cols = columns.cols();
    MatrixXd snapshot(columns.rows(), cols);
    MatrixXd hist0, hist1;
    bool have_pair = false; // hist0, hist1 hold consecutive iterates (x, Gx)

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        snapshot = columns;
        for (std::size_t t = 0; t < work.size(); ++t)
            for (Index c = 0; c < cols; ++c)
                project_out(work[t], eff[t], columns.col(c).data(), n);
        result.iterations = iter;
        result.last_delta = (columns - snapshot).cwiseAbs().maxCoeff();
        if (result.last_delta < options.tolerance) return result;

        if (options.accelerate && terms.size() > 1) {
            if (!have_pair) {
                hist0 = snapshot;
                hist1 = columns;
                have_pair = true;
            } else {
                // columns = G(hist1); Irons-Tuck step per column from
                // (hist0, hist1, columns), then restart the chain
                for (Index c = 0; c < cols; ++c) {
                    VectorXd d2 = columns.col(c) - hist1.col(c);
                    VectorXd dd = d2 - (hist1.col(c) - hist0.col(c));
                    const double denom = dd.squaredNorm();
                    if (denom > 0.0) {
                        const double step = d2.dot(dd) / denom;
                        if (std::isfinite(step)) columns.col(c) -= step * d2;
                    }
                }
                have_pair = false;
            }
        }
    }
    std::ostringstream msg;
    msg << "absorption did not converge after " << options.max_iterations
        << " iterations; last max column change " << result.last_delta;
    throw std::runtime_error(msg.str());
}

Eigen::VectorXd region_scheme_weights(const DataTable& table, std::span<const std::size_t> rows,
                                      const std::string& country_column,
                                      const std::string& year_column) {
    const auto country = table.factor(country_column);
    const auto year = table.factor(year_column);
    std::unordered_map<std::int64_t, double> counts;
    counts.reserve(rows.size());
    auto key = [&](std::size_t r) {
        return (static_cast<std::int64_t>(country.codes[r]) << 32) |
               static_cast<std::int64_t>(static_cast<std::uint32_t>(year.codes[r]));
    };
    for (std::size_t r : rows) {
        if (country.codes[r] < 0 || year.codes[r] < 0)
            throw std::invalid_argument("region weights: missing country or year");
        counts[key(r)] += 1.0;
    }
    VectorXd w(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) w[static_cast<Index>(i)] = 1.0 / counts[key(rows[i])];
    return w;
}

namespace {

// Missing check for the columns a row must provide to enter the sample.
bool row_complete(const DataTable& table, std::size_t r, const std::vector<std::string>& numeric,
                  const std::vector<std::string>& categorical) {
    for (const auto& name : numeric)
        if (is_missing(table.numeric(name)[r])) return false;
    for (const auto& name : categorical) {
        if (table.is_numeric(name)) {
            if (is_missing(table.numeric(name)[r])) return false;
        } else if (table.strings(name)[r].empty()) {
            return false;
        }
    }
    return true;
}

long count_absorbed_parameters(const std::vector<FixedEffectTerm>& terms,
                               const std::vector<FeIndex>& indices, std::string& note) {
    long total = 0;
    std::vector<std::size_t> categorical;
    for (std::size_t t = 0; t < terms.size(); ++t)
        if (terms[t].trend_degree == 0) categorical.push_back(t);

    // categorical terms: G1, then G2 minus connected components, then G-1 each
    for (std::size_t k = 0; k < categorical.size(); ++k) {
        const FeIndex& idx = indices[categorical[k]];
        if (k == 0) {
            total += idx.n_groups;
        } else if (k == 1) {
            const FeIndex& first = indices[categorical[0]];
            std::vector<std::int32_t> parent(
                static_cast<std::size_t>(first.n_groups + idx.n_groups));
            std::iota(parent.begin(), parent.end(), 0);
            std::function<std::int32_t(std::int32_t)> find = [&](std::int32_t x) {
                while (parent[static_cast<std::size_t>(x)] != x) {
                    parent[static_cast<std::size_t>(x)] =
                        parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
                    x = parent[static_cast<std::size_t>(x)];
                }
                return x;
            };
            for (std::size_t i = 0; i < idx.group.size(); ++i) {
                const auto a = find(first.group[i]);
                const auto b = find(static_cast<std::int32_t>(first.n_groups) + idx.group[i]);
                if (a != b) parent[static_cast<std::size_t>(a)] = b;
            }
            std::set<std::int32_t> roots;
            for (std::size_t i = 0; i < idx.group.size(); ++i) roots.insert(find(first.group[i]));
            total += idx.n_groups - static_cast<long>(roots.size());
        } else {
            total += idx.n_groups - 1;
            note = "redundancy of 3+ categorical terms approximated as one per term";
        }
    }
    // trend terms: G*degree when the level intercepts are already counted via
    // a categorical on the same factor, else G*(degree+1)
    for (std::size_t t = 0; t < terms.size(); ++t) {
        if (terms[t].trend_degree == 0) continue;
        bool has_categorical = false;
        for (std::size_t c : categorical)
            if (terms[c].factor == terms[t].factor && terms[c].interact_factor.empty())
                has_categorical = true;
        total += static_cast<long>(indices[t].n_groups) *
                 (terms[t].trend_degree + (has_categorical ? 0 : 1));
    }
    return total;
}

} // namespace

Eigen::Index FitResult::coef_index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<Index>(i);
    return -1;
}

double FitResult::coef(const std::string& name) const {
    const Index i = coef_index(name);
    if (i < 0) throw std::out_of_range("no coefficient named " + name);
    return beta[i];
}

FitResult fit(const DataTable& panel, const RegressionSpec& spec, const FitOptions& options) {
    spec.validate();

    // resolve regressor sources; interaction regressors are formed on the fly
    struct Source {
        std::string name;
        std::string base;  // table column
        bool interacted = false;
    };
    std::vector<Source> sources;
    for (const auto& name : spec.regressors) {
        if (panel.has_column(name)) {
            sources.push_back({name, name, false});
            continue;
        }
        const std::string prefix = spec.interaction_dummy + "_x_";
        if (!spec.interaction_dummy.empty() && name.rfind(prefix, 0) == 0) {
            const std::string base = name.substr(prefix.size());
            if (panel.has_column(base)) {
                sources.push_back({name, base, true});
                continue;
            }
        }
        throw std::invalid_argument("no such regressor column: " + name);
    }

    std::vector<std::string> needed_numeric{spec.response};
    for (const auto& s : sources) needed_numeric.push_back(s.base);
    if (!spec.interaction_dummy.empty()) needed_numeric.push_back(spec.interaction_dummy);
    if (spec.weights.scheme == WeightSpec::Scheme::column ||
        spec.weights.scheme == WeightSpec::Scheme::population)
        needed_numeric.push_back(spec.weights.column);
    std::vector<std::string> needed_categorical;
    for (const auto& term : spec.fixed_effects) {
        needed_categorical.push_back(term.factor);
        if (!term.interact_factor.empty()) needed_categorical.push_back(term.interact_factor);
        if (term.trend_degree > 0) needed_numeric.push_back(term.trend_column);
    }
    if (spec.weights.scheme == WeightSpec::Scheme::region) {
        needed_categorical.push_back(spec.weights.country_column);
        needed_categorical.push_back(spec.weights.year_column);
    }
    switch (spec.vcov.kind) {
    case VcovSpec::Kind::cluster_oneway: needed_categorical.push_back(spec.vcov.factor_a); break;
    case VcovSpec::Kind::cluster_twoway:
        needed_categorical.push_back(spec.vcov.factor_a);
        needed_categorical.push_back(spec.vcov.factor_b);
        break;
    case VcovSpec::Kind::hac: needed_categorical.push_back(spec.vcov.time_column); break;
    default: break;
    }
    for (const auto& name : needed_numeric)
        if (!panel.has_column(name)) throw std::invalid_argument("no such column: " + name);
    for (const auto& name : needed_categorical)
        if (!panel.has_column(name)) throw std::invalid_argument("no such column: " + name);

    // listwise deletion for this specification
    std::vector<std::size_t> rows;
    rows.reserve(panel.n_rows());
    for (std::size_t r = 0; r < panel.n_rows(); ++r)
        if (row_complete(panel, r, needed_numeric, needed_categorical)) rows.push_back(r);

    const auto n = static_cast<Index>(rows.size());
    const auto k = static_cast<Index>(sources.size());
    if (n == 0) throw std::invalid_argument("estimation sample is empty");
    if (n < k) throw std::invalid_argument("fewer rows than parameters");

    // weights
    VectorXd w;
    long zero_weights = 0;
    switch (spec.weights.scheme) {
    case WeightSpec::Scheme::unit: w = VectorXd::Ones(n); break;
    case WeightSpec::Scheme::region:
        w = region_scheme_weights(panel, rows, spec.weights.country_column,
                                  spec.weights.year_column);
        break;
    case WeightSpec::Scheme::column:
    case WeightSpec::Scheme::population: {
        const auto& col = panel.numeric(spec.weights.column);
        w.resize(n);
        for (Index i = 0; i < n; ++i) {
            const double v = col[rows[static_cast<std::size_t>(i)]];
            if (v < 0.0) throw std::invalid_argument("negative weight in " + spec.weights.column);
            if (v == 0.0) ++zero_weights;
            w[i] = v;
        }
        break;
    }
    }
    if (!(w.sum() > 0.0)) throw std::invalid_argument("weights sum to zero");

    // data matrix: response first, regressors after
    MatrixXd data(n, k + 1);
    const auto& response_col = panel.numeric(spec.response);
    for (Index i = 0; i < n; ++i) data(i, 0) = response_col[rows[static_cast<std::size_t>(i)]];
    for (Index j = 0; j < k; ++j) {
        const auto& col = panel.numeric(sources[static_cast<std::size_t>(j)].base);
        if (sources[static_cast<std::size_t>(j)].interacted) {
            const auto& dummy = panel.numeric(spec.interaction_dummy);
            for (Index i = 0; i < n; ++i) {
                const std::size_t r = rows[static_cast<std::size_t>(i)];
                data(i, j + 1) = dummy[r] * col[r];
            }
        } else {
            for (Index i = 0; i < n; ++i) data(i, j + 1) = col[rows[static_cast<std::size_t>(i)]];
        }
    }
    const VectorXd y_orig = data.col(0);

    // absorb fixed effects
    FitResult result;
    std::vector<FeIndex> indices;
    indices.reserve(spec.fixed_effects.size());
    for (const auto& term : spec.fixed_effects) indices.push_back(build_fe_index(panel, rows, term));
    if (!indices.empty()) {
        const AbsorbResult ar = absorb(data, indices, w, options.absorb);
        result.absorb_iterations = ar.iterations;
    }
    result.absorbed_params = count_absorbed_parameters(spec.fixed_effects, indices, result.absorbed_note);

    // rank-revealing WLS on the absorbed data
    const VectorXd sqrtw = w.array().sqrt();
    MatrixXd xw = data.rightCols(k).array().colwise() * sqrtw.array();
    const VectorXd yw = data.col(0).array() * sqrtw.array();

    Eigen::ColPivHouseholderQR<MatrixXd> qr(xw);
    const MatrixXd r_full = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    const double pivot0 = std::abs(r_full(0, 0));
    if (!(pivot0 > 0.0)) throw std::invalid_argument("rank-zero design");
    Index rank = 0;
    while (rank < k && std::abs(r_full(rank, rank)) > options.rank_tolerance * pivot0) ++rank;

    const auto& perm = qr.colsPermutation().indices();
    std::vector<Index> kept;
    kept.reserve(static_cast<std::size_t>(rank));
    for (Index j = 0; j < rank; ++j) kept.push_back(static_cast<Index>(perm[j]));
    std::sort(kept.begin(), kept.end()); // stable reporting order
    for (Index j = rank; j < k; ++j)
        result.dropped.push_back(spec.regressors[static_cast<std::size_t>(perm[j])]);
    std::sort(result.dropped.begin(), result.dropped.end());

    MatrixXd xk(n, rank);
    MatrixXd design(n, rank);
    for (Index j = 0; j < rank; ++j) {
        xk.col(j) = xw.col(kept[static_cast<std::size_t>(j)]);
        design.col(j) = data.col(kept[static_cast<std::size_t>(j)] + 1);
        result.names.push_back(spec.regressors[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])]);
    }

    Eigen::HouseholderQR<MatrixXd> qr2(xk);
    result.beta = qr2.solve(yw);
    MatrixXd rk = qr2.matrixQR().topLeftCorner(rank, rank).template triangularView<Eigen::Upper>();
    MatrixXd rinv = rk.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(rank, rank));
    result.bread = rinv * rinv.transpose();

    result.rank = rank;
    result.n = n;
    result.residuals = data.col(0) - design * result.beta;
    result.fitted = y_orig - result.residuals;
    result.rss = (w.array() * result.residuals.array().square()).sum();
    const double wmean = (w.array() * y_orig.array()).sum() / w.sum();
    result.tss = (w.array() * (y_orig.array() - wmean).square()).sum();
    result.r2 = result.tss > 0.0 ? 1.0 - result.rss / result.tss : kMissing;
    result.dof = result.n - result.rank - result.absorbed_params;
    result.design = std::move(design);
    result.weights = std::move(w);
    if (zero_weights > 0)
        result.vcov_note = std::to_string(zero_weights) + " zero-weight rows";

    // factors retained for post-estimation clustering
    DataTable sample = panel.select_rows(rows);
    for (const auto& name : sample.column_names())
        if (!sample.is_numeric(name)) result.factors.emplace(name, sample.factor(name));
    auto keep_numeric_factor = [&](const std::string& name) {
        if (!name.empty() && sample.has_column(name) && sample.is_numeric(name) &&
            !result.factors.count(name))
            result.factors.emplace(name, sample.factor(name));
    };
    keep_numeric_factor("year");
    keep_numeric_factor(spec.vcov.factor_a);
    keep_numeric_factor(spec.vcov.factor_b);
    keep_numeric_factor(spec.vcov.time_column);
    result.sample_rows = std::move(rows);

    if (options.compute_vcov) {
        if (spec.vcov.kind == VcovSpec::Kind::classical) {
            const double sigma2 = result.dof > 0 ? result.rss / static_cast<double>(result.dof)
                                                 : kMissing;
            result.vcov = sigma2 * result.bread;
        } else {
            VcovResult v = compute_vcov(result, spec.vcov);
            result.vcov = std::move(v.matrix);
            if (!v.note.empty())
                result.vcov_note += (result.vcov_note.empty() ? "" : "; ") + v.note;
        }
    } else {
        result.vcov = MatrixXd::Constant(rank, rank, kMissing);
    }

    if (!options.keep_sample) {
        result.design.resize(0, 0);
        result.residuals.resize(0);
        result.fitted.resize(0);
        result.factors.clear();
        result.sample_rows.clear();
    }
    return result;
}

FitResult fit_heterogeneous(const DataTable& panel, RegressionSpec spec, const std::string& dummy,
                            const std::vector<std::string>& interacted, const FitOptions& options) {
    if (!panel.has_column(dummy)) throw std::invalid_argument("no such dummy column: " + dummy);
    const auto& d = panel.numeric(dummy);
    for (double v : d)
        if (!is_missing(v) && v != 0.0 && v != 1.0)
            throw std::invalid_argument("dummy column must be 0/1: " + dummy);
    spec.interaction_dummy = dummy;
    for (const auto& base : interacted) {
        if (!panel.has_column(base)) throw std::invalid_argument("no such column: " + base);
        spec.regressors.push_back(dummy + "_x_" + base);
    }
    return fit(panel, spec, options);
}

FitResult fit_binned(const DataTable& panel, RegressionSpec spec, int reference_t_bin,
                     int reference_p_bin, const FitOptions& options) {
    std::vector<std::string> regressors;
    char name[16];
    for (int m = 0; m < 12; ++m) {
        if (m == reference_t_bin) continue;
        std::snprintf(name, sizeof(name), "bin_t_%02d", m);
        if (panel.has_column(name)) regressors.emplace_back(name);
    }
    for (int m = 0; m < 12; ++m) {
        if (m == reference_p_bin) continue;
        std::snprintf(name, sizeof(name), "bin_p_%02d", m);
        if (panel.has_column(name)) regressors.emplace_back(name);
    }
    if (regressors.empty()) throw std::invalid_argument("no bin indicator columns in panel");
    spec.regressors = std::move(regressors);
    return fit(panel, spec, options);
}

nlohmann::json FitResult::to_json() const {
    nlohmann::json j;
    j["names"] = names;
    j["beta"] = std::vector<double>(beta.data(), beta.data() + beta.size());
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < vcov.rows(); ++r)
        rows.push_back(std::vector<double>(vcov.row(r).data(), vcov.row(r).data() + vcov.cols()));
    j["vcov"] = rows;
    j["dropped"] = dropped;
    j["n"] = n;
    j["r2"] = r2;
    j["dof"] = dof;
    j["rank"] = rank;
    j["absorbed_params"] = absorbed_params;
    j["absorb_iterations"] = absorb_iterations;
    j["rss"] = rss;
    j["tss"] = tss;
    if (!vcov_note.empty()) j["vcov_note"] = vcov_note;
    if (!absorbed_note.empty()) j["absorbed_note"] = absorbed_note;
    return j;
}

FitResult FitResult::from_json(const nlohmann::json& j) {
    FitResult f;
    f.names = j.at("names").get<std::vector<std::string>>();
    const auto beta = j.at("beta").get<std::vector<double>>();
    f.beta = Eigen::Map<const VectorXd>(beta.data(), static_cast<Index>(beta.size()));
    const auto& rows = j.at("vcov");
    f.vcov.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto row = rows[r].get<std::vector<double>>();
        for (std::size_t c = 0; c < row.size(); ++c)
            f.vcov(static_cast<Index>(r), static_cast<Index>(c)) = row[c];
    }
    f.dropped = j.value("dropped", std::vector<std::string>{});
    f.n = j.value("n", 0L);
    f.r2 = j.value("r2", kMissing);
    f.dof = j.value("dof", 0L);
    f.rank = j.value("rank", static_cast<long>(f.names.size()));
    f.absorbed_params = j.value("absorbed_params", 0L);
    f.absorb_iterations = j.value("absorb_iterations", 0);
    f.rss = j.value("rss", kMissing);
    f.tss = j.value("tss", kMissing);
    f.vcov_note = j.value("vcov_note", "");
    f.absorbed_note = j.value("absorbed_note", "");
    return f;
}

void FitResult::write_coefficient_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "name,estimate,se,z,p\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto k = static_cast<Index>(i);
        const double stderr_k = std::sqrt(vcov(k, k));
        const double z = beta[k] / stderr_k;
        out << names[i] << ',' << format_double(beta[k]) << ',' << format_double(stderr_k) << ','
            << format_double(z) << ',' << format_double(normal_two_sided_p(z)) << '\n';
    }
}

} // namespace climeco
