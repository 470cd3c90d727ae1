#pragma once

#include <fstream>
#include <optional>

#include <json.hpp>

#include "ri/instance.hpp"

namespace ri {

enum class UtilityKind { table, linear_in_covariate, additive_latent_state };

inline const char* to_string(UtilityKind k) {
    switch (k) {
        case UtilityKind::table: return "table";
        case UtilityKind::linear_in_covariate: return "linear_in_covariate";
        case UtilityKind::additive_latent_state: return "additive_latent_state";
    }
    return "?";
}

enum class EFamily { gumbel, normal, fixed };
enum class KappaFamily { lognormal, fixed };

struct HeterogeneitySpec {
    EFamily e_family = EFamily::gumbel;
    Vec e_location;         // per alternative
    double e_scale = 1.0;   // common scale (0 allowed only for fixed)
    KappaFamily kappa_family = KappaFamily::fixed;
    double kappa_m = 0.0;   // mean-log (lognormal) or the fixed value
    double kappa_s = 0.0;   // sd-log
    CostFamily cost_family = CostFamily::quadratic;
};

// Attribute values for every alternative: x[a] is alternative a's vector.
using CovariatePoint = std::vector<Vec>;

// One rectangular grid axis: the values taken by attribute `attr` of
// alternative `alt`.
struct GridAxis {
    std::size_t alt = 0;
    std::size_t attr = 0;
    Vec values;
};

struct Scenario {
    std::string name;
    std::vector<std::string> alternatives;
    std::vector<std::string> states;
    Belief prior;
    UtilityKind kind = UtilityKind::table;

    Mat table;                       // table: K x J
    Mat base;                        // linear: K x J intercepts
    std::vector<Mat> slopes;         // linear: per alternative, L_a x J
    Vec base_good;                   // latent: K state-free intercepts
    Mat slopes_good;                 // latent: K x L_a
    Mat loadings;                    // latent: K x J state loadings

    std::vector<GridAxis> axes;      // rectangular covariate grid
    HeterogeneitySpec het;
    Vec latent_state_dist;           // latent variant only
    long draws = 1000;
    std::uint64_t seed = 1;

    std::size_t num_alternatives() const { return alternatives.size(); }
    std::size_t num_states() const { return states.size(); }
    bool is_latent() const { return kind == UtilityKind::additive_latent_state; }
    bool has_covariates() const { return kind != UtilityKind::table; }

    std::size_t attrs_of(std::size_t a) const {
        if (kind == UtilityKind::linear_in_covariate) return slopes[a].size();
        if (kind == UtilityKind::additive_latent_state) return slopes_good[a].size();
        return 0;
    }

    CovariatePoint zero_point() const {
        CovariatePoint x(num_alternatives());
        for (std::size_t a = 0; a < num_alternatives(); ++a) x[a] = Vec(attrs_of(a), 0.0);
        return x;
    }

    // K x J utility matrix at a covariate point, plus an optional additive
    // tilt (used by the envelope-derivative diagnostics).
    Mat utility_at(const CovariatePoint& x, const Mat* tilt = nullptr) const {
        const std::size_t K = num_alternatives(), J = num_states();
        Mat u = zeros(K, J);
        for (std::size_t a = 0; a < K; ++a)
            for (std::size_t j = 0; j < J; ++j) {
                double v = 0.0;
                switch (kind) {
                    case UtilityKind::table: v = table[a][j]; break;
                    case UtilityKind::linear_in_covariate:
                        v = base[a][j];
                        for (std::size_t p = 0; p < slopes[a].size(); ++p)
                            v += slopes[a][p][j] * x[a][p];
                        break;
                    case UtilityKind::additive_latent_state:
                        v = base_good[a] + loadings[a][j];
                        for (std::size_t p = 0; p < slopes_good[a].size(); ++p)
                            v += slopes_good[a][p] * x[a][p];
                        break;
                }
                if (tilt) v += (*tilt)[a][j];
                u[a][j] = v;
            }
        return u;
    }

    // State-free part u_a(x_a) of the latent variant.
    double good_utility(std::size_t a, const CovariatePoint& x) const {
        if (!is_latent()) throw VariantMismatch("good_utility: not a latent-state scenario");
        double v = base_good[a];
        for (std::size_t p = 0; p < slopes_good[a].size(); ++p)
            v += slopes_good[a][p] * x[a][p];
        return v;
    }
};

// --- grid -------------------------------------------------------------------

inline std::vector<CovariatePoint> enumerate_grid(const Scenario& sc) {
    if (!sc.has_covariates()) return {};
    std::vector<CovariatePoint> pts;
    CovariatePoint cur = sc.zero_point();
    std::function<void(std::size_t)> rec = [&](std::size_t axis) {
        if (axis == sc.axes.size()) {
            pts.push_back(cur);
            return;
        }
        for (double v : sc.axes[axis].values) {
            cur[sc.axes[axis].alt][sc.axes[axis].attr] = v;
            rec(axis + 1);
        }
    };
    rec(0);
    return pts;
}

inline std::string point_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "x%04zu", index);
    return buf;
}

inline bool point_in_hull(const Scenario& sc, const CovariatePoint& x) {
    for (const GridAxis& ax : sc.axes) {
        double lo = kPosInf, hi = kNegInf;
        for (double v : ax.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double v = x[ax.alt][ax.attr];
        if (v < lo - 1e-12 || v > hi + 1e-12) return false;
    }
    return true;
}

// --- parsing ----------------------------------------------------------------

namespace detail {

inline Vec parse_vec(const nlohmann::json& j) {
    Vec v;
    for (const auto& e : j) {
        if (e.is_string()) {
            const std::string s = e.get<std::string>();
            if (s == "-inf")
                v.push_back(kNegInf);
            else
                throw ConfigError("numeric field holds non-numeric string '" + s + "'");
        } else {
            v.push_back(e.get<double>());
        }
    }
    return v;
}

inline Mat parse_mat(const nlohmann::json& j) {
    Mat m;
    for (const auto& row : j) m.push_back(parse_vec(row));
    return m;
}

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ConfigError(what);
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
    using detail::parse_mat;
    using detail::parse_vec;
    using detail::require;
    Scenario sc;
    try {
        sc.name = j.value("name", "scenario");
        for (const auto& a : j.at("alternatives")) sc.alternatives.push_back(a);
        for (const auto& s : j.at("states")) sc.states.push_back(s);
        const std::size_t K = sc.alternatives.size(), J = sc.states.size();
        require(K >= 1, "field 'alternatives': need at least one");
        require(J >= 2, "field 'states': need at least two");
        {
            Vec prior = parse_vec(j.at("prior"));
            require(prior.size() == J, "field 'prior': wrong length");
            double s = 0.0;
            for (double v : prior) {
                require(v >= 0.0 && v <= 1.0, "field 'prior': entry outside [0,1]");
                s += v;
            }
            require(std::abs(s - 1.0) <= 1e-9,
                    "field 'prior': entries sum to " + fmt17(s) + ", not 1");
            sc.prior = Belief(std::move(prior));
        }
        const auto& ut = j.at("utility");
        const std::string kind = ut.at("spec");
        if (kind == "table") {
            sc.kind = UtilityKind::table;
            sc.table = parse_mat(ut.at("table"));
            require(sc.table.size() == K && sc.table[0].size() == J,
                    "field 'utility.table': wrong shape");
        } else if (kind == "linear_in_covariate") {
            sc.kind = UtilityKind::linear_in_covariate;
            sc.base = parse_mat(ut.at("base"));
            require(sc.base.size() == K && sc.base[0].size() == J,
                    "field 'utility.base': wrong shape");
            for (const auto& s : ut.at("slopes")) sc.slopes.push_back(parse_mat(s));
            require(sc.slopes.size() == K, "field 'utility.slopes': wrong length");
            for (const auto& m : sc.slopes)
                for (const auto& row : m)
                    require(row.size() == J, "field 'utility.slopes': row length != J");
        } else if (kind == "additive_latent_state") {
            sc.kind = UtilityKind::additive_latent_state;
            sc.base_good = parse_vec(ut.at("base"));
            sc.slopes_good = parse_mat(ut.at("slopes"));
            sc.loadings = parse_mat(ut.at("loadings"));
            require(sc.base_good.size() == K, "field 'utility.base': wrong length");
            require(sc.slopes_good.size() == K, "field 'utility.slopes': wrong length");
            require(sc.loadings.size() == K && sc.loadings[0].size() == J,
                    "field 'utility.loadings': wrong shape");
            for (std::size_t a = 0; a < K; ++a)
                for (std::size_t b = a + 1; b < K; ++b)
                    require(linf_dist(sc.loadings[a], sc.loadings[b]) > 0.0,
                            "field 'utility.loadings': loadings of '" + sc.alternatives[a] +
                                "' and '" + sc.alternatives[b] + "' coincide");
        } else {
            throw ConfigError("field 'utility.spec': unknown kind '" + kind + "'");
        }
        if (sc.has_covariates()) {
            require(j.contains("covariates"), "field 'covariates': required");
            for (const auto& ax : j.at("covariates").at("axes")) {
                GridAxis axis;
                const std::string alt = ax.at("alternative");
                auto it = std::find(sc.alternatives.begin(), sc.alternatives.end(), alt);
                require(it != sc.alternatives.end(),
                        "field 'covariates.axes': unknown alternative '" + alt + "'");
                axis.alt = static_cast<std::size_t>(it - sc.alternatives.begin());
                axis.attr = ax.value("attribute", 0);
                axis.values = parse_vec(ax.at("values"));
                require(!axis.values.empty(),
                        "field 'covariates.axes': empty value list for '" + alt + "'");
                require(axis.attr < sc.attrs_of(axis.alt),
                        "field 'covariates.axes': attribute index out of range");
                sc.axes.push_back(std::move(axis));
            }
            require(!sc.axes.empty(), "field 'covariates.axes': empty grid");
        }
        const auto& het = j.at("heterogeneity");
        {
            const auto& e = het.at("e");
            const std::string fam = e.at("family");
            if (fam == "gumbel")
                sc.het.e_family = EFamily::gumbel;
            else if (fam == "normal")
                sc.het.e_family = EFamily::normal;
            else if (fam == "fixed")
                sc.het.e_family = EFamily::fixed;
            else
                throw ConfigError("field 'heterogeneity.e.family': unknown '" + fam + "'");
            sc.het.e_location = parse_vec(e.at("location"));
            require(sc.het.e_location.size() == K,
                    "field 'heterogeneity.e.location': wrong length");
            sc.het.e_scale = e.value("scale", 1.0);
            if (sc.het.e_family != EFamily::fixed)
                require(sc.het.e_scale > 0.0, "field 'heterogeneity.e.scale': must be > 0");
        }
        {
            const auto& k = het.at("kappa");
            const std::string fam = k.at("family");
            if (fam == "lognormal") {
                sc.het.kappa_family = KappaFamily::lognormal;
                sc.het.kappa_m = k.at("mean_log");
                sc.het.kappa_s = k.at("sd_log");
            } else if (fam == "fixed") {
                sc.het.kappa_family = KappaFamily::fixed;
                sc.het.kappa_m = k.at("value");
                require(sc.het.kappa_m > 0.0, "field 'heterogeneity.kappa.value': must be > 0");
            } else {
                throw ConfigError("field 'heterogeneity.kappa.family': unknown '" + fam + "'");
            }
        }
        sc.het.cost_family = cost_family_from_string(het.at("cost_family"));
        if (sc.is_latent()) {
            if (j.contains("latent_state_dist")) {
                sc.latent_state_dist = parse_vec(j.at("latent_state_dist"));
                require(sc.latent_state_dist.size() == J,
                        "field 'latent_state_dist': wrong length");
            } else {
                sc.latent_state_dist = Vec(J, 1.0 / static_cast<double>(J));
            }
        }
        if (j.contains("mc")) {
            sc.draws = j.at("mc").value("draws", 1000);
            sc.seed = j.at("mc").value("seed", 1ull);
        }
        require(sc.draws >= 1, "field 'mc.draws': must be >= 1");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario parse error: ") + e.what());
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scenario file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_scenario(j);
}

}  // namespace ri
