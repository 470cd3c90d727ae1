#pragma once

#include "ri/table.hpp"

namespace ri {

// Identification runs in two regimes: `state` uses conditional choice means
// per state; `market` uses only the unconditional shares of the latent-state
// variant.
enum class IdMode { state, market };

struct IdOptions {
    long draws = -1;
    std::uint64_t seed = 0;
    int threads = 0;
    double band = 4.0;       // SE multiplier for stochastic tolerances
    double abs_tol = 1e-8;   // floor for deterministic comparisons
};

namespace detail {

inline SimOptions sim_options(const IdOptions& o) {
    SimOptions s;
    s.draws = o.draws;
    s.seed = o.seed;
    s.threads = o.threads;
    return s;
}

// Mean vector and covariance of a set of per-draw scalars, with a delta-method
// SE for any smooth composition of the means (gradient by central difference
// on the mean coordinates).
struct StatBundle {
    Vec mean;
    Mat cov;
    long n = 0;

    template <class Fn>
    double se_of(Fn&& g) const {
        const std::size_t m = mean.size();
        Vec grad(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double h = 1e-6 * std::max(std::abs(mean[i]), 1e-3);
            Vec up = mean, dn = mean;
            up[i] += h;
            dn[i] -= h;
            grad[i] = (g(up) - g(dn)) / (2.0 * h);
        }
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) var += grad[i] * cov[i][j] * grad[j];
        return std::sqrt(std::max(0.0, var) / static_cast<double>(n));
    }
};

inline StatBundle run_specs(const Scenario& sc, const std::vector<CovariatePoint>& pts,
                            const std::vector<ScalarSpec>& specs, const IdOptions& opt) {
    MultiStats ms = simulate_multi(sc, pts, specs, sim_options(opt));
    return StatBundle{ms.scalar_mean, ms.scalar_cov, ms.draws_used};
}

inline const GridAxis& axis_of(const Scenario& sc, std::size_t alt, std::size_t attr) {
    const GridAxis* found = nullptr;
    for (const GridAxis& ax : sc.axes)
        if (ax.alt == alt && ax.attr == attr) {
            if (found)
                throw GridNotRectangular("duplicate grid axis for one (alternative, attribute)");
            found = &ax;
        }
    if (!found)
        throw GridNotRectangular("no grid axis for alternative '" + sc.alternatives[alt] +
                                 "' attribute " + std::to_string(attr));
    return *found;
}

inline std::size_t value_index(const GridAxis& ax, double v) {
    for (std::size_t i = 0; i < ax.values.size(); ++i)
        if (std::abs(ax.values[i] - v) <= 1e-9) return i;
    throw ConfigError("covariate value " + fmt17(v) + " is not on its grid axis");
}

inline CovariatePoint with_coord(CovariatePoint x, std::size_t alt, std::size_t attr,
                                 double v) {
    x[alt][attr] = v;
    return x;
}

// Per-draw cell selector: state >= 0 conditional, kMarginal for market mode.
inline int cell_state(IdMode mode, int j) { return mode == IdMode::market ? kMarginal : j; }

}  // namespace detail

// --- envelope-derivative diagnostics -----------------------------------------

struct RoyResult {
    double fd = 0.0;        // finite-difference derivative of the mean value
    double fd_se = 0.0;
    double prob_side = 0.0; // mean conditional probability times prior mass
    double prob_se = 0.0;
    double residual = 0.0;
    double band_se = 0.0;   // combined SE for the comparison band
};

// Residual of the envelope identity: the tilt-derivative of mean indirect
// utility against the prior-weighted mean choice probability. The two sides
// are simulated separately with common random numbers; the comparison band
// combines their reported SEs in quadrature (conservative under the positive
// coupling the shared draws induce).
inline RoyResult roy_residual(const Scenario& sc, const CovariatePoint& x, std::size_t a,
                              std::size_t j, double h, const IdOptions& opt = {}) {
    if (h < 1e-6) throw StepTooSmall("roy_residual: tilt step below 1e-6");
    const std::size_t K = sc.num_alternatives(), J = sc.num_states();
    Mat tilt_up = zeros(K, J), tilt_dn = zeros(K, J);
    tilt_up[a][j] = h;
    tilt_dn[a][j] = -h;
    SimOptions so = detail::sim_options(opt);
    PointStats base = conditional_mean(sc, x, so);
    so.tilt = &tilt_up;
    PointStats up = conditional_mean(sc, x, so);
    so.tilt = &tilt_dn;
    PointStats dn = conditional_mean(sc, x, so);
    RoyResult r;
    r.fd = (up.value_mean - dn.value_mean) / (2.0 * h);
    r.fd_se = std::sqrt(up.value_se * up.value_se + dn.value_se * dn.value_se) / (2.0 * h);
    r.prob_side = base.mean_cond[a][j] * sc.prior.p[j];
    r.prob_se = base.se_cond[a][j] * sc.prior.p[j];
    r.residual = std::abs(r.fd - r.prob_side);
    r.band_se = std::sqrt(r.fd_se * r.fd_se + r.prob_se * r.prob_se);
    return r;
}

struct SlutskyResult {
    Mat hessian;             // (K*J) x (K*J), channel c = a*J + j
    Mat hessian_se;
    double symmetry_residual = 0.0;   // max |H_cd - H_dc| over same-state pairs
    double symmetry_band_se = 0.0;    // combined SE at the worst pair
    double min_eigenvalue = 0.0;      // of the symmetrized Hessian
};

// Hessian of mean indirect utility in the tilt coordinates, estimated as the
// tilt-derivative of the mean choice probabilities. Cross entries (c,d) and
// (d,c) come from different simulations, so their agreement is an actual
// symmetry test rather than an identity of the estimator.
inline SlutskyResult slutsky_check(const Scenario& sc, const CovariatePoint& x, double h,
                                   const IdOptions& opt = {}) {
    if (h < 1e-6) throw StepTooSmall("slutsky_check: tilt step below 1e-6");
    const std::size_t K = sc.num_alternatives(), J = sc.num_states();
    const std::size_t n = K * J;
    SlutskyResult res;
    res.hessian = zeros(n, n);
    res.hessian_se = zeros(n, n);
    SimOptions so = detail::sim_options(opt);
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t j = 0; j < J; ++j) {
            Mat tilt_up = zeros(K, J), tilt_dn = zeros(K, J);
            tilt_up[a][j] = h;
            tilt_dn[a][j] = -h;
            so.tilt = &tilt_up;
            PointStats up = conditional_mean(sc, x, so);
            so.tilt = &tilt_dn;
            PointStats dn = conditional_mean(sc, x, so);
            const std::size_t c = a * J + j;
            for (std::size_t b = 0; b < K; ++b)
                for (std::size_t k = 0; k < J; ++k) {
                    const std::size_t d = b * J + k;
                    res.hessian[c][d] = (up.mean_cond[b][k] - dn.mean_cond[b][k]) *
                                        sc.prior.p[k] / (2.0 * h);
                    res.hessian_se[c][d] =
                        std::sqrt(up.se_cond[b][k] * up.se_cond[b][k] +
                                  dn.se_cond[b][k] * dn.se_cond[b][k]) *
                        sc.prior.p[k] / (2.0 * h);
                }
        }
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = a + 1; b < K; ++b)
            for (std::size_t j = 0; j < J; ++j) {
                const std::size_t c = a * J + j, d = b * J + j;
                const double asym = std::abs(res.hessian[c][d] - res.hessian[d][c]);
                if (asym > res.symmetry_residual) {
                    res.symmetry_residual = asym;
                    res.symmetry_band_se =
                        std::sqrt(res.hessian_se[c][d] * res.hessian_se[c][d] +
                                  res.hessian_se[d][c] * res.hessian_se[d][c]);
                }
            }
    Mat sym = zeros(n, n);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t d = 0; d < n; ++d)
            sym[c][d] = 0.5 * (res.hessian[c][d] + res.hessian[d][c]);
    Vec ev = symmetric_eigenvalues(sym);
    res.min_eigenvalue = *std::min_element(ev.begin(), ev.end());
    return res;
}

// --- slope-ratio identification ----------------------------------------------

struct RatioResult {
    double ratio = 0.0;
    double se = 0.0;
    double numerator = 0.0;    // d E[P(b|j)] / d x_{a,p}
    double numerator_se = 0.0;
    double denominator = 0.0;  // d E[P(a|j)] / d x_{b,q}
    double denominator_se = 0.0;
};

namespace detail {

inline RatioResult cross_ratio(const Scenario& sc, const CovariatePoint& x, std::size_t a,
                               std::size_t p, std::size_t b, std::size_t q, int j_or_marg,
                               const IdOptions& opt) {
    const GridAxis& ax_a = axis_of(sc, a, p);
    const GridAxis& ax_b = axis_of(sc, b, q);
    const std::size_t ia = value_index(ax_a, x[a][p]);
    const std::size_t ib = value_index(ax_b, x[b][q]);
    if (ia == 0 || ia + 1 >= ax_a.values.size())
        throw ConfigError("ratio point not interior along the (" + sc.alternatives[a] +
                          "," + std::to_string(p) + ") axis");
    if (ib == 0 || ib + 1 >= ax_b.values.size())
        throw ConfigError("ratio point not interior along the (" + sc.alternatives[b] +
                          "," + std::to_string(q) + ") axis");
    const double va_up = ax_a.values[ia + 1], va_dn = ax_a.values[ia - 1];
    const double vb_up = ax_b.values[ib + 1], vb_dn = ax_b.values[ib - 1];
    std::vector<CovariatePoint> pts = {
        with_coord(x, a, p, va_up), with_coord(x, a, p, va_dn),
        with_coord(x, b, q, vb_up), with_coord(x, b, q, vb_dn)};
    ScalarSpec num, den;
    num.terms = {{0, b, j_or_marg, 1.0}, {1, b, j_or_marg, -1.0}};
    den.terms = {{2, a, j_or_marg, 1.0}, {3, a, j_or_marg, -1.0}};
    StatBundle st = run_specs(sc, pts, {num, den}, opt);
    const double dva = va_up - va_dn, dvb = vb_up - vb_dn;
    RatioResult r;
    r.numerator = st.mean[0] / dva;
    r.denominator = st.mean[1] / dvb;
    r.numerator_se = std::sqrt(std::max(0.0, st.cov[0][0]) / st.n) / dva;
    r.denominator_se = std::sqrt(std::max(0.0, st.cov[1][1]) / st.n) / dvb;
    if (r.denominator == 0.0 || std::abs(r.denominator) < 10.0 * r.denominator_se)
        throw NotPaired("cross-derivative denominator indistinguishable from zero at this point");
    auto composed = [dva, dvb](const Vec& m) { return (m[0] / dva) / (m[1] / dvb); };
    r.ratio = composed(st.mean);
    r.se = st.se_of(composed);
    return r;
}

}  // namespace detail

// Ratio of cross finite differences of the conditional means at x:
// d E[P(b|j)]/d x_{a,p} over d E[P(a|j)]/d x_{b,q}, which identifies the
// utility slope ratio d u_a/d x_{a,p} over d u_b/d x_{b,q}.
inline RatioResult utility_ratio(const Scenario& sc, const CovariatePoint& x, std::size_t a,
                                 std::size_t p, std::size_t b, std::size_t q, std::size_t j,
                                 const IdOptions& opt = {}) {
    if (a == b)
        throw ConfigError("utility_ratio: regressors must belong to distinct alternatives");
    return detail::cross_ratio(sc, x, a, p, b, q, static_cast<int>(j), opt);
}

// Same ratio from unconditional shares only (latent-state variant).
inline RatioResult market_utility_ratio(const Scenario& sc, const CovariatePoint& x,
                                        std::size_t a, std::size_t p, std::size_t b,
                                        std::size_t q, const IdOptions& opt = {}) {
    if (a == b)
        throw ConfigError("market_utility_ratio: regressors must belong to distinct alternatives");
    if (!sc.is_latent())
        throw VariantMismatch("market_utility_ratio: scenario has no latent states");
    return detail::cross_ratio(sc, x, a, p, b, q, kMarginal, opt);
}

// --- utility recovery ----------------------------------------------------------

struct Normalization {
    std::size_t anchor_alt = 1;   // the good whose slope is pinned
    std::size_t anchor_attr = 0;
    double anchor_value = 0.0;    // interior grid value where the slope is +-1
    int sign = -1;                // the pinned slope
    std::size_t state = 0;        // state channel (ignored in market mode)
    bool price_anchor = false;    // when true, welfare output reads as currency
};

struct RecoveredPoint {
    double x = 0.0;
    double u = 0.0;
    double se = 0.0;
};

struct RecoveredUtility {
    // recovered[a][p] tabulates u_a along the (a,p) axis, zero at the origin.
    std::vector<std::vector<std::vector<RecoveredPoint>>> recovered;
    Normalization normalization;
};

// Recovers the utility indices over the grid by integrating slope-ratio
// estimates along each covariate axis (midpoint rule on the grid cells, so
// every derivative estimate stays inside the support). The anchor good's own
// curve comes from the ratio chain through a reference good. SEs propagate
// through the full covariance of the per-draw cell differences.
inline RecoveredUtility recover_utilities(const Scenario& sc, const Normalization& norm,
                                          IdMode mode, const IdOptions& opt = {}) {
    using detail::axis_of;
    using detail::value_index;
    using detail::with_coord;
    const std::size_t K = sc.num_alternatives();
    if (std::abs(norm.sign) != 1)
        throw ConfigError("normalization sign must be +1 or -1");
    if (mode == IdMode::market && !sc.is_latent())
        throw VariantMismatch("market recovery requires a latent-state scenario");
    const int cell = detail::cell_state(mode, static_cast<int>(norm.state));
    const std::size_t b = norm.anchor_alt, q = norm.anchor_attr;
    const GridAxis& ax_b = axis_of(sc, b, q);
    const std::size_t ib = value_index(ax_b, norm.anchor_value);
    if (ib == 0 || ib + 1 >= ax_b.values.size())
        throw ConfigError("normalization anchor must be interior on its axis");
    // Re-simulated central differences use quarter-cell offsets: the points
    // stay inside the support and the O(h^2) truncation drops 16-fold versus
    // full-cell steps.
    const double hb_up = norm.anchor_value + 0.125 * (ax_b.values[ib + 1] - ax_b.values[ib - 1]);
    const double hb_dn = norm.anchor_value - 0.125 * (ax_b.values[ib + 1] - ax_b.values[ib - 1]);

    // Base point: anchor coordinate at its anchor value, every other axis at
    // its middle grid value (interior for odd-length axes).
    CovariatePoint base = sc.zero_point();
    for (const GridAxis& ax : sc.axes)
        base[ax.alt][ax.attr] = ax.values[(ax.values.size() - 1) / 2];
    base[b][q] = norm.anchor_value;

    const std::size_t aref = [&] {
        for (std::size_t a = 0; a < K; ++a)
            if (a != b) return a;
        throw ConfigError("recovery needs at least two alternatives");
    }();
    const GridAxis& ax_ref = axis_of(sc, aref, 0);
    const std::size_t iref = value_index(ax_ref, base[aref][0]);
    if (iref == 0 || iref + 1 >= ax_ref.values.size())
        throw ConfigError("reference-good base coordinate must be interior on its axis");
    const double ref_mid = base[aref][0];
    const double href_up = ref_mid + 0.125 * (ax_ref.values[iref + 1] - ax_ref.values[iref - 1]);
    const double href_dn = ref_mid - 0.125 * (ax_ref.values[iref + 1] - ax_ref.values[iref - 1]);

    RecoveredUtility out;
    out.normalization = norm;
    out.recovered.resize(K);

    for (std::size_t a = 0; a < K; ++a) {
        out.recovered[a].resize(sc.attrs_of(a));
        for (std::size_t p = 0; p < sc.attrs_of(a); ++p) {
            const GridAxis& ax = axis_of(sc, a, p);
            if (std::abs(ax.values.front()) > 1e-12)
                throw ConfigError("axis for alternative '" + sc.alternatives[a] +
                                  "' must start at 0 (location anchor)");
            const std::size_t M = ax.values.size();
            std::vector<CovariatePoint> pts;
            std::vector<ScalarSpec> specs;

            if (a != b) {
                // cells along (a,p) at the base's other coordinates; the
                // anchor good's slope is pinned at (b,q) = anchor_value.
                // num_c: P(b|.) difference across the cell  (d/dx_{a,p})
                // den_c: P(a|.) central difference along (b,q) at the midpoint
                for (std::size_t c = 0; c + 1 < M; ++c) {
                    CovariatePoint lo = with_coord(base, a, p, ax.values[c]);
                    CovariatePoint hi = with_coord(base, a, p, ax.values[c + 1]);
                    const double mid = 0.5 * (ax.values[c] + ax.values[c + 1]);
                    CovariatePoint md = with_coord(base, a, p, mid);
                    const std::size_t i0 = pts.size();
                    pts.push_back(hi);
                    pts.push_back(lo);
                    pts.push_back(with_coord(md, b, q, hb_up));
                    pts.push_back(with_coord(md, b, q, hb_dn));
                    ScalarSpec num, den;
                    num.terms = {{i0, b, cell, 1.0}, {i0 + 1, b, cell, -1.0}};
                    den.terms = {{i0 + 2, a, cell, 1.0}, {i0 + 3, a, cell, -1.0}};
                    specs.push_back(num);
                    specs.push_back(den);
                }
                detail::StatBundle st = detail::run_specs(sc, pts, specs, opt);
                auto& curve = out.recovered[a][p];
                curve.push_back({ax.values[0], 0.0, 0.0});
                for (std::size_t k = 1; k < M; ++k) {
                    auto composed = [&, k](const Vec& m) {
                        double u = 0.0;
                        for (std::size_t c = 0; c < k; ++c) {
                            const double num = m[2 * c];
                            const double den = m[2 * c + 1] / (hb_up - hb_dn);
                            u += norm.sign * num / den;
                        }
                        return u;
                    };
                    RecoveredPoint rp;
                    rp.x = ax.values[k];
                    rp.u = composed(st.mean);
                    rp.se = st.se_of(composed);
                    // pairing screen per cell on the raw denominator
                    for (std::size_t c = 0; c < k; ++c) {
                        const double den = st.mean[2 * c + 1];
                        const double se =
                            std::sqrt(std::max(0.0, st.cov[2 * c + 1][2 * c + 1]) / st.n);
                        if (den == 0.0 || std::abs(den) < 10.0 * se)
                            throw NotPaired("recovery cell " + std::to_string(c) +
                                            " on alternative '" + sc.alternatives[a] +
                                            "' fails the pairing screen");
                    }
                    curve.push_back(rp);
                }
            } else {
                // Anchor good: chain through the reference good. The pinned
                // slope at the anchor point scales the reference ratio R*;
                // along the axis, u_b'(mid) = sign * R* * den_c / num_c with
                //   R*   = dP(b)/dx_ref over dP(aref)/dx_b, both at base,
                //   num_c= dP(b)/dx_ref at the cell midpoint,
                //   den_c= dP(aref)/dx_b across the cell.
                const std::size_t i_rs = pts.size();
                pts.push_back(with_coord(base, aref, 0, href_up));
                pts.push_back(with_coord(base, aref, 0, href_dn));
                pts.push_back(with_coord(base, b, q, hb_up));
                pts.push_back(with_coord(base, b, q, hb_dn));
                ScalarSpec rstar_num, rstar_den;
                rstar_num.terms = {{i_rs, b, cell, 1.0}, {i_rs + 1, b, cell, -1.0}};
                rstar_den.terms = {{i_rs + 2, aref, cell, 1.0}, {i_rs + 3, aref, cell, -1.0}};
                specs.push_back(rstar_num);
                specs.push_back(rstar_den);
                for (std::size_t c = 0; c + 1 < M; ++c) {
                    CovariatePoint lo = with_coord(base, b, q, ax.values[c]);
                    CovariatePoint hi = with_coord(base, b, q, ax.values[c + 1]);
                    const double mid = 0.5 * (ax.values[c] + ax.values[c + 1]);
                    CovariatePoint md = with_coord(base, b, q, mid);
                    const std::size_t i0 = pts.size();
                    pts.push_back(with_coord(md, aref, 0, href_up));
                    pts.push_back(with_coord(md, aref, 0, href_dn));
                    pts.push_back(hi);
                    pts.push_back(lo);
                    ScalarSpec num, den;
                    num.terms = {{i0, b, cell, 1.0}, {i0 + 1, b, cell, -1.0}};
                    den.terms = {{i0 + 2, aref, cell, 1.0}, {i0 + 3, aref, cell, -1.0}};
                    specs.push_back(num);
                    specs.push_back(den);
                }
                detail::StatBundle st = detail::run_specs(sc, pts, specs, opt);
                auto& curve = out.recovered[a][p];
                curve.push_back({ax.values[0], 0.0, 0.0});
                const double dref = href_up - href_dn, db = hb_up - hb_dn;
                for (std::size_t k = 1; k < M; ++k) {
                    auto composed = [&, k](const Vec& m) {
                        const double rstar = (m[0] / dref) / (m[1] / db);
                        double u = 0.0;
                        for (std::size_t c = 0; c < k; ++c) {
                            const double num = m[2 + 2 * c] / dref;
                            const double den = m[2 + 2 * c + 1];
                            u += norm.sign * rstar * den / num;
                        }
                        return u;
                    };
                    RecoveredPoint rp;
                    rp.x = ax.values[k];
                    rp.u = composed(st.mean);
                    rp.se = st.se_of(composed);
                    for (std::size_t c = 0; c < k; ++c) {
                        const double num = st.mean[2 + 2 * c];
                        const double se =
                            std::sqrt(std::max(0.0, st.cov[2 + 2 * c][2 + 2 * c]) / st.n);
                        if (num == 0.0 || std::abs(num) < 10.0 * se)
                            throw NotPaired("anchor-good recovery cell " + std::to_string(c) +
                                            " fails the pairing screen");
                    }
                    curve.push_back(rp);
                }
            }
        }
    }
    return out;
}

// --- welfare -------------------------------------------------------------------

struct WelfareResult {
    double dV = 0.0;          // path integral of the mean-probability gradient
    double dV_se = 0.0;
    double dD = 0.0;          // heterogeneity-term difference via the envelope
    double dD_se = 0.0;
    double direct_diff = 0.0; // independent estimate: mean value at x' minus x
    double direct_se = 0.0;
    double discrepancy_se = 0.0;  // SE of (dV - direct_diff) under shared draws
};

// Mean-indirect-utility change between two covariate points along the linear
// utility path, by composite Simpson quadrature with the node means simulated
// on the shared draw stream. Also returns the heterogeneity-term change via
// the envelope identity and the direct value-mean difference.
inline WelfareResult welfare_difference(const Scenario& sc, const CovariatePoint& x,
                                        const CovariatePoint& xp, IdMode mode,
                                        const IdOptions& opt = {}) {
    if (!point_in_hull(sc, x) || !point_in_hull(sc, xp))
        throw PathLeavesSupport("welfare_difference: endpoint outside the covariate hull");
    if (mode == IdMode::market && !sc.is_latent())
        throw VariantMismatch("market welfare requires a latent-state scenario");
    const std::size_t K = sc.num_alternatives(), J = sc.num_states();
    constexpr int kNodes = 9;  // composite Simpson
    static const double wts[kNodes] = {1, 4, 2, 4, 2, 4, 2, 4, 1};

    std::vector<CovariatePoint> pts;
    for (int k = 0; k < kNodes; ++k) {
        const double t = static_cast<double>(k) / (kNodes - 1);
        CovariatePoint pt = x;
        for (std::size_t a = 0; a < K; ++a)
            for (std::size_t p = 0; p < pt[a].size(); ++p)
                pt[a][p] = (1.0 - t) * x[a][p] + t * xp[a][p];
        pts.push_back(std::move(pt));
    }

    // utility changes entering the integrand
    Mat du;                    // state mode: K x J
    Vec du_good;               // market mode: K
    if (mode == IdMode::state) {
        const Mat u0 = sc.utility_at(x), u1 = sc.utility_at(xp);
        du = zeros(K, J);
        for (std::size_t a = 0; a < K; ++a)
            for (std::size_t j = 0; j < J; ++j) du[a][j] = u1[a][j] - u0[a][j];
    } else {
        du_good.assign(K, 0.0);
        for (std::size_t a = 0; a < K; ++a)
            du_good[a] = sc.good_utility(a, xp) - sc.good_utility(a, x);
    }

    const double hstep = (1.0 / (kNodes - 1)) / 3.0;  // Simpson h/3
    ScalarSpec integral, direct, linear_diff;
    for (int k = 0; k < kNodes; ++k) {
        const double w = wts[k] * hstep;
        for (std::size_t a = 0; a < K; ++a) {
            if (mode == IdMode::state) {
                for (std::size_t j = 0; j < J; ++j)
                    integral.terms.push_back(
                        {static_cast<std::size_t>(k), a, static_cast<int>(j),
                         w * sc.prior.p[j] * du[a][j]});
            } else {
                integral.terms.push_back({static_cast<std::size_t>(k), a, kMarginal,
                                          w * du_good[a]});
            }
        }
    }
    direct.terms = {{kNodes - 1, 0, kValue, 1.0}, {0, 0, kValue, -1.0}};
    if (mode == IdMode::state) {
        const Mat u0 = sc.utility_at(x), u1 = sc.utility_at(xp);
        for (std::size_t a = 0; a < K; ++a)
            for (std::size_t j = 0; j < J; ++j) {
                linear_diff.terms.push_back({kNodes - 1, a, static_cast<int>(j),
                                             sc.prior.p[j] * u1[a][j]});
                linear_diff.terms.push_back({0, a, static_cast<int>(j),
                                             -sc.prior.p[j] * u0[a][j]});
            }
    } else {
        for (std::size_t a = 0; a < K; ++a) {
            linear_diff.terms.push_back({kNodes - 1, a, kMarginal, sc.good_utility(a, xp)});
            linear_diff.terms.push_back({0, a, kMarginal, -sc.good_utility(a, x)});
        }
    }

    detail::StatBundle st = detail::run_specs(sc, pts, {integral, direct, linear_diff}, opt);
    WelfareResult res;
    res.dV = st.mean[0];
    res.dV_se = std::sqrt(std::max(0.0, st.cov[0][0]) / st.n);
    res.direct_diff = st.mean[1];
    res.direct_se = std::sqrt(std::max(0.0, st.cov[1][1]) / st.n);
    res.dD = st.mean[0] - st.mean[2];
    res.dD_se = std::sqrt(std::max(0.0, st.cov[0][0] + st.cov[2][2] - 2.0 * st.cov[0][2]) /
                          st.n);
    res.discrepancy_se = std::sqrt(
        std::max(0.0, st.cov[0][0] + st.cov[1][1] - 2.0 * st.cov[0][1]) / st.n);
    return res;
}

// Piecewise-linear path: welfare summed over consecutive legs.
inline WelfareResult welfare_along(const Scenario& sc,
                                   const std::vector<CovariatePoint>& waypoints, IdMode mode,
                                   const IdOptions& opt = {}) {
    if (waypoints.size() < 2) throw ConfigError("welfare_along: need at least two waypoints");
    WelfareResult total;
    for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
        WelfareResult leg = welfare_difference(sc, waypoints[i], waypoints[i + 1], mode, opt);
        total.dV += leg.dV;
        total.dD += leg.dD;
        total.direct_diff += leg.direct_diff;
        total.dV_se = std::sqrt(total.dV_se * total.dV_se + leg.dV_se * leg.dV_se);
        total.dD_se = std::sqrt(total.dD_se * total.dD_se + leg.dD_se * leg.dD_se);
        total.direct_se =
            std::sqrt(total.direct_se * total.direct_se + leg.direct_se * leg.direct_se);
        total.discrepancy_se = std::sqrt(total.discrepancy_se * total.discrepancy_se +
                                         leg.discrepancy_se * leg.discrepancy_se);
    }
    return total;
}

// --- counterfactual bounds -------------------------------------------------------

struct CounterfactualQuery {
    CovariatePoint x0;                  // hypothetical point, off the grid
    std::vector<std::size_t> path;      // table indices x^1 ... x^{S-1}
    Mat candidate_cond;                 // hypothesized K x J means at x0 (state mode)
    Vec candidate_marg;                 // hypothesized shares at x0 (market mode)
};

struct BoundResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double se = 0.0;      // of lhs - rhs, from the table cells involved
    bool satisfied = false;
};

// Chain inequality that any optimizing candidate at x0 must satisfy against a
// sequence of observed grid points. A candidate failing some path is rejected
// as inconsistent with the model.
inline BoundResult counterfactual_bound(const Scenario& sc, const ConditionalMeanTable& table,
                                        const CounterfactualQuery& query, IdMode mode,
                                        const IdOptions& opt = {}) {
    const std::size_t K = sc.num_alternatives(), J = sc.num_states();
    if (query.path.size() < 1)
        throw ConfigError("counterfactual_bound: path needs at least one grid point");
    for (std::size_t idx : query.path)
        if (idx >= table.entries.size())
            throw PathPointMissing("counterfactual_bound: path index " + std::to_string(idx) +
                                   " has no simulated means");
    if (mode == IdMode::market && !sc.is_latent())
        throw VariantMismatch("market bound requires a latent-state scenario");

    const std::size_t S1 = query.path.size();  // number of observed points
    const TableEntry& first = table.entries[query.path.front()];
    const TableEntry& last = table.entries[query.path.back()];

    auto u_at = [&](const CovariatePoint& x, std::size_t a, std::size_t j) {
        return mode == IdMode::state ? sc.utility_at(x)[a][j] : sc.good_utility(a, x);
    };
    auto mean_at = [&](const TableEntry& e, std::size_t a, std::size_t j) {
        return mode == IdMode::state ? e.stats.mean_cond[a][j] : e.stats.mean_marg[a];
    };
    auto se_at = [&](const TableEntry& e, std::size_t a, std::size_t j) {
        return mode == IdMode::state ? e.stats.se_cond[a][j] : e.stats.se_marg[a];
    };
    auto cand = [&](std::size_t a, std::size_t j) {
        return mode == IdMode::state ? query.candidate_cond[a][j] : query.candidate_marg[a];
    };
    const std::size_t Jeff = mode == IdMode::state ? J : 1;
    auto weight = [&](std::size_t j) { return mode == IdMode::state ? sc.prior.p[j] : 1.0; };

    BoundResult res;
    double var = 0.0;
    for (std::size_t j = 0; j < Jeff; ++j)
        for (std::size_t a = 0; a < K; ++a) {
            const double w = weight(j);
            const double u0 = u_at(query.x0, a, j);
            const double uS = u_at(last.x, a, j);
            res.lhs += cand(a, j) * w * (u0 - uS);
            res.rhs += w * (mean_at(first, a, j) * u0 - mean_at(last, a, j) * uS);
            var += w * w * u0 * u0 * se_at(first, a, j) * se_at(first, a, j);
            var += w * w * uS * uS * se_at(last, a, j) * se_at(last, a, j);
            for (std::size_t s = 0; s + 1 < S1; ++s) {
                const TableEntry& es = table.entries[query.path[s]];
                const TableEntry& es1 = table.entries[query.path[s + 1]];
                const double us = u_at(es.x, a, j);
                res.rhs -= w * (mean_at(es, a, j) - mean_at(es1, a, j)) * us;
                var += w * w * us * us *
                       (se_at(es, a, j) * se_at(es, a, j) + se_at(es1, a, j) * se_at(es1, a, j));
            }
        }
    res.se = std::sqrt(var);
    const double tol = std::max(opt.abs_tol, opt.band * res.se);
    res.satisfied = res.lhs >= res.rhs - tol;
    return res;
}

// --- heterogeneity-term derivative --------------------------------------------

struct CostDerivativeResult {
    double normalized_residual = 0.0;  // |dD + sum mu u dP| / ||dP||
    double dP_norm = 0.0;
};

// First-order check that the heterogeneity term's gradient at the mean choice
// data is minus the prior-weighted utility: dD between two nearby grid points
// against -sum mu u(midpoint) dP.
inline CostDerivativeResult cost_derivative_check(const Scenario& sc,
                                                  const ConditionalMeanTable& table,
                                                  const CovariatePoint& x,
                                                  const CovariatePoint& xp, IdMode mode,
                                                  const IdOptions& opt = {}) {
    const TableEntry* ex = table.find(x);
    const TableEntry* exp_ = table.find(xp);
    if (!ex || !exp_)
        throw PathPointMissing("cost_derivative_check: point not in the simulated table");
    const std::size_t K = sc.num_alternatives(), J = sc.num_states();
    const std::size_t Jeff = mode == IdMode::state ? J : 1;
    auto mean_at = [&](const TableEntry& e, std::size_t a, std::size_t j) {
        return mode == IdMode::state ? e.stats.mean_cond[a][j] : e.stats.mean_marg[a];
    };
    auto se_at = [&](const TableEntry& e, std::size_t a, std::size_t j) {
        return mode == IdMode::state ? e.stats.se_cond[a][j] : e.stats.se_marg[a];
    };
    double dp_norm2 = 0.0, noise2 = 0.0;
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t j = 0; j < Jeff; ++j) {
            const double d = mean_at(*exp_, a, j) - mean_at(*ex, a, j);
            dp_norm2 += d * d;
            noise2 += se_at(*exp_, a, j) * se_at(*exp_, a, j) +
                      se_at(*ex, a, j) * se_at(*ex, a, j);
        }
    const double dp_norm = std::sqrt(dp_norm2);
    if (dp_norm == 0.0 || dp_norm < 10.0 * std::sqrt(noise2))
        throw StepTooSmall("cost_derivative_check: mean change below the noise floor");

    WelfareResult w = welfare_difference(sc, x, xp, mode, opt);
    // gradient identity at the expansion point: the heterogeneity term's
    // slope in the mean choice data is minus the prior-weighted utility there
    const Mat u_x = sc.utility_at(x);
    double predicted = 0.0;
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t j = 0; j < Jeff; ++j) {
            const double u = mode == IdMode::state ? u_x[a][j] : sc.good_utility(a, x);
            const double wj = mode == IdMode::state ? sc.prior.p[j] : 1.0;
            predicted -= wj * u * (mean_at(*exp_, a, j) - mean_at(*ex, a, j));
        }
    CostDerivativeResult res;
    res.dP_norm = dp_norm;
    res.normalized_residual = std::abs(w.dD - predicted) / dp_norm;
    return res;
}

}  // namespace ri
