#pragma once

#include <atomic>
#include <mutex>
#include <thread>

#include "ri/scenario.hpp"
#include "ri/sdsc.hpp"

namespace ri {

// One realized heterogeneity draw. A pure function of (master seed, draw
// index, attempt); covariate points never enter.
struct Draw {
    Vec e;                      // per-alternative disturbance
    double kappa = 1.0;         // attention cost scale
    std::optional<std::size_t> omega;  // realized latent state, latent variant only
};

inline Draw sample_draw(const Scenario& sc, std::uint64_t draw_index,
                        std::uint64_t attempt = 0) {
    SplitMix64 rng = draw_rng(sc.seed, draw_index, attempt);
    Draw d;
    d.e.resize(sc.num_alternatives());
    for (std::size_t a = 0; a < sc.num_alternatives(); ++a) {
        switch (sc.het.e_family) {
            case EFamily::gumbel:
                d.e[a] = sample_gumbel(rng, sc.het.e_location[a], sc.het.e_scale);
                break;
            case EFamily::normal:
                d.e[a] = sample_normal(rng, sc.het.e_location[a], sc.het.e_scale);
                break;
            case EFamily::fixed: d.e[a] = sc.het.e_location[a]; break;
        }
    }
    switch (sc.het.kappa_family) {
        case KappaFamily::lognormal:
            d.kappa = sample_lognormal(rng, sc.het.kappa_m, sc.het.kappa_s);
            break;
        case KappaFamily::fixed: d.kappa = sc.het.kappa_m; break;
    }
    if (sc.is_latent()) d.omega = sample_categorical(rng, sc.latent_state_dist);
    return d;
}

struct PointStats {
    Mat mean_cond, se_cond;  // K x J
    Vec mean_marg, se_marg;  // K
    double value_mean = 0.0, value_se = 0.0;
    long draws_used = 0;
    long rejected = 0;
};

// Per-draw scalar functional: a linear combination of cells across points.
// state >= 0 picks cond[alt][state]; state == kMarginal picks the marginal;
// state == kValue picks the draw's optimal value.
struct ScalarTerm {
    std::size_t point = 0;
    std::size_t alt = 0;
    int state = 0;
    double coef = 1.0;
};
inline constexpr int kMarginal = -1;
inline constexpr int kValue = -2;

struct ScalarSpec {
    std::vector<ScalarTerm> terms;
};

struct SimOptions {
    long draws = -1;           // default: scenario's draw count
    std::uint64_t seed = 0;    // default: scenario's seed
    int threads = 0;           // default: hardware concurrency
    const Mat* tilt = nullptr; // additive K x J utility tilt
    int max_attempts = 8;      // redraw budget per draw index
};

struct MultiStats {
    std::vector<PointStats> points;
    Vec scalar_mean;
    Mat scalar_cov;  // covariance of the per-draw scalar vector
    long draws_used = 0;
    long rejected = 0;
};

namespace detail {

struct BlockAccum {
    std::vector<Mat> sum_cond, sumsq_cond;
    std::vector<Vec> sum_marg, sumsq_marg;
    Vec sum_value, sumsq_value;
    Vec scalar_sum;
    Mat scalar_cross;
    long rejected = 0;
    long draws = 0;

    BlockAccum(std::size_t npts, std::size_t K, std::size_t J, std::size_t nspec) {
        sum_cond.assign(npts, zeros(K, J));
        sumsq_cond.assign(npts, zeros(K, J));
        sum_marg.assign(npts, Vec(K, 0.0));
        sumsq_marg.assign(npts, Vec(K, 0.0));
        sum_value.assign(npts, 0.0);
        sumsq_value.assign(npts, 0.0);
        scalar_sum.assign(nspec, 0.0);
        scalar_cross = zeros(nspec, nspec);
    }
};

struct DrawOutcome {
    std::vector<Mat> cond;   // per point
    std::vector<Vec> marg;   // per point
    Vec value;               // per point
};

// Solve one draw at every point. A failure at any point rejects the draw for
// all points so that the accepted draw sequence stays common across points.
inline bool solve_draw(const Scenario& sc, const std::vector<CovariatePoint>& pts,
                       const std::vector<Mat>& utilities, const Draw& d,
                       DrawOutcome& out) {
    const std::size_t K = sc.num_alternatives();
    AttentionCost cost(sc.het.cost_family, d.kappa, sc.prior);
    out.cond.assign(pts.size(), Mat());
    out.marg.assign(pts.size(), Vec());
    out.value.assign(pts.size(), 0.0);
    for (std::size_t p = 0; p < pts.size(); ++p) {
        Instance inst{sc.alternatives, sc.states, sc.prior, utilities[p], d.e, cost};
        EnvelopeSolution env;
        try {
            env = solve_ri_envelope(inst);
        } catch (const Error&) {
            return false;
        }
        PosteriorPolicy pol;
        pol.posteriors = env.posteriors;
        pol.weights = env.weights;
        pol.choice.resize(env.posteriors.size());
        for (std::size_t i = 0; i < env.posteriors.size(); ++i)
            pol.choice[i] = {{env.alternatives[i], 1.0}};
        SDSCFunction rho = generate_sdsc(pol, sc.prior, K);
        out.value[p] = env.value;
        if (sc.is_latent()) {
            Vec col(K);
            for (std::size_t a = 0; a < K; ++a) col[a] = rho.cond[a][*d.omega];
            out.marg[p] = std::move(col);
        } else {
            out.marg[p] = rho.marginal;
        }
        out.cond[p] = std::move(rho.cond);
    }
    return true;
}

}  // namespace detail

// Monte Carlo aggregation over heterogeneity draws with common random numbers
// across points. Draws are processed in fixed-size blocks summed in index
// order, and blocks combine in block order, so results are bit-identical for
// any thread count.
inline MultiStats simulate_multi(const Scenario& sc, const std::vector<CovariatePoint>& pts,
                                 const std::vector<ScalarSpec>& specs,
                                 const SimOptions& opt = {}) {
    const std::size_t K = sc.num_alternatives(), J = sc.num_states();
    const long n = opt.draws > 0 ? opt.draws : sc.draws;
    const std::uint64_t seed = opt.seed ? opt.seed : sc.seed;
    Scenario sim = sc;
    sim.seed = seed;

    std::vector<Mat> utilities(pts.size());
    for (std::size_t p = 0; p < pts.size(); ++p) utilities[p] = sc.utility_at(pts[p], opt.tilt);

    constexpr long kBlock = 256;
    const long nblocks = (n + kBlock - 1) / kBlock;
    std::vector<detail::BlockAccum> blocks(
        static_cast<std::size_t>(nblocks),
        detail::BlockAccum(pts.size(), K, J, specs.size()));

    std::atomic<long> next_block{0};
    std::atomic<bool> failed{false};
    std::string failure_msg;
    std::mutex failure_mutex;

    auto worker = [&]() {
        detail::DrawOutcome out;
        for (;;) {
            const long b = next_block.fetch_add(1);
            if (b >= nblocks || failed.load()) return;
            detail::BlockAccum& acc = blocks[static_cast<std::size_t>(b)];
            const long lo = b * kBlock, hi = std::min(n, lo + kBlock);
            for (long i = lo; i < hi; ++i) {
                bool accepted = false;
                for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
                    Draw d = sample_draw(sim, static_cast<std::uint64_t>(i),
                                         static_cast<std::uint64_t>(attempt));
                    if (detail::solve_draw(sim, pts, utilities, d, out)) {
                        accepted = true;
                        break;
                    }
                    ++acc.rejected;
                }
                if (!accepted) {
                    std::lock_guard<std::mutex> lk(failure_mutex);
                    failed.store(true);
                    failure_msg = "draw " + std::to_string(i) + " failed after " +
                                  std::to_string(opt.max_attempts) + " attempts";
                    return;
                }
                ++acc.draws;
                for (std::size_t p = 0; p < pts.size(); ++p) {
                    for (std::size_t a = 0; a < K; ++a) {
                        for (std::size_t j = 0; j < J; ++j) {
                            const double v = out.cond[p][a][j];
                            acc.sum_cond[p][a][j] += v;
                            acc.sumsq_cond[p][a][j] += v * v;
                        }
                        const double m = out.marg[p][a];
                        acc.sum_marg[p][a] += m;
                        acc.sumsq_marg[p][a] += m * m;
                    }
                    acc.sum_value[p] += out.value[p];
                    acc.sumsq_value[p] += out.value[p] * out.value[p];
                }
                if (!specs.empty()) {
                    Vec s(specs.size(), 0.0);
                    for (std::size_t m = 0; m < specs.size(); ++m)
                        for (const ScalarTerm& t : specs[m].terms) {
                            double v = 0.0;
                            if (t.state == kValue)
                                v = out.value[t.point];
                            else if (t.state == kMarginal)
                                v = out.marg[t.point][t.alt];
                            else
                                v = out.cond[t.point][t.alt][static_cast<std::size_t>(t.state)];
                            s[m] += t.coef * v;
                        }
                    for (std::size_t m = 0; m < specs.size(); ++m) {
                        acc.scalar_sum[m] += s[m];
                        for (std::size_t m2 = 0; m2 < specs.size(); ++m2)
                            acc.scalar_cross[m][m2] += s[m] * s[m2];
                    }
                }
            }
        }
    };

    int nthreads = opt.threads > 0
                       ? opt.threads
                       : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    nthreads = static_cast<int>(std::min<long>(nthreads, nblocks));
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < nthreads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (failed.load()) throw SolverFailure("simulate_multi: " + failure_msg);

    // serial combine in block order
    detail::BlockAccum total(pts.size(), K, J, specs.size());
    for (const auto& acc : blocks) {
        for (std::size_t p = 0; p < pts.size(); ++p) {
            for (std::size_t a = 0; a < K; ++a) {
                for (std::size_t j = 0; j < J; ++j) {
                    total.sum_cond[p][a][j] += acc.sum_cond[p][a][j];
                    total.sumsq_cond[p][a][j] += acc.sumsq_cond[p][a][j];
                }
                total.sum_marg[p][a] += acc.sum_marg[p][a];
                total.sumsq_marg[p][a] += acc.sumsq_marg[p][a];
            }
            total.sum_value[p] += acc.sum_value[p];
            total.sumsq_value[p] += acc.sumsq_value[p];
        }
        for (std::size_t m = 0; m < specs.size(); ++m) {
            total.scalar_sum[m] += acc.scalar_sum[m];
            for (std::size_t m2 = 0; m2 < specs.size(); ++m2)
                total.scalar_cross[m][m2] += acc.scalar_cross[m][m2];
        }
        total.rejected += acc.rejected;
        total.draws += acc.draws;
    }

    const double dn = static_cast<double>(total.draws);
    auto se_of = [&](double sum, double sumsq) {
        if (total.draws < 2) return 0.0;
        const double mean = sum / dn;
        const double var = std::max(0.0, (sumsq / dn - mean * mean) * dn / (dn - 1.0));
        return std::sqrt(var / dn);
    };

    MultiStats out;
    out.points.resize(pts.size());
    for (std::size_t p = 0; p < pts.size(); ++p) {
        PointStats& st = out.points[p];
        st.mean_cond = zeros(K, J);
        st.se_cond = zeros(K, J);
        st.mean_marg.assign(K, 0.0);
        st.se_marg.assign(K, 0.0);
        for (std::size_t a = 0; a < K; ++a) {
            for (std::size_t j = 0; j < J; ++j) {
                st.mean_cond[a][j] = total.sum_cond[p][a][j] / dn;
                st.se_cond[a][j] = se_of(total.sum_cond[p][a][j], total.sumsq_cond[p][a][j]);
            }
            st.mean_marg[a] = total.sum_marg[p][a] / dn;
            st.se_marg[a] = se_of(total.sum_marg[p][a], total.sumsq_marg[p][a]);
        }
        st.value_mean = total.sum_value[p] / dn;
        st.value_se = se_of(total.sum_value[p], total.sumsq_value[p]);
        st.draws_used = total.draws;
        st.rejected = total.rejected;
    }
    out.scalar_mean.assign(specs.size(), 0.0);
    out.scalar_cov = zeros(specs.size(), specs.size());
    for (std::size_t m = 0; m < specs.size(); ++m) out.scalar_mean[m] = total.scalar_sum[m] / dn;
    if (total.draws >= 2)
        for (std::size_t m = 0; m < specs.size(); ++m)
            for (std::size_t m2 = 0; m2 < specs.size(); ++m2)
                out.scalar_cov[m][m2] =
                    (total.scalar_cross[m][m2] / dn - out.scalar_mean[m] * out.scalar_mean[m2]) *
                    dn / (dn - 1.0);
    out.draws_used = total.draws;
    out.rejected = total.rejected;
    return out;
}

inline PointStats conditional_mean(const Scenario& sc, const CovariatePoint& x,
                                   const SimOptions& opt = {}) {
    return simulate_multi(sc, {x}, {}, opt).points[0];
}

// Market-level observable of the latent-state variant: mean choice shares
// with the state realization integrated out.
inline Vec latent_state_mean(const Scenario& sc, const CovariatePoint& x,
                             const SimOptions& opt = {}) {
    if (!sc.is_latent())
        throw VariantMismatch("latent_state_mean: scenario has no latent states");
    return conditional_mean(sc, x, opt).mean_marg;
}

// Linear-part advantage of a candidate over the simulated mean at x:
// sum_{a,j} (candidate - mean)(a|j) mu(j) u_a(x_a, j).
inline double rep_agent_residual(const Scenario& sc, const CovariatePoint& x,
                                 const Mat& mean_cond, const Mat& candidate) {
    const std::size_t K = sc.num_alternatives(), J = sc.num_states();
    if (candidate.size() != K || candidate[0].size() != J)
        throw ConfigError("rep_agent_residual: candidate has wrong shape");
    for (std::size_t j = 0; j < J; ++j) {
        double s = 0.0;
        for (std::size_t a = 0; a < K; ++a) {
            if (candidate[a][j] < -1e-12 || candidate[a][j] > 1.0 + 1e-12)
                throw ConfigError("rep_agent_residual: candidate entry outside [0,1]");
            s += candidate[a][j];
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw ConfigError("rep_agent_residual: candidate column not stochastic");
    }
    const Mat u = sc.utility_at(x);
    double adv = 0.0;
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t j = 0; j < J; ++j)
            adv += (candidate[a][j] - mean_cond[a][j]) * sc.prior.p[j] * u[a][j];
    return adv;
}

}  // namespace ri
