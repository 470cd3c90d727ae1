#pragma once

#include <algorithm>
#include <numeric>

#include "ri/common.hpp"

namespace ri {

// A point on the probability simplex over states. Thin wrapper so that the
// rest of the code can say what it means; hot paths construct directly after
// producing provably valid coordinates.
struct Belief {
    Vec p;

    Belief() = default;
    explicit Belief(Vec probs) : p(std::move(probs)) {}

    std::size_t dim() const { return p.size(); }
    double operator[](std::size_t j) const { return p[j]; }

    static Belief checked(Vec probs, double sum_tol = 1e-12) {
        double sum = 0.0;
        for (double v : probs) {
            if (!(v >= 0.0 && v <= 1.0 + 1e-15))
                throw ConfigError("belief component outside [0,1]");
            sum += v;
        }
        if (std::abs(sum - 1.0) > sum_tol)
            throw ConfigError("belief components sum to " + fmt17(sum) + ", not 1");
        return Belief(std::move(probs));
    }
};

inline bool operator==(const Belief& a, const Belief& b) { return a.p == b.p; }

// Hyperplane slope coordinates over the first J-1 states; the last state's
// coordinate is normalized to zero by convention.
struct Direction {
    Vec theta;

    Direction() = default;
    explicit Direction(Vec t) : theta(std::move(t)) {}
    std::size_t dim() const { return theta.size(); }

    // theta . gamma with the zero-padded last coordinate.
    double dot_belief(const Belief& g) const {
        double s = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) s += theta[j] * g.p[j];
        return s;
    }
};

// Euclidean projection onto the simplex (sort-based exact algorithm).
inline Belief project_to_simplex(Vec y) {
    Vec u = y;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, tau = 0.0;
    std::size_t rho = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        css += u[i];
        const double t = (css - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) {
            rho = i + 1;
            tau = t;
        }
    }
    (void)rho;
    for (double& v : y) v = std::max(v - tau, 0.0);
    double s = std::accumulate(y.begin(), y.end(), 0.0);
    if (s > 0.0)
        for (double& v : y) v /= s;
    return Belief(std::move(y));
}

// Deterministic lattice over the simplex with edge spacing <= resolution.
// Vertices are always included; optional snap points (e.g. the prior) are
// appended when not already on the lattice.
inline std::vector<Belief> simplex_grid(int J, double resolution,
                                        const std::vector<Belief>& snap = {},
                                        std::size_t point_budget = 4'000'000) {
    if (J != 2 && J != 3) throw ConfigError("simplex_grid: J must be 2 or 3");
    if (!(resolution > 0.0)) throw ConfigError("simplex_grid: resolution must be > 0");
    const long n = static_cast<long>(std::ceil(1.0 / resolution - 1e-12));
    std::vector<Belief> pts;
    if (J == 2) {
        if (static_cast<std::size_t>(n + 1) > point_budget)
            throw TooLarge("simplex_grid: lattice exceeds point budget");
        pts.reserve(n + 1);
        for (long i = 0; i <= n; ++i) {
            const double g = static_cast<double>(i) / n;
            pts.push_back(Belief({g, 1.0 - g}));
        }
    } else {
        const std::size_t count = static_cast<std::size_t>((n + 1)) * (n + 2) / 2;
        if (count > point_budget) throw TooLarge("simplex_grid: lattice exceeds point budget");
        pts.reserve(count);
        for (long i = 0; i <= n; ++i)
            for (long j = 0; j <= n - i; ++j) {
                const double a = static_cast<double>(i) / n;
                const double b = static_cast<double>(j) / n;
                pts.push_back(Belief({a, b, 1.0 - a - b}));
            }
    }
    for (const Belief& s : snap) {
        bool present = false;
        for (const Belief& q : pts)
            if (linf_dist(q.p, s.p) < 1e-15) {
                present = true;
                break;
            }
        if (!present) pts.push_back(s);
    }
    return pts;
}

// Unique nonnegative weights with sum 1 and sum_i w_i gamma_i = mu. Points
// must be linearly independent as vectors; at most J of them can be.
inline Vec caratheodory_weights(const std::vector<Belief>& points, const Belief& mu,
                                double rank_tol = 1e-9, double fit_tol = 1e-8) {
    if (points.empty()) throw Infeasible("caratheodory_weights: no points");
    const std::size_t J = mu.dim(), m = points.size();
    if (m > J) throw RankDeficient("caratheodory_weights: more points than states");
    Mat M = zeros(J, m);
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t i = 0; i < m; ++i) M[j][i] = points[i].p[j];
    if (matrix_rank(M, rank_tol) < m)
        throw RankDeficient("caratheodory_weights: points linearly dependent");
    // Stack the affine constraint explicitly; columns of M already sum to one,
    // so it is redundant for exact solves but stabilizes least squares.
    Mat A = M;
    A.push_back(Vec(m, 1.0));
    Vec b = mu.p;
    b.push_back(1.0);
    Vec w = solve_least_squares(A, b);
    double resid = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += w[i] * points[i].p[j];
        resid = std::max(resid, std::abs(s - mu.p[j]));
    }
    double wsum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (w[i] < -fit_tol) throw Infeasible("caratheodory_weights: prior outside convex hull");
        w[i] = std::max(w[i], 0.0);
        wsum += w[i];
    }
    if (resid > fit_tol || std::abs(wsum - 1.0) > fit_tol)
        throw Infeasible("caratheodory_weights: prior outside convex hull (residual " +
                         fmt17(resid) + ")");
    for (double& v : w) v /= wsum;
    return w;
}

}  // namespace ri
