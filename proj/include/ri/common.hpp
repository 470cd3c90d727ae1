#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ri {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Error hierarchy. Each class corresponds to one failure mode surfaced by the
// public API; the CLI maps them onto its exit-code contract.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    using Error::Error;
};
struct NonFinite : Error {
    using Error::Error;
};
struct NoConvergence : Error {
    using Error::Error;
};
struct DegenerateSupport : Error {
    using Error::Error;
};
struct Infeasible : Error {
    using Error::Error;
};
struct RankDeficient : Error {
    using Error::Error;
};
struct TooLarge : Error {
    using Error::Error;
};
struct InfeasiblePolicy : Error {
    using Error::Error;
};
struct AssumptionViolation : Error {
    using Error::Error;
};
struct ZeroPriorState : Error {
    using Error::Error;
};
struct VariantMismatch : Error {
    using Error::Error;
};
struct StepTooSmall : Error {
    using Error::Error;
};
struct NotPaired : Error {
    using Error::Error;
};
struct GridNotRectangular : Error {
    using Error::Error;
};
struct PathLeavesSupport : Error {
    using Error::Error;
};
struct PathPointMissing : Error {
    using Error::Error;
};
struct SolverFailure : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Small dense helpers. Problems here are tiny (J <= 3, K <= a handful), so a
// plain vector-of-vectors matrix and hand-rolled solves are all we need.
// ---------------------------------------------------------------------------

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double linf_dist(const Vec& a, const Vec& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

inline double l2_norm(const Vec& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, Vec(c, 0.0)); }

// Gaussian elimination with partial pivoting; throws RankDeficient below the
// pivot threshold. A is modified in place. Solves A x = b for square A.
inline Vec solve_linear(Mat A, Vec b, double pivot_tol = 1e-12) {
    const std::size_t n = A.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) < pivot_tol)
            throw RankDeficient("solve_linear: pivot below tolerance");
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r][col] / A[col][col];
            for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    Vec x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= A[i][c] * x[c];
        x[i] = s / A[i][i];
    }
    return x;
}

// Least squares via normal equations; fine at these dimensions.
inline Vec solve_least_squares(const Mat& A, const Vec& b) {
    const std::size_t rows = A.size(), cols = rows ? A[0].size() : 0;
    Mat AtA = zeros(cols, cols);
    Vec Atb(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < cols; ++i) {
            Atb[i] += A[r][i] * b[r];
            for (std::size_t j = 0; j < cols; ++j) AtA[i][j] += A[r][i] * A[r][j];
        }
    return solve_linear(std::move(AtA), std::move(Atb));
}

// Numerical rank of a (rows x cols) matrix by row-echelon elimination.
inline std::size_t matrix_rank(Mat A, double tol = 1e-9) {
    const std::size_t rows = A.size(), cols = rows ? A[0].size() : 0;
    std::size_t rank = 0;
    for (std::size_t col = 0; col < cols && rank < rows; ++col) {
        std::size_t piv = rank;
        for (std::size_t r = rank + 1; r < rows; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) <= tol) continue;
        std::swap(A[piv], A[rank]);
        for (std::size_t r = rank + 1; r < rows; ++r) {
            const double f = A[r][col] / A[rank][col];
            for (std::size_t c = col; c < cols; ++c) A[r][c] -= f * A[rank][c];
        }
        ++rank;
    }
    return rank;
}

// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
inline Vec symmetric_eigenvalues(Mat A, int sweeps = 64) {
    const std::size_t n = A.size();
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += A[p][q] * A[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(A[p][q]) < 1e-300) continue;
                const double theta = (A[q][q] - A[p][p]) / (2.0 * A[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = A[k][p], akq = A[k][q];
                    A[k][p] = c * akp - s * akq;
                    A[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = A[p][k], aqk = A[q][k];
                    A[p][k] = c * apk - s * aqk;
                    A[q][k] = s * apk + c * aqk;
                }
            }
    }
    Vec ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = A[i][i];
    return ev;
}

// 17 significant digits: round-trips a double exactly in decimal.
inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace ri
