#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "taskcast/error.hpp"

namespace taskcast {

// Sparse vector with strictly increasing indices.
struct SparseVector {
    std::vector<std::uint32_t> index;
    std::vector<double> value;

    std::size_t nnz() const noexcept { return index.size(); }
    bool empty() const noexcept { return index.empty(); }

    double norm() const
    {
        double s = 0.0;
        for (double v : value)
            s += v * v;
        return std::sqrt(s);
    }

    bool operator==(const SparseVector&) const = default;
};

inline double dot(const SparseVector& a, const SparseVector& b)
{
    double s = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.nnz() && j < b.nnz()) {
        if (a.index[i] == b.index[j])
            s += a.value[i++] * b.value[j++];
        else if (a.index[i] < b.index[j])
            ++i;
        else
            ++j;
    }
    return s;
}

inline double dot(const SparseVector& a, std::span<const double> dense)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.nnz(); ++k)
        s += a.value[k] * dense[a.index[k]];
    return s;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Row-major sparse design matrix.
class SparseMatrix {
public:
    SparseMatrix() = default;
    explicit SparseMatrix(std::size_t cols) : cols_(cols) {}

    static SparseMatrix from_dense(const std::vector<std::vector<double>>& rows)
    {
        SparseMatrix m(rows.empty() ? 0 : rows.front().size());
        for (const auto& r : rows) {
            SparseVector v;
            for (std::size_t j = 0; j < r.size(); ++j)
                if (r[j] != 0.0) {
                    v.index.push_back(static_cast<std::uint32_t>(j));
                    v.value.push_back(r[j]);
                }
            m.add_row(std::move(v));
        }
        return m;
    }

    void add_row(SparseVector row)
    {
        if (!row.index.empty() && row.index.back() >= cols_)
            throw Error("sparse row index out of range");
        rows_.push_back(std::move(row));
    }

    std::size_t rows() const noexcept { return rows_.size(); }
    std::size_t cols() const noexcept { return cols_; }
    const SparseVector& row(std::size_t i) const { return rows_[i]; }

    // out = X v
    void multiply(std::span<const double> v, std::span<double> out) const
    {
        for (std::size_t i = 0; i < rows_.size(); ++i)
            out[i] = dot(rows_[i], v);
    }

    // out = X^T u
    void multiply_transpose(std::span<const double> u, std::span<double> out) const
    {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& r = rows_[i];
            for (std::size_t k = 0; k < r.nnz(); ++k)
                out[r.index[k]] += r.value[k] * u[i];
        }
    }

private:
    std::size_t cols_ = 0;
    std::vector<SparseVector> rows_;
};

struct CgResult {
    std::size_t iterations = 0;
    double residual_norm = 0.0; // recomputed from the operator, not the recurrence
    bool converged = false;
};

// Conjugate gradient for a symmetric positive (semi-)definite operator
// `apply(in, out)`. Solves A x = b starting from the given x. The recurrence
// residual drifts in floating point, so on apparent convergence the true
// residual is recomputed and the iteration restarted from it if the bound
// ||A x - b|| <= max(rel_tol * ||b||, abs_tol) does not hold yet.
template <typename Apply>
CgResult conjugate_gradient(const Apply& apply, std::span<const double> b, std::span<double> x,
                            std::size_t max_iterations, double rel_tol, double abs_tol)
{
    const std::size_t n = b.size();
    std::vector<double> r(n), p(n), ap(n);
    const double target = std::max(rel_tol * norm2(b), abs_tol);

    auto true_residual = [&] {
        apply(std::span<const double>(x.data(), n), std::span<double>(ap));
        for (std::size_t i = 0; i < n; ++i)
            r[i] = b[i] - ap[i];
        return norm2(r);
    };

    CgResult result;
    double rnorm = true_residual();
    while (rnorm > target && result.iterations < max_iterations) {
        // (Re)start from the true residual, aiming below the target so the
        // recomputed residual lands under it.
        p = r;
        double rr = rnorm * rnorm;
        while (result.iterations < max_iterations) {
            apply(std::span<const double>(p), std::span<double>(ap));
            const double pap = dot(p, ap);
            if (!(pap > 0.0))
                break;
            const double alpha = rr / pap;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            ++result.iterations;
            const double rr_new = dot(r, r);
            if (std::sqrt(rr_new) <= 0.1 * target)
                break;
            const double beta = rr_new / rr;
            rr = rr_new;
            for (std::size_t i = 0; i < n; ++i)
                p[i] = r[i] + beta * p[i];
        }
        const double previous = rnorm;
        rnorm = true_residual();
        if (rnorm > target && !(rnorm < previous))
            break; // stagnated
    }
    result.residual_norm = rnorm;
    result.converged = rnorm <= target;
    return result;
}

} // namespace taskcast
