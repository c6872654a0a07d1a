#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <complex>
#include <span>
#include <vector>

#include "decohist/errors.hpp"
#include "decohist/layout.hpp"

namespace decohist {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Complex amplitude vector over a labeled tensor-product basis.
struct StateVector {
    SpaceLayout layout;
    Vector amplitudes;

    StateVector(SpaceLayout lay, Vector amps) : layout(std::move(lay)), amplitudes(std::move(amps)) {
        if (static_cast<std::size_t>(amplitudes.size()) != layout.total_dim())
            throw LayoutError("amplitude count does not match layout dimension");
    }

    double norm() const { return amplitudes.norm(); }
    double squared_norm() const { return amplitudes.squaredNorm(); }

    StateVector normalized() const {
        const double n = norm();
        if (n < 1e-15) throw ValidationError("cannot normalize a (numerically) zero state");
        return {layout, amplitudes / n};
    }
};

enum class OperatorKind { general, hermitian, unitary, projector };

/// Dense square operator over a labeled tensor-product basis. The kind_hint is
/// a claim; validate_operator is the arbiter before the claim is trusted.
struct OperatorMatrix {
    SpaceLayout layout;
    Matrix entries;
    OperatorKind kind_hint = OperatorKind::general;

    OperatorMatrix(SpaceLayout lay, Matrix m, OperatorKind kind = OperatorKind::general)
        : layout(std::move(lay)), entries(std::move(m)), kind_hint(kind) {
        const auto d = static_cast<Eigen::Index>(layout.total_dim());
        if (entries.rows() != d || entries.cols() != d)
            throw LayoutError("operator dimensions do not match layout");
    }
};

inline OperatorMatrix identity_operator(const SpaceLayout& layout) {
    const auto d = static_cast<Eigen::Index>(layout.total_dim());
    return {layout, Matrix::Identity(d, d), OperatorKind::unitary};
}

/// Rank-1 projector |psi><psi| (psi must be normalized).
inline OperatorMatrix projector_onto(const StateVector& psi) {
    return {psi.layout, psi.amplitudes * psi.amplitudes.adjoint(), OperatorKind::projector};
}

struct ValidationReport {
    bool pass = false;
    double max_deviation = 0.0;
};

namespace detail {

inline bool is_diagonal(const Matrix& a) {
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (i != j && a(i, j) != Complex(0.0, 0.0)) return false;
    return true;
}

/// Exactly one nonzero per row and per column (generalized permutation).
/// For such matrices A†A is diagonal with entries |v_j|^2, so the unitary
/// check is O(d^2) instead of a full product.
inline bool is_monomial(const Matrix& a) {
    if (a.rows() != a.cols()) return false;
    std::vector<bool> row_used(static_cast<std::size_t>(a.rows()), false);
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        Eigen::Index hit = -1;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            if (a(i, j) == Complex(0.0, 0.0)) continue;
            if (hit >= 0) return false;
            hit = i;
        }
        if (hit < 0 || row_used[static_cast<std::size_t>(hit)]) return false;
        row_used[static_cast<std::size_t>(hit)] = true;
    }
    return true;
}

} // namespace detail

/// Checks the structural claim `kind` on `op` at tolerance `tol`.
/// hermitian: max |A - A^dagger|; unitary: max |A^dagger A - I|;
/// projector: hermitian AND max |A^2 - A|. The report carries the worst case.
/// Diagonal and generalized-permutation matrices take O(d^2) fast paths so the
/// checks stay cheap on the larger register layouts.
inline ValidationReport validate_operator(const OperatorMatrix& op, OperatorKind kind, double tol) {
    if (tol <= 0.0) throw ValidationError("validation tolerance must be positive");
    const Matrix& a = op.entries;
    double dev = 0.0;
    switch (kind) {
    case OperatorKind::hermitian:
        dev = (a - a.adjoint()).cwiseAbs().maxCoeff();
        break;
    case OperatorKind::unitary:
        if (detail::is_monomial(a)) {
            for (Eigen::Index j = 0; j < a.cols(); ++j) {
                double col_sq = 0.0;
                for (Eigen::Index i = 0; i < a.rows(); ++i) col_sq += std::norm(a(i, j));
                dev = std::max(dev, std::abs(col_sq - 1.0));
            }
        } else {
            dev = (a.adjoint() * a - Matrix::Identity(a.rows(), a.cols())).cwiseAbs().maxCoeff();
        }
        break;
    case OperatorKind::projector: {
        const double herm = (a - a.adjoint()).cwiseAbs().maxCoeff();
        double idem = 0.0;
        if (detail::is_diagonal(a)) {
            for (Eigen::Index i = 0; i < a.rows(); ++i)
                idem = std::max(idem, std::abs(a(i, i) * a(i, i) - a(i, i)));
        } else {
            idem = (a * a - a).cwiseAbs().maxCoeff();
        }
        dev = std::max(herm, idem);
        break;
    }
    case OperatorKind::general:
        dev = 0.0;
        break;
    }
    return {dev <= tol, dev};
}

namespace detail {

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

} // namespace detail

/// Kronecker composition of states, first factor most significant.
inline StateVector tensor_product(std::span<const StateVector> factors) {
    if (factors.empty()) throw LayoutError("tensor_product needs at least one factor");
    StateVector out = factors[0];
    for (std::size_t i = 1; i < factors.size(); ++i) {
        const auto& f = factors[i];
        Vector v(out.amplitudes.size() * f.amplitudes.size());
        for (Eigen::Index j = 0; j < out.amplitudes.size(); ++j)
            v.segment(j * f.amplitudes.size(), f.amplitudes.size()) =
                out.amplitudes(j) * f.amplitudes;
        out = StateVector(SpaceLayout::concat(out.layout, f.layout), std::move(v));
    }
    return out;
}

inline StateVector tensor_product(std::initializer_list<StateVector> factors) {
    return tensor_product(std::span<const StateVector>(factors.begin(), factors.size()));
}

/// Kronecker composition of operators, first factor most significant.
inline OperatorMatrix tensor_product(std::span<const OperatorMatrix> factors) {
    if (factors.empty()) throw LayoutError("tensor_product needs at least one factor");
    OperatorMatrix out = factors[0];
    for (std::size_t i = 1; i < factors.size(); ++i) {
        out = OperatorMatrix(SpaceLayout::concat(out.layout, factors[i].layout),
                             detail::kron(out.entries, factors[i].entries));
    }
    return out;
}

inline OperatorMatrix tensor_product(std::initializer_list<OperatorMatrix> factors) {
    return tensor_product(std::span<const OperatorMatrix>(factors.begin(), factors.size()));
}

/// exp(-i H dt) via Hermitian eigendecomposition (hbar = 1).
inline OperatorMatrix propagator(const OperatorMatrix& h, double dt) {
    const auto herm = validate_operator(h, OperatorKind::hermitian, 1e-10);
    if (!herm.pass)
        throw ValidationError("propagator requires a Hermitian Hamiltonian (max deviation " +
                              std::to_string(herm.max_deviation) + ")");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h.entries);
    if (solver.info() != Eigen::Success)
        throw ValidationError("eigendecomposition of the Hamiltonian failed");
    const Eigen::VectorXd evals = solver.eigenvalues();
    const Matrix& v = solver.eigenvectors();
    Vector phases(evals.size());
    for (Eigen::Index k = 0; k < evals.size(); ++k)
        phases(k) = std::exp(Complex(0.0, -evals(k) * dt));
    return {h.layout, v * phases.asDiagonal() * v.adjoint(), OperatorKind::unitary};
}

inline StateVector apply(const OperatorMatrix& op, const StateVector& psi) {
    if (!(op.layout == psi.layout)) throw LayoutError("operator/state layout mismatch");
    return {psi.layout, op.entries * psi.amplitudes};
}

/// Embeds an operator acting on a subset of factors (given by their positions
/// in `layout`, in the order the small operator's layout lists them) into the
/// full space, acting as the identity elsewhere.
inline OperatorMatrix embed_operator(const OperatorMatrix& small, const SpaceLayout& layout,
                                     std::span<const std::size_t> positions) {
    if (positions.size() != small.layout.factor_count())
        throw LayoutError("embed_operator: position count does not match small operator factors");
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= layout.factor_count())
            throw LayoutError("embed_operator: factor position out of range");
        if (layout.factors()[positions[i]].dim != small.layout.factors()[i].dim)
            throw LayoutError("embed_operator: factor dimension mismatch");
    }
    const std::size_t dim = layout.total_dim();
    Matrix out = Matrix::Zero(dim, dim);
    std::vector<std::size_t> small_digits(positions.size());
    for (std::size_t col = 0; col < dim; ++col) {
        auto digits = layout.digits_of(col);
        for (std::size_t i = 0; i < positions.size(); ++i) small_digits[i] = digits[positions[i]];
        const std::size_t small_col = small.layout.index_of(small_digits);
        for (std::size_t small_row = 0; small_row < small.layout.total_dim(); ++small_row) {
            const Complex v = small.entries(static_cast<Eigen::Index>(small_row),
                                            static_cast<Eigen::Index>(small_col));
            if (v == Complex(0.0, 0.0)) continue;
            const auto row_digits_small = small.layout.digits_of(small_row);
            auto row_digits = digits;
            for (std::size_t i = 0; i < positions.size(); ++i)
                row_digits[positions[i]] = row_digits_small[i];
            out(static_cast<Eigen::Index>(layout.index_of(row_digits)),
                static_cast<Eigen::Index>(col)) = v;
        }
    }
    return {layout, std::move(out), small.kind_hint};
}

inline OperatorMatrix embed_operator(const OperatorMatrix& small, const SpaceLayout& layout,
                                     std::initializer_list<std::size_t> positions) {
    return embed_operator(small, layout,
                          std::span<const std::size_t>(positions.begin(), positions.size()));
}

} // namespace decohist
