#pragma once

// Shared helpers for the test suites: random states, operators, families, and
// the brute-force decoherence-functional trace oracle. Everything here is
// deliberately the slow, direct formula, independent of the branch-vector
// path used by the library.

#include <random>
#include <vector>

#include "decohist/histories.hpp"

namespace test_support {

using namespace decohist;

inline Matrix random_complex(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Matrix m(dim, dim);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = Complex(dist(rng), dist(rng));
    return m;
}

inline Matrix random_hermitian(std::size_t dim, std::mt19937_64& rng) {
    const Matrix m = random_complex(dim, rng);
    return 0.5 * (m + m.adjoint());
}

inline Matrix random_unitary(std::size_t dim, std::mt19937_64& rng) {
    Eigen::HouseholderQR<Matrix> qr(random_complex(dim, rng));
    Matrix q = qr.householderQ();
    return q;
}

inline StateVector random_state(const SpaceLayout& layout, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Vector v(static_cast<Eigen::Index>(layout.total_dim()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Complex(dist(rng), dist(rng));
    v.normalize();
    return {layout, std::move(v)};
}

/// Random exhaustive orthogonal family: columns of a random unitary grouped
/// into a random partition (so members can have rank > 1).
inline ProjectorFamily random_family(const SpaceLayout& layout, std::mt19937_64& rng) {
    const std::size_t dim = layout.total_dim();
    const Matrix u = random_unitary(dim, rng);
    std::vector<std::size_t> assignment(dim);
    std::uniform_int_distribution<std::size_t> groups(2, std::min<std::size_t>(dim, 3));
    const std::size_t g = groups(rng);
    std::uniform_int_distribution<std::size_t> pick(0, g - 1);
    bool all_used;
    do {
        for (auto& a : assignment) a = pick(rng);
        std::vector<bool> used(g, false);
        for (auto a : assignment) used[a] = true;
        all_used = std::find(used.begin(), used.end(), false) == used.end();
    } while (!all_used);
    std::vector<OperatorMatrix> projs;
    for (std::size_t k = 0; k < g; ++k) {
        Matrix p = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        for (std::size_t c = 0; c < dim; ++c)
            if (assignment[c] == k)
                p += u.col(static_cast<Eigen::Index>(c)) * u.col(static_cast<Eigen::Index>(c)).adjoint();
        projs.emplace_back(layout, std::move(p), OperatorKind::projector);
    }
    return {layout, std::move(projs)};
}

/// Random history set with Hamiltonian dynamics (generally inconsistent).
inline HistorySet random_history_set(std::size_t qubits, std::size_t times, std::mt19937_64& rng) {
    std::vector<Factor> factors;
    for (std::size_t q = 0; q < qubits; ++q) factors.push_back({"q" + std::to_string(q + 1), 2});
    SpaceLayout layout(factors);
    OperatorMatrix h(layout, random_hermitian(layout.total_dim(), rng), OperatorKind::hermitian);
    std::vector<double> ts;
    std::vector<ProjectorFamily> families;
    for (std::size_t i = 0; i < times; ++i) {
        ts.push_back(0.5 * (i + 1));
        families.push_back(random_family(layout, rng));
    }
    return {random_state(layout, rng), std::move(h), std::move(ts), std::move(families)};
}

/// Random exactly consistent history set: every Schrodinger projector is a
/// Heisenberg-rotated block of one fixed random basis, so all Heisenberg
/// projectors commute and the branch vectors are orthogonal by construction.
inline HistorySet random_consistent_set(std::size_t qubits, std::size_t times,
                                        std::mt19937_64& rng) {
    std::vector<Factor> factors;
    for (std::size_t q = 0; q < qubits; ++q) factors.push_back({"q" + std::to_string(q + 1), 2});
    SpaceLayout layout(factors);
    const std::size_t dim = layout.total_dim();
    OperatorMatrix h(layout, random_hermitian(dim, rng), OperatorKind::hermitian);
    const Matrix basis = random_unitary(dim, rng);

    std::vector<double> ts;
    std::vector<ProjectorFamily> families;
    std::uniform_int_distribution<std::size_t> groups(2, std::min<std::size_t>(dim, 3));
    for (std::size_t i = 0; i < times; ++i) {
        const double t = 0.5 * (i + 1);
        ts.push_back(t);
        const Matrix u = propagator(h, t).entries;
        const std::size_t g = groups(rng);
        std::uniform_int_distribution<std::size_t> pick(0, g - 1);
        std::vector<std::size_t> assignment(dim);
        bool all_used;
        do {
            for (auto& a : assignment) a = pick(rng);
            std::vector<bool> used(g, false);
            for (auto a : assignment) used[a] = true;
            all_used = std::find(used.begin(), used.end(), false) == used.end();
        } while (!all_used);
        std::vector<OperatorMatrix> projs;
        for (std::size_t k = 0; k < g; ++k) {
            Matrix block = Matrix::Zero(static_cast<Eigen::Index>(dim),
                                        static_cast<Eigen::Index>(dim));
            for (std::size_t c = 0; c < dim; ++c)
                if (assignment[c] == k)
                    block += basis.col(static_cast<Eigen::Index>(c)) *
                             basis.col(static_cast<Eigen::Index>(c)).adjoint();
            projs.emplace_back(layout, u * block * u.adjoint(), OperatorKind::projector);
        }
        families.emplace_back(layout, std::move(projs));
    }
    return {random_state(layout, rng), std::move(h), std::move(ts), std::move(families)};
}

/// Brute-force oracle: D[a, a'] = Tr{ C_a |psi0><psi0| C†_a' } with the
/// history operators assembled by explicit Heisenberg conjugation.
inline Matrix trace_oracle(const HistorySet& set) {
    const std::size_t dim = set.psi0().layout.total_dim();
    const auto d = static_cast<Eigen::Index>(dim);
    std::vector<Matrix> heisenberg; // flattened: [time][member]
    std::vector<std::size_t> sizes = set.family_sizes();
    std::vector<std::vector<Matrix>> ph(set.time_count());
    for (std::size_t i = 0; i < set.time_count(); ++i) {
        const Matrix u = set.evolution_to(i).entries;
        for (std::size_t k = 0; k < set.family(i).size(); ++k)
            ph[i].push_back(u.adjoint() * set.family(i).projector(k).entries * u);
    }
    HistoryIndexMap map(sizes);
    const Matrix rho = set.psi0().amplitudes * set.psi0().amplitudes.adjoint();
    std::vector<Matrix> c(map.total());
    for (std::size_t a = 0; a < map.total(); ++a) {
        const auto tuple = map.tuple_of(a);
        Matrix m = Matrix::Identity(d, d);
        for (std::size_t i = 0; i < tuple.size(); ++i) m = ph[i][tuple[i]] * m;
        c[a] = std::move(m);
    }
    Matrix out(static_cast<Eigen::Index>(map.total()), static_cast<Eigen::Index>(map.total()));
    for (std::size_t a = 0; a < map.total(); ++a)
        for (std::size_t b = 0; b < map.total(); ++b)
            out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                (c[a] * rho * c[b].adjoint()).trace();
    return out;
}

inline StateVector basis_state(const SpaceLayout& layout, std::size_t which) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(layout.total_dim()));
    v(static_cast<Eigen::Index>(which)) = 1.0;
    return {layout, std::move(v)};
}
inline StateVector x_plus(const SpaceLayout& layout) {
    const double r = 1.0 / std::sqrt(2.0);
    Vector v(2);
    v << r, r;
    return {layout, std::move(v)};
}

inline ProjectorFamily z_family(const SpaceLayout& layout) { return basis_family(layout, layout.factors()[0].label, "z"); }

inline ProjectorFamily x_family(const SpaceLayout& layout) {
    const double h = 0.5;
    Matrix plus(2, 2), minus(2, 2);
    plus << h, h, h, h;
    minus << h, -h, -h, h;
    return {layout,
            {OperatorMatrix(layout, plus, OperatorKind::projector),
             OperatorMatrix(layout, minus, OperatorKind::projector)},
            {"x+", "x-"}};
}

} // namespace test_support
