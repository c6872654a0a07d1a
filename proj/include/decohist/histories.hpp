#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "decohist/rng.hpp"
#include "decohist/tensor.hpp"

namespace decohist {

/// Exhaustive set of mutually orthogonal projectors summing to the identity.
/// Construction validates all three properties, so a ProjectorFamily in hand
/// is always a genuine decomposition of the identity at its tolerance.
class ProjectorFamily {
public:
    ProjectorFamily(SpaceLayout layout, std::vector<OperatorMatrix> projectors,
                    std::vector<std::string> labels = {}, double tol = 1e-10)
        : layout_(std::move(layout)), projectors_(std::move(projectors)), labels_(std::move(labels)) {
        if (projectors_.empty()) throw ValidationError("projector family must be non-empty");
        if (labels_.empty()) {
            for (std::size_t k = 0; k < projectors_.size(); ++k)
                labels_.push_back(std::to_string(k));
        }
        if (labels_.size() != projectors_.size())
            throw ValidationError("label count does not match projector count");
        const auto d = static_cast<Eigen::Index>(layout_.total_dim());
        Matrix sum = Matrix::Zero(d, d);
        for (std::size_t k = 0; k < projectors_.size(); ++k) {
            const auto& p = projectors_[k];
            if (!(p.layout == layout_)) throw LayoutError("family member layout mismatch");
            const auto rep = validate_operator(p, OperatorKind::projector, tol);
            if (!rep.pass)
                throw ValidationError("family member " + labels_[k] + " is not a projector (deviation " +
                                      std::to_string(rep.max_deviation) + ")");
            sum += p.entries;
        }
        for (std::size_t i = 0; i < projectors_.size(); ++i)
            for (std::size_t j = i + 1; j < projectors_.size(); ++j) {
                double dev;
                if (detail::is_diagonal(projectors_[i].entries) &&
                    detail::is_diagonal(projectors_[j].entries)) {
                    dev = (projectors_[i].entries.diagonal().cwiseProduct(
                               projectors_[j].entries.diagonal()))
                              .cwiseAbs()
                              .maxCoeff();
                } else {
                    dev = (projectors_[i].entries * projectors_[j].entries).cwiseAbs().maxCoeff();
                }
                if (dev > tol)
                    throw ValidationError("family members " + labels_[i] + ", " + labels_[j] +
                                          " are not orthogonal (deviation " + std::to_string(dev) + ")");
            }
        const double complete = (sum - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
        if (complete > tol)
            throw ValidationError("family does not sum to the identity (deviation " +
                                  std::to_string(complete) + ")");
    }

    const SpaceLayout& layout() const { return layout_; }
    std::size_t size() const { return projectors_.size(); }
    const OperatorMatrix& projector(std::size_t k) const { return projectors_.at(k); }
    const std::string& label(std::size_t k) const { return labels_.at(k); }

private:
    SpaceLayout layout_;
    std::vector<OperatorMatrix> projectors_;
    std::vector<std::string> labels_;
};

/// Family of rank-1 projectors onto a register's computational basis states,
/// embedded into the full layout.
inline ProjectorFamily basis_family(const SpaceLayout& layout, const std::string& factor_label,
                                    const std::string& label_prefix = "") {
    const std::size_t pos = layout.position_of(factor_label);
    const std::size_t d = layout.factors()[pos].dim;
    std::vector<OperatorMatrix> projs;
    std::vector<std::string> labels;
    for (std::size_t k = 0; k < d; ++k) {
        Matrix small = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        small(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 1.0;
        OperatorMatrix small_op(single_factor(factor_label, d), std::move(small),
                                OperatorKind::projector);
        projs.push_back(embed_operator(small_op, layout, {pos}));
        labels.push_back(label_prefix + std::to_string(k));
    }
    return {layout, std::move(projs), std::move(labels)};
}

/// Dynamics of a closed system: either a time-independent Hamiltonian or an
/// explicit unitary per interval (0, t_1], (t_1, t_2], ...
using Dynamics = std::variant<OperatorMatrix, std::vector<OperatorMatrix>>;

/// Initial state + dynamics + ordered projection times + one family per time.
/// Histories are tuples with one alternative index per time; the flat history
/// index is mixed-radix with the FIRST time as the most significant digit.
class HistorySet {
public:
    HistorySet(StateVector psi0, Dynamics dynamics, std::vector<double> times,
               std::vector<ProjectorFamily> families)
        : psi0_(std::move(psi0)), dynamics_(std::move(dynamics)), times_(std::move(times)),
          families_(std::move(families)) {
        if (times_.empty()) throw ValidationError("history set needs at least one time");
        if (families_.size() != times_.size())
            throw ValidationError("family count must equal time count");
        for (std::size_t i = 0; i + 1 < times_.size(); ++i)
            if (!(times_[i] < times_[i + 1]))
                throw ValidationError("projection times must be strictly increasing");
        if (times_.front() <= 0.0) throw ValidationError("projection times must be positive");
        for (const auto& f : families_)
            if (!(f.layout() == psi0_.layout)) throw LayoutError("family layout mismatch");
        if (const auto* h = std::get_if<OperatorMatrix>(&dynamics_)) {
            if (!(h->layout == psi0_.layout)) throw LayoutError("Hamiltonian layout mismatch");
            if (!validate_operator(*h, OperatorKind::hermitian, 1e-10).pass)
                throw ValidationError("Hamiltonian dynamics must be Hermitian");
        } else {
            const auto& us = std::get<std::vector<OperatorMatrix>>(dynamics_);
            if (us.size() != times_.size())
                throw ValidationError("need one interval unitary per projection time");
            for (const auto& u : us) {
                if (!(u.layout == psi0_.layout)) throw LayoutError("interval unitary layout mismatch");
                if (!validate_operator(u, OperatorKind::unitary, 1e-10).pass)
                    throw ValidationError("interval dynamics must be unitary");
            }
        }
    }

    const StateVector& psi0() const { return psi0_; }
    const std::vector<double>& times() const { return times_; }
    std::size_t time_count() const { return times_.size(); }
    const ProjectorFamily& family(std::size_t i) const { return families_.at(i); }
    bool has_hamiltonian() const { return std::holds_alternative<OperatorMatrix>(dynamics_); }
    const OperatorMatrix& hamiltonian() const { return std::get<OperatorMatrix>(dynamics_); }

    std::size_t history_count() const {
        std::size_t n = 1;
        for (const auto& f : families_) n *= f.size();
        return n;
    }

    std::vector<std::size_t> family_sizes() const {
        std::vector<std::size_t> sizes;
        for (const auto& f : families_) sizes.push_back(f.size());
        return sizes;
    }

    /// Unitary for the interval ending at times_[i] (from the previous time,
    /// or from 0 for i == 0).
    OperatorMatrix interval_unitary(std::size_t i) const {
        if (i >= times_.size()) throw ValidationError("interval index out of range");
        if (const auto* h = std::get_if<OperatorMatrix>(&dynamics_)) {
            const double t_prev = (i == 0) ? 0.0 : times_[i - 1];
            return propagator(*h, times_[i] - t_prev);
        }
        return std::get<std::vector<OperatorMatrix>>(dynamics_)[i];
    }

    /// Cumulative evolution from time 0 through times_[i].
    OperatorMatrix evolution_to(std::size_t i) const {
        if (const auto* h = std::get_if<OperatorMatrix>(&dynamics_))
            return propagator(*h, times_.at(i));
        OperatorMatrix u = interval_unitary(0);
        for (std::size_t j = 1; j <= i; ++j)
            u = OperatorMatrix(u.layout, interval_unitary(j).entries * u.entries,
                               OperatorKind::unitary);
        return u;
    }

private:
    StateVector psi0_;
    Dynamics dynamics_;
    std::vector<double> times_;
    std::vector<ProjectorFamily> families_;
};

/// Bijection between history tuples and flat row indices of a
/// DecoherenceMatrix (first time most significant).
class HistoryIndexMap {
public:
    explicit HistoryIndexMap(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
        total_ = 1;
        for (std::size_t s : sizes_) {
            if (s == 0) throw ValidationError("empty family in history index map");
            total_ *= s;
        }
    }

    std::size_t total() const { return total_; }
    const std::vector<std::size_t>& sizes() const { return sizes_; }

    std::size_t index_of(std::span<const std::size_t> tuple) const {
        if (tuple.size() != sizes_.size()) throw ValidationError("history tuple length mismatch");
        std::size_t idx = 0;
        for (std::size_t i = 0; i < sizes_.size(); ++i) {
            if (tuple[i] >= sizes_[i]) throw ValidationError("history tuple entry out of range");
            idx = idx * sizes_[i] + tuple[i];
        }
        return idx;
    }

    std::vector<std::size_t> tuple_of(std::size_t index) const {
        if (index >= total_) throw ValidationError("history index out of range");
        std::vector<std::size_t> tuple(sizes_.size());
        for (std::size_t i = sizes_.size(); i-- > 0;) {
            tuple[i] = index % sizes_[i];
            index /= sizes_[i];
        }
        return tuple;
    }

private:
    std::vector<std::size_t> sizes_;
    std::size_t total_ = 0;
};

/// Complex matrix D[alpha, alpha'] over history pairs; the diagonal carries
/// candidate probabilities whether or not the set turns out consistent.
struct DecoherenceMatrix {
    HistoryIndexMap index_map;
    Matrix entries;

    double diagonal_sum() const { return entries.diagonal().real().sum(); }
};

struct ConsistencyReport {
    double epsilon = 0.0;
    double max_normalized_offdiag = 0.0;
    std::pair<std::size_t, std::size_t> worst_pair{0, 0};
    bool consistent = false;
};

/// Heisenberg-picture projector U(0 -> t_i)† P U(0 -> t_i).
inline OperatorMatrix heisenberg_projector(const OperatorMatrix& p, const HistorySet& set,
                                           std::size_t time_index) {
    if (time_index >= set.time_count()) throw ValidationError("time index out of range");
    const OperatorMatrix u = set.evolution_to(time_index);
    return {p.layout, u.entries.adjoint() * p.entries * u.entries, OperatorKind::projector};
}

/// Time-ordered history operator, latest projection leftmost.
inline OperatorMatrix history_operator(const HistorySet& set, std::span<const std::size_t> alpha) {
    if (alpha.size() != set.time_count()) throw ValidationError("history tuple length mismatch");
    const auto d = static_cast<Eigen::Index>(set.psi0().layout.total_dim());
    Matrix c = Matrix::Identity(d, d);
    for (std::size_t i = 0; i < set.time_count(); ++i) {
        if (alpha[i] >= set.family(i).size())
            throw ValidationError("history tuple entry out of range");
        const OperatorMatrix ph = heisenberg_projector(set.family(i).projector(alpha[i]), set, i);
        c = ph.entries * c;
    }
    return {set.psi0().layout, std::move(c)};
}

/// Unnormalized Schrodinger-picture branch vectors for all full histories:
/// P^N U_N ... P^1 U_1 |psi0>, ordered by the flat history index. Pairwise
/// inner products equal the decoherence functional entries (the common final
/// Heisenberg rotation cancels).
inline std::vector<Vector> branch_vectors(const HistorySet& set, std::size_t history_cap = 4096) {
    if (set.history_count() > history_cap)
        throw CapacityError("history count " + std::to_string(set.history_count()) +
                            " exceeds cap " + std::to_string(history_cap));
    std::vector<Vector> components{set.psi0().amplitudes};
    for (std::size_t i = 0; i < set.time_count(); ++i) {
        const Matrix u = set.interval_unitary(i).entries;
        std::vector<Vector> next;
        next.reserve(components.size() * set.family(i).size());
        for (const auto& comp : components) {
            const Vector evolved = u * comp;
            for (std::size_t k = 0; k < set.family(i).size(); ++k)
                next.push_back(set.family(i).projector(k).entries * evolved);
        }
        components = std::move(next);
    }
    return components;
}

/// D[alpha, alpha'] = Tr{ C_alpha |psi0><psi0| C†_alpha' }, computed as
/// branch-vector inner products <b_alpha' | b_alpha>.
inline DecoherenceMatrix decoherence_functional(const HistorySet& set,
                                                std::size_t history_cap = 4096) {
    const auto branches = branch_vectors(set, history_cap);
    const auto n = static_cast<Eigen::Index>(branches.size());
    Matrix d(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            d(i, j) = branches[static_cast<std::size_t>(j)].dot(branches[static_cast<std::size_t>(i)]);
    return {HistoryIndexMap(set.family_sizes()), std::move(d)};
}

/// Normalized off-diagonal consistency measure. Each off-diagonal entry is
/// scored as |D[a,a']| / sqrt(p(a) p(a')); pairs whose probability scale is
/// numerically zero are judged by |D[a,a']| <= epsilon directly (and score 0
/// when they pass), so the report invariant `consistent <=> measure <= epsilon`
/// holds for zero-probability branches too.
inline ConsistencyReport check_consistency(const DecoherenceMatrix& d, double epsilon = 1e-8) {
    if (epsilon <= 0.0) throw ValidationError("consistency epsilon must be positive");
    // Probability products below this scale are indistinguishable from the
    // roundoff noise of numerically-zero branch vectors (whose squared norms
    // land near machine-epsilon squared), so such pairs are judged by the
    // absolute off-diagonal instead of a noise/noise ratio. Cauchy-Schwarz
    // bounds |D[i,j]| by this same scale, so passing pairs score 0 honestly.
    constexpr double kZeroScale = 1e-14;
    constexpr double kFloor = 1e-300;
    ConsistencyReport report;
    report.epsilon = epsilon;
    const Eigen::Index n = d.entries.rows();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double off = std::abs(d.entries(i, j));
            const double pi = std::max(d.entries(i, i).real(), 0.0);
            const double pj = std::max(d.entries(j, j).real(), 0.0);
            const double scale = std::sqrt(pi * pj);
            double measure;
            if (scale < kZeroScale)
                measure = (off <= epsilon) ? 0.0 : off / std::max(scale, kFloor);
            else
                measure = off / scale;
            if (measure > report.max_normalized_offdiag) {
                report.max_normalized_offdiag = measure;
                report.worst_pair = {static_cast<std::size_t>(i), static_cast<std::size_t>(j)};
            }
        }
    report.consistent = report.max_normalized_offdiag <= epsilon;
    return report;
}

/// Diagonal of D as probabilities. Defined only for consistent sets; refuses
/// otherwise, since the sum rules fail for inconsistent ones.
inline std::vector<double> branch_probabilities(const DecoherenceMatrix& d,
                                                const ConsistencyReport& report) {
    if (!report.consistent)
        throw InconsistentSetError(
            "probabilities are undefined for an inconsistent history set (measure " +
            std::to_string(report.max_normalized_offdiag) + " > epsilon " +
            std::to_string(report.epsilon) + ")");
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(d.entries.rows()));
    for (Eigen::Index i = 0; i < d.entries.rows(); ++i) {
        const double p = d.entries(i, i).real();
        if (p < -1e-12)
            throw ValidationError("decoherence diagonal is negative beyond tolerance: " +
                                  std::to_string(p));
        probs.push_back(std::max(p, 0.0));
    }
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (std::abs(sum - 1.0) > 1e-10)
        throw ValidationError("history probabilities sum to " + std::to_string(sum));
    return probs;
}

/// One unnormalized wavefunction component per partial history at time t.
struct BranchComponent {
    std::vector<std::size_t> partial_history;
    StateVector state;
};

/// Resolves the evolving wavefunction at time t into components indexed by
/// the partial histories (alpha_1 ... alpha_j) with t_j < t <= t_{j+1}.
/// Components always sum to the fully evolved state. For explicit interval
/// dynamics, evolution inside an interval is attributed to the interval's
/// end, so components between times carry no partial-interval factor.
inline std::vector<BranchComponent> branch_components(const HistorySet& set, double t) {
    if (t < 0.0) throw ValidationError("branch_components requires t >= 0");
    std::size_t steps = 0;
    while (steps < set.time_count() && set.times()[steps] < t) ++steps;
    std::vector<Vector> components{set.psi0().amplitudes};
    std::vector<std::vector<std::size_t>> tuples{{}};
    for (std::size_t i = 0; i < steps; ++i) {
        const Matrix u = set.interval_unitary(i).entries;
        std::vector<Vector> next;
        std::vector<std::vector<std::size_t>> next_tuples;
        for (std::size_t c = 0; c < components.size(); ++c) {
            const Vector evolved = u * components[c];
            for (std::size_t k = 0; k < set.family(i).size(); ++k) {
                next.push_back(set.family(i).projector(k).entries * evolved);
                auto tup = tuples[c];
                tup.push_back(k);
                next_tuples.push_back(std::move(tup));
            }
        }
        components = std::move(next);
        tuples = std::move(next_tuples);
    }
    // Partial evolution past the last completed projection time.
    if (set.has_hamiltonian()) {
        const double t_prev = (steps == 0) ? 0.0 : set.times()[steps - 1];
        if (t > t_prev) {
            const Matrix u = propagator(set.hamiltonian(), t - t_prev).entries;
            for (auto& c : components) c = u * c;
        }
    }
    std::vector<BranchComponent> out;
    out.reserve(components.size());
    for (std::size_t c = 0; c < components.size(); ++c)
        out.push_back({std::move(tuples[c]), StateVector(set.psi0().layout, std::move(components[c]))});
    return out;
}

/// Block-sums D over a partition of the history index space.
inline DecoherenceMatrix coarse_grain(const DecoherenceMatrix& d,
                                      const std::vector<std::vector<std::size_t>>& grouping) {
    const std::size_t n = static_cast<std::size_t>(d.entries.rows());
    std::vector<bool> seen(n, false);
    for (const auto& block : grouping)
        for (std::size_t idx : block) {
            if (idx >= n) throw ValidationError("coarse_grain: history index out of range");
            if (seen[idx]) throw ValidationError("coarse_grain: grouping is not a partition (repeat)");
            seen[idx] = true;
        }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw ValidationError("coarse_grain: grouping is not a partition (missing index)");
    const auto m = static_cast<Eigen::Index>(grouping.size());
    Matrix coarse = Matrix::Zero(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b)
            for (std::size_t i : grouping[static_cast<std::size_t>(a)])
                for (std::size_t j : grouping[static_cast<std::size_t>(b)])
                    coarse(a, b) += d.entries(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(j));
    return {HistoryIndexMap({grouping.size()}), std::move(coarse)};
}

/// Sum_k P_k rho P_k: kills coherence between the family's subspaces while
/// preserving the trace.
inline OperatorMatrix decohere(const OperatorMatrix& rho, const ProjectorFamily& family) {
    if (!(rho.layout == family.layout())) throw LayoutError("density operator layout mismatch");
    if (!validate_operator(rho, OperatorKind::hermitian, 1e-10).pass)
        throw ValidationError("density operator must be Hermitian");
    if (std::abs(rho.entries.trace().real() - 1.0) > 1e-10 ||
        std::abs(rho.entries.trace().imag()) > 1e-10)
        throw ValidationError("density operator must have unit trace");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(rho.entries);
    if (solver.eigenvalues().minCoeff() < -1e-10)
        throw ValidationError("density operator must be positive semidefinite");
    Matrix out = Matrix::Zero(rho.entries.rows(), rho.entries.cols());
    for (std::size_t k = 0; k < family.size(); ++k) {
        const Matrix& p = family.projector(k).entries;
        out += p * rho.entries * p;
    }
    return {rho.layout, std::move(out), OperatorKind::hermitian};
}

struct MeasurementOutcome {
    std::size_t outcome = 0;
    StateVector state;
    double probability = 0.0;
};

/// Projective collapse: outcome k with p_k = <psi|P_k|psi>, state P_k psi / sqrt(p_k).
inline MeasurementOutcome projective_measure(const StateVector& psi, const ProjectorFamily& family,
                                             Rng& rng) {
    if (!(psi.layout == family.layout())) throw LayoutError("state/family layout mismatch");
    std::vector<double> probs(family.size());
    double total = 0.0;
    for (std::size_t k = 0; k < family.size(); ++k) {
        probs[k] = std::max(
            (psi.amplitudes.dot(family.projector(k).entries * psi.amplitudes)).real(), 0.0);
        total += probs[k];
    }
    if (total < 1e-15)
        throw ValidationError("projective_measure: all outcome probabilities vanish");
    const std::size_t k = rng.weighted_index(probs);
    Vector collapsed = family.projector(k).entries * psi.amplitudes;
    collapsed /= std::sqrt(probs[k]);
    return {k, StateVector(psi.layout, std::move(collapsed)), probs[k]};
}

/// Draws one history tuple by sequential collapse at each projection time.
/// Allowed only for consistent sets, where the induced distribution equals
/// the decoherence-functional diagonal.
inline std::vector<std::size_t> sample_history(const HistorySet& set,
                                               const ConsistencyReport& report, Rng& rng) {
    if (!report.consistent)
        throw InconsistentSetError("sample_history requires a consistent history set");
    StateVector psi = set.psi0();
    std::vector<std::size_t> tuple;
    tuple.reserve(set.time_count());
    for (std::size_t i = 0; i < set.time_count(); ++i) {
        psi = apply(set.interval_unitary(i), psi);
        const auto m = projective_measure(psi, set.family(i), rng);
        psi = m.state;
        tuple.push_back(m.outcome);
    }
    return tuple;
}

} // namespace decohist
