#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "decohist/histories.hpp"
#include "decohist/tensor.hpp"

namespace decohist {

/// Deterministic finite-state observer: at each step it reads one input value
/// (the pointer observable) and moves to transition[state][input].
struct Automaton {
    std::size_t state_count = 0;
    std::size_t input_count = 0;
    std::vector<std::vector<std::size_t>> transition; // [state][input] -> state
    std::size_t initial_state = 0;

    void validate() const {
        if (state_count == 0 || input_count == 0)
            throw ValidationError("automaton needs at least one state and one input value");
        if (initial_state >= state_count) throw ValidationError("initial state out of range");
        if (transition.size() != state_count)
            throw ValidationError("transition table must have one row per state");
        for (const auto& row : transition) {
            if (row.size() != input_count)
                throw ValidationError("transition row must have one entry per input value");
            for (std::size_t next : row)
                if (next >= state_count) throw ValidationError("transition target out of range");
        }
    }

    /// True when state -> transition[state][input] is a bijection for every
    /// fixed input; only then can the brain update be unitary without archives.
    bool columns_bijective() const {
        for (std::size_t a = 0; a < input_count; ++a) {
            std::vector<bool> hit(state_count, false);
            for (std::size_t s = 0; s < state_count; ++s) {
                const std::size_t next = transition[s][a];
                if (hit[next]) return false;
                hit[next] = true;
            }
        }
        return true;
    }

    /// Classical fold of an input sequence from the initial state.
    std::size_t run(std::span<const std::size_t> inputs) const {
        std::size_t state = initial_state;
        for (std::size_t a : inputs) state = transition.at(state).at(a);
        return state;
    }
};

/// Register plan for a compiled observer: pointer A, brain B, optional
/// per-step archive registers a_1..a_T / b_1..b_T, then the system factors.
class RobotLayout {
public:
    RobotLayout(std::size_t input_dim, std::size_t state_dim, std::size_t step_budget,
                std::vector<Factor> system, bool archive_inputs = true, bool archive_states = true)
        : input_dim_(input_dim), state_dim_(state_dim), steps_(step_budget),
          archive_inputs_(archive_inputs), archive_states_(archive_states),
          space_(build(input_dim, state_dim, step_budget, system, archive_inputs, archive_states)) {}

    const SpaceLayout& space() const { return space_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t step_budget() const { return steps_; }
    bool archive_inputs() const { return archive_inputs_; }
    bool archive_states() const { return archive_states_; }

    std::size_t pointer_pos() const { return 0; }
    std::size_t brain_pos() const { return 1; }
    std::size_t input_archive_pos(std::size_t step) const {
        if (!archive_inputs_ || step >= steps_) throw LayoutError("no input archive for this step");
        return 2 + step;
    }
    std::size_t state_archive_pos(std::size_t step) const {
        if (!archive_states_ || step >= steps_) throw LayoutError("no state archive for this step");
        return 2 + (archive_inputs_ ? steps_ : 0) + step;
    }
    std::size_t system_pos(std::size_t k) const {
        return 2 + (archive_inputs_ ? steps_ : 0) + (archive_states_ ? steps_ : 0) + k;
    }

    std::string pointer_label() const { return "A"; }
    std::string brain_label() const { return "B"; }
    std::string input_archive_label(std::size_t step) const {
        return "a" + std::to_string(step + 1);
    }
    std::string state_archive_label(std::size_t step) const {
        return "b" + std::to_string(step + 1);
    }

private:
    static SpaceLayout build(std::size_t input_dim, std::size_t state_dim, std::size_t steps,
                             const std::vector<Factor>& system, bool archive_inputs,
                             bool archive_states) {
        std::vector<Factor> factors{{"A", input_dim}, {"B", state_dim}};
        if (archive_inputs)
            for (std::size_t j = 0; j < steps; ++j)
                factors.push_back({"a" + std::to_string(j + 1), input_dim});
        if (archive_states)
            for (std::size_t j = 0; j < steps; ++j)
                factors.push_back({"b" + std::to_string(j + 1), state_dim});
        factors.insert(factors.end(), system.begin(), system.end());
        return SpaceLayout(std::move(factors));
    }

    std::size_t input_dim_, state_dim_, steps_;
    bool archive_inputs_, archive_states_;
    SpaceLayout space_;
};

/// Basis permutation on a layout, kept in permutation form so it stays cheap
/// on large spaces; materialize with to_operator() when a matrix is needed.
class BasisPermutation {
public:
    BasisPermutation(SpaceLayout layout, std::vector<std::size_t> image)
        : layout_(std::move(layout)), image_(std::move(image)) {
        if (image_.size() != layout_.total_dim())
            throw LayoutError("permutation size does not match layout");
        std::vector<bool> hit(image_.size(), false);
        for (std::size_t t : image_) {
            if (t >= image_.size() || hit[t])
                throw ValidationError("basis map is not a permutation");
            hit[t] = true;
        }
    }

    const SpaceLayout& layout() const { return layout_; }
    std::size_t map(std::size_t basis_index) const { return image_.at(basis_index); }

    StateVector apply(const StateVector& psi) const {
        if (!(psi.layout == layout_)) throw LayoutError("permutation/state layout mismatch");
        Vector out(psi.amplitudes.size());
        for (std::size_t i = 0; i < image_.size(); ++i)
            out(static_cast<Eigen::Index>(image_[i])) = psi.amplitudes(static_cast<Eigen::Index>(i));
        return {layout_, std::move(out)};
    }

    OperatorMatrix to_operator() const {
        const auto d = static_cast<Eigen::Index>(image_.size());
        Matrix m = Matrix::Zero(d, d);
        for (std::size_t i = 0; i < image_.size(); ++i)
            m(static_cast<Eigen::Index>(image_[i]), static_cast<Eigen::Index>(i)) = 1.0;
        return {layout_, std::move(m), OperatorKind::unitary};
    }

private:
    SpaceLayout layout_;
    std::vector<std::size_t> image_;
};

/// Compiles one observer step into a basis permutation (hence an exactly
/// unitary operator). On states with the step's archives in their null state
/// the action is
///     |A, B, a=0, b=0>  ->  |A', B(B, A), a=A, b=B>
/// where A' = 0 when the input archive exists (the pointer is swapped into
/// the archive, leaving it null for the next measurement) and A' = A
/// otherwise. Without a state archive the transition table must have
/// bijective input columns, or no permutation exists and compilation fails.
inline BasisPermutation compile_automaton_step(const Automaton& automaton,
                                               const RobotLayout& layout, std::size_t step) {
    automaton.validate();
    if (step >= layout.step_budget()) throw ValidationError("step exceeds the layout's step budget");
    if (automaton.input_count != layout.input_dim() || automaton.state_count != layout.state_dim())
        throw LayoutError("automaton dimensions do not match the robot layout");
    if (!layout.archive_states() && !automaton.columns_bijective())
        throw ValidationError("automaton transition columns are not bijective; "
                              "compile with state archives to restore unitarity");
    const SpaceLayout& space = layout.space();
    std::vector<std::size_t> image(space.total_dim());
    for (std::size_t idx = 0; idx < space.total_dim(); ++idx) {
        auto digits = space.digits_of(idx);
        const std::size_t a_in = digits[layout.pointer_pos()];
        if (layout.archive_states()) {
            // Swap brain into the archive, then shift the (now null on
            // reachable states) brain by the table value mod state_count.
            std::swap(digits[layout.brain_pos()], digits[layout.state_archive_pos(step)]);
            const std::size_t old_b = digits[layout.state_archive_pos(step)];
            digits[layout.brain_pos()] =
                (digits[layout.brain_pos()] + automaton.transition[old_b][a_in]) %
                automaton.state_count;
        } else {
            digits[layout.brain_pos()] = automaton.transition[digits[layout.brain_pos()]][a_in];
        }
        if (layout.archive_inputs())
            std::swap(digits[layout.pointer_pos()], digits[layout.input_archive_pos(step)]);
        image[idx] = space.index_of(digits);
    }
    return {space, std::move(image)};
}

/// Premeasurement correlating a system register with the pointer: the k-th
/// family outcome shifts the pointer by k (mod pointer dimension), so a null
/// pointer ends up displaying the outcome index. The family must be rank-1
/// over the system factor at `system_factor_pos`.
inline OperatorMatrix measurement_unitary(const ProjectorFamily& basis, const RobotLayout& layout,
                                          std::size_t system_factor_pos) {
    const SpaceLayout& space = layout.space();
    const std::size_t qdim = space.factors()[system_factor_pos].dim;
    if (basis.size() != qdim)
        throw ValidationError("measurement basis must be rank-1: need one outcome per dimension");
    const std::size_t adim = layout.input_dim();
    if (qdim > adim) throw ValidationError("pointer register is too small for this observable");
    // Build Sum_k Shift_A(k) (x) |chi_k><chi_k| on the (A, Q) pair, then embed.
    SpaceLayout small_layout({Factor{"A", adim}, Factor{"Q", qdim}});
    const auto sd = static_cast<Eigen::Index>(adim * qdim);
    Matrix small = Matrix::Zero(sd, sd);
    for (std::size_t k = 0; k < qdim; ++k) {
        const Matrix& p = basis.projector(k).entries;
        // Rank-1 check: trace of each member must be 1.
        if (std::abs(p.trace().real() - 1.0) > 1e-10)
            throw ValidationError("measurement family member " + basis.label(k) + " is not rank-1");
        Matrix shift = Matrix::Zero(static_cast<Eigen::Index>(adim), static_cast<Eigen::Index>(adim));
        for (std::size_t m = 0; m < adim; ++m)
            shift(static_cast<Eigen::Index>((m + k) % adim), static_cast<Eigen::Index>(m)) = 1.0;
        small += detail::kron(shift, p);
    }
    OperatorMatrix small_op(std::move(small_layout), std::move(small), OperatorKind::unitary);
    const std::size_t positions[] = {layout.pointer_pos(), system_factor_pos};
    return embed_operator(small_op, space, positions);
}

/// Overload for measurement bases expressed over the full space: projectors
/// must be rank-1 over the chosen system factor and identity elsewhere is the
/// caller's responsibility (use the small-basis overload when possible).
inline OperatorMatrix measurement_unitary(const ProjectorFamily& basis, const RobotLayout& layout,
                                          const std::string& system_label) {
    return measurement_unitary(basis, layout, layout.space().position_of(system_label));
}

/// Grid posterior over |alpha|^2 in [0, 1].
struct Posterior {
    Eigen::VectorXd grid;
    Eigen::VectorXd weights;
    bool degenerate_fallback = false;

    static Posterior uniform(std::size_t points = 101) {
        if (points < 2) throw ValidationError("posterior grid needs at least two points");
        Posterior p;
        p.grid = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(points), 0.0, 1.0);
        p.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(points),
                                              1.0 / static_cast<double>(points));
        return p;
    }
};

/// Binomial likelihood update: weights_i proportional to
/// prior_i * p_i^{n1} (1 - p_i)^{n - n1}, computed in log space so large
/// counts do not underflow.
inline Posterior bayes_update(const Posterior& post, std::size_t n1, std::size_t n) {
    if (n1 > n) throw ValidationError("bayes_update: n1 exceeds n");
    Posterior out = post;
    out.degenerate_fallback = false;
    if (n == 0) return out;
    const auto g = post.grid.size();
    Eigen::VectorXd logw(g);
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < g; ++i) {
        const double p = post.grid(i);
        double lw;
        if (post.weights(i) <= 0.0)
            lw = -std::numeric_limits<double>::infinity();
        else {
            lw = std::log(post.weights(i));
            if (n1 > 0) lw += (p > 0.0) ? n1 * std::log(p) : -std::numeric_limits<double>::infinity();
            if (n - n1 > 0)
                lw += (p < 1.0) ? (n - n1) * std::log1p(-p)
                                : -std::numeric_limits<double>::infinity();
        }
        logw(i) = lw;
        best = std::max(best, lw);
    }
    if (!std::isfinite(best)) {
        // All grid mass sat on excluded endpoints; fall back to flat and flag it.
        out = Posterior::uniform(static_cast<std::size_t>(g));
        out.grid = post.grid;
        out.degenerate_fallback = true;
        return out;
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < g; ++i) {
        out.weights(i) = std::isfinite(logw(i)) ? std::exp(logw(i) - best) : 0.0;
        total += out.weights(i);
    }
    out.weights /= total;
    return out;
}

struct PosteriorSummary {
    double map_point = 0.0;
    std::size_t map_index = 0;
    double interval_lo = 0.0;
    double interval_hi = 0.0;
    double interval_mass = 0.0;
};

/// MAP point (leftmost on ties) and the shortest contiguous grid window with
/// cumulative weight >= level (leftmost on ties).
inline PosteriorSummary posterior_summary(const Posterior& post, double level) {
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("credible level must be in (0, 1)");
    const auto g = post.grid.size();
    PosteriorSummary s;
    for (Eigen::Index i = 0; i < g; ++i)
        if (post.weights(i) > post.weights(static_cast<Eigen::Index>(s.map_index)))
            s.map_index = static_cast<std::size_t>(i);
    s.map_point = post.grid(static_cast<Eigen::Index>(s.map_index));
    Eigen::VectorXd cum(g + 1);
    cum(0) = 0.0;
    for (Eigen::Index i = 0; i < g; ++i) cum(i + 1) = cum(i) + post.weights(i);
    std::size_t best_lo = 0, best_hi = static_cast<std::size_t>(g) - 1;
    std::size_t best_len = static_cast<std::size_t>(g) + 1;
    for (Eigen::Index lo = 0; lo < g; ++lo)
        for (Eigen::Index hi = lo; hi < g; ++hi) {
            if (cum(hi + 1) - cum(lo) + 1e-15 < level) continue;
            const auto len = static_cast<std::size_t>(hi - lo + 1);
            if (len < best_len) {
                best_len = len;
                best_lo = static_cast<std::size_t>(lo);
                best_hi = static_cast<std::size_t>(hi);
            }
            break; // longer windows from this lo are never shorter
        }
    s.interval_lo = post.grid(static_cast<Eigen::Index>(best_lo));
    s.interval_hi = post.grid(static_cast<Eigen::Index>(best_hi));
    s.interval_mass = cum(static_cast<Eigen::Index>(best_hi) + 1) -
                      cum(static_cast<Eigen::Index>(best_lo));
    return s;
}

} // namespace decohist
