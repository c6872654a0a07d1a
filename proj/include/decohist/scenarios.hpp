#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "decohist/histories.hpp"
#include "decohist/robot.hpp"

namespace decohist {

struct ProbabilityTable {
    std::vector<std::string> labels;
    std::vector<double> values;

    double sum() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
};

/// Structured outcome of one scenario run: exact statistics, optional sampled
/// frequencies, derived quantities, whatever consistency checks were in play,
/// and the seed for bit-reproducibility.
struct ScenarioResult {
    std::string name;
    nlohmann::json parameters;
    ProbabilityTable exact;
    std::optional<ProbabilityTable> sampled;
    nlohmann::json derived;
    std::vector<ConsistencyReport> consistency;
    std::uint64_t seed = 0;

    void validate() const {
        for (double v : exact.values)
            if (!(v >= -1e-12 && v <= 1.0 + 1e-12))
                throw ValidationError("scenario probability out of [0,1]: " + std::to_string(v));
        if (!exact.values.empty() && std::abs(exact.sum() - 1.0) > 1e-10)
            throw ValidationError("scenario probability table sums to " +
                                  std::to_string(exact.sum()));
    }
};

namespace detail {

inline void require_normalized_pair(Complex alpha, Complex beta) {
    const double s = std::norm(alpha) + std::norm(beta);
    if (std::abs(s - 1.0) > 1e-10)
        throw ConfigError("|alpha|^2 + |beta|^2 = " + std::to_string(s) + ", expected 1");
}

inline StateVector basis_state(const std::string& label, std::size_t dim, std::size_t which) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
    v(static_cast<Eigen::Index>(which)) = 1.0;
    return {single_factor(label, dim), std::move(v)};
}

inline StateVector qubit(const std::string& label, Complex a0, Complex a1) {
    Vector v(2);
    v << a0, a1;
    return {single_factor(label, 2), std::move(v)};
}

/// Compose a basis permutation after a dense unitary (row reshuffle).
inline OperatorMatrix permute_after(const BasisPermutation& perm, const OperatorMatrix& u) {
    Matrix out(u.entries.rows(), u.entries.cols());
    for (Eigen::Index i = 0; i < u.entries.rows(); ++i)
        out.row(static_cast<Eigen::Index>(perm.map(static_cast<std::size_t>(i)))) = u.entries.row(i);
    return {u.layout, std::move(out), OperatorKind::unitary};
}

inline ProbabilityTable sample_frequencies(const HistorySet& set, const ConsistencyReport& report,
                                           const ProbabilityTable& exact, Rng& rng,
                                           std::size_t draws) {
    HistoryIndexMap map(set.family_sizes());
    std::vector<std::size_t> counts(map.total(), 0);
    for (std::size_t s = 0; s < draws; ++s) {
        const auto tuple = sample_history(set, report, rng);
        ++counts[map.index_of(tuple)];
    }
    ProbabilityTable freq;
    freq.labels = exact.labels;
    for (std::size_t c : counts)
        freq.values.push_back(static_cast<double>(c) / static_cast<double>(draws));
    return freq;
}

} // namespace detail

/// Betting on a single two-outcome measurement: premeasure Q onto the pointer,
/// fold the pointer into the brain, read histories off the brain register.
/// The bet pays `odds` on outcome Q1 and loses 1 on Q2; the rational rule is
/// to accept exactly when odds * |alpha|^2 >= |beta|^2.
inline ScenarioResult run_gambling(Complex alpha, Complex beta, double odds, std::uint64_t seed,
                                   std::size_t sample_draws = 10000) {
    detail::require_normalized_pair(alpha, beta);
    if (odds <= 0.0) throw ConfigError("odds must be positive");

    // XOR automaton: brain ends up equal to the observed pointer value.
    Automaton automaton{2, 2, {{0, 1}, {1, 0}}, 0};
    RobotLayout layout(2, 2, 1, {Factor{"Q", 2}}, /*archive_inputs=*/true, /*archive_states=*/false);
    const StateVector psi0 = tensor_product(
        {detail::basis_state("A", 2, 0), detail::basis_state("B", 2, 0),
         detail::basis_state("a1", 2, 0), detail::qubit("Q", alpha, beta)});

    const OperatorMatrix premeasure =
        measurement_unitary(basis_family(single_factor("Q", 2), "Q", "Q"), layout, "Q");
    const OperatorMatrix step =
        detail::permute_after(compile_automaton_step(automaton, layout, 0), premeasure);

    HistorySet set(psi0, std::vector<OperatorMatrix>{step}, {1.0},
                   {basis_family(layout.space(), "B", "B=")});
    const DecoherenceMatrix d = decoherence_functional(set);
    const ConsistencyReport report = check_consistency(d);
    const auto probs = branch_probabilities(d, report);

    ScenarioResult result;
    result.name = "gambling";
    result.seed = seed;
    result.parameters = {{"alpha", {alpha.real(), alpha.imag()}},
                         {"beta", {beta.real(), beta.imag()}},
                         {"odds", odds}};
    result.exact = {{"Q1", "Q2"}, {probs[0], probs[1]}};
    result.consistency.push_back(report);

    const double p1 = std::norm(alpha);
    const double p2 = std::norm(beta);
    const double winnings = odds * probs[0] - probs[1];
    // Total form of the ratio rule |beta|^2/|alpha|^2 <= odds; identical for
    // alpha != 0 and well-defined at alpha = 0.
    const bool accept = odds * p1 >= p2;
    result.derived = {{"expected_winnings", winnings},
                      {"accept_bet", accept},
                      {"break_even", std::abs(odds * p1 - p2) <= 1e-12}};

    Rng rng(seed);
    result.sampled = detail::sample_frequencies(set, report, result.exact, rng, sample_draws);
    result.validate();
    return result;
}

enum class EstimationMode { full_quantum, classical_shortcut };

/// N identical copies measured one after another; the measurement records
/// drive a grid posterior over |alpha|^2. In full-quantum mode the whole
/// pointer/archive register chain is simulated unitarily and the branch
/// probabilities come from the decoherence functional; the classical shortcut
/// samples the (provably identical) product law directly and scales to large N.
inline ScenarioResult run_state_estimation(Complex alpha, Complex beta, std::size_t copies,
                                           std::uint64_t seed,
                                           EstimationMode mode = EstimationMode::full_quantum,
                                           std::size_t posterior_grid = 101) {
    detail::require_normalized_pair(alpha, beta);
    if (copies < 1) throw ConfigError("state estimation needs at least one copy");
    const double p1 = std::norm(alpha);

    ScenarioResult result;
    result.name = "state-estimation";
    result.seed = seed;
    result.parameters = {{"alpha", {alpha.real(), alpha.imag()}},
                         {"beta", {beta.real(), beta.imag()}},
                         {"copies", copies},
                         {"mode", mode == EstimationMode::full_quantum ? "full-quantum"
                                                                       : "classical-shortcut"}};

    Rng rng(seed);
    std::vector<std::size_t> sequence; // realized outcome per copy (0 = Q1)

    const bool table_feasible = copies <= 12;
    if (mode == EstimationMode::full_quantum) {
        const std::size_t dim = std::size_t{2} << (2 * copies); // A * a_1..a_N * Q_1..Q_N
        if (dim > 4096)
            throw CapacityError("full-quantum state estimation needs total_dim <= 4096; N = " +
                                std::to_string(copies) + " would need " + std::to_string(dim));
        std::vector<Factor> system;
        for (std::size_t j = 0; j < copies; ++j)
            system.push_back({"Q" + std::to_string(j + 1), 2});
        Automaton trivial{1, 2, {{0, 0}}, 0};
        RobotLayout layout(2, 1, copies, system, /*archive_inputs=*/true, /*archive_states=*/false);

        std::vector<StateVector> parts{detail::basis_state("A", 2, 0),
                                       detail::basis_state("B", 1, 0)};
        for (std::size_t j = 0; j < copies; ++j)
            parts.push_back(detail::basis_state("a" + std::to_string(j + 1), 2, 0));
        for (std::size_t j = 0; j < copies; ++j)
            parts.push_back(detail::qubit("Q" + std::to_string(j + 1), alpha, beta));
        const StateVector psi0 = tensor_product(std::span<const StateVector>(parts));

        std::vector<OperatorMatrix> intervals;
        std::vector<double> times;
        std::vector<ProjectorFamily> families;
        for (std::size_t j = 0; j < copies; ++j) {
            const std::string q = "Q" + std::to_string(j + 1);
            OperatorMatrix u = measurement_unitary(basis_family(single_factor(q, 2), q), layout, q);
            intervals.push_back(detail::permute_after(compile_automaton_step(trivial, layout, j),
                                                      std::move(u)));
            times.push_back(static_cast<double>(j + 1));
            families.push_back(basis_family(layout.space(), "a" + std::to_string(j + 1)));
        }
        HistorySet set(psi0, std::move(intervals), std::move(times), std::move(families));
        const DecoherenceMatrix d = decoherence_functional(set);
        const ConsistencyReport report = check_consistency(d);
        const auto probs = branch_probabilities(d, report);
        result.consistency.push_back(report);

        HistoryIndexMap map(set.family_sizes());
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const auto tuple = map.tuple_of(i);
            std::string label;
            for (std::size_t t : tuple) label += (t == 0 ? '1' : '2');
            result.exact.labels.push_back("Q" + label);
            result.exact.values.push_back(probs[i]);
        }
        sequence = sample_history(set, report, rng);
    } else {
        if (table_feasible) {
            HistoryIndexMap map(std::vector<std::size_t>(copies, 2));
            for (std::size_t i = 0; i < map.total(); ++i) {
                const auto tuple = map.tuple_of(i);
                std::string label;
                double p = 1.0;
                for (std::size_t t : tuple) {
                    label += (t == 0 ? '1' : '2');
                    p *= (t == 0 ? p1 : 1.0 - p1);
                }
                result.exact.labels.push_back("Q" + label);
                result.exact.values.push_back(p);
            }
        }
        for (std::size_t j = 0; j < copies; ++j)
            sequence.push_back(rng.uniform() < p1 ? 0 : 1);
    }

    std::size_t n1 = 0;
    for (std::size_t o : sequence)
        if (o == 0) ++n1;
    const Posterior posterior = bayes_update(Posterior::uniform(posterior_grid), n1, copies);
    const PosteriorSummary summary = posterior_summary(posterior, 0.95);

    std::string seq_label;
    for (std::size_t o : sequence) seq_label += (o == 0 ? '1' : '2');
    result.derived = {{"all_q1_probability", std::pow(p1, static_cast<double>(copies))},
                      {"sampled_sequence", "Q" + seq_label},
                      {"outcome1_count", n1},
                      {"posterior_map", summary.map_point},
                      {"credible_interval", {summary.interval_lo, summary.interval_hi}},
                      {"credible_level", 0.95}};
    result.validate();
    return result;
}

/// Pure-product preparation vs a randomly ordered Q1/Q2 mixture with the same
/// Z statistics, probed with the Z basis (indistinguishable) and the rotated
/// basis containing the pure state itself (deterministic for the product
/// preparation, Bernoulli(|alpha|^4 + |beta|^4) for the mixture).
inline ScenarioResult run_preparation_discrimination(Complex alpha, Complex beta, std::size_t copies,
                                                     std::uint64_t seed,
                                                     std::size_t sample_draws = 10000) {
    detail::require_normalized_pair(alpha, beta);
    if (copies < 1) throw ConfigError("preparation discrimination needs at least one copy");
    const double p1 = std::norm(alpha);
    const double m_exact = p1 * static_cast<double>(copies);
    const auto m = static_cast<std::size_t>(std::llround(m_exact));
    if (std::abs(m_exact - static_cast<double>(m)) > 0.5 + 1e-12)
        throw ConfigError("|alpha|^2 N must round to the mixture composition");

    const StateVector pure = detail::qubit("Q", alpha, beta);
    const StateVector q1 = detail::basis_state("Q", 2, 0);
    const StateVector q2 = detail::basis_state("Q", 2, 1);
    const ProjectorFamily z_family = basis_family(single_factor("Q", 2), "Q", "Q");
    // Rotated basis {alpha Q1 + beta Q2, beta* Q1 - alpha* Q2}.
    const StateVector chi2 = detail::qubit("Q", std::conj(beta), -std::conj(alpha));
    const ProjectorFamily rotated_family(single_factor("Q", 2),
                                         {projector_onto(pure), projector_onto(chi2)},
                                         {"chi1", "chi2"});

    const double frac1 = static_cast<double>(m) / static_cast<double>(copies);
    const double exact_pure_rotated = std::norm(pure.amplitudes.dot(pure.amplitudes));
    const double exact_mix_rotated = frac1 * p1 + (1.0 - frac1) * (1.0 - p1);

    // Monte Carlo over repeated passes through the shuffled pool.
    Rng rng(seed);
    std::size_t pure_z1 = 0, mix_z1 = 0, pure_rot1 = 0, mix_rot1 = 0;
    std::size_t draws = 0;
    std::vector<const StateVector*> pool;
    for (std::size_t i = 0; i < copies; ++i) pool.push_back(i < m ? &q1 : &q2);
    while (draws < sample_draws) {
        rng.shuffle(pool);
        for (std::size_t i = 0; i < copies && draws < sample_draws; ++i, ++draws) {
            if (projective_measure(pure, z_family, rng).outcome == 0) ++pure_z1;
            if (projective_measure(*pool[i], z_family, rng).outcome == 0) ++mix_z1;
            if (projective_measure(pure, rotated_family, rng).outcome == 0) ++pure_rot1;
            if (projective_measure(*pool[i], rotated_family, rng).outcome == 0) ++mix_rot1;
        }
    }
    const double n = static_cast<double>(draws);
    const double f_pure_z = pure_z1 / n, f_mix_z = mix_z1 / n;
    const double f_pure_rot = pure_rot1 / n, f_mix_rot = mix_rot1 / n;

    // Two-sample z statistic for the Z-basis strategy.
    const double pooled = (f_pure_z + f_mix_z) / 2.0;
    const double se = std::sqrt(std::max(2.0 * pooled * (1.0 - pooled) / n, 1e-300));
    const double z_stat = std::abs(f_pure_z - f_mix_z) / se;

    ScenarioResult result;
    result.name = "preparation-discrimination";
    result.seed = seed;
    result.parameters = {{"alpha", {alpha.real(), alpha.imag()}},
                         {"beta", {beta.real(), beta.imag()}},
                         {"copies", copies},
                         {"mixture_q1_count", m},
                         {"rounding_delta", m_exact - static_cast<double>(m)}};
    result.exact = {{"pure_rotated_outcome1", "pure_rotated_outcome2"},
                    {exact_pure_rotated, 1.0 - exact_pure_rotated}};
    result.sampled = ProbabilityTable{
        {"pure_z_q1", "mix_z_q1", "pure_rotated_1", "mix_rotated_1"},
        {f_pure_z, f_mix_z, f_pure_rot, f_mix_rot}};
    result.derived = {{"exact_mixture_rotated_outcome1", exact_mix_rotated},
                      {"analytic_mixture_rotated_outcome1",
                       p1 * p1 + (1.0 - p1) * (1.0 - p1)},
                      {"z_strategy_statistic", z_stat},
                      {"z_strategy_distinguishable", z_stat > 3.0},
                      {"rotated_strategy_distinguishable",
                       std::abs(exact_pure_rotated - exact_mix_rotated) > 1e-9}};
    // The sampled table is per-strategy, not a distribution over one index
    // set; skip the sum-to-one check on exact only if empty. exact sums to 1.
    result.validate();
    return result;
}

/// Quantum-vs-classical test on x-z-x measurement triples. Quantum truth:
/// first and last x results agree with probability exactly 1/2. Classical
/// hidden-value truth: fixed per-spin x and z signs read without disturbance,
/// so they always agree. Verdict: "classical" iff every triple agreed.
inline ScenarioResult run_theory_discrimination(std::size_t triples, const std::string& truth,
                                                std::uint64_t seed) {
    if (triples < 1) throw ConfigError("theory discrimination needs at least one triple");
    if (truth != "quantum" && truth != "classical")
        throw ConfigError("truth must be 'quantum' or 'classical'");

    const SpaceLayout q = single_factor("Q", 2);
    const ProjectorFamily z_family = basis_family(q, "Q", "z");
    const double r = 1.0 / std::sqrt(2.0);
    const ProjectorFamily x_family(
        q, {projector_onto(detail::qubit("Q", r, r)), projector_onto(detail::qubit("Q", r, -r))},
        {"x+", "x-"});
    const StateVector psi0 = detail::basis_state("Q", 2, 0);

    // Exact agreement probability by enumerating all eight collapse paths.
    double agree_exact = 0.0;
    for (std::size_t o1 = 0; o1 < 2; ++o1)
        for (std::size_t o2 = 0; o2 < 2; ++o2)
            for (std::size_t o3 = 0; o3 < 2; ++o3) {
                StateVector psi = psi0;
                double p = 1.0;
                for (const auto& [family, outcome] :
                     {std::pair{&x_family, o1}, {&z_family, o2}, {&x_family, o3}}) {
                    const double pk =
                        std::max((psi.amplitudes.dot(family->projector(outcome).entries *
                                                     psi.amplitudes)).real(), 0.0);
                    p *= pk;
                    if (pk <= 0.0) break;
                    Vector v = family->projector(outcome).entries * psi.amplitudes;
                    psi = StateVector(q, v / std::sqrt(pk));
                }
                if (o1 == o3) agree_exact += p;
            }

    Rng rng(seed);
    std::size_t agreed = 0;
    for (std::size_t t = 0; t < triples; ++t) {
        std::size_t first, last;
        if (truth == "quantum") {
            auto m1 = projective_measure(psi0, x_family, rng);
            auto m2 = projective_measure(m1.state, z_family, rng);
            auto m3 = projective_measure(m2.state, x_family, rng);
            first = m1.outcome;
            last = m3.outcome;
        } else {
            const std::size_t sx = rng.uniform() < 0.5 ? 0 : 1;
            (void)(rng.uniform() < 0.5); // hidden z sign, read but irrelevant
            first = sx;
            last = sx;
        }
        if (first == last) ++agreed;
    }
    const bool verdict_classical = (agreed == triples);

    ScenarioResult result;
    result.name = "theory-discrimination";
    result.seed = seed;
    result.parameters = {{"triples", triples}, {"truth", truth}};
    if (truth == "quantum")
        result.exact = {{"agree", "disagree"}, {agree_exact, 1.0 - agree_exact}};
    else
        result.exact = {{"agree", "disagree"}, {1.0, 0.0}};
    result.sampled = ProbabilityTable{
        {"agree", "disagree"},
        {static_cast<double>(agreed) / triples, 1.0 - static_cast<double>(agreed) / triples}};
    const double misclassification =
        truth == "quantum" ? std::pow(0.5, static_cast<double>(triples)) : 0.0;
    result.derived = {{"verdict", verdict_classical ? "classical" : "quantum"},
                      {"verdict_correct", verdict_classical == (truth == "classical")},
                      {"per_triple_agreement_quantum", agree_exact},
                      {"misclassification_probability", misclassification}};
    result.validate();
    return result;
}

/// Adds an imaginary recorder register that shifts by the realized alternative
/// at each projection time, then verifies the history probabilities are
/// untouched and that reading the recorder alone at the final time reproduces
/// the same table.
inline ScenarioResult run_canonical_observer(const HistorySet& set, double epsilon = 1e-8) {
    const DecoherenceMatrix d0 = decoherence_functional(set);
    const ConsistencyReport report0 = check_consistency(d0, epsilon);
    if (!report0.consistent)
        throw InconsistentSetError("canonical observer extension is defined for consistent sets");
    const auto probs0 = branch_probabilities(d0, report0);

    const std::size_t histories = set.history_count();
    if (histories > 64) throw CapacityError("canonical observer: history count above 64");
    const std::size_t base_dim = set.psi0().layout.total_dim();
    if (base_dim * histories > 4096)
        throw CapacityError("canonical observer: extended dimension above 4096");

    const SpaceLayout ext_layout =
        SpaceLayout::concat(set.psi0().layout, single_factor("recorder", histories));
    const auto rd = static_cast<Eigen::Index>(histories);
    const auto bd = static_cast<Eigen::Index>(base_dim);

    // Recorder strides mirror the flat history index (first time most significant).
    const auto sizes = set.family_sizes();
    std::vector<std::size_t> strides(sizes.size(), 1);
    for (std::size_t i = sizes.size(); i-- > 1;) strides[i - 1] = strides[i] * sizes[i];

    Vector rec0 = Vector::Zero(rd);
    rec0(0) = 1.0;
    const StateVector ext_psi0 =
        tensor_product({set.psi0(), StateVector(single_factor("recorder", histories), rec0)});

    std::vector<OperatorMatrix> ext_intervals;
    std::vector<ProjectorFamily> ext_families;
    const Matrix id_r = Matrix::Identity(rd, rd);
    for (std::size_t i = 0; i < set.time_count(); ++i) {
        const Matrix u = detail::kron(set.interval_unitary(i).entries, id_r);
        Matrix controlled = Matrix::Zero(bd * rd, bd * rd);
        std::vector<OperatorMatrix> projs;
        std::vector<std::string> labels;
        for (std::size_t k = 0; k < set.family(i).size(); ++k) {
            Matrix shift = Matrix::Zero(rd, rd);
            for (std::size_t r = 0; r < histories; ++r)
                shift(static_cast<Eigen::Index>((r + k * strides[i]) % histories),
                      static_cast<Eigen::Index>(r)) = 1.0;
            controlled += detail::kron(set.family(i).projector(k).entries, shift);
            projs.emplace_back(ext_layout,
                               detail::kron(set.family(i).projector(k).entries, id_r),
                               OperatorKind::projector);
            labels.push_back(set.family(i).label(k));
        }
        ext_intervals.emplace_back(ext_layout, controlled * u, OperatorKind::unitary);
        ext_families.emplace_back(ext_layout, std::move(projs), std::move(labels));
    }

    HistorySet ext_set(ext_psi0, ext_intervals, set.times(), std::move(ext_families));
    const DecoherenceMatrix d_ext = decoherence_functional(ext_set);
    const ConsistencyReport report_ext = check_consistency(d_ext, epsilon);
    const auto probs_ext = branch_probabilities(d_ext, report_ext);

    double max_shift = 0.0;
    for (std::size_t i = 0; i < probs0.size(); ++i)
        max_shift = std::max(max_shift, std::abs(probs_ext[i] - probs0[i]));

    // Recorder-only description: collapse the dynamics to one interval and
    // project on the recorder basis at the final time.
    Matrix total = Matrix::Identity(bd * rd, bd * rd);
    for (const auto& w : ext_intervals) total = w.entries * total;
    HistorySet recorder_set(ext_psi0,
                            std::vector<OperatorMatrix>{OperatorMatrix(
                                ext_layout, std::move(total), OperatorKind::unitary)},
                            {set.times().back()}, {basis_family(ext_layout, "recorder", "r")});
    const DecoherenceMatrix d_rec = decoherence_functional(recorder_set);
    const ConsistencyReport report_rec = check_consistency(d_rec, epsilon);
    const auto probs_rec = branch_probabilities(d_rec, report_rec);

    double max_recorder_shift = 0.0;
    for (std::size_t i = 0; i < probs0.size(); ++i)
        max_recorder_shift = std::max(max_recorder_shift, std::abs(probs_rec[i] - probs0[i]));

    ScenarioResult result;
    result.name = "canonical-observer";
    result.parameters = {{"history_count", histories},
                         {"times", set.times()},
                         {"epsilon", epsilon}};
    HistoryIndexMap map(sizes);
    for (std::size_t i = 0; i < probs0.size(); ++i) {
        const auto tuple = map.tuple_of(i);
        std::string label;
        for (std::size_t t = 0; t < tuple.size(); ++t)
            label += (t ? "," : "") + set.family(t).label(tuple[t]);
        result.exact.labels.push_back(label);
        result.exact.values.push_back(probs0[i]);
    }
    result.sampled = ProbabilityTable{result.exact.labels, probs_rec};
    result.consistency = {report0, report_ext, report_rec};
    result.derived = {{"max_probability_shift", max_shift},
                      {"max_recorder_shift", max_recorder_shift},
                      {"probabilities_preserved", max_shift <= 1e-10 && max_recorder_shift <= 1e-10}};
    result.validate();
    return result;
}

} // namespace decohist
