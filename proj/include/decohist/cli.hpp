#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "decohist/hourglass.hpp"
#include "decohist/scenarios.hpp"

namespace decohist::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Fully validated run description. `kind` is either a scenario name from the
/// catalog or "history-set" for a raw declared set.
struct RunConfig {
    int schema_version = kSchemaVersion;
    std::string kind;
    json parameters;             // scenario parameters or the raw set body
    std::uint64_t seed = 0;
    double epsilon = 1e-8;
    std::string report_name = "report.json";
    bool write_csv = true;
    json echo;                   // original document, for the report
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

inline Complex parse_complex(const json& v, const std::string& where) {
    if (v.is_number()) return {v.get<double>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
        return {v[0].get<double>(), v[1].get<double>()};
    throw ConfigError(where + " must be a number or an [re, im] pair");
}

/// Accepts either explicit alpha/beta or alpha_sq (zero-phase convention).
inline std::pair<Complex, Complex> parse_amplitudes(const json& params) {
    const bool has_pair = params.contains("alpha") || params.contains("beta");
    const bool has_sq = params.contains("alpha_sq");
    if (has_pair && has_sq)
        throw ConfigError("give either alpha/beta or alpha_sq, not both");
    Complex alpha, beta;
    if (has_sq) {
        const double a2 = params.at("alpha_sq").get<double>();
        if (a2 < 0.0 || a2 > 1.0) throw ConfigError("alpha_sq must lie in [0, 1]");
        alpha = std::sqrt(a2);
        beta = std::sqrt(1.0 - a2);
    } else if (has_pair) {
        if (!params.contains("alpha") || !params.contains("beta"))
            throw ConfigError("alpha and beta must both be given");
        alpha = parse_complex(params.at("alpha"), "alpha");
        beta = parse_complex(params.at("beta"), "beta");
    } else {
        throw ConfigError("missing amplitudes: give alpha/beta or alpha_sq");
    }
    const double s = std::norm(alpha) + std::norm(beta);
    if (std::abs(s - 1.0) > 1e-9)
        throw ConfigError("alpha, beta: |alpha|^2 + |beta|^2 = " + std::to_string(s) +
                          ", expected 1 within 1e-9");
    return {alpha, beta};
}

inline Matrix parse_matrix(const json& rows, std::size_t dim, const std::string& where) {
    if (!rows.is_array() || rows.size() != dim)
        throw ConfigError(where + ": expected " + std::to_string(dim) + " rows");
    Matrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
        if (!rows[i].is_array() || rows[i].size() != dim)
            throw ConfigError(where + ": row " + std::to_string(i) + " has wrong length");
        for (std::size_t j = 0; j < dim; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                parse_complex(rows[i][j], where + "[" + std::to_string(i) + "][" +
                                              std::to_string(j) + "]");
    }
    return m;
}

} // namespace detail

/// Builds a HistorySet from its declared-JSON form. Family members are
/// validated as projector decompositions during construction, so a malformed
/// declaration fails here with the measured deviation in the message.
inline HistorySet history_set_from_json(const json& body) {
    detail::reject_unknown_keys(
        body, {"layout", "psi0", "hamiltonian", "unitaries", "times", "families", "family_labels"},
        "history_set");
    for (const char* key : {"layout", "psi0", "times", "families"})
        if (!body.contains(key)) throw ConfigError(std::string("history_set missing '") + key + "'");

    std::vector<Factor> factors;
    for (const auto& f : body.at("layout")) {
        if (!f.is_array() || f.size() != 2 || !f[0].is_string())
            throw ConfigError("layout entries must be [label, dimension] pairs");
        factors.push_back({f[0].get<std::string>(), f[1].get<std::size_t>()});
    }
    SpaceLayout layout(std::move(factors));
    const std::size_t dim = layout.total_dim();

    const auto& amp_json = body.at("psi0");
    if (!amp_json.is_array() || amp_json.size() != dim)
        throw ConfigError("psi0 must have " + std::to_string(dim) + " amplitudes");
    Vector amplitudes(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i)
        amplitudes(static_cast<Eigen::Index>(i)) =
            detail::parse_complex(amp_json[i], "psi0[" + std::to_string(i) + "]");
    StateVector psi0(layout, std::move(amplitudes));
    if (std::abs(psi0.norm() - 1.0) > 1e-9)
        throw ConfigError("psi0 must be normalized (norm " + std::to_string(psi0.norm()) + ")");

    std::vector<double> times = body.at("times").get<std::vector<double>>();

    Dynamics dynamics = identity_operator(layout); // placeholder, replaced below
    if (body.contains("hamiltonian") && body.contains("unitaries"))
        throw ConfigError("give either a hamiltonian or interval unitaries, not both");
    if (body.contains("hamiltonian")) {
        dynamics = OperatorMatrix(layout, detail::parse_matrix(body.at("hamiltonian"), dim,
                                                               "hamiltonian"));
    } else if (body.contains("unitaries")) {
        std::vector<OperatorMatrix> us;
        for (std::size_t i = 0; i < body.at("unitaries").size(); ++i)
            us.emplace_back(layout, detail::parse_matrix(body.at("unitaries")[i], dim,
                                                         "unitaries[" + std::to_string(i) + "]"));
        dynamics = std::move(us);
    } else {
        // No dynamics declared: free evolution is trivial.
        dynamics = std::vector<OperatorMatrix>(times.size(), identity_operator(layout));
    }

    std::vector<ProjectorFamily> families;
    const auto& fams = body.at("families");
    for (std::size_t i = 0; i < fams.size(); ++i) {
        std::vector<OperatorMatrix> projs;
        for (std::size_t k = 0; k < fams[i].size(); ++k)
            projs.emplace_back(layout,
                               detail::parse_matrix(fams[i][k], dim,
                                                    "families[" + std::to_string(i) + "][" +
                                                        std::to_string(k) + "]"),
                               OperatorKind::projector);
        std::vector<std::string> labels;
        if (body.contains("family_labels"))
            labels = body.at("family_labels").at(i).get<std::vector<std::string>>();
        families.emplace_back(layout, std::move(projs), std::move(labels));
    }
    return {std::move(psi0), std::move(dynamics), std::move(times), std::move(families)};
}

inline const std::set<std::string>& scenario_names() {
    static const std::set<std::string> names{"canonical-observer",
                                             "gambling",
                                             "hourglass",
                                             "preparation-discrimination",
                                             "state-estimation",
                                             "theory-discrimination"};
    return names;
}

/// Stable alphabetized catalog of scenarios with their parameter schemas.
inline json list_scenarios() {
    json catalog = json::array();
    catalog.push_back({{"name", "canonical-observer"},
                       {"section", "§10"},
                       {"summary", "recorder-register extension of a consistent set; "
                                   "probabilities must be unchanged"},
                       {"parameters", {"history_set (declared set)", "epsilon"}}});
    catalog.push_back({{"name", "gambling"},
                       {"section", "§6"},
                       {"summary", "betting robot on one two-outcome measurement"},
                       {"parameters", {"alpha/beta or alpha_sq", "odds", "samples"}}});
    catalog.push_back({{"name", "hourglass"},
                       {"section", "§11"},
                       {"summary", "classical coarse-graining stability: majority bit f(t) "
                                   "vs parity bit g(t)"},
                       {"parameters", {"grains", "horizon", "distribution", "jitter", "trials"}}});
    catalog.push_back({{"name", "preparation-discrimination"},
                       {"section", "§8"},
                       {"summary", "pure product preparation vs classical mixture under two "
                                   "measurement strategies"},
                       {"parameters", {"alpha/beta or alpha_sq", "copies", "samples"}}});
    catalog.push_back({{"name", "state-estimation"},
                       {"section", "§7"},
                       {"summary", "N-copy quantum coin tossing with a Bayesian grid posterior"},
                       {"parameters", {"alpha/beta or alpha_sq", "copies", "mode", "grid"}}});
    catalog.push_back({{"name", "theory-discrimination"},
                       {"section", "§9"},
                       {"summary", "x-z-x triples distinguishing quantum from hidden-value "
                                   "classical spins"},
                       {"parameters", {"triples", "truth"}}});
    return catalog;
}

inline RunConfig parse_config_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    detail::reject_unknown_keys(doc,
                                {"schema_version", "scenario", "history_set", "request",
                                 "parameters", "seed", "epsilon", "outputs"},
                                "config root");
    RunConfig config;
    config.echo = doc;
    if (!doc.contains("schema_version") || doc.at("schema_version").get<int>() != kSchemaVersion)
        throw ConfigError("config must declare schema_version " + std::to_string(kSchemaVersion));
    const bool has_scenario = doc.contains("scenario");
    const bool has_set = doc.contains("history_set");
    if (has_scenario == has_set)
        throw ConfigError("config must select exactly one of 'scenario' or 'history_set'");

    if (doc.contains("seed")) config.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("epsilon")) {
        config.epsilon = doc.at("epsilon").get<double>();
        if (config.epsilon <= 0.0) throw ConfigError("epsilon must be positive");
    }
    if (doc.contains("outputs")) {
        const auto& outs = doc.at("outputs");
        detail::reject_unknown_keys(outs, {"report", "csv"}, "outputs");
        if (outs.contains("report")) config.report_name = outs.at("report").get<std::string>();
        if (outs.contains("csv")) config.write_csv = outs.at("csv").get<bool>();
    }

    if (has_scenario) {
        config.kind = doc.at("scenario").get<std::string>();
        if (!scenario_names().contains(config.kind))
            throw ConfigError("unknown scenario '" + config.kind + "'");
        config.parameters = doc.value("parameters", json::object());
        // Validate parameter keys per scenario; values are validated at run time.
        static const std::map<std::string, std::set<std::string>> allowed{
            {"canonical-observer", {"history_set"}},
            {"gambling", {"alpha", "beta", "alpha_sq", "odds", "samples"}},
            {"hourglass", {"grains", "horizon", "distribution", "jitter", "trials", "grid_points"}},
            {"preparation-discrimination", {"alpha", "beta", "alpha_sq", "copies", "samples"}},
            {"state-estimation", {"alpha", "beta", "alpha_sq", "copies", "mode", "grid"}},
            {"theory-discrimination", {"triples", "truth"}}};
        detail::reject_unknown_keys(config.parameters, allowed.at(config.kind),
                                    "parameters for " + config.kind);
        if (config.parameters.contains("alpha") || config.parameters.contains("alpha_sq") ||
            config.parameters.contains("beta"))
            detail::parse_amplitudes(config.parameters); // normalization check up front
    } else {
        config.kind = "history-set";
        config.parameters = json{{"history_set", doc.at("history_set")},
                                 {"request", doc.value("request", json{{"probabilities", true}})}};
        detail::reject_unknown_keys(config.parameters.at("request"), {"probabilities", "samples"},
                                    "request");
        // Construct once now so declaration errors surface at parse time.
        history_set_from_json(doc.at("history_set"));
    }
    return config;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config_json(doc);
}

// ---- report serialization ----

inline json to_json(const ConsistencyReport& r) {
    return {{"epsilon", r.epsilon},
            {"max_normalized_offdiag", r.max_normalized_offdiag},
            {"worst_pair", {r.worst_pair.first, r.worst_pair.second}},
            {"consistent", r.consistent}};
}

inline json to_json(const ProbabilityTable& t) {
    json out = json::array();
    for (std::size_t i = 0; i < t.labels.size(); ++i)
        out.push_back({{"label", t.labels[i]}, {"p", t.values[i]}});
    return out;
}

inline json to_json(const ScenarioResult& r) {
    json out{{"scenario", r.name},
             {"parameters", r.parameters},
             {"exact_probabilities", to_json(r.exact)},
             {"derived", r.derived},
             {"seed", r.seed}};
    if (r.sampled) out["sampled_frequencies"] = to_json(*r.sampled);
    json reports = json::array();
    for (const auto& c : r.consistency) reports.push_back(to_json(c));
    out["consistency"] = reports;
    return out;
}

/// Every serialized number must be finite; NaN/Inf anywhere is a hard error.
inline void require_finite(const json& node, const std::string& path) {
    if (node.is_number_float()) {
        if (!std::isfinite(node.get<double>()))
            throw ValidationError("non-finite number in report at " + path);
    } else if (node.is_object()) {
        for (const auto& [key, value] : node.items()) require_finite(value, path + "/" + key);
    } else if (node.is_array()) {
        for (std::size_t i = 0; i < node.size(); ++i)
            require_finite(node[i], path + "/" + std::to_string(i));
    }
}

struct ExecutionOutput {
    json report;
    std::vector<std::filesystem::path> files;
};

namespace detail {

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline void write_table_csv(const std::filesystem::path& path, const ProbabilityTable& exact,
                            const ProbabilityTable* sampled) {
    std::ofstream out(path);
    out << "label,probability" << (sampled ? ",sampled_frequency" : "") << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < exact.labels.size(); ++i) {
        out << exact.labels[i] << "," << exact.values[i];
        if (sampled) out << "," << sampled->values[i];
        out << "\n";
    }
}

inline void write_trajectory_csv(const std::filesystem::path& path, const HourglassRun& run) {
    std::ofstream out(path);
    out << "t,f,g\n";
    out.precision(17);
    for (std::size_t i = 0; i < run.sample_grid.size(); ++i)
        out << run.sample_grid[i] << "," << int(run.f_trajectory[i]) << ","
            << int(run.g_trajectory[i]) << "\n";
}

} // namespace detail

/// Runs the configured computation and writes the report (and CSVs) under
/// out_dir. Throws InconsistentSetError when probabilities were requested for
/// an inconsistent set; the CLI maps that to exit code 2.
inline ExecutionOutput execute(const RunConfig& config, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    ExecutionOutput out;
    json body;
    std::optional<ScenarioResult> scenario;
    std::optional<HourglassRun> hourglass_run;

    const json& p = config.parameters;
    if (config.kind == "gambling") {
        const auto [alpha, beta] = detail::parse_amplitudes(p);
        scenario = run_gambling(alpha, beta, p.at("odds").get<double>(), config.seed,
                                p.value("samples", std::size_t{10000}));
    } else if (config.kind == "state-estimation") {
        const auto [alpha, beta] = detail::parse_amplitudes(p);
        const std::string mode = p.value("mode", "full-quantum");
        if (mode != "full-quantum" && mode != "classical-shortcut")
            throw ConfigError("mode must be 'full-quantum' or 'classical-shortcut'");
        scenario = run_state_estimation(alpha, beta, p.at("copies").get<std::size_t>(), config.seed,
                                        mode == "full-quantum" ? EstimationMode::full_quantum
                                                               : EstimationMode::classical_shortcut,
                                        p.value("grid", std::size_t{101}));
    } else if (config.kind == "preparation-discrimination") {
        const auto [alpha, beta] = detail::parse_amplitudes(p);
        scenario = run_preparation_discrimination(alpha, beta, p.at("copies").get<std::size_t>(),
                                                  config.seed,
                                                  p.value("samples", std::size_t{10000}));
    } else if (config.kind == "theory-discrimination") {
        scenario = run_theory_discrimination(p.at("triples").get<std::size_t>(),
                                             p.at("truth").get<std::string>(), config.seed);
    } else if (config.kind == "canonical-observer") {
        scenario = run_canonical_observer(history_set_from_json(p.at("history_set")),
                                          config.epsilon);
        scenario->seed = config.seed;
    } else if (config.kind == "hourglass") {
        const auto grains = p.at("grains").get<std::size_t>();
        const double horizon = p.value("horizon", 1.0);
        const auto dist = drop_distribution_from_name(p.value("distribution", "uniform"));
        const double jitter = p.value("jitter", 0.01 * horizon);
        const auto trials = p.value("trials", std::size_t{100});
        const auto grid_points = p.value("grid_points", std::size_t{1000});
        hourglass_run = simulate_hourglass(grains, horizon, dist, config.seed, grid_points);
        const auto stability = stability_metrics(*hourglass_run, jitter, trials, config.seed + 1);
        body = {{"scenario", "hourglass"},
                {"parameters",
                 {{"grains", grains},
                  {"horizon", horizon},
                  {"jitter", jitter},
                  {"trials", trials},
                  {"grid_points", grid_points}}},
                {"seed", config.seed},
                {"f_switches", stability.f_switches},
                {"g_switches", stability.g_switches},
                {"f_disagreement", stability.f_disagreement},
                {"g_disagreement", stability.g_disagreement},
                {"grid_undersampled", hourglass_run->grid_undersampled}};
    } else if (config.kind == "history-set") {
        const HistorySet set = history_set_from_json(p.at("history_set"));
        const DecoherenceMatrix d = decoherence_functional(set);
        const ConsistencyReport report = check_consistency(d, config.epsilon);
        body = {{"scenario", "history-set"},
                {"seed", config.seed},
                {"history_count", set.history_count()},
                {"diagonal_sum", d.diagonal_sum()},
                {"consistency", to_json(report)}};
        json diag = json::array();
        for (Eigen::Index i = 0; i < d.entries.rows(); ++i)
            diag.push_back(d.entries(i, i).real());
        body["diagonal"] = diag;
        if (p.at("request").value("probabilities", true)) {
            // Throws InconsistentSetError (CLI exit 2) when the set fails.
            const auto probs = branch_probabilities(d, report);
            body["probabilities"] = probs;
        }
    } else {
        throw ConfigError("unknown run kind '" + config.kind + "'");
    }

    if (scenario) body = to_json(*scenario);
    json report{{"schema_version", kSchemaVersion},
                {"generated_at", detail::timestamp_utc()},
                {"config", config.echo},
                {"result", body}};
    require_finite(report["result"], "result");

    const auto report_path = out_dir / config.report_name;
    {
        std::ofstream f(report_path);
        f << report.dump(2) << "\n";
    }
    out.files.push_back(report_path);
    if (config.write_csv) {
        if (scenario && !scenario->exact.labels.empty()) {
            const auto csv = out_dir / (scenario->name + "_probabilities.csv");
            const ProbabilityTable* sampled =
                (scenario->sampled && scenario->sampled->labels == scenario->exact.labels)
                    ? &*scenario->sampled
                    : nullptr;
            detail::write_table_csv(csv, scenario->exact, sampled);
            out.files.push_back(csv);
        }
        if (hourglass_run) {
            const auto csv = out_dir / "hourglass_trajectories.csv";
            detail::write_trajectory_csv(csv, *hourglass_run);
            out.files.push_back(csv);
        }
    }
    out.report = std::move(report);
    return out;
}

} // namespace decohist::cli
