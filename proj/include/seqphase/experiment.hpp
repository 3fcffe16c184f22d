#pragma once

// Monte Carlo experiment runner behind the command-line tool. Each mode runs
// independent trials on disjoint RNG substreams derived from the experiment
// seed, so results do not depend on the thread count.

#include <seqphase/magnetometry.hpp>
#include <seqphase/protocol.hpp>

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqphase {

inline constexpr const char* kVersion = "0.1.0";

enum class Mode { single_run, coverage, scaling, misclassification, dephasing, magnetometry, entropy_check };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

/// Invalid configuration; the message names the offending line and/or field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    Mode mode = Mode::coverage;
    Count trials = 1000;
    EnsembleSpec spec;
    ProtocolParams params;
    std::optional<FieldScenario> scenario;
    std::string output_path;  // "<out>.csv" and "<out>.summary.json"; empty writes nothing
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<double> phis;       // fixed true phases; empty draws them at random
    std::vector<Count> atoms_list;  // scaling: ensemble sizes to sweep
    std::vector<Count> n_list;      // entropy_check / dephasing: rotation counts
    double exclude_margin = 0.15;   // random phases avoid |phi| < m and |pi - |phi|| < m
    int max_restarts = 20;          // reruns of a trial after an estimation error
    std::optional<double> field;    // magnetometry: fixed hidden field

    void validate() const;
};

/// Apply one `key = value` setting. Keys accept '-' or '_' (e.g. beta-tilde, beta_tilde).
/// `where` prefixes diagnostics, e.g. "run.cfg:12".
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                   const std::string& where = "");

/// Key-value config file: one `key = value` per line, '#' starts a comment.
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

/// Scenario file with keys b_minus, b_plus, mu, tau1, tau_c, atoms, atoms_comp.
FieldScenario load_scenario(const std::string& path);

struct Fraction {
    double value = 0.0;
    double std_error = 0.0;
};

Fraction make_fraction(Count hits, Count total);

/// One CSV row per protocol run.
struct RunRecord {
    Count trial_id = 0;
    double true_phi = 0.0;
    int steps = 0;
    double phi_hat = 0.0;
    double sigma = 0.0;
    double abs_error = 0.0;  // wrapped
    std::vector<Count> rotations;
    Count resources = 0;
    FlagSet flags;
    double beta_prime_max = 0.0;
    bool aborted = false;
    int restarts = 0;
};

RunRecord summarize_run(Count trial_id, const TruePhase& truth, const ProtocolTrace& trace, int restarts = 0);

struct RunAggregate {
    Count trials = 0;
    Count covered = 0;    // |phi - phi_hat| <= g sigma
    Count missed = 0;     // completed but outside the interval
    Count restarted = 0;  // still ending in an estimation error
    Fraction coverage;
    Fraction miss;
    Fraction restart;
    double target_confidence = 0.0;  // (1 - beta)(1 - beta~)^(K-1)
    Count restarts_total = 0;
    double restart_rate = 0.0;       // reruns per trial
    Fraction ambiguity;
    Fraction estimation_error;       // per attempt, including rerun attempts
    Fraction degenerate;
    Fraction high_risk;
    double mean_sigma = 0.0;
    double median_abs_error = 0.0;
    double rms_abs_error = 0.0;
    double mean_resources = 0.0;
    double beta_prime_max = 0.0;
};

RunAggregate aggregate_records(const std::vector<RunRecord>& records, const Tolerance& tol, int steps);

/// Aggregate raw traces against their hidden phases.
RunAggregate aggregate(const std::vector<ProtocolTrace>& traces, const std::vector<TruePhase>& truth,
                       const Tolerance& tol, int steps);

nlohmann::json to_json(const RunAggregate& agg);
nlohmann::json to_json(const ExperimentConfig& cfg);

struct ExperimentSummary {
    Mode mode = Mode::coverage;
    std::string version = kVersion;
    double wall_seconds = 0.0;
    nlohmann::json config;
    std::optional<RunAggregate> runs;  // protocol-running modes
    nlohmann::json results;            // mode-specific tables and checks

    nlohmann::json to_json() const;
};

struct ExperimentOutput {
    ExperimentSummary summary;
    std::string csv;
};

/// Execute the configured experiment and, when output_path is set, write both files.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// CSV header and row encoding used for per-run output.
std::string csv_header();
std::string csv_row(const RunRecord& rec);

} // namespace seqphase
