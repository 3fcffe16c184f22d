#pragma once

// K-step sequential engine. Step 1 is a plain Ramsey measurement plus a
// complementary sign test; every later step uses n_i = floor(nu / sigma_{i-1})
// rotations, builds the n_i candidate peaks, keeps the one compatible with the
// running estimate and fuses it in.

#include <seqphase/estimator.hpp>
#include <seqphase/simulator.hpp>
#include <seqphase/stats.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace seqphase {

enum class Flag : std::uint32_t {
    estimation_error = 1u << 0,      // no candidate peak in the reduced interval; restart required
    ambiguous = 1u << 1,             // two in-interval peaks with weight ratio above beta~
    degenerate = 1u << 2,            // S_z at +-1, arccos at the branch edge
    high_risk_classifier = 1u << 3,  // predicted sign misclassification above beta~
    no_gain = 1u << 4,               // n_i would be 1 or would not shrink the width
    surrogate_unreliable = 1u << 5,  // min(N+, N-) below the Gaussian-validity threshold
    capped = 1u << 6,                // n_i limited by the coherence cap
};

class FlagSet {
public:
    FlagSet() = default;

    void set(Flag f) { bits_ |= static_cast<std::uint32_t>(f); }
    bool has(Flag f) const { return (bits_ & static_cast<std::uint32_t>(f)) != 0; }
    bool empty() const { return bits_ == 0; }
    std::uint32_t bits() const { return bits_; }

    FlagSet& operator|=(const FlagSet& o)
    {
        bits_ |= o.bits_;
        return *this;
    }

    /// Pipe-joined names in a fixed order, e.g. "ambiguous|capped"; empty when no flag is set.
    std::string to_string() const;

private:
    std::uint32_t bits_ = 0;
};

struct ProtocolParams {
    Tolerance tol{0.01, 0.01};
    int max_steps = 3;
    std::optional<double> target_precision;  // stop once g * sigma <= delta
    std::optional<Count> n_cap;              // coherence cap on rotations per step
    bool count_complementary = false;        // include N' n_i in the resource ledger

    void validate() const;
};

struct NextN {
    Count n = 1;
    bool no_gain = false;
    bool capped = false;
};

/// min(floor(nu / sigma_prev), n_cap), at least 1.
NextN next_n(double sigma_prev, const Tolerance& tol, std::optional<Count> n_cap = std::nullopt);

struct Selection {
    std::optional<std::size_t> k;  // empty on estimation error
    FlagSet flags;
    std::vector<double> weights;   // w_k for every peak
    double half_width = 0.0;       // g (sigma_prev - sigma_n)
    double ambiguity_ratio = 0.0;  // w2 / (w1 + w2) over in-interval peaks
    double misclassification = 0.0;  // w_next / (w_sel + w_next), nearest competitor over all peaks
    std::size_t in_interval = 0;
};

/// Pick the compatible alternative: argmax of
///   w_k = exp[-d_k^2 / 2 (sigma_prev^2 + sigma_n^2)]
/// over peaks whose wrapped distance d_k to the center is at most g (sigma_prev - sigma_n).
Selection select_alternative(double interval_center, double sigma_prev, const AlternativeSet& alts,
                             const Tolerance& tol);

/// True iff no peak lies within g (sigma_prev - sigma_n) of prev.phi_hat (closed interval).
bool detect_estimation_error(const PhaseEstimate& prev, const AlternativeSet& alts, const Tolerance& tol);

/// Probability mass of N(peak_center, sigma_n^2) inside |phi - center| <= g sigma_prev.
/// A peak is compatible with the previous step when this is >= 1 - beta.
double compatibility_probability(double center, double sigma_prev, double peak_center, double sigma_n,
                                 const Tolerance& tol);

struct ResourceLedger {
    std::vector<Count> per_step;
    Count total = 0;
    bool include_complementary = false;
};

struct StepRecord {
    Count n = 1;
    MeasurementRecord record;
    MeasurementRecord comp_record;
    double phi_n = 0.0;        // signed phase of n*phi after sign classification
    double peak_sigma = 0.0;   // width of each candidate peak
    std::optional<std::size_t> selected_k;
    double selected_weight_ratio = 0.0;
    double beta_prime = 0.0;
    PhaseEstimate estimate;
    FlagSet flags;

    /// Candidate peaks of this step, rebuilt on demand (n can reach ~10^6).
    AlternativeSet alternatives() const;
};

struct ProtocolTrace {
    std::vector<StepRecord> steps;
    ResourceLedger resources;
    FlagSet flags;
    bool aborted = false;  // estimation error: the run must be repeated from scratch
    double beta_prime_max = 0.0;

    const PhaseEstimate& final_estimate() const { return steps.back().estimate; }
    std::vector<Count> rotations() const;
};

/// Run up to params.max_steps steps on one apparatus stream. Never retries on its own.
ProtocolTrace run_protocol(const EnsembleSpec& spec, const TruePhase& truth, const ProtocolParams& params,
                           std::uint64_t stream = 0, DephasingMode mode = DephasingMode::analytic);

struct ScalingPrediction {
    int steps = 1;
    double nu = 0.0;
    double sigma1 = 0.0;
    std::vector<double> rotations;  // ideal n_i = (nu / sigma1)^(i-1)
    std::vector<double> resources;  // R_i = N n_i
    double resources_total = 0.0;   // sum R_i
    double resources_last = 0.0;    // R_K, dominant term
    double delta = 0.0;             // g sigma1 (sigma1 / nu)^(K-1)
    double delta_closed_form = 0.0; // g / (nu^((K-1)/(K+1)) R_K^(K/(K+1)))
    double standard_repetitions = 0.0;  // (delta_1 / delta)^2 preparations without the protocol
    double kitaev_steps = 0.0;          // ln(1/delta) / ln 2 single-qubit iterations
};

/// Ideal (no-floor) precision/resource prediction for K = params.max_steps.
ScalingPrediction resource_scaling(const ProtocolParams& params, Count n_probes);

/// K_delta ~ 1 + ln(sigma1 g / delta) / ln(nu sqrt N), rounded up.
int steps_for_precision(double delta, Count n_probes, const Tolerance& tol);

} // namespace seqphase
