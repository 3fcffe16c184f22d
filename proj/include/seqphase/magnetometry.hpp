#pragma once

// Magnetic-field measurement on top of the phase protocol. CGS-Gaussian units:
// fields in gauss, moments in erg/G, times in seconds.

#include <seqphase/protocol.hpp>

#include <cstdint>
#include <stdexcept>

namespace seqphase {

namespace constants {
inline constexpr double kHbar = 1.0546e-27;          // erg s
inline constexpr double kBohrMagneton = 9.274e-21;   // erg / G
} // namespace constants

struct FieldScenario {
    double b_minus = 0.0;
    double b_plus = 0.5;
    double mu = constants::kBohrMagneton;
    double tau1 = 1e-6;
    double tau_c = 1.0;
    Count n_probes = 1000;
    Count n_probes_comp = 0;  // 0: same as n_probes

    void validate() const;

    /// Phase accumulated per gauss in one primary interrogation: mu tau1 / hbar.
    double phase_per_gauss() const;

    /// Per-exposure coherence factor exp(-tau1 / tau_c).
    double epsilon() const;
};

class InfeasibleScenario : public std::runtime_error {
public:
    InfeasibleScenario(const std::string& what, double required_tau1)
        : std::runtime_error(what), required_tau1_(required_tau1)
    {
    }
    double required_tau1() const { return required_tau1_; }

private:
    double required_tau1_;
};

struct FieldPlan {
    ProtocolParams params;
    double offset_b0 = 0.0;  // matched offset, mu B0 tau1 / hbar = 2 pi M
    std::int64_t offset_index = 0;  // M
    Count n_cap = 1;         // floor(tau_c / tau1)
    int estimated_steps = 1; // 1 + ln(tau_c / tau1) / ln(sqrt N), rounded up
};

/// Offset, rotation cap and step count for a scenario. `requested_steps` bounds K.
/// Throws InfeasibleScenario when [b_minus, b_plus] spans more than 2 pi of phase.
FieldPlan plan_scenario(const FieldScenario& sc, const Tolerance& tol, int requested_steps = 5);

/// wrap(n mu (b - b0) tau1 / hbar) into (-pi, pi].
double field_to_phase(double b, const FieldScenario& sc, double offset_b0, Count n = 1);

/// Inverse of field_to_phase at n = 1 without unwrapping: b0 + phi hbar / (mu tau1).
double phase_to_field(double phi, const FieldScenario& sc, double offset_b0);

/// Field consistent with a wrapped phase, picking the 2 pi branch that lands in (or nearest) the prior bounds.
double unwrap_field(double phi, const FieldScenario& sc, double offset_b0);

/// hbar / (mu tau1 sqrt N): shot-noise precision of the primary measurement.
double primary_field_precision(const FieldScenario& sc);

/// hbar / (mu tau_c sqrt N): precision of a full-coherence interrogation.
double coherence_field_precision(const FieldScenario& sc);

struct FieldEstimate {
    double b_hat = 0.0;
    double delta_b = 0.0;          // final phase width in field units
    double delta_b_primary = 0.0;  // step-1 width in field units
    int steps_used = 0;
    double offset_b0 = 0.0;
    bool aborted = false;
    ProtocolTrace trace;
};

FieldEstimate run_field_measurement(const FieldScenario& sc, double hidden_b, const Tolerance& tol,
                                    int requested_steps = 5, std::uint64_t seed = 0,
                                    std::uint64_t stream = 0);

} // namespace seqphase
