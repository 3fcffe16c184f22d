#pragma once

// Stochastic model of the ensemble Ramsey apparatus. Each sample draws the
// number of probes found in the up state for an n-fold rotation at a hidden
// phase, with Gaussian dephasing folded into the fringe contrast.

#include <seqphase/phase.hpp>
#include <seqphase/rng.hpp>

#include <cstdint>

namespace seqphase {

struct EnsembleSpec {
    Count n_probes = 1000;       // N, primary ensemble
    Count n_probes_comp = 1000;  // N', complementary ensemble
    double epsilon = 1.0;        // coherence factor per unit exposure, in (0, 1]
    std::uint64_t seed = 0;

    void validate() const;
};

/// Hidden parameter, always held in (-pi, pi].
class TruePhase {
public:
    explicit TruePhase(double phi) : phi_(wrap_phase(phi)) {}
    double value() const { return phi_; }

private:
    double phi_;
};

enum class Basis { primary_x, complementary_y };

struct MeasurementRecord {
    Count n_plus = 0;
    Count n_minus = 0;
    double s_z = 0.0;
    Count n_fold = 1;
    Basis basis = Basis::primary_x;

    Count total() const { return n_plus + n_minus; }
};

enum class DephasingMode {
    analytic,   // contrast eps^n folded into the binomial success probability
    per_probe,  // each probe draws its own Gaussian phase kick (cross-check path, O(N))
};

/// Fringe contrast eps^n after an n-fold exposure.
double contrast(double epsilon, Count n);

/// Width of each angle peak after an n-fold rotation: 1 / (sqrt(N) n eps^n).
double effective_sigma(Count n_probes, Count n, double epsilon);

/// Rotation count -1 / ln(eps) minimizing effective_sigma over real n; infinity when eps == 1.
double coherence_rotation_limit(double epsilon);

/// One simulated apparatus. Owns its RNG stream; not safe for concurrent use.
class Apparatus {
public:
    Apparatus(const EnsembleSpec& spec, std::uint64_t stream = 0,
              DephasingMode mode = DephasingMode::analytic);

    /// Prepared along sigma_x: N_+ ~ Binomial(N, (1 + eps^n cos(n phi)) / 2).
    MeasurementRecord sample_primary(const TruePhase& truth, Count n);

    /// Prepared along sigma_y: N_+ ~ Binomial(N', (1 + eps^n sin(n phi)) / 2).
    MeasurementRecord sample_complementary(const TruePhase& truth, Count n);

    const EnsembleSpec& spec() const { return spec_; }

private:
    MeasurementRecord sample(Count probes, double phase, Count n, Basis basis);

    EnsembleSpec spec_;
    DephasingMode mode_;
    Rng rng_;
};

} // namespace seqphase
