#pragma once

// Deterministic statistics for the ensemble phase-estimation protocol:
// error function and its inverse, the count posterior and its Gaussian
// surrogate, n-fold angle mixtures, the optimal-rotation factor nu and the
// Shannon entropy of angle mixtures.

#include <seqphase/phase.hpp>

#include <vector>

namespace seqphase {

/// Estimation tolerance beta and classification tolerance beta~, both in (0, 1).
class Tolerance {
public:
    Tolerance(double beta, double beta_tilde);

    double beta() const { return beta_; }
    double beta_tilde() const { return beta_tilde_; }

    /// g(beta): half-width multiplier with 1 - beta = erf(g / sqrt 2).
    double g() const { return g_; }

private:
    double beta_;
    double beta_tilde_;
    double g_;
};

struct GaussianPeak {
    double center = 0.0;
    double sigma = 1.0;
    double weight = 1.0;
};

/// Candidate positions of the phase after an n-fold rotation.
struct AlternativeSet {
    Count n = 1;
    double sigma = 0.0;  // common peak width
    std::vector<GaussianPeak> peaks;
};

/// Posterior of p = cos(phi) after observing (n_plus, n_minus) outcomes.
struct PosteriorP {
    Count n_plus = 0;
    Count n_minus = 0;
    double s_z = 0.0;
    double sigma = 0.0;
    bool degenerate = false;  // one of the counts is zero; sigma collapses
    bool unreliable = false;  // min count below the Gaussian-validity threshold

    Count total() const { return n_plus + n_minus; }

    /// Exact Beta-type density on p in [-1, 1].
    double density(double p) const;

    /// Normal surrogate N(s_z, sigma^2).
    double surrogate_density(double p) const;
};

inline constexpr Count kGaussianValidityMinCount = 5;

double erf(double x);
double erfc(double x);

/// Solve 1 - beta = erf(g / sqrt 2) for g. Throws DomainError unless 0 < beta < 1.
double g_of_beta(double beta);

/// Standard normal density and CDF, used by the estimator and oracles.
double normal_pdf(double z);
double normal_cdf(double z);

PosteriorP posterior_p(Count n_plus, Count n_minus);

/// n equal-weight peaks at phi_n / n + 2 pi k / n, wrapped to (-pi, pi].
AlternativeSet alternatives_from_phase(double phi_n, Count n, double sigma);

/// Mixture from a measured n-fold polarization: phi_n = |arccos(s_zn)|,
/// width 1 / (n sqrt N).
AlternativeSet angle_mixture_from_szn(double s_zn, Count n, Count n_probes);

/// nu(beta, beta~). Throws DomainError when beta~ >= 1/2.
double nu_factor(const Tolerance& tol);

/// Small-tolerance asymptotic form of nu.
double nu_factor_asymptotic(const Tolerance& tol);

/// Wrapped-normal mixture density on the circle.
double mixture_density(const AlternativeSet& mix, double phi);

struct EntropyResult {
    double value = 0.0;
    bool overlapping = false;  // peaks closer than 6 sigma: invariance no longer exact
};

/// H = -int P ln P over (-pi, pi], adaptive Simpson with absolute tolerance 1e-8.
EntropyResult shannon_entropy(const AlternativeSet& mix);

/// Closed-form entropy of a single normal of width sigma.
double gaussian_entropy(double sigma);

} // namespace seqphase
