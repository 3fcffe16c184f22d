#pragma once

#include <seqphase/simulator.hpp>
#include <seqphase/stats.hpp>

namespace seqphase {

/// |phi_n| recovered from a primary (x-basis) record.
struct MagnitudeEstimate {
    double phi_tilde = 0.0;   // |arccos(S_z / eps^n)|, a phase of n*phi
    double peak_sigma = 0.0;  // width of each angle peak in phi units: 1 / (sqrt(N) n eps^n)
    bool degenerate = false;  // S_z at +-1 (or beyond the damped contrast): arccos at the branch edge
};

struct SignClassification {
    int alpha = +1;           // selected sign of phi_n
    double boundary = 0.0;    // midpoint of the two predicted means
    double mean_plus = 0.0;
    double mean_minus = 0.0;
    double sigma_prime = 0.0;
    double beta_prime = 0.0;  // predicted misclassification probability, in [0, 1/2]
    bool high_risk = false;   // beta_prime exceeds beta~
};

struct PhaseEstimate {
    double phi_hat = 0.0;     // (-pi, pi]
    double sigma = 0.0;       // fused posterior width
    double peak_sigma = 0.0;  // width of the last selected peak, sigma_{n_i}
    int step_index = 1;
    double confidence = 0.0;  // (1 - beta)(1 - beta~)^(step_index - 1)
};

MagnitudeEstimate estimate_magnitude(const MeasurementRecord& rec, double epsilon = 1.0);

/// Sign of phi_n from a complementary (y-basis) record. `contrast` is eps^n for the
/// record's exposure; with contrast 1 the predicted means and spread are
///   S'_{z+-} = +-sin(phi~) - sin^2(phi~) / 2N,   sigma'^2 = cos^2(phi~) / N'.
SignClassification classify_sign(const MeasurementRecord& comp_rec, double phi_tilde, Count n_probes,
                                  Count n_probes_comp, double beta_tilde, double contrast = 1.0);

/// First-step estimate with confidence 1 - beta.
PhaseEstimate initial_estimate(double phi_hat, double sigma, const Tolerance& tol);

/// Exact Gaussian fusion of the running estimate with a selected n-fold peak,
/// using the wrapped difference between the two centers.
PhaseEstimate combine_step(const PhaseEstimate& prev, const GaussianPeak& selected, const Tolerance& tol);

} // namespace seqphase
