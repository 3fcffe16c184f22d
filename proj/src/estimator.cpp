#include <seqphase/estimator.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace seqphase {

MagnitudeEstimate estimate_magnitude(const MeasurementRecord& rec, double epsilon)
{
    if (rec.basis != Basis::primary_x)
        throw DomainError("estimate_magnitude: record must come from the primary basis");
    if (rec.total() < 1) throw DomainError("estimate_magnitude: empty record");

    MagnitudeEstimate est;
    double c = contrast(epsilon, rec.n_fold);
    double p = rec.s_z / c;
    est.degenerate = rec.n_plus == 0 || rec.n_minus == 0 || std::abs(p) >= 1.0;
    p = std::clamp(p, -1.0, 1.0);
    est.phi_tilde = std::abs(std::acos(p));
    est.peak_sigma = effective_sigma(rec.total(), rec.n_fold, epsilon);
    return est;
}

SignClassification classify_sign(const MeasurementRecord& comp_rec, double phi_tilde, Count n_probes,
                                 Count n_probes_comp, double beta_tilde, double contrast)
{
    if (comp_rec.basis != Basis::complementary_y)
        throw DomainError("classify_sign: record must come from the complementary basis");
    if (!(phi_tilde >= 0.0 && phi_tilde <= kPi))
        throw DomainError("classify_sign: phi_tilde must lie in [0, pi]");
    if (n_probes < 1 || n_probes_comp < 1) throw DomainError("classify_sign: ensemble sizes must be >= 1");

    const double s = std::sin(phi_tilde);
    const double bias = s * s / (2.0 * static_cast<double>(n_probes));

    SignClassification out;
    out.mean_plus = contrast * (s - bias);
    out.mean_minus = contrast * (-s - bias);
    out.boundary = 0.5 * (out.mean_plus + out.mean_minus);
    out.sigma_prime = std::sqrt(std::max(0.0, 1.0 - contrast * contrast * s * s) /
                                static_cast<double>(n_probes_comp));
    out.alpha = comp_rec.s_z >= out.boundary ? +1 : -1;

    const double separation = contrast * std::abs(s);
    if (out.sigma_prime > 0.0)
        out.beta_prime = 0.5 * erfc(separation / (std::numbers::sqrt2 * out.sigma_prime));
    else
        out.beta_prime = separation > 0.0 ? 0.0 : 0.5;
    out.high_risk = out.beta_prime > beta_tilde;
    return out;
}

PhaseEstimate initial_estimate(double phi_hat, double sigma, const Tolerance& tol)
{
    PhaseEstimate est;
    est.phi_hat = wrap_phase(phi_hat);
    est.sigma = sigma;
    est.peak_sigma = sigma;
    est.step_index = 1;
    est.confidence = 1.0 - tol.beta();
    return est;
}

PhaseEstimate combine_step(const PhaseEstimate& prev, const GaussianPeak& selected, const Tolerance& tol)
{
    const double v_prev = prev.sigma * prev.sigma;
    const double v_peak = selected.sigma * selected.sigma;
    // Work on the line through prev.phi_hat so the fusion never straddles the branch cut.
    const double offset = wrapped_difference(selected.center, prev.phi_hat);

    PhaseEstimate next;
    next.phi_hat = wrap_phase(prev.phi_hat + offset * v_prev / (v_prev + v_peak));
    next.sigma = prev.sigma * selected.sigma / std::sqrt(v_prev + v_peak);
    next.peak_sigma = selected.sigma;
    next.step_index = prev.step_index + 1;
    next.confidence = prev.confidence * (1.0 - tol.beta_tilde());
    return next;
}

} // namespace seqphase
