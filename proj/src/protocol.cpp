#include <seqphase/protocol.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace seqphase {

namespace {

constexpr double kMaxRotations = 1e15;

struct FlagName {
    Flag flag;
    const char* name;
};

constexpr FlagName kFlagNames[] = {
    {Flag::estimation_error, "estimation_error"},
    {Flag::ambiguous, "ambiguous"},
    {Flag::degenerate, "degenerate"},
    {Flag::high_risk_classifier, "high_risk_classifier"},
    {Flag::no_gain, "no_gain"},
    {Flag::surrogate_unreliable, "surrogate_unreliable"},
    {Flag::capped, "capped"},
};

bool within_closed(double distance, double half_width)
{
    return distance <= half_width * (1.0 + 1e-12) + 1e-15;
}

// Integer rotation count minimizing 1 / (n eps^n).
Count best_rotation_count(double epsilon)
{
    double nc = coherence_rotation_limit(epsilon);
    if (!std::isfinite(nc) || nc > kMaxRotations) return static_cast<Count>(kMaxRotations);
    Count lo = std::max<Count>(1, static_cast<Count>(std::floor(nc)));
    Count hi = lo + 1;
    auto cost = [epsilon](Count n) { return 1.0 / (static_cast<double>(n) * contrast(epsilon, n)); };
    return cost(hi) < cost(lo) ? hi : lo;
}

} // namespace

std::string FlagSet::to_string() const
{
    std::string out;
    for (const auto& [flag, name] : kFlagNames) {
        if (!has(flag)) continue;
        if (!out.empty()) out += '|';
        out += name;
    }
    return out;
}

void ProtocolParams::validate() const
{
    if (max_steps < 1) throw DomainError("ProtocolParams: max_steps must be >= 1");
    if (n_cap && *n_cap < 1) throw DomainError("ProtocolParams: n_cap must be >= 1");
    if (target_precision && !(*target_precision > 0.0))
        throw DomainError("ProtocolParams: target_precision must be positive");
}

NextN next_n(double sigma_prev, const Tolerance& tol, std::optional<Count> n_cap)
{
    if (!(sigma_prev > 0.0)) throw DomainError("next_n: sigma_prev must be positive");
    double raw = std::floor(std::min(nu_factor(tol) / sigma_prev, kMaxRotations));

    NextN out;
    out.n = std::max<Count>(1, static_cast<Count>(raw));
    if (n_cap && out.n > *n_cap) {
        out.n = std::max<Count>(1, *n_cap);
        out.capped = true;
    }
    out.no_gain = out.n == 1;
    return out;
}

Selection select_alternative(double interval_center, double sigma_prev, const AlternativeSet& alts,
                             const Tolerance& tol)
{
    if (alts.peaks.empty()) throw DomainError("select_alternative: empty alternative set");
    if (!(sigma_prev > 0.0)) throw DomainError("select_alternative: sigma_prev must be positive");

    Selection sel;
    const double sigma_n = alts.sigma;
    const double spread = 2.0 * (sigma_prev * sigma_prev + sigma_n * sigma_n);
    sel.half_width = tol.g() * (sigma_prev - sigma_n);
    sel.weights.resize(alts.peaks.size());

    double best_in = -1.0, second_in = -1.0;
    for (std::size_t k = 0; k < alts.peaks.size(); ++k) {
        double d = wrapped_distance(alts.peaks[k].center, interval_center);
        double w = std::exp(-d * d / spread);
        sel.weights[k] = w;
        if (sel.half_width < 0.0 || !within_closed(d, sel.half_width)) continue;
        ++sel.in_interval;
        if (w > best_in) {
            second_in = best_in;
            best_in = w;
            sel.k = k;
        } else if (w > second_in) {
            second_in = w;
        }
    }

    if (!sel.k) {
        sel.flags.set(Flag::estimation_error);
        return sel;
    }
    if (second_in >= 0.0) {
        sel.ambiguity_ratio = second_in / (best_in + second_in);
        if (sel.ambiguity_ratio > tol.beta_tilde()) sel.flags.set(Flag::ambiguous);
    }

    double competitor = 0.0;
    for (std::size_t k = 0; k < sel.weights.size(); ++k)
        if (k != *sel.k) competitor = std::max(competitor, sel.weights[k]);
    if (best_in + competitor > 0.0) sel.misclassification = competitor / (best_in + competitor);
    return sel;
}

bool detect_estimation_error(const PhaseEstimate& prev, const AlternativeSet& alts, const Tolerance& tol)
{
    const double half_width = tol.g() * (prev.peak_sigma - alts.sigma);
    if (half_width < 0.0) return true;
    return std::none_of(alts.peaks.begin(), alts.peaks.end(), [&](const GaussianPeak& p) {
        return within_closed(wrapped_distance(p.center, prev.phi_hat), half_width);
    });
}

double compatibility_probability(double center, double sigma_prev, double peak_center, double sigma_n,
                                 const Tolerance& tol)
{
    const double mu = center + wrapped_difference(peak_center, center);
    const double lo = center - tol.g() * sigma_prev;
    const double hi = center + tol.g() * sigma_prev;
    return normal_cdf((hi - mu) / sigma_n) - normal_cdf((lo - mu) / sigma_n);
}

AlternativeSet StepRecord::alternatives() const
{
    return alternatives_from_phase(phi_n, n, peak_sigma);
}

std::vector<Count> ProtocolTrace::rotations() const
{
    std::vector<Count> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.n);
    return out;
}

ProtocolTrace run_protocol(const EnsembleSpec& spec, const TruePhase& truth, const ProtocolParams& params,
                           std::uint64_t stream, DephasingMode mode)
{
    spec.validate();
    params.validate();
    const Tolerance& tol = params.tol;

    std::optional<Count> cap = params.n_cap;
    if (spec.epsilon < 1.0) {
        // Past -1/ln(eps) rotations the damped contrast widens the peaks again.
        Count best = best_rotation_count(spec.epsilon);
        cap = cap ? std::min(*cap, best) : best;
    }

    Apparatus apparatus(spec, stream, mode);
    ProtocolTrace trace;
    trace.resources.include_complementary = params.count_complementary;
    PhaseEstimate estimate;

    for (int i = 1; i <= params.max_steps; ++i) {
        StepRecord step;
        if (i > 1) {
            if (params.target_precision && tol.g() * estimate.sigma <= *params.target_precision) break;
            NextN nn = next_n(estimate.peak_sigma, tol, cap);
            if (nn.no_gain || effective_sigma(spec.n_probes, nn.n, spec.epsilon) >= estimate.peak_sigma) {
                trace.flags.set(Flag::no_gain);
                break;
            }
            step.n = nn.n;
            if (nn.capped) step.flags.set(Flag::capped);
        }

        step.record = apparatus.sample_primary(truth, step.n);
        MagnitudeEstimate mag = estimate_magnitude(step.record, spec.epsilon);
        step.comp_record = apparatus.sample_complementary(truth, step.n);
        SignClassification sign = classify_sign(step.comp_record, mag.phi_tilde, spec.n_probes,
                                                spec.n_probes_comp, tol.beta_tilde(),
                                                contrast(spec.epsilon, step.n));

        if (mag.degenerate) step.flags.set(Flag::degenerate);
        if (std::min(step.record.n_plus, step.record.n_minus) < kGaussianValidityMinCount)
            step.flags.set(Flag::surrogate_unreliable);
        if (sign.high_risk) step.flags.set(Flag::high_risk_classifier);
        step.phi_n = sign.alpha * mag.phi_tilde;
        step.peak_sigma = mag.peak_sigma;
        step.beta_prime = sign.beta_prime;
        trace.beta_prime_max = std::max(trace.beta_prime_max, sign.beta_prime);

        Count r = spec.n_probes * step.n;
        if (params.count_complementary) r += spec.n_probes_comp * step.n;
        trace.resources.per_step.push_back(r);
        trace.resources.total += r;

        if (i == 1) {
            estimate = initial_estimate(step.phi_n, mag.peak_sigma, tol);
            step.selected_k = 0;
        } else {
            AlternativeSet alts = alternatives_from_phase(step.phi_n, step.n, mag.peak_sigma);
            Selection sel = select_alternative(estimate.phi_hat, estimate.peak_sigma, alts, tol);
            step.flags |= sel.flags;
            step.selected_k = sel.k;
            step.selected_weight_ratio = sel.misclassification;
            if (!sel.k) {
                step.estimate = estimate;
                trace.flags |= step.flags;
                trace.steps.push_back(std::move(step));
                trace.aborted = true;
                return trace;
            }
            estimate = combine_step(estimate, alts.peaks[*sel.k], tol);
        }

        step.estimate = estimate;
        trace.flags |= step.flags;
        trace.steps.push_back(std::move(step));
    }
    return trace;
}

ScalingPrediction resource_scaling(const ProtocolParams& params, Count n_probes)
{
    params.validate();
    if (n_probes < 1) throw DomainError("resource_scaling: N must be >= 1");
    const Tolerance& tol = params.tol;

    ScalingPrediction out;
    out.steps = params.max_steps;
    out.nu = nu_factor(tol);
    out.sigma1 = 1.0 / std::sqrt(static_cast<double>(n_probes));
    const double gain = out.nu / out.sigma1;
    const double dn = static_cast<double>(n_probes);
    for (int i = 1; i <= out.steps; ++i) {
        double n_i = std::pow(gain, i - 1);
        out.rotations.push_back(n_i);
        out.resources.push_back(dn * n_i);
        out.resources_total += dn * n_i;
    }
    out.resources_last = out.resources.back();

    const double k = static_cast<double>(out.steps);
    out.delta = tol.g() * out.sigma1 * std::pow(out.sigma1 / out.nu, k - 1.0);
    out.delta_closed_form = tol.g() / (std::pow(out.nu, (k - 1.0) / (k + 1.0)) *
                                       std::pow(out.resources_last, k / (k + 1.0)));
    const double delta1 = tol.g() * out.sigma1;
    out.standard_repetitions = (delta1 / out.delta) * (delta1 / out.delta);
    out.kitaev_steps = std::log(1.0 / out.delta) / std::log(2.0);
    return out;
}

int steps_for_precision(double delta, Count n_probes, const Tolerance& tol)
{
    if (!(delta > 0.0)) throw DomainError("steps_for_precision: delta must be positive");
    const double sigma1 = 1.0 / std::sqrt(static_cast<double>(n_probes));
    const double k = 1.0 + std::log(sigma1 * tol.g() / delta) /
                               std::log(nu_factor(tol) * std::sqrt(static_cast<double>(n_probes)));
    return std::max(1, static_cast<int>(std::ceil(k - 1e-9)));
}

} // namespace seqphase
