#include <seqphase/magnetometry.hpp>

#include <cmath>
#include <sstream>

namespace seqphase {

void FieldScenario::validate() const
{
    if (!(b_minus >= 0.0 && b_minus < b_plus)) throw DomainError("FieldScenario: need 0 <= b_minus < b_plus");
    if (!(mu > 0.0)) throw DomainError("FieldScenario: mu must be positive");
    if (!(tau1 > 0.0)) throw DomainError("FieldScenario: tau1 must be positive");
    if (!(tau_c >= tau1)) throw DomainError("FieldScenario: tau_c must be >= tau1");
    if (n_probes < 1) throw DomainError("FieldScenario: N must be >= 1");
    if (n_probes_comp < 0) throw DomainError("FieldScenario: N' must be >= 0");
}

double FieldScenario::phase_per_gauss() const
{
    return mu * tau1 / constants::kHbar;
}

double FieldScenario::epsilon() const
{
    return std::exp(-tau1 / tau_c);
}

FieldPlan plan_scenario(const FieldScenario& sc, const Tolerance& tol, int requested_steps)
{
    sc.validate();
    if (requested_steps < 1) throw DomainError("plan_scenario: requested_steps must be >= 1");

    const double k = sc.phase_per_gauss();
    const double span = (sc.b_plus - sc.b_minus) * k;
    if (span > kTwoPi * (1.0 + 1e-12)) {
        double required = kTwoPi * constants::kHbar / (sc.mu * (sc.b_plus - sc.b_minus));
        std::ostringstream msg;
        msg << "field interval spans " << span << " rad of primary phase (> 2 pi); reduce tau1 to <= "
            << required << " s";
        throw InfeasibleScenario(msg.str(), required);
    }

    FieldPlan plan;
    plan.offset_index = static_cast<std::int64_t>(std::floor(sc.b_plus * k / kTwoPi));
    plan.offset_b0 = kTwoPi * static_cast<double>(plan.offset_index) / k;
    if (plan.offset_b0 > sc.b_plus) {
        --plan.offset_index;
        plan.offset_b0 = kTwoPi * static_cast<double>(plan.offset_index) / k;
    }

    const double ratio = sc.tau_c / sc.tau1;
    plan.n_cap = std::max<Count>(1, static_cast<Count>(std::floor(ratio * (1.0 + 1e-12))));
    const double est = 1.0 + std::log(ratio) / std::log(std::sqrt(static_cast<double>(sc.n_probes)));
    plan.estimated_steps = sc.n_probes > 1 ? std::max(1, static_cast<int>(std::ceil(est - 1e-9))) : 1;

    plan.params.tol = tol;
    plan.params.max_steps = std::min(requested_steps, plan.estimated_steps);
    plan.params.n_cap = plan.n_cap;
    return plan;
}

double field_to_phase(double b, const FieldScenario& sc, double offset_b0, Count n)
{
    if (n < 1) throw DomainError("field_to_phase: n must be >= 1");
    return wrap_phase(static_cast<double>(n) * sc.phase_per_gauss() * (b - offset_b0));
}

double phase_to_field(double phi, const FieldScenario& sc, double offset_b0)
{
    return offset_b0 + phi / sc.phase_per_gauss();
}

double unwrap_field(double phi, const FieldScenario& sc, double offset_b0)
{
    const double period = kTwoPi / sc.phase_per_gauss();
    const double base = phase_to_field(phi, sc, offset_b0);
    const double mid = 0.5 * (sc.b_minus + sc.b_plus);
    double best = base + std::round((mid - base) / period) * period;
    auto outside = [&sc](double b) {
        return b < sc.b_minus ? sc.b_minus - b : (b > sc.b_plus ? b - sc.b_plus : 0.0);
    };
    for (double cand : {best - period, best + period})
        if (outside(cand) < outside(best)) best = cand;
    return best;
}

double primary_field_precision(const FieldScenario& sc)
{
    return constants::kHbar / (sc.mu * sc.tau1 * std::sqrt(static_cast<double>(sc.n_probes)));
}

double coherence_field_precision(const FieldScenario& sc)
{
    return constants::kHbar / (sc.mu * sc.tau_c * std::sqrt(static_cast<double>(sc.n_probes)));
}

FieldEstimate run_field_measurement(const FieldScenario& sc, double hidden_b, const Tolerance& tol,
                                    int requested_steps, std::uint64_t seed, std::uint64_t stream)
{
    FieldPlan plan = plan_scenario(sc, tol, requested_steps);
    if (!(hidden_b >= sc.b_minus && hidden_b <= sc.b_plus))
        throw DomainError("run_field_measurement: hidden field outside [b_minus, b_plus]");

    EnsembleSpec spec;
    spec.n_probes = sc.n_probes;
    spec.n_probes_comp = sc.n_probes_comp > 0 ? sc.n_probes_comp : sc.n_probes;
    spec.epsilon = sc.epsilon();
    spec.seed = seed;

    // An n-fold rotation is an interrogation of n tau1 in the same field.
    TruePhase truth(field_to_phase(hidden_b, sc, plan.offset_b0, 1));

    FieldEstimate out;
    out.offset_b0 = plan.offset_b0;
    out.trace = run_protocol(spec, truth, plan.params, stream);
    out.aborted = out.trace.aborted;
    const double k = sc.phase_per_gauss();
    const PhaseEstimate& fin = out.trace.final_estimate();
    out.b_hat = unwrap_field(fin.phi_hat, sc, plan.offset_b0);
    out.delta_b = fin.sigma / k;
    out.delta_b_primary = out.trace.steps.front().estimate.sigma / k;
    out.steps_used = static_cast<int>(out.trace.steps.size());
    return out;
}

} // namespace seqphase
