#include <seqphase/simulator.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace seqphase {

void EnsembleSpec::validate() const
{
    if (n_probes < 1) throw DomainError("EnsembleSpec: n_probes must be >= 1");
    if (n_probes_comp < 1) throw DomainError("EnsembleSpec: n_probes_comp must be >= 1");
    if (!(epsilon > 0.0 && epsilon <= 1.0))
        throw DomainError("EnsembleSpec: epsilon must lie in (0, 1], got " + std::to_string(epsilon));
}

double contrast(double epsilon, Count n)
{
    return std::pow(epsilon, static_cast<double>(n));
}

double effective_sigma(Count n_probes, Count n, double epsilon)
{
    if (n_probes < 1 || n < 1) throw DomainError("effective_sigma: N and n must be >= 1");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw DomainError("effective_sigma: epsilon must lie in (0, 1]");
    return 1.0 / (std::sqrt(static_cast<double>(n_probes)) * static_cast<double>(n) * contrast(epsilon, n));
}

double coherence_rotation_limit(double epsilon)
{
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw DomainError("coherence_rotation_limit: epsilon must lie in (0, 1]");
    if (epsilon == 1.0) return std::numeric_limits<double>::infinity();
    return -1.0 / std::log(epsilon);
}

Apparatus::Apparatus(const EnsembleSpec& spec, std::uint64_t stream, DephasingMode mode)
    : spec_(spec), mode_(mode), rng_(spec.seed, {stream})
{
    spec_.validate();
}

MeasurementRecord Apparatus::sample_primary(const TruePhase& truth, Count n)
{
    return sample(spec_.n_probes, static_cast<double>(n) * truth.value(), n, Basis::primary_x);
}

MeasurementRecord Apparatus::sample_complementary(const TruePhase& truth, Count n)
{
    return sample(spec_.n_probes_comp, static_cast<double>(n) * truth.value(), n, Basis::complementary_y);
}

MeasurementRecord Apparatus::sample(Count probes, double phase, Count n, Basis basis)
{
    if (n < 1) throw DomainError("sample: n must be >= 1");
    auto fringe = [basis](double x) { return basis == Basis::primary_x ? std::cos(x) : std::sin(x); };

    Count up = 0;
    if (mode_ == DephasingMode::analytic || spec_.epsilon == 1.0) {
        double q = 0.5 * (1.0 + contrast(spec_.epsilon, n) * fringe(phase));
        up = rng_.binomial(probes, q);
    } else {
        // E[cos(x + d)] = cos(x) exp(-var/2) for d ~ N(0, var); var = -2 n ln(eps) gives eps^n.
        double kick = std::sqrt(-2.0 * static_cast<double>(n) * std::log(spec_.epsilon));
        for (Count i = 0; i < probes; ++i) {
            double q = 0.5 * (1.0 + fringe(phase + kick * rng_.normal()));
            if (rng_.uniform() < q) ++up;
        }
    }

    MeasurementRecord rec;
    rec.n_plus = up;
    rec.n_minus = probes - up;
    rec.s_z = static_cast<double>(up - rec.n_minus) / static_cast<double>(probes);
    rec.n_fold = n;
    rec.basis = basis;
    return rec;
}

} // namespace seqphase
