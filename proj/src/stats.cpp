#include <seqphase/stats.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace seqphase {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

void require_probability(double v, const char* name)
{
    if (!(v > 0.0 && v < 1.0))
        throw DomainError(std::string(name) + " must lie in (0, 1), got " + std::to_string(v));
}

// Abramowitz & Stegun 26.2.23 upper-tail quantile; only a starting point.
double rough_upper_quantile(double p)
{
    double t = std::sqrt(-2.0 * std::log(p));
    return t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                   (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
}

double simpson(const std::function<double(double)>& f, double a, double fa, double b, double fb,
               double m, double fm, double whole, double eps, int depth)
{
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * eps)
        return left + right + delta / 15.0;
    return simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1) +
           simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double eps)
{
    double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson(f, a, fa, b, fb, m, fm, whole, eps, 48);
}

} // namespace

Tolerance::Tolerance(double beta, double beta_tilde)
    : beta_(beta), beta_tilde_(beta_tilde), g_(0.0)
{
    require_probability(beta, "beta");
    require_probability(beta_tilde, "beta_tilde");
    g_ = g_of_beta(beta);
}

double erf(double x) { return std::erf(x); }
double erfc(double x) { return std::erfc(x); }

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double g_of_beta(double beta)
{
    require_probability(beta, "beta");

    // Newton on ln erfc(g / sqrt 2) = ln beta; log form keeps tiny beta well conditioned.
    const double target = std::log(beta);
    double lo = 0.0, hi = 40.0;
    double g = std::clamp(rough_upper_quantile(0.5 * beta), lo, hi);
    for (int it = 0; it < 100; ++it) {
        double tail = std::erfc(g / kSqrt2);
        double f = std::log(tail) - target;
        if (f > 0.0) lo = g; else hi = g;
        double slope = -2.0 * normal_pdf(g) / tail;
        double next = g - f / slope;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - g) <= 1e-15 * std::max(1.0, g)) return next;
        g = next;
    }
    return g;
}

double PosteriorP::density(double p) const
{
    if (p < -1.0 || p > 1.0) return 0.0;
    const double a = static_cast<double>(n_plus), b = static_cast<double>(n_minus);
    double log_norm = std::lgamma(a + b + 2.0) - std::lgamma(a + 1.0) - std::lgamma(b + 1.0) -
                      std::log(2.0);
    double up = (1.0 + p) / 2.0, down = (1.0 - p) / 2.0;
    if ((n_plus > 0 && up == 0.0) || (n_minus > 0 && down == 0.0)) return 0.0;
    double log_body = (n_plus > 0 ? a * std::log(up) : 0.0) + (n_minus > 0 ? b * std::log(down) : 0.0);
    return std::exp(log_norm + log_body);
}

double PosteriorP::surrogate_density(double p) const
{
    if (sigma <= 0.0) return p == s_z ? std::numeric_limits<double>::infinity() : 0.0;
    return normal_pdf((p - s_z) / sigma) / sigma;
}

PosteriorP posterior_p(Count n_plus, Count n_minus)
{
    if (n_plus < 0 || n_minus < 0)
        throw DomainError("posterior_p: counts must be nonnegative");
    if (n_plus + n_minus == 0)
        throw DomainError("posterior_p: at least one outcome is required");

    PosteriorP post;
    post.n_plus = n_plus;
    post.n_minus = n_minus;
    const double total = static_cast<double>(n_plus + n_minus);
    post.s_z = static_cast<double>(n_plus - n_minus) / total;
    post.sigma = std::sqrt(std::max(0.0, 1.0 - post.s_z * post.s_z) / total);
    post.degenerate = n_plus == 0 || n_minus == 0;
    if (post.degenerate) post.sigma = 0.0;
    post.unreliable = std::min(n_plus, n_minus) < kGaussianValidityMinCount;
    return post;
}

AlternativeSet alternatives_from_phase(double phi_n, Count n, double sigma)
{
    if (n < 1) throw DomainError("alternatives_from_phase: n must be >= 1");
    if (!(sigma > 0.0)) throw DomainError("alternatives_from_phase: sigma must be positive");

    AlternativeSet set;
    set.n = n;
    set.sigma = sigma;
    set.peaks.reserve(static_cast<std::size_t>(n));
    const double dn = static_cast<double>(n);
    for (Count k = 0; k < n; ++k) {
        double center = wrap_phase(phi_n / dn + kTwoPi * static_cast<double>(k) / dn);
        set.peaks.push_back({center, sigma, 1.0 / dn});
    }
    return set;
}

AlternativeSet angle_mixture_from_szn(double s_zn, Count n, Count n_probes)
{
    if (!(std::abs(s_zn) <= 1.0)) throw DomainError("angle_mixture_from_szn: |s_zn| must be <= 1");
    if (n_probes < 1) throw DomainError("angle_mixture_from_szn: N must be >= 1");
    double phi_n = std::abs(std::acos(s_zn));
    double sigma = 1.0 / (static_cast<double>(n) * std::sqrt(static_cast<double>(n_probes)));
    return alternatives_from_phase(phi_n, n, sigma);
}

double nu_factor(const Tolerance& tol)
{
    if (tol.beta_tilde() >= 0.5)
        throw DomainError("nu_factor: beta_tilde must be below 1/2");
    const double g = tol.g();
    const double log_odds = std::log((1.0 - tol.beta_tilde()) / tol.beta_tilde());
    // pi g (sqrt(1 + 2L/g^2) - 1) / L, rationalized so that L -> 0 stays finite.
    return 2.0 * kPi / (g * (1.0 + std::sqrt(1.0 + 2.0 * log_odds / (g * g))));
}

double nu_factor_asymptotic(const Tolerance& tol)
{
    const double lb = std::log(tol.beta()), lbt = std::log(tol.beta_tilde());
    return kPi * std::sqrt(2.0 * std::abs(lb)) / std::abs(lbt) * (std::sqrt(1.0 + lbt / lb) - 1.0);
}

double mixture_density(const AlternativeSet& mix, double phi)
{
    double total = 0.0;
    for (const auto& peak : mix.peaks) {
        double d = wrapped_difference(phi, peak.center);
        int images = static_cast<int>(std::ceil(8.0 * peak.sigma / kTwoPi)) + 1;
        for (int m = -images; m <= images; ++m) {
            double z = (d + kTwoPi * m) / peak.sigma;
            total += peak.weight * normal_pdf(z) / peak.sigma;
        }
    }
    return total;
}

double gaussian_entropy(double sigma)
{
    return std::log(sigma * std::sqrt(kTwoPi * std::numbers::e));
}

EntropyResult shannon_entropy(const AlternativeSet& mix)
{
    if (mix.peaks.empty()) throw DomainError("shannon_entropy: empty mixture");

    double weight_sum = 0.0;
    for (const auto& p : mix.peaks) weight_sum += p.weight;
    AlternativeSet norm = mix;
    for (auto& p : norm.peaks) p.weight /= weight_sum;

    EntropyResult result;
    for (std::size_t i = 0; i < norm.peaks.size(); ++i) {
        const auto& a = norm.peaks[i];
        if (norm.peaks.size() == 1 && 12.0 * a.sigma >= kTwoPi) result.overlapping = true;
        for (std::size_t j = i + 1; j < norm.peaks.size(); ++j) {
            const auto& b = norm.peaks[j];
            if (wrapped_distance(a.center, b.center) <= 6.0 * std::max(a.sigma, b.sigma))
                result.overlapping = true;
        }
    }

    // Break the circle at points around every peak so narrow peaks are never skipped.
    std::vector<double> cuts{-kPi, kPi};
    for (const auto& p : norm.peaks) {
        if (p.sigma * 24.0 >= kTwoPi) continue;
        for (int j = -12; j <= 12; j += 2) cuts.push_back(wrap_phase(p.center + j * p.sigma));
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto integrand = [&norm](double phi) {
        double p = mixture_density(norm, phi);
        return p > 0.0 ? -p * std::log(p) : 0.0;
    };
    constexpr double kAbsTol = 1e-8;
    double h = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double a = cuts[i], b = cuts[i + 1];
        if (b <= a) continue;
        h += adaptive_simpson(integrand, a, b, kAbsTol * (b - a) / kTwoPi);
    }
    result.value = h;
    return result;
}

} // namespace seqphase
