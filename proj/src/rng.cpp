#include <seqphase/rng.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace seqphase {

namespace {

// Inversion is exact and cheap while the mean is small; BTPE needs n*min(p,1-p) >= 30.
constexpr Count kInversionMaxN = 64;
constexpr double kBtpeMinMean = 30.0;

} // namespace

Rng::Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream_keys)
{
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * stream_keys.size());
    auto push = [&words](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto key : stream_keys) push(key);
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
}

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Count Rng::binomial(Count n, double p)
{
    if (n < 0) throw DomainError("binomial: n must be >= 0");
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binomial: p must lie in [0, 1]");
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;

    // Sample with r = min(p, 1-p) and mirror, so draw(n, p) == n - draw(n, 1-p) for a given stream.
    const bool mirrored = p > 0.5;
    const double r = mirrored ? 1.0 - p : p;
    Count y = (n <= kInversionMaxN || static_cast<double>(n) * r < kBtpeMinMean)
                  ? binomial_inversion(n, r)
                  : binomial_btpe(n, r);
    return mirrored ? n - y : y;
}

Count Rng::binomial_inversion(Count n, double p)
{
    const double q = 1.0 - p;
    const double qn = std::exp(static_cast<double>(n) * std::log(q));
    const double np = static_cast<double>(n) * p;
    const double bound = std::min(static_cast<double>(n), np + 10.0 * std::sqrt(np * q + 1.0));

    Count x = 0;
    double px = qn;
    double u = uniform();
    while (u > px) {
        ++x;
        if (static_cast<double>(x) > bound) {
            x = 0;
            px = qn;
            u = uniform();
        } else {
            u -= px;
            px = (static_cast<double>(n - x + 1) * p * px) / (static_cast<double>(x) * q);
        }
    }
    return x;
}

// Kachitvichyanukul & Schmeiser (1988) BTPE: triangle/parallelogram/exponential
// envelope with squeeze and Stirling-corrected final acceptance. Requires p <= 1/2.
Count Rng::binomial_btpe(Count n, double p)
{
    const double dn = static_cast<double>(n);
    const double r = p;
    const double q = 1.0 - r;
    const double fm = dn * r + r;
    const Count m = static_cast<Count>(std::floor(fm));
    const double dm = static_cast<double>(m);
    const double p1 = std::floor(2.195 * std::sqrt(dn * r * q) - 4.6 * q) + 0.5;
    const double xm = dm + 0.5;
    const double xl = xm - p1;
    const double xr = xm + p1;
    const double c = 0.134 + 20.5 / (15.3 + dm);
    double a = (fm - xl) / (fm - xl * r);
    const double lam_l = a * (1.0 + a / 2.0);
    a = (xr - fm) / (xr * q);
    const double lam_r = a * (1.0 + a / 2.0);
    const double p2 = p1 * (1.0 + 2.0 * c);
    const double p3 = p2 + c / lam_l;
    const double p4 = p3 + c / lam_r;
    const double nrq = dn * r * q;

    auto stirling_tail = [](double x, double x2) {
        return (13860. - (462. - (132. - (99. - 140. / x2) / x2) / x2) / x2) / x / 166320.;
    };

    for (;;) {
        const double u = uniform() * p4;
        double v = uniform();
        Count y;

        if (u <= p1) {
            // Triangular centre: accept immediately.
            return static_cast<Count>(std::floor(xm - p1 * v + u));
        }
        if (u <= p2) {
            const double x = xl + (u - p1) / c;
            v = v * c + 1.0 - std::abs(dm - x + 0.5) / p1;
            if (v > 1.0) continue;
            y = static_cast<Count>(std::floor(x));
        } else if (u <= p3) {
            if (v == 0.0) continue;
            const double yl = std::floor(xl + std::log(v) / lam_l);
            if (yl < 0.0) continue;
            y = static_cast<Count>(yl);
            v = v * (u - p2) * lam_l;
        } else {
            if (v == 0.0) continue;
            const double yr = std::floor(xr - std::log(v) / lam_r);
            if (yr > dn) continue;
            y = static_cast<Count>(yr);
            v = v * (u - p3) * lam_r;
        }

        const Count k = y > m ? y - m : m - y;
        const double dk = static_cast<double>(k);
        if (k <= 20 || dk >= nrq / 2.0 - 1.0) {
            // Explicit ratio f(y)/f(m) by recursion.
            const double s = r / q;
            const double aa = s * (dn + 1.0);
            double f = 1.0;
            if (m < y) {
                for (Count i = m + 1; i <= y; ++i) f *= (aa / static_cast<double>(i) - s);
            } else if (m > y) {
                for (Count i = y + 1; i <= m; ++i) f /= (aa / static_cast<double>(i) - s);
            }
            if (v > f) continue;
            return y;
        }

        // Squeeze on log(f(y)/f(m)).
        const double rho = (dk / nrq) * ((dk * (dk / 3.0 + 0.625) + 0.1666666666666) / nrq + 0.5);
        const double t = -dk * dk / (2.0 * nrq);
        const double alog = std::log(v);
        if (alog < t - rho) return y;
        if (alog > t + rho) continue;

        const double dy = static_cast<double>(y);
        const double x1 = dy + 1.0;
        const double f1 = dm + 1.0;
        const double z = dn + 1.0 - dm;
        const double w = dn - dy + 1.0;
        const double bound = xm * std::log(f1 / x1) + (dn - dm + 0.5) * std::log(z / w) +
                             (dy - dm) * std::log(w * r / (x1 * q)) + stirling_tail(f1, f1 * f1) +
                             stirling_tail(z, z * z) + stirling_tail(x1, x1 * x1) +
                             stirling_tail(w, w * w);
        if (alog > bound) continue;
        return y;
    }
}

} // namespace seqphase
