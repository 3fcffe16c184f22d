#include <doctest.h>

#include "oracles.hpp"

#include <seqphase/estimator.hpp>

#include <cmath>

using namespace seqphase;

namespace {

MeasurementRecord record(Count n_plus, Count n_minus, Count n = 1, Basis basis = Basis::primary_x)
{
    MeasurementRecord r;
    r.n_plus = n_plus;
    r.n_minus = n_minus;
    r.s_z = static_cast<double>(n_plus - n_minus) / static_cast<double>(n_plus + n_minus);
    r.n_fold = n;
    r.basis = basis;
    return r;
}

double predicted_beta_prime(double phi_tilde, Count n_comp)
{
    double sp = std::abs(std::cos(phi_tilde)) / std::sqrt(static_cast<double>(n_comp));
    return 0.5 * oracle::erfc_oracle(std::abs(std::sin(phi_tilde)) / (std::numbers::sqrt2 * sp));
}

// Exact probability that |cos phi - S| <= g sigma(S) under Binomial(N, (1 + cos phi)/2).
double exact_primary_coverage(double phi, Count N, double g)
{
    const double q = 0.5 * (1.0 + std::cos(phi));
    double total = 0.0;
    for (Count k = 0; k <= N; ++k) {
        double s = (2.0 * k - N) / N;
        double sigma = std::sqrt((1.0 - s * s) / N);
        if (std::abs(std::cos(phi) - s) <= g * sigma) total += oracle::binomial_pmf(N, k, q);
    }
    return total;
}

} // namespace

TEST_CASE("magnitude estimate examples")
{
    auto half = estimate_magnitude(record(500, 500));
    CHECK(half.phi_tilde == doctest::Approx(std::numbers::pi / 2));
    CHECK(half.peak_sigma == doctest::Approx(1.0 / std::sqrt(1000.0)));
    CHECK_FALSE(half.degenerate);

    auto tilt = estimate_magnitude(record(600, 400));
    CHECK(tilt.phi_tilde == doctest::Approx(1.369438406004566).epsilon(1e-12));
    CHECK(tilt.peak_sigma == doctest::Approx(1.0 / std::sqrt(1000.0)));

    CHECK(estimate_magnitude(record(1000, 0)).degenerate);
    CHECK(estimate_magnitude(record(0, 1000)).degenerate);

    auto folded = estimate_magnitude(record(600, 400, 8));
    CHECK(folded.phi_tilde == doctest::Approx(std::acos(0.2)));
    CHECK(folded.peak_sigma == doctest::Approx(1.0 / (8 * std::sqrt(1000.0))));

    // Damped contrast: S is rescaled by eps^n and the width inflated by 1/eps^n.
    const double eps = 0.99;
    auto damped = estimate_magnitude(record(600, 400, 4), eps);
    CHECK(damped.phi_tilde == doctest::Approx(std::acos(0.2 / std::pow(eps, 4))));
    CHECK(damped.peak_sigma == doctest::Approx(1.0 / (4 * std::pow(eps, 4) * std::sqrt(1000.0))));
}

TEST_CASE("sign classification examples")
{
    const Count N = 1000;
    auto right = classify_sign(record(1000, 0, 1, Basis::complementary_y), std::numbers::pi / 2, N, N, 0.01);
    CHECK(right.sigma_prime == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(right.beta_prime == 0.0);
    CHECK(right.alpha == +1);

    auto flat = classify_sign(record(500, 500, 1, Basis::complementary_y), 0.0, N, N, 0.01);
    CHECK(flat.beta_prime == doctest::Approx(0.5));
    CHECK(flat.high_risk);

    auto one = classify_sign(record(100, 900, 1, Basis::complementary_y), 1.0, N, N, 0.01);
    CHECK(one.beta_prime < 1e-10);
    CHECK(one.beta_prime == doctest::Approx(predicted_beta_prime(1.0, N)).epsilon(1e-6));
    CHECK(one.alpha == -1);
    CHECK(one.boundary == doctest::Approx(0.5 * (one.mean_plus + one.mean_minus)));
    const double s = std::sin(1.0);
    CHECK(one.mean_plus == doctest::Approx(s - s * s / (2.0 * N)));
    CHECK(one.mean_minus == doctest::Approx(-s - s * s / (2.0 * N)));
    CHECK(one.sigma_prime == doctest::Approx(std::cos(1.0) / std::sqrt(1000.0)));

    for (double phi : {0.05, 0.3, 0.8, 1.2, 2.0, 3.0}) {
        auto c = classify_sign(record(500, 500, 1, Basis::complementary_y), phi, N, 400, 0.01);
        CHECK(c.beta_prime == doctest::Approx(predicted_beta_prime(phi, 400)).epsilon(1e-9));
        CHECK(c.beta_prime >= 0.0);
        CHECK(c.beta_prime <= 0.5);
        CHECK(c.high_risk == (c.beta_prime > 0.01));
    }
}

TEST_CASE("sign classifier tie goes to plus")
{
    const Count N = 1000;
    auto c = classify_sign(record(500, 500, 1, Basis::complementary_y), 1.0, N, N, 0.01);
    MeasurementRecord at = record(500, 500, 1, Basis::complementary_y);
    at.s_z = c.boundary;
    CHECK(classify_sign(at, 1.0, N, N, 0.01).alpha == +1);
}

TEST_CASE("misclassification rate matches the prediction in a non-trivial regime")
{
    // Odd N' keeps S' off the boundary; phi near zero gives beta' around 5%.
    EnsembleSpec spec;
    spec.n_probes = 1001;
    spec.n_probes_comp = 1001;
    spec.seed = 31;
    const double phi = 0.05;
    const int T = 100000;
    Apparatus app(spec, 4);
    int wrong = 0;
    double beta_prime = 0.0;
    for (int t = 0; t < T; ++t) {
        auto rec = app.sample_complementary(TruePhase(phi), 1);
        auto c = classify_sign(rec, phi, spec.n_probes, spec.n_probes_comp, 0.01);
        wrong += c.alpha != +1;
        beta_prime = c.beta_prime;
    }
    double rate = static_cast<double>(wrong) / T;
    double se = std::sqrt(beta_prime * (1 - beta_prime) / T);
    CHECK(beta_prime == doctest::Approx(0.057).epsilon(0.05));
    CHECK(std::abs(rate - beta_prime) <= 3 * se);
}

TEST_CASE("flipping the phase flips the sign on paired streams")
{
    EnsembleSpec spec;
    spec.n_probes = 1001;
    spec.n_probes_comp = 1001;
    spec.seed = 5;
    for (double phi : {0.02, 0.1, 0.7, 2.5}) {
        Apparatus a(spec, 17), b(spec, 17);
        for (int t = 0; t < 2000; ++t) {
            auto ra = a.sample_complementary(TruePhase(phi), 1);
            auto rb = b.sample_complementary(TruePhase(-phi), 1);
            auto ca = classify_sign(ra, phi, spec.n_probes, spec.n_probes_comp, 0.01);
            auto cb = classify_sign(rb, phi, spec.n_probes, spec.n_probes_comp, 0.01);
            REQUIRE(ca.alpha == -cb.alpha);
            REQUIRE(ca.beta_prime == cb.beta_prime);
        }
    }
}

TEST_CASE("primary coverage agrees with the exact binomial probability")
{
    EnsembleSpec spec;
    spec.seed = 8;
    const Tolerance tol(0.01, 0.01);
    const int T = 20000;
    for (double phi : {0.4, 1.3, 2.2}) {
        Apparatus app(spec, static_cast<std::uint64_t>(phi * 10));
        int hit = 0;
        for (int t = 0; t < T; ++t) {
            auto rec = app.sample_primary(TruePhase(phi), 1);
            auto post = posterior_p(rec.n_plus, rec.n_minus);
            hit += std::abs(std::cos(phi) - post.s_z) <= tol.g() * post.sigma;
        }
        double exact = exact_primary_coverage(phi, spec.n_probes, tol.g());
        double frac = static_cast<double>(hit) / T;
        CHECK(std::abs(frac - exact) <= 4 * std::sqrt(exact * (1 - exact) / T));
        // The plug-in width makes the interval slightly liberal at N = 1000.
        CHECK(exact < 0.99);
        CHECK(exact > 0.97);
    }
}

TEST_CASE("combine_step examples")
{
    const Tolerance tol(0.01, 0.01);
    auto prev = initial_estimate(0.5, 0.03, tol);
    CHECK(prev.confidence == doctest::Approx(0.99));
    CHECK(prev.step_index == 1);

    auto out = combine_step(prev, GaussianPeak{0.51, 0.001, 1.0}, tol);
    CHECK(out.phi_hat == doctest::Approx(0.50998889).epsilon(1e-8));
    CHECK(out.sigma == doctest::Approx(0.0009994446).epsilon(1e-8));
    CHECK(out.peak_sigma == 0.001);
    CHECK(out.step_index == 2);
    CHECK(out.confidence == doctest::Approx(0.99 * 0.99));

    auto equal = combine_step(initial_estimate(1.2, 0.03, tol), GaussianPeak{1.2, 0.03, 1.0}, tol);
    CHECK(equal.phi_hat == doctest::Approx(1.2));
    CHECK(equal.sigma == doctest::Approx(0.03 / std::sqrt(2.0)));

    // Fusion across the branch cut.
    auto cut = combine_step(initial_estimate(3.1, 0.03, tol), GaussianPeak{-3.13, 0.03, 1.0}, tol);
    double m, s;
    oracle::fuse(3.1, 0.03, -3.13 + 2 * std::numbers::pi, 0.03, m, s);
    CHECK(cut.phi_hat == doctest::Approx(wrap_phase(m)));
}

TEST_CASE("exact fusion reduces to the sharp-peak approximation")
{
    const Tolerance tol(0.01, 0.01);
    for (double s1 : {0.03, 0.01})
        for (double ratio : {0.5, 0.1, 0.03, 0.001})
            for (double offset : {-2.0, -0.3, 0.7, 2.4}) {
                const double sn = ratio * s1;
                const double center = 0.4, peak = center + offset * s1;
                auto out = combine_step(initial_estimate(center, s1, tol), GaussianPeak{peak, sn, 1.0}, tol);
                double m, s;
                oracle::fuse(center, s1, peak, sn, m, s);
                CHECK(out.phi_hat == doctest::Approx(m).epsilon(1e-12));
                CHECK(out.sigma == doctest::Approx(s).epsilon(1e-12));
                const double r2 = ratio * ratio;
                CHECK(std::abs(out.sigma / sn - 1.0) <= r2);
                CHECK(std::abs(out.phi_hat - peak) <= r2 * std::abs(center - peak) + 1e-15);
            }
}
