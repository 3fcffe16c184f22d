// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance                 run all criteria
//   acceptance --criterion 4   run one
//
// Exit status is non-zero when any selected criterion fails.

#include "oracles.hpp"

#include <seqphase/experiment.hpp>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <thread>

using namespace seqphase;

namespace {

const Tolerance kTol(0.01, 0.01);

int worker_threads()
{
    return static_cast<int>(std::max(1u, std::min(8u, std::thread::hardware_concurrency())));
}

std::vector<std::string> pending_notes;

void note(const std::string& what)
{
    pending_notes.push_back(what);
}

// Verdict line first, then the supporting numbers gathered while checking.
bool report(int id, bool ok, const std::string& what)
{
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    for (const auto& n : pending_notes) std::printf("       %s\n", n.c_str());
    pending_notes.clear();
    std::fflush(stdout);
    return ok;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------------------

bool c1_nu_anchor()
{
    double nu = nu_factor(kTol);
    return report(1, std::abs(nu - 0.96) <= 0.01, fmt("nu(0.01, 0.01) = %.6f, required 0.96 +- 0.01", nu));
}

bool c2_primary_coverage()
{
    const Count N = 1000;
    const int per_phi = 10000;
    const int phis = 20;
    EnsembleSpec spec;
    spec.n_probes = N;
    spec.seed = 2002;

    long hits = 0, total = 0;
    double exact_mean = 0.0;
    std::vector<std::string> rows;
    for (int j = 0; j < phis; ++j) {
        const double phi = 0.15 + (kPi - 0.30) * j / (phis - 1);
        Apparatus app(spec, static_cast<std::uint64_t>(j));
        long h = 0;
        for (int t = 0; t < per_phi; ++t) {
            auto rec = app.sample_primary(TruePhase(phi), 1);
            auto post = posterior_p(rec.n_plus, rec.n_minus);
            h += std::abs(std::cos(phi) - post.s_z) <= kTol.g() * post.sigma;
        }
        // Exact binomial probability of the same event.
        const double q = 0.5 * (1.0 + std::cos(phi));
        double exact = 0.0;
        for (Count k = 0; k <= N; ++k) {
            double s = (2.0 * k - N) / N;
            if (std::abs(std::cos(phi) - s) <= kTol.g() * std::sqrt((1.0 - s * s) / N))
                exact += oracle::binomial_pmf(N, k, q);
        }
        exact_mean += exact / phis;
        rows.push_back(fmt("phi=%.4f  empirical %.4f  exact %.5f", phi, static_cast<double>(h) / per_phi, exact));
        hits += h;
        total += per_phi;
    }
    const double frac = static_cast<double>(hits) / total;
    const double se = std::sqrt(0.99 * 0.01 / total);
    note(fmt("exact binomial coverage of the plug-in interval, averaged over the same phases: %.5f", exact_mean));
    for (std::size_t i = 0; i < rows.size(); i += 4) note(rows[i]);
    return report(2, std::abs(frac - 0.99) <= 3 * se,
                  fmt("primary coverage %.5f over %ld trials at %d phases; required 0.99 +- %.5f (3 se)", frac, total,
                      phis, 3 * se));
}

bool c3_misclassification()
{
    ExperimentConfig cfg;
    cfg.mode = Mode::misclassification;
    cfg.trials = 100000;
    cfg.seed = 3003;
    cfg.threads = worker_threads();
    cfg.phis = {0.3, 0.8, 1.2};
    auto out = run_experiment(cfg);

    bool ok = true;
    double rate_08 = 1.0;
    for (const auto& row : out.summary.results["phis"]) {
        double phi = row["phi"].get<double>();
        double rate = row["rate"]["value"].get<double>();
        double pred = row["predicted_beta_prime"].get<double>();
        double pse = row["predicted_stderr"].get<double>();
        bool match = std::abs(rate - pred) <= 3 * pse;
        ok = ok && match;
        if (std::abs(phi - 0.8) < 1e-12) rate_08 = rate;
        note(fmt("phi=%.1f  errors %lld / %lld  rate %.3g  predicted %.3g  (3 se %.3g)", phi,
                 row["errors"].get<long long>(), static_cast<long long>(cfg.trials), rate, pred, 3 * pse));
    }
    ok = ok && rate_08 < 1e-4;

    // A regime where the prediction is not vanishingly small.
    EnsembleSpec spec;
    spec.n_probes = spec.n_probes_comp = 1001;
    spec.seed = 3004;
    Apparatus app(spec, 0);
    int wrong = 0;
    const int T = 100000;
    double bp = 0.0;
    for (int t = 0; t < T; ++t) {
        auto c = classify_sign(app.sample_complementary(TruePhase(0.05), 1), 0.05, spec.n_probes, spec.n_probes_comp,
                               kTol.beta_tilde());
        wrong += c.alpha != 1;
        bp = c.beta_prime;
    }
    note(fmt("side check phi=0.05, N=N'=1001: rate %.5f, predicted %.5f, 3 se %.5f", static_cast<double>(wrong) / T,
             bp, 3 * std::sqrt(bp * (1 - bp) / T)));
    return report(3, ok, fmt("sign-error rates match the prediction within 3 se; rate at 0.8 = %.3g (< 1e-4)", rate_08));
}

bool c4_k_step_confidence()
{
    ExperimentConfig cfg;
    cfg.mode = Mode::coverage;
    cfg.trials = 10000;
    cfg.seed = 4004;
    cfg.threads = worker_threads();
    cfg.params.max_steps = 3;
    auto out = run_experiment(cfg);
    const auto& agg = *out.summary.runs;

    const double target = 0.99 * 0.99 * 0.99;
    const bool cov_ok = agg.coverage.value >= target - 3 * agg.coverage.std_error;

    // Realized width sigma_1 / n_3 from the trace; ideal sigma_1 (sigma_1 / nu)^2.
    const double s1 = 1.0 / std::sqrt(1000.0);
    const double ideal = s1 * std::pow(s1 / nu_factor(kTol), 2);
    const Count n3 = next_n(s1 / next_n(s1, kTol, std::nullopt).n, kTol, std::nullopt).n;
    const double realized = s1 / static_cast<double>(n3);
    const double ratio = realized / ideal;
    const bool width_ok = ratio >= 1.0 / 1.1 && ratio <= 1.1;

    note(fmt("n_2 = %lld, n_3 = %lld; covered %lld, missed %lld, unresolved %lld; reruns per trial %.4f",
             static_cast<long long>(next_n(s1, kTol, std::nullopt).n), static_cast<long long>(n3),
             static_cast<long long>(agg.covered), static_cast<long long>(agg.missed),
             static_cast<long long>(agg.restarted), agg.restart_rate));
    note(fmt("mean fused sigma %.4g; error-based width median|err|/0.6745 = %.4g", agg.mean_sigma,
             agg.median_abs_error / 0.6744897501960817));

    ExperimentConfig strict = cfg;
    strict.max_restarts = 0;
    auto s = run_experiment(strict);
    note(fmt("without reruns after a detected estimation error: coverage %.4f +- %.4f", s.summary.runs->coverage.value,
             s.summary.runs->coverage.std_error));
    return report(4, cov_ok && width_ok,
                  fmt("K=3 coverage %.4f +- %.4f vs target %.4f; sigma_3 %.4g / ideal %.4g = %.4f",
                      agg.coverage.value, agg.coverage.std_error, target, realized, ideal, ratio));
}

bool c5_resource_scaling()
{
    ExperimentConfig cfg;
    cfg.mode = Mode::scaling;
    cfg.trials = 20000;
    cfg.seed = 5005;
    cfg.threads = worker_threads();
    cfg.params.max_steps = 3;
    cfg.atoms_list = {100, 400, 1000};
    auto out = run_experiment(cfg);

    bool ok = true;
    for (int k = 1; k <= 3; ++k) {
        const auto& s = out.summary.results["slopes"][std::to_string(k)];
        double slope = s["slope"].get<double>(), target = s["target"].get<double>();
        ok = ok && std::abs(slope - target) <= 0.05;
        note(fmt("K=%d  fitted slope %.4f  target %.4f", k, slope, target));
    }
    double worst = 0.0;
    for (int k = 1; k <= 8; ++k)
        for (Count n : {100, 400, 1000, 100000}) {
            ProtocolParams p;
            p.max_steps = k;
            auto pred = resource_scaling(p, n);
            double lhs = pred.delta * std::pow(pred.resources_last, k / (k + 1.0));
            double rhs = kTol.g() / std::pow(pred.nu, (k - 1.0) / (k + 1.0));
            worst = std::max(worst, std::abs(lhs / rhs - 1.0));
        }
    ok = ok && worst <= 1e-10;
    return report(5, ok, fmt("slopes within 0.05 of -K/(K+1); closed-form identity worst relative error %.2g", worst));
}

bool c6_dephasing()
{
    ExperimentConfig cfg;
    cfg.mode = Mode::dephasing;
    cfg.trials = 2000;
    cfg.seed = 6006;
    cfg.threads = worker_threads();
    cfg.spec.epsilon = std::exp(-0.1);
    auto out = run_experiment(cfg);
    const auto& r = out.summary.results;
    long long arg = r["argmin_n"].get<long long>();
    double ratio = r["min_over_predicted"].get<double>();
    bool ok = arg == 10 && std::abs(ratio - 1.0) <= 0.02;
    return report(6, ok, fmt("argmin n = %lld (expected 10); minimum / (sigma_1 e ln(1/eps)) = %.6f", arg, ratio));
}

bool c7_magnetometry()
{
    FieldScenario sc;
    sc.b_minus = 0.0;
    sc.b_plus = 0.5;
    sc.tau1 = 1e-6;
    sc.tau_c = 1.0;
    sc.n_probes = 1000;

    ExperimentConfig cfg;
    cfg.mode = Mode::magnetometry;
    cfg.trials = 400;
    cfg.seed = 7007;
    cfg.threads = worker_threads();
    cfg.params.max_steps = 5;
    cfg.scenario = sc;
    auto out = run_experiment(cfg);
    const auto& r = out.summary.results;
    const double mean_db = r["mean_delta_b"].get<double>();
    const bool band_ok = mean_db >= 1e-9 && mean_db <= 9e-9;

    const double formula = constants::kHbar / (constants::kBohrMagneton * sc.tau1 * std::sqrt(1000.0));
    auto one = run_field_measurement(sc, 0.25, kTol, 1, 7008, 0);
    const double rel = std::abs(one.delta_b / formula - 1.0);
    const bool primary_ok = rel <= 1e-6;

    note(fmt("coherence bound hbar/(mu tau_c sqrt N) = %.4g G; rotations capped at %lld", coherence_field_precision(sc),
             static_cast<long long>(r["n_cap"].get<long long>())));
    note(fmt("K=1 gap equals exp(tau1/tau_c) - 1 = %.8g: the single exposure already carries contrast exp(-tau1/tau_c)",
             std::expm1(sc.tau1 / sc.tau_c)));

    // Same protocol with the contrast loss ignored and only the rotation cap kept.
    EnsembleSpec ideal;
    ideal.epsilon = 1.0;
    ideal.seed = 7009;
    ProtocolParams p;
    p.max_steps = 5;
    p.n_cap = static_cast<Count>(sc.tau_c / sc.tau1);
    std::vector<double> widths;
    for (std::uint64_t s = 0; s < 200; ++s) {
        auto tr = run_protocol(ideal, TruePhase(1.0), p, s);
        if (!tr.aborted) widths.push_back(tr.final_estimate().sigma / sc.phase_per_gauss());
    }
    double m = 0.0;
    for (double w : widths) m += w / widths.size();
    note(fmt("diagnostic, no contrast loss (cap only): mean dB = %.4g G", m));
    return report(7, band_ok && primary_ok,
                  fmt("K=5 mean dB = %.4g G (band [1e-9, 9e-9]); K=1 dB = %.10g G vs %.10g G, relative gap %.8g "
                      "(<= 1e-6)",
                      mean_db, one.delta_b, formula, rel));
}

bool c8_entropy()
{
    const double s1 = 0.03;
    double h1 = shannon_entropy(alternatives_from_phase(0.7, 1, s1)).value;
    double worst = 0.0;
    bool separated = true;
    for (Count n : {2, 5, 10}) {
        auto h = shannon_entropy(alternatives_from_phase(0.7, n, s1 / n));
        separated = separated && !h.overlapping;
        worst = std::max(worst, std::abs(h.value - h1));
    }
    return report(8, worst <= 1e-6 && separated,
                  fmt("max |H_n - H_1| over n in {2,5,10} = %.3g (<= 1e-6); H_1 = %.9f, closed form %.9f", worst, h1,
                      gaussian_entropy(s1)));
}

bool c9_properties()
{
    bool all = true;

    // Determinism.
    ExperimentConfig cfg;
    cfg.mode = Mode::coverage;
    cfg.trials = 500;
    cfg.seed = 9009;
    auto a = run_experiment(cfg);
    auto b = run_experiment(cfg);
    cfg.threads = worker_threads();
    auto c = run_experiment(cfg);
    bool det = a.csv == b.csv && a.csv == c.csv;
    note(fmt("determinism: repeated and multi-threaded CSVs identical: %s", det ? "yes" : "no"));
    all = all && det;

    // Binomial sampler against the exact pmf.
    Rng rng(9010, {1});
    double min_p = 1.0;
    int tests = 0;
    for (Count n : {1, 3, 8, 13, 20})
        for (double p : {0.03, 0.3, 0.5, 0.71, 0.96}) {
            std::vector<double> obs(static_cast<std::size_t>(n + 1)), exp(obs.size());
            const int draws = 100000;
            for (int i = 0; i < draws; ++i) obs[static_cast<std::size_t>(rng.binomial(n, p))] += 1;
            for (Count k = 0; k <= n; ++k) exp[static_cast<std::size_t>(k)] = draws * oracle::binomial_pmf(n, k, p);
            auto chi = oracle::pearson(obs, exp);
            if (chi.dof < 1) continue;
            boost::math::chi_squared dist(chi.dof);
            min_p = std::min(min_p, boost::math::cdf(boost::math::complement(dist, chi.statistic)));
            ++tests;
        }
    bool chi_ok = min_p > 1e-3;
    note(fmt("binomial chi-square: %d cases with n <= 20, smallest p-value %.4g (> 1e-3)", tests, min_p));
    all = all && chi_ok;

    // Exact fusion vs the sharp-peak approximation.
    double worst_excess = 0.0;
    for (double ratio : {0.5, 0.2, 0.05, 0.01, 0.001})
        for (double off : {-2.5, -1.0, 0.4, 2.0}) {
            const double s1 = 0.03, sn = ratio * s1, c0 = 0.6, pk = c0 + off * s1;
            auto f = combine_step(initial_estimate(c0, s1, kTol), GaussianPeak{pk, sn, 1.0}, kTol);
            double r2 = ratio * ratio;
            worst_excess = std::max(worst_excess, std::abs(f.sigma / sn - 1.0) - r2);
            worst_excess = std::max(worst_excess, std::abs(f.phi_hat - pk) / std::abs(pk - c0) - r2);
        }
    bool fusion_ok = worst_excess <= 0.0;
    note(fmt("fusion reduction: relative deviation never exceeds (sigma_n/sigma_1)^2: %s", fusion_ok ? "yes" : "no"));
    all = all && fusion_ok;

    // Corrupted priors.
    const double s1 = 1.0 / std::sqrt(1000.0);
    auto detection = [&](double shift) {
        EnsembleSpec spec;
        spec.seed = 9011;
        int caught = 0;
        const int T = 10000;
        for (int t = 0; t < T; ++t) {
            Rng truth_rng(9012, {static_cast<std::uint64_t>(t)});
            double truth = 0.2 + (kPi - 0.4) * truth_rng.uniform();
            if (truth_rng.uniform() < 0.5) truth = -truth;
            Apparatus app(spec, static_cast<std::uint64_t>(t));
            auto prior = initial_estimate(wrap_phase(truth + shift * s1), s1, kTol);
            Count n = next_n(s1, kTol, std::nullopt).n;
            auto mag = estimate_magnitude(app.sample_primary(TruePhase(truth), n));
            auto sign = classify_sign(app.sample_complementary(TruePhase(truth), n), mag.phi_tilde, spec.n_probes,
                                      spec.n_probes_comp, kTol.beta_tilde());
            caught += detect_estimation_error(prior, alternatives_from_phase(sign.alpha * mag.phi_tilde, n, mag.peak_sigma),
                                              kTol);
        }
        return static_cast<double>(caught) / T;
    };
    const double r5 = detection(5.0);
    bool detect_ok = r5 >= 0.99;
    note(fmt("corrupted prior shifted by 5 sigma_prev: detected %.4f (required >= 0.99)", r5));
    note(fmt("  peak spacing 2 pi/n_2 = %.2f sigma_prev, reduced half-width %.2f sigma_prev: the neighbouring peak "
             "lands %.2f sigma_prev from the shifted centre",
             2 * kPi / next_n(s1, kTol, std::nullopt).n / s1, kTol.g() * (1 - 1.0 / next_n(s1, kTol, std::nullopt).n),
             std::abs(5.0 - 2 * kPi / next_n(s1, kTol, std::nullopt).n / s1)));
    for (double shift : {3.0, 3.5, 4.0, 9.5})
        note(fmt("  shift %.1f sigma_prev: detected %.4f", shift, detection(shift)));
    all = all && detect_ok;

    // Boundary geometry.
    double worst_ratio = 0.0;
    for (double bt : {0.01, 0.05, 0.001}) {
        Tolerance tol(0.01, bt);
        const double sp = 1e-6, n = nu_factor(tol) / sp, sn = sp / n, center = -0.4;
        const double edge = tol.g() * (sp - sn);
        AlternativeSet set;
        set.n = 2;
        set.sigma = sn;
        set.peaks = {{center - edge, sn, 0.5}, {center - edge + 2 * kPi / n, sn, 0.5}};
        auto sel = select_alternative(center, sp, set, tol);
        worst_ratio = std::max(worst_ratio, sel.k && *sel.k == 0 ? std::abs(sel.misclassification - bt) : 1.0);
    }
    bool ratio_ok = worst_ratio <= 1e-6;
    note(fmt("boundary weight ratio vs beta~: worst gap %.3g (<= 1e-6)", worst_ratio));
    all = all && ratio_ok;

    return report(9, all, "property suites (determinism, chi-square, fusion bound, error detection, boundary ratio)");
}

} // namespace

int main(int argc, char** argv)
{
    const std::function<bool()> criteria[] = {c1_nu_anchor,  c2_primary_coverage, c3_misclassification,
                                              c4_k_step_confidence, c5_resource_scaling, c6_dephasing,
                                              c7_magnetometry, c8_entropy, c9_properties};
    int only = 0;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    if (only < 0 || only > 9) {
        std::fprintf(stderr, "criterion must be 1..9\n");
        return 2;
    }

    int failed = 0;
    for (int c = 1; c <= 9; ++c) {
        if (only && c != only) continue;
        try {
            if (!criteria[c - 1]()) ++failed;
        } catch (const std::exception& e) {
            report(c, false, std::string("exception: ") + e.what());
            ++failed;
        }
    }
    return failed == 0 ? 0 : 1;
}
