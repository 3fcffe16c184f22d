#include <seqphase/experiment.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace seqphase {

namespace {

using nlohmann::json;

// RNG domain tags keep truth draws and apparatus streams from colliding.
constexpr std::uint64_t kTruthDomain = 0x7472757468ULL;  // "truth"
constexpr std::uint64_t kMaxAttempts = 1024;
constexpr double kMadToSigma = 0.6744897501960817;     // median |Z| for Z ~ N(0, 1)

const char* kModeNames[] = {"single_run", "coverage", "scaling", "misclassification",
                            "dephasing", "magnetometry", "entropy_check"};

std::string normalize_key(std::string key)
{
    std::replace(key.begin(), key.end(), '-', '_');
    return key;
}

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

[[noreturn]] void config_fail(const std::string& where, const std::string& key, const std::string& msg)
{
    std::string prefix = where.empty() ? "" : where + ": ";
    throw ConfigError(prefix + "field '" + key + "': " + msg);
}

double parse_double(const std::string& where, const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        config_fail(where, key, "expected a real number, got '" + value + "'");
    }
}

long long parse_int(const std::string& where, const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        config_fail(where, key, "expected an integer, got '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& where, const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
        unsigned long long v = std::stoull(value, &used, 0);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        config_fail(where, key, "expected a nonnegative integer, got '" + value + "'");
    }
}

std::vector<std::string> split_list(const std::string& value)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

bool parse_bool(const std::string& where, const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    config_fail(where, key, "expected true/false, got '" + value + "'");
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

template <class Fn>
void for_each_line(const std::string& text, const std::string& path, Fn&& fn)
{
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::string where = path + ":" + std::to_string(lineno);
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
        fn(normalize_key(trim(line.substr(0, eq))), trim(line.substr(eq + 1)), where);
    }
}

/// Run fn(i) for i in [0, n) on `threads` workers; fn must only touch slot i.
template <class Fn>
void parallel_for(Count n, int threads, Fn&& fn)
{
    if (threads <= 1 || n <= 1) {
        for (Count i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<Count> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&]() {
        for (;;) {
            Count i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int count = static_cast<int>(std::min<Count>(threads, n));
    pool.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

double draw_phase(Rng& rng, double margin)
{
    for (;;) {
        double phi = wrap_phase(kPi * (2.0 * rng.uniform() - 1.0));
        double a = std::abs(phi);
        if (a >= margin && kPi - a >= margin) return phi;
    }
}

double median(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

json fraction_json(const Fraction& f)
{
    return json{{"value", f.value}, {"stderr", f.std_error}};
}

double target_confidence(const Tolerance& tol, int steps)
{
    return (1.0 - tol.beta()) * std::pow(1.0 - tol.beta_tilde(), steps - 1);
}

// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

struct ProtocolBatch {
    std::vector<RunRecord> records;
    std::vector<int> attempt_aborts;  // estimation errors seen per trial (reruns + final)
};

// Protocol runs with rerun-on-estimation-error, one trial per slot.
ProtocolBatch run_protocol_trials(const ExperimentConfig& cfg, const ProtocolParams& params, Count n_probes,
                                  Count first_id, Count trials)
{
    EnsembleSpec spec = cfg.spec;
    spec.n_probes = n_probes;
    spec.seed = cfg.seed;

    ProtocolBatch batch;
    batch.records.resize(static_cast<std::size_t>(trials));
    parallel_for(trials, cfg.threads, [&](Count i) {
        const Count id = first_id + i;
        double phi;
        if (!cfg.phis.empty()) {
            phi = cfg.phis[static_cast<std::size_t>(id) % cfg.phis.size()];
        } else {
            Rng truth_rng(cfg.seed, {kTruthDomain, static_cast<std::uint64_t>(id)});
            phi = draw_phase(truth_rng, cfg.exclude_margin);
        }
        TruePhase truth(phi);
        ProtocolTrace trace;
        int attempt = 0;
        for (;; ++attempt) {
            std::uint64_t stream = static_cast<std::uint64_t>(id) * kMaxAttempts + static_cast<std::uint64_t>(attempt);
            trace = run_protocol(spec, truth, params, stream);
            if (!trace.aborted || attempt >= cfg.max_restarts) break;
        }
        batch.records[static_cast<std::size_t>(i)] = summarize_run(id, truth, trace, attempt);
    });
    return batch;
}

std::string records_csv(const std::vector<RunRecord>& records)
{
    std::string out = csv_header();
    for (const auto& r : records) out += csv_row(r);
    return out;
}

// ---- modes -----------------------------------------------------------------

void run_protocol_mode(const ExperimentConfig& cfg, ExperimentOutput& out)
{
    auto batch = run_protocol_trials(cfg, cfg.params, cfg.spec.n_probes, 0, cfg.trials);
    RunAggregate agg = aggregate_records(batch.records, cfg.params.tol, cfg.params.max_steps);
    ScalingPrediction pred = resource_scaling(cfg.params, cfg.spec.n_probes);
    out.summary.runs = agg;
    out.summary.results = json{
        {"target_confidence", agg.target_confidence},
        {"coverage_minus_target_in_stderr",
         agg.coverage.std_error > 0 ? (agg.coverage.value - agg.target_confidence) / agg.coverage.std_error : 0.0},
        {"nu", pred.nu},
        {"ideal_sigma_K", pred.delta / cfg.params.tol.g()},
    };
    out.csv = records_csv(batch.records);
}

void run_scaling_mode(const ExperimentConfig& cfg, ExperimentOutput& out)
{
    std::vector<Count> atoms = cfg.atoms_list.empty() ? std::vector<Count>{cfg.spec.n_probes} : cfg.atoms_list;
    const Tolerance& tol = cfg.params.tol;
    std::vector<RunRecord> all;
    json table = json::array();
    json slopes = json::object();
    Count next_id = 0;

    for (int k = 1; k <= cfg.params.max_steps; ++k) {
        ProtocolParams params = cfg.params;
        params.max_steps = k;
        std::vector<double> log_r, log_delta;
        for (Count n_probes : atoms) {
            auto batch = run_protocol_trials(cfg, params, n_probes, next_id, cfg.trials);
            next_id += cfg.trials;
            RunAggregate agg = aggregate_records(batch.records, tol, k);
            std::vector<double> errors;
            for (const auto& r : batch.records)
                if (!r.aborted) errors.push_back(r.abs_error);
            double delta_emp = tol.g() * median(errors) / kMadToSigma;
            ScalingPrediction pred = resource_scaling(params, n_probes);
            table.push_back(json{{"K", k},
                                 {"N", n_probes},
                                 {"R_mean", agg.mean_resources},
                                 {"delta_empirical", delta_emp},
                                 {"delta_nominal", tol.g() * agg.mean_sigma},
                                 {"delta_predicted", pred.delta},
                                 {"R_predicted_total", pred.resources_total},
                                 {"R_predicted_last", pred.resources_last},
                                 {"identity_residual",
                                  pred.delta * std::pow(pred.resources_last, k / (k + 1.0)) -
                                      tol.g() / std::pow(pred.nu, (k - 1.0) / (k + 1.0))},
                                 {"coverage", fraction_json(agg.coverage)}});
            log_r.push_back(std::log(agg.mean_resources));
            log_delta.push_back(std::log(delta_emp));
            all.insert(all.end(), batch.records.begin(), batch.records.end());
        }
        if (atoms.size() >= 2)
            slopes[std::to_string(k)] = json{{"slope", fit_slope(log_r, log_delta)}, {"target", -k / (k + 1.0)}};
    }
    out.summary.runs = aggregate_records(all, tol, cfg.params.max_steps);
    out.summary.results = json{{"table", table}, {"slopes", slopes}};
    out.csv = records_csv(all);
}

void run_misclassification_mode(const ExperimentConfig& cfg, ExperimentOutput& out)
{
    std::vector<double> phis = cfg.phis.empty() ? std::vector<double>{0.3, 0.8, 1.2} : cfg.phis;
    EnsembleSpec spec = cfg.spec;
    spec.seed = cfg.seed;
    const Tolerance& tol = cfg.params.tol;

    std::string csv = "phi,trials,errors,rate,stderr,predicted_beta_prime,predicted_stderr,z\n";
    json rows = json::array();
    for (std::size_t j = 0; j < phis.size(); ++j) {
        TruePhase truth(phis[j]);
        const int truth_sign = truth.value() >= 0.0 ? +1 : -1;
        const double phi_tilde = std::abs(truth.value());
        std::vector<unsigned char> wrong(static_cast<std::size_t>(cfg.trials), 0);
        parallel_for(cfg.trials, cfg.threads, [&](Count t) {
            Apparatus app(spec, (static_cast<std::uint64_t>(j) << 40) | static_cast<std::uint64_t>(t));
            MeasurementRecord rec = app.sample_complementary(truth, 1);
            auto cls = classify_sign(rec, phi_tilde, spec.n_probes, spec.n_probes_comp, tol.beta_tilde());
            wrong[static_cast<std::size_t>(t)] = cls.alpha != truth_sign;
        });
        Count errors = std::count(wrong.begin(), wrong.end(), 1);
        Fraction rate = make_fraction(errors, cfg.trials);
        MeasurementRecord probe;
        probe.basis = Basis::complementary_y;
        double predicted =
            classify_sign(probe, phi_tilde, spec.n_probes, spec.n_probes_comp, tol.beta_tilde()).beta_prime;
        double pred_se = std::sqrt(predicted * (1.0 - predicted) / static_cast<double>(cfg.trials));
        double z = pred_se > 0.0 ? (rate.value - predicted) / pred_se : (errors == 0 ? 0.0 : INFINITY);
        csv += fmt17(truth.value()) + "," + std::to_string(cfg.trials) + "," + std::to_string(errors) + "," +
               fmt17(rate.value) + "," + fmt17(rate.std_error) + "," + fmt17(predicted) + "," + fmt17(pred_se) +
               "," + fmt17(z) + "\n";
        rows.push_back(json{{"phi", truth.value()},
                            {"errors", errors},
                            {"rate", fraction_json(rate)},
                            {"predicted_beta_prime", predicted},
                            {"predicted_stderr", pred_se},
                            {"z", std::isfinite(z) ? json(z) : json("inf")}});
    }
    out.summary.results = json{{"phis", rows}};
    out.csv = csv;
}

void run_dephasing_mode(const ExperimentConfig& cfg, ExperimentOutput& out)
{
    const double eps = cfg.spec.epsilon;
    const Count n_probes = cfg.spec.n_probes;
    const double nc = coherence_rotation_limit(eps);
    const double phi = cfg.phis.empty() ? 1.0 : cfg.phis.front();
    EnsembleSpec spec = cfg.spec;
    spec.seed = cfg.seed;

    std::vector<Count> ns = cfg.n_list;
    if (ns.empty()) {
        Count n_max = std::clamp<Count>(static_cast<Count>(std::ceil(3.0 * nc)), 10, 200);
        for (Count n = 1; n <= n_max; ++n) ns.push_back(n);
    }

    std::string csv = "n,contrast,sigma_effective,sigma_empirical\n";
    json rows = json::array();
    Count best_n = ns.front();
    double best_sigma = INFINITY;
    TruePhase truth(phi);
    for (std::size_t j = 0; j < ns.size(); ++j) {
        const Count n = ns[j];
        const double sig = effective_sigma(n_probes, n, eps);
        if (sig < best_sigma) {
            best_sigma = sig;
            best_n = n;
        }
        std::vector<double> err(static_cast<std::size_t>(cfg.trials));
        parallel_for(cfg.trials, cfg.threads, [&](Count t) {
            Apparatus app(spec, (static_cast<std::uint64_t>(j) << 40) | static_cast<std::uint64_t>(t));
            auto rec = app.sample_primary(truth, n);
            auto mag = estimate_magnitude(rec, eps);
            auto comp = app.sample_complementary(truth, n);
            auto cls = classify_sign(comp, mag.phi_tilde, spec.n_probes, spec.n_probes_comp,
                                     cfg.params.tol.beta_tilde(), contrast(eps, n));
            double phi_n = cls.alpha * mag.phi_tilde;
            err[static_cast<std::size_t>(t)] =
                std::abs(wrapped_difference(phi_n, static_cast<double>(n) * truth.value())) / static_cast<double>(n);
        });
        double emp = median(err) / kMadToSigma;
        csv += std::to_string(n) + "," + fmt17(contrast(eps, n)) + "," + fmt17(sig) + "," + fmt17(emp) + "\n";
        rows.push_back(json{{"n", n}, {"contrast", contrast(eps, n)}, {"sigma_effective", sig}, {"sigma_empirical", emp}});
    }
    const double sigma1 = 1.0 / std::sqrt(static_cast<double>(n_probes));
    const double predicted_min = sigma1 * std::numbers::e * std::log(1.0 / eps);
    out.summary.results = json{{"table", rows},
                               {"argmin_n", best_n},
                               {"min_sigma", best_sigma},
                               {"coherence_rotation_limit", std::isfinite(nc) ? json(nc) : json("inf")},
                               {"predicted_min_sigma", predicted_min},
                               {"min_over_predicted", best_sigma / predicted_min}};
    out.csv = csv;
}

void run_magnetometry_mode(const ExperimentConfig& cfg, ExperimentOutput& out)
{
    const FieldScenario& sc = *cfg.scenario;
    const Tolerance& tol = cfg.params.tol;
    FieldPlan plan = plan_scenario(sc, tol, cfg.params.max_steps);

    std::vector<RunRecord> records(static_cast<std::size_t>(cfg.trials));
    std::vector<double> delta_b(records.size()), delta_b1(records.size()), field_err(records.size());
    parallel_for(cfg.trials, cfg.threads, [&](Count id) {
        double hidden = cfg.field ? *cfg.field : 0.0;
        if (!cfg.field) {
            Rng truth_rng(cfg.seed, {kTruthDomain, static_cast<std::uint64_t>(id)});
            hidden = sc.b_minus + (sc.b_plus - sc.b_minus) * truth_rng.uniform();
        }
        FieldEstimate est;
        int attempt = 0;
        for (;; ++attempt) {
            std::uint64_t stream = static_cast<std::uint64_t>(id) * kMaxAttempts + static_cast<std::uint64_t>(attempt);
            est = run_field_measurement(sc, hidden, tol, cfg.params.max_steps, cfg.seed, stream);
            if (!est.aborted || attempt >= cfg.max_restarts) break;
        }
        const auto i = static_cast<std::size_t>(id);
        TruePhase truth(field_to_phase(hidden, sc, plan.offset_b0, 1));
        records[i] = summarize_run(id, truth, est.trace, attempt);
        delta_b[i] = est.delta_b;
        delta_b1[i] = est.delta_b_primary;
        field_err[i] = std::abs(est.b_hat - hidden);
    });

    RunAggregate agg = aggregate_records(records, tol, plan.params.max_steps);
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    const double target = 3e-9;
    out.summary.runs = agg;
    out.summary.results = json{
        {"offset_b0", plan.offset_b0},
        {"offset_index", plan.offset_index},
        {"n_cap", plan.n_cap},
        {"estimated_steps", plan.estimated_steps},
        {"steps", plan.params.max_steps},
        {"epsilon", sc.epsilon()},
        {"mean_delta_b", mean(delta_b)},
        {"mean_delta_b_primary", mean(delta_b1)},
        {"median_field_error", median(field_err)},
        {"primary_precision_formula", primary_field_precision(sc)},
        {"coherence_precision_formula", coherence_field_precision(sc)},
        {"mean_delta_b_over_3e-9", mean(delta_b) / target},
    };
    out.csv = records_csv(records);
}

void run_entropy_mode(const ExperimentConfig& cfg, ExperimentOutput& out)
{
    std::vector<Count> ns = cfg.n_list.empty() ? std::vector<Count>{1, 2, 5, 10} : cfg.n_list;
    if (std::find(ns.begin(), ns.end(), Count{1}) == ns.end()) ns.insert(ns.begin(), 1);
    const double sigma1 = 1.0 / std::sqrt(static_cast<double>(cfg.spec.n_probes));
    const double phi_n = cfg.phis.empty() ? 0.7 : cfg.phis.front();

    double h1 = shannon_entropy(alternatives_from_phase(phi_n, 1, sigma1)).value;
    std::string csv = "n,sigma_n,entropy,entropy_minus_single,overlapping\n";
    json rows = json::array();
    double max_dev = 0.0;
    for (Count n : ns) {
        double sigma_n = sigma1 / static_cast<double>(n);
        EntropyResult h = shannon_entropy(alternatives_from_phase(phi_n, n, sigma_n));
        double dev = h.value - h1;
        if (!h.overlapping) max_dev = std::max(max_dev, std::abs(dev));
        csv += std::to_string(n) + "," + fmt17(sigma_n) + "," + fmt17(h.value) + "," + fmt17(dev) + "," +
               (h.overlapping ? "true" : "false") + "\n";
        rows.push_back(json{{"n", n}, {"sigma_n", sigma_n}, {"entropy", h.value}, {"difference", dev},
                            {"overlapping", h.overlapping}});
    }
    out.summary.results = json{{"table", rows},
                               {"single_peak_entropy", h1},
                               {"closed_form", gaussian_entropy(sigma1)},
                               {"max_abs_difference", max_dev}};
    out.csv = csv;
}

} // namespace

Mode parse_mode(const std::string& name)
{
    std::string key = normalize_key(name);
    for (int i = 0; i < 7; ++i)
        if (key == kModeNames[i]) return static_cast<Mode>(i);
    throw ConfigError("unknown mode '" + name + "'");
}

std::string to_string(Mode mode)
{
    return kModeNames[static_cast<int>(mode)];
}

void ExperimentConfig::validate() const
{
    auto fail = [](const std::string& key, const std::string& msg) { config_fail("", key, msg); };
    if (trials < 1) fail("trials", "must be >= 1");
    if (threads < 1) fail("threads", "must be >= 1");
    if (max_restarts < 0 || max_restarts >= static_cast<int>(kMaxAttempts)) fail("max_restarts", "must lie in [0, 1023]");
    if (!(exclude_margin >= 0.0 && exclude_margin < kPi / 2)) fail("exclude", "must lie in [0, pi/2)");
    try {
        spec.validate();
        params.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    for (Count n : atoms_list)
        if (n < 1) fail("atoms_list", "entries must be >= 1");
    for (Count n : n_list)
        if (n < 1) fail("n_list", "entries must be >= 1");
    if (mode == Mode::magnetometry && !scenario) fail("scenario", "required for magnetometry mode");
    if (mode == Mode::dephasing && spec.epsilon >= 1.0 && n_list.empty())
        fail("epsilon", "dephasing mode needs epsilon < 1 (or an explicit n_list)");
    if (scenario) {
        try {
            scenario->validate();
        } catch (const DomainError& e) {
            throw ConfigError(std::string("scenario: ") + e.what());
        }
        if (field && !(*field >= scenario->b_minus && *field <= scenario->b_plus))
            fail("field", "must lie inside [b_minus, b_plus]");
    }
}

void apply_setting(ExperimentConfig& cfg, const std::string& raw_key, const std::string& value,
                   const std::string& where)
{
    const std::string key = normalize_key(raw_key);
    auto tol_beta = cfg.params.tol.beta(), tol_beta_tilde = cfg.params.tol.beta_tilde();
    auto set_tol = [&](double b, double bt) {
        try {
            cfg.params.tol = Tolerance(b, bt);
        } catch (const DomainError& e) {
            config_fail(where, key, e.what());
        }
    };

    if (key == "mode") {
        try {
            cfg.mode = parse_mode(value);
        } catch (const ConfigError& e) {
            config_fail(where, key, e.what());
        }
    } else if (key == "trials") {
        cfg.trials = parse_int(where, key, value);
    } else if (key == "atoms") {
        cfg.spec.n_probes = parse_int(where, key, value);
    } else if (key == "atoms_comp") {
        cfg.spec.n_probes_comp = parse_int(where, key, value);
    } else if (key == "beta") {
        set_tol(parse_double(where, key, value), tol_beta_tilde);
    } else if (key == "beta_tilde") {
        set_tol(tol_beta, parse_double(where, key, value));
    } else if (key == "steps") {
        cfg.params.max_steps = static_cast<int>(parse_int(where, key, value));
    } else if (key == "epsilon") {
        cfg.spec.epsilon = parse_double(where, key, value);
    } else if (key == "seed") {
        cfg.seed = parse_u64(where, key, value);
        cfg.spec.seed = cfg.seed;
    } else if (key == "out") {
        cfg.output_path = value;
    } else if (key == "scenario") {
        try {
            cfg.scenario = load_scenario(value);
        } catch (const IoError& e) {
            config_fail(where, key, e.what());
        }
    } else if (key == "threads") {
        cfg.threads = static_cast<int>(parse_int(where, key, value));
    } else if (key == "phi") {
        cfg.phis.clear();
        for (const auto& item : split_list(value)) cfg.phis.push_back(parse_double(where, key, item));
    } else if (key == "atoms_list") {
        cfg.atoms_list.clear();
        for (const auto& item : split_list(value)) cfg.atoms_list.push_back(parse_int(where, key, item));
    } else if (key == "n_list") {
        cfg.n_list.clear();
        for (const auto& item : split_list(value)) cfg.n_list.push_back(parse_int(where, key, item));
    } else if (key == "exclude") {
        cfg.exclude_margin = parse_double(where, key, value);
    } else if (key == "max_restarts") {
        cfg.max_restarts = static_cast<int>(parse_int(where, key, value));
    } else if (key == "n_cap") {
        cfg.params.n_cap = parse_int(where, key, value);
    } else if (key == "target_precision") {
        cfg.params.target_precision = parse_double(where, key, value);
    } else if (key == "count_complementary") {
        cfg.params.count_complementary = parse_bool(where, key, value);
    } else if (key == "field") {
        cfg.field = parse_double(where, key, value);
    } else {
        config_fail(where, key, "unknown setting");
    }
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base)
{
    std::string text = read_file(path);
    for_each_line(text, path, [&base](const std::string& key, const std::string& value, const std::string& where) {
        apply_setting(base, key, value, where);
    });
    return base;
}

FieldScenario load_scenario(const std::string& path)
{
    FieldScenario sc;
    std::string text = read_file(path);
    for_each_line(text, path, [&sc](const std::string& key, const std::string& value, const std::string& where) {
        if (key == "b_minus") sc.b_minus = parse_double(where, key, value);
        else if (key == "b_plus") sc.b_plus = parse_double(where, key, value);
        else if (key == "mu") sc.mu = parse_double(where, key, value);
        else if (key == "tau1") sc.tau1 = parse_double(where, key, value);
        else if (key == "tau_c") sc.tau_c = parse_double(where, key, value);
        else if (key == "atoms") sc.n_probes = parse_int(where, key, value);
        else if (key == "atoms_comp") sc.n_probes_comp = parse_int(where, key, value);
        else config_fail(where, key, "unknown scenario setting");
    });
    try {
        sc.validate();
    } catch (const DomainError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return sc;
}

Fraction make_fraction(Count hits, Count total)
{
    Fraction f;
    if (total <= 0) return f;
    f.value = static_cast<double>(hits) / static_cast<double>(total);
    f.std_error = std::sqrt(f.value * (1.0 - f.value) / static_cast<double>(total));
    return f;
}

RunRecord summarize_run(Count trial_id, const TruePhase& truth, const ProtocolTrace& trace, int restarts)
{
    RunRecord rec;
    rec.trial_id = trial_id;
    rec.true_phi = truth.value();
    rec.steps = static_cast<int>(trace.steps.size());
    const PhaseEstimate& fin = trace.final_estimate();
    rec.phi_hat = fin.phi_hat;
    rec.sigma = fin.sigma;
    rec.abs_error = wrapped_distance(truth.value(), fin.phi_hat);
    rec.rotations = trace.rotations();
    rec.resources = trace.resources.total;
    rec.flags = trace.flags;
    rec.beta_prime_max = trace.beta_prime_max;
    rec.aborted = trace.aborted;
    rec.restarts = restarts;
    return rec;
}

RunAggregate aggregate_records(const std::vector<RunRecord>& records, const Tolerance& tol, int steps)
{
    RunAggregate agg;
    agg.trials = static_cast<Count>(records.size());
    agg.target_confidence = target_confidence(tol, steps);

    Count ambiguous = 0, degenerate = 0, high_risk = 0, attempt_errors = 0, completed = 0;
    double sigma_sum = 0.0, sq_err = 0.0, resources = 0.0;
    std::vector<double> errors;
    for (const auto& r : records) {
        agg.restarts_total += r.restarts;
        attempt_errors += r.restarts + (r.aborted ? 1 : 0);
        if (r.flags.has(Flag::ambiguous)) ++ambiguous;
        if (r.flags.has(Flag::degenerate)) ++degenerate;
        if (r.flags.has(Flag::high_risk_classifier)) ++high_risk;
        agg.beta_prime_max = std::max(agg.beta_prime_max, r.beta_prime_max);
        resources += static_cast<double>(r.resources);
        if (r.aborted) {
            ++agg.restarted;
            continue;
        }
        ++completed;
        if (r.abs_error <= tol.g() * r.sigma) ++agg.covered;
        else ++agg.missed;
        sigma_sum += r.sigma;
        sq_err += r.abs_error * r.abs_error;
        errors.push_back(r.abs_error);
    }

    agg.coverage = make_fraction(agg.covered, agg.trials);
    agg.miss = make_fraction(agg.missed, agg.trials);
    agg.restart = make_fraction(agg.restarted, agg.trials);
    agg.ambiguity = make_fraction(ambiguous, agg.trials);
    agg.degenerate = make_fraction(degenerate, agg.trials);
    agg.high_risk = make_fraction(high_risk, agg.trials);
    agg.estimation_error = make_fraction(attempt_errors, agg.trials + agg.restarts_total);
    if (agg.trials > 0) {
        agg.restart_rate = static_cast<double>(agg.restarts_total) / static_cast<double>(agg.trials);
        agg.mean_resources = resources / static_cast<double>(agg.trials);
    }
    if (completed > 0) {
        agg.mean_sigma = sigma_sum / static_cast<double>(completed);
        agg.rms_abs_error = std::sqrt(sq_err / static_cast<double>(completed));
        agg.median_abs_error = median(std::move(errors));
    }
    return agg;
}

RunAggregate aggregate(const std::vector<ProtocolTrace>& traces, const std::vector<TruePhase>& truth,
                       const Tolerance& tol, int steps)
{
    if (traces.size() != truth.size()) throw DomainError("aggregate: traces and truths differ in length");
    std::vector<RunRecord> records;
    records.reserve(traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i)
        records.push_back(summarize_run(static_cast<Count>(i), truth[i], traces[i]));
    return aggregate_records(records, tol, steps);
}

json to_json(const RunAggregate& agg)
{
    return json{{"trials", agg.trials},
                {"covered", agg.covered},
                {"missed", agg.missed},
                {"restarted", agg.restarted},
                {"coverage", fraction_json(agg.coverage)},
                {"miss", fraction_json(agg.miss)},
                {"restart", fraction_json(agg.restart)},
                {"target_confidence", agg.target_confidence},
                {"restarts_total", agg.restarts_total},
                {"restart_rate", agg.restart_rate},
                {"ambiguity", fraction_json(agg.ambiguity)},
                {"estimation_error_per_attempt", fraction_json(agg.estimation_error)},
                {"degenerate", fraction_json(agg.degenerate)},
                {"high_risk_classifier", fraction_json(agg.high_risk)},
                {"mean_sigma", agg.mean_sigma},
                {"median_abs_error", agg.median_abs_error},
                {"rms_abs_error", agg.rms_abs_error},
                {"mean_resources", agg.mean_resources},
                {"beta_prime_max", agg.beta_prime_max}};
}

json to_json(const ExperimentConfig& cfg)
{
    json j{{"mode", to_string(cfg.mode)},
           {"trials", cfg.trials},
           {"atoms", cfg.spec.n_probes},
           {"atoms_comp", cfg.spec.n_probes_comp},
           {"epsilon", cfg.spec.epsilon},
           {"beta", cfg.params.tol.beta()},
           {"beta_tilde", cfg.params.tol.beta_tilde()},
           {"steps", cfg.params.max_steps},
           {"seed", cfg.seed},
           {"threads", cfg.threads},
           {"phi", cfg.phis},
           {"atoms_list", cfg.atoms_list},
           {"n_list", cfg.n_list},
           {"exclude", cfg.exclude_margin},
           {"max_restarts", cfg.max_restarts},
           {"count_complementary", cfg.params.count_complementary}};
    if (cfg.params.n_cap) j["n_cap"] = *cfg.params.n_cap;
    if (cfg.params.target_precision) j["target_precision"] = *cfg.params.target_precision;
    if (cfg.field) j["field"] = *cfg.field;
    if (cfg.scenario) {
        const auto& sc = *cfg.scenario;
        j["scenario"] = json{{"b_minus", sc.b_minus}, {"b_plus", sc.b_plus}, {"mu", sc.mu},
                             {"tau1", sc.tau1},       {"tau_c", sc.tau_c},   {"atoms", sc.n_probes},
                             {"atoms_comp", sc.n_probes_comp}};
    }
    return j;
}

json ExperimentSummary::to_json() const
{
    json j{{"mode", seqphase::to_string(mode)},
           {"version", version},
           {"wall_seconds", wall_seconds},
           {"config", config},
           {"results", results}};
    if (runs) j["runs"] = seqphase::to_json(*runs);
    return j;
}

std::string csv_header()
{
    return "trial_id,true_phi,K,final_phi_hat,final_sigma,abs_wrapped_error,n_i,R_total,flags,beta_prime_max\n";
}

std::string csv_row(const RunRecord& rec)
{
    std::string n_list;
    for (std::size_t i = 0; i < rec.rotations.size(); ++i) {
        if (i) n_list += ';';
        n_list += std::to_string(rec.rotations[i]);
    }
    return std::to_string(rec.trial_id) + "," + fmt17(rec.true_phi) + "," + std::to_string(rec.steps) + "," +
           fmt17(rec.phi_hat) + "," + fmt17(rec.sigma) + "," + fmt17(rec.abs_error) + "," + n_list + "," +
           std::to_string(rec.resources) + "," + rec.flags.to_string() + "," + fmt17(rec.beta_prime_max) + "\n";
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    auto start = std::chrono::steady_clock::now();

    ExperimentOutput out;
    out.summary.mode = cfg.mode;
    out.summary.config = to_json(cfg);
    switch (cfg.mode) {
    case Mode::single_run:
    case Mode::coverage: run_protocol_mode(cfg, out); break;
    case Mode::scaling: run_scaling_mode(cfg, out); break;
    case Mode::misclassification: run_misclassification_mode(cfg, out); break;
    case Mode::dephasing: run_dephasing_mode(cfg, out); break;
    case Mode::magnetometry: run_magnetometry_mode(cfg, out); break;
    case Mode::entropy_check: run_entropy_mode(cfg, out); break;
    }
    out.summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!cfg.output_path.empty()) {
        write_file(cfg.output_path + ".csv", out.csv);
        write_file(cfg.output_path + ".summary.json", out.summary.to_json().dump(2) + "\n");
    }
    return out;
}

} // namespace seqphase
