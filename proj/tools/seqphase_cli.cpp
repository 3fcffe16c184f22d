// seqphase: Monte Carlo driver for sequential phase estimation.
//
//   seqphase coverage --trials 10000 --atoms 1000 --steps 3 --out runs/cov
//   seqphase magnetometry --scenario field.cfg --trials 200
//
// Exit codes: 0 ok, 1 unexpected failure, 2 bad configuration,
// 3 infeasible scenario, 4 I/O error.

#include <seqphase/experiment.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>

using namespace seqphase;

namespace {

struct RawOptions {
    std::map<std::string, std::string> values;
    std::string config_path;
};

void add_common(CLI::App* sub, RawOptions& raw)
{
    auto opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
        sub->add_option_function<std::string>(
            flag, [&raw, key](const std::string& v) { raw.values[key] = v; }, help);
    };
    sub->add_option("--config", raw.config_path, "key = value config file (flags override it)");
    opt("--trials", "trials", "number of independent runs");
    opt("--atoms,-N", "atoms", "probes per primary measurement");
    opt("--atoms-comp", "atoms_comp", "probes per complementary measurement");
    opt("--beta", "beta", "first-step tolerance");
    opt("--beta-tilde", "beta_tilde", "per-step tolerance for later steps");
    opt("--steps,-K", "steps", "maximum number of steps");
    opt("--epsilon", "epsilon", "per-rotation coherence factor in (0, 1]");
    opt("--seed", "seed", "experiment seed (default: $SEQPHASE_SEED or 0)");
    opt("--out,-o", "out", "output prefix for <out>.csv and <out>.summary.json");
    opt("--scenario", "scenario", "magnetometry scenario file");
    opt("--threads,-j", "threads", "worker threads");
    opt("--phi", "phi", "fixed true phase(s), comma separated");
    opt("--atoms-list", "atoms_list", "ensemble sizes for the scaling sweep");
    opt("--n-list", "n_list", "rotation counts for entropy_check / dephasing");
    opt("--max-restarts", "max_restarts", "reruns allowed after an estimation error");
    opt("--exclude", "exclude", "margin kept away from phi = 0 and phi = pi");
    opt("--field", "field", "hidden field in gauss (magnetometry)");
    opt("--n-cap", "n_cap", "upper bound on rotations per step");
}

void print_summary(const ExperimentOutput& out)
{
    const auto& s = out.summary;
    std::cout << "mode " << to_string(s.mode) << "  (" << s.wall_seconds << " s)\n";
    if (s.runs) {
        const auto& a = *s.runs;
        std::cout << "  trials " << a.trials << ": covered " << a.covered << ", missed " << a.missed
                  << ", unresolved " << a.restarted << "\n"
                  << "  coverage " << a.coverage.value << " +- " << a.coverage.std_error << " (target "
                  << a.target_confidence << ")\n"
                  << "  reruns/trial " << a.restart_rate << ", mean sigma " << a.mean_sigma
                  << ", median |err| " << a.median_abs_error << "\n";
    }
    std::cout << s.results.dump(2) << "\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sequential phase estimation with n-fold rotations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    RawOptions raw;
    const char* modes[] = {"single_run", "coverage", "scaling", "misclassification",
                           "dephasing", "magnetometry", "entropy_check"};
    for (const char* m : modes) add_common(app.add_subcommand(m, std::string("run the ") + m + " experiment"), raw);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg;
        cfg.mode = parse_mode(app.get_subcommands().front()->get_name());
        if (cfg.mode == Mode::single_run) cfg.trials = 1;
        if (const char* env = std::getenv("SEQPHASE_SEED")) apply_setting(cfg, "seed", env, "SEQPHASE_SEED");
        if (!raw.config_path.empty()) {
            cfg = load_config(raw.config_path, cfg);
            cfg.mode = parse_mode(app.get_subcommands().front()->get_name());
        }
        for (const auto& [key, value] : raw.values) apply_setting(cfg, key, value, "--" + key);

        ExperimentOutput out = run_experiment(cfg);
        print_summary(out);
        if (!cfg.output_path.empty())
            std::cout << "wrote " << cfg.output_path << ".csv and " << cfg.output_path << ".summary.json\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InfeasibleScenario& e) {
        std::cerr << "infeasible scenario: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 4;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
