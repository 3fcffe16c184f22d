#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <seqphase/experiment.hpp>
#include <seqphase/magnetometry.hpp>
#include <seqphase/protocol.hpp>
#include <seqphase/simulator.hpp>
#include <seqphase/stats.hpp>

#include <string>
#include <vector>

namespace py = pybind11;
using namespace seqphase;

namespace {

py::dict trace_dict(const ProtocolTrace& t)
{
    py::dict d;
    const auto& est = t.final_estimate();
    d["phi_hat"] = est.phi_hat;
    d["sigma"] = est.sigma;
    d["confidence"] = est.confidence;
    d["steps"] = static_cast<int>(t.steps.size());
    d["rotations"] = t.rotations();
    d["resources"] = t.resources.total;
    d["flags"] = t.flags.to_string();
    d["aborted"] = t.aborted;
    d["beta_prime_max"] = t.beta_prime_max;
    py::list steps;
    for (const auto& s : t.steps) {
        py::dict sd;
        sd["n"] = s.n;
        sd["n_plus"] = s.record.n_plus;
        sd["n_minus"] = s.record.n_minus;
        sd["phi_hat"] = s.estimate.phi_hat;
        sd["sigma"] = s.estimate.sigma;
        sd["beta_prime"] = s.beta_prime;
        sd["flags"] = s.flags.to_string();
        steps.append(sd);
    }
    d["trace"] = steps;
    return d;
}

ProtocolParams make_params(double beta, double beta_tilde, int steps, std::optional<double> target,
                           std::optional<Count> n_cap, bool count_comp)
{
    ProtocolParams p;
    p.tol = Tolerance(beta, beta_tilde);
    p.max_steps = steps;
    p.target_precision = target;
    p.n_cap = n_cap;
    p.count_complementary = count_comp;
    p.validate();
    return p;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Sequential ensemble phase estimation";
    m.attr("__version__") = kVersion;

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<InfeasibleScenario>(m, "InfeasibleScenario", PyExc_ValueError);

    py::class_<Tolerance>(m, "Tolerance")
        .def(py::init<double, double>(), py::arg("beta") = 0.01, py::arg("beta_tilde") = 0.01)
        .def_property_readonly("beta", &Tolerance::beta)
        .def_property_readonly("beta_tilde", &Tolerance::beta_tilde)
        .def_property_readonly("g", &Tolerance::g)
        .def("__repr__", [](const Tolerance& t) {
            return "Tolerance(beta=" + std::to_string(t.beta()) + ", beta_tilde=" + std::to_string(t.beta_tilde()) +
                   ")";
        });

    m.def("erf", &seqphase::erf, py::arg("x"));
    m.def("g_of_beta", &g_of_beta, py::arg("beta"));
    m.def(
        "nu_factor", [](double beta, double beta_tilde) { return nu_factor(Tolerance(beta, beta_tilde)); },
        py::arg("beta") = 0.01, py::arg("beta_tilde") = 0.01);
    m.def(
        "nu_factor_asymptotic",
        [](double beta, double beta_tilde) { return nu_factor_asymptotic(Tolerance(beta, beta_tilde)); },
        py::arg("beta") = 0.01, py::arg("beta_tilde") = 0.01);

    m.def(
        "posterior_p",
        [](Count n_plus, Count n_minus) {
            auto p = posterior_p(n_plus, n_minus);
            py::dict d;
            d["s_z"] = p.s_z;
            d["sigma"] = p.sigma;
            d["degenerate"] = p.degenerate;
            d["unreliable"] = p.unreliable;
            return d;
        },
        py::arg("n_plus"), py::arg("n_minus"));

    m.def(
        "alternatives",
        [](double phi_n, Count n, double sigma) {
            auto a = alternatives_from_phase(phi_n, n, sigma);
            std::vector<double> centers;
            for (const auto& p : a.peaks) centers.push_back(p.center);
            return centers;
        },
        py::arg("phi_n"), py::arg("n"), py::arg("sigma"), "Peak centers of the n-fold angle mixture.");

    m.def(
        "shannon_entropy",
        [](double phi_n, Count n, double sigma) {
            return shannon_entropy(alternatives_from_phase(phi_n, n, sigma)).value;
        },
        py::arg("phi_n"), py::arg("n"), py::arg("sigma"));
    m.def("gaussian_entropy", &gaussian_entropy, py::arg("sigma"));

    m.def("contrast", &contrast, py::arg("epsilon"), py::arg("n"));
    m.def("effective_sigma", &effective_sigma, py::arg("n_probes"), py::arg("n"), py::arg("epsilon"));
    m.def("coherence_rotation_limit", &coherence_rotation_limit, py::arg("epsilon"));

    m.def(
        "sample",
        [](double phi, Count n, Count n_probes, double epsilon, std::uint64_t seed, std::uint64_t stream,
           bool complementary) {
            EnsembleSpec spec;
            spec.n_probes = n_probes;
            spec.n_probes_comp = n_probes;
            spec.epsilon = epsilon;
            spec.seed = seed;
            spec.validate();
            Apparatus app(spec, stream);
            auto r = complementary ? app.sample_complementary(TruePhase(phi), n) : app.sample_primary(TruePhase(phi), n);
            return py::make_tuple(r.n_plus, r.n_minus);
        },
        py::arg("phi"), py::arg("n") = 1, py::arg("n_probes") = 1000, py::arg("epsilon") = 1.0,
        py::arg("seed") = 0, py::arg("stream") = 0, py::arg("complementary") = false,
        "Draw (N+, N-) for one n-fold exposure.");

    m.def(
        "run_protocol",
        [](double phi, Count n_probes, Count n_probes_comp, double epsilon, double beta, double beta_tilde,
           int steps, std::optional<double> target_precision, std::optional<Count> n_cap, bool count_complementary,
           std::uint64_t seed, std::uint64_t stream) {
            EnsembleSpec spec;
            spec.n_probes = n_probes;
            spec.n_probes_comp = n_probes_comp;
            spec.epsilon = epsilon;
            spec.seed = seed;
            spec.validate();
            auto params = make_params(beta, beta_tilde, steps, target_precision, n_cap, count_complementary);
            ProtocolTrace t;
            {
                py::gil_scoped_release release;
                t = run_protocol(spec, TruePhase(phi), params, stream);
            }
            return trace_dict(t);
        },
        py::arg("phi"), py::arg("n_probes") = 1000, py::arg("n_probes_comp") = 1000, py::arg("epsilon") = 1.0,
        py::arg("beta") = 0.01, py::arg("beta_tilde") = 0.01, py::arg("steps") = 3,
        py::arg("target_precision") = py::none(), py::arg("n_cap") = py::none(),
        py::arg("count_complementary") = false, py::arg("seed") = 0, py::arg("stream") = 0);

    m.def(
        "resource_scaling",
        [](int steps, Count n_probes, double beta, double beta_tilde) {
            auto s = resource_scaling(make_params(beta, beta_tilde, steps, std::nullopt, std::nullopt, false),
                                      n_probes);
            py::dict d;
            d["nu"] = s.nu;
            d["sigma1"] = s.sigma1;
            d["rotations"] = s.rotations;
            d["resources"] = s.resources;
            d["resources_total"] = s.resources_total;
            d["resources_last"] = s.resources_last;
            d["delta"] = s.delta;
            d["delta_closed_form"] = s.delta_closed_form;
            d["standard_repetitions"] = s.standard_repetitions;
            d["kitaev_steps"] = s.kitaev_steps;
            return d;
        },
        py::arg("steps"), py::arg("n_probes") = 1000, py::arg("beta") = 0.01, py::arg("beta_tilde") = 0.01);
    m.def(
        "steps_for_precision",
        [](double delta, Count n_probes, double beta, double beta_tilde) {
            return steps_for_precision(delta, n_probes, Tolerance(beta, beta_tilde));
        },
        py::arg("delta"), py::arg("n_probes") = 1000, py::arg("beta") = 0.01, py::arg("beta_tilde") = 0.01);

    py::class_<FieldScenario>(m, "FieldScenario")
        .def(py::init([](double b_minus, double b_plus, double tau1, double tau_c, Count n_probes, double mu) {
                 FieldScenario sc;
                 sc.b_minus = b_minus;
                 sc.b_plus = b_plus;
                 sc.tau1 = tau1;
                 sc.tau_c = tau_c;
                 sc.n_probes = n_probes;
                 sc.mu = mu;
                 sc.validate();
                 return sc;
             }),
             py::arg("b_minus") = 0.0, py::arg("b_plus") = 0.5, py::arg("tau1") = 1e-6, py::arg("tau_c") = 1.0,
             py::arg("n_probes") = 1000, py::arg("mu") = constants::kBohrMagneton)
        .def_readonly("b_minus", &FieldScenario::b_minus)
        .def_readonly("b_plus", &FieldScenario::b_plus)
        .def_readonly("tau1", &FieldScenario::tau1)
        .def_readonly("tau_c", &FieldScenario::tau_c)
        .def_readonly("n_probes", &FieldScenario::n_probes)
        .def_readonly("mu", &FieldScenario::mu)
        .def_property_readonly("phase_per_gauss", &FieldScenario::phase_per_gauss)
        .def_property_readonly("epsilon", &FieldScenario::epsilon)
        .def_property_readonly("primary_precision", &primary_field_precision)
        .def_property_readonly("coherence_precision", &coherence_field_precision);

    m.def(
        "plan_scenario",
        [](const FieldScenario& sc, int steps, double beta, double beta_tilde) {
            auto p = plan_scenario(sc, Tolerance(beta, beta_tilde), steps);
            py::dict d;
            d["offset_b0"] = p.offset_b0;
            d["offset_index"] = p.offset_index;
            d["n_cap"] = p.n_cap;
            d["estimated_steps"] = p.estimated_steps;
            d["steps"] = p.params.max_steps;
            return d;
        },
        py::arg("scenario"), py::arg("steps") = 5, py::arg("beta") = 0.01, py::arg("beta_tilde") = 0.01);

    m.def(
        "measure_field",
        [](const FieldScenario& sc, double hidden_b, int steps, double beta, double beta_tilde, std::uint64_t seed,
           std::uint64_t stream) {
            FieldEstimate e;
            {
                py::gil_scoped_release release;
                e = run_field_measurement(sc, hidden_b, Tolerance(beta, beta_tilde), steps, seed, stream);
            }
            py::dict d;
            d["b_hat"] = e.b_hat;
            d["delta_b"] = e.delta_b;
            d["delta_b_primary"] = e.delta_b_primary;
            d["steps_used"] = e.steps_used;
            d["offset_b0"] = e.offset_b0;
            d["aborted"] = e.aborted;
            d["rotations"] = e.trace.rotations();
            d["flags"] = e.trace.flags.to_string();
            return d;
        },
        py::arg("scenario"), py::arg("hidden_b"), py::arg("steps") = 5, py::arg("beta") = 0.01,
        py::arg("beta_tilde") = 0.01, py::arg("seed") = 0, py::arg("stream") = 0);

    m.def(
        "_run_experiment",
        [](const std::vector<std::pair<std::string, std::string>>& settings) {
            ExperimentConfig cfg;
            for (const auto& [k, v] : settings) apply_setting(cfg, k, v, "argument");
            cfg.validate();
            ExperimentOutput out;
            {
                py::gil_scoped_release release;
                out = run_experiment(cfg);
            }
            return py::make_tuple(out.summary.to_json().dump(), out.csv);
        },
        py::arg("settings"));
}
