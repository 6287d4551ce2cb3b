#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "twozone/commands.hpp"
#include "twozone/coupling.hpp"
#include "twozone/errors.hpp"
#include "twozone/gaussian.hpp"
#include "twozone/montecarlo.hpp"
#include "twozone/pricing.hpp"
#include "twozone/scenario_io.hpp"

namespace py = pybind11;
using namespace twozone;

namespace {

Zone zone_of(const std::string& s) {
  if (s == "A" || s == "a") return Zone::A;
  if (s == "B" || s == "b") return Zone::B;
  throw std::invalid_argument("market must be 'A' or 'B'");
}

PtrDirection direction_of(const std::string& s) {
  if (s == "both") return PtrDirection::Both;
  if (s == "AtoB") return PtrDirection::AtoB;
  if (s == "BtoA") return PtrDirection::BtoA;
  throw std::invalid_argument("direction must be 'both', 'AtoB' or 'BtoA'");
}

py::dict outcome_dict(const SpotOutcome& o) {
  py::dict d;
  d["flow"] = o.flow + 0.0;
  d["regime"] = std::string(regime_name(o.regime));
  d["rank_a"] = o.key.k;
  d["rank_b"] = o.key.l;
  d["technology_a"] = o.key.order.perm_a[o.key.k];
  d["technology_b"] = o.key.order.perm_b[o.key.l];
  d["fuel_order"] = o.key.order.fuel_order;
  d["price_a"] = o.price_a;
  d["price_b"] = o.price_b;
  return d;
}

StateVector state_of(const ScenarioSpec& s, const std::optional<Eigen::VectorXd>& v, double t) {
  if (!v) return initial_state(s);
  if (v->size() != s.state_dim()) throw std::invalid_argument("state must have fuel_count + 2 entries");
  return StateVector::unpack(*v, t);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-zone coupled electricity price model";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericsError>(m, "NumericsError", PyExc_RuntimeError);
  // Registered last so it runs first: attaches the offending field path.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      py::object type = py::module_::import("twozone._core").attr("ValidationError");
      py::object inst = type(e.what());
      inst.attr("field") = e.field();
      PyErr_SetObject(type.ptr(), inst.ptr());
    }
  });

  py::class_<ScenarioSpec>(m, "Scenario")
      .def_static("from_file", &load_scenario, py::arg("path"))
      .def_static("from_json", [](const std::string& text) { return parse_scenario(text); }, py::arg("text"))
      .def("to_json", &dump_scenario)
      .def_property_readonly("fuel_count", &ScenarioSpec::fuel_count)
      .def_property_readonly("fuel_names",
                             [](const ScenarioSpec& s) {
                               std::vector<std::string> names;
                               for (const auto& f : s.fuels) names.push_back(f.name);
                               return names;
                             })
      .def_readwrite("valuation_time", &ScenarioSpec::valuation_time)
      .def_readwrite("maturity", &ScenarioSpec::maturity)
      .def_readwrite("seed", &ScenarioSpec::seed)
      .def_property_readonly("flow_min", [](const ScenarioSpec& s) { return s.coupling.flow_min; })
      .def_property_readonly("flow_max", [](const ScenarioSpec& s) { return s.coupling.flow_max; })
      .def(
          "with_capacity",
          [](ScenarioSpec s, double flow_max, std::optional<double> flow_min) {
            s.coupling.flow_max = flow_max;
            s.coupling.flow_min = flow_min ? *flow_min : -flow_max;
            validate_scenario(s);
            return s;
          },
          py::arg("flow_max"), py::arg("flow_min") = py::none(), "Copy with new transfer bounds in MW.")
      .def("initial_state", [](const ScenarioSpec& s) { return initial_state(s).packed(); })
      .def("__eq__", [](const ScenarioSpec& a, const ScenarioSpec& b) { return a == b; });

  py::class_<PriceDecomposition>(m, "Price")
      .def_readonly("total", &PriceDecomposition::total)
      .def_readonly("quadrature_error", &PriceDecomposition::quadrature_error)
      .def_property_readonly("events",
                             [](const PriceDecomposition& d) {
                               py::list out;
                               for (const auto& e : d.per_event) {
                                 py::dict row;
                                 row["fuel_order"] = e.key.order.fuel_order;
                                 row["rank_a"] = e.key.k;
                                 row["rank_b"] = e.key.l;
                                 row["regime"] = std::string(regime_name(e.key.regime));
                                 row["contribution"] = e.contribution;
                                 row["probability"] = e.probability;
                                 out.append(row);
                               }
                               return out;
                             })
      .def("__float__", [](const PriceDecomposition& d) { return d.total; })
      .def("__repr__", [](const PriceDecomposition& d) {
        std::ostringstream s;
        s.precision(9);
        s << "Price(total=" << d.total << ", quadrature_error=" << d.quadrature_error << ")";
        return s.str();
      });

  py::class_<StructuralPricer>(m, "Pricer")
      .def(py::init([](const ScenarioSpec& s, std::optional<Eigen::VectorXd> state, std::optional<double> t,
                       std::optional<double> maturity) {
             const double t0 = t.value_or(s.valuation_time);
             return StructuralPricer(s, state_of(s, state, t0), t0, maturity.value_or(s.maturity));
           }),
           py::arg("scenario"), py::arg("state") = py::none(), py::arg("t") = py::none(),
           py::arg("maturity") = py::none())
      .def("forward", [](StructuralPricer& p, const std::string& z) { return p.forward(zone_of(z)); },
           py::arg("market"))
      .def("call", [](StructuralPricer& p, const std::string& z, double k) { return p.call(zone_of(z), k); },
           py::arg("market"), py::arg("strike"))
      .def("transmission_right",
           [](StructuralPricer& p, const std::string& d) { return p.transmission_right(direction_of(d)); },
           py::arg("direction") = "both")
      .def("coupling_rate", &StructuralPricer::coupling_rate)
      .def("event_probabilities", &StructuralPricer::event_probabilities)
      .def_property_readonly("degenerate", &StructuralPricer::degenerate)
      .def_property_readonly("event_count", [](const StructuralPricer& p) { return p.events().size(); });

  m.def(
      "spot",
      [](const ScenarioSpec& s, std::optional<Eigen::VectorXd> state, std::optional<double> t) {
        if (state) return outcome_dict(spot_prices(state_of(s, state, t.value_or(s.maturity)), s, t.value_or(s.maturity)));
        const auto mean = conditional_law(initial_state(s), s.valuation_time, s.maturity, s).mean;
        return outcome_dict(spot_prices(StateVector::unpack(mean, s.maturity), s, s.maturity));
      },
      py::arg("scenario"), py::arg("state") = py::none(), py::arg("t") = py::none(),
      "Coupled spot outcome at a state (log fuels, demand A, demand B); defaults to the expected terminal state.");

  m.def(
      "brute_force_flow",
      [](const ScenarioSpec& s, const Eigen::VectorXd& state, double t, double step) {
        return brute_force_flow(state_of(s, state, t), s, t, step);
      },
      py::arg("scenario"), py::arg("state"), py::arg("t"), py::arg("grid_step") = 1.0);

  m.def(
      "sample_terminal",
      [](const ScenarioSpec& s, std::int64_t n, std::optional<std::uint64_t> seed) {
        return sample_terminal(s, initial_state(s), s.valuation_time, s.maturity, n, seed.value_or(s.seed)).states;
      },
      py::arg("scenario"), py::arg("n"), py::arg("seed") = py::none(), "Terminal states, one row per sample.");

  m.def(
      "monte_carlo",
      [](const ScenarioSpec& s, std::int64_t n, std::optional<std::uint64_t> seed, double strike) {
        const auto batch = sample_terminal(s, initial_state(s), s.valuation_time, s.maturity, n, seed.value_or(s.seed));
        const auto est = mc_price({Payoff::forward(Zone::A), Payoff::forward(Zone::B), Payoff::ptr(),
                                   Payoff::call(Zone::A, strike), Payoff::call(Zone::B, strike),
                                   Payoff::coupling_indicator()},
                                  batch, s);
        const char* names[] = {"forward_a", "forward_b", "ptr", "call_a", "call_b", "coupling_rate"};
        py::dict out;
        for (int i = 0; i < 6; ++i) out[names[i]] = py::make_tuple(est[i].value, est[i].standard_error);
        return out;
      },
      py::arg("scenario"), py::arg("n"), py::arg("seed") = py::none(), py::arg("strike") = 50.0,
      "Monte Carlo (value, standard error) of the standard payoffs.");

  m.def(
      "margrabe",
      [](double forward_a, double forward_b, double vol_a, double vol_b, double correlation, double tau) {
        SpotMoments mm;
        mm.forward_a = forward_a;
        mm.forward_b = forward_b;
        mm.vol_a = vol_a;
        mm.vol_b = vol_b;
        mm.correlation = correlation;
        return margrabe_value(mm, tau);
      },
      py::arg("forward_a"), py::arg("forward_b"), py::arg("vol_a"), py::arg("vol_b"), py::arg("correlation"),
      py::arg("tau"), "Sum of the two exchange options under joint lognormal spots.");

  m.def(
      "rectangle_probability",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& lower,
         const Eigen::VectorXd& upper, double tolerance) {
        QuadratureOptions q;
        q.abs_tolerance = tolerance;
        const auto r = rectangle_probability(GaussianLaw{mean, cov}, lower, upper, q);
        return py::make_tuple(r.value, r.error);
      },
      py::arg("mean"), py::arg("covariance"), py::arg("lower"), py::arg("upper"), py::arg("tolerance") = 1e-4,
      "P(lower <= X <= upper) for X ~ N(mean, covariance), with its error estimate.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a CLI command in-process; returns (exit_code, stdout, stderr).");
}
