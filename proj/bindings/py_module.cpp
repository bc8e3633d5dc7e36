#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <vector>

#include "impm/config.hpp"
#include "impm/gimp.hpp"
#include "impm/materials.hpp"
#include "impm/norsand.hpp"
#include "impm/scenarios.hpp"
#include "impm/stress_point.hpp"
#include "impm/tape.hpp"

namespace py = pybind11;
using impm::ad::Tape;
using impm::ad::Var;

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

impm::Mat3d to_mat(const Mat3& m) {
  impm::Mat3d out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = m[i][j];
  return out;
}

Mat3 from_mat(const impm::Mat3d& m) {
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = m(i, j);
  return out;
}

impm::ShapeFunctionKind kind_from(const std::string& name) {
  if (name == "linear") return impm::ShapeFunctionKind::linear;
  if (name == "gimp") return impm::ShapeFunctionKind::gimp;
  if (name == "quadratic-bspline") return impm::ShapeFunctionKind::quadratic_bspline;
  if (name == "cubic-bspline") return impm::ShapeFunctionKind::cubic_bspline;
  throw impm::ConfigError("unknown shape function kind: " + name);
}

py::dict report_to_dict(const impm::RunReport& rep) {
  py::dict d;
  d["scenario"] = rep.scenario;
  d["steps"] = rep.steps;
  d["wall_s"] = rep.wall_s;
  d["outputs"] = rep.outputs;
  py::list checks;
  for (const auto& c : rep.checks) {
    py::dict cd;
    cd["name"] = c.name;
    cd["measured"] = c.measured;
    cd["expected"] = c.expected;
    cd["tol"] = c.tol;
    cd["pass"] = c.pass;
    checks.append(cd);
  }
  d["checks"] = checks;
  d["all_pass"] = rep.all_pass();
  return d;
}

}  // namespace

PYBIND11_MODULE(impm, m) {
  m.doc() = "implicit MPM engine with reverse-mode differentiated Jacobians";

  py::register_exception<impm::ConfigError>(m, "ConfigError");
  py::register_exception<impm::NonConvergenceError>(m, "NonConvergenceError");
  py::register_exception<impm::DomainError>(m, "DomainError");

  // --- reverse-mode tape --------------------------------------------------
  py::class_<Var>(m, "Var")
      .def(py::init<double>())
      .def_property_readonly("value", [](const Var& v) { return v.v; })
      .def("__float__", [](const Var& v) { return v.v; })
      .def("__add__", [](const Var& a, const Var& b) { return a + b; })
      .def("__radd__", [](const Var& a, double b) { return Var(b) + a; })
      .def("__sub__", [](const Var& a, const Var& b) { return a - b; })
      .def("__rsub__", [](const Var& a, double b) { return Var(b) - a; })
      .def("__mul__", [](const Var& a, const Var& b) { return a * b; })
      .def("__rmul__", [](const Var& a, double b) { return Var(b) * a; })
      .def("__truediv__", [](const Var& a, const Var& b) { return a / b; })
      .def("__rtruediv__", [](const Var& a, double b) { return Var(b) / a; })
      .def("__neg__", [](const Var& a) { return -a; })
      .def("__pow__", [](const Var& a, double c) { return impm::ad::pow(a, c); });
  py::implicitly_convertible<double, Var>();

  m.def("log", [](const Var& a) { return impm::ad::log(a); });
  m.def("exp", [](const Var& a) { return impm::ad::exp(a); });
  m.def("sqrt", [](const Var& a) { return impm::ad::sqrt(a); });
  m.def("abs", [](const Var& a) { return impm::ad::abs(a); });
  m.def("minimum", [](const Var& a, const Var& b) { return impm::ad::min(a, b); });
  m.def("maximum", [](const Var& a, const Var& b) { return impm::ad::max(a, b); });

  py::class_<Tape>(m, "Tape")
      .def(py::init<>())
      .def("input", &Tape::input, py::arg("value"),
           "registers an independent variable; inputs come before any operation")
      .def("set_outputs",
           [](Tape& t, const std::vector<Var>& outs) {
             t.set_outputs(std::span<const Var>(outs.data(), outs.size()));
           })
      .def("output_values", &Tape::output_values)
      .def("node_count", &Tape::node_count)
      .def("input_count", &Tape::input_count)
      .def("backward",
           [](const Tape& t, const std::vector<double>& seed) {
             return t.backward(std::span<const double>(seed.data(), seed.size()));
           },
           py::arg("seed"), "seeded reverse pass: returns J^T seed over the inputs");

  // --- transfer functions ---------------------------------------------------
  m.def(
      "gimp_weight_1d",
      [](double xi, double lp, double h) {
        const auto wv = impm::gimp_weight_1d(xi, lp, h);
        return py::make_tuple(wv.w, wv.dw);
      },
      py::arg("xi"), py::arg("lp"), py::arg("h"),
      "1D GIMP weight and derivative for a particle-to-node distance");
  m.def(
      "block_size", [](const std::string& kind) { return impm::block_size(kind_from(kind)); },
      py::arg("kind"), "seeding block size per axis for a shape-function kind");

  // --- stress updates -------------------------------------------------------
  m.def(
      "hencky_stress",
      [](const Mat3& F, double E, double nu) {
        return from_mat(impm::hencky_stress_3x3(to_mat(F), {E, nu}));
      },
      py::arg("F"), py::arg("E"), py::arg("nu"));
  m.def(
      "neo_hookean_stress",
      [](const Mat3& F, double E, double nu) {
        return from_mat(impm::neo_hookean_stress_3x3(to_mat(F), {E, nu}));
      },
      py::arg("F"), py::arg("E"), py::arg("nu"));

  // --- Nor-Sand triaxial driver ---------------------------------------------
  py::class_<impm::NorSandParams>(m, "NorSandParams")
      .def(py::init([](double M, double N, double h, double lambda_tilde, double v_c0,
                       double v0, double p_i0, double K0, double p0) {
             impm::NorSandParams prm{M, N, h, lambda_tilde, v_c0, v0, p_i0, K0, p0};
             prm.validate();
             return prm;
           }),
           py::arg("M"), py::arg("N"), py::arg("h"), py::arg("lambda_tilde"), py::arg("v_c0"),
           py::arg("v0"), py::arg("p_i0"), py::arg("K0"), py::arg("p0"));

  m.def(
      "drained_triaxial",
      [](const impm::NorSandParams& prm, double axial_strain, int increments) {
        auto model = impm::NorSandPointModel::make(prm);
        const auto curve = impm::stress_point_drive(
            model, impm::drained_triaxial_path(prm, -std::abs(axial_strain), increments));
        py::dict d;
        std::vector<double> eps_a, eps_v, p, q;
        std::vector<int> iters;
        for (const auto& c : curve) {
          eps_a.push_back(c.eps_axial);
          eps_v.push_back(c.eps_v);
          p.push_back(c.p);
          q.push_back(c.q);
          iters.push_back(c.iterations);
        }
        d["axial_strain"] = eps_a;
        d["vol_strain"] = eps_v;
        d["p"] = p;
        d["q"] = q;
        d["iterations"] = iters;
        return d;
      },
      py::arg("params"), py::arg("axial_strain") = 0.25, py::arg("increments") = 200,
      "stress-point drained triaxial compression from the K0 state");

  // --- scenario runners -------------------------------------------------
  m.def(
      "run_scenario",
      [](const std::string& config_path, bool check,
         const std::vector<std::string>& overrides) {
        impm::Config cfg = impm::Config::parse_file(config_path);
        for (const auto& o : overrides) cfg.set_override(o);
        return report_to_dict(impm::run_scenario(cfg, check));
      },
      py::arg("config_path"), py::arg("check") = false,
      py::arg("overrides") = std::vector<std::string>{},
      "runs a scenario config; with check=True also runs its verification oracles");
  m.def(
      "run_scenario_text",
      [](const std::string& config_text, bool check) {
        return report_to_dict(impm::run_scenario(impm::Config::parse(config_text), check));
      },
      py::arg("config_text"), py::arg("check") = false);
}
