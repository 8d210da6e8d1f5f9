#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dragforge/active_loop.hpp"
#include "dragforge/constraints.hpp"
#include "dragforge/dataset.hpp"
#include "dragforge/flow_sim.hpp"
#include "dragforge/geometry.hpp"
#include "dragforge/surrogate.hpp"

namespace py = pybind11;
using namespace dragforge;

namespace {

ShapeParams make_params(const std::array<double, 4>& theta, double width) { return {theta, width}; }

std::vector<std::pair<double, double>> boundary_points(const ShapeParams& p, int samples_per_side) {
  std::vector<std::pair<double, double>> out;
  for (const Point2& q : build_boundary(p, samples_per_side).points) out.emplace_back(q.x, q.y);
  return out;
}

OccupancyMask mask_from_rows(const std::vector<std::vector<int>>& rows, const GridSpec& grid) {
  if (rows.size() != static_cast<std::size_t>(grid.ny)) throw ArgumentError("mask: expected ny rows");
  OccupancyMask m(grid);
  for (int j = 0; j < grid.ny; ++j) {
    const auto& row = rows[static_cast<std::size_t>(j)];
    if (row.size() != static_cast<std::size_t>(grid.nx)) throw ArgumentError("mask: expected nx columns per row");
    for (int i = 0; i < grid.nx; ++i) m.set(i, j, row[static_cast<std::size_t>(i)] != 0);
  }
  return m;
}

std::vector<std::vector<int>> mask_rows(const OccupancyMask& m) {
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(m.grid.ny), std::vector<int>(static_cast<std::size_t>(m.grid.nx)));
  for (int j = 0; j < m.grid.ny; ++j)
    for (int i = 0; i < m.grid.nx; ++i) rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = m.at(i, j);
  return rows;
}

}  // namespace

PYBIND11_MODULE(_dragforge, m) {
  m.doc() = "Drag-minimizing shape search: flow solver, surrogate network and verification loop.";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<InfeasibleConstraintError>(m, "InfeasibleConstraintError", base.ptr());

  py::class_<ShapeParams>(m, "ShapeParams")
      .def(py::init(&make_params), py::arg("theta"), py::arg("width"))
      .def_readwrite("theta", &ShapeParams::theta)
      .def_readwrite("width", &ShapeParams::width)
      .def("__eq__", [](const ShapeParams& a, const ShapeParams& b) { return a == b; })
      .def("__repr__", [](const ShapeParams& p) {
        return "ShapeParams(theta=[" + std::to_string(p.theta[0]) + ", " + std::to_string(p.theta[1]) + ", " +
               std::to_string(p.theta[2]) + ", " + std::to_string(p.theta[3]) + "], width=" + std::to_string(p.width) + ")";
      });

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init([](int nx, int ny, double spacing, double x0, double y0) { return GridSpec{nx, ny, spacing, x0, y0}; }),
           py::arg("nx"), py::arg("ny"), py::arg("spacing"), py::arg("x0"), py::arg("y0"))
      .def_static("desk", &GridSpec::desk)
      .def_readwrite("nx", &GridSpec::nx)
      .def_readwrite("ny", &GridSpec::ny)
      .def_readwrite("spacing", &GridSpec::spacing)
      .def_readwrite("x0", &GridSpec::x0)
      .def_readwrite("y0", &GridSpec::y0)
      .def("cell_of", &GridSpec::cell_of);

  py::class_<FlowConfig>(m, "FlowConfig")
      .def(py::init<>())
      .def_readwrite("viscosity", &FlowConfig::viscosity)
      .def_readwrite("inflow_speed", &FlowConfig::inflow_speed)
      .def_readwrite("density", &FlowConfig::density)
      .def_readwrite("reference_speed", &FlowConfig::reference_speed)
      .def_readwrite("chord", &FlowConfig::chord)
      .def_readwrite("grid", &FlowConfig::grid)
      .def_readwrite("max_steps", &FlowConfig::max_steps)
      .def_readwrite("drag_tolerance", &FlowConfig::drag_tolerance)
      .def_readwrite("check_interval", &FlowConfig::check_interval)
      .def_readwrite("settle_checks", &FlowConfig::settle_checks)
      .def("reynolds", &FlowConfig::reynolds)
      .def("tau", &FlowConfig::tau)
      .def("validate", &FlowConfig::validate);

  py::class_<DragSample>(m, "DragSample")
      .def(py::init([](const ShapeParams& p, double drag, bool converged) { return DragSample{p, drag, converged}; }),
           py::arg("params"), py::arg("drag"), py::arg("converged") = true)
      .def_readonly("params", &DragSample::params)
      .def_readonly("drag", &DragSample::drag)
      .def_readonly("converged", &DragSample::converged);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("width", &Dataset::width)
      .def_readwrite("samples", &Dataset::samples)
      .def("__len__", &Dataset::size)
      .def("min_drag", &Dataset::min_drag);

  py::class_<LinearModel>(m, "LinearModel")
      .def_readonly("intercept", &LinearModel::intercept)
      .def_readonly("coefficients", &LinearModel::coefficients);

  py::class_<MlpModel>(m, "MlpModel")
      .def_static("from_json", &mlp_from_json)
      .def("to_json", &mlp_to_json)
      .def("predict", &mlp_forward)
      .def("gradient", &mlp_input_gradient)
      .def_property_readonly("hidden_layers", &MlpModel::hidden_layers);

  m.def("boundary", &boundary_points, py::arg("params"), py::arg("samples_per_side") = 100,
        "Closed counterclockwise outline as (x, y) pairs.");
  m.def("frontal_height", &frontal_height);
  m.def("rasterize", [](const ShapeParams& p, const GridSpec& g) { return mask_rows(rasterize(build_boundary(p, 200), g)); },
        "Solid cells as rows of 0/1, row j = ny - 1 last.");
  m.def("evaluate_shape", &evaluate_shape, py::arg("params"), py::arg("config") = FlowConfig{},
        py::call_guard<py::gil_scoped_release>());
  m.def("sample_grid", &sample_grid);
  m.def("generate", &generate, py::arg("width"), py::arg("levels"), py::arg("config") = FlowConfig{}, py::arg("jobs") = 0,
        py::call_guard<py::gil_scoped_release>());
  m.def("load_dataset", &load_dataset);
  m.def("save_dataset", &save_dataset);
  m.def("filter_outliers", &filter_outliers);
  m.def("fit_linear", py::overload_cast<const Dataset&>(&fit_linear));
  m.def("predict_linear", &predict_linear);
  m.def("step_size_schedule", &step_size_schedule);
  m.def("loss_score", py::overload_cast<const std::vector<double>&>(&loss_score));
  m.def("flood_fill", [](const std::vector<std::vector<int>>& rows, std::pair<int, int> seed) {
    const GridSpec g{rows.empty() ? 0 : static_cast<int>(rows[0].size()), static_cast<int>(rows.size()), 1.0, 0.0, 0.0};
    return mask_rows(flood_fill(mask_from_rows(rows, g), seed));
  }, "Cells 4-connected to seed (i, j) through zeros; rows indexed [j][i].");
  m.def("containment", [](const ShapeParams& p, const std::vector<std::vector<int>>& required, const GridSpec& g) {
    return containment(p, RequiredRegion{mask_from_rows(required, g)}, g);
  });
}
