#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "infilltopo/cli_io.hpp"
#include "infilltopo/fem.hpp"
#include "infilltopo/grid.hpp"
#include "infilltopo/mma.hpp"
#include "infilltopo/optimizer.hpp"
#include "infilltopo/stress.hpp"
#include "infilltopo/tensor_topology.hpp"

namespace py = pybind11;
using namespace infilltopo;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style>& a) {
    return std::vector<double>(a.data(), a.data() + a.size());
}

py::array_t<double> to_array(const std::vector<double>& v) {
    return py::array_t<double>({static_cast<py::ssize_t>(v.size())}, v.data());
}

ScalarField field_from(const CartesianGrid& g, const py::array_t<double, py::array::c_style>& a) {
    ScalarField f(g);
    if (a.size() != g.num_elements()) {
        throw std::invalid_argument("field length must equal the active element count");
    }
    std::copy(a.data(), a.data() + a.size(), f.values.begin());
    return f;
}

}  // namespace

void bind_core(py::module_& m) {
    py::class_<CartesianGrid>(m, "CartesianGrid")
        .def(py::init([](int nx, int ny, std::optional<std::vector<uint8_t>> mask) {
                 return CartesianGrid(nx, ny, mask.value_or(std::vector<uint8_t>{}));
             }),
             py::arg("nx"), py::arg("ny"), py::arg("mask") = py::none())
        .def_property_readonly("nx", &CartesianGrid::nx)
        .def_property_readonly("ny", &CartesianGrid::ny)
        .def_property_readonly("num_elements", &CartesianGrid::num_elements)
        .def_property_readonly("num_nodes", &CartesianGrid::num_nodes)
        .def("element_id", &CartesianGrid::element_id, py::arg("i"), py::arg("j"))
        .def("node_id", &CartesianGrid::node_id, py::arg("i"), py::arg("j"))
        .def("inside", &CartesianGrid::inside, py::arg("x"), py::arg("y"));

    py::class_<BoundaryConditions>(m, "BoundaryConditions")
        .def(py::init<>())
        .def("fix", &BoundaryConditions::fix, py::arg("node"), py::arg("direction"))
        .def("add_load", &BoundaryConditions::add_load, py::arg("node"), py::arg("fx"),
             py::arg("fy"))
        .def("validate", &BoundaryConditions::validate);

    py::class_<MaterialModel>(m, "MaterialModel")
        .def(py::init([](double E0, double Emin, double nu, double gamma) {
                 return MaterialModel{E0, Emin, nu, gamma};
             }),
             py::arg("E0") = 1.0, py::arg("Emin") = 1e-6, py::arg("nu") = 0.3,
             py::arg("gamma") = 3.0)
        .def_readwrite("E0", &MaterialModel::E0)
        .def_readwrite("Emin", &MaterialModel::Emin)
        .def_readwrite("nu", &MaterialModel::nu)
        .def_readwrite("gamma", &MaterialModel::gamma);

    m.def("simp_modulus", &simp_modulus, py::arg("rho"), py::arg("material"));

    m.def(
        "element_stiffness_unit",
        [](double nu) {
            const auto ke = element_stiffness_unit(nu);
            py::array_t<double> out({8, 8});
            for (int a = 0; a < 8; ++a) {
                for (int b = 0; b < 8; ++b) out.mutable_at(a, b) = ke(a, b);
            }
            return out;
        },
        py::arg("nu") = 0.3);

    py::class_<LinearSystemSummary>(m, "LinearSystemSummary")
        .def_readonly("solver", &LinearSystemSummary::solver)
        .def_readonly("iterations", &LinearSystemSummary::iterations)
        .def_readonly("rel_residual", &LinearSystemSummary::rel_residual);

    py::enum_<SolverKind>(m, "SolverKind")
        .value("Direct", SolverKind::Direct)
        .value("ConjugateGradient", SolverKind::ConjugateGradient);

    py::class_<DisplacementField>(m, "DisplacementField")
        .def_property_readonly("u", [](const DisplacementField& f) { return to_array(f.u); });

    py::class_<FemSolver>(m, "FemSolver")
        .def(py::init<const CartesianGrid&, const BoundaryConditions&, const MaterialModel&,
                      SolverKind, double>(),
             py::arg("grid"), py::arg("bc"), py::arg("material") = MaterialModel{},
             py::arg("solver") = SolverKind::Direct, py::arg("tolerance") = 1e-8,
             py::keep_alive<1, 2>())
        .def(
            "solve",
            [](FemSolver& s, const py::array_t<double, py::array::c_style>& rho) {
                return s.solve(to_vector(rho));
            },
            py::arg("rho"))
        .def("compliance", &FemSolver::compliance, py::arg("displacements"))
        .def("unit_strain_energy", &FemSolver::unit_strain_energy, py::arg("displacements"),
             py::arg("element"));

    py::class_<StressTensor>(m, "StressTensor")
        .def(py::init([](double sxx, double syy, double txy) {
                 return StressTensor{sxx, syy, txy};
             }),
             py::arg("sxx") = 0.0, py::arg("syy") = 0.0, py::arg("txy") = 0.0)
        .def_readwrite("sxx", &StressTensor::sxx)
        .def_readwrite("syy", &StressTensor::syy)
        .def_readwrite("txy", &StressTensor::txy);

    py::class_<PrincipalDecomposition>(m, "PrincipalDecomposition")
        .def_readonly("s1", &PrincipalDecomposition::s1)
        .def_readonly("s2", &PrincipalDecomposition::s2)
        .def_readonly("v1x", &PrincipalDecomposition::v1x)
        .def_readonly("v1y", &PrincipalDecomposition::v1y)
        .def_readonly("v2x", &PrincipalDecomposition::v2x)
        .def_readonly("v2y", &PrincipalDecomposition::v2y)
        .def_readonly("degenerate", &PrincipalDecomposition::degenerate);

    m.def("principal_decomposition", &principal_decomposition, py::arg("tensor"));

    py::class_<NodalTensorField>(m, "NodalTensorField")
        .def(py::init([](const CartesianGrid& g,
                         const py::array_t<double, py::array::c_style>& nodal) {
                 if (nodal.ndim() != 2 || nodal.shape(1) != 3 ||
                     nodal.shape(0) != g.num_nodes()) {
                     throw std::invalid_argument("expected an (num_nodes, 3) array");
                 }
                 std::vector<StressTensor> t(g.num_nodes());
                 for (int n = 0; n < g.num_nodes(); ++n) {
                     t[n] = {nodal.at(n, 0), nodal.at(n, 1), nodal.at(n, 2)};
                 }
                 return NodalTensorField(g, std::move(t));
             }),
             py::arg("grid"), py::arg("nodal_components"), py::keep_alive<1, 2>())
        .def("eval", &NodalTensorField::eval, py::arg("x"), py::arg("y"))
        .def("at_node", &NodalTensorField::at_node, py::arg("node"));

    m.def("recover_nodal_stress", &recover_nodal_stress, py::arg("grid"),
          py::arg("displacements"), py::arg("material"), py::keep_alive<0, 1>());

    py::enum_<DegenerateKind>(m, "DegenerateKind")
        .value("Trisector", DegenerateKind::Trisector)
        .value("Wedge", DegenerateKind::Wedge)
        .value("Unresolved", DegenerateKind::Unresolved);

    py::enum_<PslFamily>(m, "PslFamily")
        .value("Major", PslFamily::Major)
        .value("Minor", PslFamily::Minor);

    py::enum_<PslTermination>(m, "PslTermination")
        .value("Boundary", PslTermination::Boundary)
        .value("NearDegeneratePoint", PslTermination::NearDegeneratePoint)
        .value("LoopClosed", PslTermination::LoopClosed)
        .value("StepBudget", PslTermination::StepBudget);

    py::class_<TensorGradient>(m, "TensorGradient")
        .def_readonly("a", &TensorGradient::a)
        .def_readonly("b", &TensorGradient::b)
        .def_readonly("c", &TensorGradient::c)
        .def_readonly("d", &TensorGradient::d)
        .def_readonly("delta", &TensorGradient::delta);

    py::class_<DegeneratePoint>(m, "DegeneratePoint")
        .def_readonly("x", &DegeneratePoint::x)
        .def_readonly("y", &DegeneratePoint::y)
        .def_readonly("kind", &DegeneratePoint::kind)
        .def_readonly("gradient", &DegeneratePoint::gradient)
        .def_readonly("tangent_slopes", &DegeneratePoint::tangent_slopes);

    py::class_<PrincipalStressLine>(m, "PrincipalStressLine")
        .def_readonly("family", &PrincipalStressLine::family)
        .def_readonly("termination", &PrincipalStressLine::termination)
        .def_property_readonly("vertices", [](const PrincipalStressLine& l) {
            py::array_t<double> out({static_cast<py::ssize_t>(l.vertices.size()),
                                     static_cast<py::ssize_t>(2)});
            for (size_t k = 0; k < l.vertices.size(); ++k) {
                out.mutable_at(k, 0) = l.vertices[k][0];
                out.mutable_at(k, 1) = l.vertices[k][1];
            }
            return out;
        });

    py::class_<TopologicalSkeleton::Separatrix>(m, "Separatrix")
        .def_readonly("line", &TopologicalSkeleton::Separatrix::line)
        .def_readonly("source_point", &TopologicalSkeleton::Separatrix::source_point)
        .def_readonly("launch_angle_deg", &TopologicalSkeleton::Separatrix::launch_angle_deg);

    py::class_<TopologicalSkeleton>(m, "TopologicalSkeleton")
        .def_readonly("points", &TopologicalSkeleton::points)
        .def_readonly("separatrices", &TopologicalSkeleton::separatrices)
        .def_readonly("warnings", &TopologicalSkeleton::warnings)
        .def("num_trisectors", &TopologicalSkeleton::num_trisectors)
        .def("num_wedges", &TopologicalSkeleton::num_wedges);

    m.def(
        "extract_skeleton",
        [](const NodalTensorField& field, bool include_wedges, double seed_offset) {
            SkeletonOptions opts;
            opts.include_wedges = include_wedges;
            opts.seed_offset = seed_offset;
            return extract_skeleton(field, opts);
        },
        py::arg("field"), py::arg("include_wedges") = false, py::arg("seed_offset") = 1.0);

    m.def(
        "trace_psl",
        [](const NodalTensorField& field, std::pair<double, double> seed, PslFamily family,
           std::pair<double, double> direction, double step) {
            TraceOptions opts;
            opts.step = step;
            return trace_psl(field, {seed.first, seed.second}, family,
                             {direction.first, direction.second}, opts);
        },
        py::arg("field"), py::arg("seed"), py::arg("family"), py::arg("direction"),
        py::arg("step") = 0.5);

    // Field operators on flat per-element arrays.
    m.def(
        "density_filter",
        [](const CartesianGrid& g, const py::array_t<double, py::array::c_style>& phi,
           double r) {
            DensityFilter f(g, r);
            std::vector<double> out;
            f.apply(to_vector(phi), out);
            return to_array(out);
        },
        py::arg("grid"), py::arg("phi"), py::arg("r"));

    m.def(
        "heaviside_project",
        [](const py::array_t<double, py::array::c_style>& pt, double beta) {
            std::vector<double> out;
            heaviside_project(to_vector(pt), beta, out);
            return to_array(out);
        },
        py::arg("phi_tilde"), py::arg("beta"));

    m.def(
        "local_volume",
        [](const CartesianGrid& g, const py::array_t<double, py::array::c_style>& rho,
           const py::array_t<double, py::array::c_style>& R) {
            const NeighborhoodTable nb = NeighborhoodTable::build(g, field_from(g, R));
            std::vector<double> out;
            local_volume(to_vector(rho), nb, out);
            return to_array(out);
        },
        py::arg("grid"), py::arg("rho"), py::arg("R"));

    m.def(
        "aggregate_constraint",
        [](const py::array_t<double, py::array::c_style>& rho_bar,
           const py::array_t<double, py::array::c_style>& alpha, double p) {
            return aggregate_constraint(to_vector(rho_bar), to_vector(alpha), p);
        },
        py::arg("rho_bar"), py::arg("alpha"), py::arg("p") = 16.0);

    m.def(
        "sharpness",
        [](const py::array_t<double, py::array::c_style>& rho) {
            return sharpness(to_vector(rho));
        },
        py::arg("rho"));

    py::class_<IterationRecord>(m, "IterationRecord")
        .def_readonly("iteration", &IterationRecord::iteration)
        .def_readonly("beta", &IterationRecord::beta)
        .def_readonly("compliance", &IterationRecord::compliance)
        .def_readonly("g_local", &IterationRecord::g_local)
        .def_readonly("g_global", &IterationRecord::g_global)
        .def_readonly("sharpness", &IterationRecord::sharpness)
        .def_readonly("mean_density", &IterationRecord::mean_density);

    py::class_<OptimizationState>(m, "OptimizationState")
        .def_readonly("iteration", &OptimizationState::iteration)
        .def_readonly("beta", &OptimizationState::beta)
        .def_property_readonly("phi", [](const OptimizationState& s) { return to_array(s.phi); })
        .def_property_readonly("rho", [](const OptimizationState& s) { return to_array(s.rho); })
        .def_readonly("history", &OptimizationState::history);

    py::enum_<InitMode>(m, "InitMode")
        .value("Uniform", InitMode::Uniform)
        .value("TopologyGuided", InitMode::TopologyGuided);

    m.def(
        "run_optimization",
        [](const CartesianGrid& grid, const BoundaryConditions& bc,
           const py::array_t<double, py::array::c_style>& alpha, std::optional<double> alpha_total,
           const py::array_t<double, py::array::c_style>& R, double r, double p, int max_iters,
           double move_limit, const MaterialModel& mat,
           const py::array_t<double, py::array::c_style>& phi_init) {
            OptimizationConfig cfg;
            cfg.alpha = field_from(grid, alpha);
            cfg.alpha_total = alpha_total;
            cfg.R = field_from(grid, R);
            cfg.filter_radius = r;
            cfg.p = p;
            cfg.max_iterations = max_iters;
            cfg.move_limit = move_limit;
            cfg.material = mat;
            return run_optimization(cfg, grid, bc, field_from(grid, phi_init));
        },
        py::arg("grid"), py::arg("bc"), py::arg("alpha"), py::arg("alpha_total"), py::arg("R"),
        py::arg("r"), py::arg("p"), py::arg("max_iters"), py::arg("move_limit"),
        py::arg("material"), py::arg("phi_init"),
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "skeleton_initialization",
        [](const TopologicalSkeleton& sk, const CartesianGrid& grid,
           const py::array_t<double, py::array::c_style>& alpha) {
            return to_array(skeleton_initialization(sk, grid, field_from(grid, alpha)).values);
        },
        py::arg("skeleton"), py::arg("grid"), py::arg("alpha"));

    py::class_<PipelineResult>(m, "PipelineResult")
        .def_readonly("trisectors", &PipelineResult::trisectors)
        .def_readonly("wedges", &PipelineResult::wedges)
        .def_readonly("final_record", &PipelineResult::final_record);

    m.def("parse_config", [](const std::string& text) { return parse_config(text); },
          py::arg("text"));
    m.def("parse_config_file", &parse_config_file, py::arg("path"));

    py::class_<RunConfig>(m, "RunConfig")
        .def_readonly("nx", &RunConfig::nx)
        .def_readonly("ny", &RunConfig::ny)
        .def_readwrite("max_iterations", &RunConfig::max_iterations)
        .def_readwrite("init", &RunConfig::init)
        .def_readwrite("move_limit", &RunConfig::move_limit);

    m.def(
        "run_pipeline",
        [](const RunConfig& cfg, const std::filesystem::path& out_dir, int steps) {
            return run_pipeline(cfg, out_dir, steps);
        },
        py::arg("config"), py::arg("out_dir"), py::arg("steps") = 4,
        py::call_guard<py::gil_scoped_release>());
}
