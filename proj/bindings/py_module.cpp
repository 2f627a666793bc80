#include <pybind11/pybind11.h>

namespace py = pybind11;

void bind_core(py::module_& m);

PYBIND11_MODULE(_core, m) {
    m.doc() = "Porous infill topology optimization with stress-topology-guided initialization";
    bind_core(m);
}
