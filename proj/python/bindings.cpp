#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cslc/diagnostics.hpp"
#include "cslc/io.hpp"
#include "cslc/phi4.hpp"
#include "cslc/sampler.hpp"
#include "cslc/score_matching.hpp"

namespace py = pybind11;
using namespace cslc;

namespace {

Field2D field_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw std::invalid_argument("expected a square 2D array");
    Field2D f(static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + f.size(), f.data());
    return f;
}

py::array_t<double> field_to_array(const Field2D& f) {
    py::array_t<double> a({f.side(), f.side()});
    std::copy(f.data(), f.data() + f.size(), a.mutable_data());
    return a;
}

FieldStack stack_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw std::invalid_argument("expected an (n, side, side) array");
    FieldStack s(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + s.raw().size(), s.raw().data());
    return s;
}

py::array_t<double> stack_to_array(const FieldStack& s) {
    py::array_t<double> a({s.count(), s.side(), s.side()});
    std::copy(s.raw().begin(), s.raw().end(), a.mutable_data());
    return a;
}

} // namespace

PYBIND11_MODULE(cslc_core, m) {
    m.doc() = "Multiscale CSLC generative models of 2D stationary fields";

    py::class_<PacketPlan>(m, "PacketPlan")
        .def(py::init<int, int, int, const std::string&>(), py::arg("side"), py::arg("j_oct"), py::arg("m"),
             py::arg("filter") = "db4")
        .def_property_readonly("side", &PacketPlan::side)
        .def_property_readonly("n_bands", &PacketPlan::n_bands)
        .def_property_readonly("coarse_side", &PacketPlan::coarse_side)
        .def("band_dim", [](const PacketPlan& p, int j) { return p.band(j).dim(); })
        .def("band_centroid", [](const PacketPlan& p, int j) { return p.band(j).centroid; });

    py::class_<LearnedModel>(m, "Model")
        .def_property_readonly("n_scales", [](const LearnedModel& mo) { return mo.plan.n_bands(); })
        .def_property_readonly("side", [](const LearnedModel& mo) { return mo.plan.side(); })
        .def("save", [](const LearnedModel& mo, const std::string& path) { save_model(path, mo); })
        .def("report",
             [](const LearnedModel& mo) {
                 py::dict d;
                 py::list scales;
                 for (const auto& s : mo.report.scales) {
                     py::dict e;
                     e["m"] = s.m;
                     e["n"] = s.n;
                     e["kappa"] = s.kappa_after;
                     e["residual"] = s.residual;
                     e["ridge"] = s.ridge;
                     scales.append(e);
                 }
                 d["scales"] = scales;
                 d["coarse_kappa"] = mo.report.coarse.kappa_after;
                 return d;
             });

    m.def("load_model", &load_model, py::arg("path"));

    m.def(
        "decompose",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, const PacketPlan& plan) {
            Decomposition dec = decompose(field_from_array(x), plan);
            py::list bands;
            for (const auto& band : dec.bands) {
                py::list subs;
                for (const auto& sub : band.sub) subs.append(field_to_array(sub));
                bands.append(subs);
            }
            return py::make_tuple(field_to_array(dec.coarse), bands);
        },
        py::arg("field"), py::arg("plan"));

    m.def(
        "reconstruct",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& coarse, const py::list& bands,
           const PacketPlan& plan) {
            Decomposition dec;
            dec.coarse = field_from_array(coarse);
            for (const auto& band : bands) {
                Band b;
                for (const auto& sub : band.cast<py::list>())
                    b.sub.push_back(field_from_array(sub.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>()));
                dec.bands.push_back(std::move(b));
            }
            return field_to_array(reconstruct(dec, plan));
        },
        py::arg("coarse"), py::arg("bands"), py::arg("plan"));

    m.def(
        "phi4_energy",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, double beta) {
            Field2D f = field_from_array(x);
            return phi4_energy(f, Phi4Params{beta, f.side(), false});
        },
        py::arg("field"), py::arg("beta"));

    m.def(
        "phi4_grad",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, double beta) {
            Field2D f = field_from_array(x);
            return field_to_array(phi4_grad(f, Phi4Params{beta, f.side(), false}));
        },
        py::arg("field"), py::arg("beta"));

    m.def(
        "gen_phi4",
        [](double beta, int side, int n, uint64_t seed, bool symmetry_break, double step) {
            MalaConfig cfg;
            cfg.step_size = step;
            Phi4Dataset ds = sample_phi4(Phi4Params{beta, side, symmetry_break}, n, cfg, seed);
            return py::make_tuple(stack_to_array(ds.fields),
                                  py::dict(py::arg("acceptance") = ds.acceptance, py::arg("tau") = ds.tau,
                                           py::arg("thinning") = ds.thinning));
        },
        py::arg("beta"), py::arg("side"), py::arg("n"), py::arg("seed") = 1, py::arg("symmetry_break") = false,
        py::arg("step") = 0.1);

    m.def(
        "learn",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& data, int j_oct, int m_ref,
           int bumps) {
            FieldStack stack = stack_from_array(data);
            PacketPlan plan(stack.side(), j_oct, m_ref);
            LearnConfig cfg;
            cfg.n_bumps = bumps;
            return learn_all(stack, plan, cfg);
        },
        py::arg("data"), py::arg("j_oct"), py::arg("m"), py::arg("bumps") = 16);

    m.def(
        "sample",
        [](const LearnedModel& model, int n, uint64_t seed, int steps) {
            MalaConfig cfg;
            cfg.steps = steps;
            CascadeResult res = sample_cascade(model, n, cfg, seed);
            return stack_to_array(res.fields);
        },
        py::arg("model"), py::arg("n"), py::arg("seed") = 1, py::arg("steps") = 300);

    m.def(
        "radial_spectrum",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& data) {
            RadialSpectrum s = radial_power_spectrum(stack_from_array(data));
            return py::make_tuple(s.edges, s.power, s.count);
        },
        py::arg("data"));

    m.def("read_fields", [](const std::string& path) { return stack_to_array(read_field_container(path)); },
          py::arg("path"));
    m.def(
        "write_fields",
        [](const std::string& path, const py::array_t<double, py::array::c_style | py::array::forcecast>& data) {
            write_field_container(path, stack_from_array(data));
        },
        py::arg("path"), py::arg("data"));
}
