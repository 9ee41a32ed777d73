// Python bindings over the main operations: pooling kernels, the synthetic
// environment, metrics, and the config-driven train/eval entry points.
// Matrices cross the boundary as numpy float64 arrays.

#include "afalab/config.hpp"
#include "afalab/env.hpp"
#include "afalab/gradcheck.hpp"
#include "afalab/metrics.hpp"
#include "afalab/model.hpp"
#include "afalab/optim.hpp"
#include "afalab/policy.hpp"
#include "afalab/trainer.hpp"

#include <nlohmann/json.hpp>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

namespace py = pybind11;
using namespace afalab;

namespace {

Matrix matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& array) {
    if (array.ndim() != 2) throw std::invalid_argument("expected a 2-D float64 array");
    Matrix m(static_cast<int>(array.shape(0)), static_cast<int>(array.shape(1)));
    std::copy(array.data(), array.data() + array.size(), m.data().data());
    return m;
}

py::array_t<double> numpy_from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::array_t<double> numpy_from_vector(const std::vector<double>& v) {
    py::array_t<double> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

TokenGrid grid_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& array) {
    if (array.ndim() != 3) throw std::invalid_argument("expected an H x W x D float64 array");
    TokenGrid g(static_cast<int>(array.shape(0)), static_cast<int>(array.shape(1)),
                static_cast<int>(array.shape(2)));
    std::copy(array.data(), array.data() + array.size(), g.tokens.data().data());
    return g;
}

py::array_t<double> numpy_from_grid(const TokenGrid& g) {
    py::array_t<double> out({g.height, g.width, g.dim});
    std::copy(g.tokens.data().begin(), g.tokens.data().end(), out.mutable_data());
    return out;
}

ExperimentConfig config_from_object(const py::object& obj) {
    const std::string dumped = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return ExperimentConfig::from_json(nlohmann::json::parse(dumped));
}

py::object json_to_python(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_afalab, m) {
    m.doc() = "behaviour-cloning pooling laboratory (C++ core)";

    m.def("softmax_rows", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
        return numpy_from_matrix(softmax_rows(matrix_from_numpy(x)));
    });

    m.def("iqm", [](std::vector<double> values) { return iqm(std::move(values)); });

    m.def("lr_at", [](double peak_lr, int warmup_steps, int total_steps, int step) {
        return lr_at(LrSchedule{peak_lr, warmup_steps, total_steps}, step);
    });

    m.def("temporal_embed",
          [](int t, int horizon, int dim) { return numpy_from_vector(temporal_embed(t, horizon, dim)); });

    m.def("mean_pool", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& grid) {
        return numpy_from_vector(mean_pool(grid_from_numpy(grid)));
    });

    m.def("spatial_softmax", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& grid) {
        return numpy_from_vector(spatial_softmax(grid_from_numpy(grid)));
    });

    m.def("attention_mass", [](const std::vector<std::vector<double>>& head_weights,
                               const std::vector<bool>& mask, int height, int width) {
        AttentionRecord rec{height, width, head_weights};
        BoolGrid grid;
        grid.height = height;
        grid.width = width;
        for (bool b : mask) grid.cells.push_back(b ? 1 : 0);
        return attention_mass(rec, grid);
    });

    m.def("attention_entropy", [](const std::vector<std::vector<double>>& head_weights, int height, int width) {
        return attention_entropy(AttentionRecord{height, width, head_weights});
    });

    m.def("pearson", &pearson);

    m.def("expert_action", [](std::array<double, 2> agent, std::array<double, 2> goal) {
        return expert_action(WorldState{agent, goal, 0});
    });

    m.def("render_tokens",
          [](std::array<double, 2> agent, std::array<double, 2> goal, int grid, int dim,
             std::uint64_t master_seed, std::optional<std::uint64_t> texture_seed,
             std::optional<std::uint64_t> lighting_seed) {
              const SignatureBank bank = SignatureBank::create(grid, dim, master_seed);
              SceneConfig scene;
              if (texture_seed) scene = perturb_texture(scene, grid, *texture_seed);
              if (lighting_seed) scene = perturb_lighting(scene, *lighting_seed);
              return numpy_from_grid(render_tokens(WorldState{agent, goal, 0}, scene, bank));
          },
          py::arg("agent"), py::arg("goal"), py::arg("grid") = 8, py::arg("dim") = 64,
          py::arg("master_seed") = 7, py::arg("texture_seed") = std::nullopt,
          py::arg("lighting_seed") = std::nullopt);

    m.def("generate_demos_dir", [](const py::object& config, const std::string& out_dir) {
        const ExperimentConfig cfg = config_from_object(config);
        const SignatureBank bank = SignatureBank::create(cfg.env.grid, cfg.env.dim, cfg.env.master_seed);
        const auto demos = generate_demos(cfg.env_config(), bank, cfg.env.demos, cfg.env.horizon, cfg.env.demo_seed);
        save_demos(out_dir, demos, cfg.env_config(), cfg.env.demo_seed, cfg.to_json());
        return demos.size();
    });

    m.def("run_experiment",
          [](const py::object& config, std::optional<std::string> out_dir) {
              const ExperimentConfig cfg = config_from_object(config);
              std::optional<std::filesystem::path> path;
              if (out_dir) path = *out_dir;
              py::gil_scoped_release release;
              const ExperimentReport report = run_experiment(cfg, path);
              py::gil_scoped_acquire acquire;
              return json_to_python(report.to_json());
          },
          py::arg("config"), py::arg("out_dir") = std::nullopt);

    m.def("gradient_audit", [](int seeds) {
        AuditOptions options;
        options.seeds = seeds;
        py::list rows;
        for (const AuditRow& r : gradient_audit(options)) {
            py::dict row;
            row["component"] = r.component;
            row["applicable"] = r.applicable;
            row["checked_values"] = r.checked_values;
            row["max_rel_err"] = r.max_rel_err;
            rows.append(std::move(row));
        }
        return rows;
    }, py::arg("seeds") = 10);

    m.def("default_config", [] { return json_to_python(ExperimentConfig{}.to_json()); });
}
