/* Copyright 2026 The AtlasFuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "atlasfuse/cli.hpp"
#include "atlasfuse/connectome.hpp"
#include "atlasfuse/error.hpp"
#include "atlasfuse/gradcheck.hpp"
#include "atlasfuse/losses.hpp"
#include "atlasfuse/model.hpp"
#include "atlasfuse/synthgen.hpp"
#include "atlasfuse/training.hpp"

namespace py = pybind11;
using namespace atlasfuse;

namespace {

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["micro_f1"] = m.micro_f1;
  d["roc_auc"] = m.roc_auc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_atlasfuse, m) {
  m.doc() = "Multi-atlas brain network fusion";

  static py::exception<Error> error_type(m, "AtlasFuseError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type.ptr(),
                      (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def(
      "pearson_connectivity",
      [](const Matrix& signals) { return pearson_connectivity(signals).matrix; },
      py::arg("signals"), "ROI x time signals -> correlation matrix.");
  m.def("sparsify_topk", &sparsify_topk, py::arg("x"), py::arg("keep_fraction") = 0.20);
  m.def(
      "knn_adjacency",
      [](const Matrix& a, const Matrix& b, int k) {
        const auto adj = build_inter_atlas_adjacency(a, b, k);
        return py::make_tuple(adj.raw, adj.adjacency, adj.normalized);
      },
      py::arg("centroids_a"), py::arg("centroids_b"), py::arg("k"),
      "Returns (raw, symmetrized with self-loops, normalized).");
  m.def("read_network_file", &read_network_file);
  m.def("write_network_file", &write_network_file);

  m.def(
      "generate",
      [](const std::filesystem::path& out, std::uint64_t seed, int subjects,
         double effect_size, double noise_std) {
        synth::SynthConfig cfg;
        cfg.seed = seed;
        cfg.subject_count = subjects;
        cfg.effect_size = effect_size;
        cfg.noise_std = noise_std;
        const auto res = synth::generate_dataset(cfg);
        save_dataset(res.dataset, out);
        synth::write_ground_truth(res.truth, out / "ground_truth.json");
        return res.dataset.subjects.size();
      },
      py::arg("out"), py::arg("seed") = 7, py::arg("subjects") = 200,
      py::arg("effect_size") = 0.5, py::arg("noise_std") = 2.5,
      "Writes a synthetic dataset and its ground truth; returns the subject count.");

  m.def(
      "load_dataset",
      [](const std::filesystem::path& dir) {
        const Dataset ds = load_dataset(dir);
        py::dict d;
        py::list atlases;
        for (const auto& a : ds.atlases) atlases.append(a.id);
        py::list labels;
        py::dict networks;
        for (const auto& s : ds.subjects) {
          labels.append(s.label);
          py::dict per;
          for (const auto& [id, net] : s.networks) per[py::str(id)] = net.matrix;
          networks[py::str(s.id)] = per;
        }
        d["atlases"] = atlases;
        d["class_names"] = ds.class_names;
        d["labels"] = labels;
        d["networks"] = networks;
        return d;
      },
      py::arg("dir"));

  m.def(
      "gradient_check",
      [](std::uint64_t seed, bool zero_weights, int samples) {
        const auto inst = make_gradcheck_instance(seed);
        GradCheckConfig cfg;
        cfg.samples = samples;
        cfg.seed = seed;
        const auto r = gradient_check(inst.model, inst.params, inst.batch,
                                      zero_weights ? LossWeights::none() : LossWeights::adni(),
                                      cfg);
        py::dict d;
        d["max_relative_error"] = r.max_relative_error;
        d["checked"] = r.checked;
        d["worst_tensor"] = r.worst_tensor;
        d["passed"] = r.passed;
        return d;
      },
      py::arg("seed") = 0, py::arg("zero_weights") = false, py::arg("samples") = 240);

  m.def(
      "compute_metrics",
      [](const std::vector<int>& predictions, const Matrix& scores,
         const std::vector<int>& labels) {
        return metrics_dict(compute_metrics(predictions, scores, labels));
      },
      py::arg("predictions"), py::arg("scores"), py::arg("labels"));

  m.def(
      "run_cli", [](const std::vector<std::string>& args) {
        std::vector<std::string> argv = {"atlasfuse"};
        argv.insert(argv.end(), args.begin(), args.end());
        py::gil_scoped_release release;
        return cli::run(argv);
      },
      py::arg("args"), "Runs a CLI command in-process; returns the exit code.");
}
