#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ebgcn/detector.hpp"
#include "ebgcn/errors.hpp"
#include "ebgcn/flops.hpp"
#include "ebgcn/pipeline.hpp"

namespace py = pybind11;
using namespace ebgcn;

namespace {

RunConfig config_from_kwargs(const py::kwargs& kw) {
  RunConfig cfg;
  for (auto item : kw) {
    const auto key = item.first.cast<std::string>();
    const auto& val = item.second;
    if (key == "hidden") cfg.train.hidden = val.cast<int>();
    else if (key == "epochs") cfg.train.epochs = val.cast<int>();
    else if (key == "lr_weights") cfg.train.lr_weights = val.cast<double>();
    else if (key == "lr_graph") cfg.train.lr_graph = val.cast<double>();
    else if (key == "weight_decay") cfg.train.weight_decay = val.cast<double>();
    else if (key == "dropout") cfg.train.dropout = val.cast<double>();
    else if (key == "seed") cfg.train.seed = val.cast<uint64_t>();
    else if (key == "lambda_reg") cfg.train.lambda_reg = val.cast<double>();
    else if (key == "pg") cfg.pg = val.cast<double>();
    else if (key == "pw") cfg.pw = val.cast<double>();
    else if (key == "eta") cfg.eta = val.cast<double>();
    else if (key == "queue_len") cfg.queue_len = val.cast<int>();
    else if (key == "criterion") cfg.criterion = criterion_from_string(val.cast<std::string>());
    else if (key == "warmup") cfg.warmup = val.cast<int>();
    else if (key == "backward_factor") cfg.backward_factor = val.cast<double>();
    else if (key == "per_layer_weight_mask") cfg.per_layer_weight_mask = val.cast<bool>();
    else if (key == "reinit_after_joint") cfg.reinit_after_joint = val.cast<bool>();
    else if (key == "grad_through_degrees") cfg.grad_through_degrees = val.cast<bool>();
    else throw argument_error("unknown config key: " + key);
  }
  cfg.validate();
  return cfg;
}

py::object record_to_py(const RunRecord& rec) {
  const auto json = py::module_::import("json");
  return json.attr("loads")(rec.to_json().dump());
}

py::object run_kind(PipelineKind kind, const GraphDataset& ds, const py::kwargs& kw) {
  const RunConfig cfg = config_from_kwargs(kw);
  RunRecord rec;
  {
    py::gil_scoped_release release;
    rec = run_pipeline(kind, ds, cfg);
  }
  return record_to_py(rec);
}

py::array_t<int32_t> edges_array(const GraphDataset& ds) {
  py::array_t<int32_t> out({ds.num_edges(), 2});
  auto view = out.mutable_unchecked<2>();
  for (int e = 0; e < ds.num_edges(); ++e) {
    view(e, 0) = ds.edges[e].first;
    view(e, 1) = ds.edges[e].second;
  }
  return out;
}

py::array_t<bool> mask_bits(const PruneMask& m) {
  py::array_t<bool> out(static_cast<py::ssize_t>(m.size()));
  auto view = out.mutable_unchecked<1>();
  for (size_t i = 0; i < m.size(); ++i) view(static_cast<py::ssize_t>(i)) = m.bit(i);
  return out;
}

PruneMask mask_from_py(const py::array_t<bool>& bits) {
  std::vector<uint8_t> raw(static_cast<size_t>(bits.size()));
  auto view = bits.unchecked<1>();
  for (py::ssize_t i = 0; i < bits.size(); ++i) raw[static_cast<size_t>(i)] = view(i);
  return PruneMask::from_bits(std::move(raw));
}

}  // namespace

PYBIND11_MODULE(ebgcn, m) {
  m.doc() =
      "Two-layer GCN training with graph/weight co-sparsification and "
      "early-bird ticket detection";

  py::register_exception<io_error>(m, "IoError", PyExc_IOError);
  py::register_exception<format_error>(m, "FormatError", PyExc_ValueError);
  py::register_exception<validation_error>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<argument_error>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<numeric_error>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<contract_error>(m, "ContractError", PyExc_RuntimeError);

  py::class_<GraphDataset>(m, "GraphDataset")
      .def_readonly("name", &GraphDataset::name)
      .def_readonly("num_nodes", &GraphDataset::num_nodes)
      .def_readonly("num_classes", &GraphDataset::num_classes)
      .def_property_readonly("num_edges", &GraphDataset::num_edges)
      .def_property_readonly("num_features", &GraphDataset::num_features)
      .def_property_readonly("edges", &edges_array)
      .def_readonly("features", &GraphDataset::features)
      .def_readonly("labels", &GraphDataset::labels)
      .def_readonly("train_mask", &GraphDataset::train_mask)
      .def_readonly("val_mask", &GraphDataset::val_mask)
      .def_readonly("test_mask", &GraphDataset::test_mask)
      .def("validate", &GraphDataset::validate)
      .def("__repr__", [](const GraphDataset& ds) {
        return "<GraphDataset " + ds.name + " N=" + std::to_string(ds.num_nodes) +
               " M=" + std::to_string(ds.num_edges()) + ">";
      });

  py::class_<NormalizedAdjacency>(m, "NormalizedAdjacency")
      .def_readonly("n", &NormalizedAdjacency::n)
      .def_readonly("row_ptr", &NormalizedAdjacency::row_ptr)
      .def_readonly("col", &NormalizedAdjacency::col)
      .def_readonly("val", &NormalizedAdjacency::val)
      .def_readonly("edge_id", &NormalizedAdjacency::edge_id)
      .def_readonly("degree", &NormalizedAdjacency::degree)
      .def_property_readonly("nnz", &NormalizedAdjacency::nnz)
      .def("to_dense", &NormalizedAdjacency::to_dense)
      .def("entry", &NormalizedAdjacency::entry)
      .def("multiply", &NormalizedAdjacency::multiply);

  py::class_<PruneMask>(m, "PruneMask")
      .def_static("from_bits",
                  [](const py::array_t<bool>& bits) { return mask_from_py(bits); })
      .def_property_readonly("bits", &mask_bits)
      .def_property_readonly("popcount", &PruneMask::popcount)
      .def_property_readonly("target_ratio", &PruneMask::target_ratio)
      .def("__len__", &PruneMask::size)
      .def("__eq__", [](const PruneMask& a, const PruneMask& b) { return a == b; });

  py::enum_<StopCriterion>(m, "StopCriterion")
      .value("GRAPH", StopCriterion::GraphOnly)
      .value("NETWORK", StopCriterion::NetworkOnly)
      .value("SUM", StopCriterion::Sum);

  py::class_<EbDetector>(m, "EbDetector")
      .def(py::init<int, double, StopCriterion, int>(), py::arg("queue_len") = 3,
           py::arg("eta") = 0.1, py::arg("criterion") = StopCriterion::Sum,
           py::arg("warmup_skip") = 0)
      .def("geb_step", &EbDetector::geb_step, py::arg("graph_mask"), py::arg("epoch"))
      .def("joint_step", &EbDetector::joint_step, py::arg("graph_mask"),
           py::arg("net_mask"), py::arg("epoch"))
      .def_property_readonly("fired", &EbDetector::fired)
      .def_property_readonly("fired_epoch", &EbDetector::fired_epoch)
      .def_property_readonly("last_graph_distance", &EbDetector::last_graph_distance)
      .def_property_readonly("last_network_distance", &EbDetector::last_network_distance)
      .def_property_readonly("last_combined", &EbDetector::last_combined);

  m.def("gen_synthetic", &gen_synthetic, py::arg("seed"), py::arg("blocks"),
        py::arg("nodes_per_block"), py::arg("p_in"), py::arg("p_out"),
        py::arg("feat_dim"),
        "Stochastic block model dataset with block-id labels and 10/10/80 splits");
  m.def("load_bundle", &load_bundle, py::arg("path"));
  m.def("save_bundle", &save_bundle, py::arg("dataset"), py::arg("path"));
  m.def(
      "normalize_adjacency",
      [](const GraphDataset& ds, const Vector& values, py::object keep) {
        if (keep.is_none()) return normalize_adjacency(ds, values, nullptr);
        const PruneMask mask = mask_from_py(keep.cast<py::array_t<bool>>());
        return normalize_adjacency(ds, values, &mask);
      },
      py::arg("dataset"), py::arg("edge_values"), py::arg("keep") = py::none());
  m.def("unit_edge_values", &unit_edge_values);

  m.def(
      "derive_mask",
      [](const Vector& magnitudes, double p) { return derive_mask(magnitudes, p); },
      py::arg("magnitudes"), py::arg("p"),
      "Keep exactly round((1-p)*len) largest-|magnitude| entries");
  m.def("mask_distance", &mask_distance, py::arg("a"), py::arg("b"));
  m.def("pairwise_distance_matrix", &pairwise_distance_matrix, py::arg("history"));

  m.def("run_baseline",
        [](const GraphDataset& ds, const py::kwargs& kw) {
          return run_kind(PipelineKind::Baseline, ds, kw);
        },
        py::arg("dataset"));
  m.def("run_geb",
        [](const GraphDataset& ds, const py::kwargs& kw) {
          return run_kind(PipelineKind::Geb, ds, kw);
        },
        py::arg("dataset"));
  m.def("run_joint_eb",
        [](const GraphDataset& ds, const py::kwargs& kw) {
          return run_kind(PipelineKind::JointEb, ds, kw);
        },
        py::arg("dataset"));
  m.def("run_random_prune",
        [](const GraphDataset& ds, const py::kwargs& kw) {
          return run_kind(PipelineKind::RandomPrune, ds, kw);
        },
        py::arg("dataset"));

  m.def(
      "inference_flops",
      [](int64_t n, int64_t m_kept, const std::vector<int>& dims, double pw) {
        return inference_flops(n, m_kept, dims, pw);
      },
      py::arg("n"), py::arg("m_kept_directed"), py::arg("layer_dims"), py::arg("pw"));
  m.def("training_flops", &training_flops, py::arg("per_epoch_inference"),
        py::arg("epochs"), py::arg("backward_factor") = 2.0);
  m.def(
      "memory_estimate",
      [](int64_t n, const std::vector<int>& dims, double pw, int64_t bytes) {
        return memory_estimate(n, dims, pw, bytes);
      },
      py::arg("n"), py::arg("layer_dims"), py::arg("pw"), py::arg("bytes_per_value") = 8);
  m.def("stored_entries", &stored_entries, py::arg("n"), py::arg("kept_undirected"));

  m.attr("FLOPS_CONVENTION") = kFlopsConvention;
}
