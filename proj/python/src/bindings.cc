#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "gatsy/checkpoint.h"
#include "gatsy/evaluation.h"
#include "gatsy/recommend.h"
#include "gatsy/server.h"
#include "gatsy/synthetic.h"
#include "gatsy/training.h"

namespace py = pybind11;
using namespace gatsy;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> out({t.rows(), t.cols()});
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

Tensor from_numpy(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Tensor(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::list items_to_list(const Recommendation& rec) {
  py::list out;
  for (const auto& it : rec) {
    py::dict d;
    d["index"] = it.node;
    d["id"] = it.id;
    d["name"] = it.name;
    d["distance"] = it.distance;
    d["genre"] = it.genre ? py::cast(*it.genre) : py::none();
    out.append(std::move(d));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_gatsy, m) {
  m.doc() = "Graph-attention artist similarity: training, evaluation and recommendation.";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<QueryError>(m, "QueryError", PyExc_LookupError);

  py::class_<ArtistGraph>(m, "ArtistGraph")
      .def_static(
          "from_edges",
          [](std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
            return ArtistGraph::from_edges(n, edges);
          },
          py::arg("num_nodes"), py::arg("edges"))
      .def_property_readonly("num_nodes", &ArtistGraph::num_nodes)
      .def_property_readonly("num_edges", &ArtistGraph::num_edges)
      .def_property_readonly("artist_ids", &ArtistGraph::artist_ids)
      .def_property_readonly("names", &ArtistGraph::names)
      .def("neighbors",
           [](const ArtistGraph& g, NodeId n) {
             if (n >= g.num_nodes()) throw py::index_error("node out of range");
             const auto nb = g.neighbors(n);
             return std::vector<NodeId>(nb.begin(), nb.end());
           })
      .def("edges", &ArtistGraph::edge_list);

  py::class_<GraphStats>(m, "GraphStats")
      .def_readonly("num_nodes", &GraphStats::num_nodes)
      .def_readonly("total_connections", &GraphStats::total_connections)
      .def_readonly("directed_entries", &GraphStats::directed_entries)
      .def_readonly("avg_connections_per_artist", &GraphStats::avg_connections_per_artist)
      .def_readonly("avg_pairs_per_artist", &GraphStats::avg_pairs_per_artist)
      .def_property_readonly("quartiles", [](const GraphStats& s) {
        return std::make_tuple(s.q1, s.q2, s.q3);
      });
  m.def("compute_stats", &compute_stats);

  py::class_<DatasetSplit>(m, "DatasetSplit")
      .def_readonly("train", &DatasetSplit::train)
      .def_readonly("validation", &DatasetSplit::validation)
      .def_readonly("test", &DatasetSplit::test)
      .def_readonly("seed", &DatasetSplit::seed);
  m.def("split_dataset", &split_dataset, py::arg("num_nodes"), py::arg("seed") = 0);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("graph", &Dataset::graph)
      .def_property_readonly("features", [](const Dataset& d) { return to_numpy(d.features.values); })
      .def_property_readonly("labels",
                             [](const Dataset& d) -> py::object {
                               if (!d.labels) return py::none();
                               return py::cast(d.labels->labels);
                             })
      .def_property_readonly("vocabulary", [](const Dataset& d) {
        return d.labels ? d.labels->vocabulary : std::vector<std::string>{};
      })
      .def("save", [](const Dataset& d, const std::filesystem::path& dir) { save_dataset(d, dir); });
  m.def("load_dataset", &load_dataset, py::arg("directory"));
  m.def(
      "generate_synthetic",
      [](std::size_t blocks, std::size_t nodes_per_block, double p_in, double p_out,
         std::size_t feature_dim, double separation, double noise, std::uint64_t seed) {
        return generate_synthetic({blocks, nodes_per_block, p_in, p_out, feature_dim, separation,
                                   noise, seed});
      },
      py::arg("blocks") = 4, py::arg("nodes_per_block") = 100, py::arg("p_in") = 0.1,
      py::arg("p_out") = 0.005, py::arg("feature_dim") = 32, py::arg("separation") = 1.0,
      py::arg("noise") = 1.0, py::arg("seed") = 0);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def_readwrite("input_dim", &ModelConfig::input_dim)
      .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
      .def_readwrite("fc_layers", &ModelConfig::fc_layers)
      .def_readwrite("gc_layers", &ModelConfig::gc_layers)
      .def_readwrite("batch_norm", &ModelConfig::batch_norm)
      .def_readwrite("genre_head", &ModelConfig::genre_head)
      .def_readwrite("num_classes", &ModelConfig::num_classes)
      .def_property_readonly("gc_kind", [](const ModelConfig& c) { return to_string(c.gc_kind); })
      .def("to_json", &config_to_json)
      .def_static("from_json", &config_from_json);
  m.def("model_preset", &model_preset, py::arg("name"), py::arg("input_dim"));

  py::class_<ModelParams>(m, "ModelParams")
      .def_readonly("config", &ModelParams::config)
      .def_property_readonly("num_parameters", &count_params)
      .def("breakdown", &format_breakdown)
      .def("tensor", [](const ModelParams& p, const std::string& name) {
        return to_numpy(p.weights.at(name));
      })
      .def_property_readonly("tensor_names", [](const ModelParams& p) {
        std::vector<std::string> names;
        for (const auto& [name, t] : p.weights) names.push_back(name);
        return names;
      });
  m.def("build_model", &build_model, py::arg("config"), py::arg("seed") = 0);
  m.def(
      "forward_embed",
      [](const ModelParams& p, const Array& x, const ArtistGraph& g) {
        return to_numpy(forward_embed(p, from_numpy(x), g));
      },
      py::arg("params"), py::arg("features"), py::arg("graph"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("margin", &TrainConfig::margin)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("fanouts", &TrainConfig::fanouts)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("full_neighborhood_positives", &TrainConfig::full_neighborhood_positives)
      .def_readwrite("validate", &TrainConfig::validate);
  m.def("unsupervised_defaults", &unsupervised_defaults);
  m.def("supervised_defaults", &supervised_defaults);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("params", &TrainResult::params)
      .def_readonly("diverged", &TrainResult::diverged)
      .def_readonly("divergence", &TrainResult::divergence)
      .def_property_readonly("log", [](const TrainResult& r) {
        std::vector<std::string> lines;
        for (const auto& e : r.log) lines.push_back(to_json_line(e));
        return lines;
      });
  m.def(
      "train",
      [](const Dataset& d, const DatasetSplit& s, const ModelConfig& mc, const TrainConfig& tc) {
        py::gil_scoped_release release;
        return train(d, s, mc, tc);
      },
      py::arg("dataset"), py::arg("split"), py::arg("model"), py::arg("config"));

  m.def(
      "ndcg_at_k",
      [](const std::vector<bool>& relevance, std::size_t num_relevant, std::size_t k) {
        const auto flags = std::make_unique<bool[]>(relevance.size());
        std::copy(relevance.begin(), relevance.end(), flags.get());
        return ndcg_at_k({flags.get(), relevance.size()}, num_relevant, k);
      },
      py::arg("relevance"), py::arg("num_relevant"), py::arg("k"));
  m.def(
      "evaluate_embedding",
      [](const ModelParams& p, const Dataset& d, const std::vector<NodeId>& train_nodes,
         const std::vector<NodeId>& held_out, std::size_t k) {
        const RankingEval r = evaluate_embedding(p, d, train_nodes, held_out, k);
        py::dict out;
        out["mean"] = r.mean;
        out["k"] = r.k;
        out["scored"] = r.scored.size();
        out["skipped"] = r.skipped;
        return out;
      },
      py::arg("params"), py::arg("dataset"), py::arg("train"), py::arg("held_out"),
      py::arg("k") = 200);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def(py::init([](const ModelParams& p, std::uint64_t seed, std::uint64_t split_seed) {
             Checkpoint c;
             c.params = p;
             c.seed = seed;
             c.split_seed = split_seed;
             return c;
           }),
           py::arg("params"), py::arg("seed") = 0, py::arg("split_seed") = 0)
      .def_readonly("params", &Checkpoint::params)
      .def_readonly("seed", &Checkpoint::seed)
      .def_readonly("split_seed", &Checkpoint::split_seed)
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); });
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  py::class_<LoadedService>(m, "Service")
      .def_property_readonly("size", [](const LoadedService& s) { return s.store.size(); })
      .def_property_readonly("provenance", [](const LoadedService& s) { return s.store.provenance; })
      .def_property_readonly("embeddings", [](const LoadedService& s) { return to_numpy(s.store.z); })
      .def("resolve", [](const LoadedService& s, const std::string& q) { return resolve_query(s.store, q); })
      .def("search", [](const LoadedService& s, const std::string& q, std::size_t limit) {
             return search_artists(s.store, q, limit);
           }, py::arg("query"), py::arg("limit") = 20)
      .def("recommend", [](const LoadedService& s, NodeId q, std::size_t k) {
             return items_to_list(recommend(s.store, q, k));
           }, py::arg("query"), py::arg("k") = 5)
      .def("recommend_fictitious",
           [](const LoadedService& s, const std::vector<NodeId>& members, std::size_t k,
              const std::string& name, std::optional<std::vector<double>> features) {
             const auto r = recommend_fictitious(s.ckpt, s.dataset, {name, members, std::move(features)}, k);
             return items_to_list(r.items);
           },
           py::arg("members"), py::arg("k") = 5, py::arg("name") = "fictitious artist",
           py::arg("features") = py::none())
      .def("projection", [](const LoadedService& s) { return to_numpy(project_2d(s.store.z)); });
  m.def("load_service", &load_service, py::arg("checkpoint"), py::arg("data_dir"));

  py::class_<ApiService, std::shared_ptr<ApiService>>(m, "ApiService")
      .def(py::init<LoadedService>())
      .def(
          "handle",
          [](const ApiService& api, const std::string& method, const std::string& path,
             const std::map<std::string, std::string>& params, const std::string& body) {
            const ApiResponse r = api.handle(method, path, params, body);
            return std::make_pair(r.status, r.body);
          },
          py::arg("method"), py::arg("path"), py::arg("params") = std::map<std::string, std::string>{},
          py::arg("body") = "");

  m.def(
      "project_2d", [](const Array& z) { return to_numpy(project_2d(from_numpy(z))); }, py::arg("z"));
}
