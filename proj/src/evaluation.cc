#include "gatsy/evaluation.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gatsy {

double ndcg_at_k(std::span<const bool> relevance, std::size_t num_relevant, std::size_t k) {
  if (k < 1) throw std::invalid_argument("ndcg_at_k: K must be at least 1");
  if (num_relevant == 0) return 0.0;
  double dcg = 0;
  for (std::size_t r = 0; r < std::min(k, relevance.size()); ++r) {
    if (relevance[r]) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double ideal = 0;
  for (std::size_t r = 0; r < std::min(k, num_relevant); ++r) {
    ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / ideal;
}

double ndcg_at_k(std::span<const NodeId> ranked, std::span<const NodeId> truth, std::size_t k) {
  const std::size_t depth = std::min(k, ranked.size());
  // std::vector<bool> is not contiguous, so the flags live in a plain array.
  auto rel = std::make_unique<bool[]>(depth);
  for (std::size_t r = 0; r < depth; ++r) {
    rel[r] = std::binary_search(truth.begin(), truth.end(), ranked[r]);
  }
  return ndcg_at_k(std::span<const bool>(rel.get(), depth), truth.size(), k);
}

std::vector<NodeId> rank_by_distance(const Tensor& z, NodeId query) {
  if (query >= z.rows()) throw std::out_of_range("rank_by_distance: query outside embedding");
  std::vector<std::pair<double, NodeId>> scored;
  scored.reserve(z.rows());
  for (NodeId j = 0; j < z.rows(); ++j) {
    if (j != query) scored.emplace_back(linalg::squared_distance(z.row(query), z.row(j)), j);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<NodeId> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

RankingEval evaluate_ranking(const Tensor& z, const ArtistGraph& graph,
                             std::span<const NodeId> queries, std::size_t k) {
  if (z.rows() != graph.num_nodes()) {
    throw DimensionError("evaluate_ranking: " + std::to_string(z.rows()) + " embeddings for " +
                         std::to_string(graph.num_nodes()) + " nodes");
  }
  if (k < 1) throw std::invalid_argument("evaluate_ranking: K must be at least 1");
  RankingEval out;
  out.k = std::min(k, graph.num_nodes() > 0 ? graph.num_nodes() - 1 : 0);
  if (out.k == 0) return out;
  for (NodeId q : queries) {
    const auto truth = graph.neighbors(q);
    if (truth.empty()) {
      ++out.skipped;
      continue;
    }
    const auto ranked = rank_by_distance(z, q);
    out.scored.push_back(q);
    out.per_artist.push_back(ndcg_at_k(ranked, truth, out.k));
  }
  if (!out.per_artist.empty()) {
    out.mean = std::accumulate(out.per_artist.begin(), out.per_artist.end(), 0.0) /
               static_cast<double>(out.per_artist.size());
  }
  return out;
}

namespace {

struct Pool {
  Subgraph sub;
  Tensor x;
  std::vector<NodeId> local_queries;
};

Pool make_pool(const Dataset& dataset, std::span<const NodeId> context,
               std::span<const NodeId> queries) {
  std::vector<NodeId> all(context.begin(), context.end());
  all.insert(all.end(), queries.begin(), queries.end());
  Pool pool;
  pool.sub = graph_restricted_to(dataset.graph, all);
  pool.x = linalg::gather_rows(dataset.features.values, pool.sub.to_parent);
  for (NodeId q : queries) {
    const auto it = std::lower_bound(pool.sub.to_parent.begin(), pool.sub.to_parent.end(), q);
    pool.local_queries.push_back(static_cast<NodeId>(it - pool.sub.to_parent.begin()));
  }
  return pool;
}

}  // namespace

RankingEval evaluate_embedding(const ModelParams& params, const Dataset& dataset,
                               std::span<const NodeId> train, std::span<const NodeId> held_out,
                               std::size_t k) {
  const Pool pool = make_pool(dataset, train, held_out);
  const Tensor z = forward_embed(params, pool.x, pool.sub.graph);
  RankingEval out = evaluate_ranking(z, pool.sub.graph, pool.local_queries, k);
  for (NodeId& s : out.scored) s = pool.sub.to_parent[s];
  return out;
}

F1Scores f1_genre(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw std::invalid_argument("f1_genre: need equal, non-empty prediction and label lists");
  }
  std::set<int> classes(labels.begin(), labels.end());
  classes.insert(predictions.begin(), predictions.end());
  std::map<int, std::size_t> tp, fp, fn;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == labels[i]) {
      ++tp[labels[i]];
      ++correct;
    } else {
      ++fp[predictions[i]];
      ++fn[labels[i]];
    }
  }
  F1Scores out;
  for (int c : classes) {
    const double denom = 2.0 * static_cast<double>(tp[c]) + static_cast<double>(fp[c] + fn[c]);
    out.macro += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / denom;
  }
  out.macro /= static_cast<double>(classes.size());
  // Single-label: micro precision, recall and f1 all equal accuracy.
  out.micro = static_cast<double>(correct) / static_cast<double>(labels.size());
  return out;
}

std::vector<int> predict_genres(const ModelParams& params, const Dataset& dataset,
                                std::span<const NodeId> context, std::span<const NodeId> nodes) {
  const Pool pool = make_pool(dataset, context, nodes);
  const SupervisedOutput out = forward_supervised(params, pool.x, pool.sub.graph);
  std::vector<int> pred;
  pred.reserve(nodes.size());
  for (NodeId local : pool.local_queries) {
    const auto row = out.scores.row(local);
    pred.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return pred;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

std::vector<EvalReport> compare_models(const std::vector<NamedModel>& models,
                                       const Dataset& dataset, const DatasetSplit& split,
                                       const TrainConfig& config, std::size_t n_seeds,
                                       std::uint64_t base_seed, std::ostream* progress) {
  std::vector<EvalReport> reports;
  for (const auto& m : models) {
    EvalReport rep;
    rep.model = m.name;
    rep.parameters = count_params(build_model(m.config, 0));
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const std::uint64_t seed = base_seed + s;
      rep.seeds.push_back(seed);
      Dataset ds = dataset;
      if (m.random_features) {
        ds.features = random_features(ds.graph.num_nodes(), ds.features.values.cols(),
                                      seed ^ 0xfea7u);
      }
      TrainConfig tc = config;
      tc.seed = seed;
      tc.validate = false;
      const TrainResult run = train(ds, split, m.config, tc);
      if (run.diverged) {
        rep.failed_seeds.push_back(seed);
        rep.notes.push_back("seed " + std::to_string(seed) + " diverged: " + run.divergence);
        continue;
      }
      const double ndcg = evaluate_embedding(run.params, ds, split.train, split.test,
                                             config.ndcg_k).mean;
      rep.ndcg.push_back(ndcg);
      if (m.config.genre_head) {
        const auto pred = predict_genres(run.params, ds, split.train, split.test);
        std::vector<int> truth;
        for (NodeId v : split.test) truth.push_back(ds.labels->labels[v]);
        rep.f1.push_back(f1_genre(pred, truth).macro);
      }
      if (progress != nullptr) {
        *progress << m.name << " seed " << seed << ": ndcg " << ndcg << "\n" << std::flush;
      }
    }
    std::tie(rep.ndcg_mean, rep.ndcg_std) = mean_std(rep.ndcg);
    if (!rep.f1.empty()) {
      const auto [fm, fs] = mean_std(rep.f1);
      rep.f1_mean = fm;
      rep.f1_std = fs;
    }
    if (!rep.failed_seeds.empty()) {
      rep.notes.push_back(std::to_string(rep.failed_seeds.size()) +
                          " failed seed(s) excluded from the statistics");
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

std::string report_to_json(const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["model"] = r.model;
    j["parameters"] = r.parameters;
    j["seeds"] = r.seeds;
    j["ndcg_mean"] = r.ndcg_mean;
    j["ndcg_std"] = r.ndcg_std;
    j["ndcg"] = r.ndcg;
    if (r.f1_mean) {
      j["f1_mean"] = *r.f1_mean;
      j["f1_std"] = *r.f1_std;
      j["f1"] = r.f1;
    }
    j["failed_seeds"] = r.failed_seeds;
    j["notes"] = r.notes;
    out.push_back(std::move(j));
  }
  return out.dump(2);
}

std::string format_report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "model" << std::right << std::setw(12) << "params"
      << std::setw(22) << "nDCG" << std::setw(22) << "f1" << std::setw(8) << "seeds" << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports) {
    std::ostringstream ndcg, f1;
    ndcg << std::fixed << std::setprecision(4) << r.ndcg_mean << " +- " << r.ndcg_std;
    if (r.f1_mean) f1 << std::fixed << std::setprecision(4) << *r.f1_mean << " +- " << *r.f1_std;
    out << std::left << std::setw(16) << r.model << std::right << std::setw(12) << r.parameters
        << std::setw(22) << ndcg.str() << std::setw(22) << (r.f1_mean ? f1.str() : "-")
        << std::setw(8) << r.ndcg.size() << "\n";
  }
  return out.str();
}

}  // namespace gatsy
