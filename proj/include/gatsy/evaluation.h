#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gatsy/dataset.h"
#include "gatsy/model.h"
#include "gatsy/training.h"

namespace gatsy {

/// DCG of the first k relevance flags (rank r weighted by 1/log2(r+1)),
/// divided by the DCG of min(k, num_relevant) leading hits. Returns 0 when
/// num_relevant is 0. Throws std::invalid_argument if k < 1.
double ndcg_at_k(std::span<const bool> relevance, std::size_t num_relevant, std::size_t k);

/// Same on node ids; `truth` must be sorted.
double ndcg_at_k(std::span<const NodeId> ranked, std::span<const NodeId> truth, std::size_t k);

/// All other nodes ordered by ascending Euclidean distance to `query` in
/// `z`, ties by index.
std::vector<NodeId> rank_by_distance(const Tensor& z, NodeId query);

struct RankingEval {
  std::vector<NodeId> scored;        // queries that had at least one true neighbor
  std::vector<double> per_artist;    // parallel to `scored`
  std::size_t skipped = 0;           // queries without true neighbors
  std::size_t k = 0;                 // effective cutoff
  double mean = 0;
};

/// Ranks every other node of `graph` for each query and scores it against
/// the query's neighbors in `graph`. The cutoff is min(k, n - 1).
RankingEval evaluate_ranking(const Tensor& z, const ArtistGraph& graph,
                             std::span<const NodeId> queries, std::size_t k);

/// Embeds pool = train + held-out nodes on the subgraph they induce
/// (eval mode, full neighborhoods) and ranks within the pool for every
/// held-out node.
RankingEval evaluate_embedding(const ModelParams& params, const Dataset& dataset,
                               std::span<const NodeId> train, std::span<const NodeId> held_out,
                               std::size_t k = 200);

struct F1Scores {
  double macro = 0;
  double micro = 0;
};

/// Macro f1 averages over every class occurring in predictions or labels.
/// Throws std::invalid_argument on empty or unequal inputs.
F1Scores f1_genre(std::span<const int> predictions, std::span<const int> labels);

/// Argmax class per node of `nodes` from the genre head, embedding in eval
/// mode on the subgraph induced by `context` together with `nodes`.
std::vector<int> predict_genres(const ModelParams& params, const Dataset& dataset,
                                std::span<const NodeId> context, std::span<const NodeId> nodes);

// ---------------------------------------------------------------------------
// Model comparison

struct NamedModel {
  std::string name;
  ModelConfig config;
  bool random_features = false;
};

struct EvalReport {
  std::string model;
  std::size_t parameters = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> ndcg;   // per successful seed
  std::vector<double> f1;     // per successful seed, supervised models only
  std::vector<std::uint64_t> failed_seeds;
  double ndcg_mean = 0;
  double ndcg_std = 0;
  std::optional<double> f1_mean;
  std::optional<double> f1_std;
  std::vector<std::string> notes;
};

/// Mean and sample standard deviation (0 for fewer than two values).
std::pair<double, double> mean_std(std::span<const double> values);

/// Trains and evaluates every model for seeds base_seed .. base_seed+n-1 on
/// one fixed split. Diverged runs are listed as failed and excluded.
std::vector<EvalReport> compare_models(const std::vector<NamedModel>& models,
                                       const Dataset& dataset, const DatasetSplit& split,
                                       const TrainConfig& config, std::size_t n_seeds,
                                       std::uint64_t base_seed = 0, std::ostream* progress = nullptr);

std::string report_to_json(const std::vector<EvalReport>& reports);
std::string format_report_table(const std::vector<EvalReport>& reports);

}  // namespace gatsy
