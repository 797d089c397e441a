#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gatsy/dataset.h"
#include "gatsy/model.h"

namespace gatsy {

struct TrainConfig {
  double lr = 6e-5;
  double weight_decay = 0.01;
  std::size_t epochs = 50;
  double margin = 0.2;
  std::size_t batch_size = 256;
  /// Neighbors sampled per message-passing layer, listed from the input
  /// layer to the output layer. Resized to the model's layer count by
  /// repeating the last entry.
  std::vector<std::size_t> fanouts = {20, 20};
  std::uint64_t seed = 0;
  /// Positives from the full training graph instead of the sampled last layer.
  bool full_neighborhood_positives = false;
  /// Distance-weighted sampling: distances between unit-normalized
  /// embeddings are clamped below at `min_distance`, and negatives at or
  /// beyond `cutoff` get zero weight.
  double min_distance = 0.5;
  double cutoff = 1.4;
  std::size_t ndcg_k = 200;
  bool validate = true;

  /// Throws std::invalid_argument when lr <= 0, epochs == 0 or batch_size < 2.
  void validate_config() const;
};

/// lr 6e-5, weight decay 0.01, 50 epochs.
TrainConfig unsupervised_defaults();
/// lr 6e-5, weight decay 0, 20 epochs.
TrainConfig supervised_defaults();

/// Rows of the current minibatch embedding matrix.
struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
  bool operator==(const Triplet&) const = default;
};

using TripletBatch = std::vector<Triplet>;

/// log q(d)^-1 for points on the unit sphere in `dim` dimensions, up to an
/// additive constant: -(dim-2) ln d - ((dim-3)/2) ln(1 - d^2/4).
double log_inverse_sphere_density(double d, std::size_t dim);

/// Sampling weights for candidate negatives at unit-sphere distances `d`,
/// normalized to sum to 1. Falls back to uniform when every candidate lies
/// at or beyond the cutoff.
std::vector<double> negative_weights(std::span<const double> distances, std::size_t dim,
                                     double min_distance, double cutoff);

/// Positive pairs per anchor row of the minibatch. By default these are the
/// anchor's sampled neighbors in the last layer that are themselves batch
/// nodes; with `full` (or without message-passing layers) they are all
/// batch nodes adjacent in `graph`.
std::vector<std::vector<std::size_t>> batch_positives(const SampledNeighborhood& hood,
                                                      const ArtistGraph& graph, bool full);

/// One negative per (anchor, positive) pair, drawn among batch rows not
/// adjacent to the anchor in `graph` with distance-weighted probabilities.
/// Empty when no anchor has both a positive and a candidate negative.
TripletBatch sample_triplets(const Tensor& embeddings, const SampledNeighborhood& hood,
                             const ArtistGraph& graph, const TrainConfig& config,
                             std::uint64_t seed);

/// Sum over rows of [d(a,p) - d(a,n) + margin]+.
ad::Var triplet_loss(const ad::Var& za, const ad::Var& zp, const ad::Var& zn, double margin);

struct LossParts {
  double triplet = 0;
  double cross_entropy = 0;
};

/// Triplet loss over `triplets` (rows of `z`), plus mean cross-entropy of
/// `logits` against `labels` when logits are given.
ad::Var combined_loss(const ad::Var& z, const ad::Var* logits,
                      std::span<const std::size_t> labels, const TripletBatch& triplets,
                      double margin, LossParts* parts = nullptr);

struct OptimizerState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::size_t step = 0;
};

/// Adam (0.9, 0.999, 1e-8) with decoupled weight decay:
/// p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
/// Throws NumericError and leaves everything untouched if any gradient is
/// not finite.
void adam_step(std::map<std::string, Tensor>& params, const ad::Gradients& grads,
               OptimizerState& state, double lr, double weight_decay);

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double mean_loss = 0;  // triplet hinge per triplet
  std::optional<double> mean_ce;
  std::optional<double> val_ndcg;
  std::optional<double> val_f1;
  std::size_t triplets = 0;
  std::size_t skipped_steps = 0;
};

std::string to_json_line(const EpochLog& log);

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string divergence;
};

/// Trains on the subgraph induced by split.train. Each epoch shuffles the
/// training nodes into minibatches (a final batch of one node joins the
/// previous one), samples neighborhoods, mines triplets, and takes one Adam
/// step per batch at the epoch's cosine-scheduled rate. With a genre head
/// the dataset must carry complete labels. On a non-finite loss the run
/// stops and returns the parameters from the end of the last full epoch.
/// Deterministic for fixed inputs and config.seed.
TrainResult train(const Dataset& dataset, const DatasetSplit& split, const ModelConfig& model,
                  const TrainConfig& config, std::ostream* jsonl = nullptr);

}  // namespace gatsy
