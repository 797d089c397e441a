#include "gatsy/training.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "gatsy/evaluation.h"

namespace gatsy {

void TrainConfig::validate_config() const {
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be at least 1");
  if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be at least 2");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: negative weight decay");
  if (margin < 0.0) throw std::invalid_argument("TrainConfig: negative margin");
  if (fanouts.empty() || std::find(fanouts.begin(), fanouts.end(), 0) != fanouts.end()) {
    throw std::invalid_argument("TrainConfig: fanouts must be non-empty and positive");
  }
  if (!(min_distance > 0.0 && min_distance < cutoff)) {
    throw std::invalid_argument("TrainConfig: need 0 < min_distance < cutoff");
  }
}

TrainConfig unsupervised_defaults() { return TrainConfig{}; }

TrainConfig supervised_defaults() {
  TrainConfig c;
  c.weight_decay = 0.0;
  c.epochs = 20;
  return c;
}

double log_inverse_sphere_density(double d, std::size_t dim) {
  const double n = static_cast<double>(dim);
  return -(n - 2.0) * std::log(d) - ((n - 3.0) / 2.0) * std::log(1.0 - 0.25 * d * d);
}

std::vector<double> negative_weights(std::span<const double> distances, std::size_t dim,
                                     double min_distance, double cutoff) {
  std::vector<double> w(distances.size(), 0.0);
  if (w.empty()) return w;
  // The density vanishes at d = 2, so clamp just inside the sphere's diameter.
  constexpr double kMaxDistance = 1.999;
  double max_log = -std::numeric_limits<double>::infinity();
  std::vector<double> logs(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double d = std::clamp(distances[i], min_distance, kMaxDistance);
    logs[i] = log_inverse_sphere_density(d, dim);
    if (distances[i] < cutoff) max_log = std::max(max_log, logs[i]);
  }
  double total = 0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] < cutoff) {
      w[i] = std::exp(logs[i] - max_log);
      total += w[i];
    }
  }
  if (!(total > 0.0)) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return w;
  }
  for (double& x : w) x /= total;
  return w;
}

std::vector<std::vector<std::size_t>> batch_positives(const SampledNeighborhood& hood,
                                                      const ArtistGraph& graph, bool full) {
  const auto& batch = hood.batch;
  std::vector<std::vector<std::size_t>> out(batch.size());
  if (full || hood.blocks.empty()) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (i != j && graph.has_edge(batch[i], batch[j])) out[i].push_back(j);
      }
    }
    return out;
  }
  const Block& last = hood.blocks.back();
  for (std::size_t i = 0; i < last.num_dst; ++i) {
    for (std::size_t e = last.offsets[i]; e < last.offsets[i + 1]; ++e) {
      const std::size_t local = last.neighbors[e];
      if (local < last.num_dst && local != i) out[i].push_back(local);
    }
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

TripletBatch sample_triplets(const Tensor& embeddings, const SampledNeighborhood& hood,
                             const ArtistGraph& graph, const TrainConfig& config,
                             std::uint64_t seed) {
  const auto& batch = hood.batch;
  if (embeddings.rows() != batch.size()) {
    throw DimensionError("sample_triplets: " + std::to_string(embeddings.rows()) +
                         " embedding rows for a batch of " + std::to_string(batch.size()));
  }
  Tensor unit = embeddings;
  for (std::size_t r = 0; r < unit.rows(); ++r) {
    auto row = unit.row(r);
    double norm = 0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (double& v : row) v /= norm;
    }
  }

  const auto positives = batch_positives(hood, graph, config.full_neighborhood_positives);
  std::mt19937_64 rng(seed);
  TripletBatch triplets;
  std::vector<std::size_t> candidates;
  std::vector<double> distances;
  for (std::size_t a = 0; a < batch.size(); ++a) {
    if (positives[a].empty()) continue;
    candidates.clear();
    distances.clear();
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (j == a || graph.has_edge(batch[a], batch[j])) continue;
      candidates.push_back(j);
      distances.push_back(std::sqrt(linalg::squared_distance(unit.row(a), unit.row(j))));
    }
    if (candidates.empty()) continue;
    const auto w = negative_weights(distances, embeddings.cols(), config.min_distance,
                                    config.cutoff);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    for (std::size_t p : positives[a]) triplets.push_back({a, p, candidates[pick(rng)]});
  }
  return triplets;
}

ad::Var triplet_loss(const ad::Var& za, const ad::Var& zp, const ad::Var& zn, double margin) {
  const ad::Var gap = ad::sub(ad::row_distance(za, zp), ad::row_distance(za, zn));
  return ad::sum(ad::relu(ad::add_scalar(gap, margin)));
}

ad::Var combined_loss(const ad::Var& z, const ad::Var* logits,
                      std::span<const std::size_t> labels, const TripletBatch& triplets,
                      double margin, LossParts* parts) {
  ad::Tape& tape = *z.tape();
  ad::Var total = tape.constant(Tensor::scalar(0.0));
  LossParts local;
  if (!triplets.empty()) {
    std::vector<std::size_t> ia, ip, in;
    for (const auto& t : triplets) {
      ia.push_back(t.anchor);
      ip.push_back(t.positive);
      in.push_back(t.negative);
    }
    total = triplet_loss(ad::gather_rows(z, ia), ad::gather_rows(z, ip), ad::gather_rows(z, in),
                         margin);
    local.triplet = total.value().item();
  }
  if (logits != nullptr) {
    if (labels.size() != logits->rows()) {
      throw std::invalid_argument("combined_loss: " + std::to_string(labels.size()) +
                                  " labels for " + std::to_string(logits->rows()) + " rows");
    }
    const ad::Var ce = ad::softmax_cross_entropy(*logits, labels);
    local.cross_entropy = ce.value().item();
    total = ad::add(total, ce);
  }
  if (parts != nullptr) *parts = local;
  return total;
}

void adam_step(std::map<std::string, Tensor>& params, const ad::Gradients& grads,
               OptimizerState& state, double lr, double weight_decay) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("adam_step: unknown parameter " + name);
    if (g.shape() != it->second.shape()) {
      throw DimensionError("adam_step: gradient " + g.shape_string() + " for parameter " + name +
                           " " + it->second.shape_string());
    }
    if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient for " + name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  for (auto& [name, p] : params) {
    auto& m = state.m.try_emplace(name, Tensor::zeros_like(p)).first->second;
    auto& v = state.v.try_emplace(name, Tensor::zeros_like(p)).first->second;
    const auto g_it = grads.find(name);
    const double* g = g_it == grads.end() ? nullptr : g_it->second.data();
    double* pd = p.data();
    double* md = m.data();
    double* vd = v.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g == nullptr ? 0.0 : g[i];
      md[i] = kBeta1 * md[i] + (1.0 - kBeta1) * gi;
      vd[i] = kBeta2 * vd[i] + (1.0 - kBeta2) * gi * gi;
      const double m_hat = md[i] / c1;
      const double v_hat = vd[i] / c2;
      pd[i] -= lr * (m_hat / (std::sqrt(v_hat) + kEps) + weight_decay * pd[i]);
    }
  }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0) {
  if (total_epochs == 0 || epoch >= total_epochs) {
    throw std::invalid_argument("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(total_epochs) + ")");
  }
  const double pi = std::acos(-1.0);
  return lr0 * 0.5 *
         (1.0 + std::cos(pi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

std::string to_json_line(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["lr"] = log.lr;
  j["mean_loss"] = log.mean_loss;
  if (log.mean_ce) j["mean_ce"] = *log.mean_ce;
  j["val_ndcg"] = log.val_ndcg ? nlohmann::ordered_json(*log.val_ndcg) : nullptr;
  if (log.val_f1) j["val_f1"] = *log.val_f1;
  j["triplets"] = log.triplets;
  j["skipped_steps"] = log.skipped_steps;
  return j.dump();
}

namespace {

std::vector<std::vector<NodeId>> make_batches(std::vector<NodeId> order, std::size_t batch_size) {
  std::vector<std::vector<NodeId>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(order.size(), i + batch_size)));
  }
  // Batch norm needs two rows; a lone trailing node joins the previous batch.
  if (batches.size() > 1 && batches.back().size() < 2) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

}  // namespace

TrainResult train(const Dataset& dataset, const DatasetSplit& split, const ModelConfig& model,
                  const TrainConfig& config, std::ostream* jsonl) {
  config.validate_config();
  model.validate();
  const Tensor& features = dataset.features.values;
  if (features.cols() != model.input_dim || features.rows() != dataset.graph.num_nodes()) {
    throw DimensionError("train: features " + features.shape_string() + " for " +
                         std::to_string(dataset.graph.num_nodes()) + " nodes and input_dim " +
                         std::to_string(model.input_dim));
  }
  if (split.train.size() < 2) throw std::invalid_argument("train: fewer than two training nodes");

  const Subgraph sub = graph_restricted_to(dataset.graph, split.train);
  const Tensor x_train = linalg::gather_rows(features, sub.to_parent);
  const bool supervised = model.genre_head;
  std::vector<std::size_t> y_train;
  if (supervised) {
    if (!dataset.labels || !dataset.labels->complete()) {
      throw std::invalid_argument("train: a genre head needs complete labels");
    }
    for (NodeId parent : sub.to_parent) {
      const GenreId g = dataset.labels->labels[parent];
      if (static_cast<std::size_t>(g) >= model.num_classes) {
        throw std::invalid_argument("train: label " + std::to_string(g) + " outside " +
                                    std::to_string(model.num_classes) + " classes");
      }
      y_train.push_back(static_cast<std::size_t>(g));
    }
  }

  std::vector<std::size_t> fanouts = config.fanouts;
  fanouts.resize(model.num_gc(), fanouts.back());

  TrainResult result;
  result.params = build_model(model, config.seed);
  OptimizerState state;
  std::mt19937_64 rng(config.seed ^ 0x5eed5eed5eed5eedULL);
  std::vector<NodeId> order(sub.graph.num_nodes());
  std::iota(order.begin(), order.end(), NodeId{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const ModelParams last_good = result.params;
    const OptimizerState last_state = state;
    EpochLog log;
    log.epoch = epoch;
    log.lr = cosine_lr(epoch, config.epochs, config.lr);
    std::shuffle(order.begin(), order.end(), rng);
    double triplet_sum = 0;
    double ce_sum = 0;
    std::size_t ce_steps = 0;
    try {
      for (const auto& batch : make_batches(order, config.batch_size)) {
        const std::uint64_t sample_seed = rng();
        const std::uint64_t triplet_seed = rng();
        SampledNeighborhood hood;
        if (model.num_gc() == 0) {
          hood.batch = batch;
        } else {
          hood = neighbor_sample(sub.graph, batch, fanouts, sample_seed, model.self_loops());
        }
        ad::Tape tape;
        Network net(tape, result.params, true);
        const ForwardResult fwd = net.forward(gather_inputs(x_train, hood), hood, Mode::kTrain);
        const TripletBatch triplets =
            sample_triplets(fwd.embedding.value(), hood, sub.graph, config, triplet_seed);
        if (triplets.empty() && !supervised) {
          ++log.skipped_steps;
          continue;
        }
        std::vector<std::size_t> labels;
        if (supervised) {
          for (NodeId node : batch) labels.push_back(y_train[node]);
        }
        LossParts parts;
        const ad::Var loss = combined_loss(fwd.embedding, supervised ? &fwd.logits : nullptr,
                                           labels, triplets, config.margin, &parts);
        const ad::Gradients grads = tape.backward(loss);
        adam_step(result.params.weights, grads, state, log.lr, config.weight_decay);
        triplet_sum += parts.triplet;
        log.triplets += triplets.size();
        if (supervised) {
          ce_sum += parts.cross_entropy;
          ++ce_steps;
        }
      }
    } catch (const NumericError& e) {
      result.params = last_good;
      state = last_state;
      result.diverged = true;
      result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    log.mean_loss = log.triplets == 0 ? 0.0 : triplet_sum / static_cast<double>(log.triplets);
    if (supervised) log.mean_ce = ce_steps == 0 ? 0.0 : ce_sum / static_cast<double>(ce_steps);
    if (config.validate && !split.validation.empty()) {
      log.val_ndcg =
          evaluate_embedding(result.params, dataset, split.train, split.validation, config.ndcg_k)
              .mean;
      if (supervised) {
        const auto pred = predict_genres(result.params, dataset, split.train, split.validation);
        std::vector<int> truth;
        for (NodeId v : split.validation) truth.push_back(dataset.labels->labels[v]);
        log.val_f1 = f1_genre(pred, truth).macro;
      }
    }
    if (jsonl != nullptr) *jsonl << to_json_line(log) << "\n" << std::flush;
    result.log.push_back(log);
  }
  return result;
}

}  // namespace gatsy
