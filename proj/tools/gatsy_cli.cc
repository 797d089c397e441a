// Command-line front end: dataset generation, labeling, training,
// evaluation and the recommendation service.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gatsy/checkpoint.h"
#include "gatsy/evaluation.h"
#include "gatsy/genre.h"
#include "gatsy/recommend.h"
#include "gatsy/server.h"
#include "gatsy/synthetic.h"
#include "gatsy/training.h"

namespace fs = std::filesystem;
using namespace gatsy;

namespace {

struct DataFlags {
  std::string data;
  std::string edges;
  std::string ids;
  std::string features;
  std::string labels;

  void add(CLI::App* cmd, bool need_features) {
    cmd->add_option("--data", data, "Dataset directory (ids.tsv, edges.tsv, features, labels)");
    cmd->add_option("--edges", edges, "Edge list, id<TAB>id");
    cmd->add_option("--ids", ids, "Artist ids, id<TAB>name (default: ids.tsv beside --edges)");
    if (need_features) cmd->add_option("--features", features, "Feature matrix (text or binary)");
    cmd->add_option("--labels", labels, "Genre labels, id<TAB>genre");
  }

  Dataset load() const {
    if (!data.empty()) {
      Dataset ds = load_dataset(data);
      if (!labels.empty()) ds.labels = load_labels(labels, ds.graph);
      return ds;
    }
    if (edges.empty()) throw CLI::ValidationError("either --data or --edges is required");
    const fs::path ids_path = ids.empty() ? fs::path(edges).parent_path() / "ids.tsv" : fs::path(ids);
    Dataset ds;
    GraphLoadReport report;
    ds.graph = load_graph(edges, ids_path, &report);
    if (report.self_loops_dropped + report.duplicate_edges > 0) {
      std::cerr << "note: dropped " << report.self_loops_dropped << " self-loops and "
                << report.duplicate_edges << " duplicate edges\n";
    }
    if (features.empty()) throw CLI::ValidationError("--features is required with --edges");
    ds.features = load_features(features);
    if (ds.features.num_nodes() != ds.graph.num_nodes()) {
      throw std::invalid_argument(std::to_string(ds.features.num_nodes()) + " feature rows for " +
                                  std::to_string(ds.graph.num_nodes()) + " artists");
    }
    if (!labels.empty()) ds.labels = load_labels(labels, ds.graph);
    return ds;
  }
};

struct TrainFlags {
  TrainConfig config = unsupervised_defaults();
  std::optional<double> lr, weight_decay;
  std::optional<std::size_t> epochs;

  void add(CLI::App* cmd) {
    cmd->add_option("--lr", lr, "Initial learning rate (default 6e-5)");
    cmd->add_option("--weight-decay", weight_decay,
                    "Decoupled weight decay (default 0.01, or 0 with a genre head)");
    cmd->add_option("--epochs", epochs, "Epochs (default 50, or 20 with a genre head)");
    cmd->add_option("--margin", config.margin, "Triplet margin")->capture_default_str();
    cmd->add_option("--batch-size", config.batch_size, "Nodes per minibatch")->capture_default_str();
    cmd->add_option("--fanouts", config.fanouts, "Sampled neighbors per layer, input first")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_flag("--full-positives", config.full_neighborhood_positives,
                  "Mine positives from the full neighborhood instead of the sampled one");
    cmd->add_option("--k", config.ndcg_k, "nDCG cutoff for validation")->capture_default_str();
  }

  TrainConfig resolve(bool supervised, std::uint64_t seed) const {
    TrainConfig c = config;
    const TrainConfig d = supervised ? supervised_defaults() : unsupervised_defaults();
    c.lr = lr.value_or(d.lr);
    c.weight_decay = weight_decay.value_or(d.weight_decay);
    c.epochs = epochs.value_or(d.epochs);
    c.seed = seed;
    return c;
  }
};

ModelConfig configure_model(const std::string& name, const Dataset& ds, bool genre_head) {
  ModelConfig mc = model_preset(name, ds.features.values.cols());
  if (genre_head) {
    if (!ds.labels) throw CLI::ValidationError("--genre-head needs --labels");
    mc.genre_head = true;
    mc.num_classes = ds.labels->vocabulary.size();
  }
  return mc;
}

void print_items(const Recommendation& items) {
  std::size_t rank = 1;
  for (const auto& it : items) {
    std::cout << rank++ << "\t" << it.id << "\t" << it.name << "\t" << std::setprecision(6)
              << it.distance;
    if (it.genre) std::cout << "\t" << *it.genre;
    std::cout << "\n";
  }
}

std::vector<NodeId> parse_members(const EmbeddingStore& store, const std::string& csv) {
  std::vector<NodeId> out;
  std::stringstream in(csv);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (!token.empty()) out.push_back(resolve_query(store, token));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gatsy: graph-attention artist similarity"};
  app.require_subcommand(1);

  // generate
  SyntheticConfig syn;
  std::string gen_out;
  bool gen_text = false;
  auto* gen = app.add_subcommand("generate", "Write a synthetic block-structured dataset");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--blocks", syn.blocks)->capture_default_str();
  gen->add_option("--nodes-per-block", syn.nodes_per_block)->capture_default_str();
  gen->add_option("--p-in", syn.p_in)->capture_default_str();
  gen->add_option("--p-out", syn.p_out)->capture_default_str();
  gen->add_option("--dim", syn.feature_dim, "Feature dimension")->capture_default_str();
  gen->add_option("--separation", syn.separation, "Scale of block mean vectors")
      ->capture_default_str();
  gen->add_option("--noise", syn.noise, "Per-node feature noise")->capture_default_str();
  gen->add_option("--seed", syn.seed)->capture_default_str();
  gen->add_flag("--text", gen_text, "Write features as text instead of binary");

  // stats
  DataFlags stats_data;
  auto* stats = app.add_subcommand("stats", "Graph statistics");
  stats_data.add(stats, false);

  // label
  std::string label_edges, label_ids, label_cache, label_out, label_provider = "stub", label_rules;
  std::size_t vocab_size = 25;
  FetchOptions fetch;
  long long rate_ms = 1000;
  auto* label = app.add_subcommand("label", "Fetch genres and resolve one label per artist");
  label->add_option("--edges", label_edges)->required();
  label->add_option("--ids", label_ids)->required();
  label->add_option("--cache", label_cache, "Response cache directory")->required();
  label->add_option("--out", label_out, "Labels file to write")->required();
  label->add_flag("--offline", fetch.offline, "Serve from the cache only");
  label->add_option("--provider", label_provider, "Text embeddings: stub or file:PATH")
      ->capture_default_str();
  label->add_option("--vocab-size", vocab_size)->capture_default_str();
  label->add_option("--base-url", fetch.base_url)->capture_default_str();
  label->add_option("--path-template", fetch.path_template)->capture_default_str();
  label->add_option("--rate-ms", rate_ms, "Minimum spacing of uncached requests")
      ->capture_default_str();
  label->add_option("--rules-out", label_rules, "Also write id<TAB>rule per kept artist");

  // train
  DataFlags train_data;
  TrainFlags train_flags;
  std::string train_model = "gatsy", train_out, train_log;
  bool train_random = false, train_head = false;
  std::uint64_t train_seed = 0, split_seed = 0;
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_data.add(tr, true);
  tr->add_option("--model", train_model, "fc, sage, sage-bn or gatsy")->capture_default_str();
  tr->add_flag("--random-features", train_random, "Replace features by a seeded random matrix");
  tr->add_flag("--genre-head", train_head, "Add the supervised genre classifier");
  tr->add_option("--seed", train_seed)->capture_default_str();
  tr->add_option("--split-seed", split_seed)->capture_default_str();
  tr->add_option("--out", train_out, "Checkpoint path")->required();
  tr->add_option("--log", train_log, "JSON-lines training log (default: stdout)");
  train_flags.add(tr);

  // eval
  DataFlags eval_data;
  std::string eval_ckpt, eval_report;
  std::size_t eval_k = 200;
  std::optional<std::uint64_t> eval_split;
  auto* ev = app.add_subcommand("eval", "Test-set nDCG (and f1) of a checkpoint");
  eval_data.add(ev, true);
  ev->add_option("--ckpt", eval_ckpt)->required();
  ev->add_option("--k", eval_k)->capture_default_str();
  ev->add_option("--split-seed", eval_split, "Default: the seed stored in the checkpoint");
  ev->add_option("--report", eval_report, "JSON report path");

  // compare
  DataFlags cmp_data;
  TrainFlags cmp_flags;
  std::vector<std::string> cmp_models = {"fc", "sage", "sage-bn", "gatsy"};
  std::size_t cmp_seeds = 10;
  bool cmp_random = false, cmp_head = false;
  std::uint64_t cmp_split = 0;
  std::string cmp_report;
  auto* cmp = app.add_subcommand("compare", "Train and evaluate several models over seeds");
  cmp_data.add(cmp, true);
  cmp->add_option("--models", cmp_models)->delimiter(',')->capture_default_str();
  cmp->add_option("--seeds", cmp_seeds)->capture_default_str();
  cmp->add_option("--split-seed", cmp_split)->capture_default_str();
  cmp->add_flag("--random-features", cmp_random);
  cmp->add_flag("--genre-head", cmp_head);
  cmp->add_option("--report", cmp_report, "JSON report path");
  cmp_flags.add(cmp);

  // params
  std::string params_model = "gatsy";
  std::size_t params_dim = 2613, params_classes = 25;
  bool params_head = false;
  auto* prm = app.add_subcommand("params", "Per-layer parameter counts");
  prm->add_option("--model", params_model)->capture_default_str();
  prm->add_option("--input-dim", params_dim)->capture_default_str();
  prm->add_flag("--genre-head", params_head);
  prm->add_option("--classes", params_classes)->capture_default_str();
  std::optional<std::size_t> params_reference;
  prm->add_option("--reference", params_reference,
                  "Published total to reconcile the breakdown against");

  // recommend / inject / serve
  std::string svc_ckpt, svc_data, rec_query, inj_members, inj_name = "fictitious artist",
                                                           bind = "127.0.0.1:8080";
  std::size_t svc_k = 5;
  auto* rec = app.add_subcommand("recommend", "Nearest artists to a query artist");
  rec->add_option("--ckpt", svc_ckpt)->required();
  rec->add_option("--data", svc_data)->required();
  rec->add_option("--query", rec_query, "Artist id or name")->required();
  rec->add_option("--k", svc_k)->capture_default_str();
  auto* inj = app.add_subcommand("inject", "Recommendations for a fictitious artist");
  inj->add_option("--ckpt", svc_ckpt)->required();
  inj->add_option("--data", svc_data)->required();
  inj->add_option("--members", inj_members, "Comma-separated artist ids (the set S)")->required();
  inj->add_option("--name", inj_name)->capture_default_str();
  inj->add_option("--k", svc_k)->capture_default_str();
  auto* srv = app.add_subcommand("serve", "HTTP JSON API");
  srv->add_option("--ckpt", svc_ckpt)->required();
  srv->add_option("--data", svc_data)->required();
  srv->add_option("--bind", bind, "host:port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const Dataset ds = generate_synthetic(syn);
      save_dataset(ds, gen_out, !gen_text);
      std::cout << "wrote " << ds.graph.num_nodes() << " artists and " << ds.graph.num_edges()
                << " connections to " << gen_out << "\n";
    } else if (*stats) {
      ArtistGraph g;
      if (!stats_data.data.empty()) {
        g = load_graph(fs::path(stats_data.data) / "edges.tsv", fs::path(stats_data.data) / "ids.tsv");
      } else {
        if (stats_data.edges.empty()) throw CLI::ValidationError("either --data or --edges is required");
        const fs::path ids = stats_data.ids.empty() ? fs::path(stats_data.edges).parent_path() / "ids.tsv"
                                                    : fs::path(stats_data.ids);
        g = load_graph(stats_data.edges, ids);
      }
      const GraphStats s = compute_stats(g);
      // Published tables differ on whether a connection is a pair or an
      // adjacency entry, so both are printed.
      std::cout << std::left << std::fixed << std::setprecision(2)
                << std::setw(34) << "artists" << s.num_nodes << "\n"
                << std::setw(34) << "connections (undirected pairs)" << s.total_connections << "\n"
                << std::setw(34) << "adjacency entries (directed)" << s.directed_entries << "\n"
                << std::setw(34) << "pairs per artist" << s.avg_pairs_per_artist << "\n"
                << std::setw(34) << "connections per artist (degree)" << s.avg_connections_per_artist << "\n"
                << std::setw(34) << "degree quartiles (1st/2nd/3rd)" << s.q1 << " / " << s.q2
                << " / " << s.q3 << "\n";
    } else if (*label) {
      fetch.min_interval = std::chrono::milliseconds(rate_ms);
      const ArtistGraph g = load_graph(label_edges, label_ids);
      FetchReport report;
      const auto records = fetch_genres(g.artist_ids(), label_cache, fetch, &report);
      std::cerr << "cache hits " << report.cache_hits << ", fetched " << report.fetched
                << ", not found " << report.not_found << ", failed " << report.failed
                << ", missing offline " << report.missing_offline << "\n";
      std::cerr << count_distinct_genres(records) << " distinct raw genres\n";
      const auto vocab = build_vocabulary(records, vocab_size);
      const auto provider = make_provider(label_provider);
      const FinalizedLabels fin = finalize_labels(g, records, vocab, provider.get());
      save_labels(fin.labels, fin.graph, label_out);
      std::size_t counts[4] = {};
      for (auto r : fin.rules) ++counts[static_cast<int>(r)];
      std::cerr << "labeled " << fin.graph.num_nodes() << " artists: votes " << counts[0]
                << ", text " << counts[1] << ", neighbors " << counts[2] << "; pruned "
                << fin.pruned_ids.size() << " disconnected\n";
      if (!label_rules.empty()) {
        std::ofstream out(label_rules);
        for (NodeId i = 0; i < fin.graph.num_nodes(); ++i) {
          out << fin.graph.artist_ids()[i] << '\t' << to_string(fin.rules[i]) << '\n';
        }
      }
    } else if (*tr) {
      Dataset ds = train_data.load();
      Checkpoint ckpt;
      ckpt.seed = train_seed;
      ckpt.split_seed = split_seed;
      if (train_random) {
        ckpt.feature_kind = FeatureKind::kRandom;
        ckpt.feature_seed = train_seed ^ 0xfea7u;
        ds.features = random_features(ds.graph.num_nodes(), ds.features.values.cols(),
                                      *ckpt.feature_seed);
      }
      const ModelConfig mc = configure_model(train_model, ds, train_head);
      const TrainConfig tc = train_flags.resolve(train_head, train_seed);
      const DatasetSplit split = split_dataset(ds.graph.num_nodes(), split_seed);
      std::ofstream log_file;
      if (!train_log.empty()) log_file.open(train_log);
      const TrainResult run = train(ds, split, mc, tc, train_log.empty() ? &std::cout : &log_file);
      if (run.diverged) std::cerr << "training diverged (" << run.divergence << ")\n";
      ckpt.params = run.params;
      if (train_head) ckpt.vocabulary = ds.labels->vocabulary;
      save_checkpoint(ckpt, train_out);
      std::cerr << "saved " << train_out << " (" << count_params(ckpt.params) << " parameters)\n";
      return run.diverged ? 3 : 0;
    } else if (*ev) {
      Dataset ds = eval_data.load();
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      ds.features.values = model_inputs(ckpt, ds);
      const DatasetSplit split = split_dataset(ds.graph.num_nodes(), eval_split.value_or(ckpt.split_seed));
      const RankingEval r = evaluate_embedding(ckpt.params, ds, split.train, split.test, eval_k);
      EvalReport rep;
      rep.model = to_string(ckpt.params.config.gc_kind);
      rep.parameters = count_params(ckpt.params);
      rep.seeds = {ckpt.seed};
      rep.ndcg = {r.mean};
      rep.ndcg_mean = r.mean;
      rep.notes.push_back(std::to_string(r.scored.size()) + " test artists scored at K=" +
                          std::to_string(r.k) + ", " + std::to_string(r.skipped) +
                          " without neighbors skipped");
      if (ckpt.params.config.genre_head && ds.labels && ds.labels->complete()) {
        const auto pred = predict_genres(ckpt.params, ds, split.train, split.test);
        std::vector<int> truth;
        for (NodeId v : split.test) truth.push_back(ds.labels->labels[v]);
        const F1Scores f1 = f1_genre(pred, truth);
        rep.f1 = {f1.macro};
        rep.f1_mean = f1.macro;
        rep.f1_std = 0.0;
        rep.notes.push_back("micro f1 " + std::to_string(f1.micro));
      }
      std::cout << format_report_table({rep});
      if (!eval_report.empty()) std::ofstream(eval_report) << report_to_json({rep}) << "\n";
    } else if (*cmp) {
      const Dataset ds = cmp_data.load();
      std::vector<NamedModel> models;
      for (const auto& name : cmp_models) {
        models.push_back({name, configure_model(name, ds, cmp_head), cmp_random});
      }
      const TrainConfig tc = cmp_flags.resolve(cmp_head, 0);
      const DatasetSplit split = split_dataset(ds.graph.num_nodes(), cmp_split);
      const auto reports = compare_models(models, ds, split, tc, cmp_seeds, 0, &std::cerr);
      std::cout << format_report_table(reports);
      if (!cmp_report.empty()) std::ofstream(cmp_report) << report_to_json(reports) << "\n";
    } else if (*prm) {
      ModelConfig mc = model_preset(params_model, params_dim);
      mc.genre_head = params_head;
      mc.num_classes = params_classes;
      const ModelParams p = build_model(mc, 0);
      std::cout << format_breakdown(p);
      if (params_reference) std::cout << explain_difference(p, *params_reference) << "\n";
    } else if (*rec) {
      const LoadedService svc = load_service(svc_ckpt, svc_data);
      const NodeId q = resolve_query(svc.store, rec_query);
      std::cout << "# " << svc.store.ids[q] << "\t" << svc.store.names[q] << "\n";
      print_items(recommend(svc.store, q, svc_k));
    } else if (*inj) {
      const LoadedService svc = load_service(svc_ckpt, svc_data);
      FictitiousArtistSpec spec;
      spec.name = inj_name;
      spec.members = parse_members(svc.store, inj_members);
      print_items(recommend_fictitious(svc.ckpt, svc.dataset, spec, svc_k).items);
    } else if (*srv) {
      const auto [host, port] = parse_bind_address(bind);
      auto api = std::make_shared<const ApiService>(load_service(svc_ckpt, svc_data));
      HttpServer server(api);
      std::cerr << "serving " << api->store().size() << " artists on http://" << host << ":"
                << port << "\n";
      server.listen(host, port);
    }
  } catch (const QueryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& s : e.suggestions) std::cerr << "  " << s << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
