#include "triage/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "triage/errors.hpp"
#include "triage/text.hpp"

namespace triage {

using nlohmann::json;

const std::vector<std::string_view> kTrainStages{
    "encoder", "group_head", "resolver_head", "lda", "clustering", "list_head",
    "group_prior", "ann_index", "scorer", "ensemble"};

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Per-stage seed; stages never share a random stream.
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
  return mix64(seed ^ fnv1a64(stage));
}

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw SchemaError(std::string(where), "config section must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw SchemaError(k, "unknown config key '" + k + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(key, std::string("bad value for config key '") + key + "': " + e.what());
  }
}

std::vector<std::vector<std::string>> tokens_of(std::span<const CleanTicket> tickets) {
  std::vector<std::vector<std::string>> out;
  out.reserve(tickets.size());
  for (const auto& t : tickets) out.push_back(t.tokens);
  return out;
}

std::vector<std::string> column(std::span<const CleanTicket> tickets, std::string CleanTicket::*field) {
  std::vector<std::string> out;
  out.reserve(tickets.size());
  for (const auto& t : tickets) out.push_back(t.*field);
  return out;
}

std::vector<ScorerExample> scorer_examples(const ModelBundle& b, std::span<const CleanTicket> tickets,
                                           std::span<const Embedding> embeddings) {
  std::vector<ScorerExample> out;
  const std::size_t budget = std::max(b.config.ann_search_budget, b.config.n_neighbors);
  for (std::size_t i = 0; i < tickets.size(); ++i) {
    if (is_zero(embeddings[i]) || !b.resolvers().find(tickets[i].resolver)) continue;
    out.push_back({b.ann.query(embeddings[i], b.config.n_neighbors, budget), tickets[i].resolver});
  }
  return out;
}

ProbVector similar_model(const ModelBundle& b, std::span<const Neighbor> neighbors) {
  if (neighbors.empty()) return ProbVector(b.resolvers().size(), 0.0);
  const auto scores = resolver_scores(neighbors, b.scorer);
  const auto probs = scores_to_probs(scores);
  return align_probs(probs, b.resolvers());
}

// Fills the four aligned resolver-model outputs. Per-model times exclude the
// shared group head and ANN query.
void resolver_outputs(const ModelBundle& b, std::span<const float> e, std::span<const double> group_probs,
                      std::span<const Neighbor> neighbors, AlignedOutputs& out,
                      std::array<double, kResolverModels>* secs) {
  auto t0 = Clock::now();
  auto lap = [&](std::size_t j) {
    if (secs) (*secs)[j] = seconds_since(t0);
    t0 = Clock::now();
  };
  out[0] = b.resolver_head.predict_proba(e);
  lap(0);
  if (b.list_head) {
    out[1] = align_probs(list_to_resolver_probs(b.list_head->predict_proba(e), b.list_head->vocabulary(), b.lists),
                         b.resolvers());
  } else {
    out[1].assign(b.resolvers().size(), 0.0);
  }
  lap(1);
  out[2] = group_based_probs(group_probs, b.groups(), b.prior);
  lap(2);
  out[3] = similar_model(b, neighbors.first(std::min(b.config.n_neighbors, neighbors.size())));
  lap(3);
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  reject_unknown(j, "config",
                 {"seed", "encoder_dimension", "head", "lda", "hdbscan", "topic_size_cap", "forest",
                  "ann_search_budget", "n_neighbors", "scorer", "ensemble_steps"});
  read_opt(j, "seed", c.seed);
  read_opt(j, "encoder_dimension", c.encoder_dimension);
  read_opt(j, "topic_size_cap", c.topic_size_cap);
  read_opt(j, "ann_search_budget", c.ann_search_budget);
  read_opt(j, "n_neighbors", c.n_neighbors);
  read_opt(j, "ensemble_steps", c.ensemble_steps);
  if (j.contains("head")) {
    const auto& h = j["head"];
    reject_unknown(h, "head", {"lr", "batch", "epochs", "l2", "patience", "lr_decay",
                               "validation_fraction", "init_scale"});
    read_opt(h, "lr", c.head.lr);
    read_opt(h, "batch", c.head.batch);
    read_opt(h, "epochs", c.head.epochs);
    read_opt(h, "l2", c.head.l2);
    read_opt(h, "patience", c.head.patience);
    read_opt(h, "lr_decay", c.head.lr_decay);
    read_opt(h, "validation_fraction", c.head.validation_fraction);
    read_opt(h, "init_scale", c.head.init_scale);
  }
  if (j.contains("lda")) {
    const auto& l = j["lda"];
    reject_unknown(l, "lda", {"topics", "alpha", "beta", "iterations"});
    read_opt(l, "topics", c.lda.topics);
    read_opt(l, "alpha", c.lda.alpha);
    read_opt(l, "beta", c.lda.beta);
    read_opt(l, "iterations", c.lda.iterations);
  }
  if (j.contains("hdbscan")) {
    const auto& h = j["hdbscan"];
    reject_unknown(h, "hdbscan", {"min_cluster_size", "min_samples", "allow_single_cluster"});
    read_opt(h, "min_cluster_size", c.hdbscan.min_cluster_size);
    read_opt(h, "min_samples", c.hdbscan.min_samples);
    read_opt(h, "allow_single_cluster", c.hdbscan.allow_single_cluster);
  }
  if (j.contains("forest")) {
    const auto& f = j["forest"];
    reject_unknown(f, "forest", {"num_trees", "leaf_size"});
    read_opt(f, "num_trees", c.forest.num_trees);
    read_opt(f, "leaf_size", c.forest.leaf_size);
  }
  if (j.contains("scorer")) {
    const auto& s = j["scorer"];
    reject_unknown(s, "scorer", {"theta_min_grid", "theta_max_grid", "beta_grid", "refine", "max_iterations"});
    read_opt(s, "theta_min_grid", c.scorer.theta_min_grid);
    read_opt(s, "theta_max_grid", c.scorer.theta_max_grid);
    read_opt(s, "beta_grid", c.scorer.beta_grid);
    read_opt(s, "refine", c.scorer.refine);
    read_opt(s, "max_iterations", c.scorer.max_iterations);
  }
  if (c.encoder_dimension < kMinEncoderDimension) {
    throw SchemaError("encoder_dimension", "encoder_dimension must be at least 16");
  }
  if (c.n_neighbors == 0 || c.ann_search_budget == 0 || c.ensemble_steps == 0 || c.topic_size_cap < 2) {
    throw SchemaError("config", "n_neighbors, ann_search_budget and ensemble_steps must be positive "
                                "and topic_size_cap at least 2");
  }
  return c;
}

json PipelineConfig::to_json() const {
  return json{
      {"seed", seed},
      {"encoder_dimension", encoder_dimension},
      {"head",
       {{"lr", head.lr},
        {"batch", head.batch},
        {"epochs", head.epochs},
        {"l2", head.l2},
        {"patience", head.patience},
        {"lr_decay", head.lr_decay},
        {"validation_fraction", head.validation_fraction},
        {"init_scale", head.init_scale}}},
      {"lda", {{"topics", lda.topics}, {"alpha", lda.alpha}, {"beta", lda.beta}, {"iterations", lda.iterations}}},
      {"hdbscan",
       {{"min_cluster_size", hdbscan.min_cluster_size},
        {"min_samples", hdbscan.min_samples},
        {"allow_single_cluster", hdbscan.allow_single_cluster}}},
      {"topic_size_cap", topic_size_cap},
      {"forest", {{"num_trees", forest.num_trees}, {"leaf_size", forest.leaf_size}}},
      {"ann_search_budget", ann_search_budget},
      {"n_neighbors", n_neighbors},
      {"scorer",
       {{"theta_min_grid", scorer.theta_min_grid},
        {"theta_max_grid", scorer.theta_max_grid},
        {"beta_grid", scorer.beta_grid},
        {"refine", scorer.refine},
        {"max_iterations", scorer.max_iterations}}},
      {"ensemble_steps", ensemble_steps},
  };
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(to_json().dump()); }

std::size_t ModelBundle::ann_position(std::string_view ticket_id) const {
  const auto it = ann_position_.find(std::string(ticket_id));
  if (it == ann_position_.end()) throw InvalidArgument("unknown ticket id: " + std::string(ticket_id));
  return it->second;
}

void ModelBundle::index_ids() {
  ann_position_.clear();
  for (std::size_t i = 0; i < ann.size(); ++i) ann_position_.emplace(ann.id(i), i);
}

std::string ModelBundle::version() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(manifest.config_hash));
  return "v" + std::to_string(manifest.format_version) + "-" + buf + "-" + manifest.created_at;
}

ModelBundle train_pipeline(const DatasetSplit& dataset, const PipelineConfig& config,
                           const TrainOptions& options) {
  if (dataset.train.empty() || dataset.validation.empty()) {
    throw InvalidArgument("train_pipeline: train and validation splits must be non-empty");
  }
  ModelBundle b;
  b.config = config;
  b.manifest.created_at = format_utc(std::chrono::system_clock::now());
  b.manifest.seed = config.seed;
  b.manifest.split_seed = dataset.seed;
  b.manifest.config_hash = config.hash();
  b.manifest.corpus_fingerprint = options.corpus_fingerprint;

  const auto& train = dataset.train;
  const auto& val = dataset.validation;
  std::vector<Embedding> train_x, val_x;
  std::vector<std::optional<std::size_t>> train_topic;
  ResolverListSet list_set;

  auto run = [&](std::string_view stage, auto&& body) {
    const auto t0 = Clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      throw StageError(std::string(stage), e.what());
    }
    const double secs = seconds_since(t0);
    b.manifest.stages.push_back({std::string(stage), secs});
    if (options.progress) options.progress(stage, secs);
  };

  run("encoder", [&] {
    b.encoder = fit_encoder(std::span<const CleanTicket>(train), config.encoder_dimension,
                            stage_seed(config.seed, "encoder"));
    train_x = encode_batch(b.encoder, tokens_of(train));
    val_x = encode_batch(b.encoder, tokens_of(val));
  });

  run("group_head", [&] {
    const auto y = column(train, &CleanTicket::group);
    const auto vy = column(val, &CleanTicket::group);
    const HeadValidation hv{val_x, vy};
    b.group_head = train_head(train_x, y, config.head, stage_seed(config.seed, "group_head"), &hv);
  });

  run("resolver_head", [&] {
    const auto y = column(train, &CleanTicket::resolver);
    const auto vy = column(val, &CleanTicket::resolver);
    const HeadValidation hv{val_x, vy};
    b.resolver_head = train_head(train_x, y, config.head, stage_seed(config.seed, "resolver_head"), &hv);
  });

  std::vector<std::size_t> topic_of(train.size(), 0);
  run("lda", [&] {
    LdaParams p = config.lda;
    p.seed = stage_seed(config.seed, "lda");
    auto fit = fit_lda(tokens_of(train), p);
    b.topics = std::move(fit.model);
    for (std::size_t i = 0; i < train.size(); ++i) {
      topic_of[i] = assign_topic(b.topics, train[i].tokens).topic;
    }
  });

  run("clustering", [&] {
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < train.size(); ++i) members[topic_of[i]].push_back(i);
    std::mt19937_64 rng(stage_seed(config.seed, "clustering"));
    std::vector<TopicClusters> clusters;
    for (auto& [topic, idx] : members) {
      if (idx.size() > config.topic_size_cap) std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t chunks = (idx.size() + config.topic_size_cap - 1) / config.topic_size_cap;
      for (std::size_t c = 0; c < chunks; ++c) {
        // Even chunk sizes so no chunk is a small leftover.
        const std::size_t lo = idx.size() * c / chunks, hi = idx.size() * (c + 1) / chunks;
        TopicClusters tc;
        tc.topic = topic;
        tc.tickets.assign(idx.begin() + lo, idx.begin() + hi);
        std::sort(tc.tickets.begin(), tc.tickets.end());
        if (tc.tickets.size() >= 2) {
          std::vector<Embedding> pts;
          pts.reserve(tc.tickets.size());
          for (std::size_t t : tc.tickets) pts.push_back(train_x[t]);
          tc.labels = cluster_topic(pts, config.hdbscan);
        } else {
          tc.labels.assign(tc.tickets.size(), kNoise);
        }
        clusters.push_back(std::move(tc));
      }
    }
    list_set = build_resolver_lists(clusters, train, config.hdbscan.min_cluster_size);
    b.lists = list_set.lists;
  });

  run("list_head", [&] {
    if (b.lists.size() < 2) {
      b.list_head.reset();
      b.manifest.absent_members.push_back("list_head");
      return;
    }
    std::vector<Embedding> x;
    std::vector<std::string> y;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (!list_set.ticket_list[i]) continue;
      x.push_back(train_x[i]);
      y.push_back(b.lists[*list_set.ticket_list[i]].list_id);
    }
    b.list_head = train_head(x, y, config.head, stage_seed(config.seed, "list_head"));
  });

  run("group_prior", [&] {
    b.prior = fit_group_prior(train);
    if (!(b.prior.resolvers == b.resolvers()) || !(b.prior.groups == b.groups())) {
      throw Error("prior vocabularies disagree with the classifier heads");
    }
  });

  run("ann_index", [&] {
    std::vector<AnnItem> items;
    items.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      items.push_back({train[i].id, train[i].resolver, train_x[i]});
      b.snippets.push_back(snippet(train[i].description));
    }
    ForestParams fp = config.forest;
    fp.seed = stage_seed(config.seed, "ann_index");
    b.ann = AnnIndex::build(std::move(items), fp);
    b.index_ids();
  });

  std::vector<ScorerExample> scorer_set;
  run("scorer", [&] {
    scorer_set = scorer_examples(b, val, val_x);
    if (scorer_set.empty()) throw Error("no validation ticket has a resolver seen in training");
    b.scorer = fit_params(scorer_set, config.scorer);
  });

  run("ensemble", [&] {
    std::vector<EnsembleExample> examples;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const auto truth = b.resolvers().find(val[i].resolver);
      if (!truth || is_zero(val_x[i])) continue;
      auto out = model_outputs(b, val_x[i], config.n_neighbors);
      examples.push_back({std::move(out.resolver), *truth});
    }
    b.weights = fit_weights(examples, b.active_models(), config.ensemble_steps);
  });

  return b;
}

ModelOutputs model_outputs(const ModelBundle& b, std::span<const float> embedding, std::size_t neighbors) {
  ModelOutputs out;
  auto t0 = Clock::now();
  out.group_probs = b.group_head.predict_proba(embedding);
  out.group_seconds = seconds_since(t0);

  t0 = Clock::now();
  const std::size_t want = std::max(neighbors, b.config.n_neighbors);
  out.neighbors = b.ann.query(embedding, want, std::max(b.config.ann_search_budget, want));
  out.ann_seconds = seconds_since(t0);

  resolver_outputs(b, embedding, out.group_probs, out.neighbors, out.resolver, &out.model_seconds);
  out.model_seconds[2] += out.group_seconds;
  out.model_seconds[3] += out.ann_seconds;
  return out;
}

Suggestions suggest(const ModelBundle& b, std::string_view description, const SuggestRequest& request) {
  if (request.k_group == 0 || request.k_resolver == 0) {
    throw InvalidArgument("k_group and k_resolver must be at least 1");
  }
  const auto t_start = Clock::now();
  Suggestions s;

  auto t0 = Clock::now();
  const auto tokens = tokenize(description);
  if (tokens.empty()) throw EmptyDescriptionError();
  const Embedding e = encode_tokens(b.encoder, tokens);
  s.timings.encode_ms = seconds_since(t0) * 1e3;

  t0 = Clock::now();
  const auto group_probs = b.group_head.predict_proba(e);
  s.groups = top_k(group_probs, b.groups(), std::min(request.k_group, b.groups().size()));
  s.timings.group_ms = seconds_since(t0) * 1e3;

  t0 = Clock::now();
  const std::size_t want = std::max(request.n_similar, b.config.n_neighbors);
  const auto neighbors = b.ann.query(e, want, std::max(b.config.ann_search_budget, want));
  s.timings.ann_ms = seconds_since(t0) * 1e3;

  t0 = Clock::now();
  AlignedOutputs outputs;
  resolver_outputs(b, e, group_probs, neighbors, outputs, nullptr);
  const auto combined = ensemble_probs(outputs, b.weights);
  s.resolvers = top_k(combined, b.resolvers(), std::min(request.k_resolver, b.resolvers().size()));
  s.timings.resolver_ms = seconds_since(t0) * 1e3;

  const std::size_t n_sim = std::min(request.n_similar, neighbors.size());
  s.similar.reserve(n_sim);
  for (std::size_t i = 0; i < n_sim; ++i) {
    const auto& n = neighbors[i];
    s.similar.push_back({n.ticket_id, b.snippets[b.ann_position(n.ticket_id)], n.resolver, n.distance});
  }
  s.timings.total_ms = seconds_since(t_start) * 1e3;
  return s;
}

void refit_scorer(ModelBundle& b, std::span<const CleanTicket> validation) {
  const auto x = encode_batch(b.encoder, tokens_of(validation));
  const auto examples = scorer_examples(b, validation, x);
  if (examples.empty()) throw InvalidArgument("refit_scorer: no usable validation ticket");
  b.scorer = fit_params(examples, b.config.scorer);
}

}  // namespace triage
