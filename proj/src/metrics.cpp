#include "triage/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "triage/errors.hpp"
#include "triage/pipeline.hpp"

namespace triage {
namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

std::vector<std::string> ranked_labels(std::span<const double> probs, const LabelVocabulary& vocab,
                                       std::size_t k) {
  std::vector<std::string> out;
  for (auto& lp : top_k(probs, vocab, std::min(k, vocab.size()))) out.push_back(std::move(lp.label));
  return out;
}

double stage_seconds(const ModelBundle& b, std::initializer_list<std::string_view> stages) {
  double s = 0.0;
  for (const auto& st : b.manifest.stages) {
    if (std::find(stages.begin(), stages.end(), st.stage) != stages.end()) s += st.seconds;
  }
  return s;
}

}  // namespace

double top_k_accuracy(std::span<const std::vector<std::string>> rankings,
                      std::span<const std::string> truth, std::size_t k) {
  if (rankings.empty()) throw InvalidArgument("top_k_accuracy: no examples");
  if (rankings.size() != truth.size()) throw InvalidArgument("top_k_accuracy: rankings and labels differ in length");
  if (k == 0) throw InvalidArgument("top_k_accuracy: k must be at least 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const auto& r = rankings[i];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size()));
    if (std::find(r.begin(), end, truth[i]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

const EvalRow& EvalReport::row(std::string_view table, std::string_view model) const {
  for (const auto& r : rows) {
    if (r.table == table && r.model == model) return r;
  }
  throw InvalidArgument("no report row " + std::string(table) + "/" + std::string(model));
}

EvalReport evaluate_all(const ModelBundle& b, std::span<const CleanTicket> test) {
  if (test.empty()) throw InvalidArgument("evaluate_all: empty test split");
  constexpr std::size_t kNamed = kResolverModels + 1;  // four models plus the ensemble
  std::vector<std::vector<std::string>> group_rank;
  std::array<std::vector<std::vector<std::string>>, kNamed> resolver_rank;
  std::vector<std::string> groups, resolvers;
  std::vector<double> group_s;
  std::array<std::vector<double>, kNamed> model_s;

  for (const auto& t : test) {
    auto t0 = Clock::now();
    const Embedding e = encode_tokens(b.encoder, t.tokens);
    const double enc = std::chrono::duration<double>(Clock::now() - t0).count();
    auto out = model_outputs(b, e, b.config.n_neighbors);

    t0 = Clock::now();
    const auto combined = ensemble_probs(out.resolver, b.weights);
    const double ens = std::chrono::duration<double>(Clock::now() - t0).count();

    groups.push_back(t.group);
    resolvers.push_back(t.resolver);
    group_rank.push_back(ranked_labels(out.group_probs, b.groups(), 3));
    for (std::size_t j = 0; j < kResolverModels; ++j) {
      resolver_rank[j].push_back(ranked_labels(out.resolver[j], b.resolvers(), 5));
    }
    resolver_rank[kResolverModels].push_back(ranked_labels(combined, b.resolvers(), 5));

    group_s.push_back(enc + out.group_seconds);
    // The group and similar model times already include the shared group
    // head and ANN query, so each shared step is counted once.
    double all = enc + ens;
    for (std::size_t j = 0; j < kResolverModels; ++j) {
      model_s[j].push_back(enc + out.model_seconds[j]);
      all += out.model_seconds[j];
    }
    model_s[kResolverModels].push_back(all);
  }

  EvalReport rep;
  rep.examples = test.size();
  {
    EvalRow row{"group", "group classifier", {1, 2, 3}, {}, stage_seconds(b, {"encoder", "group_head"}), median(group_s)};
    for (std::size_t i = 0; i < 3; ++i) row.accuracy[i] = top_k_accuracy(group_rank, groups, row.ks[i]);
    rep.rows.push_back(row);
  }
  const std::array<double, kNamed> train_s{
      stage_seconds(b, {"encoder", "resolver_head"}),
      stage_seconds(b, {"encoder", "lda", "clustering", "list_head"}),
      stage_seconds(b, {"encoder", "group_head", "group_prior"}),
      stage_seconds(b, {"encoder", "ann_index", "scorer"}),
      stage_seconds(b, {"encoder", "group_head", "resolver_head", "lda", "clustering", "list_head",
                        "group_prior", "ann_index", "scorer", "ensemble"}),
  };
  for (std::size_t j = 0; j < kNamed; ++j) {
    const std::string name = j < kResolverModels ? std::string(kResolverModelNames[j]) : "ensemble";
    EvalRow row{"resolver", name, {1, 3, 5}, {}, train_s[j], median(model_s[j])};
    for (std::size_t i = 0; i < 3; ++i) row.accuracy[i] = top_k_accuracy(resolver_rank[j], resolvers, row.ks[i]);
    rep.rows.push_back(row);
  }
  return rep;
}

std::string format_report(const EvalReport& rep) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "evaluated on %zu test tickets\n\n", rep.examples);
  out += line;
  std::string table;
  for (const auto& r : rep.rows) {
    if (r.table != table) {
      table = r.table;
      std::snprintf(line, sizeof line, "%-18s %8s %8s %8s %10s %12s\n",
                    table == "group" ? "GROUP MODEL" : "RESOLVER MODEL",
                    ("top-" + std::to_string(r.ks[0])).c_str(), ("top-" + std::to_string(r.ks[1])).c_str(),
                    ("top-" + std::to_string(r.ks[2])).c_str(), "train s", "infer ms");
      out += line;
    }
    std::snprintf(line, sizeof line, "%-18s %8.3f %8.3f %8.3f %10.2f %12.3f\n", r.model.c_str(), r.accuracy[0],
                  r.accuracy[1], r.accuracy[2], r.train_seconds, r.inference_seconds * 1e3);
    out += line;
    if (&r != &rep.rows.back() && (&r + 1)->table != r.table) out += "\n";
  }
  std::snprintf(line, sizeof line,
                "\nreference (production data, not reproduced here): group top-3 %.3f, ensemble top-5 %.3f\n",
                rep.reference_group_top3, rep.reference_ensemble_top5);
  out += line;
  return out;
}

void write_report_jsonl(std::ostream& out, const EvalReport& rep) {
  for (const auto& r : rep.rows) {
    nlohmann::json j{{"table", r.table},
                     {"model", r.model},
                     {"examples", rep.examples},
                     {"train_seconds", r.train_seconds},
                     {"inference_seconds", r.inference_seconds}};
    for (std::size_t i = 0; i < 3; ++i) j["top" + std::to_string(r.ks[i])] = r.accuracy[i];
    out << j.dump() << '\n';
  }
  out << nlohmann::json{{"reference", {{"group_top3", rep.reference_group_top3},
                                      {"ensemble_top5", rep.reference_ensemble_top5}}}}.dump()
      << '\n';
}

}  // namespace triage
