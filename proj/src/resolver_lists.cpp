#include <algorithm>
#include <map>

#include "triage/binary_io.hpp"
#include "triage/discovery.hpp"
#include "triage/errors.hpp"

namespace triage {
namespace {

constexpr std::string_view kMagic = "TDALST1";
constexpr std::uint32_t kVersion = 1;

}  // namespace

ResolverListSet build_resolver_lists(std::span<const TopicClusters> clusters,
                                     std::span<const CleanTicket> tickets,
                                     std::size_t min_members) {
  ResolverListSet out;
  out.ticket_list.assign(tickets.size(), std::nullopt);

  std::vector<const TopicClusters*> ordered;
  for (const auto& c : clusters) ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->topic < b->topic; });

  for (const TopicClusters* tc : ordered) {
    if (tc->labels.size() != tc->tickets.size()) {
      throw InvalidArgument("build_resolver_lists: labels not aligned with tickets");
    }
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < tc->labels.size(); ++i) {
      if (tc->labels[i] == kNoise) continue;
      if (tc->tickets[i] >= tickets.size()) {
        throw InvalidArgument("build_resolver_lists: ticket index out of range");
      }
      members[tc->labels[i]].push_back(tc->tickets[i]);
    }
    for (const auto& [label, idx] : members) {
      if (idx.size() < std::max<std::size_t>(min_members, 1)) continue;
      ResolverList list;
      list.list_id = "L" + std::to_string(tc->topic) + "-" + std::to_string(label);
      list.source_topic = tc->topic;
      std::map<std::string, std::size_t> counts;
      for (auto t : idx) {
        ++counts[tickets[t].resolver];
        list.member_ticket_ids.push_back(tickets[t].id);
        out.ticket_list[t] = out.lists.size();
      }
      for (const auto& [resolver, count] : counts) {
        list.member_resolvers.push_back(
            {resolver, static_cast<double>(count) / static_cast<double>(idx.size())});
      }
      out.lists.push_back(std::move(list));
    }
  }
  return out;
}

std::vector<LabeledProb> list_to_resolver_probs(
    std::span<const double> list_probs, const LabelVocabulary& list_vocabulary,
    std::span<const ResolverList> lists) {
  if (list_probs.size() != list_vocabulary.size()) {
    throw DimensionMismatch(list_vocabulary.size(), list_probs.size());
  }
  std::map<std::string_view, const ResolverList*> by_id;
  for (const auto& l : lists) by_id.emplace(l.list_id, &l);
  std::map<std::string, double> mass;
  for (std::size_t k = 0; k < list_probs.size(); ++k) {
    const auto it = by_id.find(list_vocabulary.label(k));
    if (it == by_id.end()) {
      throw InvalidArgument("unknown resolver list '" + list_vocabulary.label(k) + "'");
    }
    for (const auto& m : it->second->member_resolvers) {
      mass[m.resolver] += m.frequency * list_probs[k];
    }
  }
  std::vector<LabeledProb> out;
  out.reserve(mass.size());
  for (auto& [resolver, p] : mass) out.push_back({resolver, p});
  return out;
}

std::string serialize(std::span<const ResolverList> lists) {
  io::BinaryWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u64(lists.size());
  for (const auto& l : lists) {
    w.str(l.list_id);
    w.u64(l.source_topic);
    w.u64(l.member_resolvers.size());
    for (const auto& m : l.member_resolvers) {
      w.str(m.resolver);
      w.f64(m.frequency);
    }
    w.strs(l.member_ticket_ids);
  }
  return std::move(w).take();
}

std::vector<ResolverList> deserialize_resolver_lists(std::string_view bytes) {
  io::BinaryReader r(bytes, "resolver lists");
  r.expect_magic(kMagic);
  r.expect_version(kVersion);
  const std::uint64_t n = r.u64();
  if (n > bytes.size()) throw TruncatedError("resolver lists: implausible count");
  std::vector<ResolverList> out(n);
  for (auto& l : out) {
    l.list_id = r.str();
    l.source_topic = static_cast<std::size_t>(r.u64());
    const std::uint64_t m = r.u64();
    if (m > bytes.size()) throw TruncatedError("resolver lists: implausible count");
    l.member_resolvers.resize(m);
    for (auto& f : l.member_resolvers) {
      f.resolver = r.str();
      f.frequency = r.f64();
    }
    l.member_ticket_ids = r.strs();
  }
  r.expect_end();
  return out;
}

}  // namespace triage
