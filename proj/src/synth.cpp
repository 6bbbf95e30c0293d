#include "triage/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <random>

#include "triage/errors.hpp"
#include "triage/text.hpp"

namespace triage {
namespace {

constexpr std::size_t kCoreWords = 12;
constexpr std::size_t kFacets = 3;
constexpr std::size_t kFacetWords = 8;
constexpr double kPrimaryShare = 0.75;

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "pu", "ro",
                                      "sa", "ti", "vu", "ze", "ba", "do",
                                      "fi", "gu", "ha", "je"};

std::string make_word(std::size_t index, std::size_t syllables) {
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kSyllables[index % 16];
    index /= 16;
  }
  return w;
}

std::string resolver_name(std::size_t g, std::size_t r) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "g%02zu.r%zu", g, r);
  return buf;
}

// Index drawn with weights 1/(rank+1).
std::size_t zipf_draw(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / static_cast<double>(i + 1);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return d(rng);
}

}  // namespace

std::string synth_group_name(std::size_t g) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "group-%02zu", g);
  return buf;
}

SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_groups < 1 || spec.resolvers_per_group < 1 ||
      spec.n_topics < 1 || spec.tickets < 1) {
    throw InvalidArgument("synth_corpus counts must all be >= 1");
  }
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate < 1.0)) {
    throw InvalidArgument("synth_corpus noise_rate must be in [0, 1)");
  }
  std::mt19937_64 rng(mix64(seed ^ 0x5eedc0de));

  const std::size_t words_per_topic = kCoreWords + kFacets * kFacetWords;
  const std::size_t vocab_size = spec.n_topics * words_per_topic;
  std::size_t syllables = 3;
  while ((std::size_t{1} << (4 * syllables)) < vocab_size) ++syllables;

  // Shuffle word ids so topic vocabularies are not lexically contiguous.
  std::vector<std::size_t> word_ids(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) word_ids[i] = i;
  std::shuffle(word_ids.begin(), word_ids.end(), rng);
  std::vector<std::string> words(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    words[i] = make_word(word_ids[i], syllables);
  }

  struct Facet {
    std::vector<std::size_t> words;
    std::size_t primary;  // resolver index within the group
  };
  struct Topic {
    std::size_t group;
    std::vector<std::size_t> core;
    std::vector<Facet> facets;
  };

  SynthCorpus out;
  std::vector<Topic> topics(spec.n_topics);
  std::size_t next_word = 0;
  for (std::size_t t = 0; t < spec.n_topics; ++t) {
    Topic& topic = topics[t];
    topic.group = t % spec.n_groups;
    std::vector<std::string> vocab;
    for (std::size_t i = 0; i < kCoreWords; ++i) {
      topic.core.push_back(next_word);
      vocab.push_back(words[next_word++]);
    }
    std::vector<std::size_t> members(spec.resolvers_per_group);
    for (std::size_t r = 0; r < members.size(); ++r) members[r] = r;
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t f = 0; f < kFacets; ++f) {
      Facet facet;
      for (std::size_t i = 0; i < kFacetWords; ++i) {
        facet.words.push_back(next_word);
        vocab.push_back(words[next_word++]);
      }
      facet.primary = members[f % members.size()];
      topic.facets.push_back(std::move(facet));
    }
    out.topic_vocabulary.push_back(std::move(vocab));
    out.topic_group.push_back(synth_group_name(topic.group));
  }

  std::uniform_int_distribution<std::size_t> pick_topic(0, spec.n_topics - 1);
  std::uniform_int_distribution<std::size_t> pick_facet(0, kFacets - 1);
  std::uniform_int_distribution<std::size_t> pick_member(
      0, spec.resolvers_per_group - 1);
  std::uniform_int_distribution<std::size_t> pick_length(6, 14);
  std::uniform_int_distribution<std::size_t> pick_any(0, vocab_size - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  out.tickets.reserve(spec.tickets);
  for (std::size_t i = 0; i < spec.tickets; ++i) {
    const std::size_t t = pick_topic(rng);
    const Topic& topic = topics[t];
    const Facet& facet = topic.facets[pick_facet(rng)];
    const std::size_t member =
        unit(rng) < kPrimaryShare ? facet.primary : pick_member(rng);
    const bool noisy = unit(rng) < spec.noise_rate;

    const std::size_t length = pick_length(rng);
    std::vector<std::string> tokens;
    tokens.reserve(length);
    for (std::size_t k = 0; k < length; ++k) {
      std::size_t w = unit(rng) < 0.5
                          ? topic.core[zipf_draw(rng, topic.core.size())]
                          : facet.words[zipf_draw(rng, facet.words.size())];
      if (noisy && unit(rng) < 0.5) w = pick_any(rng);
      tokens.push_back(words[w]);
    }

    std::string description;
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      if (k > 0) description += (k % 5 == 0) ? ", " : " ";
      description += tokens[k];
    }
    if (!description.empty()) {
      description[0] = static_cast<char>(description[0] - 'a' + 'A');
    }
    description += '.';

    CleanTicket ticket;
    char id[48];
    std::snprintf(id, sizeof id, "T%llu-%06zu",
                  static_cast<unsigned long long>(seed), i);
    ticket.id = id;
    ticket.group = synth_group_name(topic.group);
    ticket.resolver = resolver_name(topic.group, member);
    ticket.description = std::move(description);
    // One ticket per minute from 2024-01-01T00:00:00Z.
    const std::time_t when = 1704067200 + static_cast<std::time_t>(i) * 60;
    std::tm utc{};
    gmtime_r(&when, &utc);
    char ts[40];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", &utc);
    ticket.resolved_at = ts;
    ticket.tokens = std::move(tokens);
    out.tickets.push_back(std::move(ticket));
    out.planted_topic.push_back(t);
    out.noisy.push_back(noisy);
  }
  return out;
}

}  // namespace triage
