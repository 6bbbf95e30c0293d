#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "triage/corpus.hpp"

namespace triage {

// Parameters of the planted-structure generator used for desk-scale tests.
struct SynthSpec {
  std::size_t n_groups = 20;
  std::size_t resolvers_per_group = 7;
  std::size_t n_topics = 40;
  std::size_t tickets = 5000;
  double noise_rate = 0.1;
};

// Generated corpus plus the structure it was planted from.
//
// Topic t is owned by group t % n_groups. Each topic has a core vocabulary
// and three facets, each facet with its own words and a primary resolver
// drawn from the owning group. A ticket picks a topic and facet, is resolved
// by the facet's primary resolver with probability 0.75 (otherwise by any
// resolver of the group), and draws 6..14 tokens from the core and facet
// vocabularies. A noisy ticket replaces each token with probability 0.5 by a
// uniformly drawn word of the global vocabulary.
struct SynthCorpus {
  std::vector<CleanTicket> tickets;
  std::vector<std::size_t> planted_topic;  // per ticket
  std::vector<bool> noisy;                 // per ticket
  std::vector<std::vector<std::string>> topic_vocabulary;
  std::vector<std::string> topic_group;
};

SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed);

// The group label the generator uses for group index g.
std::string synth_group_name(std::size_t g);

}  // namespace triage
