// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gfolds/graph.hpp"

namespace gfolds {

// Template-based generator of DMRS-like graphs. Each graph draws a topic;
// verbs, adjectives and (mostly) nouns come from that topic's families, so
// labels co-occur non-uniformly. Quantifiers agree in number with the noun
// they restrict.
struct SynthConfig {
  std::size_t num_graphs = 100;
  std::size_t n_nouns = 40;
  std::size_t n_verbs = 20;
  std::size_t n_adjectives = 16;
  std::size_t n_prepositions = 6;
  std::size_t n_topics = 4;
  std::vector<std::string> tenses = {"past", "pres", "fut"};
  std::size_t min_nodes = 5;
  std::size_t max_nodes = 12;
  // Edges per node; extra MOD edges are added until the drawn density is met.
  double min_edge_density = 0.0;
  double max_edge_density = 1.0;
  // Probability that a lexical node is flagged OOV. Also enables CARG-bearing
  // named entities when positive.
  double oov_rate = 0.0;
  // Probability that a noun is drawn outside the graph's topic.
  double off_topic_rate = 0.15;

  // Throws ConfigError on an infeasible or inconsistent configuration.
  void validate() const;
};

std::vector<RawGraph> generate_synthetic_corpus(const SynthConfig& config, std::uint64_t seed);

}  // namespace gfolds
