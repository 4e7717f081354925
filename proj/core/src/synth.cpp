// SPDX-License-Identifier: Apache-2.0
#include "gfolds/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gfolds/errors.hpp"
#include "gfolds/lexicon.hpp"
#include "gfolds/rng.hpp"

namespace gfolds {

void SynthConfig::validate() const {
  if (num_graphs == 0) {
    throw ConfigError("synth: num_graphs must be positive");
  }
  if (n_nouns == 0 || n_verbs == 0 || n_adjectives == 0 || n_prepositions == 0) {
    throw ConfigError("synth: every word class needs at least one entry");
  }
  if (n_topics == 0 || n_topics > std::min({n_nouns, n_verbs, n_adjectives})) {
    throw ConfigError("synth: n_topics must be in [1, smallest of nouns/verbs/adjectives]");
  }
  if (tenses.empty()) {
    throw ConfigError("synth: at least one tense is required");
  }
  if (min_nodes < 3) {
    throw ConfigError("synth: min_nodes must be at least 3 (verb, quantifier, noun)");
  }
  if (max_nodes < min_nodes) {
    throw ConfigError("synth: max_nodes " + std::to_string(max_nodes) + " below min_nodes " +
                      std::to_string(min_nodes));
  }
  if (!(min_edge_density >= 0.0) || !(max_edge_density >= min_edge_density)) {
    throw ConfigError("synth: edge density range must satisfy 0 <= min <= max");
  }
  const double cap = (static_cast<double>(min_nodes) - 1.0) / 2.0;
  if (max_edge_density > cap) {
    throw ConfigError("synth: edge density " + std::to_string(max_edge_density) +
                      " cannot be met acyclically by " + std::to_string(min_nodes) +
                      "-node graphs (limit " + std::to_string(cap) + ")");
  }
  if (!(oov_rate >= 0.0 && oov_rate <= 1.0) || !(off_topic_rate >= 0.0 && off_topic_rate <= 1.0)) {
    throw ConfigError("synth: rates must lie in [0, 1]");
  }
}

namespace {

enum class Expansion { kArg2, kAdjective, kPrep, kCoordNoun, kCoordVerb, kUnknown, kDiscourse, kNamed };

struct Builder {
  const SynthConfig& cfg;
  Rng& rng;
  std::size_t topic;
  RawGraph g;
  std::vector<std::size_t> nouns;
  std::size_t verb = 0;

  std::size_t add(std::string label, std::vector<std::string> features, bool lexical) {
    const bool oov = lexical && rng.bernoulli(cfg.oov_rate);
    g.nodes.push_back({std::move(label), std::move(features), oov});
    return g.nodes.size() - 1;
  }

  void link(std::size_t src, std::size_t dst, const char* label) {
    g.edges.push_back({src, dst, label});
  }

  std::size_t pick_in_topic(std::size_t count) {
    // Members of topic t are the indices congruent to t modulo n_topics.
    const std::size_t members = (count - topic + cfg.n_topics - 1) / cfg.n_topics;
    return topic + cfg.n_topics * static_cast<std::size_t>(rng.below(members));
  }

  std::string tense() {
    return "TENSE=" + cfg.tenses[static_cast<std::size_t>(rng.below(cfg.tenses.size()))];
  }

  std::size_t add_verb() {
    const std::size_t v = pick_in_topic(cfg.n_verbs);
    return add("_verb" + std::to_string(v) + "_v_1", {tense(), "MOOD=indicative", "SF=prop"},
               true);
  }

  // Noun plus an agreeing quantifier; returns the noun index.
  std::size_t add_np() {
    const std::size_t n = rng.bernoulli(cfg.off_topic_rate)
                              ? static_cast<std::size_t>(rng.below(cfg.n_nouns))
                              : pick_in_topic(cfg.n_nouns);
    const bool plural = rng.bernoulli(0.5);
    const std::size_t noun = add("_noun" + std::to_string(n) + "_n_1",
                                 {plural ? "NUM=pl" : "NUM=sg", "PERS=3"}, true);
    const std::size_t own = plural ? kPluralQuantifiers.size() : kSingularQuantifiers.size();
    const std::size_t k = static_cast<std::size_t>(rng.below(own + kBothQuantifiers.size()));
    std::string_view q;
    if (k < own) {
      q = plural ? kPluralQuantifiers[k] : kSingularQuantifiers[k];
    } else {
      q = kBothQuantifiers[k - own];
    }
    const std::size_t quant = add(std::string(q), {}, false);
    link(quant, noun, "RSTR");
    nouns.push_back(noun);
    return noun;
  }

  std::size_t any_noun() { return nouns[static_cast<std::size_t>(rng.below(nouns.size()))]; }
};

std::size_t cost(Expansion e) {
  switch (e) {
    case Expansion::kArg2:
    case Expansion::kCoordVerb:
    case Expansion::kNamed:
      return 2;
    case Expansion::kPrep:
    case Expansion::kCoordNoun:
      return 3;
    case Expansion::kAdjective:
    case Expansion::kUnknown:
    case Expansion::kDiscourse:
      return 1;
  }
  return 1;
}

RawGraph generate_one(const SynthConfig& cfg, Rng rng, std::string id) {
  Builder b{cfg, rng, static_cast<std::size_t>(rng.below(cfg.n_topics)), {}, {}, 0};
  b.g.id = std::move(id);
  const std::size_t target =
      cfg.min_nodes + static_cast<std::size_t>(rng.below(cfg.max_nodes - cfg.min_nodes + 1));

  b.verb = b.add_verb();
  b.g.htop = b.verb;
  b.link(b.verb, b.add_np(), "ARG1");

  std::set<Expansion> used;
  const double named_weight = cfg.oov_rate > 0.0 ? 0.5 : 0.0;
  const std::vector<std::pair<Expansion, double>> weights = {
      {Expansion::kArg2, 3.0},      {Expansion::kAdjective, 3.0}, {Expansion::kPrep, 2.0},
      {Expansion::kCoordNoun, 1.0}, {Expansion::kCoordVerb, 1.0}, {Expansion::kUnknown, 0.5},
      {Expansion::kDiscourse, 0.5}, {Expansion::kNamed, named_weight}};
  const std::set<Expansion> once = {Expansion::kArg2, Expansion::kCoordVerb, Expansion::kUnknown,
                                    Expansion::kDiscourse, Expansion::kNamed};

  while (b.g.nodes.size() < target) {
    const std::size_t remaining = target - b.g.nodes.size();
    double total = 0.0;
    for (const auto& [e, w] : weights) {
      if (cost(e) <= remaining && !(once.contains(e) && used.contains(e))) {
        total += w;
      }
    }
    double u = rng.uniform() * total;
    Expansion pick = Expansion::kAdjective;
    for (const auto& [e, w] : weights) {
      if (cost(e) <= remaining && !(once.contains(e) && used.contains(e)) && w > 0.0) {
        if (u < w) {
          pick = e;
          break;
        }
        u -= w;
      }
    }
    used.insert(pick);
    switch (pick) {
      case Expansion::kArg2:
        b.link(b.verb, b.add_np(), "ARG2");
        break;
      case Expansion::kAdjective: {
        const std::size_t a = b.pick_in_topic(cfg.n_adjectives);
        const std::size_t adj =
            b.add("_adj" + std::to_string(a) + "_a_1", {"TENSE=untensed"}, true);
        b.link(adj, b.any_noun(), "MOD");
        break;
      }
      case Expansion::kPrep: {
        const std::size_t p = static_cast<std::size_t>(rng.below(cfg.n_prepositions));
        const std::size_t prep =
            b.add("_prep" + std::to_string(p) + "_p", {"TENSE=untensed"}, true);
        b.link(prep, b.verb, "ARG1");
        b.link(prep, b.add_np(), "ARG2");
        break;
      }
      case Expansion::kCoordNoun: {
        const std::size_t left = b.any_noun();
        const std::size_t conj = b.add("and_c", {}, false);
        b.link(conj, left, "L-INDEX");
        b.link(conj, b.add_np(), "R-INDEX");
        break;
      }
      case Expansion::kCoordVerb: {
        const std::size_t conj = b.add("and_c", {}, false);
        const std::size_t other = b.add_verb();
        b.link(conj, b.verb, "L-HNDL");
        b.link(conj, other, "R-HNDL");
        b.link(other, b.any_noun(), "ARG1");
        break;
      }
      case Expansion::kUnknown:
        b.link(b.add("unknown", {}, false), b.any_noun(), "ARG");
        break;
      case Expansion::kDiscourse:
        if (rng.bernoulli(0.5)) {
          b.link(b.add("parg_d", {}, false), b.verb, "ARG1");
        } else {
          b.link(b.add("focus_d", {}, false), b.any_noun(), "ARG1");
        }
        break;
      case Expansion::kNamed: {
        const std::size_t named = b.g.nodes.size();
        b.g.nodes.push_back({"named", {"NUM=sg", "PERS=3"}, true});
        const std::size_t quant = b.add("proper_q", {}, false);
        b.link(quant, named, "RSTR");
        b.link(b.verb, named, "ARG3");
        break;
      }
    }
  }

  // Extra MOD edges from earlier to later nodes in a topological order keep
  // the graph acyclic.
  const std::size_t n = b.g.nodes.size();
  const double density =
      cfg.min_edge_density + (cfg.max_edge_density - cfg.min_edge_density) * rng.uniform();
  const auto wanted = static_cast<std::size_t>(std::llround(density * static_cast<double>(n)));
  if (b.g.edges.size() < wanted) {
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> out(n);
    std::set<std::pair<std::size_t, std::size_t>> linked;
    for (const auto& e : b.g.edges) {
      out[e.src].push_back(e.dst);
      ++indegree[e.dst];
      linked.insert(std::minmax(e.src, e.dst));
    }
    std::vector<std::size_t> order;
    std::vector<std::size_t> ready;
    for (std::size_t i = n; i-- > 0;) {
      if (indegree[i] == 0) {
        ready.push_back(i);
      }
    }
    while (!ready.empty()) {
      const std::size_t v = ready.back();
      ready.pop_back();
      order.push_back(v);
      for (std::size_t d : out[v]) {
        if (--indegree[d] == 0) {
          ready.push_back(d);
        }
      }
    }
    std::vector<std::pair<std::size_t, std::size_t>> free_pairs;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!linked.contains(std::minmax(order[i], order[j]))) {
          free_pairs.emplace_back(order[i], order[j]);
        }
      }
    }
    rng.shuffle(std::span(free_pairs));
    for (std::size_t k = 0; k < free_pairs.size() && b.g.edges.size() < wanted; ++k) {
      b.link(free_pairs[k].first, free_pairs[k].second, "MOD");
    }
  }

  // Shuffle node order so that node index carries no information.
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) {
    perm[i] = i;
  }
  rng.shuffle(std::span(perm));
  RawGraph shuffled;
  shuffled.id = b.g.id;
  shuffled.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled.nodes[perm[i]] = std::move(b.g.nodes[i]);
  }
  for (auto& e : b.g.edges) {
    shuffled.edges.push_back({perm[e.src], perm[e.dst], std::move(e.label)});
  }
  shuffled.htop = perm[b.g.htop];
  return shuffled;
}

}  // namespace

std::vector<RawGraph> generate_synthetic_corpus(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const Rng root = Rng(seed).split("synth");
  std::vector<RawGraph> out;
  out.reserve(config.num_graphs);
  for (std::size_t i = 0; i < config.num_graphs; ++i) {
    out.push_back(generate_one(config, root.split(static_cast<std::uint64_t>(i)),
                               "synth-" + std::to_string(seed) + "-" + std::to_string(i)));
  }
  return out;
}

}  // namespace gfolds
