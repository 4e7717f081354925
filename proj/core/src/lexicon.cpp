// SPDX-License-Identifier: Apache-2.0
#include "gfolds/lexicon.hpp"

#include <algorithm>
#include <vector>

namespace gfolds {

namespace {

std::optional<Pos> tag_to_pos(std::string_view tag) noexcept {
  if (tag == "n") {
    return Pos::kNoun;
  }
  if (tag == "v") {
    return Pos::kVerb;
  }
  if (tag == "a") {
    return Pos::kAdjective;
  }
  if (tag == "p") {
    return Pos::kPreposition;
  }
  if (tag == "q") {
    return Pos::kQuantifier;
  }
  if (tag == "c") {
    return Pos::kConjunction;
  }
  return std::nullopt;
}

std::vector<std::string_view> split_fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find('_', start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) {
      return out;
    }
    start = pos + 1;
  }
}

template <std::size_t N>
bool listed(const std::array<std::string_view, N>& list, std::string_view p) {
  return std::find(list.begin(), list.end(), p) != list.end();
}

}  // namespace

Pos pos_of(std::string_view predicate) noexcept {
  const auto fields = split_fields(predicate);
  if (!predicate.empty() && predicate.front() == '_') {
    if (fields.size() >= 3) {
      return tag_to_pos(fields[2]).value_or(Pos::kOther);
    }
    return Pos::kOther;
  }
  if (fields.size() >= 2) {
    return tag_to_pos(fields.back()).value_or(Pos::kOther);
  }
  return Pos::kOther;
}

std::string_view pos_name(Pos pos) noexcept {
  switch (pos) {
    case Pos::kNoun:
      return "noun";
    case Pos::kVerb:
      return "verb";
    case Pos::kAdjective:
      return "adjective";
    case Pos::kPreposition:
      return "preposition";
    case Pos::kQuantifier:
      return "quantifier";
    case Pos::kConjunction:
      return "conjunction";
    case Pos::kOther:
      break;
  }
  return "other";
}

std::optional<Pos> parse_pos(std::string_view name) noexcept {
  for (Pos p : {Pos::kNoun, Pos::kVerb, Pos::kAdjective, Pos::kPreposition, Pos::kQuantifier,
                Pos::kConjunction, Pos::kOther}) {
    if (pos_name(p) == name) {
      return p;
    }
  }
  return std::nullopt;
}

std::optional<QuantNumber> quantifier_number(std::string_view predicate) noexcept {
  if (listed(kSingularQuantifiers, predicate)) {
    return QuantNumber::kSingular;
  }
  if (listed(kPluralQuantifiers, predicate)) {
    return QuantNumber::kPlural;
  }
  if (listed(kBothQuantifiers, predicate)) {
    return QuantNumber::kBoth;
  }
  return std::nullopt;
}

bool quantifier_agrees(std::string_view predicate, QuantNumber target) noexcept {
  const auto q = quantifier_number(predicate);
  return q && (*q == QuantNumber::kBoth || *q == target);
}

}  // namespace gfolds
