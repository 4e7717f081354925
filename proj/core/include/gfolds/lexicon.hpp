// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace gfolds {

enum class Pos { kNoun, kVerb, kAdjective, kPreposition, kQuantifier, kConjunction, kOther };

// Part of speech read off a predicate name: the tag after the lemma for
// surface predicates ("_see_v_1"), the trailing tag for abstract ones
// ("udef_q", "and_c").
Pos pos_of(std::string_view predicate) noexcept;
std::string_view pos_name(Pos pos) noexcept;
std::optional<Pos> parse_pos(std::string_view name) noexcept;

enum class QuantNumber { kSingular, kPlural, kBoth };

inline constexpr std::array<std::string_view, 8> kSingularQuantifiers = {
    "_another_q", "_either_q", "_neither_q", "_that_q_dem",
    "_this_q_dem", "_every_q", "_a_q", "_each_q"};
inline constexpr std::array<std::string_view, 7> kPluralQuantifiers = {
    "_these_q_dem", "_certain_q", "_most_q", "_those_q_dem", "_all_q", "_such_q", "_both_q"};
inline constexpr std::array<std::string_view, 6> kBothQuantifiers = {
    "_some_q", "_the_q", "_any_q", "_enough_q", "_no_q", "which_q"};

std::optional<QuantNumber> quantifier_number(std::string_view predicate) noexcept;

// True when a quantifier can restrict a noun of number `target` (which is
// singular or plural): its own type or the both type.
bool quantifier_agrees(std::string_view predicate, QuantNumber target) noexcept;

}  // namespace gfolds
