#pragma once

// Deterministic object-status extraction.
//
// A fixed cooking-verb lexicon maps verb forms to "being <participle>"
// states. Objects are ingredient names found in the step text (longest
// match wins), restricted to the direct-object region that follows each
// verb. When no ingredient is mentioned there, the bare noun phrase after
// the verb is used; pronouns ("it", "them") inherit the previous verb's
// objects.

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "oscar/recipe.hpp"

namespace oscar {

struct VerbEntry {
  std::string_view participle;
  std::vector<std::string_view> forms;
};

inline const std::vector<VerbEntry>& verb_lexicon() {
  static const std::vector<VerbEntry> lexicon = {
      {"chopped", {"chop", "chops", "chopped", "chopping"}},
      {"diced", {"dice", "dices", "diced", "dicing"}},
      {"sliced", {"slice", "slices", "sliced", "slicing"}},
      {"peeled", {"peel", "peels", "peeled", "peeling"}},
      {"fried", {"fry", "fries", "fried", "frying"}},
      {"sautéed",
       {"sauté", "saute", "sautés", "sautes", "sautéed", "sauteed", "sautéing", "sauteing",
        "sautéd"}},
      {"boiled", {"boil", "boils", "boiled", "boiling"}},
      {"simmered", {"simmer", "simmers", "simmered", "simmering"}},
      {"stirred", {"stir", "stirs", "stirred", "stirring"}},
      {"mixed", {"mix", "mixes", "mixed", "mixing"}},
      {"whisked", {"whisk", "whisks", "whisked", "whisking"}},
      {"cracked", {"crack", "cracks", "cracked", "cracking"}},
      {"added", {"add", "adds", "added", "adding"}},
      {"baked", {"bake", "bakes", "baked", "baking"}},
      {"poured", {"pour", "pours", "poured", "pouring"}},
      {"washed", {"wash", "washes", "washed", "washing"}},
      {"melted", {"melt", "melts", "melted", "melting"}},
      {"blended", {"blend", "blends", "blended", "blending"}},
      {"grated", {"grate", "grates", "grated", "grating"}},
      {"minced", {"mince", "minces", "minced", "mincing"}},
      {"drained", {"drain", "drains", "drained", "draining"}},
      {"roasted", {"roast", "roasts", "roasted", "roasting"}},
      {"grilled", {"grill", "grills", "grilled", "grilling"}},
      {"mashed", {"mash", "mashes", "mashed", "mashing"}},
      {"seasoned", {"season", "seasons", "seasoned", "seasoning"}},
  };
  return lexicon;
}

namespace detail {

/// Splits into lowercase word tokens. Letters, digits, apostrophes, '/'
/// (fractions) and any non-ASCII byte (accented letters) form words.
inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'' || c == '/' || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline const VerbEntry* lookup_verb(std::string_view word) {
  for (const auto& v : verb_lexicon())
    if (std::find(v.forms.begin(), v.forms.end(), word) != v.forms.end()) return &v;
  return nullptr;
}

inline bool is_quantity(std::string_view w) {
  static const std::unordered_set<std::string_view> units = {
      "cup", "cups", "tbsp", "tsp", "tablespoon", "tablespoons", "teaspoon", "teaspoons",
      "g", "kg", "ml", "l", "oz", "ounce", "ounces", "lb", "lbs", "pound", "pounds",
      "pinch", "dash", "clove", "cloves", "can", "cans", "handful", "bunch", "piece",
      "pieces", "slice", "slices", "large", "medium", "small", "of", "a", "an", "some"};
  if (!w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) {
        return std::isdigit(c) || c == '/' || c == '.';
      }))
    return true;
  return units.count(w) > 0;
}

inline bool is_determiner(std::string_view w) {
  static const std::unordered_set<std::string_view> set = {
      "the", "a", "an", "some", "all", "your", "remaining", "more", "any", "half", "each"};
  return set.count(w) > 0;
}

inline bool is_pronoun(std::string_view w) {
  static const std::unordered_set<std::string_view> set = {"it", "them", "this", "these",
                                                           "that", "those", "everything"};
  return set.count(w) > 0;
}

// Tokens that close the direct-object region of a verb.
inline bool is_region_break(std::string_view w) {
  static const std::unordered_set<std::string_view> set = {
      "in", "into", "with", "on", "onto", "over", "until", "for", "to", "at", "from", "under",
      "then", "till", "while", "before", "after", "so", "if", "of", "by", "about"};
  return set.count(w) > 0;
}

// Particles that may sit between a verb and its object ("add in the garlic").
inline bool is_particle(std::string_view w) {
  static const std::unordered_set<std::string_view> set = {"in", "into", "up", "down", "out", "off", "together"};
  return set.count(w) > 0;
}

// Words after a verb that are not its object.
inline bool is_filler(std::string_view w) {
  static const std::unordered_set<std::string_view> set = {
      "well", "thoroughly", "gently", "constantly", "occasionally", "briefly", "together",
      "finely", "roughly", "thinly", "coarsely", "quickly", "slowly", "up", "down", "off",
      "out", "in", "into", "and", "or", "lightly", "carefully", "evenly"};
  return set.count(w) > 0;
}

/// Candidate match keys for one ingredient line, as token sequences.
inline std::vector<std::vector<std::string>> ingredient_keys(std::string_view ingredient) {
  std::string_view head = ingredient.substr(0, ingredient.find_first_of(",(;"));
  std::vector<std::string> toks = words(head);
  std::size_t first = 0;
  while (first < toks.size() && is_quantity(toks[first])) ++first;
  toks.erase(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(first));
  std::vector<std::vector<std::string>> keys;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::vector<std::string> key(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.end());
    if (key.size() == 1 && (is_determiner(key[0]) || is_quantity(key[0]))) continue;
    keys.push_back(key);
    // singular/plural variants of the head noun
    const std::string last = key.back();
    auto with_last = [&](std::string w) {
      auto alt = key;
      alt.back() = std::move(w);
      keys.push_back(std::move(alt));
    };
    if (last.size() > 3 && last.ends_with("es")) with_last(last.substr(0, last.size() - 2));
    if (last.size() > 2 && last.ends_with('s')) {
      with_last(last.substr(0, last.size() - 1));
    } else {
      with_last(last + "s");
      with_last(last + "es");
    }
  }
  return keys;
}

struct Mention {
  std::size_t pos;
  std::size_t len;
  std::string text;
};

inline std::vector<Mention> find_mentions(const std::vector<std::string>& toks,
                                          const std::vector<std::string>& ingredients) {
  std::vector<std::vector<std::string>> keys;
  for (const auto& ing : ingredients)
    for (auto& k : ingredient_keys(ing)) keys.push_back(std::move(k));
  std::vector<Mention> out;
  std::size_t pos = 0;
  while (pos < toks.size()) {
    std::size_t best = 0;
    for (const auto& key : keys) {
      if (key.size() <= best || pos + key.size() > toks.size()) continue;
      if (std::equal(key.begin(), key.end(), toks.begin() + static_cast<std::ptrdiff_t>(pos)))
        best = key.size();
    }
    if (best == 0) {
      ++pos;
      continue;
    }
    std::string text = toks[pos];
    for (std::size_t i = 1; i < best; ++i) text += " " + toks[pos + i];
    out.push_back({pos, best, std::move(text)});
    pos += best;
  }
  return out;
}

}  // namespace detail

/// Statuses for one step text given the recipe's ingredient list.
inline std::vector<ObjectStatus> rule_based_statuses(std::string_view step_text,
                                                     const std::vector<std::string>& ingredients,
                                                     int step_index) {
  const auto toks = detail::words(step_text);
  const auto mentions = detail::find_mentions(toks, ingredients);

  std::vector<std::size_t> verb_pos;
  for (std::size_t i = 0; i < toks.size(); ++i)
    if (detail::lookup_verb(toks[i])) verb_pos.push_back(i);

  std::vector<ObjectStatus> out;
  std::vector<std::string> previous_objects;
  for (std::size_t v = 0; v < verb_pos.size(); ++v) {
    const std::size_t begin = verb_pos[v] + 1;
    const std::size_t span_end = v + 1 < verb_pos.size() ? verb_pos[v + 1] : toks.size();

    // Direct-object region: skip leading particles, stop at a preposition.
    std::size_t region_begin = begin;
    while (region_begin < span_end && detail::is_particle(toks[region_begin])) ++region_begin;
    std::size_t region_end = region_begin;
    while (region_end < span_end && !detail::is_region_break(toks[region_end])) ++region_end;

    std::vector<std::string> objects;
    for (const auto& m : mentions)
      if (m.pos >= region_begin && m.pos < region_end) objects.push_back(m.text);

    if (objects.empty()) {
      std::size_t i = region_begin;
      while (i < region_end && (detail::is_determiner(toks[i]) || detail::is_quantity(toks[i])))
        ++i;
      if (i < region_end && !detail::is_pronoun(toks[i])) {
        std::string phrase;
        for (std::size_t n = 0; i < region_end && n < 4; ++i) {
          if (detail::is_filler(toks[i])) break;
          if (detail::lookup_verb(toks[i])) break;
          phrase += (phrase.empty() ? "" : " ") + toks[i];
          ++n;
        }
        if (!phrase.empty()) objects.push_back(phrase);
      }
    }
    if (objects.empty()) objects = previous_objects;

    const std::string state =
        "being " + std::string(detail::lookup_verb(toks[verb_pos[v]])->participle);
    for (const auto& obj : objects) {
      ObjectStatus st{obj, state, step_index};
      if (std::find(out.begin(), out.end(), st) == out.end()) out.push_back(std::move(st));
    }
    if (!objects.empty()) previous_objects = std::move(objects);
  }
  return out;
}

}  // namespace oscar
