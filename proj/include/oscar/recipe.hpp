#pragma once

// Recipe, Step and ObjectStatus value types, validation, the normalized
// recipe JSON file format, and parsing of raw recipes (structured or free
// text) into that form.

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oscar/errors.hpp"

namespace oscar {

struct ObjectStatus {
  std::string object;  // ingredient or intermediate product
  std::string state;   // e.g. "being chopped"
  int step_index = 0;

  friend bool operator==(const ObjectStatus&, const ObjectStatus&) = default;
};

struct Step {
  int index = 0;
  std::string text;
  std::vector<ObjectStatus> statuses;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Recipe {
  std::string title;
  std::vector<std::string> ingredients;
  std::vector<Step> steps;

  std::size_t size() const { return steps.size(); }
  const Step& step(int index) const { return steps.at(static_cast<std::size_t>(index - 1)); }

  friend bool operator==(const Recipe&, const Recipe&) = default;
};

/// Prompt text fed to the embedding backend for one status.
inline std::string render_status_prompt(const ObjectStatus& status) {
  return "a photo of " + status.object + " " + status.state;
}

namespace detail {

inline std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Collapses internal whitespace runs to a single space and trims.
inline std::string squash_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// "1." "2)" "Step 3:" "-" "*" "•" prefixes.
inline const std::regex& numbered_line() {
  static const std::regex re(R"(^\s*(?:[Ss]tep\s*)?(\d+)\s*[.):]\s*(.*)$)");
  return re;
}
inline const std::regex& bullet_line() {
  static const std::regex re(R"(^\s*(?:[-*+]|\xE2\x80\xA2)\s+(.*)$)");
  return re;
}

/// Removes list numbering or bullet markers and squashes whitespace.
inline std::string strip_list_marker(std::string_view line) {
  std::string s(line);
  std::smatch m;
  if (std::regex_match(s, m, numbered_line())) return squash_whitespace(m[2].str());
  if (std::regex_match(s, m, bullet_line())) return squash_whitespace(m[1].str());
  return squash_whitespace(s);
}

}  // namespace detail

/// Checks the Recipe invariants; throws InvalidRecipe naming the violation.
inline void validate(const Recipe& recipe) {
  if (recipe.steps.empty()) throw InvalidRecipe("recipe has no steps");
  for (std::size_t i = 0; i < recipe.steps.size(); ++i) {
    const Step& s = recipe.steps[i];
    const int expected = static_cast<int>(i) + 1;
    if (s.index != expected)
      throw InvalidRecipe("step at position " + std::to_string(expected) + " has index " +
                          std::to_string(s.index));
    if (detail::trim(s.text).empty())
      throw InvalidRecipe("step " + std::to_string(expected) + " has empty text");
    for (const auto& st : s.statuses) {
      if (st.step_index != s.index)
        throw InvalidRecipe("status '" + st.object + "' on step " + std::to_string(s.index) +
                            " refers to step " + std::to_string(st.step_index));
      if (st.object.empty() || st.state.empty())
        throw InvalidRecipe("empty status on step " + std::to_string(s.index));
    }
  }
}

/// Re-assigns step indices 1..N in order and relinks statuses.
inline void reindex(Recipe& recipe) {
  for (std::size_t i = 0; i < recipe.steps.size(); ++i) {
    recipe.steps[i].index = static_cast<int>(i) + 1;
    for (auto& st : recipe.steps[i].statuses) st.step_index = recipe.steps[i].index;
  }
}

inline Recipe make_recipe(std::string title, std::vector<std::string> ingredients,
                          const std::vector<std::string>& step_texts) {
  Recipe r{std::move(title), std::move(ingredients), {}};
  for (const auto& t : step_texts) r.steps.push_back(Step{0, t, {}});
  reindex(r);
  return r;
}

// ---------------------------------------------------------------------------
// Normalized recipe file:
// {"title": str, "ingredients": [str],
//  "steps": [{"index": int, "text": str, "statuses": [{"object": str, "state": str}]}]}

inline nlohmann::json to_json(const Recipe& recipe) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : recipe.steps) {
    nlohmann::json statuses = nlohmann::json::array();
    for (const auto& st : s.statuses)
      statuses.push_back({{"object", st.object}, {"state", st.state}});
    steps.push_back({{"index", s.index}, {"text", s.text}, {"statuses", std::move(statuses)}});
  }
  return {{"title", recipe.title}, {"ingredients", recipe.ingredients}, {"steps", std::move(steps)}};
}

/// Reads the normalized recipe format. Missing "index" fields are assigned
/// by position; present ones must be contiguous. Throws InvalidRecipe.
inline Recipe recipe_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidRecipe("recipe JSON must be an object");
  Recipe r;
  try {
    r.title = j.value("title", std::string{});
    if (j.contains("ingredients"))
      for (const auto& ing : j.at("ingredients")) r.ingredients.push_back(ing.get<std::string>());
    if (!j.contains("steps") || !j.at("steps").is_array())
      throw InvalidRecipe("recipe JSON has no \"steps\" array");
    int position = 0;
    for (const auto& js : j.at("steps")) {
      ++position;
      Step s;
      if (js.is_string()) {
        s.index = position;
        s.text = js.get<std::string>();
      } else {
        s.index = js.value("index", position);
        s.text = js.at("text").get<std::string>();
        if (js.contains("statuses"))
          for (const auto& jst : js.at("statuses"))
            s.statuses.push_back({jst.at("object").get<std::string>(),
                                  jst.at("state").get<std::string>(), s.index});
      }
      r.steps.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidRecipe(std::string("bad recipe JSON: ") + e.what());
  }
  validate(r);
  return r;
}

// ---------------------------------------------------------------------------
// Raw recipe parsing.

/// Parses a structured recipe (JSON object with a "steps" array, or a bare
/// array of step strings). Throws UnparseableRecipe if no step list exists.
inline Recipe parse_recipe_json(const nlohmann::json& raw) {
  nlohmann::json j = raw;
  if (j.is_array()) j = nlohmann::json{{"steps", raw}};
  if (!j.is_object() || !j.contains("steps") || !j.at("steps").is_array() ||
      j.at("steps").empty())
    throw UnparseableRecipe("structured recipe has no non-empty \"steps\" array");
  // Structured input may omit indices; renumber by position.
  for (auto& s : j["steps"])
    if (s.is_object()) s.erase("index");
  try {
    return recipe_from_json(j);
  } catch (const InvalidRecipe& e) {
    throw UnparseableRecipe(e.what());
  }
}

/// Parses free text or serialized JSON.
///
/// Free text layout: an optional title line, an optional "Ingredients"
/// section of bullet/numbered lines, and a step list. Step lines are
/// numbered ("1.", "2)", "Step 3:"); when no numbered line exists, bullet
/// lines outside the ingredients section are used instead. Unmarked lines
/// directly after a step continue that step.
inline Recipe parse_recipe(std::string_view raw) {
  const std::string trimmed = detail::trim(raw);
  if (trimmed.empty()) throw UnparseableRecipe("empty input");
  if (trimmed.front() == '{' || trimmed.front() == '[') {
    nlohmann::json j = nlohmann::json::parse(trimmed, nullptr, false);
    if (!j.is_discarded()) return parse_recipe_json(j);
  }

  enum class Section { kPreamble, kIngredients, kSteps };
  static const std::regex ingredients_header(R"(^\s*#*\s*ingredients?\s*:?\s*$)",
                                             std::regex::icase);
  static const std::regex steps_header(
      R"(^\s*#*\s*(steps|instructions|directions|method|preparation)\s*:?\s*$)",
      std::regex::icase);

  struct Line {
    Section section;
    std::string text;
    bool numbered;
    bool bullet;
  };
  std::vector<Line> lines;
  Section section = Section::kPreamble;
  bool bulleted_ingredients = false;
  std::istringstream in{std::string(raw)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) {
      lines.push_back({section, "", false, false});
      continue;
    }
    if (std::regex_match(line, ingredients_header)) {
      section = Section::kIngredients;
      continue;
    }
    if (std::regex_match(line, steps_header)) {
      section = Section::kSteps;
      continue;
    }
    const bool numbered = std::regex_match(line, detail::numbered_line());
    const bool bullet = !numbered && std::regex_match(line, detail::bullet_line());
    // A numbered line after bulleted ingredients starts the steps.
    if (numbered && section == Section::kIngredients && bulleted_ingredients) section = Section::kSteps;
    if (bullet && section == Section::kIngredients) bulleted_ingredients = true;
    lines.push_back({section, line, numbered, bullet});
  }

  const bool any_numbered_step = std::any_of(lines.begin(), lines.end(), [](const Line& l) {
    return l.numbered && l.section != Section::kIngredients;
  });
  auto is_step_line = [&](const Line& l) {
    if (l.section == Section::kIngredients) return false;
    return any_numbered_step ? l.numbered : l.bullet;
  };

  Recipe r;
  std::vector<std::string> step_texts;
  bool in_step = false;
  for (const Line& l : lines) {
    if (l.text.empty()) {
      in_step = false;
      continue;
    }
    if (is_step_line(l)) {
      std::string text = detail::strip_list_marker(l.text);
      if (!text.empty()) {
        step_texts.push_back(std::move(text));
        in_step = true;
      }
      continue;
    }
    if (l.section == Section::kIngredients && (l.numbered || l.bullet || !in_step)) {
      std::string ing = detail::strip_list_marker(l.text);
      if (!ing.empty()) r.ingredients.push_back(std::move(ing));
      continue;
    }
    if (in_step && !l.numbered && !l.bullet) {
      step_texts.back() += " " + detail::squash_whitespace(l.text);
      continue;
    }
    if (r.title.empty() && step_texts.empty() && l.section == Section::kPreamble && !l.bullet &&
        !l.numbered)
      r.title = detail::squash_whitespace(l.text);
  }
  if (step_texts.empty()) throw UnparseableRecipe("no numbered or bulleted step list found");
  for (auto& t : step_texts) r.steps.push_back(Step{0, std::move(t), {}});
  reindex(r);
  return r;
}

}  // namespace oscar
