#pragma once

// Step normalization and object-status extraction, backed either by an LLM
// client or by the deterministic rule engine.

#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oscar/llm_client.hpp"
#include "oscar/prompt_templates.hpp"
#include "oscar/recipe.hpp"
#include "oscar/rule_engine.hpp"
#include "oscar/template.hpp"

namespace oscar {

/// Tag for the deterministic extractor.
struct RuleEngine {};

using StatusExtractor = std::variant<RuleEngine, LlmClient*>;

namespace detail {

inline std::string numbered_steps(const Recipe& recipe) {
  std::string out;
  for (const auto& s : recipe.steps) out += std::to_string(s.index) + ". " + s.text + "\n";
  return out;
}

inline std::string bullet_list(const std::vector<std::string>& items) {
  if (items.empty()) return "(none listed)\n";
  std::string out;
  for (const auto& i : items) out += "- " + i + "\n";
  return out;
}

/// The reply must be a JSON array, optionally wrapped in a ``` fence.
inline nlohmann::json parse_llm_array(const std::string& content) {
  std::string body = trim(content);
  if (body.starts_with("```")) {
    const auto nl = body.find('\n');
    const auto fence = body.rfind("```");
    if (nl != std::string::npos && fence != std::string::npos && fence > nl)
      body = trim(std::string_view(body).substr(nl + 1, fence - nl - 1));
  }
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_array())
    throw MalformedLLMOutput("expected a JSON array, got: " + body.substr(0, 120));
  return j;
}

}  // namespace detail

/// Cleans step text. With an LLM, the recipe is rewritten into single-action
/// imperative steps; the reply must be a JSON array of strings. Without one,
/// only whitespace and list numbering are cleaned up. Indices are always
/// re-assigned contiguously; existing statuses are dropped when the LLM
/// changes the step list.
inline Recipe normalize_steps(const Recipe& recipe, LlmClient* llm = nullptr) {
  validate(recipe);
  Recipe out = recipe;
  if (llm == nullptr) {
    std::vector<Step> cleaned;
    for (auto s : out.steps) {
      s.text = detail::strip_list_marker(s.text);
      if (!s.text.empty()) cleaned.push_back(std::move(s));
    }
    out.steps = std::move(cleaned);
    out.title = detail::squash_whitespace(out.title);
    for (auto& ing : out.ingredients) ing = detail::squash_whitespace(ing);
    reindex(out);
    validate(out);
    return out;
  }

  const std::string prompt = fill_template(
      prompts::kNormalize, {{"title", recipe.title},
                            {"ingredients", detail::bullet_list(recipe.ingredients)},
                            {"steps", detail::numbered_steps(recipe)}});
  const auto reply = detail::parse_llm_array(llm->chat({{"user", prompt}}));
  std::vector<std::string> texts;
  for (const auto& item : reply) {
    if (!item.is_string()) throw MalformedLLMOutput("step list entries must be strings");
    std::string text = detail::strip_list_marker(item.get<std::string>());
    if (!text.empty()) texts.push_back(std::move(text));
  }
  if (texts.empty()) throw MalformedLLMOutput("LLM returned an empty step list");
  out = make_recipe(recipe.title, recipe.ingredients, texts);
  return out;
}

/// Attaches object statuses to every step, replacing any existing ones.
inline Recipe extract_object_statuses(const Recipe& recipe, StatusExtractor extractor) {
  validate(recipe);
  Recipe out = recipe;
  if (std::holds_alternative<RuleEngine>(extractor)) {
    for (auto& s : out.steps) s.statuses = rule_based_statuses(s.text, out.ingredients, s.index);
    return out;
  }

  LlmClient* llm = std::get<LlmClient*>(extractor);
  const std::string prompt = fill_template(
      prompts::kExtract, {{"ingredients", detail::bullet_list(recipe.ingredients)},
                          {"steps", detail::numbered_steps(recipe)}});
  const auto reply = detail::parse_llm_array(llm->chat({{"user", prompt}}));
  for (auto& s : out.steps) s.statuses.clear();
  for (const auto& item : reply) {
    if (!item.is_object() || !item.contains("step") || !item.contains("object") ||
        !item.contains("state") || !item.at("step").is_number_integer() ||
        !item.at("object").is_string() || !item.at("state").is_string())
      throw MalformedLLMOutput("status entries need integer \"step\" and string \"object\"/\"state\"");
    const int step = item.at("step").get<int>();
    if (step < 1 || step > static_cast<int>(out.steps.size()))
      throw MalformedLLMOutput("status refers to step " + std::to_string(step) +
                               " outside 1.." + std::to_string(out.steps.size()));
    ObjectStatus st{detail::squash_whitespace(item.at("object").get<std::string>()),
                    detail::squash_whitespace(item.at("state").get<std::string>()), step};
    if (st.object.empty() || st.state.empty()) throw MalformedLLMOutput("empty object or state");
    auto& list = out.steps[static_cast<std::size_t>(step - 1)].statuses;
    if (std::find(list.begin(), list.end(), st) == list.end()) list.push_back(std::move(st));
  }
  return out;
}

}  // namespace oscar
