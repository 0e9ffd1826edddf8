#pragma once

// Synthetic planted world: a deterministic embedding universe where the
// true step of every frame is known.
//
// A universe fixes one latent unit vector u_c per cooking action concept c
// (a verb/food pair such as "chop onions") and a shared distractor d:
//
//   status prompt of c, j  -> u_c rotated by a small fixed angle
//   step text of c         -> normalize(alpha * u_c + (1 - alpha) * d)
//   frame showing c        -> normalize(u_c + sigma * g / sqrt(dim)), g ~ N(0, I)
//
// A world is one recipe drawn from the universe: n_steps distinct concepts
// chosen by the world seed. Identical text therefore embeds identically in
// every world of the same universe, as it would with a real model.
// Frame noise is seeded by the frame tag "synthetic:c=<concept>;<key>", so
// a frame always embeds to the same vector.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "oscar/embedding.hpp"
#include "oscar/random.hpp"
#include "oscar/recipe.hpp"
#include "oscar/rule_engine.hpp"

namespace oscar {

struct SyntheticUniverseParams {
  std::uint64_t seed = 0;
  int dim = 32;
  double alpha = 0.5;  // step-text signal strength in [0, 1]
  double sigma = 0.5;  // frame noise magnitude, >= 0
  double status_rotation_rad = 0.15;

  friend bool operator==(const SyntheticUniverseParams&, const SyntheticUniverseParams&) = default;
};

struct SyntheticWorldParams {
  int n_steps = 8;
  std::uint64_t seed = 0;  // picks the recipe
  SyntheticUniverseParams universe;
};

/// Concept encoded in a synthetic frame tag, if any.
inline std::optional<int> synthetic_frame_concept(std::string_view path) {
  constexpr std::string_view prefix = "synthetic:c=";
  if (!path.starts_with(prefix)) return std::nullopt;
  int c = 0;
  const char* begin = path.data() + prefix.size();
  const char* end = path.data() + path.size();
  auto [ptr, ec] = std::from_chars(begin, end, c);
  if (ec != std::errc{} || ptr == begin) return std::nullopt;
  return c;
}

class SyntheticUniverse {
 public:
  explicit SyntheticUniverse(SyntheticUniverseParams params) : params_(params) {
    if (params_.dim < 2) throw DimensionMismatch("synthetic universe needs dim >= 2");
    if (params_.alpha < 0.0 || params_.alpha > 1.0) throw InvalidWeight("alpha must lie in [0, 1]");
    if (params_.sigma < 0.0) throw InvalidWeight("sigma must be >= 0");
    for (std::size_t v = 0; v < verbs().size(); ++v)
      for (std::size_t f = 0; f < foods().size(); ++f) concepts_.push_back({v, f});
    Rng rng(derive_seed(params_.seed, "universe"));
    for (std::size_t c = 0; c < concepts_.size(); ++c) latent_.push_back(random_unit(rng));
    distractor_ = random_unit(rng);
    for (int c = 0; c < concept_count(); ++c) {
      text_index_.try_emplace(step_text(c), c, -1);
      const auto statuses = concept_statuses(c, 1);
      for (std::size_t j = 0; j < statuses.size(); ++j)
        text_index_.try_emplace(render_status_prompt(statuses[j]), c, static_cast<int>(j));
    }
  }

  static const std::vector<std::string>& verbs() {
    static const std::vector<std::string> v = {"Chop", "Dice", "Slice", "Peel", "Fry",
                                               "Sauté", "Boil", "Simmer", "Stir", "Mix",
                                               "Whisk", "Crack", "Add", "Bake", "Pour", "Wash"};
    return v;
  }
  static const std::vector<std::string>& foods() {
    static const std::vector<std::string> f = {
        "onions", "carrots", "mushrooms", "potatoes", "garlic", "tomatoes", "eggs", "rice",
        "noodles", "peppers", "spinach", "chicken", "beans", "zucchini", "celery", "broccoli",
        "cabbage", "tofu", "leeks", "apples", "lentils", "shrimp", "pasta"};
    return f;
  }

  const SyntheticUniverseParams& params() const { return params_; }
  int concept_count() const { return static_cast<int>(concepts_.size()); }
  const std::string& food(int c) const { return foods()[concepts_.at(static_cast<std::size_t>(c)).second]; }
  std::string step_text(int c) const {
    return verbs()[concepts_.at(static_cast<std::size_t>(c)).first] + " the " + food(c) + ".";
  }
  /// Statuses the rule engine extracts for concept c's step text.
  std::vector<ObjectStatus> concept_statuses(int c, int step_index) const {
    return rule_based_statuses(step_text(c), {food(c)}, step_index);
  }

  const EmbeddingVector& latent(int c) const { return latent_.at(static_cast<std::size_t>(c)); }
  const EmbeddingVector& distractor() const { return distractor_; }

  EmbeddingVector step_text_embedding(int c) const {
    const auto& u = latent(c).values;
    std::vector<double> v(u.size());
    for (std::size_t k = 0; k < u.size(); ++k)
      v[k] = params_.alpha * u[k] + (1.0 - params_.alpha) * distractor_.values[k];
    if (norm(v) == 0.0) return distractor_;
    return normalized(std::move(v));
  }

  /// The j-th status prompt of concept c (0-based j).
  EmbeddingVector status_embedding(int c, int j) const {
    const auto& u = latent(c).values;
    Rng rng(derive_seed(params_.seed, "status-direction",
                        static_cast<std::uint64_t>(c) * 1000003ULL + static_cast<std::uint64_t>(j)));
    auto r = random_unit(rng).values;
    double proj = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) proj += r[k] * u[k];
    for (std::size_t k = 0; k < u.size(); ++k) r[k] -= proj * u[k];
    const double rn = norm(r);
    const double cs = std::cos(params_.status_rotation_rad);
    const double sn = std::sin(params_.status_rotation_rad);
    std::vector<double> v(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) v[k] = cs * u[k] + (rn > 0.0 ? sn * r[k] / rn : 0.0);
    return normalized(std::move(v));
  }

  static std::string frame_tag(int c, const std::string& key) {
    return "synthetic:c=" + std::to_string(c) + ";" + key;
  }

  EmbeddingVector frame_embedding(int c, const std::string& key) const {
    const auto& u = latent(c).values;
    Rng rng(derive_seed(params_.seed, "frame-noise:" + frame_tag(c, key)));
    const double scale = params_.sigma / std::sqrt(static_cast<double>(params_.dim));
    std::vector<double> v(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) v[k] = u[k] + scale * rng.normal();
    return normalized(std::move(v));
  }

  /// Planted vectors for known step texts and status prompts; a
  /// content-seeded random vector for anything else.
  EmbeddingVector embed_text(const std::string& text) const {
    if (auto it = text_index_.find(text); it != text_index_.end()) {
      const auto [c, j] = it->second;
      return j < 0 ? step_text_embedding(c) : status_embedding(c, j);
    }
    return unrelated("text:" + text);
  }

  EmbeddingVector embed_frame(const FrameRef& frame) const {
    if (frame.payload.empty()) {
      if (auto c = synthetic_frame_concept(frame.path); c && *c >= 0 && *c < concept_count()) {
        const auto key_pos = frame.path.find(';');
        return frame_embedding(*c, key_pos == std::string::npos ? "" : frame.path.substr(key_pos + 1));
      }
      return unrelated("frame:" + frame.path);
    }
    return unrelated("payload:" + std::to_string(content_hash(frame)));
  }

 private:
  EmbeddingVector random_unit(Rng& rng) const {
    std::vector<double> v(static_cast<std::size_t>(params_.dim));
    for (double& x : v) x = rng.normal();
    return normalized(std::move(v));
  }

  EmbeddingVector unrelated(const std::string& key) const {
    Rng rng(derive_seed(params_.seed, "unrelated:" + key));
    return random_unit(rng);
  }

  SyntheticUniverseParams params_;
  std::vector<std::pair<std::size_t, std::size_t>> concepts_;  // (verb, food)
  std::vector<EmbeddingVector> latent_;
  EmbeddingVector distractor_;
  std::unordered_map<std::string, std::pair<int, int>> text_index_;
};

/// One recipe of n_steps distinct concepts drawn from a universe.
class SyntheticWorld {
 public:
  explicit SyntheticWorld(SyntheticWorldParams params)
      : params_(params), universe_(std::make_shared<const SyntheticUniverse>(params.universe)) {
    init();
  }
  SyntheticWorld(int n_steps, std::uint64_t seed, std::shared_ptr<const SyntheticUniverse> universe)
      : universe_(std::move(universe)) {
    params_.n_steps = n_steps;
    params_.seed = seed;
    params_.universe = universe_->params();
    init();
  }

  const SyntheticWorldParams& params() const { return params_; }
  const SyntheticUniverse& universe() const { return *universe_; }
  std::shared_ptr<const SyntheticUniverse> universe_ptr() const { return universe_; }
  const Recipe& recipe() const { return recipe_; }
  int concept_of(int step) const { return concepts_.at(static_cast<std::size_t>(step - 1)); }

  std::string frame_tag(int step, const std::string& key) const {
    return SyntheticUniverse::frame_tag(concept_of(step), key);
  }
  EmbeddingVector step_text_embedding(int step) const {
    return universe_->step_text_embedding(concept_of(step));
  }
  EmbeddingVector status_embedding(int step, int j) const {
    return universe_->status_embedding(concept_of(step), j);
  }
  EmbeddingVector frame_embedding(int step, const std::string& key) const {
    return universe_->frame_embedding(concept_of(step), key);
  }

  friend bool operator==(const SyntheticWorld& a, const SyntheticWorld& b) {
    return a.params_.n_steps == b.params_.n_steps && a.params_.seed == b.params_.seed &&
           a.params_.universe == b.params_.universe && a.concepts_ == b.concepts_ &&
           a.recipe_ == b.recipe_;
  }

 private:
  void init() {
    if (params_.n_steps < 1) throw InvalidRecipe("synthetic world needs n_steps >= 1");
    if (params_.n_steps > universe_->concept_count())
      throw InvalidRecipe("synthetic world supports at most " +
                          std::to_string(universe_->concept_count()) + " steps");
    Rng rng(derive_seed(params_.seed, "recipe"));
    std::vector<int> pool(static_cast<std::size_t>(universe_->concept_count()));
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    // partial Fisher-Yates
    for (int i = 0; i < params_.n_steps; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      concepts_.push_back(pool[static_cast<std::size_t>(i)]);
    }
    std::vector<std::string> texts;
    std::vector<std::string> ingredients;
    for (int c : concepts_) {
      texts.push_back(universe_->step_text(c));
      if (std::find(ingredients.begin(), ingredients.end(), universe_->food(c)) == ingredients.end())
        ingredients.push_back(universe_->food(c));
    }
    recipe_ = make_recipe("Synthetic recipe " + std::to_string(params_.seed), ingredients, texts);
    for (auto& s : recipe_.steps) s.statuses = universe_->concept_statuses(concept_of(s.index), s.index);
  }

  SyntheticWorldParams params_;
  std::shared_ptr<const SyntheticUniverse> universe_;
  std::vector<int> concepts_;
  Recipe recipe_;
};

/// World with its own universe whose seed equals the world seed.
inline SyntheticWorld synthetic_planted_world(int n_steps, std::uint64_t seed, double alpha,
                                              double sigma, int dim = SyntheticUniverseParams{}.dim) {
  SyntheticWorldParams p;
  p.n_steps = n_steps;
  p.seed = seed;
  p.universe.seed = seed;
  p.universe.alpha = alpha;
  p.universe.sigma = sigma;
  p.universe.dim = dim;
  return SyntheticWorld(p);
}

class SyntheticBackend final : public EmbeddingBackend {
 public:
  explicit SyntheticBackend(std::shared_ptr<const SyntheticUniverse> universe,
                            std::string label = "synthetic")
      : universe_(std::move(universe)), label_(std::move(label)) {}
  explicit SyntheticBackend(const SyntheticWorld& world, std::string label = "synthetic")
      : SyntheticBackend(world.universe_ptr(), std::move(label)) {}

  BackendDescriptor descriptor() const override {
    return {BackendKind::kSynthetic, "", universe_->params().dim, label_};
  }

  const SyntheticUniverse& universe() const { return *universe_; }

  /// Every text this backend has been asked to embed, in call order.
  std::vector<std::string> seen_texts() const {
    std::lock_guard lock(mu_);
    return seen_texts_;
  }

 protected:
  std::vector<EmbeddingVector> do_embed_texts(const std::vector<std::string>& texts) override {
    {
      std::lock_guard lock(mu_);
      seen_texts_.insert(seen_texts_.end(), texts.begin(), texts.end());
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(universe_->embed_text(t));
    return out;
  }

  std::vector<EmbeddingVector> do_embed_images(const std::vector<FrameRef>& frames) override {
    std::vector<EmbeddingVector> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(universe_->embed_frame(f));
    return out;
  }

 private:
  std::shared_ptr<const SyntheticUniverse> universe_;
  std::string label_;
  mutable std::mutex mu_;
  std::vector<std::string> seen_texts_;
};

}  // namespace oscar
