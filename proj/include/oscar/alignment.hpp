#pragma once

// Frame-vs-prompt scoring, averaging over frames and trials, and fusion of
// the step-text (baseline) and object-status channels.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "oscar/embedding.hpp"
#include "oscar/recipe.hpp"

namespace oscar {

inline constexpr double kDefaultFusionWeight = 0.5;

enum class Channel { kBaseline, kStatus, kFused };

inline std::string to_string(Channel c) {
  switch (c) {
    case Channel::kBaseline: return "baseline";
    case Channel::kStatus: return "status";
    case Channel::kFused: return "fused";
  }
  return "unknown";
}

inline Channel channel_from_string(std::string_view s) {
  if (s == "baseline") return Channel::kBaseline;
  if (s == "status") return Channel::kStatus;
  if (s == "fused") return Channel::kFused;
  throw SchemaError("unknown channel '" + std::string(s) + "'");
}

/// T frames x N steps, row-major.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t rows, std::size_t cols, Channel channel)
      : rows_(rows), cols_(cols), channel_(channel), values_(rows * cols, 0.0) {}
  ScoreMatrix(std::size_t rows, std::size_t cols, Channel channel, std::vector<double> values)
      : rows_(rows), cols_(cols), channel_(channel), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) throw ShapeMismatch("score matrix value count does not match shape");
    for (double v : values_)
      if (!std::isfinite(v)) throw ShapeMismatch("score matrix holds a non-finite value");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Channel channel() const { return channel_; }
  double at(std::size_t t, std::size_t n) const { return values_[t * cols_ + n]; }
  double& at(std::size_t t, std::size_t n) { return values_[t * cols_ + n]; }
  std::span<const double> row(std::size_t t) const { return {values_.data() + t * cols_, cols_}; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Channel channel_ = Channel::kBaseline;
  std::vector<double> values_;
};

struct FusedScores {
  std::vector<double> scores;
  double weight = kDefaultFusionWeight;
  std::vector<std::string> provenance;  // labels of the contributing inputs
};

/// Rendered status prompts of a step, or the step text when it has none.
inline std::vector<std::string> status_prompts_for_step(const Step& step) {
  if (step.statuses.empty()) return {step.text};
  std::vector<std::string> out;
  out.reserve(step.statuses.size());
  for (const auto& s : step.statuses) out.push_back(render_status_prompt(s));
  return out;
}

/// Per-step prompt lists for a channel. The baseline channel reads only
/// step text; the status channel reads only statuses (plus the fallback).
inline std::vector<std::vector<std::string>> prompts_for_channel(const Recipe& recipe, Channel channel) {
  std::vector<std::vector<std::string>> out;
  out.reserve(recipe.steps.size());
  for (const auto& s : recipe.steps) {
    if (channel == Channel::kBaseline) {
      out.push_back({s.text});
    } else if (channel == Channel::kStatus) {
      out.push_back(status_prompts_for_step(s));
    } else {
      throw SchemaError("prompts exist only for the baseline and status channels");
    }
  }
  return out;
}

/// Prompt embeddings for every step, computed with one batched call.
struct PromptBank {
  Channel channel = Channel::kBaseline;
  std::vector<std::vector<EmbeddingVector>> per_step;
};

inline PromptBank embed_prompts(EmbeddingBackend& backend,
                                const std::vector<std::vector<std::string>>& prompts_per_step,
                                Channel channel) {
  if (prompts_per_step.empty()) throw ShapeMismatch("no steps to score against");
  std::vector<std::string> unique;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& prompts : prompts_per_step) {
    if (prompts.empty()) throw ShapeMismatch("a step has no prompts");
    for (const auto& p : prompts)
      if (slot.try_emplace(p, unique.size()).second) unique.push_back(p);
  }
  const auto vecs = embed_texts(backend, unique);
  PromptBank bank{channel, {}};
  for (const auto& prompts : prompts_per_step) {
    auto& row = bank.per_step.emplace_back();
    for (const auto& p : prompts) row.push_back(vecs[slot.at(p)]);
  }
  return bank;
}

/// Entry (t, n) is the best cosine between frame t and any prompt of step n.
inline ScoreMatrix score_embedded(const std::vector<EmbeddingVector>& frames, const PromptBank& bank) {
  ScoreMatrix m(frames.size(), bank.per_step.size(), bank.channel);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (std::size_t n = 0; n < bank.per_step.size(); ++n) {
      double best = -1.0;
      for (const auto& p : bank.per_step[n]) best = std::max(best, cosine_similarity(frames[t], p));
      m.at(t, n) = best;
    }
  }
  return m;
}

inline ScoreMatrix score_frames_against_prompts(EmbeddingBackend& backend, const std::vector<FrameRef>& frames,
                                                const std::vector<std::vector<std::string>>& prompts_per_step,
                                                Channel channel) {
  if (frames.empty()) throw ShapeMismatch("no frames to score");
  const auto bank = embed_prompts(backend, prompts_per_step, channel);
  return score_embedded(embed_images(backend, frames), bank);
}

/// Mean over every row of every matrix: one score per step.
inline std::vector<double> average_scores(std::span<const ScoreMatrix> matrices) {
  if (matrices.empty()) throw ShapeMismatch("nothing to average");
  const auto& first = matrices.front();
  std::vector<double> sum(first.cols(), 0.0);
  std::size_t rows = 0;
  for (const auto& m : matrices) {
    if (m.cols() != first.cols() || m.rows() != first.rows() || m.channel() != first.channel())
      throw ShapeMismatch("matrices differ in shape or channel");
    for (std::size_t t = 0; t < m.rows(); ++t)
      for (std::size_t n = 0; n < m.cols(); ++n) sum[n] += m.at(t, n);
    rows += m.rows();
  }
  if (rows == 0) throw ShapeMismatch("matrices have no rows");
  for (double& s : sum) s /= static_cast<double>(rows);
  return sum;
}

inline std::vector<double> average_scores(const ScoreMatrix& matrix) {
  return average_scores(std::span<const ScoreMatrix>(&matrix, 1));
}

/// fused = w * status + (1 - w) * baseline.
inline FusedScores fuse_scores(std::span<const double> baseline, std::span<const double> status,
                               double w = kDefaultFusionWeight) {
  if (baseline.size() != status.size())
    throw ShapeMismatch("baseline has " + std::to_string(baseline.size()) + " steps, status has " +
                        std::to_string(status.size()));
  if (!(w >= 0.0 && w <= 1.0)) throw InvalidWeight("fusion weight must lie in [0, 1]");
  FusedScores out{std::vector<double>(baseline.size()), w, {"baseline", "status"}};
  for (std::size_t n = 0; n < baseline.size(); ++n) out.scores[n] = w * status[n] + (1.0 - w) * baseline[n];
  return out;
}

/// 1-based index of the maximum; the smallest index wins ties.
inline int predict_argmax(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("cannot predict from an empty score vector");
  std::size_t best = 0;
  for (std::size_t n = 1; n < scores.size(); ++n)
    if (scores[n] > scores[best]) best = n;
  return static_cast<int>(best) + 1;
}

// ---------------------------------------------------------------------------
// Score log: one JSON line per frame per trial.

struct ScoreLogRecord {
  std::string video_id;
  int trial = 0;
  int segment_index = 0;
  double t_s = 0.0;
  Channel channel = Channel::kBaseline;
  std::vector<double> scores;

  friend bool operator==(const ScoreLogRecord&, const ScoreLogRecord&) = default;
};

inline nlohmann::json to_json(const ScoreLogRecord& r) {
  return {{"video_id", r.video_id}, {"trial", r.trial},           {"segment_index", r.segment_index},
          {"t_s", r.t_s},           {"channel", to_string(r.channel)}, {"scores", r.scores}};
}

inline ScoreLogRecord score_record_from_json(const nlohmann::json& j) {
  try {
    return {j.at("video_id").get<std::string>(), j.at("trial").get<int>(), j.at("segment_index").get<int>(),
            j.at("t_s").get<double>(), channel_from_string(j.at("channel").get<std::string>()),
            j.at("scores").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad score record: ") + e.what());
  }
}

}  // namespace oscar
