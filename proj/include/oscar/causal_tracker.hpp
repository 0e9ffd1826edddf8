#pragma once

// Time-causal step progression.
//
// Offline: decode_monotone finds the nondecreasing step assignment that
// maximizes the summed score, used when all segments are available.
// Online: observe() advances a progress state frame by frame with a bounded
// look-ahead window, a score margin and a confirmation count.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "oscar/alignment.hpp"
#include "oscar/errors.hpp"

namespace oscar {

using Assignment = std::vector<int>;  // 1-based step per row

namespace detail {

inline void check_decodable(const ScoreMatrix& s) {
  if (s.rows() == 0 || s.cols() == 0) throw ShapeError("score matrix must be at least 1x1");
  for (double v : s.values())
    if (!std::isfinite(v)) throw ShapeError("score matrix holds a non-finite value");
}

}  // namespace detail

/// Sum of S[t, a_t] accumulated in row order.
inline double assignment_score(const ScoreMatrix& s, const Assignment& a) {
  if (a.size() != s.rows()) throw ShapeError("assignment length differs from row count");
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) total += s.at(t, static_cast<std::size_t>(a[t] - 1));
  return total;
}

/// Best nondecreasing assignment in O(T*N); lexicographically smallest
/// among ties.
///
/// best_from[t][n] is the best score of rows t..T-1 given a_t = n. Walking
/// forward, each row takes the smallest admissible step that attains the
/// best remaining score, which yields the lexicographically smallest optimum.
inline Assignment decode_monotone(const ScoreMatrix& s) {
  detail::check_decodable(s);
  const std::size_t rows = s.rows();
  const std::size_t cols = s.cols();
  std::vector<double> best_from(rows * cols);
  std::vector<double> suffix_max(rows * cols);  // max over m >= n of best_from[t][m]
  auto idx = [cols](std::size_t t, std::size_t n) { return t * cols + n; };

  for (std::size_t tt = rows; tt-- > 0;) {
    for (std::size_t n = 0; n < cols; ++n)
      best_from[idx(tt, n)] = s.at(tt, n) + (tt + 1 < rows ? suffix_max[idx(tt + 1, n)] : 0.0);
    suffix_max[idx(tt, cols - 1)] = best_from[idx(tt, cols - 1)];
    for (std::size_t n = cols - 1; n-- > 0;)
      suffix_max[idx(tt, n)] = std::max(best_from[idx(tt, n)], suffix_max[idx(tt, n + 1)]);
  }

  Assignment a(rows);
  std::size_t floor = 0;
  for (std::size_t t = 0; t < rows; ++t) {
    const double target = suffix_max[idx(t, floor)];
    std::size_t n = floor;
    while (best_from[idx(t, n)] != target) ++n;
    a[t] = static_cast<int>(n) + 1;
    floor = n;
  }
  return a;
}

inline constexpr std::size_t kBruteForceLimit = 8;

/// Exhaustive search over every nondecreasing assignment, visited in
/// lexicographic order so the first strict maximum is the smallest optimum.
/// Objective is assignment_score(). Test oracle for decode_monotone.
inline Assignment brute_force_decode(const ScoreMatrix& s) {
  detail::check_decodable(s);
  if (s.rows() > kBruteForceLimit || s.cols() > kBruteForceLimit)
    throw TooLarge("brute force is limited to T, N <= " + std::to_string(kBruteForceLimit));
  const int n_steps = static_cast<int>(s.cols());
  Assignment current(s.rows(), 1);
  Assignment best;
  double best_score = 0.0;
  std::function<void(std::size_t, int)> visit = [&](std::size_t t, int lo) {
    if (t == s.rows()) {
      const double score = assignment_score(s, current);
      if (best.empty() || score > best_score) {
        best = current;
        best_score = score;
      }
      return;
    }
    for (int n = lo; n <= n_steps; ++n) {
      current[t] = n;
      visit(t + 1, n);
    }
  };
  visit(0, 1);
  return best;
}

// ---------------------------------------------------------------------------
// Progress state

struct ProgressState {
  int n_steps = 0;
  int current = 0;  // 0 = not started
  std::set<int> completed;
  std::set<int> missing;
  std::set<int> remaining;

  static ProgressState fresh(int n_steps) {
    ProgressState s;
    s.n_steps = n_steps;
    for (int i = 1; i <= n_steps; ++i) s.remaining.insert(i);
    return s;
  }

  friend bool operator==(const ProgressState&, const ProgressState&) = default;
};

/// True when completed, missing, remaining and {current} partition 1..N
/// with completed/missing below current and remaining above it.
inline bool partition_holds(const ProgressState& s) {
  if (s.n_steps < 1 || s.current < 0 || s.current > s.n_steps) return false;
  std::size_t total = s.completed.size() + s.missing.size() + s.remaining.size() + (s.current > 0 ? 1 : 0);
  if (total != static_cast<std::size_t>(s.n_steps)) return false;
  std::vector<int> seen(static_cast<std::size_t>(s.n_steps) + 1, 0);
  if (s.current > 0) ++seen[static_cast<std::size_t>(s.current)];
  for (const auto* part : {&s.completed, &s.missing, &s.remaining})
    for (int i : *part) {
      if (i < 1 || i > s.n_steps) return false;
      ++seen[static_cast<std::size_t>(i)];
    }
  for (int i = 1; i <= s.n_steps; ++i)
    if (seen[static_cast<std::size_t>(i)] != 1) return false;
  for (int i : s.completed)
    if (i >= s.current) return false;
  for (int i : s.missing)
    if (i >= s.current) return false;
  for (int i : s.remaining)
    if (i <= s.current) return false;
  return true;
}

/// Moves `state` from its current step to `next` (> current): the old step
/// is completed, steps in between are missing.
inline void advance_to(ProgressState& state, int next) {
  if (next <= state.current || next > state.n_steps) return;
  if (state.current > 0) state.completed.insert(state.current);
  for (int i = state.current + 1; i < next; ++i) {
    state.missing.insert(i);
    state.remaining.erase(i);
  }
  state.remaining.erase(next);
  state.current = next;
}

/// Progress after the first `upto` rows of an offline assignment: visited
/// steps below the current one are completed, unvisited ones are missing.
inline ProgressState state_from_assignment(int n_steps, std::span<const int> assignment, std::size_t upto) {
  ProgressState s = ProgressState::fresh(n_steps);
  if (upto == 0) return s;
  std::set<int> visited(assignment.begin(), assignment.begin() + static_cast<std::ptrdiff_t>(upto));
  s.current = assignment[upto - 1];
  s.remaining.clear();
  for (int i = 1; i <= n_steps; ++i) {
    if (i < s.current) (visited.count(i) ? s.completed : s.missing).insert(i);
    if (i > s.current) s.remaining.insert(i);
  }
  return s;
}

inline ProgressState progress_snapshot(const ProgressState& state) { return state; }

inline nlohmann::json to_json(const ProgressState& s) {
  return {{"n_steps", s.n_steps},
          {"current", s.current},
          {"completed", std::vector<int>(s.completed.begin(), s.completed.end())},
          {"missing", std::vector<int>(s.missing.begin(), s.missing.end())},
          {"remaining", std::vector<int>(s.remaining.begin(), s.remaining.end())}};
}

inline ProgressState progress_from_json(const nlohmann::json& j) {
  ProgressState s;
  try {
    s.n_steps = j.at("n_steps").get<int>();
    s.current = j.at("current").get<int>();
    for (int i : j.at("completed").get<std::vector<int>>()) s.completed.insert(i);
    for (int i : j.at("missing").get<std::vector<int>>()) s.missing.insert(i);
    for (int i : j.at("remaining").get<std::vector<int>>()) s.remaining.insert(i);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad progress state: ") + e.what());
  }
  if (!partition_holds(s)) throw SchemaError("progress state parts do not partition the steps");
  return s;
}

// ---------------------------------------------------------------------------
// Online tracker

struct TrackerConfig {
  int max_jump = 3;             // K: look-ahead window beyond the current step
  double advance_margin = 0.02; // delta
  int confirm_count = 2;        // M: consecutive qualifying observations

  void check() const {
    if (max_jump < 1) throw SchemaError("max_jump must be >= 1");
    if (!(advance_margin >= 0.0)) throw SchemaError("advance_margin must be >= 0");
    if (confirm_count < 1) throw SchemaError("confirm_count must be >= 1");
  }
};

inline nlohmann::json to_json(const TrackerConfig& c) {
  return {{"max_jump", c.max_jump}, {"advance_margin", c.advance_margin}, {"confirm_count", c.confirm_count}};
}

inline TrackerConfig tracker_config_from_json(const nlohmann::json& j) {
  TrackerConfig c;
  c.max_jump = j.value("max_jump", c.max_jump);
  c.advance_margin = j.value("advance_margin", c.advance_margin);
  c.confirm_count = j.value("confirm_count", c.confirm_count);
  c.check();
  return c;
}

/// Progress plus the pending-advance bookkeeping needed for confirmation.
struct TrackerState {
  ProgressState progress;
  int pending_step = 0;
  int pending_count = 0;

  static TrackerState fresh(int n_steps) { return {ProgressState::fresh(n_steps), 0, 0}; }
  friend bool operator==(const TrackerState&, const TrackerState&) = default;
};

struct PredictionLogEntry {
  double t_s = 0.0;
  std::vector<double> fused;
  int predicted = 0;
  ProgressState state_after;

  friend bool operator==(const PredictionLogEntry&, const PredictionLogEntry&) = default;
};

inline nlohmann::json to_json(const PredictionLogEntry& e) {
  return {{"t_s", e.t_s}, {"fused", e.fused}, {"predicted", e.predicted}, {"state_after", to_json(e.state_after)}};
}

inline PredictionLogEntry log_entry_from_json(const nlohmann::json& j) {
  try {
    return {j.at("t_s").get<double>(), j.at("fused").get<std::vector<double>>(), j.at("predicted").get<int>(),
            progress_from_json(j.at("state_after"))};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad prediction log entry: ") + e.what());
  }
}

/// One online step.
///
/// The candidate is the best step in [max(current, 1), min(current + K, N)].
/// An observation qualifies when the candidate lies ahead of the current
/// step and beats the current step's score by at least delta (from the
/// not-started state any candidate qualifies). The tracker advances after M
/// consecutive qualifying observations of the same candidate.
inline std::pair<TrackerState, PredictionLogEntry> observe(const TrackerState& state, std::span<const double> fused,
                                                           const TrackerConfig& cfg, double t_s) {
  const int n = state.progress.n_steps;
  if (fused.size() != static_cast<std::size_t>(n))
    throw ShapeError("expected " + std::to_string(n) + " scores, got " + std::to_string(fused.size()));
  for (double v : fused)
    if (!std::isfinite(v)) throw ShapeError("non-finite fused score");

  TrackerState next = state;
  const int current = state.progress.current;
  const int lo = std::max(current, 1);
  const int hi = std::min(current + cfg.max_jump, n);
  int candidate = lo;
  for (int k = lo + 1; k <= hi; ++k)
    if (fused[static_cast<std::size_t>(k - 1)] > fused[static_cast<std::size_t>(candidate - 1)]) candidate = k;

  bool qualifies = candidate > current;
  if (qualifies && current > 0)
    qualifies = fused[static_cast<std::size_t>(candidate - 1)] >=
                fused[static_cast<std::size_t>(current - 1)] + cfg.advance_margin;

  if (!qualifies) {
    next.pending_step = 0;
    next.pending_count = 0;
  } else {
    if (candidate == next.pending_step) {
      ++next.pending_count;
    } else {
      next.pending_step = candidate;
      next.pending_count = 1;
    }
    if (next.pending_count >= cfg.confirm_count) {
      advance_to(next.progress, candidate);
      next.pending_step = 0;
      next.pending_count = 0;
    }
  }
  PredictionLogEntry entry{t_s, std::vector<double>(fused.begin(), fused.end()), candidate, next.progress};
  return {std::move(next), std::move(entry)};
}

/// Stateful wrapper over observe() for one session or one score stream.
class OnlineTracker {
 public:
  OnlineTracker(int n_steps, TrackerConfig cfg) : cfg_(cfg), state_(TrackerState::fresh(n_steps)) {
    cfg_.check();
    if (n_steps < 1) throw ShapeError("tracker needs at least one step");
  }

  PredictionLogEntry observe(std::span<const double> fused, double t_s) {
    auto [next, entry] = oscar::observe(state_, fused, cfg_, t_s);
    state_ = std::move(next);
    return entry;
  }

  const ProgressState& progress() const { return state_.progress; }
  const TrackerState& state() const { return state_; }
  const TrackerConfig& config() const { return cfg_; }

 private:
  TrackerConfig cfg_;
  TrackerState state_;
};

}  // namespace oscar
