#pragma once

// Frame sources and the per-segment sampling protocol: split a segment into
// k equal sub-intervals, draw one timestamp per sub-interval, then move to
// the sharpest frame within a small radius of each timestamp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscar/errors.hpp"
#include "oscar/image.hpp"
#include "oscar/random.hpp"

namespace oscar {

inline constexpr int kDefaultSubIntervals = 5;
inline constexpr double kDefaultAdjacentRadiusS = 0.5;

struct FrameRef {
  std::string source_id;
  double t_s = 0.0;
  // Image location. Relative paths resolve against the manifest directory.
  // Paths of the form "synthetic:..." are opaque tags for the synthetic
  // embedding backend.
  std::string path;
  // Encoded image bytes when the frame arrived inline (uploads).
  std::vector<std::uint8_t> payload;
  std::string format;  // "png" | "jpeg" for inline payloads
  std::optional<double> blur_score;

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

struct ManifestEntry {
  double t_s = 0.0;
  std::string path;
  std::optional<double> blur_score;
};

struct FrameManifest {
  std::string source_id;
  double duration_s = 0.0;
  std::filesystem::path root;  // directory holding frames.jsonl
  std::vector<ManifestEntry> entries;

  /// Throws SchemaError unless entries are non-empty, strictly increasing
  /// and inside [0, duration_s].
  void check() const {
    if (entries.empty()) throw SchemaError("frame manifest '" + source_id + "' is empty");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const double t = entries[i].t_s;
      if (!std::isfinite(t) || t < 0.0 || t > duration_s)
        throw SchemaError("frame " + std::to_string(i) + " of '" + source_id + "' at t=" +
                          std::to_string(t) + " lies outside [0, duration]");
      if (i > 0 && !(t > entries[i - 1].t_s))
        throw SchemaError("frame manifest '" + source_id + "' is not strictly time-ordered at entry " +
                          std::to_string(i));
      if (entries[i].blur_score && *entries[i].blur_score < 0.0)
        throw SchemaError("negative blur_score at entry " + std::to_string(i));
    }
  }

  FrameRef ref(std::size_t i) const {
    const auto& e = entries.at(i);
    std::string p = e.path;
    if (!p.starts_with("synthetic:") && !root.empty() && std::filesystem::path(p).is_relative())
      p = (root / p).string();
    return FrameRef{source_id, e.t_s, std::move(p), {}, {}, e.blur_score};
  }
};

/// Loads DIR/frames.jsonl ({"t_s": float, "path": str[, "blur_score": float]}).
/// Without an explicit duration the last timestamp is used.
inline FrameManifest load_manifest(const std::filesystem::path& dir, std::string source_id = {},
                                   std::optional<double> duration_s = std::nullopt) {
  const auto index = dir / "frames.jsonl";
  std::ifstream in(index);
  if (!in) throw SchemaError(index.string() + ": cannot open frame index");
  FrameManifest m;
  m.source_id = source_id.empty() ? dir.filename().string() : std::move(source_id);
  m.root = dir;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("t_s") || !j.at("t_s").is_number() ||
        !j.contains("path") || !j.at("path").is_string())
      throw SchemaError(index.string() + ":" + std::to_string(line_no) +
                        ": expected {\"t_s\": number, \"path\": string}");
    ManifestEntry e{j.at("t_s").get<double>(), j.at("path").get<std::string>(), std::nullopt};
    if (j.contains("blur_score")) e.blur_score = j.at("blur_score").get<double>();
    m.entries.push_back(std::move(e));
  }
  m.duration_s = duration_s.value_or(m.entries.empty() ? 0.0 : m.entries.back().t_s);
  try {
    m.check();
  } catch (const SchemaError& e) {
    throw SchemaError(index.string() + ": " + e.what());
  }
  return m;
}

inline void save_manifest(const FrameManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "frames.jsonl");
  for (const auto& e : m.entries) {
    nlohmann::json j{{"t_s", e.t_s}, {"path", e.path}};
    if (e.blur_score) j["blur_score"] = *e.blur_score;
    out << j.dump() << "\n";
  }
}

/// Blur score of a frame: the stored value when present, otherwise computed
/// from the inline payload or the image file.
inline double frame_blur_score(const FrameRef& frame) {
  if (frame.blur_score) return *frame.blur_score;
  if (!frame.payload.empty()) return blur_score(std::span<const std::uint8_t>(frame.payload));
  if (frame.path.starts_with("synthetic:")) return 0.0;
  return blur_score(load_image(frame.path));
}

/// Fills in every missing blur score by decoding the images once.
inline void score_manifest(FrameManifest& m) {
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (!m.entries[i].blur_score) m.entries[i].blur_score = frame_blur_score(m.ref(i));
}

// ---------------------------------------------------------------------------

struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;  // exclusive

  double width() const { return end_s - start_s; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// k contiguous half-open intervals of equal width covering [start_s, end_s).
inline std::vector<Interval> split_uniform(double start_s, double end_s, int k) {
  if (!(end_s > start_s) || !std::isfinite(start_s) || !std::isfinite(end_s))
    throw InvalidInterval("need end > start, got [" + std::to_string(start_s) + ", " +
                          std::to_string(end_s) + ")");
  if (k < 1) throw InvalidInterval("need k >= 1, got " + std::to_string(k));
  std::vector<Interval> out;
  out.reserve(static_cast<std::size_t>(k));
  const double width = end_s - start_s;
  for (int i = 0; i < k; ++i) {
    const double a = start_s + width * i / k;
    const double b = i + 1 == k ? end_s : start_s + width * (i + 1) / k;
    out.push_back({a, b});
  }
  return out;
}

/// One uniform draw per interval; a pure function of (intervals, seed).
inline std::vector<double> sample_timestamps(const std::vector<Interval>& intervals,
                                             std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out;
  out.reserve(intervals.size());
  for (const auto& iv : intervals) {
    double t = iv.start_s + rng.uniform() * iv.width();
    if (!(t < iv.end_s)) t = iv.start_s;  // rounding on very narrow intervals
    out.push_back(t);
  }
  return out;
}

/// Sharpest manifest frame within radius_s of t_s. If the window is empty
/// the nearest frame is used. Ties: closer to t_s, then earlier.
inline FrameRef select_least_blurry_adjacent(const FrameManifest& manifest, double t_s,
                                             double radius_s = kDefaultAdjacentRadiusS) {
  if (manifest.entries.empty()) throw SchemaError("frame manifest '" + manifest.source_id + "' is empty");
  if (radius_s < 0.0) radius_s = 0.0;
  const auto& es = manifest.entries;
  const auto lo = std::lower_bound(es.begin(), es.end(), t_s - radius_s,
                                   [](const ManifestEntry& e, double t) { return e.t_s < t; });
  const auto hi = std::upper_bound(es.begin(), es.end(), t_s + radius_s,
                                   [](double t, const ManifestEntry& e) { return t < e.t_s; });
  std::size_t first = static_cast<std::size_t>(lo - es.begin());
  std::size_t last = static_cast<std::size_t>(hi - es.begin());
  if (first >= last) {
    // nearest frame; earlier one on an exact tie
    std::size_t idx = first < es.size() ? first : es.size() - 1;
    if (idx > 0 && std::abs(es[idx - 1].t_s - t_s) <= std::abs(es[idx].t_s - t_s)) --idx;
    first = idx;
    last = idx + 1;
  }
  std::size_t best = first;
  double best_score = -1.0;
  for (std::size_t i = first; i < last; ++i) {
    const double score = frame_blur_score(manifest.ref(i));
    const double dist = std::abs(es[i].t_s - t_s);
    const double best_dist = std::abs(es[best].t_s - t_s);
    if (score > best_score || (score == best_score && dist < best_dist)) {
      best = i;
      best_score = score;
    }
  }
  FrameRef out = manifest.ref(best);
  out.blur_score = best_score;
  return out;
}

/// split_uniform -> sample_timestamps -> select_least_blurry_adjacent.
/// Returns k frames ordered by time (repeats allowed on sparse manifests).
inline std::vector<FrameRef> sample_step_frames(const FrameManifest& manifest, Interval segment,
                                                int k, std::uint64_t seed,
                                                double radius_s = kDefaultAdjacentRadiusS) {
  if (segment.start_s < 0.0 || segment.end_s > manifest.duration_s + 1e-9)
    throw InvalidInterval("segment [" + std::to_string(segment.start_s) + ", " +
                          std::to_string(segment.end_s) + ") exceeds manifest duration " +
                          std::to_string(manifest.duration_s));
  const auto intervals = split_uniform(segment.start_s, segment.end_s, k);
  const auto times = sample_timestamps(intervals, seed);
  std::vector<FrameRef> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(select_least_blurry_adjacent(manifest, t, radius_s));
  std::stable_sort(out.begin(), out.end(),
                   [](const FrameRef& a, const FrameRef& b) { return a.t_s < b.t_s; });
  return out;
}

}  // namespace oscar
