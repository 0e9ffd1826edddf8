#pragma once

// Generated benchmark over one synthetic universe: every video is a world
// of n_steps concepts laid out as consecutive annotated segments, with short
// unannotated gaps between them. Frames are synthetic tags with random blur
// scores, so no image files are involved.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscar/evaluation.hpp"
#include "oscar/synthetic.hpp"

namespace oscar {

struct SyntheticBenchParams {
  int n_videos = 20;
  int n_steps = 8;
  std::uint64_t seed = 7;
  SyntheticUniverseParams universe{7, 32, 0.5, 9.0, 0.15};
  double fps = 2.0;
  double min_segment_s = 6.0;
  double max_segment_s = 20.0;
  double max_gap_s = 3.0;
};

inline nlohmann::json to_json(const SyntheticUniverseParams& p) {
  return {{"seed", p.seed}, {"dim", p.dim}, {"alpha", p.alpha}, {"sigma", p.sigma},
          {"status_rotation_rad", p.status_rotation_rad}};
}

inline SyntheticUniverseParams universe_params_from_json(const nlohmann::json& j) {
  SyntheticUniverseParams p;
  try {
    p.seed = j.at("seed").get<std::uint64_t>();
    p.dim = j.at("dim").get<int>();
    p.alpha = j.at("alpha").get<double>();
    p.sigma = j.at("sigma").get<double>();
    p.status_rotation_rad = j.value("status_rotation_rad", p.status_rotation_rad);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("synthetic universe: ") + e.what());
  }
  return p;
}

inline nlohmann::json to_json(const SyntheticBenchParams& p) {
  return {{"n_videos", p.n_videos}, {"n_steps", p.n_steps}, {"seed", p.seed},
          {"universe", to_json(p.universe)}, {"fps", p.fps}, {"min_segment_s", p.min_segment_s},
          {"max_segment_s", p.max_segment_s}, {"max_gap_s", p.max_gap_s}};
}

inline constexpr const char* kSyntheticMetaFile = "_synthetic.json";

inline std::string synthetic_video_id(int v) {
  std::string s = std::to_string(v);
  return "synth_" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

/// Builds the annotated videos (frames attached) of a synthetic benchmark.
inline std::vector<DatasetAnnotation> generate_synthetic_benchmark(const SyntheticBenchParams& p) {
  if (p.n_videos < 1 || p.n_steps < 1) throw SchemaError("synthetic benchmark needs videos and steps");
  if (!(p.fps > 0.0) || !(p.min_segment_s > 0.0) || p.max_segment_s < p.min_segment_s || p.max_gap_s < 0.0)
    throw SchemaError("synthetic benchmark timing parameters are inconsistent");
  auto universe = std::make_shared<const SyntheticUniverse>(p.universe);
  std::vector<DatasetAnnotation> out;
  for (int v = 0; v < p.n_videos; ++v) {
    const auto world_seed = derive_seed(p.seed, "world", static_cast<std::uint64_t>(v));
    const SyntheticWorld world(p.n_steps, world_seed, universe);
    Rng rng(derive_seed(p.seed, "layout", static_cast<std::uint64_t>(v)));

    DatasetAnnotation a;
    a.video_id = synthetic_video_id(v);
    a.recipe = world.recipe();
    // Gap frames get concept -1, which the backend embeds as unrelated noise.
    std::vector<std::pair<double, int>> spans;  // (end time, concept) in order
    double t = rng.uniform(0.0, p.max_gap_s);
    if (t > 0.0) spans.push_back({t, -1});
    for (int step = 1; step <= p.n_steps; ++step) {
      const double len = rng.uniform(p.min_segment_s, p.max_segment_s);
      a.segments.push_back({step, t, t + len});
      t += len;
      spans.push_back({t, world.concept_of(step)});
      const double gap = rng.uniform(0.0, p.max_gap_s);
      if (gap > 0.0) {
        t += gap;
        spans.push_back({t, -1});
      }
    }
    a.duration_s = t;

    FrameManifest m;
    m.source_id = a.video_id;
    m.duration_s = a.duration_s;
    std::size_t span = 0;
    const double dt = 1.0 / p.fps;
    for (int i = 0;; ++i) {
      const double ft = i * dt;
      if (ft > a.duration_s) break;
      while (span + 1 < spans.size() && ft >= spans[span].first) ++span;
      const int c = spans[span].second;
      const std::string key = a.video_id + "/" + std::to_string(i);
      m.entries.push_back({ft, c < 0 ? "synthetic:gap;" + key : SyntheticUniverse::frame_tag(c, key),
                           rng.uniform(10.0, 200.0)});
    }
    m.check();
    a.frames = std::move(m);
    validate(a, a.video_id);
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_synthetic_benchmark(const SyntheticBenchParams& p, const std::filesystem::path& dir) {
  save_dataset(generate_synthetic_benchmark(p), dir);
  std::ofstream(dir / kSyntheticMetaFile) << to_json(p).dump(2) << "\n";
}

/// Universe recorded next to a generated benchmark, if the directory holds one.
inline std::optional<SyntheticUniverseParams> read_synthetic_universe(const std::filesystem::path& dir) {
  const auto f = dir / kSyntheticMetaFile;
  if (!std::filesystem::exists(f)) return std::nullopt;
  std::ifstream in(f);
  try {
    return universe_params_from_json(nlohmann::json::parse(in).at("universe"));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(f.string() + ": " + e.what());
  }
}

}  // namespace oscar
