#pragma once

// Benchmark harness: annotated datasets, the baseline and OSCAR conditions
// under the repeated-trial sampling protocol, accuracy and the summary table.
//
// Dataset layout (one directory):
//   <video_id>.json                   normalized annotation, see to_json below
//   frames/<video_id>/frames.jsonl    frame manifest for that video
//   _*.json                           metadata, ignored by load_dataset

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscar/alignment.hpp"
#include "oscar/causal_tracker.hpp"
#include "oscar/errors.hpp"
#include "oscar/frame_sampler.hpp"
#include "oscar/random.hpp"
#include "oscar/recipe.hpp"

namespace oscar {

struct Segment {
  int step_index = 0;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct DatasetAnnotation {
  std::string video_id;
  double duration_s = 0.0;
  Recipe recipe;
  std::vector<Segment> segments;
  std::optional<FrameManifest> frames;  // absent until frames are attached
};

/// Throws SchemaError naming `where` and the offending segment.
inline void validate(const DatasetAnnotation& a, const std::string& where) {
  auto fail = [&](const std::string& msg) { throw SchemaError(where + ": " + msg); };
  if (a.video_id.empty()) fail("empty video_id");
  if (!(a.duration_s > 0.0) || !std::isfinite(a.duration_s)) fail("duration_s must be positive");
  try {
    validate(a.recipe);
  } catch (const InvalidRecipe& e) {
    fail(std::string("recipe: ") + e.what());
  }
  if (a.segments.empty()) fail("no segments");
  std::set<int> seen;
  const int n = static_cast<int>(a.recipe.size());
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    const auto& s = a.segments[i];
    const std::string at = "segments[" + std::to_string(i) + "]: ";
    if (s.step_index < 1 || s.step_index > n)
      fail(at + "step_index " + std::to_string(s.step_index) + " outside 1.." + std::to_string(n));
    if (!seen.insert(s.step_index).second) fail(at + "step " + std::to_string(s.step_index) + " annotated twice");
    if (!(s.end_s > s.start_s)) fail(at + "end_s must exceed start_s");
    if (s.start_s < 0.0 || s.end_s > a.duration_s + 1e-9) fail(at + "outside [0, duration_s]");
    if (i > 0 && s.start_s < a.segments[i - 1].end_s) fail(at + "overlaps or precedes the previous segment");
  }
}

inline nlohmann::json to_json(const DatasetAnnotation& a) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : a.segments)
    segs.push_back({{"step_index", s.step_index}, {"start_s", s.start_s}, {"end_s", s.end_s}});
  return {{"video_id", a.video_id}, {"duration_s", a.duration_s}, {"recipe", to_json(a.recipe)}, {"segments", segs}};
}

inline DatasetAnnotation annotation_from_json(const nlohmann::json& j, const std::string& where) {
  DatasetAnnotation a;
  try {
    a.video_id = j.at("video_id").get<std::string>();
    a.duration_s = j.at("duration_s").get<double>();
    a.recipe = recipe_from_json(j.at("recipe"));
    for (const auto& s : j.at("segments"))
      a.segments.push_back({s.at("step_index").get<int>(), s.at("start_s").get<double>(), s.at("end_s").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where + ": " + e.what());
  } catch (const InvalidRecipe& e) {
    throw SchemaError(where + ": recipe: " + e.what());
  }
  validate(a, where);
  return a;
}

inline std::filesystem::path frames_dir(const std::filesystem::path& dataset_dir, const std::string& video_id) {
  return dataset_dir / "frames" / video_id;
}

/// Loads every DIR/*.json annotation (sorted by file name) and, when
/// present, its frame manifest.
inline std::vector<DatasetAnnotation> load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw SchemaError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".json" && !name.starts_with("_")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<DatasetAnnotation> out;
  std::set<std::string> ids;
  for (const auto& f : files) {
    std::ifstream in(f);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(f.string() + ": " + e.what());
    }
    auto a = annotation_from_json(j, f.string());
    if (!ids.insert(a.video_id).second) throw SchemaError(f.string() + ": duplicate video_id '" + a.video_id + "'");
    if (fs::exists(frames_dir(dir, a.video_id) / "frames.jsonl"))
      a.frames = load_manifest(frames_dir(dir, a.video_id), a.video_id, a.duration_s);
    out.push_back(std::move(a));
  }
  if (out.empty()) throw SchemaError(dir.string() + ": no annotation files");
  return out;
}

/// Writes annotations (and any attached manifests) in the dataset layout.
inline void save_dataset(const std::vector<DatasetAnnotation>& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& a : dataset) {
    std::ofstream(dir / (a.video_id + ".json")) << to_json(a).dump(2) << "\n";
    if (a.frames) save_manifest(*a.frames, frames_dir(dir, a.video_id));
  }
}

/// Converts the public YouCook2 annotation layout
///   {"database": {vid: {"duration": s, "annotations": [{"segment": [s, e], "sentence": str}]}}}
/// into normalized annotations; segment sentences become step texts. The
/// optional sidecar maps vid -> {"title", "ingredients"}.
inline std::vector<DatasetAnnotation> import_youcook2(const nlohmann::json& annotations,
                                                      const nlohmann::json* sidecar = nullptr) {
  if (!annotations.is_object() || !annotations.contains("database") || !annotations.at("database").is_object())
    throw SchemaError("youcook2: expected top-level object with \"database\"");
  std::vector<DatasetAnnotation> out;
  for (const auto& [vid, entry] : annotations.at("database").items()) {
    const std::string where = "youcook2: database." + vid;
    DatasetAnnotation a;
    a.video_id = vid;
    std::vector<std::string> texts;
    try {
      a.duration_s = entry.at("duration").get<double>();
      for (const auto& seg : entry.at("annotations")) {
        const auto& range = seg.at("segment");
        if (!range.is_array() || range.size() != 2) throw SchemaError(where + ": segment must be [start, end]");
        const int idx = static_cast<int>(texts.size()) + 1;
        a.segments.push_back({idx, range[0].get<double>(), range[1].get<double>()});
        texts.push_back(seg.at("sentence").get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    std::string title = vid;
    std::vector<std::string> ingredients;
    if (sidecar && sidecar->contains(vid)) {
      const auto& extra = sidecar->at(vid);
      try {
        title = extra.value("title", title);
        if (extra.contains("ingredients")) ingredients = extra.at("ingredients").get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& e) {
        throw SchemaError("youcook2 sidecar: " + vid + ": " + e.what());
      }
    }
    if (texts.empty()) throw SchemaError(where + ": no annotated segments");
    try {
      a.recipe = make_recipe(title, ingredients, texts);
    } catch (const InvalidRecipe& e) {
      throw SchemaError(where + ": " + e.what());
    }
    validate(a, where);
    out.push_back(std::move(a));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.video_id < y.video_id; });
  return out;
}

// ---------------------------------------------------------------------------
// Conditions

enum class Condition { kBaseline, kOscar };

inline std::string to_string(Condition c) { return c == Condition::kBaseline ? "baseline" : "oscar"; }

inline Condition condition_from_string(std::string_view s) {
  if (s == "baseline") return Condition::kBaseline;
  if (s == "oscar") return Condition::kOscar;
  throw SchemaError("unknown condition '" + std::string(s) + "'");
}

struct EvalConfig {
  int trials = 3;
  std::uint64_t seed = 42;
  int k = kDefaultSubIntervals;
  double fusion_weight = kDefaultFusionWeight;
  double radius_s = kDefaultAdjacentRadiusS;
  bool causal_on_baseline = false;
  int workers = 1;

  void check() const {
    if (trials < 1) throw SchemaError("trials must be >= 1");
    if (k < 1) throw SchemaError("k must be >= 1");
    if (fusion_weight < 0.0 || fusion_weight > 1.0) throw InvalidWeight("fusion weight must lie in [0, 1]");
    if (workers < 1) throw SchemaError("workers must be >= 1");
  }
};

inline nlohmann::json to_json(const EvalConfig& c) {
  return {{"trials", c.trials}, {"seed", c.seed}, {"k", c.k}, {"fusion_weight", c.fusion_weight},
          {"radius_s", c.radius_s}, {"causal_on_baseline", c.causal_on_baseline}};
}

struct VideoPredictions {
  std::string video_id;
  std::vector<int> truth;                                   // per segment
  std::vector<std::vector<std::optional<int>>> predicted;  // [trial][segment]
};

/// Seed for trial r of a video; independent of dataset order.
inline std::uint64_t trial_seed(std::uint64_t seed, const std::string& video_id, int trial) {
  return derive_seed(seed, "trial:" + video_id, static_cast<std::uint64_t>(trial));
}

inline VideoPredictions predict_video(const DatasetAnnotation& video, Condition condition,
                                      EmbeddingBackend& backend, const EvalConfig& cfg) {
  if (!video.frames) throw SchemaError(video.video_id + ": no frame manifest");
  const bool oscar = condition == Condition::kOscar;
  const PromptBank base_bank = embed_prompts(backend, prompts_for_channel(video.recipe, Channel::kBaseline),
                                             Channel::kBaseline);
  std::optional<PromptBank> status_bank;
  if (oscar)
    status_bank = embed_prompts(backend, prompts_for_channel(video.recipe, Channel::kStatus), Channel::kStatus);

  VideoPredictions out;
  out.video_id = video.video_id;
  for (const auto& s : video.segments) out.truth.push_back(s.step_index);
  const std::size_t n_seg = video.segments.size();
  const std::size_t n_steps = video.recipe.size();

  for (int r = 0; r < cfg.trials; ++r) {
    const auto seed = trial_seed(cfg.seed, video.video_id, r);
    std::vector<FrameRef> frames;
    for (std::size_t i = 0; i < n_seg; ++i) {
      const auto& s = video.segments[i];
      auto picked = sample_step_frames(*video.frames, {s.start_s, s.end_s}, cfg.k,
                                       derive_seed(seed, "segment", i), cfg.radius_s);
      frames.insert(frames.end(), picked.begin(), picked.end());
    }
    const auto vecs = embed_images(backend, frames);
    const ScoreMatrix base_all = score_embedded(vecs, base_bank);
    std::optional<ScoreMatrix> status_all;
    if (status_bank) status_all = score_embedded(vecs, *status_bank);

    // one averaged (and for OSCAR fused) score row per segment
    ScoreMatrix rows(n_seg, n_steps, oscar ? Channel::kFused : Channel::kBaseline);
    const auto k = static_cast<std::size_t>(cfg.k);
    for (std::size_t i = 0; i < n_seg; ++i) {
      auto slice = [&](const ScoreMatrix& m) {
        ScoreMatrix part(k, n_steps, m.channel());
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t n = 0; n < n_steps; ++n) part.at(t, n) = m.at(i * k + t, n);
        return average_scores(part);
      };
      std::vector<double> row = slice(base_all);
      if (oscar) row = fuse_scores(row, slice(*status_all), cfg.fusion_weight).scores;
      for (std::size_t n = 0; n < n_steps; ++n) rows.at(i, n) = row[n];
    }

    std::vector<std::optional<int>> pred(n_seg);
    if (oscar || cfg.causal_on_baseline) {
      const auto a = decode_monotone(rows);
      for (std::size_t i = 0; i < n_seg; ++i) pred[i] = a[i];
    } else {
      for (std::size_t i = 0; i < n_seg; ++i) pred[i] = predict_argmax(rows.row(i));
    }
    out.predicted.push_back(std::move(pred));
  }
  return out;
}

/// Predictions for every video, in dataset order. Videos run on up to
/// cfg.workers threads; results do not depend on the worker count.
inline std::vector<VideoPredictions> run_condition(const std::vector<DatasetAnnotation>& dataset,
                                                   Condition condition, EmbeddingBackend& backend,
                                                   const EvalConfig& cfg) {
  cfg.check();
  std::vector<VideoPredictions> out(dataset.size());
  if (cfg.workers == 1) {
    for (std::size_t v = 0; v < dataset.size(); ++v) out[v] = predict_video(dataset[v], condition, backend, cfg);
    return out;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t v = next++; v < dataset.size(); v = next++)
      out[v] = predict_video(dataset[v], condition, backend, cfg);
  };
  std::vector<std::future<void>> pool;
  for (int w = 0; w < cfg.workers; ++w) pool.push_back(std::async(std::launch::async, work));
  for (auto& f : pool) f.get();
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct VideoAccuracy {
  std::string video_id;
  std::vector<double> step_accuracy;  // per segment, mean over trials of the 0/1 match
  double accuracy = 0.0;              // mean over segments

  friend bool operator==(const VideoAccuracy&, const VideoAccuracy&) = default;
};

inline VideoAccuracy accuracy(const VideoPredictions& p) {
  if (p.truth.empty()) throw MissingPrediction(p.video_id + ": no annotated steps");
  if (p.predicted.empty()) throw MissingPrediction(p.video_id + ": no trials");
  VideoAccuracy out{p.video_id, {}, 0.0};
  for (std::size_t i = 0; i < p.truth.size(); ++i) {
    int hits = 0;
    for (std::size_t r = 0; r < p.predicted.size(); ++r) {
      if (p.predicted[r].size() != p.truth.size() || !p.predicted[r][i])
        throw MissingPrediction(p.video_id + ": trial " + std::to_string(r) + " lacks a prediction for segment " +
                                std::to_string(i));
      hits += *p.predicted[r][i] == p.truth[i] ? 1 : 0;
    }
    out.step_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(p.predicted.size()));
  }
  double sum = 0.0;
  for (double a : out.step_accuracy) sum += a;
  out.accuracy = sum / static_cast<double>(out.step_accuracy.size());
  return out;
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample (n - 1) standard deviation; 0 for a single value
  std::size_t n = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct ConditionReport {
  std::string backend;
  Condition condition = Condition::kBaseline;
  std::vector<VideoAccuracy> videos;  // sorted by video_id

  Summary summary() const {
    std::vector<double> xs;
    for (const auto& v : videos) xs.push_back(v.accuracy);
    return summarize(xs);
  }
};

inline ConditionReport make_condition_report(std::string backend, Condition condition,
                                             const std::vector<VideoPredictions>& predictions) {
  ConditionReport r{std::move(backend), condition, {}};
  for (const auto& p : predictions) r.videos.push_back(accuracy(p));
  std::sort(r.videos.begin(), r.videos.end(), [](const auto& a, const auto& b) { return a.video_id < b.video_id; });
  return r;
}

struct TableRow {
  std::string model;
  Summary baseline;
  Summary oscar;
  double improvement_pp = 0.0;  // (oscar mean - baseline mean) in percentage points
};

inline TableRow make_table_row(std::string model, Summary baseline, Summary oscar) {
  const double diff = (oscar.mean - baseline.mean) * 100.0;
  return {std::move(model), baseline, oscar, diff};
}

/// One row per backend, in order of first appearance. Each backend needs
/// exactly one baseline and one oscar report over the same videos.
inline std::vector<TableRow> aggregate_table(const std::vector<ConditionReport>& reports) {
  std::vector<std::string> order;
  std::map<std::string, std::map<Condition, const ConditionReport*>> by_backend;
  for (const auto& r : reports) {
    if (!by_backend.count(r.backend)) order.push_back(r.backend);
    auto& slot = by_backend[r.backend][r.condition];
    if (slot) throw PairingError("backend '" + r.backend + "' has two " + to_string(r.condition) + " reports");
    slot = &r;
  }
  std::vector<TableRow> rows;
  for (const auto& backend : order) {
    const auto& m = by_backend[backend];
    if (m.size() != 2) throw PairingError("backend '" + backend + "' lacks a paired baseline/oscar report");
    const auto* b = m.at(Condition::kBaseline);
    const auto* o = m.at(Condition::kOscar);
    std::vector<std::string> bv, ov;
    for (const auto& v : b->videos) bv.push_back(v.video_id);
    for (const auto& v : o->videos) ov.push_back(v.video_id);
    std::sort(bv.begin(), bv.end());
    std::sort(ov.begin(), ov.end());
    if (bv != ov) throw PairingError("backend '" + backend + "': baseline and oscar cover different videos");
    rows.push_back(make_table_row(backend, b->summary(), o->summary()));
  }
  return rows;
}

inline std::string format_percent(double fraction) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << fraction * 100.0 << "%";
  return os.str();
}

/// Aligned plain-text table in the column order
/// model | baseline acc | baseline SD | OSCAR acc | OSCAR SD | improvement.
inline std::string render_table(const std::vector<TableRow>& rows) {
  const std::vector<std::string> header = {"Model", "Baseline Accuracy", "Baseline SD",
                                           "OSCAR Accuracy", "OSCAR SD", "Improvement"};
  std::vector<std::vector<std::string>> cells = {header};
  for (const auto& r : rows) {
    std::ostringstream imp;
    imp << std::fixed << std::setprecision(1) << r.improvement_pp << "%";
    cells.push_back({r.model, format_percent(r.baseline.mean), format_percent(r.baseline.sd),
                     format_percent(r.oscar.mean), format_percent(r.oscar.sd), imp.str()});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << " | ";
      os << (c == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[c])) << row[c];
    }
    os << "\n";
  };
  line(cells[0]);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 3 * (width.size() - 1), '-') << "\n";
  for (std::size_t i = 1; i < cells.size(); ++i) line(cells[i]);
  return os.str();
}

inline nlohmann::json to_json(const Summary& s) { return {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}}; }

inline nlohmann::json to_json(const ConditionReport& r) {
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : r.videos)
    videos.push_back({{"video_id", v.video_id}, {"accuracy", v.accuracy}, {"step_accuracy", v.step_accuracy}});
  const auto s = r.summary();
  return {{"backend", r.backend}, {"condition", to_string(r.condition)}, {"mean", s.mean}, {"sd", s.sd},
          {"videos", videos}};
}

inline nlohmann::json to_json(const TableRow& r) {
  return {{"model", r.model}, {"baseline", to_json(r.baseline)}, {"oscar", to_json(r.oscar)},
          {"improvement_pp", r.improvement_pp}};
}

/// Full machine-readable report. Contains no timestamps or host details, so
/// identical inputs give identical bytes.
inline nlohmann::json make_report(const EvalConfig& cfg, const std::vector<ConditionReport>& reports,
                                  const std::vector<TableRow>& table) {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& r : reports) conds.push_back(to_json(r));
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table) rows.push_back(to_json(r));
  return {{"config", to_json(cfg)}, {"conditions", conds}, {"table", rows}};
}

}  // namespace oscar
