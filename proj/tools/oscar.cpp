// oscar: command-line front end for recipe processing, frame sampling,
// alignment, decoding, evaluation and the live session service.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "oscar/causal_tracker.hpp"
#include "oscar/evaluation.hpp"
#include "oscar/recipe_processing.hpp"
#include "oscar/remote_backend.hpp"
#include "oscar/session_server.hpp"
#include "oscar/synthetic_bench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw oscar::SchemaError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) {
  const auto j = json::parse(read_text(p), nullptr, false);
  if (j.is_discarded()) throw oscar::SchemaError(p.string() + ": not valid JSON");
  return j;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw oscar::SchemaError("cannot write " + p.string());
  out << text;
}

// Normalized recipe JSON keeps indices and statuses; anything else goes
// through the raw parser.
oscar::Recipe read_recipe(const fs::path& p) {
  const auto text = read_text(p);
  const auto j = json::parse(text, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("steps")) return oscar::recipe_from_json(j);
  return oscar::parse_recipe(text);
}

struct BackendOptions {
  std::string backend = "synthetic";
  int timeout_ms = static_cast<int>(oscar::kDefaultEmbedTimeout.count());
  std::string model_label;
  std::string universe_file;  // synthetic only
  std::string cache_dir;

  void add_to(CLI::App* app) {
    app->add_option("--backend", backend, "\"synthetic\" or the URL of an embedding service");
    app->add_option("--timeout-ms", timeout_ms, "per-call embedding timeout")->check(CLI::PositiveNumber);
    app->add_option("--model-label", model_label, "model name shown in reports");
    app->add_option("--universe", universe_file,
                    "synthetic universe parameters (JSON, or a benchmark's _synthetic.json)");
    app->add_option("--cache-dir", cache_dir, "persist embeddings in this directory");
  }

  bool synthetic() const { return backend == "synthetic"; }

  std::string label() const {
    if (!model_label.empty()) return model_label;
    return backend;
  }

  std::shared_ptr<oscar::EmbeddingBackend> make(const std::optional<fs::path>& dataset_dir = {}) const {
    std::shared_ptr<oscar::EmbeddingBackend> b;
    if (synthetic()) {
      oscar::SyntheticUniverseParams params = oscar::SyntheticBenchParams{}.universe;
      if (!universe_file.empty()) {
        const auto j = read_json(universe_file);
        params = oscar::universe_params_from_json(j.contains("universe") ? j.at("universe") : j);
      } else if (dataset_dir) {
        if (auto p = oscar::read_synthetic_universe(*dataset_dir)) params = *p;
      }
      b = std::make_shared<oscar::SyntheticBackend>(std::make_shared<const oscar::SyntheticUniverse>(params),
                                                    label());
    } else {
      b = std::make_shared<oscar::RemoteBackend>(
          oscar::RemoteBackendConfig{backend, std::chrono::milliseconds(timeout_ms), model_label, 64});
    }
    if (!cache_dir.empty()) b = std::make_shared<oscar::CachingBackend>(b, cache_dir);
    return b;
  }
};

std::unique_ptr<oscar::LlmClient> make_llm(const std::string& endpoint) {
  if (endpoint.empty()) return nullptr;
  if (endpoint == "mock") return oscar::echo_current_step_llm();
  return std::make_unique<oscar::HttpLlmClient>(endpoint);
}

// ---------------------------------------------------------------------------
// Frame selections written by `sample` and read by `align`.

json frame_json(const oscar::FrameRef& f) {
  json j{{"t_s", f.t_s}, {"path", f.path}};
  if (f.blur_score) j["blur_score"] = *f.blur_score;
  return j;
}

oscar::FrameRef frame_from_json(const json& j, const std::string& source) {
  oscar::FrameRef f;
  f.source_id = source;
  f.t_s = j.at("t_s").get<double>();
  f.path = j.at("path").get<std::string>();
  if (j.contains("blur_score")) f.blur_score = j.at("blur_score").get<double>();
  return f;
}

void flush_cache(const std::shared_ptr<oscar::EmbeddingBackend>& b) {
  if (auto c = std::dynamic_pointer_cast<oscar::CachingBackend>(b)) c->flush();
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_normalize(const std::string& in, const std::string& out, const std::string& llm_endpoint) {
  auto llm = make_llm(llm_endpoint);
  const auto recipe = oscar::normalize_steps(read_recipe(in), llm.get());
  write_text(out, oscar::to_json(recipe).dump(2) + "\n");
}

void cmd_status_extract(const std::string& in, const std::string& out, const std::string& llm_endpoint) {
  auto llm = make_llm(llm_endpoint);
  oscar::StatusExtractor extractor = oscar::RuleEngine{};
  if (llm) extractor = llm.get();
  const auto recipe = oscar::extract_object_statuses(read_recipe(in), extractor);
  write_text(out, oscar::to_json(recipe).dump(2) + "\n");
}

struct SampleArgs {
  std::string manifest, annotations, out;
  int k = oscar::kDefaultSubIntervals;
  std::uint64_t seed = 42;
  double radius = oscar::kDefaultAdjacentRadiusS;
  int trials = 1;
};

void cmd_sample(const SampleArgs& a) {
  const auto ann = oscar::annotation_from_json(read_json(a.annotations), a.annotations);
  const auto manifest = oscar::load_manifest(a.manifest, ann.video_id, ann.duration_s);
  json trials = json::array();
  for (int r = 0; r < a.trials; ++r) {
    const auto seed = oscar::trial_seed(a.seed, ann.video_id, r);
    json segments = json::array();
    for (std::size_t i = 0; i < ann.segments.size(); ++i) {
      const auto& s = ann.segments[i];
      json frames = json::array();
      for (const auto& f : oscar::sample_step_frames(manifest, {s.start_s, s.end_s}, a.k,
                                                     oscar::derive_seed(seed, "segment", i), a.radius))
        frames.push_back(frame_json(f));
      segments.push_back({{"segment_index", i}, {"step_index", s.step_index}, {"start_s", s.start_s},
                          {"end_s", s.end_s}, {"frames", frames}});
    }
    trials.push_back({{"trial", r}, {"segments", segments}});
  }
  const json out{{"video_id", ann.video_id}, {"k", a.k}, {"seed", a.seed}, {"radius_s", a.radius}, {"trials", trials}};
  write_text(a.out, out.dump(2) + "\n");
}

struct AlignArgs {
  std::string frames, recipe, channel = "fused", out;
  double fusion_weight = oscar::kDefaultFusionWeight;
  BackendOptions backend;
};

void cmd_align(const AlignArgs& a) {
  const auto sel = read_json(a.frames);
  const auto recipe = read_recipe(a.recipe);
  const auto channel = oscar::channel_from_string(a.channel);
  if (a.fusion_weight < 0.0 || a.fusion_weight > 1.0) throw oscar::InvalidWeight("fusion weight must lie in [0, 1]");
  auto backend = a.backend.make();
  const std::string video_id = sel.at("video_id").get<std::string>();

  std::optional<oscar::PromptBank> base, status;
  if (channel != oscar::Channel::kStatus)
    base = oscar::embed_prompts(*backend, oscar::prompts_for_channel(recipe, oscar::Channel::kBaseline),
                                oscar::Channel::kBaseline);
  if (channel != oscar::Channel::kBaseline)
    status = oscar::embed_prompts(*backend, oscar::prompts_for_channel(recipe, oscar::Channel::kStatus),
                                  oscar::Channel::kStatus);

  std::string lines;
  for (const auto& trial : sel.at("trials")) {
    const int r = trial.at("trial").get<int>();
    for (const auto& seg : trial.at("segments")) {
      std::vector<oscar::FrameRef> frames;
      for (const auto& f : seg.at("frames")) frames.push_back(frame_from_json(f, video_id));
      const auto vecs = oscar::embed_images(*backend, frames);
      std::optional<oscar::ScoreMatrix> bm, sm;
      if (base) bm = oscar::score_embedded(vecs, *base);
      if (status) sm = oscar::score_embedded(vecs, *status);
      for (std::size_t t = 0; t < frames.size(); ++t) {
        oscar::ScoreLogRecord rec{video_id, r, seg.at("segment_index").get<int>(), frames[t].t_s, channel, {}};
        const auto row = [&](const oscar::ScoreMatrix& m) {
          const auto s = m.row(t);
          return std::vector<double>(s.begin(), s.end());
        };
        if (channel == oscar::Channel::kBaseline) rec.scores = row(*bm);
        else if (channel == oscar::Channel::kStatus) rec.scores = row(*sm);
        else rec.scores = oscar::fuse_scores(row(*bm), row(*sm), a.fusion_weight).scores;
        lines += oscar::to_json(rec).dump() + "\n";
      }
    }
  }
  flush_cache(backend);
  write_text(a.out, lines);
}

void cmd_decode(const std::string& scores, const std::string& mode, const std::string& config,
                const std::string& out) {
  if (mode != "offline" && mode != "online") throw oscar::SchemaError("mode must be offline or online");
  const auto cfg = config.empty() ? oscar::TrackerConfig{} : oscar::tracker_config_from_json(read_json(config));

  // records grouped per (video, trial), keeping file order
  std::vector<std::pair<std::string, int>> order;
  std::map<std::pair<std::string, int>, std::vector<oscar::ScoreLogRecord>> groups;
  std::ifstream in(scores);
  if (!in) throw oscar::SchemaError("cannot read " + scores);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw oscar::SchemaError(scores + ":" + std::to_string(line_no) + ": not valid JSON");
    auto rec = oscar::score_record_from_json(j);
    const auto key = std::make_pair(rec.video_id, rec.trial);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(std::move(rec));
  }

  std::string lines;
  for (const auto& key : order) {
    const auto& recs = groups.at(key);
    const std::size_t n = recs.front().scores.size();
    for (const auto& r : recs)
      if (r.scores.size() != n) throw oscar::ShapeMismatch(key.first + ": score rows differ in length");
    const auto emit = [&](oscar::PredictionLogEntry e) {
      auto j = oscar::to_json(e);
      j["video_id"] = key.first;
      j["trial"] = key.second;
      lines += j.dump() + "\n";
    };
    if (mode == "offline") {
      oscar::ScoreMatrix m(recs.size(), n, recs.front().channel);
      for (std::size_t t = 0; t < recs.size(); ++t)
        for (std::size_t c = 0; c < n; ++c) m.at(t, c) = recs[t].scores[c];
      const auto a = oscar::decode_monotone(m);
      for (std::size_t t = 0; t < recs.size(); ++t)
        emit({recs[t].t_s, recs[t].scores, a[t], oscar::state_from_assignment(static_cast<int>(n), a, t + 1)});
    } else {
      oscar::OnlineTracker tracker(static_cast<int>(n), cfg);
      for (const auto& r : recs) emit(tracker.observe(r.scores, r.t_s));
    }
  }
  write_text(out, lines);
}

struct EvaluateArgs {
  std::string dataset, condition = "both", report;
  oscar::EvalConfig cfg;
  BackendOptions backend;
};

void cmd_evaluate(const EvaluateArgs& a) {
  a.cfg.check();
  const auto dataset = oscar::load_dataset(a.dataset);
  if (dataset.empty()) throw oscar::SchemaError(a.dataset + ": no annotated videos");
  auto backend = a.backend.make(fs::path(a.dataset));
  std::vector<oscar::Condition> conds;
  if (a.condition == "both") conds = {oscar::Condition::kBaseline, oscar::Condition::kOscar};
  else conds = {oscar::condition_from_string(a.condition)};

  std::vector<oscar::ConditionReport> reports;
  for (auto c : conds)
    reports.push_back(oscar::make_condition_report(a.backend.label(), c, oscar::run_condition(dataset, c, *backend, a.cfg)));
  flush_cache(backend);

  std::vector<oscar::TableRow> table;
  if (conds.size() == 2) {
    table = oscar::aggregate_table(reports);
    std::cout << oscar::render_table(table);
  } else {
    const auto s = reports.front().summary();
    std::cout << a.backend.label() << " " << oscar::to_string(conds.front()) << ": " << oscar::format_percent(s.mean)
              << " (SD " << oscar::format_percent(s.sd) << ", n=" << s.n << ")\n";
  }
  if (!a.report.empty()) write_text(a.report, oscar::make_report(a.cfg, reports, table).dump(2) + "\n");
}

oscar::SessionServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

void cmd_serve(const std::string& host, int port, const BackendOptions& backend, const std::string& llm_endpoint,
               const std::string& log_dir) {
  std::shared_ptr<oscar::LlmClient> llm = make_llm(llm_endpoint.empty() ? "mock" : llm_endpoint);
  std::optional<fs::path> dir;
  if (!log_dir.empty()) dir = log_dir;
  oscar::SessionManager manager(backend.make(), llm, dir);
  if (dir) {
    const auto n = manager.replay();
    if (n > 0) std::cerr << "restored " << n << " session(s) from " << log_dir << "\n";
  }
  oscar::SessionServer server(manager);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    g_server = nullptr;
    throw oscar::Error("cannot listen on " + host + ":" + std::to_string(port));
  }
  g_server = nullptr;
}

void cmd_import_youcook2(const std::string& annotations, const std::string& sidecar, const std::string& out) {
  const auto ann = read_json(annotations);
  std::optional<json> side;
  if (!sidecar.empty()) side = read_json(sidecar);
  const auto dataset = oscar::import_youcook2(ann, side ? &*side : nullptr);
  oscar::save_dataset(dataset, out);
  std::cout << "imported " << dataset.size() << " video(s) into " << out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recipe progress tracking from video frames"};
  app.require_subcommand(1);

  std::string in, out, llm_endpoint;
  auto* normalize = app.add_subcommand("normalize", "parse a raw recipe into ordered atomic steps");
  normalize->add_option("--in", in, "raw recipe (text or JSON)")->required();
  normalize->add_option("--out", out, "normalized recipe JSON")->required();
  normalize->add_option("--llm-endpoint", llm_endpoint, "LLM service URL; rule-based splitting when absent");

  bool rule_based = false;
  auto* extract = app.add_subcommand("status-extract", "attach object statuses to every step");
  extract->add_option("--in", in, "recipe JSON")->required();
  extract->add_option("--out", out, "recipe JSON with statuses")->required();
  auto* extract_llm = extract->add_option("--llm-endpoint", llm_endpoint, "LLM service URL");
  extract->add_flag("--rule-based", rule_based, "use the deterministic extractor (default)")->excludes(extract_llm);

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "pick k sharp frames per annotated segment");
  sample->add_option("--manifest", sample_args.manifest, "frame directory holding frames.jsonl")->required();
  sample->add_option("--annotations", sample_args.annotations, "video annotation JSON")->required();
  sample->add_option("--k", sample_args.k, "sub-intervals per segment")->check(CLI::PositiveNumber);
  sample->add_option("--seed", sample_args.seed, "sampling seed");
  sample->add_option("--radius", sample_args.radius, "adjacent search radius in seconds")->check(CLI::NonNegativeNumber);
  sample->add_option("--trials", sample_args.trials, "independent samplings")->check(CLI::PositiveNumber);
  sample->add_option("--out", sample_args.out, "frame selection JSON")->required();

  AlignArgs align_args;
  auto* align = app.add_subcommand("align", "score sampled frames against recipe steps");
  align->add_option("--frames", align_args.frames, "frame selection from `oscar sample`")->required();
  align->add_option("--recipe", align_args.recipe, "recipe JSON")->required();
  align->add_option("--channel", align_args.channel, "baseline | status | fused")
      ->check(CLI::IsMember({"baseline", "status", "fused"}));
  align->add_option("--fusion-weight", align_args.fusion_weight, "weight of the status channel");
  align->add_option("--out", align_args.out, "score log (JSON lines)")->required();
  align_args.backend.add_to(align);

  std::string scores, mode = "offline", tracker_cfg;
  auto* decode = app.add_subcommand("decode", "turn score rows into monotone step predictions");
  decode->add_option("--scores", scores, "score log from `oscar align`")->required();
  decode->add_option("--mode", mode, "offline | online")->check(CLI::IsMember({"offline", "online"}));
  decode->add_option("--config", tracker_cfg, "tracker JSON {max_jump, advance_margin, confirm_count}");
  decode->add_option("--out", out, "prediction log (JSON lines)")->required();

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "baseline vs OSCAR accuracy over an annotated dataset");
  evaluate->add_option("--dataset", eval_args.dataset, "dataset directory")->required();
  evaluate->add_option("--condition", eval_args.condition, "baseline | oscar | both")
      ->check(CLI::IsMember({"baseline", "oscar", "both"}));
  evaluate->add_option("--trials", eval_args.cfg.trials, "samplings per video")->check(CLI::PositiveNumber);
  evaluate->add_option("--seed", eval_args.cfg.seed, "root seed");
  evaluate->add_option("--k", eval_args.cfg.k, "frames per segment")->check(CLI::PositiveNumber);
  evaluate->add_option("--fusion-weight", eval_args.cfg.fusion_weight, "weight of the status channel");
  evaluate->add_option("--radius", eval_args.cfg.radius_s, "adjacent search radius in seconds");
  evaluate->add_flag("--causal-on-baseline", eval_args.cfg.causal_on_baseline, "decode baseline monotonically too");
  evaluate->add_option("--workers", eval_args.cfg.workers, "videos evaluated in parallel")->check(CLI::PositiveNumber);
  evaluate->add_option("--report", eval_args.report, "write the JSON report here");
  eval_args.backend.add_to(evaluate);

  std::string host = "127.0.0.1", log_dir, llm_serve;
  int port = 8080;
  BackendOptions serve_backend;
  auto* serve = app.add_subcommand("serve", "run the live session service");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "TCP port")->check(CLI::Range(1, 65535));
  serve->add_option("--llm", llm_serve, "LLM service URL or \"mock\" (default)");
  serve->add_option("--log-dir", log_dir, "append-only session logs; replayed on start");
  serve_backend.add_to(serve);

  oscar::SyntheticBenchParams bench;
  std::string bench_out;
  auto* synth = app.add_subcommand("synth-bench", "write a synthetic benchmark dataset");
  synth->add_option("--out", bench_out, "dataset directory")->required();
  synth->add_option("--videos", bench.n_videos, "number of videos")->check(CLI::PositiveNumber);
  synth->add_option("--steps", bench.n_steps, "steps per recipe")->check(CLI::PositiveNumber);
  synth->add_option("--seed", bench.seed, "benchmark seed");
  synth->add_option("--universe-seed", bench.universe.seed, "seed of the concept vectors");
  synth->add_option("--dim", bench.universe.dim, "embedding dimension")->check(CLI::PositiveNumber);
  synth->add_option("--alpha", bench.universe.alpha, "step-text signal strength")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--sigma", bench.universe.sigma, "frame noise")->check(CLI::NonNegativeNumber);
  synth->add_option("--fps", bench.fps, "manifest frame rate")->check(CLI::PositiveNumber);

  std::string yc_ann, yc_sidecar, yc_out;
  auto* youcook = app.add_subcommand("import-youcook2", "convert YouCook2 annotations into a dataset directory");
  youcook->add_option("--annotations", yc_ann, "YouCook2 annotation JSON")->required();
  youcook->add_option("--sidecar", yc_sidecar, "titles and ingredients per video");
  youcook->add_option("--out", yc_out, "dataset directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*normalize) cmd_normalize(in, out, llm_endpoint);
    else if (*extract) cmd_status_extract(in, out, rule_based ? "" : llm_endpoint);
    else if (*sample) cmd_sample(sample_args);
    else if (*align) cmd_align(align_args);
    else if (*decode) cmd_decode(scores, mode, tracker_cfg, out);
    else if (*evaluate) cmd_evaluate(eval_args);
    else if (*serve) cmd_serve(host, port, serve_backend, llm_serve, log_dir);
    else if (*synth) {
      oscar::write_synthetic_benchmark(bench, bench_out);
      std::cout << "wrote " << bench.n_videos << " synthetic video(s) to " << bench_out << "\n";
    } else if (*youcook) cmd_import_youcook2(yc_ann, yc_sidecar, yc_out);
  } catch (const oscar::Error& e) {
    std::cerr << "oscar: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "oscar: malformed JSON input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "oscar: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
