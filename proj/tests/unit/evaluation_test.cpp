#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "oscar/evaluation.hpp"
#include "oscar/synthetic_bench.hpp"

namespace oscar {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("oscar_eval_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

nlohmann::json read_json(const std::string& fixture) {
  std::ifstream in(std::string(OSCAR_FIXTURE_DIR) + "/" + fixture);
  return nlohmann::json::parse(in);
}

DatasetAnnotation two_step_video(const std::string& id) {
  DatasetAnnotation a;
  a.video_id = id;
  a.duration_s = 20.0;
  a.recipe = make_recipe("t", {}, {"Chop the onions.", "Fry the onions."});
  a.segments = {{1, 0.0, 8.0}, {2, 9.0, 18.0}};
  return a;
}

SyntheticBenchParams small_bench(double sigma) {
  SyntheticBenchParams p;
  p.n_videos = 3;
  p.n_steps = 5;
  p.universe.sigma = sigma;
  return p;
}

TEST(LoadDataset, TwoVideoFixture) {
  TempDir dir;
  save_dataset({two_step_video("a"), two_step_video("b")}, dir.path());
  std::ofstream(dir.path() / "_notes.json") << "{\"ignored\": true}";
  const auto ds = load_dataset(dir.path());
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].video_id, "a");
  EXPECT_EQ(ds[1].segments, two_step_video("b").segments);
  EXPECT_FALSE(ds[0].frames.has_value());
}

TEST(LoadDataset, InvariantViolationsNameTheFile) {
  TempDir dir;
  auto overlap = two_step_video("overlap");
  overlap.segments[1].start_s = 7.0;
  std::ofstream(dir.path() / "overlap.json") << to_json(overlap).dump();
  try {
    load_dataset(dir.path());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("overlap.json"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("segments[1]"), std::string::npos) << e.what();
  }
  fs::remove(dir.path() / "overlap.json");

  auto range = two_step_video("range");
  range.segments[1].step_index = 3;
  std::ofstream(dir.path() / "range.json") << to_json(range).dump();
  EXPECT_THROW(load_dataset(dir.path()), SchemaError);
  std::ofstream(dir.path() / "range.json") << "{not json";
  EXPECT_THROW(load_dataset(dir.path()), SchemaError);
}

TEST(ImportYouCook2, SegmentsBecomeSteps) {
  const auto sidecar = read_json("youcook2_mini_sidecar.json");
  const auto ds = import_youcook2(read_json("youcook2_mini.json"), &sidecar);
  ASSERT_EQ(ds.size(), 2u);
  const auto& v = ds[1];  // sorted by id: "aB3..." < "xHr..."
  EXPECT_EQ(v.video_id, "xHr8X2Wpmno");
  ASSERT_EQ(v.recipe.size(), 7u);
  ASSERT_EQ(v.segments.size(), 7u);
  EXPECT_EQ(v.recipe.steps[2].text, "fry the onions until soft");
  EXPECT_EQ(v.segments[2], (Segment{3, 50.0, 71.0}));
  EXPECT_EQ(v.recipe.title, "Spaghetti bolognese");
  EXPECT_EQ(v.recipe.ingredients.size(), 5u);
  EXPECT_DOUBLE_EQ(v.duration_s, 180.5);
}

TEST(ImportYouCook2, SidecarIsOptional) {
  const auto ds = import_youcook2(read_json("youcook2_mini.json"));
  for (const auto& v : ds) EXPECT_TRUE(v.recipe.ingredients.empty());
  EXPECT_EQ(ds[0].recipe.size(), 2u);
}

TEST(ImportYouCook2, MalformedTimes) {
  auto j = read_json("youcook2_mini.json");
  j["database"]["aB3dE5fG7hI"]["annotations"][1]["segment"] = {40, 40};
  EXPECT_THROW(import_youcook2(j), SchemaError);
  j["database"]["aB3dE5fG7hI"]["annotations"][1]["segment"] = {22};
  EXPECT_THROW(import_youcook2(j), SchemaError);
  EXPECT_THROW(import_youcook2(nlohmann::json{{"videos", 1}}), SchemaError);
}

TEST(Accuracy, Examples) {
  VideoPredictions all{"v", {1, 2}, {{1, 2}, {1, 2}, {1, 2}}};
  EXPECT_EQ(accuracy(all).accuracy, 1.0);
  VideoPredictions two_of_three{"v", {1}, {{1}, {2}, {1}}};
  EXPECT_EQ(accuracy(two_of_three).step_accuracy, (std::vector<double>{2.0 / 3.0}));
  VideoPredictions half{"v", {1, 2}, {{1, 1}}};
  EXPECT_EQ(accuracy(half).accuracy, 0.5);
}

TEST(Accuracy, MissingPredictions) {
  EXPECT_THROW(accuracy(VideoPredictions{"v", {1, 2}, {}}), MissingPrediction);
  EXPECT_THROW(accuracy(VideoPredictions{"v", {1, 2}, {{1, 2}, {1}}}), MissingPrediction);
  EXPECT_THROW(accuracy(VideoPredictions{"v", {1, 2}, {{1, std::nullopt}}}), MissingPrediction);
}

TEST(Accuracy, HandBuiltTwoVideoThreeTrialFixture) {
  // video a: truth 1,2,3; step hits 2/3, 2/3, 3/3 -> (2/3 + 2/3 + 1) / 3 = 7/9
  // video b: truth 1,2;   step hits 2/3, 1/3      -> 1/2
  // mean = (7/9 + 1/2) / 2 = 23/36; sample SD = (7/9 - 1/2) / sqrt(2) = 5 / (18 sqrt 2)
  const std::vector<VideoPredictions> preds = {
      {"a", {1, 2, 3}, {{1, 2, 3}, {1, 3, 3}, {2, 2, 3}}},
      {"b", {1, 2}, {{1, 1}, {1, 1}, {2, 2}}},
  };
  const auto report = make_condition_report("m", Condition::kBaseline, preds);
  EXPECT_EQ(report.videos[0].step_accuracy, (std::vector<double>{2.0 / 3.0, 2.0 / 3.0, 1.0}));
  EXPECT_EQ(report.videos[1].step_accuracy, (std::vector<double>{2.0 / 3.0, 1.0 / 3.0}));
  EXPECT_DOUBLE_EQ(report.videos[0].accuracy, 7.0 / 9.0);
  EXPECT_DOUBLE_EQ(report.videos[1].accuracy, 0.5);
  EXPECT_DOUBLE_EQ(report.summary().mean, 23.0 / 36.0);
  EXPECT_DOUBLE_EQ(report.summary().sd, 5.0 / (18.0 * std::sqrt(2.0)));
}

TEST(Summary, SampleStandardDeviation) {
  const auto s = summarize({0.5, 0.7});
  EXPECT_NEAR(s.mean, 0.6, 1e-15);
  EXPECT_NEAR(s.sd, 0.1414213562373095, 1e-12);
  EXPECT_EQ(summarize({0.4}).sd, 0.0);
}

TEST(AggregateTable, PublishedCellsGiveTheirDifferences) {
  const auto clip = make_table_row("CLIP", {0.417, 0.175, 173}, {0.680, 0.190, 173});
  const auto siglip = make_table_row("SigLIP", {0.622, 0.180, 173}, {0.828, 0.147, 173});
  EXPECT_NEAR(clip.improvement_pp, 26.3, 1e-9);
  EXPECT_NEAR(siglip.improvement_pp, 20.6, 1e-9);
  const std::string text = render_table({clip, siglip});
  EXPECT_NE(text.find("CLIP   |             41.7% |       17.5% |          68.0% |    19.0% |       26.3%"),
            std::string::npos)
      << text;
  EXPECT_NE(text.find("20.6%"), std::string::npos);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "Model  | Baseline Accuracy | Baseline SD | OSCAR Accuracy | OSCAR SD | Improvement");
}

TEST(AggregateTable, ImprovementIsMeanDifferenceAndPairingIsChecked) {
  ConditionReport b{"m", Condition::kBaseline, {{"a", {}, 0.25}, {"b", {}, 0.5}}};
  ConditionReport o{"m", Condition::kOscar, {{"a", {}, 0.75}, {"b", {}, 0.5}}};
  const auto rows = aggregate_table({b, o});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].improvement_pp, (rows[0].oscar.mean - rows[0].baseline.mean) * 100.0, 1e-9);
  EXPECT_NEAR(rows[0].improvement_pp, 25.0, 1e-9);

  ConditionReport other = o;
  other.videos[1].video_id = "c";
  EXPECT_THROW(aggregate_table({b, other}), PairingError);
  EXPECT_THROW(aggregate_table({b}), PairingError);
  EXPECT_THROW(aggregate_table({b, b, o}), PairingError);
}

TEST(RunCondition, NoiselessWorldIsPerfect) {
  const auto p = small_bench(0.0);
  const auto ds = generate_synthetic_benchmark(p);
  SyntheticBackend backend(std::make_shared<const SyntheticUniverse>(p.universe));
  for (Condition c : {Condition::kBaseline, Condition::kOscar}) {
    const auto r = make_condition_report("s", c, run_condition(ds, c, backend, EvalConfig{}));
    for (const auto& v : r.videos) EXPECT_EQ(v.accuracy, 1.0) << to_string(c) << " " << v.video_id;
  }
}

TEST(RunCondition, FixedSeedIsDeterministicAcrossWorkerCounts) {
  const auto p = small_bench(9.0);
  const auto ds = generate_synthetic_benchmark(p);
  SyntheticBackend backend(std::make_shared<const SyntheticUniverse>(p.universe));
  EvalConfig cfg;
  const auto a = run_condition(ds, Condition::kOscar, backend, cfg);
  cfg.workers = 3;
  const auto b = run_condition(ds, Condition::kOscar, backend, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].predicted, b[i].predicted);
  cfg.seed = 43;
  const auto c = run_condition(ds, Condition::kOscar, backend, cfg);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].predicted != c[i].predicted;
  EXPECT_TRUE(differs);
}

TEST(RunCondition, BaselineNeverEmbedsStatusPrompts) {
  const auto p = small_bench(1.0);
  const auto ds = generate_synthetic_benchmark(p);
  SyntheticBackend backend(std::make_shared<const SyntheticUniverse>(p.universe));
  run_condition(ds, Condition::kBaseline, backend, EvalConfig{});
  ASSERT_FALSE(backend.seen_texts().empty());
  for (const auto& t : backend.seen_texts()) EXPECT_FALSE(t.starts_with("a photo of")) << t;
  run_condition(ds, Condition::kOscar, backend, EvalConfig{});
  bool saw_status = false;
  for (const auto& t : backend.seen_texts()) saw_status |= t.starts_with("a photo of");
  EXPECT_TRUE(saw_status);
}

TEST(RunCondition, ThreeTrialStepAccuraciesAreThirds) {
  const auto p = small_bench(9.0);
  const auto ds = generate_synthetic_benchmark(p);
  SyntheticBackend backend(std::make_shared<const SyntheticUniverse>(p.universe));
  for (Condition c : {Condition::kBaseline, Condition::kOscar}) {
    for (const auto& v : make_condition_report("s", c, run_condition(ds, c, backend, EvalConfig{})).videos) {
      EXPECT_GE(v.accuracy, 0.0);
      EXPECT_LE(v.accuracy, 1.0);
      for (double s : v.step_accuracy) {
        const double thirds = s * 3.0;
        EXPECT_NEAR(thirds, std::round(thirds), 1e-12);
      }
    }
  }
}

TEST(RunCondition, DatasetRoundTripsThroughDisk) {
  TempDir dir;
  const auto p = small_bench(9.0);
  write_synthetic_benchmark(p, dir.path());
  const auto loaded = load_dataset(dir.path());
  const auto universe = read_synthetic_universe(dir.path());
  ASSERT_TRUE(universe.has_value());
  EXPECT_EQ(*universe, p.universe);
  SyntheticBackend backend(std::make_shared<const SyntheticUniverse>(*universe));
  const auto from_disk = run_condition(loaded, Condition::kOscar, backend, EvalConfig{});
  const auto in_memory = run_condition(generate_synthetic_benchmark(p), Condition::kOscar, backend, EvalConfig{});
  for (std::size_t i = 0; i < from_disk.size(); ++i) EXPECT_EQ(from_disk[i].predicted, in_memory[i].predicted);
}

// Monotone decoding over a video's segments should not lose accuracy to
// per-segment argmax on noisy worlds (summed over 100 seeded worlds).
TEST(RunCondition, DecodingBeatsArgmaxOverManyWorlds) {
  double argmax_total = 0.0, decoded_total = 0.0;
  int worse = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SyntheticBenchParams p;
    p.n_videos = 1;
    p.seed = seed;
    p.universe.seed = seed;
    p.universe.sigma = 9.0;
    const auto ds = generate_synthetic_benchmark(p);
    SyntheticBackend backend(std::make_shared<const SyntheticUniverse>(p.universe));
    EvalConfig cfg;
    const double plain = accuracy(run_condition(ds, Condition::kBaseline, backend, cfg)[0]).accuracy;
    cfg.causal_on_baseline = true;
    const double decoded = accuracy(run_condition(ds, Condition::kBaseline, backend, cfg)[0]).accuracy;
    argmax_total += plain;
    decoded_total += decoded;
    worse += decoded < plain ? 1 : 0;
  }
  EXPECT_GE(decoded_total, argmax_total);
  EXPECT_LT(worse, 20) << "decoding lost accuracy on " << worse << " of 100 worlds";
}

TEST(Report, JsonIsStable) {
  const auto p = small_bench(9.0);
  const auto ds = generate_synthetic_benchmark(p);
  auto once = [&] {
    SyntheticBackend backend(std::make_shared<const SyntheticUniverse>(p.universe));
    std::vector<ConditionReport> reports;
    for (Condition c : {Condition::kBaseline, Condition::kOscar})
      reports.push_back(make_condition_report("synthetic", c, run_condition(ds, c, backend, EvalConfig{})));
    return make_report(EvalConfig{}, reports, aggregate_table(reports)).dump(2);
  };
  const auto a = once();
  EXPECT_EQ(a, once());
  EXPECT_EQ(a.find("time"), std::string::npos);
}

}  // namespace
}  // namespace oscar
