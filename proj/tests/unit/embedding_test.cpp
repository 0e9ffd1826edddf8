#include <atomic>
#include <filesystem>
#include <thread>

#include <gtest/gtest.h>

#include "oscar/remote_backend.hpp"
#include "oscar/synthetic.hpp"

namespace oscar {
namespace {

SyntheticBackend backend_for(const SyntheticWorld& w) { return SyntheticBackend(w); }

TEST(Cosine, IdentityOrthogonalAndHandValue) {
  const EmbeddingVector v{{0.6, 0.8}};
  EXPECT_DOUBLE_EQ(cosine_similarity(v, v), 1.0);
  EXPECT_EQ(cosine_similarity(EmbeddingVector{{1, 0, 0}}, EmbeddingVector{{0, 1, 0}}), 0.0);
  // 0.6 * 0.8 + 0.8 * 0.6 = 0.96
  EXPECT_NEAR(cosine_similarity(EmbeddingVector{{0.6, 0.8}}, EmbeddingVector{{0.8, 0.6}}), 0.96, 1e-15);
}

TEST(Cosine, ExactlySymmetric) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(17), b(17);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const auto ua = normalized(a), ub = normalized(b);
    EXPECT_EQ(cosine_similarity(ua, ub), cosine_similarity(ub, ua));
  }
}

TEST(Cosine, DimensionMismatch) {
  EXPECT_THROW(cosine_similarity(EmbeddingVector{{1, 0}}, EmbeddingVector{{1, 0, 0}}), DimensionMismatch);
}

TEST(SyntheticBackend, TextsAreDeterministicUnitVectors) {
  const auto world = synthetic_planted_world(8, 11, 0.5, 0.3);
  auto be = backend_for(world);
  const std::vector<std::string> texts = {world.recipe().steps[0].text, "unrelated words", "a photo of x"};
  const auto a = embed_texts(be, texts);
  ASSERT_EQ(a.size(), 3u);
  for (const auto& v : a) EXPECT_NEAR(norm(v.values), 1.0, kUnitNormTolerance);
  EXPECT_EQ(a, embed_texts(be, texts));
  EXPECT_EQ(embed_texts(be, {texts[1]})[0], a[1]);
  EXPECT_THROW(embed_texts(be, {}), BackendError);
}

TEST(SyntheticBackend, FramesMapToPlantedVectorPlusNoise) {
  const auto world = synthetic_planted_world(5, 2, 0.5, 0.0);
  auto be = backend_for(world);
  FrameRef f;
  f.path = world.frame_tag(3, "video;t=1.5");
  const auto v = embed_images(be, {f, f});
  EXPECT_EQ(v[0], v[1]);
  for (std::size_t k = 0; k < v[0].dim(); ++k) EXPECT_NEAR(v[0].values[k], world.universe().latent(world.concept_of(3)).values[k], 1e-12);

  const auto noisy = synthetic_planted_world(5, 2, 0.5, 0.8);
  auto nb = backend_for(noisy);
  const auto w = embed_images(nb, {f})[0];
  EXPECT_EQ(w, noisy.frame_embedding(3, "video;t=1.5"));
  EXPECT_LT(cosine_similarity(w, noisy.universe().latent(noisy.concept_of(3))), 1.0 - 1e-6);
  EXPECT_THROW(embed_images(nb, {}), BackendError);
}

TEST(SyntheticWorld, SameSeedSameWorld) {
  const auto a = synthetic_planted_world(8, 99, 0.5, 0.4);
  const auto b = synthetic_planted_world(8, 99, 0.5, 0.4);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.step_text_embedding(4), b.step_text_embedding(4));
  EXPECT_FALSE(a == synthetic_planted_world(8, 100, 0.5, 0.4));
}

TEST(SyntheticWorld, RecipeStatusesComeFromTheRuleEngine) {
  const auto w = synthetic_planted_world(8, 5, 0.5, 0.4);
  for (const auto& s : w.recipe().steps) {
    ASSERT_EQ(s.statuses.size(), 1u) << s.text;
    EXPECT_EQ(s.statuses[0].object, w.universe().food(w.concept_of(s.index)));
  }
}

TEST(SyntheticWorld, NoiselessWorldRanksTrueStepFirstInBothChannels) {
  const auto w = synthetic_planted_world(8, 21, 1.0, 0.0);
  auto be = backend_for(w);
  for (int i = 1; i <= 8; ++i) {
    FrameRef f;
    f.path = w.frame_tag(i, "k");
    const auto fv = embed_images(be, {f})[0];
    int best_text = 0, best_status = 0;
    double bt = -2, bs = -2;
    for (int j = 1; j <= 8; ++j) {
      const double ct = cosine_similarity(fv, embed_texts(be, {w.recipe().step(j).text})[0]);
      const double cs = cosine_similarity(fv, embed_texts(be, {render_status_prompt(w.recipe().step(j).statuses[0])})[0]);
      if (ct > bt) bt = ct, best_text = j;
      if (cs > bs) bs = cs, best_status = j;
    }
    EXPECT_EQ(best_text, i);
    EXPECT_EQ(best_status, i);
  }
}

TEST(SyntheticWorld, NoTextSignalGivesChanceBaselineAccuracy) {
  // alpha = 0: every step text embeds to the shared distractor, so all
  // steps tie and argmax is step 1 whatever the frame shows.
  double correct = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto w = synthetic_planted_world(8, seed, 0.0, 0.5);
    auto be = backend_for(w);
    std::vector<std::string> texts;
    for (const auto& s : w.recipe().steps) texts.push_back(s.text);
    const auto tv = embed_texts(be, texts);
    for (int i = 1; i <= 8; ++i) {
      FrameRef f;
      f.path = w.frame_tag(i, "k");
      const auto fv = embed_images(be, {f})[0];
      int best = 1;
      for (int j = 2; j <= 8; ++j)
        if (cosine_similarity(fv, tv[static_cast<std::size_t>(j - 1)]) > cosine_similarity(fv, tv[static_cast<std::size_t>(best - 1)])) best = j;
      correct += best == i;
      total += 1;
    }
  }
  EXPECT_NEAR(correct / total, 1.0 / 8.0, 0.02);
}

TEST(SyntheticWorld, StatusAgreementFallsAsNoiseGrows) {
  std::vector<double> means;
  for (double sigma : {0.0, 0.25, 0.5, 1.0, 2.0}) {
    SyntheticUniverseParams up;
    up.seed = 17;
    up.sigma = sigma;
    const SyntheticWorld w(SyntheticWorldParams{8, 17, up});
    double sum = 0;
    const int draws = 1000;
    for (int d = 0; d < draws; ++d) {
      const int step = 1 + d % 8;
      sum += cosine_similarity(w.frame_embedding(step, "draw" + std::to_string(d)), w.status_embedding(step, 0));
    }
    means.push_back(sum / draws);
  }
  for (std::size_t i = 1; i < means.size(); ++i) EXPECT_LT(means[i], means[i - 1]) << "sigma index " << i;
}

TEST(CachingBackend, HitsMissesAndConcurrentConsistency) {
  const auto w = synthetic_planted_world(6, 8, 0.5, 0.5);
  auto inner = std::make_shared<SyntheticBackend>(w);
  CachingBackend cache(inner);
  const std::vector<std::string> texts = {"a", "b", "a"};
  const auto first = embed_texts(cache, texts);
  EXPECT_EQ(cache.misses(), 3u);  // both "a" entries miss within one batch
  const auto second = embed_texts(cache, texts);
  EXPECT_EQ(first, second);
  EXPECT_EQ(cache.hits(), 3u);

  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        const std::string text = "t" + std::to_string((i * 7 + t) % 13);
        FrameRef f;
        f.path = w.frame_tag(1 + i % 6, std::to_string(i % 5));
        if (embed_texts(cache, {text})[0] != embed_texts(*inner, {text})[0]) ++mismatches;
        if (embed_images(cache, {f})[0] != embed_images(*inner, {f})[0]) ++mismatches;
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(CachingBackend, PersistsToDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "oscar_cache_test";
  std::filesystem::remove_all(dir);
  const auto w = synthetic_planted_world(4, 1, 0.5, 0.5);
  std::vector<EmbeddingVector> before;
  {
    CachingBackend cache(std::make_shared<SyntheticBackend>(w), dir);
    before = embed_texts(cache, {"x", "y"});
    cache.flush();
  }
  CachingBackend reloaded(std::make_shared<SyntheticBackend>(w), dir);
  EXPECT_EQ(embed_texts(reloaded, {"x", "y"}), before);
  EXPECT_EQ(reloaded.hits(), 2u);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Remote backend against an in-process embedding service.

class FakeEmbedService {
 public:
  FakeEmbedService() {
    server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      last_kind = body.at("kind").get<std::string>();
      last_items = body.at("items");
      if (mode == "error") {
        res.status = 503;
        return;
      }
      nlohmann::json vectors = nlohmann::json::array();
      std::size_t count = body.at("items").size();
      if (mode == "short") count -= 1;
      for (std::size_t i = 0; i < count; ++i) vectors.push_back({3.0 * (i + 1), 4.0, 0.0});
      if (mode == "baddim") vectors[0] = {1.0, 2.0};
      res.set_content(nlohmann::json{{"dim", 3}, {"vectors", vectors}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEmbedService() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::string mode = "ok";
  std::string last_kind;
  nlohmann::json last_items;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(RemoteBackend, DefaultTimeoutIsOneSecond) {
  RemoteBackend be(RemoteBackendConfig{"http://127.0.0.1:1"});
  EXPECT_EQ(be.config().timeout, std::chrono::milliseconds(1000));
  EXPECT_EQ(be.descriptor().kind, BackendKind::kRemote);
}

TEST(RemoteBackend, TextsAndImagesOverTheWire) {
  FakeEmbedService svc;
  RemoteBackend be(RemoteBackendConfig{svc.url()});
  const auto v = embed_texts(be, {"a photo of carrots being chopped", "b"});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(svc.last_kind, "text");
  EXPECT_NEAR(v[0].values[0], 0.6, 1e-12);  // (3, 4, 0) normalized
  EXPECT_EQ(be.descriptor().dim, 3);

  FrameRef f;
  f.payload = {0x89, 'P', 'N', 'G'};
  f.format = "png";
  embed_images(be, {f});
  EXPECT_EQ(svc.last_kind, "image");
  EXPECT_EQ(svc.last_items[0].at("format"), "png");
  EXPECT_EQ(base64_decode(svc.last_items[0].at("b64").get<std::string>()), f.payload);
}

TEST(RemoteBackend, ProtocolViolationsAreBackendErrors) {
  FakeEmbedService svc;
  RemoteBackend be(RemoteBackendConfig{svc.url()});
  svc.mode = "short";
  EXPECT_THROW(embed_texts(be, {"a", "b"}), BackendError);
  svc.mode = "error";
  EXPECT_THROW(embed_texts(be, {"a"}), BackendError);
  svc.mode = "baddim";
  EXPECT_THROW(embed_texts(be, {"a", "b"}), DimensionMismatch);
  RemoteBackend down(RemoteBackendConfig{"http://127.0.0.1:1", std::chrono::milliseconds(200)});
  EXPECT_THROW(embed_texts(down, {"a"}), BackendError);
}

TEST(Base64, RoundTripsAllTailLengths) {
  for (std::size_t n = 0; n < 10; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 200);
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  const std::vector<std::uint8_t> man = {'M', 'a', 'n'};
  EXPECT_EQ(base64_encode(man), "TWFu");
}

}  // namespace
}  // namespace oscar
