#pragma once

// Embedding backends turn texts and frames into unit vectors. Similarity
// between a frame and a prompt is the cosine of their embeddings.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "oscar/errors.hpp"
#include "oscar/frame_sampler.hpp"
#include "oscar/random.hpp"

namespace oscar {

inline constexpr double kUnitNormTolerance = 1e-6;

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Scales to unit L2 norm. Throws BackendError on a zero or non-finite vector.
inline EmbeddingVector normalized(std::vector<double> values) {
  const double n = norm(values);
  if (!(n > 0.0) || !std::isfinite(n)) throw BackendError("cannot normalize a zero or non-finite vector");
  for (double& x : values) x /= n;
  return EmbeddingVector{std::move(values)};
}

/// Dot product of two unit vectors. Symmetric by construction: the sum is
/// accumulated in index order from the elementwise products, which commute.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    throw DimensionMismatch("cosine of vectors with dims " + std::to_string(a.dim()) + " and " +
                            std::to_string(b.dim()));
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a.values[i] * b.values[i];
  return std::clamp(dot, -1.0, 1.0);
}

enum class BackendKind { kRemote, kSynthetic };

struct BackendDescriptor {
  BackendKind kind = BackendKind::kSynthetic;
  std::string endpoint;  // remote only
  int dim = 0;
  std::string model_label;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual BackendDescriptor descriptor() const = 0;

 protected:
  friend std::vector<EmbeddingVector> embed_texts(EmbeddingBackend&, const std::vector<std::string>&);
  friend std::vector<EmbeddingVector> embed_images(EmbeddingBackend&, const std::vector<FrameRef>&);
  friend class CachingBackend;

  virtual std::vector<EmbeddingVector> do_embed_texts(const std::vector<std::string>& texts) = 0;
  virtual std::vector<EmbeddingVector> do_embed_images(const std::vector<FrameRef>& frames) = 0;
};

namespace detail {

inline void check_batch(const EmbeddingBackend& backend, std::size_t requested,
                        const std::vector<EmbeddingVector>& got) {
  if (got.size() != requested)
    throw BackendError("backend returned " + std::to_string(got.size()) + " vectors for " +
                       std::to_string(requested) + " items");
  const int dim = backend.descriptor().dim;
  for (const auto& v : got) {
    if (dim > 0 && v.dim() != static_cast<std::size_t>(dim))
      throw DimensionMismatch("expected dim " + std::to_string(dim) + ", got " +
                              std::to_string(v.dim()));
    if (std::abs(norm(v.values) - 1.0) > kUnitNormTolerance)
      throw BackendError("backend emitted a vector that is not unit-norm");
  }
}

}  // namespace detail

/// One unit vector per text, in input order.
inline std::vector<EmbeddingVector> embed_texts(EmbeddingBackend& backend,
                                                const std::vector<std::string>& texts) {
  if (texts.empty()) throw BackendError("embed_texts needs at least one text");
  auto out = backend.do_embed_texts(texts);
  detail::check_batch(backend, texts.size(), out);
  return out;
}

/// One unit vector per frame, in input order.
inline std::vector<EmbeddingVector> embed_images(EmbeddingBackend& backend,
                                                 const std::vector<FrameRef>& frames) {
  if (frames.empty()) throw BackendError("embed_images needs at least one frame");
  auto out = backend.do_embed_images(frames);
  detail::check_batch(backend, frames.size(), out);
  return out;
}

/// Content key used for caching: identical content maps to the same key.
inline std::uint64_t content_hash(const FrameRef& frame) {
  if (!frame.payload.empty())
    return fnv1a(std::string_view(reinterpret_cast<const char*>(frame.payload.data()),
                                  frame.payload.size()),
                 fnv1a("image-bytes:"));
  return fnv1a(frame.path, fnv1a("image-path:"));
}

inline std::uint64_t content_hash(const std::string& text) { return fnv1a(text, fnv1a("text:")); }

/// Memoizing wrapper keyed by (model label, content hash). Safe for
/// concurrent use; results do not depend on call interleaving because the
/// wrapped backend is deterministic per item. An optional directory
/// persists entries across runs as one JSON file per label.
class CachingBackend final : public EmbeddingBackend {
 public:
  explicit CachingBackend(std::shared_ptr<EmbeddingBackend> inner,
                          std::filesystem::path cache_dir = {})
      : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {
    load_disk();
  }

  BackendDescriptor descriptor() const override { return inner_->descriptor(); }

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

  /// Writes the cache to disk (no-op without a cache directory).
  void flush() const {
    if (cache_dir_.empty()) return;
    std::filesystem::create_directories(cache_dir_);
    nlohmann::json j = nlohmann::json::object();
    {
      std::shared_lock lock(mu_);
      for (const auto& [key, vec] : cache_) j[std::to_string(key)] = vec.values;
    }
    std::ofstream out(disk_file());
    out << j.dump();
  }

 protected:
  std::vector<EmbeddingVector> do_embed_texts(const std::vector<std::string>& texts) override {
    return lookup(texts, [this](const std::vector<std::string>& miss) {
      return embed_texts(*inner_, miss);
    });
  }
  std::vector<EmbeddingVector> do_embed_images(const std::vector<FrameRef>& frames) override {
    return lookup(frames, [this](const std::vector<FrameRef>& miss) {
      return embed_images(*inner_, miss);
    });
  }

 private:
  std::filesystem::path disk_file() const {
    std::string label = inner_->descriptor().model_label;
    for (char& c : label)
      if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    return cache_dir_ / ("embeddings_" + label + ".json");
  }

  void load_disk() {
    if (cache_dir_.empty() || !std::filesystem::exists(disk_file())) return;
    std::ifstream in(disk_file());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_object()) return;
    for (const auto& [key, values] : j.items())
      cache_.emplace(std::stoull(key), EmbeddingVector{values.get<std::vector<double>>()});
  }

  template <typename Item, typename Embed>
  std::vector<EmbeddingVector> lookup(const std::vector<Item>& items, Embed embed) {
    std::vector<EmbeddingVector> out(items.size());
    std::vector<Item> missing;
    std::vector<std::size_t> missing_pos;
    {
      std::shared_lock lock(mu_);
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (auto it = cache_.find(content_hash(items[i])); it != cache_.end()) {
          out[i] = it->second;
        } else {
          missing.push_back(items[i]);
          missing_pos.push_back(i);
        }
      }
    }
    hits_ += items.size() - missing.size();
    misses_ += missing.size();
    if (!missing.empty()) {
      auto fresh = embed(missing);
      std::unique_lock lock(mu_);
      for (std::size_t m = 0; m < missing.size(); ++m) {
        cache_.emplace(content_hash(missing[m]), fresh[m]);
        out[missing_pos[m]] = std::move(fresh[m]);
      }
    }
    return out;
  }

  std::shared_ptr<EmbeddingBackend> inner_;
  std::filesystem::path cache_dir_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::uint64_t, EmbeddingVector> cache_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace oscar
