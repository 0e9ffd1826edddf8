#pragma once

// HTTP embedding service client.
//
//   POST {endpoint}/v1/embed
//     {"kind": "text"|"image", "items": [str | {"b64": str, "format": "png"|"jpeg"}]}
//   -> {"dim": int, "vectors": [[float]]}

#include <chrono>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscar/embedding.hpp"
#include "oscar/http_util.hpp"
#include "oscar/image.hpp"

namespace oscar {

inline constexpr std::chrono::milliseconds kDefaultEmbedTimeout{1000};

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += table[(n >> 6) & 63];
    out += table[n & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t n = bytes[i] << 16;
    if (rest == 2) n |= bytes[i + 1] << 8;
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += rest == 2 ? table[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+' || c == '-') return 62;
    if (c == '/' || c == '_') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value(c);
    if (v < 0) throw DecodeError("invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

struct RemoteBackendConfig {
  std::string endpoint;
  std::chrono::milliseconds timeout = kDefaultEmbedTimeout;
  std::string model_label;  // defaults to the endpoint
  std::size_t max_batch = 64;
};

class RemoteBackend final : public EmbeddingBackend {
 public:
  explicit RemoteBackend(RemoteBackendConfig cfg)
      : cfg_(std::move(cfg)), endpoint_(http::split_endpoint(cfg_.endpoint)) {
    if (cfg_.model_label.empty()) cfg_.model_label = cfg_.endpoint;
    if (cfg_.max_batch == 0) cfg_.max_batch = 1;
  }

  BackendDescriptor descriptor() const override {
    std::lock_guard lock(mu_);
    return {BackendKind::kRemote, cfg_.endpoint, dim_, cfg_.model_label};
  }

  const RemoteBackendConfig& config() const { return cfg_; }

 protected:
  std::vector<EmbeddingVector> do_embed_texts(const std::vector<std::string>& texts) override {
    std::vector<nlohmann::json> items(texts.begin(), texts.end());
    return embed_batched("text", items);
  }

  std::vector<EmbeddingVector> do_embed_images(const std::vector<FrameRef>& frames) override {
    std::vector<nlohmann::json> items;
    items.reserve(frames.size());
    for (const auto& f : frames) {
      if (!f.payload.empty()) {
        items.push_back({{"b64", base64_encode(f.payload)}, {"format", f.format.empty() ? "png" : f.format}});
        continue;
      }
      if (f.path.starts_with("synthetic:"))
        throw BackendError("remote backend cannot embed synthetic frame tag '" + f.path + "'");
      const auto ext = std::filesystem::path(f.path).extension().string();
      const std::string format = (ext == ".jpg" || ext == ".jpeg" || ext == ".JPG") ? "jpeg" : "png";
      items.push_back({{"b64", base64_encode(read_file_bytes(f.path))}, {"format", format}});
    }
    return embed_batched("image", items);
  }

 private:
  std::vector<EmbeddingVector> embed_batched(const char* kind, const std::vector<nlohmann::json>& items) {
    std::vector<EmbeddingVector> out;
    out.reserve(items.size());
    auto client = http::make_client(endpoint_, cfg_.timeout);
    for (std::size_t begin = 0; begin < items.size(); begin += cfg_.max_batch) {
      const std::size_t end = std::min(items.size(), begin + cfg_.max_batch);
      nlohmann::json body{{"kind", kind},
                          {"items", std::vector<nlohmann::json>(items.begin() + static_cast<std::ptrdiff_t>(begin),
                                                                items.begin() + static_cast<std::ptrdiff_t>(end))}};
      const auto raw = http::post_json(*client, endpoint_, "/v1/embed", body.dump());
      const auto j = nlohmann::json::parse(raw, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("vectors") || !j.at("vectors").is_array())
        throw BackendError("embedding service reply lacks a \"vectors\" array");
      const auto& vectors = j.at("vectors");
      if (vectors.size() != end - begin)
        throw BackendError("embedding service returned " + std::to_string(vectors.size()) +
                           " vectors for " + std::to_string(end - begin) + " items");
      const int reported = j.value("dim", 0);
      for (const auto& v : vectors) {
        if (!v.is_array()) throw BackendError("embedding vector is not an array");
        std::vector<double> values;
        values.reserve(v.size());
        for (const auto& x : v) {
          if (!x.is_number()) throw BackendError("embedding vector holds a non-number");
          values.push_back(x.get<double>());
        }
        if (reported > 0 && values.size() != static_cast<std::size_t>(reported))
          throw DimensionMismatch("reply says dim " + std::to_string(reported) + " but a vector has " +
                                  std::to_string(values.size()));
        lock_dim(static_cast<int>(values.size()));
        out.push_back(normalized(std::move(values)));
      }
    }
    return out;
  }

  void lock_dim(int dim) {
    std::lock_guard lock(mu_);
    if (dim_ == 0) dim_ = dim;
    if (dim_ != dim)
      throw DimensionMismatch("embedding dim changed from " + std::to_string(dim_) + " to " +
                              std::to_string(dim));
  }

  RemoteBackendConfig cfg_;
  http::Endpoint endpoint_;
  mutable std::mutex mu_;
  int dim_ = 0;
};

}  // namespace oscar
