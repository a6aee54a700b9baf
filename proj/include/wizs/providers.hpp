#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace wizs {

class ResponseCache;
class ImageStore;

// Wire protocol (JSON over HTTP POST):
//   embed     {"texts": [...]} | {"images_b64": [...]}  ->  {"dim": d, "vectors": [[...], ...]}
//   textgen   {"prompt": "...", "n": k}                 ->  {"completions": [...]}
//   imagegen  {"prompt": "...", "n": k, "seed"?: s}     ->  {"images_b64": [...]}

/// One remote endpoint speaking the wire protocol.
class Provider {
 public:
  virtual ~Provider() = default;
  /// Stable identifier, part of every cache key. Never contains secrets.
  virtual std::string id() const = 0;
  /// Throws Error(kProviderUnavailable) when the endpoint cannot answer and
  /// Error(kProviderShapeError) when it answers with something unparseable.
  virtual nlohmann::json call(const nlohmann::json& request) = 0;
};

struct RetryPolicy {
  int max_retries = 3;  // attempts = 1 + max_retries
  std::chrono::milliseconds backoff_base{500};

  std::chrono::milliseconds delay(int retry) const { return backoff_base * (1LL << retry); }
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Provider over HTTP(S). The bearer key is read from `key_env` at
/// construction and only ever placed in the Authorization header.
class HttpProvider final : public Provider {
 public:
  HttpProvider(std::string url, std::string key_env, double timeout_seconds,
               RetryPolicy retry = {}, Sleeper sleeper = {});

  std::string id() const override { return "http:" + url_; }
  nlohmann::json call(const nlohmann::json& request) override;

  int retries() const noexcept { return retries_.load(); }

 private:
  std::string url_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
  std::string key_;
  double timeout_seconds_;
  RetryPolicy retry_;
  Sleeper sleeper_;
  std::atomic<int> retries_{0};
};

/// Provider setup, usually read from a JSON file. Holds no secrets: keys
/// come from WIZS_EMBED_KEY, WIZS_TEXTGEN_KEY and WIZS_IMAGEGEN_KEY.
struct ProviderConfig {
  std::string kind = "stub";  // stub | http
  std::string embedding_endpoint;
  std::string textgen_endpoint;
  std::string imagegen_endpoint;
  double timeout_seconds = 60;
  RetryPolicy retry;
  int max_concurrency = 4;
  int n_images = 20;
  std::string cache_dir;        // empty: in-memory cache
  std::string image_store_dir;  // empty: in-memory store
  int stub_dim = 64;
  std::uint64_t stub_seed = 0;
};

inline constexpr const char* kEmbedKeyEnv = "WIZS_EMBED_KEY";
inline constexpr const char* kTextGenKeyEnv = "WIZS_TEXTGEN_KEY";
inline constexpr const char* kImageGenKeyEnv = "WIZS_IMAGEGEN_KEY";

ProviderConfig parse_provider_config(std::string_view json_text,
                                     std::string_view source = "provider config");
ProviderConfig load_provider_config(const std::filesystem::path& path);
std::string serialize_provider_config(const ProviderConfig& config);

/// Everything the generation and embedding helpers need.
struct ProviderSet {
  std::shared_ptr<Provider> embed;
  std::shared_ptr<Provider> textgen;
  std::shared_ptr<Provider> imagegen;
  std::shared_ptr<ResponseCache> cache;
  std::shared_ptr<ImageStore> images;
  int max_concurrency = 4;
  int n_images = 20;
  std::size_t embed_batch = 32;
};

ProviderSet make_providers(const ProviderConfig& config, Sleeper sleeper = {});

}  // namespace wizs
