#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace wizs {

/// Content-addressed store of provider responses. Keys are SHA-256 digests
/// of (provider id, canonical request). Backed by a directory (atomic
/// temp-then-rename writes, safe for concurrent readers and writers) or by
/// memory when no directory is given.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir = {});

  static std::string key(std::string_view provider_id, std::string_view canonical_request);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, std::string_view value);

  std::size_t hits() const;
  std::size_t misses() const;

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> memory_;
  mutable std::size_t hits_ = 0;
  mutable std::size_t misses_ = 0;
};

/// Image bytes addressed by their SHA-256 hex digest.
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path dir = {});

  /// Stores the bytes (idempotent) and returns the ref.
  std::string put(std::string_view bytes);
  std::optional<std::string> get(std::string_view ref) const;

  static bool valid_ref(std::string_view ref);
  /// Sniffed from magic bytes; application/octet-stream when unknown.
  static std::string content_type(std::string_view bytes);

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::string, std::less<>> memory_;
};

}  // namespace wizs
