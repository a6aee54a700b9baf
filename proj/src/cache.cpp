#include "wizs/cache.hpp"

#include <algorithm>
#include <cctype>

#include "wizs/blob.hpp"
#include "wizs/error.hpp"
#include "wizs/hash.hpp"

namespace wizs {

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key(std::string_view provider_id, std::string_view canonical_request) {
  std::string material(provider_id);
  material += '\n';
  material += canonical_request;
  return sha256_hex(material);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::optional<std::string> out;
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(key); it != memory_.end()) out = it->second;
  } else {
    const auto path = path_for(key);
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) {
      try {
        out = read_file(path);
      } catch (const Error&) {
        // Vanished between the check and the read; treat as a miss.
      }
    }
  }
  std::lock_guard lock(mu_);
  ++(out ? hits_ : misses_);
  return out;
}

void ResponseCache::put(const std::string& key, std::string_view value) {
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    memory_.insert_or_assign(key, std::string(value));
    return;
  }
  const auto path = path_for(key);
  std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, value);
}

std::size_t ResponseCache::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t ResponseCache::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

ImageStore::ImageStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

bool ImageStore::valid_ref(std::string_view ref) {
  return ref.size() == 64 && std::all_of(ref.begin(), ref.end(), [](char c) {
           return std::isdigit(static_cast<unsigned char>(c)) || (c >= 'a' && c <= 'f');
         });
}

std::string ImageStore::put(std::string_view bytes) {
  std::string ref = sha256_hex(bytes);
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    memory_.emplace(ref, std::string(bytes));
    return ref;
  }
  const auto path = dir_ / ref.substr(0, 2) / ref;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, bytes);
  }
  return ref;
}

std::optional<std::string> ImageStore::get(std::string_view ref) const {
  if (!valid_ref(ref)) return std::nullopt;
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(ref); it != memory_.end()) return it->second;
    return std::nullopt;
  }
  const auto path = dir_ / std::string(ref.substr(0, 2)) / std::string(ref);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    return read_file(path);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string ImageStore::content_type(std::string_view b) {
  auto starts = [&](std::string_view magic) { return b.substr(0, magic.size()) == magic; };
  if (starts("\x89PNG\r\n\x1a\n")) return "image/png";
  if (starts("\xFF\xD8\xFF")) return "image/jpeg";
  if (starts("GIF87a") || starts("GIF89a")) return "image/gif";
  if (starts("RIFF") && b.size() >= 12 && b.substr(8, 4) == "WEBP") return "image/webp";
  std::size_t i = 0;
  while (i < b.size() && std::isspace(static_cast<unsigned char>(b[i]))) ++i;
  const auto head = b.substr(i, 512);
  if (head.starts_with("<svg") ||
      (head.starts_with("<?xml") && head.find("<svg") != std::string_view::npos)) {
    return "image/svg+xml";
  }
  return "application/octet-stream";
}

}  // namespace wizs
