#include "wizs/providers.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <regex>
#include <thread>

#include "wizs/blob.hpp"
#include "wizs/cache.hpp"
#include "wizs/error.hpp"
#include "wizs/log.hpp"
#include "wizs/stub_providers.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a macro named _res.
#include <httplib.h>

namespace wizs {

namespace {

struct ParsedUrl {
  std::string origin;
  std::string path;
};

std::optional<ParsedUrl> parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?)://([A-Za-z0-9._~\-]+|\[[0-9A-Fa-f:.]+\])(:[0-9]{1,5})?(/[^#\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) return std::nullopt;
  ParsedUrl out;
  out.origin = m[1].str() + "://" + m[2].str() + m[3].str();
  out.path = m[4].matched ? m[4].str() : "/";
  return out;
}

std::string snippet(const std::string& body) {
  std::string s = body.substr(0, 200);
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

HttpProvider::HttpProvider(std::string url, std::string key_env, double timeout_seconds,
                           RetryPolicy retry, Sleeper sleeper)
    : url_(std::move(url)), timeout_seconds_(timeout_seconds), retry_(retry),
      sleeper_(std::move(sleeper)) {
  const auto parsed = parse_url(url_);
  if (!parsed) throw Error(ErrorCode::kInvalidArgument, "malformed endpoint URL '" + url_ + "'");
  origin_ = parsed->origin;
  path_ = parsed->path;
  if (const char* k = std::getenv(key_env.c_str())) key_ = k;
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

nlohmann::json HttpProvider::call(const nlohmann::json& request) {
  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(timeout_seconds_);
  const auto usecs = static_cast<time_t>((timeout_seconds_ - double(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
  const std::string body = request.dump();

  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(path_, headers, body, "application/json");
    std::string failure;
    bool retriable = true;
    if (!res) {
      failure = "connection failed: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kProviderShapeError,
                    fmt::format("{}: response is not JSON ({})", id(), e.what()));
      }
    } else {
      failure = fmt::format("HTTP {}: {}", res->status, snippet(res->body));
      retriable = res->status >= 500 || res->status == 429 || res->status == 408;
    }
    if (!retriable || attempt >= retry_.max_retries) {
      throw Error(ErrorCode::kProviderUnavailable,
                  fmt::format("{} failed after {} attempt(s): {}", id(), attempt + 1, failure));
    }
    const auto delay = retry_.delay(attempt);
    logger()->warn("provider={} attempt={} error=\"{}\" retry_in_ms={}", id(), attempt + 1,
                   failure, delay.count());
    ++retries_;
    sleeper_(delay);
  }
}

namespace {

using json = nlohmann::json;

template <typename T>
T field(const json& obj, const char* name, T fallback, const std::string& where) {
  if (!obj.contains(name)) return fallback;
  try {
    return obj.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("{}: field '{}' has the wrong type", where, name));
  }
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) != known.end()) continue;
    const auto lower = it.key();
    if (lower.find("key") != std::string::npos || lower.find("secret") != std::string::npos ||
        lower.find("token") != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("{}: field '{}' is not allowed; API keys are read from {}, {} and {}",
                              where, it.key(), kEmbedKeyEnv, kTextGenKeyEnv, kImageGenKeyEnv));
    }
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: unknown field '{}'", where, it.key()));
  }
}

}  // namespace

ProviderConfig parse_provider_config(std::string_view json_text, std::string_view source) {
  const std::string where(source);
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: not valid JSON: {}", where, e.what()));
  }
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, where + ": must be an object");
  reject_unknown(j,
                 {"kind", "embedding_endpoint", "textgen_endpoint", "imagegen_endpoint",
                  "timeout_seconds", "retry", "max_concurrency", "n_images", "cache_dir",
                  "image_store_dir", "stub"},
                 where);
  ProviderConfig c;
  c.kind = field<std::string>(j, "kind", c.kind, where);
  c.embedding_endpoint = field<std::string>(j, "embedding_endpoint", "", where);
  c.textgen_endpoint = field<std::string>(j, "textgen_endpoint", "", where);
  c.imagegen_endpoint = field<std::string>(j, "imagegen_endpoint", "", where);
  c.timeout_seconds = field<double>(j, "timeout_seconds", c.timeout_seconds, where);
  c.max_concurrency = field<int>(j, "max_concurrency", c.max_concurrency, where);
  c.n_images = field<int>(j, "n_images", c.n_images, where);
  c.cache_dir = field<std::string>(j, "cache_dir", "", where);
  c.image_store_dir = field<std::string>(j, "image_store_dir", "", where);
  if (j.contains("retry")) {
    const json& r = j["retry"];
    if (!r.is_object()) throw Error(ErrorCode::kInvalidArgument, where + ": 'retry' must be an object");
    reject_unknown(r, {"max_retries", "backoff_base_ms"}, where + " retry");
    c.retry.max_retries = field<int>(r, "max_retries", c.retry.max_retries, where);
    c.retry.backoff_base = std::chrono::milliseconds(
        field<std::int64_t>(r, "backoff_base_ms", c.retry.backoff_base.count(), where));
  }
  if (j.contains("stub")) {
    const json& s = j["stub"];
    if (!s.is_object()) throw Error(ErrorCode::kInvalidArgument, where + ": 'stub' must be an object");
    reject_unknown(s, {"dim", "seed"}, where + " stub");
    c.stub_dim = field<int>(s, "dim", c.stub_dim, where);
    c.stub_seed = field<std::uint64_t>(s, "seed", c.stub_seed, where);
  }

  auto bad = [&](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, where + ": " + msg); };
  if (c.kind != "stub" && c.kind != "http") bad("kind must be \"stub\" or \"http\"");
  if (c.kind == "http") {
    for (const auto* url : {&c.embedding_endpoint, &c.textgen_endpoint, &c.imagegen_endpoint}) {
      if (!parse_url(*url)) bad("endpoint '" + *url + "' is not a well-formed http(s) URL");
    }
  }
  if (!(c.timeout_seconds > 0)) bad("timeout_seconds must be > 0");
  if (c.retry.max_retries < 0 || c.retry.max_retries > 10) bad("retry.max_retries must be in [0, 10]");
  if (c.retry.backoff_base.count() < 0) bad("retry.backoff_base_ms must be >= 0");
  if (c.max_concurrency < 1) bad("max_concurrency must be >= 1");
  if (c.n_images < 1) bad("n_images must be >= 1");
  if (c.stub_dim < 2) bad("stub.dim must be >= 2");
  return c;
}

ProviderConfig load_provider_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidArgument, e.message());
  }
  return parse_provider_config(text, path.string());
}

std::string serialize_provider_config(const ProviderConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = c.kind;
  j["embedding_endpoint"] = c.embedding_endpoint;
  j["textgen_endpoint"] = c.textgen_endpoint;
  j["imagegen_endpoint"] = c.imagegen_endpoint;
  j["timeout_seconds"] = c.timeout_seconds;
  j["retry"] = {{"max_retries", c.retry.max_retries},
                {"backoff_base_ms", c.retry.backoff_base.count()}};
  j["max_concurrency"] = c.max_concurrency;
  j["n_images"] = c.n_images;
  j["cache_dir"] = c.cache_dir;
  j["image_store_dir"] = c.image_store_dir;
  j["stub"] = {{"dim", c.stub_dim}, {"seed", c.stub_seed}};
  return j.dump(2) + "\n";
}

ProviderSet make_providers(const ProviderConfig& c, Sleeper sleeper) {
  ProviderSet set;
  if (c.kind == "http") {
    set.embed = std::make_shared<HttpProvider>(c.embedding_endpoint, kEmbedKeyEnv,
                                               c.timeout_seconds, c.retry, sleeper);
    set.textgen = std::make_shared<HttpProvider>(c.textgen_endpoint, kTextGenKeyEnv,
                                                 c.timeout_seconds, c.retry, sleeper);
    set.imagegen = std::make_shared<HttpProvider>(c.imagegen_endpoint, kImageGenKeyEnv,
                                                  c.timeout_seconds, c.retry, sleeper);
  } else {
    set.embed = std::make_shared<StubEmbedProvider>(c.stub_dim, c.stub_seed);
    set.textgen = std::make_shared<StubTextGenProvider>(c.stub_seed);
    set.imagegen = std::make_shared<StubImageGenProvider>(c.stub_seed);
  }
  set.cache = std::make_shared<ResponseCache>(c.cache_dir);
  set.images = std::make_shared<ImageStore>(c.image_store_dir);
  set.max_concurrency = c.max_concurrency;
  set.n_images = c.n_images;
  return set;
}

}  // namespace wizs
