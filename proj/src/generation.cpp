#include "wizs/generation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>

#include "wizs/cache.hpp"
#include "wizs/error.hpp"
#include "wizs/format.hpp"
#include "wizs/hash.hpp"
#include "wizs/log.hpp"
#include "wizs/parallel.hpp"

namespace wizs {

namespace {

using json = nlohmann::json;

// Strips "1.", "2)", "-", "*" and bullet markers plus surrounding quotes.
std::string clean_line(std::string_view raw) {
  std::string s = trim(raw);
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')' || s[i] == ':')) {
    s = trim(std::string_view(s).substr(i + 1));
  } else if (s.starts_with("- ") || s.starts_with("* ")) {
    s = trim(std::string_view(s).substr(2));
  } else if (s.starts_with("\xE2\x80\xA2")) {
    s = trim(std::string_view(s).substr(3));
  }
  for (const char* q : {"\"", "'", "\xE2\x80\x9C"}) {
    if (s.starts_with(q)) s.erase(0, std::string_view(q).size());
  }
  for (const char* q : {"\"", "'", "\xE2\x80\x9D"}) {
    if (s.ends_with(q)) s.erase(s.size() - std::string_view(q).size());
  }
  return trim(s);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = clean_line(std::string_view(text).substr(start, end - start));
    if (!line.empty()) out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

std::vector<std::string> completions_of(const json& response, const Provider& p) {
  if (!response.is_object() || !response.contains("completions") ||
      !response["completions"].is_array()) {
    throw Error(ErrorCode::kProviderShapeError, p.id() + ": response lacks a completions array");
  }
  std::vector<std::string> out;
  for (const auto& c : response["completions"]) {
    if (!c.is_string()) {
      throw Error(ErrorCode::kProviderShapeError, p.id() + ": completion is not a string");
    }
    out.push_back(c.get<std::string>());
  }
  return out;
}

std::optional<Eigen::VectorXd> vector_of(const json& j) {
  if (!j.is_array()) return std::nullopt;
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) return std::nullopt;
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

std::vector<Embedding<double>> fetch_embeddings(const char* field,
                                                const std::vector<std::string>& payloads,
                                                ProviderSet& providers) {
  if (payloads.empty()) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("nothing to embed ({} is empty)", field));
  }
  Provider& provider = *providers.embed;
  const std::string pid = provider.id();
  const std::size_t n = payloads.size();

  std::vector<std::optional<Eigen::VectorXd>> raw(n);
  std::vector<std::string> keys(n);
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = ResponseCache::key(pid, json{{field, {payloads[i]}}}.dump());
    if (providers.cache) {
      if (auto hit = providers.cache->get(keys[i])) {
        try {
          raw[i] = vector_of(json::parse(*hit));
        } catch (const json::exception&) {
        }
        if (raw[i]) continue;
      }
    }
    misses.push_back(i);
  }

  const std::size_t batch = std::max<std::size_t>(1, providers.embed_batch);
  const std::size_t n_batches = (misses.size() + batch - 1) / batch;
  auto errors = parallel_for(n_batches, providers.max_concurrency, [&](std::size_t b) {
    const auto first = b * batch;
    const auto last = std::min(misses.size(), first + batch);
    json items = json::array();
    for (auto m = first; m < last; ++m) items.push_back(payloads[misses[m]]);
    const json response = provider.call(json{{field, items}});
    if (!response.is_object() || !response.contains("vectors") || !response["vectors"].is_array()) {
      throw Error(ErrorCode::kProviderShapeError, pid + ": response lacks a vectors array");
    }
    const json& vectors = response["vectors"];
    if (vectors.size() != last - first) {
      throw Error(ErrorCode::kProviderShapeError,
                  fmt::format("{}: asked for {} vectors, got {}", pid, last - first, vectors.size()));
    }
    const auto dim = response.value("dim", json()).is_number_integer()
                         ? std::optional<long long>(response["dim"].get<long long>())
                         : std::nullopt;
    for (auto m = first; m < last; ++m) {
      auto v = vector_of(vectors[m - first]);
      if (!v) {
        throw Error(ErrorCode::kProviderShapeError,
                    fmt::format("{}: vector {} is not a numeric array", pid, m - first));
      }
      if (dim && v->size() != *dim) {
        throw Error(ErrorCode::kProviderShapeError,
                    fmt::format("{}: vector {} has length {} but dim is {}", pid, m - first,
                                v->size(), *dim));
      }
      const auto i = misses[m];
      if (providers.cache) {
        providers.cache->put(keys[i], json(std::vector<double>(v->data(), v->data() + v->size())).dump());
      }
      raw[i] = std::move(*v);
    }
  });
  rethrow_first(errors);

  std::vector<Embedding<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (raw[i]->size() != raw[0]->size()) {
      throw Error(ErrorCode::kProviderShapeError,
                  fmt::format("{}: item {} has dimension {}, item 0 has {}", pid, i, raw[i]->size(),
                              raw[0]->size()));
    }
    try {
      out.push_back(Embedding<double>::from_raw(*raw[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::kProviderShapeError, fmt::format("{}: item {}: {}", pid, i, e.what()));
    }
  }
  return out;
}

}  // namespace

std::vector<Embedding<double>> fetch_text_embeddings(const std::vector<std::string>& texts,
                                                     ProviderSet& providers) {
  return fetch_embeddings("texts", texts, providers);
}

std::vector<Embedding<double>> fetch_image_embeddings(const std::vector<std::string>& images,
                                                      ProviderSet& providers) {
  std::vector<std::string> encoded;
  encoded.reserve(images.size());
  for (const auto& bytes : images) encoded.push_back(base64_encode(bytes));
  return fetch_embeddings("images_b64", encoded, providers);
}

std::string caption_prompt(std::string_view class_name, std::string_view domain, int n,
                           std::string_view prefix) {
  const std::string traits = domain.empty() ? std::string("none given") : std::string(domain);
  return fmt::format(
      "You are an AI assistant that generates creative and diverse image captions suitable for "
      "use with image generation models like DALL-E. Given a subject, provide {0} distinct, "
      "diverse and descriptive captions, considering the following global taxonomical traits "
      "when generating captions: {1}.\n\n"
      "Please generate {0} diverse and creative alternative captions for the subject '{2}'. "
      "Each caption should be compatible with the CLIP model so your caption should share the "
      "same prefix with the original prompt template provided: '{3}'. An example can be, the "
      "template is 'a photo of a {{c}}' and the descriptive caption is 'a photo of a {{c}}, "
      "[descriptive content]'. Here {{c}} is the class name of the subject.",
      n, traits, class_name, prefix);
}

std::vector<std::string> generate_captions(std::string_view class_name, std::string_view domain,
                                           int n, Provider& textgen, std::string_view prefix) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "caption count must be >= 1");
  if (trim(class_name).empty()) throw Error(ErrorCode::kInvalidArgument, "empty class name");
  const std::string want = to_lower(prefix);
  std::vector<std::string> accepted;
  std::set<std::string> seen;
  int rejected = 0;
  for (int attempt = 0; attempt <= kCaptionRetries && static_cast<int>(accepted.size()) < n;
       ++attempt) {
    const int missing = n - static_cast<int>(accepted.size());
    const json response =
        textgen.call({{"prompt", caption_prompt(class_name, domain, missing, prefix)}, {"n", missing}});
    for (const auto& completion : completions_of(response, textgen)) {
      for (auto& line : lines_of(completion)) {
        if (static_cast<int>(accepted.size()) >= n) break;
        const std::string key = to_lower(line);
        if (!key.starts_with(want)) {
          ++rejected;
          continue;
        }
        if (seen.insert(key).second) accepted.push_back(std::move(line));
      }
    }
  }
  if (rejected > 0) {
    logger()->info("class=\"{}\" captions_rejected={} (missing prefix \"{}\")", class_name,
                   rejected, prefix);
  }
  if (static_cast<int>(accepted.size()) < n) {
    throw PartialResult(fmt::format("class '{}': only {} of {} captions start with '{}' after {} "
                                    "retries",
                                    class_name, accepted.size(), n, prefix, kCaptionRetries),
                        accepted);
  }
  return accepted;
}

std::string alternatives_prompt(std::string_view query, std::string_view domain) {
  std::string p =
      "Create 10 realistic alternatives to the following input label by suggesting alternatives "
      "that are somewhat similar. I don't want the same label reworded or a subclass of the "
      "input label. The given label is: ";
  p += query;
  if (!domain.empty()) p += fmt::format(" The domain is: {}.", domain);
  return p;
}

Alternatives parse_alternatives(const std::vector<std::string>& completions,
                                std::string_view query) {
  Alternatives out;
  const std::string q = to_lower(trim(query));
  std::set<std::string> seen;
  for (const auto& completion : completions) {
    auto lines = lines_of(completion);
    // A single comma-separated line is a list too.
    if (lines.size() == 1 && lines[0].find(',') != std::string::npos) {
      std::vector<std::string> parts;
      std::size_t start = 0;
      while (start <= lines[0].size()) {
        auto end = lines[0].find(',', start);
        if (end == std::string::npos) end = lines[0].size();
        auto part = clean_line(std::string_view(lines[0]).substr(start, end - start));
        if (!part.empty()) parts.push_back(std::move(part));
        start = end + 1;
      }
      lines = std::move(parts);
    }
    for (auto& line : lines) {
      while (!line.empty() && line.back() == '.') line.pop_back();
      line = trim(line);
      if (line.empty()) continue;
      const std::string key = to_lower(line);
      if (key == q) {
        ++out.query_echoes_removed;
        continue;
      }
      if (!seen.insert(key).second) {
        ++out.duplicates_removed;
        continue;
      }
      if (static_cast<int>(out.labels.size()) < kAlternativesWanted) out.labels.push_back(line);
    }
  }
  return out;
}

Alternatives generate_alternatives(std::string_view query, std::string_view domain,
                                   Provider& textgen) {
  if (trim(query).empty()) throw Error(ErrorCode::kInvalidArgument, "empty query");
  const json response = textgen.call({{"prompt", alternatives_prompt(trim(query), domain)}, {"n", 1}});
  Alternatives alt = parse_alternatives(completions_of(response, textgen), trim(query));
  if (alt.duplicates_removed > 0 || alt.query_echoes_removed > 0) {
    logger()->info("query=\"{}\" alternatives={} duplicates_removed={} query_echoes_removed={}",
                   trim(query), alt.labels.size(), alt.duplicates_removed, alt.query_echoes_removed);
  }
  return alt;
}

std::vector<std::string> generate_images(const std::string& prompt, int n, ProviderSet& providers,
                                         std::uint64_t first_seed) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "image count must be >= 1");
  Provider& provider = *providers.imagegen;
  std::vector<std::string> refs(static_cast<std::size_t>(n));
  auto errors = parallel_for(refs.size(), providers.max_concurrency, [&](std::size_t k) {
    const json response = provider.call({{"prompt", prompt}, {"n", 1}, {"seed", first_seed + k}});
    if (!response.is_object() || !response.contains("images_b64") ||
        !response["images_b64"].is_array() || response["images_b64"].empty() ||
        !response["images_b64"][0].is_string()) {
      throw Error(ErrorCode::kProviderShapeError, provider.id() + ": response lacks images_b64");
    }
    std::string bytes;
    try {
      bytes = base64_decode(response["images_b64"][0].get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorCode::kProviderShapeError, provider.id() + ": " + e.message());
    }
    refs[k] = providers.images->put(bytes);
  });
  const auto failed = std::find_if(errors.begin(), errors.end(), [](const auto& e) { return bool(e); });
  if (failed == errors.end()) return refs;
  const auto ok = static_cast<std::size_t>(failed - errors.begin());
  if (ok == 0) std::rethrow_exception(*failed);
  std::string cause;
  try {
    std::rethrow_exception(*failed);
  } catch (const std::exception& e) {
    cause = e.what();
  }
  refs.resize(ok);
  throw PartialResult(fmt::format("image {} of {} failed ({}); kept the first {}", ok + 1, n, cause, ok),
                      std::move(refs));
}

}  // namespace wizs
