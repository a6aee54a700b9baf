#include "wizs/stub_providers.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <vector>

#include "wizs/error.hpp"
#include "wizs/format.hpp"
#include "wizs/hash.hpp"

namespace wizs {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Roughly bell-shaped components in [-1, 1], fully determined by `h`.
Eigen::VectorXd hashed_direction(std::uint64_t h, int dim) {
  Eigen::VectorXd v(dim);
  for (int j = 0; j < dim; ++j) {
    double acc = 0;
    for (int r = 0; r < 3; ++r) {
      const auto u = splitmix(h + static_cast<std::uint64_t>(j) * 3 + r);
      acc += static_cast<double>(u >> 11) * 0x1.0p-53;
    }
    v[j] = (acc - 1.5) / 1.5;
  }
  return v;
}

bool is_stopword(std::string_view w) {
  static constexpr std::array<std::string_view, 6> kStop = {"a", "an", "the", "of", "and", "with"};
  return std::find(kStop.begin(), kStop.end(), w) != kStop.end();
}

std::string between(std::string_view s, std::string_view open, std::string_view close) {
  const auto b = s.find(open);
  if (b == std::string_view::npos) return {};
  const auto start = b + open.size();
  const auto e = s.find(close, start);
  if (e == std::string_view::npos) return {};
  return std::string(s.substr(start, e - start));
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string xml_unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const auto end = s.find(';', i);
    const auto entity = s.substr(i, end == std::string_view::npos ? 1 : end - i + 1);
    if (entity == "&amp;") out += '&';
    else if (entity == "&lt;") out += '<';
    else if (entity == "&gt;") out += '>';
    else if (entity == "&quot;") out += '"';
    else {
      out += '&';
      continue;
    }
    i = end;
  }
  return out;
}

int requested_n(const nlohmann::json& request) {
  const int n = request.value("n", 1);
  if (n < 1 || n > 1000) throw Error(ErrorCode::kInvalidArgument, "stub: n must be in [1, 1000]");
  return n;
}

const std::vector<std::string>& lanternfly_lookalikes() {
  static const std::vector<std::string> kList = {
      "Planthopper", "Leafhopper", "Cicada", "Tiger moth", "Boxelder bug",
      "Spongy moth", "Brown marmorated stink bug", "Asian longhorned beetle",
      "Emerald ash borer", "Ladybug"};
  return kList;
}

const std::vector<std::string>& generic_pool() {
  static const std::vector<std::string> kPool = {
      "Fox", "Wolf", "Coyote", "Badger", "Otter", "Raccoon", "Heron", "Egret",
      "Kestrel", "Falcon", "Sparrow", "Finch", "Maple", "Birch", "Willow", "Oak",
      "Canoe", "Kayak", "Rowboat", "Sailboat", "Teapot", "Kettle", "Saucepan", "Skillet",
      "Lantern", "Candle", "Torch", "Bicycle", "Scooter", "Tricycle"};
  return kPool;
}

const std::vector<std::string>& descriptors() {
  static const std::vector<std::string> kList = {
      "photographed in bright midday sun",
      "seen up close with a softly blurred background",
      "standing out against a plain white backdrop",
      "captured at dusk under warm golden light",
      "shown from a low angle in its natural setting",
      "framed on the left of a wide landscape shot",
      "in sharp focus with fine texture visible",
      "under overcast skies with muted colors",
      "partly in shadow on a rainy afternoon",
      "viewed from above in crisp detail",
      "in a busy scene with other objects around it",
      "lit by a single lamp in a dark room",
      "at the center of a symmetric composition",
      "slightly out of focus in the foreground",
      "in vivid saturated colors",
      "in a black and white film style",
      "reflected in a nearby window",
      "on a snowy winter morning",
      "surrounded by green spring foliage",
      "in a vintage postcard style"};
  return kList;
}

}  // namespace

StubEmbedProvider::StubEmbedProvider(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 2) throw Error(ErrorCode::kInvalidArgument, "stub embed dim must be >= 2");
}

std::string StubEmbedProvider::id() const {
  return fmt::format("stub-embed:dim={}:seed={}", dim_, seed_);
}

Eigen::VectorXd StubEmbedProvider::text_vector(std::string_view text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  std::string word;
  const std::string t = to_lower(text) + " ";
  for (char c : t) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      word += c;
    } else if (!word.empty()) {
      const double w = is_stopword(word) ? 0.15 : 1.0;
      v += w * hashed_direction(fnv1a(word, seed_), dim_);
      word.clear();
    }
  }
  if (v.norm() <= 1e-12) v = hashed_direction(fnv1a("<empty>", seed_), dim_);
  return v;
}

Eigen::VectorXd StubEmbedProvider::image_vector(std::string_view bytes) const {
  const Eigen::VectorXd noise = hashed_direction(fnv1a(bytes, seed_ ^ 0xABCDULL), dim_);
  const auto desc_start = bytes.find("<desc>");
  const auto desc_end = bytes.find("</desc>");
  if (desc_start == std::string_view::npos || desc_end == std::string_view::npos ||
      desc_end < desc_start) {
    return noise;
  }
  const std::string desc = xml_unescape(bytes.substr(desc_start + 6, desc_end - desc_start - 6));
  const Eigen::VectorXd content = text_vector(desc).normalized();
  const Eigen::VectorXd gap = hashed_direction(fnv1a("<modality>", seed_), dim_).normalized();
  return content + 0.6 * gap + 0.25 * noise.normalized();
}

nlohmann::json StubEmbedProvider::call(const nlohmann::json& request) {
  ++calls_;
  std::vector<Eigen::VectorXd> vectors;
  if (request.contains("texts")) {
    for (const auto& t : request.at("texts")) vectors.push_back(text_vector(t.get<std::string>()));
  } else if (request.contains("images_b64")) {
    for (const auto& b : request.at("images_b64")) {
      vectors.push_back(image_vector(base64_decode(b.get<std::string>())));
    }
  } else {
    throw Error(ErrorCode::kInvalidArgument, "stub embed: request needs texts or images_b64");
  }
  nlohmann::json out;
  out["dim"] = dim_;
  out["vectors"] = nlohmann::json::array();
  for (const auto& v : vectors) {
    out["vectors"].push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  return out;
}

StubTextGenProvider::StubTextGenProvider(std::uint64_t seed) : seed_(seed) {}

std::string StubTextGenProvider::id() const { return fmt::format("stub-textgen:seed={}", seed_); }

nlohmann::json StubTextGenProvider::call(const nlohmann::json& request) {
  ++calls_;
  const std::string prompt = request.at("prompt").get<std::string>();
  const int n = requested_n(request);
  std::vector<std::string> completions;

  if (prompt.starts_with("Create 10 realistic alternatives")) {
    std::string label = between(prompt + "\n", "The given label is: ", "\n");
    if (const auto cut = label.find(" The domain is:"); cut != std::string::npos) label.resize(cut);
    std::vector<std::string> picks;
    if (to_lower(label) == "spotted lanternfly") {
      picks = lanternfly_lookalikes();
    } else {
      const auto& pool = generic_pool();
      std::uint64_t h = fnv1a(to_lower(label), seed_);
      while (picks.size() < 10) {
        h = splitmix(h);
        const auto& cand = pool[h % pool.size()];
        if (std::find(picks.begin(), picks.end(), cand) == picks.end() && to_lower(cand) != to_lower(label)) {
          picks.push_back(cand);
        }
      }
    }
    // Echo the query the way chat models tend to, so callers must filter it.
    picks.insert(picks.begin() + 3, label);
    std::string list;
    for (std::size_t i = 0; i < picks.size(); ++i) list += fmt::format("{}. {}\n", i + 1, picks[i]);
    completions.assign(static_cast<std::size_t>(n), list);
  } else if (prompt.find("diverse and creative alternative captions") != std::string::npos) {
    const std::string subject = between(prompt, "for the subject '", "'. Each caption");
    std::string prefix = between(prompt, "prompt template provided: '", "'. An example");
    if (prefix.empty()) prefix = "a photo of a " + subject;
    prefix[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(prefix[0])));
    const auto& pool = descriptors();
    const auto offset = fnv1a(to_lower(subject), seed_) % pool.size();
    for (int k = 0; k < n; ++k) {
      const auto idx = (offset + static_cast<std::size_t>(k)) % pool.size();
      const auto round = (offset + static_cast<std::size_t>(k)) / pool.size();
      std::string caption = prefix + ", " + pool[idx];
      if (round > 0) caption += fmt::format(" (take {})", round + 1);
      completions.push_back(caption);
    }
  } else {
    for (int k = 0; k < n; ++k) completions.push_back(fmt::format("stub completion {}", k + 1));
  }
  return {{"completions", completions}};
}

StubImageGenProvider::StubImageGenProvider(std::uint64_t seed) : seed_(seed) {}

std::string StubImageGenProvider::id() const { return fmt::format("stub-imagegen:seed={}", seed_); }

std::string StubImageGenProvider::render_svg(std::string_view prompt, std::uint64_t seed) {
  std::uint64_t h = fnv1a(prompt, seed);
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"256\" height=\"256\" viewBox=\"0 0 256 256\">\n";
  svg += "<desc>" + xml_escape(prompt) + "</desc>\n";
  h = splitmix(h);
  svg += fmt::format("<rect width=\"256\" height=\"256\" fill=\"#{:06x}\"/>\n", h & 0xFFFFFF);
  for (int i = 0; i < 6; ++i) {
    h = splitmix(h);
    svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#{:06x}\" fill-opacity=\"0.7\"/>\n",
                       h % 256, (h >> 8) % 256, 8 + (h >> 16) % 56, (h >> 24) & 0xFFFFFF);
  }
  svg += "</svg>\n";
  return svg;
}

nlohmann::json StubImageGenProvider::call(const nlohmann::json& request) {
  ++calls_;
  const std::string prompt = request.at("prompt").get<std::string>();
  const int n = requested_n(request);
  const std::uint64_t base = request.value("seed", std::uint64_t{0});
  std::vector<std::string> images;
  for (int k = 0; k < n; ++k) {
    images.push_back(base64_encode(render_svg(prompt, splitmix(seed_ ^ (base + k)))));
  }
  return {{"images_b64", images}};
}

}  // namespace wizs
