#include "wizs/ingest.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <set>

#include "wizs/blob.hpp"
#include "wizs/cache.hpp"
#include "wizs/error.hpp"
#include "wizs/format.hpp"
#include "wizs/generation.hpp"
#include "wizs/log.hpp"
#include "wizs/parallel.hpp"

namespace wizs {

namespace {

using json = nlohmann::json;

Matrix<double> columns(std::span<const Embedding<double>> items) {
  if (items.empty()) return {};
  return EmbeddingSet<double>::from_embeddings(items).matrix();
}

}  // namespace

ClassList parse_class_list(std::string_view json_text, std::string_view source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: not valid JSON: {}", source, e.what()));
  }
  std::vector<std::string> problems;
  auto str = [&](const json& obj, const char* field, const std::string& who, bool required) {
    if (!obj.contains(field)) {
      if (required) problems.push_back(fmt::format("{} field '{}': missing", who, field));
      return std::string();
    }
    if (!obj[field].is_string()) {
      problems.push_back(fmt::format("{} field '{}': must be a string", who, field));
      return std::string();
    }
    return obj[field].get<std::string>();
  };
  auto strings = [&](const json& obj, const char* field, const std::string& who) {
    std::vector<std::string> out;
    if (!obj.contains(field)) return out;
    if (!obj[field].is_array()) {
      problems.push_back(fmt::format("{} field '{}': must be an array of strings", who, field));
      return out;
    }
    for (const auto& v : obj[field]) {
      if (v.is_string()) {
        out.push_back(v.get<std::string>());
      } else {
        problems.push_back(fmt::format("{} field '{}': must be an array of strings", who, field));
        break;
      }
    }
    return out;
  };

  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: top level must be an object", source));
  if (j.value("format", "") != "wizs-classes") problems.push_back("field 'format': must be \"wizs-classes\"");
  ClassList list;
  list.dataset_id = str(j, "dataset_id", "class list", true);
  list.model_id = str(j, "model_id", "class list", false);
  list.domain = str(j, "domain", "class list", false);
  if (j.contains("prompt_template")) list.prompt_template = str(j, "prompt_template", "class list", false);
  if (list.prompt_template.find("{class_name}") == std::string::npos) {
    problems.push_back("field 'prompt_template': must contain {class_name}");
  }
  if (!j.contains("classes") || !j["classes"].is_array() || j["classes"].size() < 2) {
    problems.push_back("field 'classes': must be an array of at least 2 classes");
  } else {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < j["classes"].size(); ++i) {
      const json& c = j["classes"][i];
      const std::string who = fmt::format("class #{}", i);
      if (!c.is_object()) {
        problems.push_back(who + ": must be an object");
        continue;
      }
      ClassListEntry e;
      e.class_id = str(c, "class_id", who, true);
      const std::string named = e.class_id.empty() ? who : fmt::format("class '{}'", e.class_id);
      e.class_name = str(c, "class_name", named, true);
      if (!e.class_id.empty() && !ids.insert(e.class_id).second) {
        problems.push_back(named + " field 'class_id': duplicate");
      }
      if (c.contains("class_name") && trim(e.class_name).empty()) {
        problems.push_back(named + " field 'class_name': must not be blank");
      }
      e.captions = strings(c, "captions", named);
      e.real_images = strings(c, "real_images", named);
      list.classes.push_back(std::move(e));
    }
  }
  if (!problems.empty()) {
    std::string msg = fmt::format("{}: {} problem(s)", source, problems.size());
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(ErrorCode::kInvalidArgument, msg);
  }
  return list;
}

std::pair<BundleManifest, std::vector<RawClassData>> ingest_class_list(
    const ClassList& list, const std::filesystem::path& base_dir, ProviderSet& providers,
    const IngestOptions& options) {
  const int n_img = options.n_images > 0 ? options.n_images : providers.n_images;
  const std::size_t n_classes = list.classes.size();

  // Read every real image first so a missing file fails before any provider call.
  std::vector<std::vector<std::string>> real(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (const auto& rel : list.classes[c].real_images) {
      try {
        real[c].push_back(read_file(base_dir / rel));
      } catch (const Error& e) {
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("class '{}' real image: {}", list.classes[c].class_id, e.message()));
      }
    }
  }

  std::vector<std::string> prompts(n_classes);
  std::vector<std::vector<std::string>> captions(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    prompts[c] = render_prompt(list.prompt_template, list.classes[c].class_name, list.domain);
    captions[c] = list.classes[c].captions;
  }
  rethrow_first(parallel_for(n_classes, providers.max_concurrency, [&](std::size_t c) {
    if (static_cast<int>(captions[c].size()) >= n_img) return;
    captions[c] = generate_captions(list.classes[c].class_name, list.domain, n_img, *providers.textgen,
                                    prompts[c]);
  }));

  std::vector<std::vector<std::string>> refs(n_classes, std::vector<std::string>(n_img));
  const auto n = static_cast<std::size_t>(n_img);
  rethrow_first(parallel_for(n_classes * n, providers.max_concurrency, [&](std::size_t t) {
    const auto c = t / n;
    const auto k = t % n;
    refs[c][k] = generate_images(captions[c][k], 1, providers, k).front();
  }));
  logger()->info("ingest dataset={} classes={} images_per_class={}", list.dataset_id, n_classes, n_img);

  const auto text_vecs = fetch_text_embeddings(prompts, providers);
  std::vector<std::string> flat_captions;
  std::vector<std::string> flat_images;
  std::vector<std::string> flat_real;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (options.descriptive_texts) {
      flat_captions.insert(flat_captions.end(), captions[c].begin(), captions[c].begin() + n_img);
    }
    for (const auto& ref : refs[c]) {
      auto bytes = providers.images->get(ref);
      if (!bytes) throw Error(ErrorCode::kIo, "stored image " + ref + " disappeared");
      flat_images.push_back(std::move(*bytes));
    }
    flat_real.insert(flat_real.end(), real[c].begin(), real[c].end());
  }
  const auto caption_vecs = fetch_text_embeddings(flat_captions, providers);
  const auto image_vecs = fetch_image_embeddings(flat_images, providers);
  const auto real_vecs = fetch_image_embeddings(flat_real, providers);

  BundleManifest manifest;
  manifest.dataset_id = list.dataset_id;
  manifest.model_id = list.model_id.empty() ? providers.embed->id() : list.model_id;
  manifest.domain = list.domain;
  manifest.prompt_template = list.prompt_template;
  manifest.dim = static_cast<std::uint32_t>(text_vecs.front().dim());

  std::vector<RawClassData> out(n_classes);
  std::size_t real_at = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& raw = out[c];
    raw.meta.class_id = list.classes[c].class_id;
    raw.meta.class_name = list.classes[c].class_name;
    raw.meta.captions.assign(captions[c].begin(), captions[c].begin() + n_img);
    raw.meta.image_refs = refs[c];
    raw.plain_text = text_vecs[c].values();
    raw.generated_images = columns(std::span(image_vecs).subspan(c * n, n));
    if (options.descriptive_texts) raw.descriptive_texts = columns(std::span(caption_vecs).subspan(c * n, n));
    raw.real_images = columns(std::span(real_vecs).subspan(real_at, real[c].size()));
    real_at += real[c].size();
  }
  return {std::move(manifest), std::move(out)};
}

std::vector<RawClassData> bundle_to_raw(const Bundle& bundle) {
  std::vector<RawClassData> out;
  out.reserve(bundle.classes.size());
  for (std::size_t c = 0; c < bundle.classes.size(); ++c) {
    const auto& emb = bundle.classes[c];
    RawClassData raw;
    raw.meta = bundle.manifest.classes[c];
    raw.plain_text = emb.plain_text.values();
    raw.generated_images = emb.images.matrix();
    raw.descriptive_texts = emb.captions.matrix();
    raw.real_images = emb.real_images.matrix();
    out.push_back(std::move(raw));
  }
  return out;
}

}  // namespace wizs
