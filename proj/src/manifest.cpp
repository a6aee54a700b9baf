#include "wizs/manifest.hpp"

#include <fmt/format.h>

#include <nlohmann/json.hpp>
#include <set>

#include "wizs/error.hpp"

namespace wizs {

namespace {

using json = nlohmann::json;

constexpr const char* kRefFields[] = {"plain_text", "generated_images", "descriptive_texts",
                                      "real_images"};

std::optional<EmbeddingRef>& ref_field(ManifestClass& c, std::string_view name) {
  if (name == "plain_text") return c.plain_text;
  if (name == "generated_images") return c.generated_images;
  if (name == "descriptive_texts") return c.descriptive_texts;
  return c.real_images;
}

const std::optional<EmbeddingRef>& ref_field(const ManifestClass& c, std::string_view name) {
  return ref_field(const_cast<ManifestClass&>(c), name);
}

// Collects validation problems so one error can list them all.
struct Problems {
  std::vector<std::string> lines;
  void add(std::string line) { lines.push_back(std::move(line)); }
};

std::string class_label(const json& c, std::size_t index) {
  if (c.is_object() && c.contains("class_id") && c["class_id"].is_string()) {
    return fmt::format("class '{}'", c["class_id"].get<std::string>());
  }
  return fmt::format("class #{}", index);
}

std::vector<std::string> string_list(const json& parent, const char* field,
                                     const std::string& who, Problems& problems) {
  std::vector<std::string> out;
  if (!parent.contains(field)) return out;
  const json& arr = parent[field];
  if (!arr.is_array()) {
    problems.add(fmt::format("{} field '{}': must be an array of strings", who, field));
    return out;
  }
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_string()) {
      problems.add(fmt::format("{} field '{}[{}]': must be a string", who, field, i));
    } else {
      out.push_back(arr[i].get<std::string>());
    }
  }
  return out;
}

}  // namespace

std::string render_prompt(std::string_view tmpl, std::string_view class_name,
                          std::string_view domain) {
  std::string out(tmpl);
  auto replace_all = [&out](std::string_view key, std::string_view value) {
    for (std::size_t pos = out.find(key); pos != std::string::npos;
         pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  };
  replace_all("{class_name}", class_name);
  replace_all("{domain}", domain);
  return out;
}

BundleManifest parse_manifest(std::string_view json_text, std::string_view source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidManifest, fmt::format("{}: not valid JSON: {}", source, e.what()));
  }
  if (!j.is_object()) {
    throw Error(ErrorCode::kInvalidManifest, fmt::format("{}: top level must be an object", source));
  }

  Problems problems;
  BundleManifest m;
  auto top_string = [&](const char* field, std::string& dst, bool required) {
    if (!j.contains(field)) {
      if (required) problems.add(fmt::format("manifest field '{}': missing", field));
      return;
    }
    if (!j[field].is_string()) {
      problems.add(fmt::format("manifest field '{}': must be a string", field));
      return;
    }
    dst = j[field].get<std::string>();
  };

  if (j.value("format", "") != "wizs-manifest") {
    problems.add("manifest field 'format': must be \"wizs-manifest\"");
  }
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kManifestVersion) {
    problems.add(fmt::format("manifest field 'version': must be {}", kManifestVersion));
  }
  top_string("dataset_id", m.dataset_id, true);
  top_string("model_id", m.model_id, true);
  top_string("domain", m.domain, false);
  top_string("prompt_template", m.prompt_template, false);
  if (m.prompt_template.find("{class_name}") == std::string::npos) {
    problems.add("manifest field 'prompt_template': must contain {class_name}");
  }
  if (!j.contains("dim") || !j["dim"].is_number_unsigned() || j["dim"].get<std::uint64_t>() < 2 ||
      j["dim"].get<std::uint64_t>() > 1u << 20) {
    problems.add("manifest field 'dim': must be an integer in [2, 1048576]");
  } else {
    m.dim = j["dim"].get<std::uint32_t>();
  }

  if (!j.contains("classes") || !j["classes"].is_array() || j["classes"].empty()) {
    problems.add("manifest field 'classes': must be a non-empty array");
  } else {
    std::set<std::string> ids;
    const json& classes = j["classes"];
    for (std::size_t i = 0; i < classes.size(); ++i) {
      const json& c = classes[i];
      const std::string who = class_label(c, i);
      if (!c.is_object()) {
        problems.add(fmt::format("{}: must be an object", who));
        continue;
      }
      ManifestClass mc;
      if (!c.contains("class_id") || !c["class_id"].is_string() ||
          c["class_id"].get<std::string>().empty()) {
        problems.add(fmt::format("{} field 'class_id': must be a non-empty string", who));
      } else {
        mc.class_id = c["class_id"].get<std::string>();
        if (!ids.insert(mc.class_id).second) {
          problems.add(fmt::format("{} field 'class_id': duplicate", who));
        }
      }
      if (!c.contains("class_name") || !c["class_name"].is_string() ||
          c["class_name"].get<std::string>().empty()) {
        problems.add(fmt::format("{} field 'class_name': must be a non-empty string", who));
      } else {
        mc.class_name = c["class_name"].get<std::string>();
      }
      mc.captions = string_list(c, "captions", who, problems);
      mc.image_refs = string_list(c, "image_refs", who, problems);

      if (c.contains("embeddings")) {
        const json& e = c["embeddings"];
        if (!e.is_object()) {
          problems.add(fmt::format("{} field 'embeddings': must be an object", who));
        } else {
          for (auto it = e.begin(); it != e.end(); ++it) {
            if (std::find(std::begin(kRefFields), std::end(kRefFields), it.key()) ==
                std::end(kRefFields)) {
              problems.add(fmt::format("{} field 'embeddings.{}': unknown field", who, it.key()));
            }
          }
          for (const char* field : kRefFields) {
            if (!e.contains(field)) continue;
            const json& r = e[field];
            const std::string where = fmt::format("{} field 'embeddings.{}'", who, field);
            if (!r.is_object() || !r.contains("blob") || !r["blob"].is_string() ||
                r["blob"].get<std::string>().empty() || !r.contains("count") ||
                !r["count"].is_number_unsigned()) {
              problems.add(where + ": must be {\"blob\": <path>, \"count\": <n>}");
              continue;
            }
            ref_field(mc, field) =
                EmbeddingRef{r["blob"].get<std::string>(), r["count"].get<std::uint64_t>()};
          }
        }
      }
      if (!mc.plain_text) {
        problems.add(fmt::format("{} field 'embeddings.plain_text': missing", who));
      } else if (mc.plain_text->count != 1) {
        problems.add(fmt::format("{} field 'embeddings.plain_text': count must be 1", who));
      }
      if (mc.descriptive_texts && !mc.captions.empty() &&
          mc.descriptive_texts->count != mc.captions.size()) {
        problems.add(fmt::format(
            "{} field 'embeddings.descriptive_texts': count {} does not match {} captions", who,
            mc.descriptive_texts->count, mc.captions.size()));
      }
      if (mc.generated_images && !mc.image_refs.empty() &&
          mc.generated_images->count != mc.image_refs.size()) {
        problems.add(fmt::format(
            "{} field 'embeddings.generated_images': count {} does not match {} image_refs", who,
            mc.generated_images->count, mc.image_refs.size()));
      }
      m.classes.push_back(std::move(mc));
    }
  }

  if (!problems.lines.empty()) {
    std::string msg = fmt::format("{}: {} problem(s)", source, problems.lines.size());
    for (const auto& l : problems.lines) msg += "\n  " + l;
    throw Error(ErrorCode::kInvalidManifest, msg);
  }
  return m;
}

std::string serialize_manifest(const BundleManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "wizs-manifest";
  j["version"] = kManifestVersion;
  j["dataset_id"] = m.dataset_id;
  j["model_id"] = m.model_id;
  j["domain"] = m.domain;
  j["prompt_template"] = m.prompt_template;
  j["dim"] = m.dim;
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : m.classes) {
    nlohmann::ordered_json jc;
    jc["class_id"] = c.class_id;
    jc["class_name"] = c.class_name;
    jc["captions"] = c.captions;
    jc["image_refs"] = c.image_refs;
    nlohmann::ordered_json e = nlohmann::ordered_json::object();
    for (const char* field : kRefFields) {
      const auto& r = ref_field(c, field);
      if (r) e[field] = {{"blob", r->blob}, {"count", r->count}};
    }
    jc["embeddings"] = std::move(e);
    j["classes"].push_back(std::move(jc));
  }
  return j.dump(2) + "\n";
}

Bundle load_bundle(const std::filesystem::path& manifest_path) {
  std::string text;
  try {
    text = read_file(manifest_path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidManifest, e.message());
  }
  Bundle bundle;
  bundle.manifest = parse_manifest(text, manifest_path.string());
  const auto base = manifest_path.parent_path();

  for (const auto& mc : bundle.manifest.classes) {
    auto load = [&](const char* field) -> EmbeddingSet<double> {
      const auto& ref = ref_field(mc, field);
      if (!ref) return EmbeddingSet<double>(bundle.manifest.dim);
      const std::string where = fmt::format("class '{}' field 'embeddings.{}'", mc.class_id, field);
      EmbeddingBlob blob;
      try {
        blob = read_blob(base / ref->blob);
      } catch (const Error& e) {
        throw Error(e.code(), where + ": " + e.message());
      }
      if (blob.dim != bundle.manifest.dim) {
        throw Error(ErrorCode::kDimensionMismatch,
                    fmt::format("{}: blob dim {} != manifest dim {}", where, blob.dim,
                                bundle.manifest.dim));
      }
      if (blob.count != ref->count) {
        throw Error(ErrorCode::kDimensionMismatch,
                    fmt::format("{}: blob count {} != manifest count {}", where, blob.count,
                                ref->count));
      }
      try {
        return EmbeddingSet<double>::from_raw_columns(blob.columns());
      } catch (const Error& e) {
        throw Error(e.code(), where + ": " + e.message());
      }
    };
    EmbeddingSet<double> text_set = load("plain_text");
    ClassEmbeddings<double> c{mc.class_id,
                              Embedding<double>::from_raw(text_set.column(0)),
                              load("generated_images"), load("descriptive_texts"),
                              load("real_images")};
    bundle.classes.push_back(std::move(c));
  }
  return bundle;
}

std::filesystem::path save_bundle(const std::filesystem::path& dir, BundleManifest manifest,
                                  const std::vector<RawClassData>& classes) {
  manifest.classes.clear();
  std::filesystem::create_directories(dir / "blobs");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& raw = classes[i];
    ManifestClass mc = raw.meta;
    std::string stem;
    for (char ch : mc.class_id) {
      stem += std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' ? ch : '_';
    }
    stem = fmt::format("{:03d}_{}", i, stem);
    auto put = [&](const char* field, const Matrix<double>& m) {
      if (m.cols() == 0) {
        ref_field(mc, field).reset();
        return;
      }
      if (m.rows() != manifest.dim) {
        throw Error(ErrorCode::kDimensionMismatch,
                    fmt::format("class '{}' field '{}': {} rows, manifest dim {}", mc.class_id,
                                field, m.rows(), manifest.dim));
      }
      const std::string rel = fmt::format("blobs/{}.{}.wizs", stem, field);
      write_blob(dir / rel, EmbeddingBlob::from_columns(m));
      ref_field(mc, field) = EmbeddingRef{rel, static_cast<std::uint64_t>(m.cols())};
    };
    put("plain_text", raw.plain_text);
    put("generated_images", raw.generated_images);
    put("descriptive_texts", raw.descriptive_texts);
    put("real_images", raw.real_images);
    manifest.classes.push_back(std::move(mc));
  }
  const auto path = dir / "manifest.json";
  write_file_atomic(path, serialize_manifest(manifest));
  return path;
}

}  // namespace wizs
