#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wizs/blob.hpp"
#include "wizs/scoring.hpp"

namespace wizs {

inline constexpr int kManifestVersion = 1;
inline constexpr std::string_view kDefaultPromptTemplate = "a photo of a {class_name}";

struct EmbeddingRef {
  std::string blob;  // path relative to the manifest's directory
  std::uint64_t count = 0;
};

struct ManifestClass {
  std::string class_id;
  std::string class_name;
  std::vector<std::string> captions;
  std::vector<std::string> image_refs;
  std::optional<EmbeddingRef> plain_text;
  std::optional<EmbeddingRef> generated_images;
  std::optional<EmbeddingRef> descriptive_texts;
  std::optional<EmbeddingRef> real_images;
};

struct BundleManifest {
  std::string dataset_id;
  std::string model_id;
  std::string domain;
  std::string prompt_template = std::string(kDefaultPromptTemplate);
  std::uint32_t dim = 0;
  std::vector<ManifestClass> classes;
};

/// Replaces {class_name} and {domain} in `tmpl`.
std::string render_prompt(std::string_view tmpl, std::string_view class_name,
                          std::string_view domain = {});

/// Parses and validates manifest JSON. Every error names the offending class
/// and field; all problems are reported together.
BundleManifest parse_manifest(std::string_view json_text, std::string_view source = "manifest");
std::string serialize_manifest(const BundleManifest& manifest);

struct Bundle {
  BundleManifest manifest;
  std::vector<ClassEmbeddings<double>> classes;  // manifest order
};

/// Loads the manifest and every referenced blob, normalizing all embeddings.
Bundle load_bundle(const std::filesystem::path& manifest_path);

/// Raw per-class vectors (columns) for writing a bundle to disk.
struct RawClassData {
  ManifestClass meta;  // refs are filled in by save_bundle
  Matrix<double> plain_text;
  Matrix<double> generated_images;
  Matrix<double> descriptive_texts;
  Matrix<double> real_images;
};

/// Writes one blob per non-empty matrix under `dir/blobs/` and the manifest
/// at `dir/manifest.json`; returns the manifest path.
std::filesystem::path save_bundle(const std::filesystem::path& dir, BundleManifest manifest,
                                  const std::vector<RawClassData>& classes);

}  // namespace wizs
