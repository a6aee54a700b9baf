#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wizs/manifest.hpp"
#include "wizs/providers.hpp"

namespace wizs {

/// A dataset described by class names only. Captions may be supplied or
/// left for the text generator; real images are files on disk, labeled by
/// the class that lists them.
struct ClassListEntry {
  std::string class_id;
  std::string class_name;
  std::vector<std::string> captions;
  std::vector<std::string> real_images;  // paths relative to the class list file
};

struct ClassList {
  std::string dataset_id;
  std::string model_id;  // defaults to the embed provider id
  std::string domain;
  std::string prompt_template = std::string(kDefaultPromptTemplate);
  std::vector<ClassListEntry> classes;
};

ClassList parse_class_list(std::string_view json_text, std::string_view source = "class list");

struct IngestOptions {
  int n_images = 0;  // per class; 0 uses the provider set's default
  bool descriptive_texts = true;
};

/// Generates captions and images for every class, embeds plain prompts,
/// captions, generated and real images, and returns a bundle ready for
/// save_bundle. Vectors are stored already normalized.
std::pair<BundleManifest, std::vector<RawClassData>> ingest_class_list(
    const ClassList& list, const std::filesystem::path& base_dir, ProviderSet& providers,
    const IngestOptions& options = {});

/// Re-reads a bundle and returns it in raw form, normalized, for rewriting.
std::vector<RawClassData> bundle_to_raw(const Bundle& bundle);

}  // namespace wizs
