#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wizs/embedding.hpp"
#include "wizs/providers.hpp"

namespace wizs {

inline constexpr int kAlternativesWanted = 10;
inline constexpr int kCaptionRetries = 2;

/// Embeds each text (or image) through the embed provider, one vector per
/// input, normalized. Items are cached individually; misses go out in
/// batches of `embed_batch`, up to `max_concurrency` batches at a time.
std::vector<Embedding<double>> fetch_text_embeddings(const std::vector<std::string>& texts,
                                                     ProviderSet& providers);
std::vector<Embedding<double>> fetch_image_embeddings(const std::vector<std::string>& images,
                                                      ProviderSet& providers);

/// The two-stage caption prompt, both stages joined by a blank line.
/// The domain fills the global-traits slot; `prefix` is the rendered
/// prompt template every caption must start with.
std::string caption_prompt(std::string_view class_name, std::string_view domain, int n,
                           std::string_view prefix);

/// `n` distinct captions starting with `prefix` (case-insensitive). Missing
/// captions are re-requested up to kCaptionRetries times; a shortfall after
/// that throws PartialResult carrying the conforming captions.
std::vector<std::string> generate_captions(std::string_view class_name, std::string_view domain,
                                           int n, Provider& textgen,
                                           std::string_view prefix);

std::string alternatives_prompt(std::string_view query, std::string_view domain = {});

struct Alternatives {
  std::vector<std::string> labels;  // at most kAlternativesWanted, distinct, query excluded
  int duplicates_removed = 0;
  int query_echoes_removed = 0;
};

/// Splits completions into labels, dropping list markers, quotes, blanks,
/// case-insensitive duplicates and echoes of the query.
Alternatives parse_alternatives(const std::vector<std::string>& completions,
                                std::string_view query);
Alternatives generate_alternatives(std::string_view query, std::string_view domain,
                                   Provider& textgen);

/// Generates `n` images for `prompt` (seeds first_seed, first_seed+1, ...),
/// stores them and returns their refs in seed order. A failure after some
/// images succeeded throws PartialResult with the refs before the first
/// failed image.
std::vector<std::string> generate_images(const std::string& prompt, int n,
                                         ProviderSet& providers, std::uint64_t first_seed = 0);

}  // namespace wizs
