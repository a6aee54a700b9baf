#pragma once

#include <Eigen/Core>

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>

#include "wizs/providers.hpp"

namespace wizs {

// Deterministic offline providers. Outputs depend only on the request and
// the seed, never on call order, so pipelines built on them are reproducible.

/// Text vectors are hashed bags of words; images are embedded from the
/// prompt stored in the stub SVG's <desc>, pushed along a fixed modality
/// offset and perturbed by a hash of the image bytes.
class StubEmbedProvider final : public Provider {
 public:
  explicit StubEmbedProvider(int dim = 64, std::uint64_t seed = 0);

  std::string id() const override;
  nlohmann::json call(const nlohmann::json& request) override;

  std::size_t calls() const noexcept { return calls_.load(); }
  Eigen::VectorXd text_vector(std::string_view text) const;
  Eigen::VectorXd image_vector(std::string_view bytes) const;

 private:
  int dim_;
  std::uint64_t seed_;
  std::atomic<std::size_t> calls_{0};
};

/// Answers the alternatives prompt with a numbered list (a fixed insect list
/// for the spotted lanternfly, a hashed pick from a generic pool otherwise,
/// echoing the query once) and the caption prompt with prefix-conforming
/// captions, one per completion.
class StubTextGenProvider final : public Provider {
 public:
  explicit StubTextGenProvider(std::uint64_t seed = 0);

  std::string id() const override;
  nlohmann::json call(const nlohmann::json& request) override;

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::uint64_t seed_;
  std::atomic<std::size_t> calls_{0};
};

/// Returns small SVG documents derived from (prompt, seed, index).
class StubImageGenProvider final : public Provider {
 public:
  explicit StubImageGenProvider(std::uint64_t seed = 0);

  std::string id() const override;
  nlohmann::json call(const nlohmann::json& request) override;

  std::size_t calls() const noexcept { return calls_.load(); }
  static std::string render_svg(std::string_view prompt, std::uint64_t seed);

 private:
  std::uint64_t seed_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace wizs
