#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wizs/embedding.hpp"
#include "wizs/error.hpp"

namespace wizs {

struct ScoringConfig {
  double lambda = 2.5;  // weight on the image-to-text distance terms
  double alpha = 4.0;   // silhouette scale in the compound score
  int min_images_per_class = 1;

  void validate() const {
    if (!std::isfinite(lambda) || lambda < 0) {
      throw Error(ErrorCode::kInvalidArgument, "lambda must be finite and >= 0");
    }
    if (!std::isfinite(alpha) || alpha < 0) {
      throw Error(ErrorCode::kInvalidArgument, "alpha must be finite and >= 0");
    }
    if (min_images_per_class < 1) {
      throw Error(ErrorCode::kInvalidArgument, "min_images_per_class must be >= 1");
    }
  }
};

/// Everything known about one class. `images` are generated-image embeddings,
/// `captions` descriptive-caption embeddings, `real_images` labeled real-image
/// embeddings (all belonging to this class). Any of the sets may be empty.
template <typename Scalar = double>
struct ClassEmbeddings {
  std::string class_id;
  Embedding<Scalar> plain_text;
  EmbeddingSet<Scalar> images;
  EmbeddingSet<Scalar> captions;
  EmbeddingSet<Scalar> real_images;
};

enum class Variant { kImage, kText };

inline std::string_view variant_name(Variant v) noexcept {
  return v == Variant::kImage ? "image" : "text";
}

struct ClassScores {
  std::string class_id;
  double consistency = 0;
  double silhouette = 0;
  double compound = 0;
  Variant variant = Variant::kImage;
};

inline double compound_score(double consistency, double silhouette, const ScoringConfig& cfg) {
  if (!std::isfinite(consistency) || !std::isfinite(silhouette)) {
    throw Error(ErrorCode::kNonFinite, "compound score of a non-finite input");
  }
  return consistency + cfg.alpha * silhouette;
}

namespace detail {

// One class seen through a variant: its plain-text embedding, the example set
// standing in for images (generated images or descriptive captions) and that
// set's mean.
template <typename Scalar>
struct ClassView {
  const std::string* id;
  const Vector<Scalar>* text;
  const Matrix<Scalar>* examples;
  Vector<Scalar> centroid;
};

template <typename Scalar>
ClassView<Scalar> make_view(const ClassEmbeddings<Scalar>& c, Variant variant,
                            const ScoringConfig& cfg) {
  const EmbeddingSet<Scalar>& set = variant == Variant::kImage ? c.images : c.captions;
  const char* what = variant == Variant::kImage ? "generated-image" : "descriptive-caption";
  if (set.size() < std::max<Eigen::Index>(1, cfg.min_images_per_class)) {
    throw Error(ErrorCode::kMissingEmbeddings,
                "class '" + c.class_id + "' has " + std::to_string(set.size()) + " " + what +
                    " embeddings, need at least " +
                    std::to_string(std::max(1, cfg.min_images_per_class)));
  }
  if (set.dim() != c.plain_text.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "class '" + c.class_id + "': " + what + " dimension " +
                    std::to_string(set.dim()) + " != text dimension " +
                    std::to_string(c.plain_text.dim()));
  }
  try {
    return ClassView<Scalar>{&c.class_id, &c.plain_text.values(), &set.matrix(),
                             mean(set).values};
  } catch (const Error& e) {
    throw Error(e.code(), "class '" + c.class_id + "': " + e.message());
  }
}

template <typename Scalar>
void check_alternatives(const ClassView<Scalar>& target,
                        std::span<const ClassView<Scalar>> others) {
  if (others.empty()) {
    throw Error(ErrorCode::kNoAlternatives,
                "class '" + *target.id + "' has no alternative classes to score against");
  }
  for (const auto& o : others) {
    if (*o.id == *target.id) {
      throw Error(ErrorCode::kDuplicateClass, "class '" + *target.id + "' appears twice");
    }
    if (o.text->size() != target.text->size()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "classes '" + *target.id + "' and '" + *o.id + "' differ in dimension");
    }
  }
}

// Mean over the target's examples of min_j cos(x_k - centroid_j, t_i - t_j).
template <typename Scalar>
Scalar consistency(const ClassView<Scalar>& target, std::span<const ClassView<Scalar>> others) {
  check_alternatives(target, others);
  std::vector<Vector<Scalar>> text_shift;
  text_shift.reserve(others.size());
  for (const auto& o : others) {
    text_shift.push_back(*target.text - *o.text);
    if (!(text_shift.back().norm() > Scalar(kZeroNorm))) {
      throw Error(ErrorCode::kDegenerateDifference,
                  "classes '" + *target.id + "' and '" + *o.id +
                      "' have identical text embeddings");
    }
  }
  const Matrix<Scalar>& x = *target.examples;
  Scalar total = 0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (std::size_t j = 0; j < others.size(); ++j) {
      const Vector<Scalar> image_shift = x.col(k) - others[j].centroid;
      if (!(image_shift.norm() > Scalar(kZeroNorm))) {
        throw Error(ErrorCode::kDegenerateDifference,
                    "example " + std::to_string(k) + " of class '" + *target.id +
                        "' coincides with the centroid of class '" + *others[j].id + "'");
      }
      best = std::min(best, cosine(image_shift, text_shift[j]));
    }
    total += best;
  }
  return total / Scalar(x.cols());
}

// Silhouette-style margin: intra distance a (to own centroid and own text)
// against nearest-other distance b, both mixing image and text terms by lambda.
template <typename Scalar>
Scalar silhouette(const ClassView<Scalar>& target, std::span<const ClassView<Scalar>> others,
                  Scalar lambda) {
  check_alternatives(target, others);
  const Matrix<Scalar>& x = *target.examples;
  Scalar total = 0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const auto xk = x.col(k);
    const Scalar a =
        (1 - cosine(xk, target.centroid)) + lambda * (1 - cosine(xk, *target.text));
    Scalar b = std::numeric_limits<Scalar>::infinity();
    for (const auto& o : others) {
      b = std::min(b, (1 - cosine(xk, o.centroid)) + lambda * (1 - cosine(xk, *o.text)));
    }
    const Scalar denom = std::max(a, b);
    if (!(denom > Scalar(kZeroNorm))) {
      throw Error(ErrorCode::kDegenerateSilhouette,
                  "example " + std::to_string(k) + " of class '" + *target.id +
                      "' is at zero distance from its own and the nearest other class");
    }
    total += (b - a) / denom;
  }
  return total / Scalar(x.cols());
}

template <typename Scalar>
std::vector<ClassView<Scalar>> make_views(std::span<const ClassEmbeddings<Scalar>> classes,
                                          Variant variant, const ScoringConfig& cfg) {
  std::vector<ClassView<Scalar>> views;
  views.reserve(classes.size());
  for (const auto& c : classes) views.push_back(make_view(c, variant, cfg));
  return views;
}

template <typename Scalar>
Scalar score_one(const ClassEmbeddings<Scalar>& target,
                 std::span<const ClassEmbeddings<Scalar>> others, const ScoringConfig& cfg,
                 Variant variant, bool want_silhouette) {
  cfg.validate();
  const auto t = make_view(target, variant, cfg);
  const auto o = make_views(others, variant, cfg);
  const std::span<const ClassView<Scalar>> os(o);
  return want_silhouette ? silhouette(t, os, Scalar(cfg.lambda)) : consistency(t, os);
}

}  // namespace detail

template <typename Scalar>
Scalar consistency_score(const ClassEmbeddings<Scalar>& target,
                         std::span<const ClassEmbeddings<Scalar>> others,
                         const ScoringConfig& cfg = {}) {
  return detail::score_one(target, others, cfg, Variant::kImage, false);
}

template <typename Scalar>
Scalar silhouette_score(const ClassEmbeddings<Scalar>& target,
                        std::span<const ClassEmbeddings<Scalar>> others,
                        const ScoringConfig& cfg = {}) {
  return detail::score_one(target, others, cfg, Variant::kImage, true);
}

/// Consistency with descriptive-caption embeddings standing in for images.
template <typename Scalar>
Scalar text_consistency_score(const ClassEmbeddings<Scalar>& target,
                              std::span<const ClassEmbeddings<Scalar>> others,
                              const ScoringConfig& cfg = {}) {
  return detail::score_one(target, others, cfg, Variant::kText, false);
}

template <typename Scalar>
Scalar text_silhouette_score(const ClassEmbeddings<Scalar>& target,
                             std::span<const ClassEmbeddings<Scalar>> others,
                             const ScoringConfig& cfg = {}) {
  return detail::score_one(target, others, cfg, Variant::kText, true);
}

/// Scores every class against all remaining classes of the bundle. Results
/// follow input order. Per-class failures are collected and rethrown as one
/// error (code of the first failure) listing each class.
template <typename Scalar>
std::vector<ClassScores> score_bundle(std::span<const ClassEmbeddings<Scalar>> classes,
                                      const ScoringConfig& cfg, Variant variant) {
  cfg.validate();
  if (classes.size() < 2) {
    throw Error(ErrorCode::kNoAlternatives,
                "a bundle needs at least 2 classes, got " + std::to_string(classes.size()));
  }
  std::set<std::string_view> seen;
  for (const auto& c : classes) {
    if (!seen.insert(c.class_id).second) {
      throw Error(ErrorCode::kDuplicateClass, "class '" + c.class_id + "' appears twice");
    }
  }

  std::vector<detail::ClassView<Scalar>> views;
  std::optional<Error> first;
  std::string failures;
  auto record = [&](const std::string& id, const Error& e) {
    if (!first) first = e;
    failures += "\n  " + id + ": " + e.message();
  };
  views.reserve(classes.size());
  for (const auto& c : classes) {
    try {
      views.push_back(detail::make_view(c, variant, cfg));
    } catch (const Error& e) {
      record(c.class_id, e);
    }
  }
  if (first) {
    throw Error(first->code(), "cannot score bundle:" + failures);
  }

  std::vector<ClassScores> out;
  out.reserve(classes.size());
  std::vector<detail::ClassView<Scalar>> others;
  others.reserve(views.size() - 1);
  for (std::size_t i = 0; i < views.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < views.size(); ++j) {
      if (j != i) others.push_back(views[j]);
    }
    const std::span<const detail::ClassView<Scalar>> os(others);
    try {
      ClassScores s;
      s.class_id = classes[i].class_id;
      s.variant = variant;
      s.consistency = static_cast<double>(detail::consistency(views[i], os));
      s.silhouette = static_cast<double>(detail::silhouette(views[i], os, Scalar(cfg.lambda)));
      s.compound = compound_score(s.consistency, s.silhouette, cfg);
      out.push_back(std::move(s));
    } catch (const Error& e) {
      record(classes[i].class_id, e);
    }
  }
  if (first) {
    throw Error(first->code(), "cannot score bundle:" + failures);
  }
  return out;
}

template <typename Scalar>
std::vector<ClassScores> score_bundle(const std::vector<ClassEmbeddings<Scalar>>& classes,
                                      const ScoringConfig& cfg, Variant variant) {
  return score_bundle(std::span<const ClassEmbeddings<Scalar>>(classes), cfg, variant);
}

}  // namespace wizs
