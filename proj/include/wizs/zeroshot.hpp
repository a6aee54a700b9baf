#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wizs/embedding.hpp"
#include "wizs/error.hpp"
#include "wizs/scoring.hpp"

namespace wizs {

namespace detail {

template <typename Scalar>
Matrix<Scalar> text_matrix(std::span<const ClassEmbeddings<Scalar>> classes) {
  if (classes.size() < 2) {
    throw Error(ErrorCode::kNoAlternatives, "classification needs at least 2 classes");
  }
  const Eigen::Index d = classes.front().plain_text.dim();
  Matrix<Scalar> t(d, static_cast<Eigen::Index>(classes.size()));
  for (std::size_t j = 0; j < classes.size(); ++j) {
    if (classes[j].plain_text.dim() != d) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "class '" + classes[j].class_id + "' has text dimension " +
                      std::to_string(classes[j].plain_text.dim()) + ", expected " +
                      std::to_string(d));
    }
    t.col(static_cast<Eigen::Index>(j)) = classes[j].plain_text.values();
  }
  return t;
}

// Index of the best-scoring class; ties go to the smallest class_id.
template <typename Scalar, typename Derived>
std::size_t argmax_class(std::span<const ClassEmbeddings<Scalar>> classes,
                         const Eigen::MatrixBase<Derived>& similarities) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < classes.size(); ++j) {
    const auto sj = similarities[static_cast<Eigen::Index>(j)];
    const auto sb = similarities[static_cast<Eigen::Index>(best)];
    if (sj > sb || (sj == sb && classes[j].class_id < classes[best].class_id)) best = j;
  }
  return best;
}

// Fraction of each class's examples (picked by `select`) classified back to it.
template <typename Scalar, typename Select>
std::map<std::string, double> accuracy_by_class(std::span<const ClassEmbeddings<Scalar>> classes,
                                                Select select, const char* what) {
  const Matrix<Scalar> text = text_matrix(classes);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const EmbeddingSet<Scalar>& set = select(classes[i]);
    if (set.empty()) {
      throw Error(ErrorCode::kEmptyClass, "class '" + classes[i].class_id + "' has no " + what);
    }
    if (set.dim() != text.rows()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "class '" + classes[i].class_id + "': " + what + " dimension mismatch");
    }
    // Columns are unit-norm so the dot products order classes like cosine.
    const Matrix<Scalar> sims = text.transpose() * set.matrix();
    Eigen::Index hits = 0;
    for (Eigen::Index k = 0; k < sims.cols(); ++k) {
      if (argmax_class(classes, sims.col(k)) == i) ++hits;
    }
    if (!out.emplace(classes[i].class_id, double(hits) / double(set.size())).second) {
      throw Error(ErrorCode::kDuplicateClass,
                  "class '" + classes[i].class_id + "' appears twice");
    }
  }
  return out;
}

}  // namespace detail

/// Zero-shot label for one image: the class whose text embedding has the
/// highest cosine with it.
template <typename Scalar, typename Derived>
const std::string& classify(const Eigen::MatrixBase<Derived>& image,
                            std::span<const ClassEmbeddings<Scalar>> classes) {
  const Matrix<Scalar> text = detail::text_matrix(classes);
  if (image.size() != text.rows()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "image dimension " + std::to_string(image.size()) + " != class dimension " +
                    std::to_string(text.rows()));
  }
  const Vector<Scalar> sims = text.transpose() * image.template cast<Scalar>();
  return classes[detail::argmax_class(classes, sims)].class_id;
}

/// Accuracy of zero-shot classification on each class's labeled real images.
template <typename Scalar>
std::map<std::string, double> per_class_accuracy(
    std::span<const ClassEmbeddings<Scalar>> classes) {
  return detail::accuracy_by_class(
      classes, [](const ClassEmbeddings<Scalar>& c) -> const auto& { return c.real_images; },
      "labeled real images");
}

/// Baseline: the same accuracy measured on each class's generated images.
template <typename Scalar>
std::map<std::string, double> generated_zero_shot_baseline(
    std::span<const ClassEmbeddings<Scalar>> classes) {
  return detail::accuracy_by_class(
      classes, [](const ClassEmbeddings<Scalar>& c) -> const auto& { return c.images; },
      "generated images");
}

/// Fractional ranks (1-based); tied values share the average of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

struct CorrelationRow {
  std::string score_kind;  // consistency | silhouette | compound | generated_zero_shot
  Variant variant = Variant::kImage;
  std::optional<double> spearman_rho;  // empty when the row could not be computed
  std::size_t n_classes = 0;
  std::string note;  // why spearman_rho is empty
};

struct CorrelationReport {
  std::string dataset_id;
  std::string model_id;
  std::vector<CorrelationRow> rows;
  std::map<std::string, double> accuracy;  // per-class accuracy on real images
};

struct ReportOptions {
  bool image = true;
  bool text = true;
};

/// Correlates every requested score against real-image accuracy. Rows whose
/// ranks are degenerate are kept with an empty rho and a note; any other
/// failure propagates.
CorrelationReport correlation_report(std::span<const ClassEmbeddings<double>> classes,
                                     const ScoringConfig& cfg, const std::string& dataset_id,
                                     const std::string& model_id,
                                     const ReportOptions& options = {});

std::string report_to_csv(const CorrelationReport& report);
std::string report_to_text(const CorrelationReport& report);

}  // namespace wizs
