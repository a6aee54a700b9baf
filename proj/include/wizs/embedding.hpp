#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "wizs/error.hpp"

namespace wizs {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Norms at or below this are treated as zero everywhere in the library.
inline constexpr double kZeroNorm = 1e-12;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.derived().array().isFinite().all();
}

/// Cosine similarity of two raw vectors, clamped to [-1, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "cosine of vectors with lengths " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(kZeroNorm)) || !(nb > Scalar(kZeroNorm))) {
    throw Error(ErrorCode::kZeroVector, "cosine with a vector of norm <= 1e-12");
  }
  const Scalar c = a.dot(b) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

/// A unit-norm, finite embedding of dimension >= 2. Only constructible by
/// normalizing a raw vector, so holding one proves it went through ingest.
template <typename Scalar = double>
class Embedding {
 public:
  template <typename Derived>
  static Embedding from_raw(const Eigen::MatrixBase<Derived>& raw) {
    if (raw.size() < 2) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "embedding dimension must be >= 2, got " + std::to_string(raw.size()));
    }
    if (!all_finite(raw)) {
      throw Error(ErrorCode::kNonFinite, "embedding has a NaN or Inf component");
    }
    Vector<Scalar> v = raw.template cast<Scalar>();
    const Scalar n = v.norm();
    if (!(n > Scalar(kZeroNorm))) {
      throw Error(ErrorCode::kZeroVector, "cannot normalize a vector of norm <= 1e-12");
    }
    v /= n;
    return Embedding(std::move(v));
  }

  const Vector<Scalar>& values() const noexcept { return values_; }
  Eigen::Index dim() const noexcept { return values_.size(); }
  Scalar operator[](Eigen::Index i) const { return values_[i]; }

 private:
  explicit Embedding(Vector<Scalar> v) : values_(std::move(v)) {}
  Vector<Scalar> values_;
};

template <typename Derived>
Embedding<typename Derived::Scalar> normalize(const Eigen::MatrixBase<Derived>& v) {
  return Embedding<typename Derived::Scalar>::from_raw(v);
}

/// Arithmetic mean of embeddings. Not unit-norm.
template <typename Scalar = double>
struct MeanVector {
  Vector<Scalar> values;
  Eigen::Index source_count = 0;
};

/// A set of embeddings stored column-wise (dim x count); every column is
/// unit-norm. May be empty, in which case only dim() is meaningful.
template <typename Scalar = double>
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  explicit EmbeddingSet(Eigen::Index dim) : columns_(dim, 0) {}

  template <typename Derived>
  static EmbeddingSet from_raw_columns(const Eigen::MatrixBase<Derived>& raw) {
    EmbeddingSet out(raw.rows());
    out.columns_.resize(raw.rows(), raw.cols());
    for (Eigen::Index k = 0; k < raw.cols(); ++k) {
      try {
        out.columns_.col(k) = Embedding<Scalar>::from_raw(raw.col(k)).values();
      } catch (const Error& e) {
        throw Error(e.code(), "column " + std::to_string(k) + ": " + e.message());
      }
    }
    return out;
  }

  static EmbeddingSet from_embeddings(std::span<const Embedding<Scalar>> items) {
    if (items.empty()) return EmbeddingSet();
    EmbeddingSet out(items.front().dim());
    out.columns_.resize(items.front().dim(), static_cast<Eigen::Index>(items.size()));
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (items[k].dim() != out.dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "embedding set with mixed dimensions");
      }
      out.columns_.col(static_cast<Eigen::Index>(k)) = items[k].values();
    }
    return out;
  }

  const Matrix<Scalar>& matrix() const noexcept { return columns_; }
  auto column(Eigen::Index k) const { return columns_.col(k); }
  Eigen::Index dim() const noexcept { return columns_.rows(); }
  Eigen::Index size() const noexcept { return columns_.cols(); }
  bool empty() const noexcept { return columns_.cols() == 0; }

 private:
  Matrix<Scalar> columns_;
};

template <typename Scalar>
MeanVector<Scalar> mean(const EmbeddingSet<Scalar>& set) {
  if (set.empty()) throw Error(ErrorCode::kEmptySet, "mean of an empty embedding set");
  MeanVector<Scalar> out;
  out.values = set.matrix().rowwise().sum() / Scalar(set.size());
  out.source_count = set.size();
  if (!(out.values.norm() > Scalar(kZeroNorm))) {
    throw Error(ErrorCode::kDegenerateMean, "mean vector has norm <= 1e-12");
  }
  return out;
}

template <typename Scalar>
MeanVector<Scalar> mean(std::span<const Embedding<Scalar>> items) {
  if (items.empty()) throw Error(ErrorCode::kEmptySet, "mean of an empty embedding set");
  return mean(EmbeddingSet<Scalar>::from_embeddings(items));
}

template <typename Scalar>
MeanVector<Scalar> mean(const std::vector<Embedding<Scalar>>& items) {
  return mean(std::span<const Embedding<Scalar>>(items));
}

using Embeddingd = Embedding<double>;
using EmbeddingSetd = EmbeddingSet<double>;

}  // namespace wizs
