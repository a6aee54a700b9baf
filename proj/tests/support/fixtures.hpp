#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

#include <random>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "wizs/scoring.hpp"

namespace fixtures {

using wizs::ClassEmbeddings;
using wizs::Embedding;
using wizs::EmbeddingSet;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd gaussian(std::mt19937_64& rng, Eigen::Index dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

inline MatrixXd gaussian_columns(std::mt19937_64& rng, Eigen::Index dim, Eigen::Index count) {
  MatrixXd m(dim, count);
  for (Eigen::Index k = 0; k < count; ++k) m.col(k) = gaussian(rng, dim);
  return m;
}

inline VectorXd vec(std::initializer_list<double> values) {
  VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

// Columns from a list of small vectors.
inline MatrixXd cols(std::initializer_list<std::initializer_list<double>> columns) {
  const auto dim = static_cast<Eigen::Index>(columns.begin()->size());
  MatrixXd m(dim, static_cast<Eigen::Index>(columns.size()));
  Eigen::Index k = 0;
  for (const auto& c : columns) m.col(k++) = vec(c);
  return m;
}

inline ClassEmbeddings<double> make_class(std::string id, const VectorXd& text,
                                          const MatrixXd& images,
                                          const MatrixXd& captions = MatrixXd(),
                                          const MatrixXd& real = MatrixXd()) {
  const auto d = text.size();
  return ClassEmbeddings<double>{
      std::move(id), Embedding<double>::from_raw(text),
      images.cols() ? EmbeddingSet<double>::from_raw_columns(images) : EmbeddingSet<double>(d),
      captions.cols() ? EmbeddingSet<double>::from_raw_columns(captions)
                      : EmbeddingSet<double>(d),
      real.cols() ? EmbeddingSet<double>::from_raw_columns(real) : EmbeddingSet<double>(d)};
}

// Random bundle: every set non-empty, sizes drawn from [1, max_examples].
inline std::vector<ClassEmbeddings<double>> random_bundle(std::mt19937_64& rng, int n_classes,
                                                          int dim, int max_examples) {
  std::uniform_int_distribution<int> count(1, max_examples);
  std::vector<ClassEmbeddings<double>> out;
  for (int c = 0; c < n_classes; ++c) {
    out.push_back(make_class("class" + std::to_string(c), gaussian(rng, dim),
                             gaussian_columns(rng, dim, count(rng)),
                             gaussian_columns(rng, dim, count(rng)),
                             gaussian_columns(rng, dim, count(rng))));
  }
  return out;
}

inline oracle::Vec to_vec(const Eigen::Ref<const VectorXd>& v) {
  return oracle::Vec(v.data(), v.data() + v.size());
}

inline std::vector<oracle::Class> to_oracle(const std::vector<ClassEmbeddings<double>>& classes,
                                            wizs::Variant variant) {
  std::vector<oracle::Class> out;
  for (const auto& c : classes) {
    oracle::Class o;
    o.id = c.class_id;
    o.text = to_vec(c.plain_text.values());
    const auto& set = variant == wizs::Variant::kImage ? c.images : c.captions;
    for (Eigen::Index k = 0; k < set.size(); ++k) o.examples.push_back(to_vec(set.column(k)));
    out.push_back(std::move(o));
  }
  return out;
}

inline MatrixXd random_rotation(std::mt19937_64& rng, Eigen::Index dim) {
  Eigen::HouseholderQR<MatrixXd> qr(gaussian_columns(rng, dim, dim));
  return qr.householderQ();
}

// Applies `rotation` to every embedding of every class.
inline std::vector<ClassEmbeddings<double>> rotate(
    const std::vector<ClassEmbeddings<double>>& classes, const MatrixXd& rotation) {
  std::vector<ClassEmbeddings<double>> out;
  for (const auto& c : classes) {
    out.push_back(make_class(c.class_id, rotation * c.plain_text.values(),
                             rotation * c.images.matrix(), rotation * c.captions.matrix(),
                             rotation * c.real_images.matrix()));
  }
  return out;
}

// Others of class i, in bundle order.
inline std::vector<ClassEmbeddings<double>> others_of(
    const std::vector<ClassEmbeddings<double>>& classes, std::size_t i) {
  std::vector<ClassEmbeddings<double>> out;
  for (std::size_t j = 0; j < classes.size(); ++j) {
    if (j != i) out.push_back(classes[j]);
  }
  return out;
}

}  // namespace fixtures
