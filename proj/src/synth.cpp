#include "wizs/synth.hpp"

#include <fmt/format.h>

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "wizs/error.hpp"
#include "wizs/zeroshot.hpp"

namespace wizs {

namespace {

Eigen::VectorXd gaussian(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

Eigen::MatrixXd cloud(std::mt19937_64& rng, const Eigen::VectorXd& center, double sigma, int count) {
  const int dim = static_cast<int>(center.size());
  Eigen::MatrixXd m(dim, count);
  for (int k = 0; k < count; ++k) {
    m.col(k) = center + sigma * gaussian(rng, dim) / std::sqrt(double(dim));
  }
  return m;
}

void validate(const SynthOptions& o) {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); };
  if (o.n_classes < 2) bad("synthetic family needs >= 2 classes");
  if (o.dim < o.n_classes + 3) bad("synthetic dim must be >= n_classes + 3");
  if (o.n_generated < 1 || o.n_captions < 0 || o.n_real < 0) bad("synthetic counts out of range");
  if (!(o.noise_min >= 0) || !(o.noise_max >= o.noise_min)) bad("need 0 <= noise_min <= noise_max");
  if (!(o.concept_overlap >= 0 && o.concept_overlap < 1)) bad("concept_overlap must be in [0, 1)");
}

}  // namespace

std::vector<double> synth_noise_scales(const SynthOptions& o) {
  validate(o);
  std::vector<double> scales(static_cast<std::size_t>(o.n_classes));
  for (int c = 0; c < o.n_classes; ++c) {
    scales[c] = o.noise_min + (o.noise_max - o.noise_min) * c / double(o.n_classes - 1);
  }
  std::mt19937_64 rng(o.seed ^ 0x5EEDULL);
  std::shuffle(scales.begin(), scales.end(), rng);
  return scales;
}

std::vector<RawClassData> synth_raw(const SynthOptions& o) {
  const auto scales = synth_noise_scales(o);
  std::mt19937_64 rng(o.seed);
  // Random orthonormal frame: one unique direction per class, then the shared
  // concept direction and the two modality offsets. Every pair of classes is
  // then equally far apart, so difficulty comes from the noise scale alone.
  const int n_dirs = o.n_classes + 3;
  Eigen::MatrixXd frame(o.dim, n_dirs);
  for (int k = 0; k < n_dirs; ++k) frame.col(k) = gaussian(rng, o.dim);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(frame).householderQ();
  const Eigen::VectorXd shared = q.col(o.n_classes);
  const Eigen::VectorXd text_offset = o.modality_gap * q.col(o.n_classes + 1);
  const Eigen::VectorXd image_offset = o.modality_gap * q.col(o.n_classes + 2);
  const double unique_weight = std::sqrt(1 - o.concept_overlap * o.concept_overlap);

  std::vector<RawClassData> out;
  for (int c = 0; c < o.n_classes; ++c) {
    const Eigen::VectorXd concept_dir = o.concept_overlap * shared + unique_weight * q.col(c);
    RawClassData d;
    d.meta.class_id = fmt::format("c{}", c);
    d.meta.class_name = fmt::format("synthetic class {}", c);
    d.plain_text = cloud(rng, concept_dir + text_offset, 0.0, 1);
    d.generated_images = cloud(rng, concept_dir + image_offset, scales[c], o.n_generated);
    if (o.n_captions > 0) d.descriptive_texts = cloud(rng, concept_dir + text_offset, scales[c], o.n_captions);
    if (o.n_real > 0) d.real_images = cloud(rng, concept_dir + image_offset, scales[c], o.n_real);
    for (int k = 0; k < o.n_captions; ++k) {
      d.meta.captions.push_back(fmt::format("a photo of a synthetic class {}, variation {}", c, k + 1));
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<ClassEmbeddings<double>> synth_bundle(const SynthOptions& o) {
  std::vector<ClassEmbeddings<double>> out;
  for (const auto& d : synth_raw(o)) {
    const auto dim = d.plain_text.rows();
    auto set = [dim](const Eigen::MatrixXd& m) {
      return m.cols() ? EmbeddingSet<double>::from_raw_columns(m) : EmbeddingSet<double>(dim);
    };
    out.push_back(ClassEmbeddings<double>{d.meta.class_id, Embedding<double>::from_raw(d.plain_text.col(0)),
                                          set(d.generated_images), set(d.descriptive_texts),
                                          set(d.real_images)});
  }
  return out;
}

CalibrationDataset synth_calibration_data(const SynthOptions& base, int n_bundles,
                                          const ScoringConfig& scoring) {
  if (base.n_real < 1) throw Error(ErrorCode::kInvalidArgument, "calibration data needs real images");
  CalibrationDataset data;
  for (int b = 0; b < n_bundles; ++b) {
    SynthOptions o = base;
    o.seed = base.seed + static_cast<std::uint64_t>(b);
    const auto classes = synth_bundle(o);
    const auto scores = score_bundle(classes, scoring, Variant::kImage);
    const auto acc = per_class_accuracy(std::span<const ClassEmbeddings<double>>(classes));
    for (const auto& s : scores) {
      data.points.push_back({s.compound, acc.at(s.class_id), fmt::format("synth-{}", o.seed),
                             s.class_id});
    }
  }
  return data;
}

}  // namespace wizs
