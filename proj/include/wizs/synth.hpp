#pragma once

#include <cstdint>
#include <vector>

#include "wizs/calibration.hpp"
#include "wizs/manifest.hpp"
#include "wizs/scoring.hpp"

namespace wizs {

/// Synthetic embedding family. Each class has a concept direction, all of
/// them pairwise equidistant. Its text embedding sits at the concept plus a
/// shared text offset; its generated images, captions and held-out "real"
/// images scatter around the concept plus a shared image offset (the
/// modality gap) with isotropic noise. The noise
/// scale differs per class, spread evenly over [noise_min, noise_max] and
/// shuffled, so noisier classes are both less consistent and harder to
/// classify.
struct SynthOptions {
  int n_classes = 6;
  int dim = 32;
  int n_generated = 20;
  int n_captions = 20;
  int n_real = 100;
  double noise_min = 0.3;
  double noise_max = 2.5;
  double concept_overlap = 0.8;  // weight of the direction all concepts share
  double modality_gap = 0.5;
  std::uint64_t seed = 0;
};

/// Raw (unnormalized) columns per class, ready for save_bundle. Class ids
/// are "c0", "c1", ...; names "synthetic class k".
std::vector<RawClassData> synth_raw(const SynthOptions& options);

/// The same family loaded the way load_bundle would (all vectors normalized).
std::vector<ClassEmbeddings<double>> synth_bundle(const SynthOptions& options);

/// Per-class noise scales, in class order.
std::vector<double> synth_noise_scales(const SynthOptions& options);

/// (compound score, real-image accuracy) pairs from `n_bundles` synthetic
/// bundles with seeds base.seed, base.seed+1, ...; dataset_id "synth-<seed>".
CalibrationDataset synth_calibration_data(const SynthOptions& base, int n_bundles,
                                          const ScoringConfig& scoring = {});

}  // namespace wizs
