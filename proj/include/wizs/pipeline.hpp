#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wizs/calibration.hpp"
#include "wizs/providers.hpp"
#include "wizs/scoring.hpp"

namespace wizs {

enum class JobState {
  kQueued,
  kGeneratingAlternatives,
  kCaptioning,
  kGeneratingImages,
  kEmbedding,
  kScoring,
  kDone,
  kFailed,
};

std::string_view job_state_name(JobState s) noexcept;

/// Legal moves: forward along the listed order (skipping allowed), or to
/// failed from any state other than done and failed.
bool is_valid_transition(JobState from, JobState to) noexcept;

struct PredictionRequest {
  std::string query;
  std::optional<std::vector<std::string>> alternatives;  // generated when absent
  std::string domain;
  std::optional<int> n_images;  // provider config default when absent
};

/// Throws Error(kInvalidArgument) naming the problem: empty query, empty or
/// duplicate alternatives, an alternative equal to the query
/// (case-insensitive), n_images < 1.
void validate_request(const PredictionRequest& request);

struct ClassPrediction {
  std::string class_name;
  double compound = 0;
  double consistency = 0;
  double silhouette = 0;
  std::vector<std::string> captions;
  std::vector<std::string> image_refs;
};

struct PredictionResult {
  std::string query;
  std::string domain;
  std::vector<std::string> alternatives;
  bool alternatives_generated = false;
  int n_images = 0;
  double predicted_accuracy = 0;
  double compound_score = 0;  // the query class's
  std::vector<ClassPrediction> per_class;  // query first, then alternatives in request order
  std::string calibration_model_id;
  std::string calibration_label;
};

using StateCallback = std::function<void(JobState)>;

/// query -> alternatives -> captions -> images -> embeddings -> scores ->
/// calibrated accuracy. `on_state` sees every state entered, in order.
PredictionResult run_prediction(const PredictionRequest& request, ProviderSet& providers,
                                const CalibrationModel& model, const StateCallback& on_state = {},
                                const ScoringConfig& scoring = {});

nlohmann::ordered_json result_to_json(const PredictionResult& result);
/// Human-readable report: accuracy line, per-class table, image refs.
std::string result_to_text(const PredictionResult& result);

}  // namespace wizs
