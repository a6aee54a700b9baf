#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wizs {

/// Maps a score S to the regression features (1, S, S^2, ..., S^degree).
/// Degree 1, the intercept-plus-score map, is the default.
struct FeatureMap {
  int degree = 1;

  Eigen::Index size() const noexcept { return degree + 1; }
  Eigen::VectorXd operator()(double score) const;
  std::string spec() const;  // "polynomial:<degree>"
  static FeatureMap parse(std::string_view spec);

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

inline Eigen::VectorXd featurize(double score, const FeatureMap& map = {}) { return map(score); }

struct CalibrationPoint {
  double score = 0;
  double accuracy = 0;  // in [0, 1]
  std::string dataset_id;
  std::string class_id;
};

struct CalibrationDataset {
  std::vector<CalibrationPoint> points;
};

enum class StopReason {
  kGradientTolerance,  // gradient inf-norm reached the tolerance
  kIterationLimit,     // hit max_iterations first
  kLineSearchStalled,  // no ascent step found before the tolerance
  kConcentrated,       // precision diverged with the mean interpolating the data
};

std::string_view stop_reason_name(StopReason r) noexcept;
StopReason parse_stop_reason(std::string_view name);

struct FitMeta {
  int iterations = 0;
  double final_log_likelihood = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::kIterationLimit;
  double epsilon = 1e-4;
  std::size_t n_points = 0;
};

struct FitOptions {
  double epsilon = 1e-4;  // accuracies are clamped into [epsilon, 1 - epsilon]
  double gradient_tolerance = 1e-8;
  int max_iterations = 10000;
  double armijo = 1e-4;
  FeatureMap feature_map;
};

/// Beta regression: accuracy ~ Beta(exp(X.theta1), exp(X.theta2)).
struct CalibrationModel {
  FeatureMap feature_map;
  Eigen::VectorXd theta1;
  Eigen::VectorXd theta2;
  FitMeta fit_meta;
  std::string statistic = "mean";  // which Beta statistic predict_accuracy reports
  std::string label;               // free-form provenance, e.g. "synthetic"
};

/// Log-likelihood of clamped accuracies under the two-link beta regression,
/// with the parameter vector stacked as (theta1; theta2).
class BetaRegressionObjective {
 public:
  BetaRegressionObjective(const CalibrationDataset& data, const FeatureMap& map,
                          double epsilon = 1e-4);

  Eigen::Index n_params() const noexcept { return 2 * features_.cols(); }
  Eigen::Index n_points() const noexcept { return features_.rows(); }
  const Eigen::MatrixXd& features() const noexcept { return features_; }
  const Eigen::VectorXd& clamped_accuracy() const noexcept { return y_; }

  double value(const Eigen::VectorXd& theta) const;
  // Sum of the absolute per-point terms of value(); scales its rounding error.
  double magnitude(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const;

 private:
  Eigen::MatrixXd features_;  // n x p
  Eigen::VectorXd y_;
  Eigen::VectorXd log_y_;
  Eigen::VectorXd log1m_y_;
};

CalibrationModel fit(const CalibrationDataset& data, const FitOptions& options = {});

/// Mean of the fitted Beta at `score`, strictly inside (0, 1).
double predict_accuracy(const CalibrationModel& model, double score);

struct FoldResult {
  std::string dataset_id;
  double held_out_mae = 0;
  std::size_t n_held_out = 0;
  CalibrationModel model;
};

/// Leave-one-group-out: fit on all other groups, report mean absolute error
/// of predicted vs. true accuracy on the held-out group.
std::vector<FoldResult> loo_cv(std::span<const CalibrationDataset> groups,
                               const FitOptions& options = {});

/// Interchange CSV with header dataset_id,class_id,compound_score,accuracy.
std::string calibration_to_csv(const CalibrationDataset& data);
CalibrationDataset parse_calibration_csv(std::string_view text, std::string_view source = "csv");

std::string save_model(const CalibrationModel& model);
CalibrationModel load_model(std::string_view text);

/// Short content hash identifying a serialized model.
std::string model_id(const CalibrationModel& model);

}  // namespace wizs
