#include "wizs/calibration.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "wizs/error.hpp"
#include "wizs/format.hpp"
#include "wizs/hash.hpp"
#include "wizs/special.hpp"

namespace wizs {

namespace {

constexpr int kModelVersion = 1;
constexpr std::size_t kMinPoints = 10;
// Beyond this linear predictor (alpha or beta > e^30) the fit is treated as
// having left any meaningful precision range.
constexpr double kMaxLinearPredictor = 30.0;
// Log-precision used for the analytic fit of constant accuracies.
constexpr double kConcentratedLogPrecision = 20.0;
constexpr double kInterpolationTolerance = 1e-3;

double mean_from_predictors(double eta1, double eta2) {
  const double m = 1.0 / (1.0 + std::exp(eta2 - eta1));
  return std::clamp(m, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

void validate(const CalibrationDataset& data, const FitOptions& options) {
  if (data.points.size() < kMinPoints) {
    throw Error(ErrorCode::kInsufficientData,
                fmt::format("fit needs at least {} points, got {}", kMinPoints,
                            data.points.size()));
  }
  for (std::size_t i = 0; i < data.points.size(); ++i) {
    const auto& p = data.points[i];
    if (!std::isfinite(p.score) || !std::isfinite(p.accuracy)) {
      throw Error(ErrorCode::kNonFinite, fmt::format("point {} has a non-finite value", i));
    }
    if (p.accuracy < 0 || p.accuracy > 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("point {} has accuracy {} outside [0, 1]", i, p.accuracy));
    }
  }
  const auto [lo, hi] = std::minmax_element(
      data.points.begin(), data.points.end(),
      [](const auto& a, const auto& b) { return a.score < b.score; });
  if (lo->score == hi->score) {
    throw Error(ErrorCode::kInsufficientData, "scores have zero variance");
  }
  if (!(options.epsilon > 0 && options.epsilon < 0.5)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon must lie in (0, 0.5)");
  }
  if (options.feature_map.degree < 1) {
    throw Error(ErrorCode::kInvalidArgument, "feature map degree must be >= 1");
  }
}

}  // namespace

Eigen::VectorXd FeatureMap::operator()(double score) const {
  Eigen::VectorXd x(size());
  double power = 1;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = power;
    power *= score;
  }
  return x;
}

std::string FeatureMap::spec() const { return "polynomial:" + std::to_string(degree); }

FeatureMap FeatureMap::parse(std::string_view spec) {
  constexpr std::string_view prefix = "polynomial:";
  if (spec.substr(0, prefix.size()) != prefix) {
    throw Error(ErrorCode::kInvalidArgument, "unknown feature map '" + std::string(spec) + "'");
  }
  const double d = parse_double(spec.substr(prefix.size()));
  if (d < 1 || d > 8 || d != std::floor(d)) {
    throw Error(ErrorCode::kInvalidArgument, "bad feature map degree in '" + std::string(spec) + "'");
  }
  return FeatureMap{static_cast<int>(d)};
}

std::string_view stop_reason_name(StopReason r) noexcept {
  switch (r) {
    case StopReason::kGradientTolerance: return "gradient_tolerance";
    case StopReason::kIterationLimit: return "iteration_limit";
    case StopReason::kLineSearchStalled: return "line_search_stalled";
    case StopReason::kConcentrated: return "concentrated";
  }
  return "unknown";
}

StopReason parse_stop_reason(std::string_view name) {
  for (auto r : {StopReason::kGradientTolerance, StopReason::kIterationLimit,
                 StopReason::kLineSearchStalled, StopReason::kConcentrated}) {
    if (stop_reason_name(r) == name) return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown stop reason '" + std::string(name) + "'");
}

BetaRegressionObjective::BetaRegressionObjective(const CalibrationDataset& data,
                                                 const FeatureMap& map, double epsilon) {
  const auto n = static_cast<Eigen::Index>(data.points.size());
  features_.resize(n, map.size());
  y_.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& p = data.points[static_cast<std::size_t>(j)];
    features_.row(j) = map(p.score).transpose();
    y_[j] = std::clamp(p.accuracy, epsilon, 1 - epsilon);
  }
  log_y_ = y_.array().log();
  log1m_y_ = (-y_.array()).log1p();
}

double BetaRegressionObjective::value(const Eigen::VectorXd& theta) const {
  const Eigen::Index p = features_.cols();
  const Eigen::VectorXd eta1 = features_ * theta.head(p);
  const Eigen::VectorXd eta2 = features_ * theta.tail(p);
  double total = 0;
  for (Eigen::Index j = 0; j < y_.size(); ++j) {
    const double a = std::exp(eta1[j]);
    const double b = std::exp(eta2[j]);
    total += std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1) * log_y_[j] +
             (b - 1) * log1m_y_[j];
  }
  return std::isfinite(total) ? total : -std::numeric_limits<double>::infinity();
}

double BetaRegressionObjective::magnitude(const Eigen::VectorXd& theta) const {
  const Eigen::Index p = features_.cols();
  const Eigen::VectorXd eta1 = features_ * theta.head(p);
  const Eigen::VectorXd eta2 = features_ * theta.tail(p);
  double total = 0;
  for (Eigen::Index j = 0; j < y_.size(); ++j) {
    const double a = std::exp(eta1[j]);
    const double b = std::exp(eta2[j]);
    total += std::abs(std::lgamma(a + b)) + std::abs(std::lgamma(a)) + std::abs(std::lgamma(b)) +
             std::abs((a - 1) * log_y_[j]) + std::abs((b - 1) * log1m_y_[j]);
  }
  return total;
}

Eigen::VectorXd BetaRegressionObjective::gradient(const Eigen::VectorXd& theta) const {
  const Eigen::Index p = features_.cols();
  const Eigen::VectorXd eta1 = features_ * theta.head(p);
  const Eigen::VectorXd eta2 = features_ * theta.tail(p);
  Eigen::VectorXd g1(y_.size()), g2(y_.size());
  for (Eigen::Index j = 0; j < y_.size(); ++j) {
    const double a = std::exp(eta1[j]);
    const double b = std::exp(eta2[j]);
    g1[j] = a * (digamma_difference(a, b) + log_y_[j]);
    g2[j] = b * (digamma_difference(b, a) + log1m_y_[j]);
  }
  Eigen::VectorXd out(2 * p);
  out.head(p) = features_.transpose() * g1;
  out.tail(p) = features_.transpose() * g2;
  return out;
}

Eigen::MatrixXd BetaRegressionObjective::hessian(const Eigen::VectorXd& theta) const {
  const Eigen::Index p = features_.cols();
  const Eigen::VectorXd eta1 = features_ * theta.head(p);
  const Eigen::VectorXd eta2 = features_ * theta.tail(p);
  Eigen::VectorXd h11(y_.size()), h22(y_.size()), h12(y_.size());
  for (Eigen::Index j = 0; j < y_.size(); ++j) {
    const double a = std::exp(eta1[j]);
    const double b = std::exp(eta2[j]);
    const double tri_ab = trigamma(a + b);
    h11[j] = a * (digamma_difference(a, b) + log_y_[j]) + a * a * (tri_ab - trigamma(a));
    h22[j] = b * (digamma_difference(b, a) + log1m_y_[j]) + b * b * (tri_ab - trigamma(b));
    h12[j] = a * b * tri_ab;
  }
  Eigen::MatrixXd h(2 * p, 2 * p);
  h.topLeftCorner(p, p) = features_.transpose() * h11.asDiagonal() * features_;
  h.bottomRightCorner(p, p) = features_.transpose() * h22.asDiagonal() * features_;
  h.topRightCorner(p, p) = features_.transpose() * h12.asDiagonal() * features_;
  h.bottomLeftCorner(p, p) = h.topRightCorner(p, p).transpose();
  return h;
}

CalibrationModel fit(const CalibrationDataset& data, const FitOptions& options) {
  validate(data, options);
  const BetaRegressionObjective objective(data, options.feature_map, options.epsilon);
  const Eigen::Index p = options.feature_map.size();

  CalibrationModel model;
  model.feature_map = options.feature_map;
  model.fit_meta.epsilon = options.epsilon;
  model.fit_meta.n_points = data.points.size();

  const Eigen::VectorXd& y = objective.clamped_accuracy();
  if ((y.array() == y[0]).all()) {
    // Constant accuracies: the likelihood grows without bound as precision
    // increases with the mean pinned at that constant.
    model.theta1 = Eigen::VectorXd::Zero(p);
    model.theta2 = Eigen::VectorXd::Zero(p);
    model.theta1[0] = std::log(y[0]) + kConcentratedLogPrecision;
    model.theta2[0] = std::log1p(-y[0]) + kConcentratedLogPrecision;
    Eigen::VectorXd theta(2 * p);
    theta << model.theta1, model.theta2;
    model.fit_meta.final_log_likelihood = objective.value(theta);
    model.fit_meta.converged = true;
    model.fit_meta.stop_reason = StopReason::kConcentrated;
    return model;
  }

  const Eigen::MatrixXd& x = objective.features();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(2 * p);
  double f = objective.value(theta);
  if (!std::isfinite(f)) {
    throw Error(ErrorCode::kSingularFit, "log-likelihood is not finite at the starting point");
  }
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  StopReason reason = StopReason::kIterationLimit;
  int iteration = 0;
  for (; iteration < options.max_iterations; ++iteration) {
    const Eigen::VectorXd g = objective.gradient(theta);
    if (!g.allFinite()) {
      throw Error(ErrorCode::kSingularFit,
                  fmt::format("gradient became non-finite at iteration {} (epsilon = {})",
                              iteration, options.epsilon));
    }
    if (g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
      reason = StopReason::kGradientTolerance;
      break;
    }

    // Newton direction when -H is positive definite, plain gradient otherwise.
    Eigen::VectorXd direction = g;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(-objective.hessian(theta));
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        (ldlt.vectorD().array() > 0).all()) {
      Eigen::VectorXd d = ldlt.solve(g);
      if (d.allFinite() && g.dot(d) > 0) direction = std::move(d);
    }
    const double slope = g.dot(direction);

    double step = 1;
    bool accepted = false;
    Eigen::VectorXd candidate;
    double fc = 0;
    // Once the predicted gain is below the rounding noise of f, Armijo
    // comparisons are decided by that noise; take the full step instead if it
    // loses no more than the noise and shrinks the gradient.
    const double noise = 64 * kEps * objective.magnitude(theta);
    if (slope <= noise) {
      candidate = theta + direction;
      fc = objective.value(candidate);
      accepted = std::isfinite(fc) && fc >= f - noise &&
                 objective.gradient(candidate).lpNorm<Eigen::Infinity>() <
                     g.lpNorm<Eigen::Infinity>();
    }
    for (int halving = 0; !accepted && halving < 60; ++halving, step *= 0.5) {
      candidate = theta + step * direction;
      fc = objective.value(candidate);
      accepted = std::isfinite(fc) && fc >= f + options.armijo * step * slope;
    }
    if (!accepted) {
      reason = StopReason::kLineSearchStalled;
      break;
    }
    theta = std::move(candidate);
    f = fc;

    const Eigen::VectorXd eta1 = x * theta.head(p);
    const Eigen::VectorXd eta2 = x * theta.tail(p);
    const double reach = std::max(eta1.cwiseAbs().maxCoeff(), eta2.cwiseAbs().maxCoeff());
    if (reach > kMaxLinearPredictor) {
      double worst = 0;
      for (Eigen::Index j = 0; j < y.size(); ++j) {
        worst = std::max(worst, std::abs(mean_from_predictors(eta1[j], eta2[j]) - y[j]));
      }
      if (worst <= kInterpolationTolerance) {
        reason = StopReason::kConcentrated;
        ++iteration;
        break;
      }
      throw Error(ErrorCode::kSingularFit,
                  fmt::format("coefficients diverged (|X.theta| = {:.3g}) at iteration {}; "
                              "accuracies were clamped with epsilon = {}",
                              reach, iteration + 1, options.epsilon));
    }
  }

  model.theta1 = theta.head(p);
  model.theta2 = theta.tail(p);
  model.fit_meta.iterations = iteration;
  model.fit_meta.final_log_likelihood = f;
  model.fit_meta.stop_reason = reason;
  model.fit_meta.converged =
      reason == StopReason::kGradientTolerance || reason == StopReason::kConcentrated;
  return model;
}

double predict_accuracy(const CalibrationModel& model, double score) {
  if (!model.fit_meta.converged) {
    throw Error(ErrorCode::kUnconvergedModel,
                fmt::format("model stopped with {} after {} iterations",
                            stop_reason_name(model.fit_meta.stop_reason),
                            model.fit_meta.iterations));
  }
  if (model.theta1.size() != model.feature_map.size() ||
      model.theta2.size() != model.feature_map.size()) {
    throw Error(ErrorCode::kInvalidArgument, "coefficient length does not match feature map");
  }
  if (!std::isfinite(score)) throw Error(ErrorCode::kNonFinite, "score is not finite");
  const Eigen::VectorXd x = model.feature_map(score);
  return mean_from_predictors(x.dot(model.theta1), x.dot(model.theta2));
}

std::vector<FoldResult> loo_cv(std::span<const CalibrationDataset> groups,
                               const FitOptions& options) {
  if (groups.size() < 3) {
    throw Error(ErrorCode::kInsufficientGroups,
                fmt::format("leave-one-out needs at least 3 groups, got {}", groups.size()));
  }
  std::vector<FoldResult> out;
  out.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    FoldResult fold;
    fold.dataset_id = groups[g].points.empty() || groups[g].points.front().dataset_id.empty()
                          ? fmt::format("group{}", g)
                          : groups[g].points.front().dataset_id;
    if (groups[g].points.empty()) {
      throw Error(ErrorCode::kInsufficientData, "fold '" + fold.dataset_id + "' is empty");
    }
    CalibrationDataset train;
    for (std::size_t h = 0; h < groups.size(); ++h) {
      if (h == g) continue;
      train.points.insert(train.points.end(), groups[h].points.begin(), groups[h].points.end());
    }
    try {
      fold.model = fit(train, options);
      double total = 0;
      for (const auto& p : groups[g].points) {
        total += std::abs(predict_accuracy(fold.model, p.score) - p.accuracy);
      }
      fold.n_held_out = groups[g].points.size();
      fold.held_out_mae = total / double(fold.n_held_out);
    } catch (const Error& e) {
      throw Error(e.code(), "fold '" + fold.dataset_id + "': " + e.message());
    }
    out.push_back(std::move(fold));
  }
  return out;
}

namespace {

nlohmann::json to_array(const Eigen::VectorXd& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd from_array(const nlohmann::json& arr, const char* field) {
  if (!arr.is_array()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("model field '") + field +
                                                 "' must be an array");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("model field '") + field + "' has a non-numeric entry");
    }
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

}  // namespace

std::string calibration_to_csv(const CalibrationDataset& data) {
  std::string out = csv_row({"dataset_id", "class_id", "compound_score", "accuracy"});
  for (const auto& p : data.points) {
    out += csv_row({p.dataset_id, p.class_id, format_double(p.score), format_double(p.accuracy)});
  }
  return out;
}

CalibrationDataset parse_calibration_csv(std::string_view text, std::string_view source) {
  const auto rows = parse_csv(text);
  const std::vector<std::string> header{"dataset_id", "class_id", "compound_score", "accuracy"};
  if (rows.empty() || rows.front() != header) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("{}: header must be dataset_id,class_id,compound_score,accuracy", source));
  }
  CalibrationDataset data;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    // Rows are numbered as a spreadsheet would show them.
    if (row.size() != header.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("{} row {}: expected 4 fields, got {}", source, r + 1, row.size()));
    }
    CalibrationPoint p;
    p.dataset_id = row[0];
    p.class_id = row[1];
    try {
      p.score = parse_double(row[2]);
      p.accuracy = parse_double(row[3]);
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("{} row {} (class '{}'): {}", source, r + 1, p.class_id, e.message()));
    }
    data.points.push_back(std::move(p));
  }
  if (data.points.empty()) {
    throw Error(ErrorCode::kInsufficientData, fmt::format("{}: no data rows", source));
  }
  return data;
}

std::string save_model(const CalibrationModel& model) {
  nlohmann::ordered_json j;
  j["format"] = "wizs-calibration";
  j["version"] = kModelVersion;
  j["label"] = model.label;
  j["feature_map"] = model.feature_map.spec();
  j["statistic"] = model.statistic;
  j["theta1"] = to_array(model.theta1);
  j["theta2"] = to_array(model.theta2);
  j["fit_meta"] = {
      {"iterations", model.fit_meta.iterations},
      {"final_log_likelihood", model.fit_meta.final_log_likelihood},
      {"converged", model.fit_meta.converged},
      {"stop_reason", stop_reason_name(model.fit_meta.stop_reason)},
      {"epsilon", model.fit_meta.epsilon},
      {"n_points", model.fit_meta.n_points},
  };
  return j.dump(2) + "\n";
}

CalibrationModel load_model(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("calibration model is not JSON: ") +
                                                 e.what());
  }
  try {
    if (j.at("format") != "wizs-calibration") {
      throw Error(ErrorCode::kInvalidArgument, "not a calibration model document");
    }
    if (j.at("version").get<int>() != kModelVersion) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("unsupported calibration model version {}",
                              j.at("version").get<int>()));
    }
    CalibrationModel m;
    m.label = j.value("label", "");
    m.feature_map = FeatureMap::parse(j.at("feature_map").get<std::string>());
    m.statistic = j.at("statistic").get<std::string>();
    if (m.statistic != "mean") {
      throw Error(ErrorCode::kInvalidArgument, "unsupported statistic '" + m.statistic + "'");
    }
    m.theta1 = from_array(j.at("theta1"), "theta1");
    m.theta2 = from_array(j.at("theta2"), "theta2");
    if (m.theta1.size() != m.feature_map.size() || m.theta2.size() != m.feature_map.size()) {
      throw Error(ErrorCode::kInvalidArgument, "coefficient length does not match feature map");
    }
    const auto& meta = j.at("fit_meta");
    m.fit_meta.iterations = meta.at("iterations").get<int>();
    m.fit_meta.final_log_likelihood = meta.at("final_log_likelihood").get<double>();
    m.fit_meta.converged = meta.at("converged").get<bool>();
    m.fit_meta.stop_reason = parse_stop_reason(meta.at("stop_reason").get<std::string>());
    m.fit_meta.epsilon = meta.at("epsilon").get<double>();
    m.fit_meta.n_points = meta.at("n_points").get<std::size_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed calibration model: ") +
                                                 e.what());
  }
}

std::string model_id(const CalibrationModel& model) {
  return sha256_hex(save_model(model)).substr(0, 12);
}

}  // namespace wizs
