// Batch entry points over the wizs library.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wizs/blob.hpp"
#include "wizs/calibration.hpp"
#include "wizs/error.hpp"
#include "wizs/format.hpp"
#include "wizs/ingest.hpp"
#include "wizs/log.hpp"
#include "wizs/manifest.hpp"
#include "wizs/pipeline.hpp"
#include "wizs/providers.hpp"
#include "wizs/scoring.hpp"
#include "wizs/zeroshot.hpp"

namespace fs = std::filesystem;
using wizs::Error;
using wizs::ErrorCode;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitComputation = 3;
constexpr int kExitProvider = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kProviderUnavailable:
    case ErrorCode::kProviderShapeError:
    case ErrorCode::kPartialResult:
      return kExitProvider;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kIo:
    case ErrorCode::kInvalidManifest:
    case ErrorCode::kCorruptBlob:
    case ErrorCode::kMissingBlob:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kDuplicateClass:
    case ErrorCode::kMissingEmbeddings:
    case ErrorCode::kEmptyClass:
    case ErrorCode::kNoAlternatives:
    case ErrorCode::kInsufficientData:
    case ErrorCode::kInsufficientGroups:
    case ErrorCode::kUnconvergedModel:
    case ErrorCode::kZeroVector:
    case ErrorCode::kNonFinite:
      return kExitValidation;
    default:
      return kExitComputation;
  }
}

// "-" means stdout.
void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
    return;
  }
  // Devices and pipes are written in place; renaming over them would replace the node.
  std::error_code ec;
  const auto st = fs::status(out, ec);
  if (fs::exists(st) && !fs::is_regular_file(st)) {
    std::ofstream f(out, std::ios::binary);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw Error(ErrorCode::kIo, "cannot write '" + out + "'");
    return;
  }
  wizs::write_file_atomic(out, text);
}

wizs::CalibrationModel read_model(const fs::path& path) {
  std::string text;
  try {
    text = wizs::read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidArgument, "calibration model: " + e.message());
  }
  auto model = wizs::load_model(text);
  if (!model.fit_meta.converged) {
    throw Error(ErrorCode::kUnconvergedModel,
                fmt::format("calibration model {} did not converge ({})", path.string(),
                            wizs::stop_reason_name(model.fit_meta.stop_reason)));
  }
  return model;
}

wizs::ProviderConfig read_providers(const fs::path& path) {
  if (path.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no provider config: pass --providers or set WIZS_PROVIDERS");
  }
  return wizs::load_provider_config(path);
}

std::vector<wizs::Variant> variants_for(const std::string& v) {
  if (v == "image") return {wizs::Variant::kImage};
  if (v == "text") return {wizs::Variant::kText};
  return {wizs::Variant::kImage, wizs::Variant::kText};
}

struct ScoringFlags {
  double lambda = wizs::ScoringConfig{}.lambda;
  double alpha = wizs::ScoringConfig{}.alpha;

  void add(CLI::App* cmd) {
    cmd->add_option("--lambda", lambda, "Weight on image-to-text distances in the silhouette")
        ->capture_default_str();
    cmd->add_option("--alpha", alpha, "Silhouette scale in the compound score")->capture_default_str();
  }
  wizs::ScoringConfig config() const {
    wizs::ScoringConfig c;
    c.lambda = lambda;
    c.alpha = alpha;
    c.validate();
    return c;
  }
};

// Indices of bundle classes sorted by class_id.
std::vector<std::size_t> by_class_id(const wizs::Bundle& bundle) {
  std::vector<std::size_t> order(bundle.classes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bundle.classes[a].class_id < bundle.classes[b].class_id;
  });
  return order;
}

// ---- ingest

struct IngestArgs {
  std::string manifest;
  std::string classes;
  std::string out;
  std::string providers;
  int n_images = 0;
  bool no_descriptive = false;
};

int run_ingest(const IngestArgs& a) {
  fs::path written;
  if (!a.manifest.empty()) {
    const auto bundle = wizs::load_bundle(a.manifest);
    written = wizs::save_bundle(a.out, bundle.manifest, wizs::bundle_to_raw(bundle));
  } else {
    const auto list = wizs::parse_class_list(wizs::read_file(a.classes), a.classes);
    auto providers = wizs::make_providers(read_providers(a.providers));
    wizs::IngestOptions opts;
    opts.n_images = a.n_images;
    opts.descriptive_texts = !a.no_descriptive;
    auto [manifest, raw] = wizs::ingest_class_list(list, fs::path(a.classes).parent_path(), providers, opts);
    written = wizs::save_bundle(a.out, std::move(manifest), raw);
  }
  // Reload to prove the written bundle is self-consistent.
  const auto check = wizs::load_bundle(written);
  std::size_t images = 0, texts = 0, real = 0;
  for (const auto& c : check.classes) {
    images += c.images.size();
    texts += c.captions.size();
    real += c.real_images.size();
  }
  fmt::print("{}\ndataset={} model={} dim={} classes={} generated_images={} descriptive_texts={} real_images={}\n",
             written.string(), check.manifest.dataset_id, check.manifest.model_id, check.manifest.dim,
             check.classes.size(), images, texts, real);
  return kExitOk;
}

// ---- score

struct ScoreArgs {
  std::string manifest;
  std::string variant = "image";
  std::string out = "-";
  ScoringFlags scoring;
};

int run_score(const ScoreArgs& a) {
  const auto bundle = wizs::load_bundle(a.manifest);
  const auto cfg = a.scoring.config();
  std::map<wizs::Variant, std::vector<wizs::ClassScores>> by_variant;
  for (auto v : variants_for(a.variant)) {
    by_variant[v] = wizs::score_bundle(std::span<const wizs::ClassEmbeddings<double>>(bundle.classes), cfg, v);
  }
  std::string csv = wizs::csv_row({"class_id", "variant", "consistency", "silhouette", "compound"});
  for (auto i : by_class_id(bundle)) {
    for (const auto& [v, scores] : by_variant) {
      const auto& s = scores[i];
      csv += wizs::csv_row({s.class_id, std::string(wizs::variant_name(v)), wizs::format_double(s.consistency),
                            wizs::format_double(s.silhouette), wizs::format_double(s.compound)});
    }
  }
  emit(a.out, csv);
  return kExitOk;
}

// ---- eval

struct EvalArgs {
  std::string manifest;
  std::string out = "-";
  std::string variant = "both";
  std::string calibration_out;
  std::string format = "csv";
  ScoringFlags scoring;
};

int run_eval(const EvalArgs& a) {
  const auto bundle = wizs::load_bundle(a.manifest);
  const auto cfg = a.scoring.config();
  const std::span<const wizs::ClassEmbeddings<double>> classes(bundle.classes);
  wizs::ReportOptions opts;
  opts.image = a.variant != "text";
  opts.text = a.variant != "image";
  const auto report =
      wizs::correlation_report(classes, cfg, bundle.manifest.dataset_id, bundle.manifest.model_id, opts);
  for (const auto& row : report.rows) {
    if (!row.spearman_rho) {
      wizs::logger()->warn("{} {}: no correlation: {}", row.score_kind, wizs::variant_name(row.variant), row.note);
    }
  }
  emit(a.out, a.format == "text" ? wizs::report_to_text(report) : wizs::report_to_csv(report));
  if (!a.calibration_out.empty()) {
    const auto scores = wizs::score_bundle(classes, cfg, wizs::Variant::kImage);
    wizs::CalibrationDataset data;
    for (auto i : by_class_id(bundle)) {
      data.points.push_back({scores[i].compound, report.accuracy.at(scores[i].class_id),
                             bundle.manifest.dataset_id, scores[i].class_id});
    }
    emit(a.calibration_out, wizs::calibration_to_csv(data));
  }
  return kExitOk;
}

// ---- fit-calibration

struct FitArgs {
  std::vector<std::string> scores;
  std::string out;
  bool loo = false;
  int degree = 1;
  std::string label;
  double epsilon = wizs::FitOptions{}.epsilon;
  int max_iterations = wizs::FitOptions{}.max_iterations;
};

int run_fit(const FitArgs& a) {
  if (a.loo && a.scores.size() < 3) {
    throw Error(ErrorCode::kInsufficientGroups,
                fmt::format("--loo needs at least 3 score files (one per dataset), got {}", a.scores.size()));
  }
  std::vector<wizs::CalibrationDataset> groups;
  wizs::CalibrationDataset all;
  for (const auto& path : a.scores) {
    std::string text;
    try {
      text = wizs::read_file(path);
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidArgument, e.message());
    }
    groups.push_back(wizs::parse_calibration_csv(text, path));
    all.points.insert(all.points.end(), groups.back().points.begin(), groups.back().points.end());
  }
  wizs::FitOptions opts;
  opts.epsilon = a.epsilon;
  opts.max_iterations = a.max_iterations;
  opts.feature_map.degree = a.degree;

  if (a.loo) {
    const auto folds = wizs::loo_cv(groups, opts);
    std::size_t width = 10;
    for (const auto& f : folds) width = std::max(width, f.dataset_id.size());
    fmt::print("{:<{}}  {:>8}  {:>10}\n", "held_out", width, "n", "mae");
    double total = 0;
    for (const auto& f : folds) {
      fmt::print("{:<{}}  {:>8}  {:>10.6f}\n", f.dataset_id, width, f.n_held_out, f.held_out_mae);
      total += f.held_out_mae;
    }
    fmt::print("{:<{}}  {:>8}  {:>10.6f}\n", "mean", width, "", total / double(folds.size()));
  }

  auto model = wizs::fit(all, opts);
  model.label = a.label;
  if (!model.fit_meta.converged) {
    throw Error(ErrorCode::kSingularFit,
                fmt::format("fit did not converge: {} after {} iterations",
                            wizs::stop_reason_name(model.fit_meta.stop_reason), model.fit_meta.iterations));
  }
  wizs::write_file_atomic(a.out, wizs::save_model(model));
  fmt::print("model {} written to {} ({} points, {} iterations, {})\n", wizs::model_id(model), a.out,
             model.fit_meta.n_points, model.fit_meta.iterations,
             wizs::stop_reason_name(model.fit_meta.stop_reason));
  return kExitOk;
}

// ---- predict

struct PredictArgs {
  std::string query;
  std::vector<std::string> alternatives;
  std::string domain;
  std::string providers;
  std::string calibration;
  int n_images = 0;
  std::string format = "text";
  std::string out = "-";
};

int run_predict(const PredictArgs& a) {
  wizs::PredictionRequest req;
  req.query = a.query;
  req.domain = a.domain;
  if (!a.alternatives.empty()) req.alternatives = a.alternatives;
  if (a.n_images > 0) req.n_images = a.n_images;
  wizs::validate_request(req);
  const auto model = read_model(a.calibration);
  auto providers = wizs::make_providers(read_providers(a.providers));
  const auto result = wizs::run_prediction(req, providers, model);
  emit(a.out, a.format == "json" ? wizs::result_to_json(result).dump(2) + "\n" : wizs::result_to_text(result));
  return kExitOk;
}

// ---- report

struct ReportArgs {
  std::string manifest;
  std::string calibration;
  std::string out = "-";
  int grid = 9;
  double grid_min = -1;
  double grid_max = 3;
  ScoringFlags scoring;
};

std::string manifest_report(const ReportArgs& a) {
  const auto bundle = wizs::load_bundle(a.manifest);
  const auto cfg = a.scoring.config();
  const std::span<const wizs::ClassEmbeddings<double>> classes(bundle.classes);
  const bool have_real = std::all_of(classes.begin(), classes.end(), [](const auto& c) { return !c.real_images.empty(); });
  const bool have_text = std::all_of(classes.begin(), classes.end(), [](const auto& c) { return !c.captions.empty(); });

  std::string out = fmt::format("dataset: {}\nmodel: {}\nclasses: {}\nlambda: {}\nalpha: {}\n\n",
                                bundle.manifest.dataset_id, bundle.manifest.model_id, classes.size(),
                                wizs::format_double(cfg.lambda), wizs::format_double(cfg.alpha));
  const auto image = wizs::score_bundle(classes, cfg, wizs::Variant::kImage);
  std::optional<std::vector<wizs::ClassScores>> text;
  if (have_text) text = wizs::score_bundle(classes, cfg, wizs::Variant::kText);
  std::map<std::string, double> accuracy;
  if (have_real) accuracy = wizs::per_class_accuracy(classes);

  std::size_t width = 8;
  for (const auto& c : classes) width = std::max(width, c.class_id.size());
  out += fmt::format("{:<{}}  {:>12}  {:>12}  {:>12}", "class_id", width, "compound", "consistency", "silhouette");
  if (text) out += fmt::format("  {:>13}", "text_compound");
  if (have_real) out += fmt::format("  {:>9}", "accuracy");
  out += '\n';
  for (auto i : by_class_id(bundle)) {
    out += fmt::format("{:<{}}  {:>12.6f}  {:>12.6f}  {:>12.6f}", image[i].class_id, width, image[i].compound,
                       image[i].consistency, image[i].silhouette);
    if (text) out += fmt::format("  {:>13.6f}", (*text)[i].compound);
    if (have_real) out += fmt::format("  {:>9.4f}", accuracy.at(image[i].class_id));
    out += '\n';
  }
  if (have_real) {
    wizs::ReportOptions opts;
    opts.text = have_text;
    out += '\n';
    out += wizs::report_to_text(
        wizs::correlation_report(classes, cfg, bundle.manifest.dataset_id, bundle.manifest.model_id, opts));
  }
  return out;
}

std::string calibration_report(const ReportArgs& a) {
  const auto text = wizs::read_file(a.calibration);
  const auto model = wizs::load_model(text);
  const auto& m = model.fit_meta;
  std::string out = fmt::format(
      "model: {}\nlabel: {}\nfeature_map: {}\nstatistic: {}\nn_points: {}\niterations: {}\nconverged: {}\n"
      "stop_reason: {}\nlog_likelihood: {}\nepsilon: {}\n",
      wizs::model_id(model), model.label.empty() ? "(none)" : model.label, model.feature_map.spec(),
      model.statistic, m.n_points, m.iterations, m.converged ? "yes" : "no", wizs::stop_reason_name(m.stop_reason),
      wizs::format_double(m.final_log_likelihood), wizs::format_double(m.epsilon));
  if (!m.converged) return out;
  if (a.grid < 2 || !(a.grid_max > a.grid_min)) {
    throw Error(ErrorCode::kInvalidArgument, "--grid needs at least 2 points and --grid-max > --grid-min");
  }
  out += fmt::format("\n{:>10}  {:>18}\n", "score", "predicted_accuracy");
  for (int k = 0; k < a.grid; ++k) {
    const double s = a.grid_min + (a.grid_max - a.grid_min) * k / (a.grid - 1);
    out += fmt::format("{:>10.4f}  {:>18.6f}\n", s, wizs::predict_accuracy(model, s));
  }
  return out;
}

int run_report(const ReportArgs& a) {
  std::string out;
  if (!a.manifest.empty()) out += manifest_report(a);
  if (!a.calibration.empty()) {
    if (!out.empty()) out += '\n';
    out += calibration_report(a);
  }
  emit(a.out, out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predicts zero-shot accuracy of vision-language models from generated data."};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "Log level on stderr")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  auto* sub_ingest = app.add_subcommand("ingest", "Build or normalize an embedding bundle");
  IngestArgs ingest;
  auto* in_manifest = sub_ingest->add_option("--manifest", ingest.manifest,
                                             "Existing manifest to validate, normalize and rewrite")
                          ->check(CLI::ExistingFile);
  auto* in_classes = sub_ingest->add_option("--classes", ingest.classes,
                                            "Class list (format wizs-classes) to generate and embed")
                         ->check(CLI::ExistingFile);
  in_manifest->excludes(in_classes);
  sub_ingest->add_option("--out", ingest.out, "Output bundle directory")->required();
  sub_ingest->add_option("--providers", ingest.providers, "Provider config, for --classes")
      ->envname("WIZS_PROVIDERS");
  sub_ingest->add_option("--n-images", ingest.n_images, "Images per class; 0 uses the provider config")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub_ingest->add_flag("--no-descriptive-texts", ingest.no_descriptive, "Skip caption embeddings");

  auto* sub_score = app.add_subcommand("score", "Per-class consistency, silhouette and compound scores as CSV");
  ScoreArgs score;
  sub_score->add_option("--manifest", score.manifest, "Bundle manifest")->required()->check(CLI::ExistingFile);
  sub_score->add_option("--variant", score.variant, "Which embeddings stand in for the class")
      ->check(CLI::IsMember({"image", "text", "both"}))
      ->capture_default_str();
  sub_score->add_option("--out", score.out, "CSV output path, - for stdout")->capture_default_str();
  score.scoring.add(sub_score);

  auto* sub_eval = app.add_subcommand("eval", "Spearman correlation of scores with real-image accuracy");
  EvalArgs eval;
  sub_eval->add_option("--manifest", eval.manifest, "Bundle manifest with labeled real images")
      ->required()
      ->check(CLI::ExistingFile);
  sub_eval->add_option("--out", eval.out, "Report output path, - for stdout")->capture_default_str();
  sub_eval->add_option("--variant", eval.variant, "Score variants to correlate")
      ->check(CLI::IsMember({"image", "text", "both"}))
      ->capture_default_str();
  sub_eval->add_option("--format", eval.format, "Report format")
      ->check(CLI::IsMember({"csv", "text"}))
      ->capture_default_str();
  sub_eval->add_option("--calibration-out", eval.calibration_out,
                       "Also write dataset_id,class_id,compound_score,accuracy rows here");
  eval.scoring.add(sub_eval);

  auto* sub_fit = app.add_subcommand("fit-calibration", "Fit the score-to-accuracy beta regression");
  FitArgs fitargs;
  sub_fit->add_option("--scores", fitargs.scores, "Calibration CSV files, one per dataset")
      ->required()
      ->check(CLI::ExistingFile);
  sub_fit->add_option("--out", fitargs.out, "Model output path")->required();
  sub_fit->add_flag("--loo", fitargs.loo, "Leave-one-file-out cross-validation table (needs 3+ files)");
  sub_fit->add_option("--degree", fitargs.degree, "Polynomial degree of the score features")
      ->check(CLI::Range(1, 5))
      ->capture_default_str();
  sub_fit->add_option("--label", fitargs.label, "Free-form label stored in the model");
  sub_fit->add_option("--epsilon", fitargs.epsilon, "Accuracies are clamped into [epsilon, 1 - epsilon]")
      ->check(CLI::Range(1e-12, 0.25))
      ->capture_default_str();
  sub_fit->add_option("--max-iterations", fitargs.max_iterations, "Optimizer iteration limit")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* sub_predict = app.add_subcommand("predict", "Predict accuracy for one query class");
  PredictArgs predict;
  sub_predict->add_option("--query", predict.query, "Class name to evaluate")->required();
  sub_predict->add_option("--alternatives", predict.alternatives,
                          "Comma-separated competing classes; generated when omitted")
      ->delimiter(',');
  sub_predict->add_option("--domain", predict.domain, "Domain hint for caption generation");
  sub_predict->add_option("--providers", predict.providers, "Provider config")->envname("WIZS_PROVIDERS");
  sub_predict->add_option("--calibration", predict.calibration, "Calibration model")
      ->envname("WIZS_CALIBRATION")
      ->required();
  sub_predict->add_option("--n-images", predict.n_images, "Images per class; 0 uses the provider config")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub_predict->add_option("--format", predict.format, "Output format")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
  sub_predict->add_option("--out", predict.out, "Output path, - for stdout")->capture_default_str();

  auto* sub_report = app.add_subcommand("report", "Aligned-text summary of a bundle and/or calibration model");
  ReportArgs report;
  auto* rep_manifest = sub_report->add_option("--manifest", report.manifest, "Bundle manifest")
                           ->check(CLI::ExistingFile);
  auto* rep_model = sub_report->add_option("--calibration", report.calibration, "Calibration model to inspect")
                        ->check(CLI::ExistingFile);
  sub_report->add_option("--out", report.out, "Output path, - for stdout")->capture_default_str();
  sub_report->add_option("--grid", report.grid, "Score grid points for the calibration curve")
      ->capture_default_str();
  sub_report->add_option("--grid-min", report.grid_min, "Lowest grid score")->capture_default_str();
  sub_report->add_option("--grid-max", report.grid_max, "Highest grid score")->capture_default_str();
  report.scoring.add(sub_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }
  wizs::logger()->set_level(spdlog::level::from_str(log_level));

  try {
    if (sub_ingest->parsed()) {
      if (ingest.manifest.empty() && ingest.classes.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "ingest needs --manifest or --classes");
      }
      return run_ingest(ingest);
    }
    if (sub_score->parsed()) return run_score(score);
    if (sub_eval->parsed()) return run_eval(eval);
    if (sub_fit->parsed()) return run_fit(fitargs);
    if (sub_predict->parsed()) return run_predict(predict);
    if (sub_report->parsed()) {
      if (rep_manifest->count() == 0 && rep_model->count() == 0) {
        throw Error(ErrorCode::kInvalidArgument, "report needs --manifest and/or --calibration");
      }
      return run_report(report);
    }
  } catch (const wizs::PartialResult& e) {
    fmt::print(stderr, "error: {} ({} of the requested items were produced)\n", e.message(), e.items().size());
    return kExitProvider;
  } catch (const Error& e) {
    fmt::print(stderr, "error [{}]: {}\n", wizs::error_code_name(e.code()), e.message());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitComputation;
  }
  return kExitValidation;
}
