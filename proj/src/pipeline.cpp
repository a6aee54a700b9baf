#include "wizs/pipeline.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <set>

#include "wizs/cache.hpp"
#include "wizs/error.hpp"
#include "wizs/format.hpp"
#include "wizs/generation.hpp"
#include "wizs/log.hpp"
#include "wizs/manifest.hpp"
#include "wizs/parallel.hpp"

namespace wizs {

std::string_view job_state_name(JobState s) noexcept {
  switch (s) {
    case JobState::kQueued: return "queued";
    case JobState::kGeneratingAlternatives: return "generating_alternatives";
    case JobState::kCaptioning: return "captioning";
    case JobState::kGeneratingImages: return "generating_images";
    case JobState::kEmbedding: return "embedding";
    case JobState::kScoring: return "scoring";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "unknown";
}

bool is_valid_transition(JobState from, JobState to) noexcept {
  if (from == JobState::kDone || from == JobState::kFailed) return false;
  if (to == JobState::kFailed) return true;
  return static_cast<int>(to) > static_cast<int>(from);
}

void validate_request(const PredictionRequest& r) {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); };
  const std::string query = trim(r.query);
  if (query.empty()) bad("query must not be empty");
  if (r.n_images && *r.n_images < 1) bad(fmt::format("n_images must be >= 1, got {}", *r.n_images));
  if (r.alternatives) {
    if (r.alternatives->empty()) bad("no valid alternatives: the list is empty");
    std::set<std::string> seen{to_lower(query)};
    for (const auto& a : *r.alternatives) {
      const std::string key = to_lower(trim(a));
      if (key.empty()) bad("alternatives must not contain empty labels");
      if (key == to_lower(query)) bad(fmt::format("alternative '{}' is the query itself", trim(a)));
      if (!seen.insert(key).second) bad(fmt::format("alternative '{}' is listed twice", trim(a)));
    }
  }
}

PredictionResult run_prediction(const PredictionRequest& request, ProviderSet& providers,
                                const CalibrationModel& model, const StateCallback& on_state,
                                const ScoringConfig& scoring) {
  validate_request(request);
  auto enter = [&](JobState s) {
    if (on_state) on_state(s);
  };

  PredictionResult result;
  result.query = trim(request.query);
  result.domain = trim(request.domain);
  result.n_images = request.n_images.value_or(providers.n_images);
  result.calibration_model_id = model_id(model);
  result.calibration_label = model.label;

  if (request.alternatives) {
    for (const auto& a : *request.alternatives) result.alternatives.push_back(trim(a));
  } else {
    enter(JobState::kGeneratingAlternatives);
    result.alternatives = generate_alternatives(result.query, result.domain, *providers.textgen).labels;
    result.alternatives_generated = true;
    if (result.alternatives.empty()) {
      throw Error(ErrorCode::kProviderShapeError, "the text generator proposed no usable alternatives");
    }
  }

  std::vector<std::string> names{result.query};
  names.insert(names.end(), result.alternatives.begin(), result.alternatives.end());
  const std::size_t n_classes = names.size();
  const auto n_img = static_cast<std::size_t>(result.n_images);
  result.per_class.resize(n_classes);
  std::vector<std::string> plain(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    result.per_class[c].class_name = names[c];
    plain[c] = render_prompt(kDefaultPromptTemplate, names[c]);
  }

  enter(JobState::kCaptioning);
  rethrow_first(parallel_for(n_classes, providers.max_concurrency, [&](std::size_t c) {
    result.per_class[c].captions = generate_captions(names[c], result.domain, result.n_images,
                                                     *providers.textgen, plain[c]);
  }));

  // One image per caption; the caption index doubles as the seed.
  enter(JobState::kGeneratingImages);
  for (auto& pc : result.per_class) pc.image_refs.assign(n_img, {});
  rethrow_first(parallel_for(n_classes * n_img, providers.max_concurrency, [&](std::size_t t) {
    auto& pc = result.per_class[t / n_img];
    const auto k = t % n_img;
    pc.image_refs[k] = generate_images(pc.captions[k], 1, providers, k).front();
  }));

  enter(JobState::kEmbedding);
  const auto text_vecs = fetch_text_embeddings(plain, providers);
  std::vector<std::string> image_bytes;
  image_bytes.reserve(n_classes * n_img);
  for (const auto& pc : result.per_class) {
    for (const auto& ref : pc.image_refs) {
      auto bytes = providers.images->get(ref);
      if (!bytes) throw Error(ErrorCode::kIo, "stored image " + ref + " disappeared");
      image_bytes.push_back(std::move(*bytes));
    }
  }
  const auto image_vecs = fetch_image_embeddings(image_bytes, providers);

  enter(JobState::kScoring);
  std::vector<ClassEmbeddings<double>> classes;
  classes.reserve(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::span<const Embedding<double>> imgs(image_vecs.data() + c * n_img, n_img);
    classes.push_back(ClassEmbeddings<double>{names[c], text_vecs[c],
                                              EmbeddingSet<double>::from_embeddings(imgs), {}, {}});
  }
  const auto scores = score_bundle(classes, scoring, Variant::kImage);
  for (std::size_t c = 0; c < n_classes; ++c) {
    result.per_class[c].compound = scores[c].compound;
    result.per_class[c].consistency = scores[c].consistency;
    result.per_class[c].silhouette = scores[c].silhouette;
  }
  result.compound_score = scores[0].compound;
  result.predicted_accuracy = predict_accuracy(model, result.compound_score);
  return result;
}

nlohmann::ordered_json result_to_json(const PredictionResult& r) {
  nlohmann::ordered_json j;
  j["query"] = r.query;
  j["domain"] = r.domain;
  j["alternatives"] = r.alternatives;
  j["alternatives_generated"] = r.alternatives_generated;
  j["n_images"] = r.n_images;
  j["predicted_accuracy"] = r.predicted_accuracy;
  j["compound_score"] = r.compound_score;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& pc : r.per_class) {
    nlohmann::ordered_json row;
    row["class_name"] = pc.class_name;
    row["compound"] = pc.compound;
    row["consistency"] = pc.consistency;
    row["silhouette"] = pc.silhouette;
    row["captions"] = pc.captions;
    row["image_refs"] = pc.image_refs;
    rows.push_back(std::move(row));
  }
  j["per_class"] = std::move(rows);
  j["calibration_model_id"] = r.calibration_model_id;
  j["calibration_label"] = r.calibration_label;
  return j;
}

std::string result_to_text(const PredictionResult& r) {
  std::string out;
  out += fmt::format("query: {}\n", r.query);
  if (!r.domain.empty()) out += fmt::format("domain: {}\n", r.domain);
  out += fmt::format("predicted_accuracy: {}\n", format_double(r.predicted_accuracy));
  out += fmt::format("compound_score: {}\n", format_double(r.compound_score));
  out += fmt::format("calibration_model: {}{}\n", r.calibration_model_id,
                     r.calibration_label.empty() ? "" : " (" + r.calibration_label + ")");
  out += fmt::format("alternatives ({}): {}\n\n", r.alternatives_generated ? "generated" : "given",
                     fmt::join(r.alternatives, ", "));

  std::size_t width = 10;
  for (const auto& pc : r.per_class) width = std::max(width, pc.class_name.size());
  out += fmt::format("{:<{}}  {:>12}  {:>12}  {:>12}\n", "class_name", width, "compound",
                     "consistency", "silhouette");
  for (const auto& pc : r.per_class) {
    out += fmt::format("{:<{}}  {:>12.6f}  {:>12.6f}  {:>12.6f}\n", pc.class_name, width,
                       pc.compound, pc.consistency, pc.silhouette);
  }
  out += "\nimages:\n";
  for (const auto& pc : r.per_class) {
    for (const auto& ref : pc.image_refs) out += fmt::format("{}\t{}\n", pc.class_name, ref);
  }
  return out;
}

}  // namespace wizs
