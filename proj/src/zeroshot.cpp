#include "wizs/zeroshot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wizs/format.hpp"

namespace wizs {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 (0-based) hold ranks i+1..j; their average:
    const double avg = 0.5 * double(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kLengthMismatch, fmt::format("spearman of vectors with lengths {} and {}",
                                                        x.size(), y.size()));
  }
  if (x.size() < 3) {
    throw Error(ErrorCode::kInsufficientData,
                fmt::format("spearman needs at least 3 points, got {}", x.size()));
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(y.begin(), y.end(), finite)) {
    throw Error(ErrorCode::kNonFinite, "spearman input has a NaN or Inf value");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = double(x.size());
  const double mean_rank = 0.5 * (n + 1);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean_rank;
    const double dy = ry[i] - mean_rank;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) {
    throw Error(ErrorCode::kDegenerateRanks,
                sxx == 0 ? "first vector is constant" : "second vector is constant");
  }
  // sqrt of the product keeps identical rank vectors at exactly +/-1.
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

CorrelationRow correlate(std::string kind, Variant variant, const std::vector<double>& scores,
                         const std::vector<double>& accuracy) {
  CorrelationRow row;
  row.score_kind = std::move(kind);
  row.variant = variant;
  row.n_classes = scores.size();
  try {
    row.spearman_rho = spearman(scores, accuracy);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateRanks) throw;
    row.note = "degenerate ranks (" + e.message() + ")";
  }
  return row;
}

}  // namespace

CorrelationReport correlation_report(std::span<const ClassEmbeddings<double>> classes,
                                     const ScoringConfig& cfg, const std::string& dataset_id,
                                     const std::string& model_id, const ReportOptions& options) {
  if (classes.size() < 3) {
    throw Error(ErrorCode::kInsufficientData,
                fmt::format("a correlation report needs at least 3 classes, got {}",
                            classes.size()));
  }
  CorrelationReport report;
  report.dataset_id = dataset_id;
  report.model_id = model_id;
  try {
    report.accuracy = per_class_accuracy(classes);
  } catch (const Error& e) {
    throw Error(e.code(), "real-image accuracy: " + e.message());
  }

  std::vector<double> accuracy;
  accuracy.reserve(classes.size());
  for (const auto& c : classes) accuracy.push_back(report.accuracy.at(c.class_id));

  auto add_variant = [&](Variant variant) {
    std::vector<ClassScores> scores;
    try {
      scores = score_bundle(classes, cfg, variant);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(variant_name(variant)) + " scores: " + e.message());
    }
    std::vector<double> cs, sil, comp;
    for (const auto& s : scores) {
      cs.push_back(s.consistency);
      sil.push_back(s.silhouette);
      comp.push_back(s.compound);
    }
    report.rows.push_back(correlate("consistency", variant, cs, accuracy));
    report.rows.push_back(correlate("silhouette", variant, sil, accuracy));
    report.rows.push_back(correlate("compound", variant, comp, accuracy));
  };

  if (options.image) {
    add_variant(Variant::kImage);
    std::map<std::string, double> baseline;
    try {
      baseline = generated_zero_shot_baseline(classes);
    } catch (const Error& e) {
      throw Error(e.code(), "generated-image baseline: " + e.message());
    }
    std::vector<double> b;
    for (const auto& c : classes) b.push_back(baseline.at(c.class_id));
    report.rows.push_back(correlate("generated_zero_shot", Variant::kImage, b, accuracy));
  }
  if (options.text) add_variant(Variant::kText);
  return report;
}

std::string report_to_csv(const CorrelationReport& report) {
  std::string out = csv_row({"dataset", "model", "score_kind", "variant", "spearman_rho",
                             "n_classes"});
  for (const auto& r : report.rows) {
    out += csv_row({report.dataset_id, report.model_id, r.score_kind,
                    std::string(variant_name(r.variant)),
                    r.spearman_rho ? format_double(*r.spearman_rho) : "NA",
                    std::to_string(r.n_classes)});
  }
  return out;
}

std::string report_to_text(const CorrelationReport& report) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"dataset", "model", "score_kind", "variant", "spearman_rho", "n_classes"});
  for (const auto& r : report.rows) {
    cells.push_back({report.dataset_id, report.model_id, r.score_kind,
                     std::string(variant_name(r.variant)),
                     r.spearman_rho ? fmt::format("{:.4f}", *r.spearman_rho) : "NA",
                     std::to_string(r.n_classes)});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      // numeric columns right-aligned
      line += c >= 4 ? fmt::format("{:>{}}", row[c], width[c])
                     : fmt::format("{:<{}}", row[c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

}  // namespace wizs
