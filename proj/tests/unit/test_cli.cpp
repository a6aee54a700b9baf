#include <gtest/gtest.h>
#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include "support/fixtures.hpp"
#include "support/oracle.hpp"
#include "support/tempdir.hpp"
#include "wizs/blob.hpp"
#include "wizs/calibration.hpp"
#include "wizs/format.hpp"
#include "wizs/manifest.hpp"
#include "wizs/stub_providers.hpp"
#include "wizs/synth.hpp"

#include <httplib.h>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int rc = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  Outcome cli(const std::string& args) const { return exec(WIZS_CLI_PATH, args); }

  Outcome exec(const std::string& binary, const std::string& args) const {
    const auto out = dir_.path() / "stdout.txt";
    const auto err = dir_.path() / "stderr.txt";
    const std::string cmd =
        fmt::format("cd '{}' && '{}' {} >'{}' 2>'{}'", dir_.path().string(), binary, args, out.string(), err.string());
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = wizs::read_file(out);
    r.err = wizs::read_file(err);
    return r;
  }

  fs::path path(const std::string& rel) const { return dir_.path() / rel; }

  // Seeded synthetic bundle under `name`; returns the manifest path.
  fs::path synth(const std::string& name, std::uint64_t seed, bool captions = true, bool real = true) const {
    wizs::SynthOptions o;
    o.seed = seed;
    o.n_generated = 8;
    o.n_captions = captions ? 8 : 0;
    o.n_real = real ? 60 : 0;
    wizs::BundleManifest m;
    m.dataset_id = name;
    m.model_id = "synthetic";
    m.dim = static_cast<std::uint32_t>(o.dim);
    return wizs::save_bundle(path(name), m, wizs::synth_raw(o));
  }

  static std::string source(const std::string& rel) { return (fs::path(WIZS_SOURCE_DIR) / rel).string(); }

  support::TempDir dir_;
};

std::vector<std::vector<std::string>> csv(const std::string& text) { return wizs::parse_csv(text); }

TEST_F(Cli, HelpDocumentsEveryFlag) {
  const std::map<std::string, std::vector<std::string>> flags = {
      {"ingest", {"--manifest", "--classes", "--out", "--providers", "--n-images", "--no-descriptive-texts"}},
      {"score", {"--manifest", "--variant", "--out", "--lambda", "--alpha"}},
      {"eval", {"--manifest", "--out", "--variant", "--format", "--calibration-out", "--lambda", "--alpha"}},
      {"fit-calibration", {"--scores", "--out", "--loo", "--degree", "--label", "--epsilon", "--max-iterations"}},
      {"predict",
       {"--query", "--alternatives", "--domain", "--providers", "--calibration", "--n-images", "--format", "--out"}},
      {"report", {"--manifest", "--calibration", "--out", "--grid", "--grid-min", "--grid-max", "--lambda", "--alpha"}},
  };
  const auto top = cli("--help");
  EXPECT_EQ(top.rc, 0);
  for (const auto& [sub, names] : flags) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
    const auto r = cli(sub + " --help");
    EXPECT_EQ(r.rc, 0) << sub;
    for (const auto& f : names) EXPECT_NE(r.out.find(f), std::string::npos) << sub << " " << f;
  }
  EXPECT_EQ(cli("").rc, 2);
  EXPECT_EQ(cli("frobnicate").rc, 2);
  EXPECT_EQ(cli("score --manifest nope.json").rc, 2);
}

TEST_F(Cli, ScoreMatchesOracle) {
  const auto manifest = synth("b", 11);
  const auto r = cli(fmt::format("score --manifest '{}' --variant both --out scores.csv", manifest.string()));
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rows = csv(wizs::read_file(path("scores.csv")));
  ASSERT_EQ(rows.front(), (std::vector<std::string>{"class_id", "variant", "consistency", "silhouette", "compound"}));

  const auto bundle = wizs::load_bundle(manifest);
  ASSERT_EQ(rows.size(), 1 + 2 * bundle.classes.size());
  std::map<std::pair<std::string, std::string>, std::array<double, 3>> expected;
  for (auto v : {wizs::Variant::kImage, wizs::Variant::kText}) {
    const auto o = fixtures::to_oracle(bundle.classes, v);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double c = oracle::consistency(o, i), s = oracle::silhouette(o, i, 2.5);
      expected[{o[i].id, std::string(wizs::variant_name(v))}] = {c, s, c + 4 * s};
    }
  }
  std::string previous;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    EXPECT_GE(row[0], previous);  // sorted by class_id
    previous = row[0];
    EXPECT_EQ(row[1], r % 2 ? "image" : "text");
    const auto& e = expected.at({row[0], row[1]});
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(wizs::parse_double(row[2 + k]), e[k], 1e-12) << row[0];
  }
  // Same inputs, same bytes.
  const auto again = cli(fmt::format("score --manifest '{}' --variant both", manifest.string()));
  EXPECT_EQ(again.out, wizs::read_file(path("scores.csv")));
}

TEST_F(Cli, ScoreValidationExitCodes) {
  const auto no_captions = synth("nc", 3, false);
  const auto r = cli(fmt::format("score --manifest '{}' --variant text", no_captions.string()));
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.err.find("c0"), std::string::npos) << r.err;  // names the class
  EXPECT_EQ(cli(fmt::format("score --manifest '{}' --variant image", no_captions.string())).rc, 0);
  EXPECT_EQ(cli(fmt::format("score --manifest '{}' --variant sideways", no_captions.string())).rc, 2);
  EXPECT_EQ(cli(fmt::format("score --manifest '{}' --lambda -1", no_captions.string())).rc, 2);

  // A corrupted blob is a validation failure with the byte offset in the message.
  const auto bundle = synth("corrupt", 4);
  for (const auto& entry : fs::directory_iterator(path("corrupt/blobs"))) {
    fs::resize_file(entry.path(), fs::file_size(entry.path()) - 2);
    break;
  }
  const auto c = cli(fmt::format("score --manifest '{}'", bundle.string()));
  EXPECT_EQ(c.rc, 2);
  EXPECT_NE(c.err.find("offset"), std::string::npos) << c.err;
}

TEST_F(Cli, ScoreComputationErrorExitsThree) {
  // Two classes whose images coincide with each other: centroid differences vanish.
  wizs::BundleManifest m;
  m.dataset_id = "degenerate";
  m.model_id = "x";
  m.dim = 3;
  std::vector<wizs::RawClassData> raw(2);
  for (int c = 0; c < 2; ++c) {
    raw[c].meta.class_id = fmt::format("c{}", c);
    raw[c].meta.class_name = raw[c].meta.class_id;
    raw[c].plain_text = fixtures::vec({1.0, double(c), 0.5});
    raw[c].generated_images = fixtures::cols({{0, 0, 1}});
  }
  const auto manifest = wizs::save_bundle(path("degenerate"), m, raw);
  const auto r = cli(fmt::format("score --manifest '{}'", manifest.string()));
  EXPECT_EQ(r.rc, 3) << r.err;
}

TEST_F(Cli, EvalMatchesOracleAndFeedsCalibration) {
  const auto manifest = synth("e", 5);
  const auto r = cli(fmt::format("eval --manifest '{}' --out report.csv --calibration-out cal.csv", manifest.string()));
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rows = csv(wizs::read_file(path("report.csv")));
  ASSERT_EQ(rows.front(),
            (std::vector<std::string>{"dataset", "model", "score_kind", "variant", "spearman_rho", "n_classes"}));
  ASSERT_EQ(rows.size(), 8u);

  const auto bundle = wizs::load_bundle(manifest);
  const auto texts = fixtures::to_oracle(bundle.classes, wizs::Variant::kImage);
  std::vector<double> acc;
  for (const auto& c : bundle.classes) {
    double hits = 0;
    for (Eigen::Index k = 0; k < c.real_images.size(); ++k) {
      hits += oracle::classify(fixtures::to_vec(c.real_images.column(k)), texts) == c.class_id;
    }
    acc.push_back(hits / double(c.real_images.size()));
  }
  const auto o = fixtures::to_oracle(bundle.classes, wizs::Variant::kImage);
  std::vector<double> compound;
  for (std::size_t i = 0; i < o.size(); ++i) {
    compound.push_back(oracle::consistency(o, i) + 4 * oracle::silhouette(o, i, 2.5));
  }
  EXPECT_EQ(rows[3][2], "compound");
  EXPECT_EQ(rows[3][3], "image");
  EXPECT_NEAR(wizs::parse_double(rows[3][4]), oracle::spearman(compound, acc), 1e-12);

  const auto cal = wizs::parse_calibration_csv(wizs::read_file(path("cal.csv")));
  ASSERT_EQ(cal.points.size(), bundle.classes.size());
  for (std::size_t i = 0; i < cal.points.size(); ++i) {
    EXPECT_EQ(cal.points[i].dataset_id, "e");
    EXPECT_EQ(cal.points[i].class_id, bundle.classes[i].class_id);  // c0..c5 already sorted
    EXPECT_NEAR(cal.points[i].score, compound[i], 1e-12);
    EXPECT_EQ(cal.points[i].accuracy, acc[i]);
  }

  const auto no_labels = synth("nl", 6, true, false);
  EXPECT_EQ(cli(fmt::format("eval --manifest '{}'", no_labels.string())).rc, 2);
}

TEST_F(Cli, FitCalibrationLooAndDeterminism) {
  std::string files;
  for (int s = 0; s < 3; ++s) {
    const auto m = synth(fmt::format("d{}", s), 20 + s);
    ASSERT_EQ(cli(fmt::format("eval --manifest '{}' --out /dev/null --calibration-out cal{}.csv", m.string(), s)).rc,
              0);
    files += fmt::format(" cal{}.csv", s);
  }
  const auto two = cli("fit-calibration --scores cal0.csv cal1.csv --out m.json --loo");
  EXPECT_EQ(two.rc, 2);
  EXPECT_FALSE(fs::exists(path("m.json")));

  const auto r = cli("fit-calibration --loo --label test --out m.json --scores" + files);
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_TRUE(std::regex_search(r.out, std::regex(R"(d0\s+6\s+\d\.\d{6})"))) << r.out;
  EXPECT_NE(r.out.find("mean"), std::string::npos);
  const auto first = wizs::read_file(path("m.json"));
  EXPECT_EQ(cli("fit-calibration --label test --out m2.json --scores" + files).rc, 0);
  EXPECT_EQ(wizs::read_file(path("m2.json")), first);
  const auto model = wizs::load_model(first);
  EXPECT_EQ(model.label, "test");
  EXPECT_EQ(model.fit_meta.n_points, 18u);

  std::ofstream(path("bad.csv")) << "dataset_id,class_id,compound_score,accuracy\nx,c0,abc,0.5\n";
  const auto bad = cli("fit-calibration --scores bad.csv --out m3.json");
  EXPECT_EQ(bad.rc, 2);
  EXPECT_NE(bad.err.find("row 2"), std::string::npos) << bad.err;
}

TEST_F(Cli, PredictIsDeterministicAndValidated) {
  const std::string common = fmt::format("--providers '{}' --calibration '{}'", source("config/providers.stub.json"),
                                         source("models/default_calibration.json"));
  const auto a = cli("predict --query 'spotted lanternfly' --domain insects --n-images 4 " + common);
  const auto b = cli("predict --query 'spotted lanternfly' --domain insects --n-images 4 " + common);
  ASSERT_EQ(a.rc, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("predicted_accuracy: "), std::string::npos);
  EXPECT_NE(a.out.find("(synthetic)"), std::string::npos);
  EXPECT_NE(a.out.find("Planthopper"), std::string::npos);

  const auto j = cli("predict --format json --query heron --alternatives egret,stork --n-images 3 " + common);
  ASSERT_EQ(j.rc, 0) << j.err;
  const auto body = nlohmann::json::parse(j.out);
  EXPECT_EQ(body["alternatives"], nlohmann::json({"egret", "stork"}));
  const auto model = wizs::load_model(wizs::read_file(source("models/default_calibration.json")));
  EXPECT_EQ(body["predicted_accuracy"].get<double>(),
            wizs::predict_accuracy(model, body["compound_score"].get<double>()));

  EXPECT_EQ(cli("predict --query heron --alternatives egret,Heron " + common).rc, 2);
  EXPECT_EQ(cli(fmt::format("predict --query heron --providers '{}' --calibration missing.json",
                             source("config/providers.stub.json")))
                .rc,
            2);
  EXPECT_EQ(cli("predict --query '' " + common).rc, 2);
}

TEST_F(Cli, PredictProviderFailureExitsFour) {
  std::ofstream(path("down.json")) << R"({"kind": "http",
    "embedding_endpoint": "http://127.0.0.1:9/e", "textgen_endpoint": "http://127.0.0.1:9/t",
    "imagegen_endpoint": "http://127.0.0.1:9/i", "retry": {"max_retries": 0}})";
  const auto r = cli(fmt::format("predict --query heron --providers down.json --calibration '{}'",
                                  source("models/default_calibration.json")));
  EXPECT_EQ(r.rc, 4) << r.err;
  EXPECT_NE(r.err.find("ProviderUnavailable"), std::string::npos);
}

TEST_F(Cli, IngestClassListWithStubs) {
  // Two "real" photos per class: stub renders whose description matches the class.
  nlohmann::json list = {{"format", "wizs-classes"}, {"dataset_id", "birds"}, {"domain", "birds"}};
  for (const std::string name : {"heron", "egret", "stork"}) {
    nlohmann::json entry = {{"class_id", name}, {"class_name", name}};
    for (int k = 0; k < 2; ++k) {
      const auto file = fmt::format("real/{}_{}.svg", name, k);
      fs::create_directories(path("real"));
      std::ofstream(path(file)) << wizs::StubImageGenProvider::render_svg("a photo of a " + name, 100 + k);
      entry["real_images"].push_back(file);
    }
    list["classes"].push_back(entry);
  }
  std::ofstream(path("classes.json")) << list.dump(2);
  const std::string providers = source("config/providers.stub.json");
  const auto r = cli(fmt::format("ingest --classes classes.json --providers '{}' --n-images 5 --out bundle", providers));
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("classes=3 generated_images=15 descriptive_texts=15 real_images=6"), std::string::npos) << r.out;

  const auto bundle = wizs::load_bundle(path("bundle/manifest.json"));
  EXPECT_EQ(bundle.manifest.model_id, "stub-embed:dim=64:seed=0");
  EXPECT_EQ(bundle.manifest.classes[0].captions.size(), 5u);
  EXPECT_EQ(bundle.manifest.classes[0].image_refs.size(), 5u);
  EXPECT_TRUE(bundle.manifest.classes[0].captions[0].starts_with("A photo of a heron"));

  // Re-ingesting is a fixed point and the result feeds score and report.
  const auto again = cli("ingest --manifest bundle/manifest.json --out bundle2");
  ASSERT_EQ(again.rc, 0) << again.err;
  EXPECT_EQ(wizs::read_file(path("bundle2/manifest.json")), wizs::read_file(path("bundle/manifest.json")));
  EXPECT_EQ(cli("score --manifest bundle2/manifest.json --variant both").rc, 0);
  const auto rep = cli("report --manifest bundle2/manifest.json");
  EXPECT_EQ(rep.rc, 0) << rep.err;
  EXPECT_NE(rep.out.find("accuracy"), std::string::npos);

  std::ofstream(path("bad.json")) << R"({"format": "wizs-classes", "dataset_id": "x", "classes": [{"class_id": "a"}, {"class_id": "b", "class_name": "b"}]})";
  const auto bad = cli(fmt::format("ingest --classes bad.json --providers '{}' --out b3", providers));
  EXPECT_EQ(bad.rc, 2);
  EXPECT_NE(bad.err.find("class_name"), std::string::npos) << bad.err;
  EXPECT_EQ(cli("ingest --out b4").rc, 2);
}

TEST_F(Cli, ReportCalibrationModel) {
  const auto r = cli(fmt::format("report --calibration '{}' --grid 3 --grid-min 0 --grid-max 2",
                                  source("models/default_calibration.json")));
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("label: synthetic"), std::string::npos);
  EXPECT_NE(r.out.find("converged: yes"), std::string::npos);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 10 + 2 + 3);  // summary, blank + header, grid
  EXPECT_EQ(cli("report").rc, 2);
}

TEST_F(Cli, SynthToolWritesLoadableBundle) {
  const auto r = exec(WIZS_SYNTH_PATH, "--out s --seed 3 --classes 4 --dim 12");
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto bundle = wizs::load_bundle(path("s/manifest.json"));
  EXPECT_EQ(bundle.classes.size(), 4u);
  EXPECT_EQ(bundle.manifest.dataset_id, "synth-3");
}

TEST_F(Cli, ServerBinaryServesAndStopsOnSigterm) {
  nlohmann::json config = {{"port", 0},
                           {"providers", source("config/providers.stub.json")},
                           {"calibration", source("models/default_calibration.json")}};
  std::ofstream(path("service.json")) << config.dump();
  const std::string cmd = fmt::format("cd '{}' && {{ '{}' --config service.json >server.out 2>server.err & echo $! >server.pid; }}",
                                      path("").string(), WIZS_SERVER_PATH);
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  int port = 0;
  for (int i = 0; i < 500 && port == 0; ++i) {
    std::smatch m;
    const auto out = fs::exists(path("server.out")) ? wizs::read_file(path("server.out")) : std::string();
    if (std::regex_search(out, m, std::regex(R"(listening on http://127\.0\.0\.1:(\d+))"))) port = std::stoi(m[1]);
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ASSERT_GT(port, 0) << wizs::read_file(path("server.err"));
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/api/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(nlohmann::json::parse(health->body)["calibration_label"], "synthetic");
  auto job = client.Post("/api/predict", R"({"query": "heron", "alternatives": ["egret"], "n_images": 2})",
                         "application/json");
  ASSERT_TRUE(job);
  EXPECT_EQ(job->status, 202);

  const std::string pid = wizs::trim(wizs::read_file(path("server.pid")));
  ASSERT_EQ(std::system(("kill -TERM " + pid).c_str()), 0);
  bool gone = false;
  for (int i = 0; i < 500 && !gone; ++i) {
    gone = std::system(("kill -0 " + pid + " 2>/dev/null").c_str()) != 0;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  EXPECT_TRUE(gone);
  EXPECT_NE(wizs::read_file(path("server.err")).find("synthetic data"), std::string::npos);
}

}  // namespace
