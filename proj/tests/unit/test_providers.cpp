#include <gtest/gtest.h>
#include <spdlog/sinks/ringbuffer_sink.h>

#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <set>
#include <thread>

#include "support/tempdir.hpp"
#include "wizs/cache.hpp"
#include "wizs/error.hpp"
#include "wizs/format.hpp"
#include "wizs/generation.hpp"
#include "wizs/hash.hpp"
#include "wizs/log.hpp"
#include "wizs/providers.hpp"
#include "wizs/stub_providers.hpp"

#include <httplib.h>

namespace {

using json = nlohmann::json;
using wizs::ErrorCode;

// Provider driven by a lambda, counting calls.
class FakeProvider : public wizs::Provider {
 public:
  using Fn = std::function<json(const json&, int)>;
  explicit FakeProvider(Fn fn, std::string id = "fake") : fn_(std::move(fn)), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  json call(const json& request) override {
    const int n = calls_++;
    {
      std::lock_guard lock(mu_);
      requests_.push_back(request);
    }
    return fn_(request, n);
  }
  int calls() const { return calls_.load(); }
  std::vector<json> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  Fn fn_;
  std::string id_;
  std::atomic<int> calls_{0};
  mutable std::mutex mu_;
  std::vector<json> requests_;
};

// Local HTTP server on an ephemeral port, stopped on destruction.
class TestServer {
 public:
  explicit TestServer(httplib::Server::Handler handler) {
    server_.Post("/v1/embed", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/embed"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

struct LogCapture {
  LogCapture() : sink(std::make_shared<spdlog::sinks::ringbuffer_sink_mt>(256)) {
    wizs::logger()->sinks().push_back(sink);
  }
  ~LogCapture() {
    auto& sinks = wizs::logger()->sinks();
    sinks.erase(std::remove(sinks.begin(), sinks.end(), sink), sinks.end());
  }
  std::vector<std::string> lines() const { return sink->last_formatted(); }
  std::shared_ptr<spdlog::sinks::ringbuffer_sink_mt> sink;
};

struct EnvVar {
  EnvVar(const char* name, const char* value) : name_(name) { setenv(name, value, 1); }
  ~EnvVar() { unsetenv(name_); }
  const char* name_;
};

wizs::ProviderSet stub_set(int n_images = 20) {
  wizs::ProviderConfig cfg;
  cfg.n_images = n_images;
  return wizs::make_providers(cfg);
}

const std::vector<std::string> kLasagna = {
    "A photo of a lasagna, a classic Italian dish layered with rich tomato sauce, creamy "
    "b\xC3\xA9" "chamel, and melted mozzarella.",
    "A photo of a lasagna, a comfort food favorite served hot, oozing with gooey cheese and "
    "savory meat.",
    "A photo of a lasagna, a delicious baked pasta dish with layers of succulent ground beef and "
    "tangy marinara sauce.",
    "A photo of a lasagna, an indulgent layered casserole with a golden-brown crust and fragrant "
    "herbs throughout.",
    "A photo of a lasagna, a rustic Italian family meal traditionally prepared in a large, deep "
    "dish.",
};

TEST(HttpProvider, RetriesServerErrorsThenSucceeds) {
  EnvVar key(wizs::kEmbedKeyEnv, "sk-test-secret-123");
  std::atomic<int> hits{0};
  std::string auth_seen;
  TestServer server([&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ < 2) {
      res.status = 500;
      res.set_content("upstream exploded", "text/plain");
      return;
    }
    auth_seen = req.get_header_value("Authorization");
    res.set_content(R"({"dim": 3, "vectors": [[3, 0, 4]]})", "application/json");
  });

  LogCapture logs;
  std::vector<long long> slept;
  wizs::ProviderSet set = stub_set();
  auto http = std::make_shared<wizs::HttpProvider>(
      server.url(), wizs::kEmbedKeyEnv, 5.0, wizs::RetryPolicy{},
      [&](std::chrono::milliseconds d) { slept.push_back(d.count()); });
  set.embed = http;

  const auto vecs = wizs::fetch_text_embeddings({"a photo of a cat"}, set);
  ASSERT_EQ(vecs.size(), 1u);
  EXPECT_DOUBLE_EQ(vecs[0][0], 0.6);
  EXPECT_DOUBLE_EQ(vecs[0][2], 0.8);
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(http->retries(), 2);
  EXPECT_EQ(slept, (std::vector<long long>{500, 1000}));
  EXPECT_EQ(auth_seen, "Bearer sk-test-secret-123");

  int retry_lines = 0;
  for (const auto& line : logs.lines()) {
    EXPECT_EQ(line.find("sk-test-secret-123"), std::string::npos) << line;
    if (line.find("retry_in_ms") != std::string::npos) ++retry_lines;
  }
  EXPECT_EQ(retry_lines, 2);
}

TEST(HttpProvider, GivesUpAfterMaxRetries) {
  std::atomic<int> hits{0};
  TestServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  std::vector<long long> slept;
  wizs::HttpProvider p(server.url(), wizs::kEmbedKeyEnv, 5.0, wizs::RetryPolicy{},
                       [&](std::chrono::milliseconds d) { slept.push_back(d.count()); });
  try {
    p.call({{"texts", {"x"}}});
    FAIL() << "expected ProviderUnavailable";
  } catch (const wizs::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProviderUnavailable);
    EXPECT_NE(e.message().find("4 attempt"), std::string::npos) << e.message();
  }
  EXPECT_EQ(hits.load(), 4);
  EXPECT_EQ(slept, (std::vector<long long>{500, 1000, 2000}));
}

TEST(HttpProvider, ClientErrorsAreNotRetried) {
  std::atomic<int> hits{0};
  TestServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
  });
  wizs::HttpProvider p(server.url(), wizs::kEmbedKeyEnv, 5.0, {}, [](auto) {});
  try {
    p.call({{"texts", {"x"}}});
    FAIL();
  } catch (const wizs::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProviderUnavailable);
  }
  EXPECT_EQ(hits.load(), 1);
}

TEST(HttpProvider, NonJsonBodyIsAShapeError) {
  TestServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>oops</html>", "text/html");
  });
  wizs::HttpProvider p(server.url(), wizs::kEmbedKeyEnv, 5.0, {}, [](auto) {});
  try {
    p.call({{"texts", {"x"}}});
    FAIL();
  } catch (const wizs::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProviderShapeError);
  }
}

TEST(HttpProvider, UnreachableEndpointIsUnavailable) {
  // Bind then release a port so nothing listens on it.
  int port = 0;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  wizs::HttpProvider p("http://127.0.0.1:" + std::to_string(port) + "/embed", wizs::kEmbedKeyEnv,
                       1.0, wizs::RetryPolicy{1, std::chrono::milliseconds(1)}, [](auto) {});
  try {
    p.call({{"texts", {"x"}}});
    FAIL();
  } catch (const wizs::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProviderUnavailable);
    EXPECT_EQ(p.retries(), 1);
  }
}

TEST(HttpProvider, RejectsMalformedUrl) {
  for (const char* url : {"", "ftp://host/x", "http//host", "http://", "http://host:port/x"}) {
    EXPECT_THROW(wizs::HttpProvider(url, wizs::kEmbedKeyEnv, 1.0), wizs::Error) << url;
  }
  EXPECT_NO_THROW(wizs::HttpProvider("https://api.example.com:8443/v1/embed", wizs::kEmbedKeyEnv, 1.0));
  EXPECT_NO_THROW(wizs::HttpProvider("http://localhost", wizs::kEmbedKeyEnv, 1.0));
}

TEST(ProviderConfig, ParsesAndRoundTrips) {
  const auto c = wizs::parse_provider_config(R"({
    "kind": "http",
    "embedding_endpoint": "http://localhost:9001/embed",
    "textgen_endpoint": "http://localhost:9002/textgen",
    "imagegen_endpoint": "https://img.example.com/gen",
    "timeout_seconds": 12.5,
    "retry": {"max_retries": 2, "backoff_base_ms": 250},
    "max_concurrency": 8,
    "n_images": 5
  })");
  EXPECT_EQ(c.kind, "http");
  EXPECT_EQ(c.retry.max_retries, 2);
  EXPECT_EQ(c.retry.backoff_base.count(), 250);
  EXPECT_EQ(c.max_concurrency, 8);
  EXPECT_EQ(c.n_images, 5);
  const auto again = wizs::parse_provider_config(wizs::serialize_provider_config(c));
  EXPECT_EQ(wizs::serialize_provider_config(again), wizs::serialize_provider_config(c));
}

TEST(ProviderConfig, Defaults) {
  const auto c = wizs::parse_provider_config("{}");
  EXPECT_EQ(c.kind, "stub");
  EXPECT_EQ(c.retry.max_retries, 3);
  EXPECT_EQ(c.retry.backoff_base.count(), 500);
  EXPECT_EQ(c.max_concurrency, 4);
  EXPECT_EQ(c.n_images, 20);
  EXPECT_EQ(wizs::make_providers(c).n_images, 20);
}

TEST(ProviderConfig, RejectsBadInput) {
  auto code_of = [](const char* text) {
    try {
      wizs::parse_provider_config(text);
    } catch (const wizs::Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;
  };
  EXPECT_EQ(code_of(R"({"kind": "http", "embedding_endpoint": "nope"})"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of(R"({"kind": "magic"})"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of(R"({"timeout_seconds": 0})"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of(R"({"max_concurrency": 0})"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of(R"({"colour": "blue"})"), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of("[1]"), ErrorCode::kInvalidArgument);
  try {
    wizs::parse_provider_config(R"({"api_key": "sk-live-abc"})");
    FAIL();
  } catch (const wizs::Error& e) {
    EXPECT_NE(e.message().find("WIZS_EMBED_KEY"), std::string::npos);
    EXPECT_EQ(e.message().find("sk-live-abc"), std::string::npos);
  }
}

TEST(ProviderConfig, SecretsNeverSerialized) {
  EnvVar a(wizs::kEmbedKeyEnv, "sk-embed-SECRET");
  EnvVar b(wizs::kTextGenKeyEnv, "sk-text-SECRET");
  EnvVar c(wizs::kImageGenKeyEnv, "sk-image-SECRET");
  auto cfg = wizs::parse_provider_config(R"({"kind": "http",
    "embedding_endpoint": "http://h/e", "textgen_endpoint": "http://h/t",
    "imagegen_endpoint": "http://h/i"})");
  const auto set = wizs::make_providers(cfg);
  const std::string text = wizs::serialize_provider_config(cfg);
  EXPECT_EQ(text.find("SECRET"), std::string::npos);
  EXPECT_EQ(set.embed->id().find("SECRET"), std::string::npos);
  EXPECT_EQ(set.textgen->id().find("SECRET"), std::string::npos);
}

TEST(ResponseCache, KeyDependsOnProviderAndRequest) {
  const auto k = wizs::ResponseCache::key("p1", R"({"texts":["a"]})");
  EXPECT_EQ(k.size(), 64u);
  EXPECT_EQ(k, wizs::ResponseCache::key("p1", R"({"texts":["a"]})"));
  EXPECT_NE(k, wizs::ResponseCache::key("p2", R"({"texts":["a"]})"));
  EXPECT_NE(k, wizs::ResponseCache::key("p1", R"({"texts":["b"]})"));
}

TEST(FetchEmbeddings, CacheHitMeansZeroProviderCalls) {
  auto set = stub_set();
  auto stub = std::static_pointer_cast<wizs::StubEmbedProvider>(set.embed);
  const std::vector<std::string> texts = {"a photo of a cat", "a photo of a dog", "a photo of a cow"};
  const auto first = wizs::fetch_text_embeddings(texts, set);
  const auto calls = stub->calls();
  EXPECT_GE(calls, 1u);
  const auto second = wizs::fetch_text_embeddings(texts, set);
  EXPECT_EQ(stub->calls(), calls);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    EXPECT_EQ(first[i].values(), second[i].values());
  }
  EXPECT_EQ(set.cache->hits(), texts.size());
}

TEST(FetchEmbeddings, DiskCacheSurvivesAcrossInstances) {
  support::TempDir dir;
  wizs::ProviderConfig cfg;
  cfg.cache_dir = (dir.path() / "cache").string();
  auto a = wizs::make_providers(cfg);
  const auto va = wizs::fetch_text_embeddings({"x y z"}, a);
  auto b = wizs::make_providers(cfg);
  const auto vb = wizs::fetch_text_embeddings({"x y z"}, b);
  EXPECT_EQ(std::static_pointer_cast<wizs::StubEmbedProvider>(b.embed)->calls(), 0u);
  EXPECT_EQ(va[0].values(), vb[0].values());
}

TEST(FetchEmbeddings, BatchesAndPartialCacheHits) {
  auto set = stub_set();
  set.embed_batch = 4;
  auto fake = std::make_shared<FakeProvider>([](const json& req, int) {
    json vectors = json::array();
    for (std::size_t i = 0; i < req["texts"].size(); ++i) vectors.push_back({1.0, double(i) + 1});
    return json{{"dim", 2}, {"vectors", vectors}};
  });
  set.embed = fake;
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back("t" + std::to_string(i));
  wizs::fetch_text_embeddings({texts[0], texts[1]}, set);
  EXPECT_EQ(fake->calls(), 1);
  wizs::fetch_text_embeddings(texts, set);
  // 8 misses in batches of 4.
  EXPECT_EQ(fake->calls(), 3);
  for (const auto& r : fake->requests()) EXPECT_LE(r["texts"].size(), 4u);
}

TEST(FetchEmbeddings, StubFixtureAssembly) {
  auto set = stub_set();
  auto stub = std::static_pointer_cast<wizs::StubEmbedProvider>(set.embed);
  const auto got = wizs::fetch_text_embeddings({"a photo of a heron"}, set);
  const auto want = wizs::normalize(stub->text_vector("a photo of a heron"));
  EXPECT_EQ(got[0].values(), want.values());
  EXPECT_EQ(got[0].dim(), 64);
}

TEST(FetchEmbeddings, ShapeErrors) {
  auto set = stub_set();
  auto expect_shape_error = [&](FakeProvider::Fn fn) {
    set.embed = std::make_shared<FakeProvider>(std::move(fn));
    set.cache = std::make_shared<wizs::ResponseCache>();
    try {
      wizs::fetch_text_embeddings({"a", "b"}, set);
      ADD_FAILURE() << "expected ProviderShapeError";
    } catch (const wizs::Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kProviderShapeError) << e.what();
    }
  };
  expect_shape_error([](const json&, int) { return json{{"dim", 2}, {"vectors", {{1, 0}}}}; });
  expect_shape_error([](const json&, int) { return json{{"dim", 3}, {"vectors", {{1, 0}, {0, 1}}}}; });
  expect_shape_error([](const json&, int) { return json{{"dim", 2}, {"vectors", {{1, 0}, {0, 0}}}}; });
  expect_shape_error([](const json&, int) { return json{{"oops", 1}}; });
  expect_shape_error([](const json&, int) { return json{{"vectors", {{1, 0}, {1, 0, 0}}}}; });
  EXPECT_THROW(wizs::fetch_text_embeddings({}, set), wizs::Error);
}

TEST(FetchEmbeddings, ImagesUseBase64Payload) {
  auto set = stub_set();
  auto fake = std::make_shared<FakeProvider>([](const json& req, int) {
    EXPECT_EQ(wizs::base64_decode(req["images_b64"][0].get<std::string>()), std::string("\x89PNG\0\1", 6));
    return json{{"dim", 2}, {"vectors", {{0.0, 2.0}}}};
  });
  set.embed = fake;
  const auto v = wizs::fetch_image_embeddings({std::string("\x89PNG\0\1", 6)}, set);
  EXPECT_DOUBLE_EQ(v[0][1], 1.0);
}

TEST(GenerateCaptions, AcceptsTemplatePrefixedLasagnaCaptions) {
  FakeProvider fake([](const json&, int) { return json{{"completions", kLasagna}}; });
  const auto caps = wizs::generate_captions("Lasagna", "food", 5, fake, "a photo of a lasagna");
  EXPECT_EQ(caps, kLasagna);
  EXPECT_EQ(fake.calls(), 1);
  const std::string prompt = fake.requests()[0]["prompt"];
  EXPECT_NE(prompt.find("global taxonomical traits when generating captions: food."), std::string::npos);
  EXPECT_NE(prompt.find("for the subject 'Lasagna'"), std::string::npos);
  EXPECT_NE(prompt.find("prompt template provided: 'a photo of a lasagna'"), std::string::npos);
  EXPECT_NE(prompt.find("Here {c} is the class name of the subject."), std::string::npos);
}

TEST(GenerateCaptions, RejectsMissingPrefixAndRetries) {
  FakeProvider fake([](const json& req, int call) {
    const int n = req["n"];
    std::vector<std::string> out;
    if (call == 0) {
      out = {kLasagna[0], "Lasagna on a plate, steaming", kLasagna[1]};
    } else {
      EXPECT_EQ(n, 1);
      out = {kLasagna[2]};
    }
    return json{{"completions", out}};
  });
  const auto caps = wizs::generate_captions("Lasagna", "", 3, fake, "a photo of a lasagna");
  EXPECT_EQ(caps, (std::vector<std::string>{kLasagna[0], kLasagna[1], kLasagna[2]}));
  EXPECT_EQ(fake.calls(), 2);
}

TEST(GenerateCaptions, PartialResultAfterTwoRetries) {
  FakeProvider fake([](const json&, int call) {
    if (call == 0) return json{{"completions", {kLasagna[0], "Lasagna, close up"}}};
    return json{{"completions", {"no prefix here"}}};
  });
  try {
    wizs::generate_captions("Lasagna", "", 2, fake, "a photo of a lasagna");
    FAIL();
  } catch (const wizs::PartialResult& e) {
    EXPECT_EQ(e.items(), (std::vector<std::string>{kLasagna[0]}));
  }
  EXPECT_EQ(fake.calls(), 3);
}

TEST(GenerateCaptions, ExactCountFromConformingStub) {
  wizs::StubTextGenProvider stub;
  const auto caps = wizs::generate_captions("Golden Retriever", "dogs", 5, stub, "a photo of a Golden Retriever");
  ASSERT_EQ(caps.size(), 5u);
  for (const auto& c : caps) EXPECT_TRUE(c.starts_with("A photo of a Golden Retriever, ")) << c;
  EXPECT_EQ(stub.calls(), 1u);
  const auto many = wizs::generate_captions("Lasagna", "", 45, stub, "a photo of a Lasagna");
  EXPECT_EQ(std::set<std::string>(many.begin(), many.end()).size(), 45u);
  EXPECT_THROW(wizs::generate_captions("Lasagna", "", 0, stub, "a photo of a Lasagna"), wizs::Error);
}

TEST(GenerateCaptions, ProviderFailurePropagates) {
  FakeProvider fake([](const json&, int) -> json {
    throw wizs::Error(ErrorCode::kProviderUnavailable, "down");
  });
  try {
    wizs::generate_captions("Lasagna", "", 2, fake, "a photo of a lasagna");
    FAIL();
  } catch (const wizs::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProviderUnavailable);
  }
}

TEST(GenerateAlternatives, SpottedLanternflyGivesTenInsects) {
  wizs::StubTextGenProvider stub;
  const auto alt = wizs::generate_alternatives("spotted lanternfly", "", stub);
  ASSERT_EQ(alt.labels.size(), 10u);
  for (const auto& l : alt.labels) EXPECT_NE(wizs::to_lower(l), "spotted lanternfly");
  EXPECT_EQ(alt.query_echoes_removed, 1);
  EXPECT_EQ(alt.labels[0], "Planthopper");
}

TEST(GenerateAlternatives, VerbatimPromptWithOptionalDomain) {
  FakeProvider fake([](const json&, int) { return json{{"completions", {"1. Moth"}}}; });
  wizs::generate_alternatives("spotted lanternfly", "", fake);
  wizs::generate_alternatives("jaguar", "cars", fake);
  const auto reqs = fake.requests();
  EXPECT_EQ(reqs[0]["prompt"],
            "Create 10 realistic alternatives to the following input label by suggesting "
            "alternatives that are somewhat similar. I don't want the same label reworded or a "
            "subclass of the input label. The given label is: spotted lanternfly");
  EXPECT_TRUE(reqs[1]["prompt"].get<std::string>().ends_with("The given label is: jaguar The domain is: cars."));
}

TEST(GenerateAlternatives, DeduplicatesAndReportsCount) {
  FakeProvider fake([](const json&, int) {
    return json{{"completions", {"1. Cicada\n2. \"Leafhopper\"\n3. cicada\n- Moth.\n* LEAFHOPPER\n\n"
                                 "4) Spotted Lanternfly\n5. Planthopper"}}};
  });
  const auto alt = wizs::generate_alternatives("Spotted lanternfly", "", fake);
  EXPECT_EQ(alt.labels, (std::vector<std::string>{"Cicada", "Leafhopper", "Moth", "Planthopper"}));
  EXPECT_EQ(alt.duplicates_removed, 2);
  EXPECT_EQ(alt.query_echoes_removed, 1);
}

TEST(GenerateAlternatives, CommaSeparatedAndCap) {
  const auto alt = wizs::parse_alternatives({"a, b, c, d, e, f, g, h, i, j, k, l"}, "z");
  EXPECT_EQ(alt.labels.size(), 10u);
  EXPECT_EQ(alt.labels.front(), "a");
}

TEST(GenerateAlternatives, EmptyQueryRejected) {
  wizs::StubTextGenProvider stub;
  EXPECT_THROW(wizs::generate_alternatives("   ", "", stub), wizs::Error);
  EXPECT_EQ(stub.calls(), 0u);
}

TEST(GenerateImages, RefsResolveToStubBytes) {
  auto set = stub_set();
  const auto refs = wizs::generate_images("a photo of a heron, at dusk", set.n_images, set);
  ASSERT_EQ(refs.size(), 20u);
  EXPECT_EQ(std::set<std::string>(refs.begin(), refs.end()).size(), 20u);
  wizs::StubImageGenProvider reference;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto bytes = set.images->get(refs[k]);
    ASSERT_TRUE(bytes);
    EXPECT_EQ(wizs::sha256_hex(*bytes), refs[k]);
    const json direct = reference.call({{"prompt", "a photo of a heron, at dusk"}, {"n", 1}, {"seed", k}});
    EXPECT_EQ(wizs::base64_decode(direct["images_b64"][0].get<std::string>()), *bytes);
    EXPECT_EQ(wizs::ImageStore::content_type(*bytes), "image/svg+xml");
  }
}

TEST(GenerateImages, FailureAtImageFifteenKeepsFourteen) {
  auto set = stub_set();
  auto inner = std::make_shared<wizs::StubImageGenProvider>();
  set.imagegen = std::make_shared<FakeProvider>([inner](const json& req, int) {
    if (req["seed"] == 14) throw wizs::Error(ErrorCode::kProviderUnavailable, "image backend down");
    return inner->call(req);
  });
  try {
    wizs::generate_images("a photo of a heron", 20, set);
    FAIL();
  } catch (const wizs::PartialResult& e) {
    EXPECT_EQ(e.items().size(), 14u);
    for (const auto& ref : e.items()) EXPECT_TRUE(set.images->get(ref));
  }
}

TEST(GenerateImages, TotalFailureIsProviderUnavailable) {
  auto set = stub_set();
  set.imagegen = std::make_shared<FakeProvider>([](const json&, int) -> json {
    throw wizs::Error(ErrorCode::kProviderUnavailable, "down");
  });
  try {
    wizs::generate_images("x", 3, set);
    FAIL();
  } catch (const wizs::PartialResult&) {
    FAIL() << "no partial result without any image";
  } catch (const wizs::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProviderUnavailable);
  }
}

TEST(ImageStore, DiskRoundTripAndContentTypes) {
  support::TempDir dir;
  wizs::ImageStore store(dir.path());
  const std::string png("\x89PNG\r\n\x1a\n\0\0\0\rIHDR", 16);
  const auto ref = store.put(png);
  EXPECT_TRUE(wizs::ImageStore::valid_ref(ref));
  EXPECT_EQ(*wizs::ImageStore(dir.path()).get(ref), png);
  EXPECT_FALSE(store.get(std::string(64, '0')));
  EXPECT_FALSE(store.get("../../etc/passwd"));
  EXPECT_EQ(wizs::ImageStore::content_type(png), "image/png");
  EXPECT_EQ(wizs::ImageStore::content_type("\xFF\xD8\xFF\xE0"), "image/jpeg");
  EXPECT_EQ(wizs::ImageStore::content_type("GIF89a.."), "image/gif");
  EXPECT_EQ(wizs::ImageStore::content_type("RIFF\0\0\0\0WEBPVP8 "), "application/octet-stream");
  EXPECT_EQ(wizs::ImageStore::content_type(std::string("RIFF\0\0\0\0WEBPVP8 ", 16)), "image/webp");
  EXPECT_EQ(wizs::ImageStore::content_type("hello"), "application/octet-stream");
}

}  // namespace
