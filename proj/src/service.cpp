#include "wizs/service.hpp"

#include <fmt/format.h>

#include <condition_variable>
#include <deque>
#include <random>
#include <set>
#include <thread>

#include "wizs/blob.hpp"
#include "wizs/cache.hpp"
#include "wizs/error.hpp"
#include "wizs/format.hpp"
#include "wizs/generation.hpp"
#include "wizs/log.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a macro named _res.
#include <httplib.h>

namespace wizs {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::optional<JobState> parse_job_state(std::string_view name) {
  for (int s = 0; s <= static_cast<int>(JobState::kFailed); ++s) {
    if (job_state_name(static_cast<JobState>(s)) == name) return static_cast<JobState>(s);
  }
  return std::nullopt;
}

std::string new_job_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  return fmt::format("job-{:016x}{:08x}", rng(), static_cast<std::uint32_t>(rng()));
}

bool is_terminal(JobState s) { return s == JobState::kDone || s == JobState::kFailed; }

}  // namespace

ServiceConfig parse_service_config(std::string_view json_text, const std::filesystem::path& base_dir,
                                   std::string_view source) {
  const std::string where(source);
  auto bad = [&](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, where + ": " + msg); };
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    bad(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("must be an object");
  static const std::set<std::string> kKnown = {"host", "port", "queue_cap", "workers", "providers",
                                               "calibration", "static_dir", "snapshot",
                                               "retry_after_seconds"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnown.contains(it.key())) bad("unknown field '" + it.key() + "'");
  }
  ServiceConfig c;
  auto path = [&](const char* name) -> std::filesystem::path {
    if (!j.contains(name)) return {};
    if (!j[name].is_string()) bad(fmt::format("'{}' must be a string", name));
    std::filesystem::path p = j[name].get<std::string>();
    if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
  };
  auto integer = [&](const char* name, int fallback) {
    if (!j.contains(name)) return fallback;
    if (!j[name].is_number_integer()) bad(fmt::format("'{}' must be an integer", name));
    return j[name].get<int>();
  };
  if (j.contains("host")) {
    if (!j["host"].is_string()) bad("'host' must be a string");
    c.host = j["host"].get<std::string>();
  }
  c.port = integer("port", c.port);
  c.queue_cap = integer("queue_cap", c.queue_cap);
  c.workers = integer("workers", c.workers);
  c.retry_after_seconds = integer("retry_after_seconds", c.retry_after_seconds);
  c.providers = path("providers");
  c.calibration = path("calibration");
  c.static_dir = path("static_dir");
  c.snapshot = path("snapshot");
  if (c.port < 0 || c.port > 65535) bad("port must be in [0, 65535]");
  if (c.queue_cap < 1) bad("queue_cap must be >= 1");
  if (c.workers < 1) bad("workers must be >= 1");
  if (c.retry_after_seconds < 0) bad("retry_after_seconds must be >= 0");
  return c;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidArgument, e.message());
  }
  return parse_service_config(text, path.parent_path(), path.string());
}

ojson request_to_json(const PredictionRequest& r) {
  ojson j;
  j["query"] = r.query;
  if (r.alternatives) j["alternatives"] = *r.alternatives;
  j["domain"] = r.domain;
  if (r.n_images) j["n_images"] = *r.n_images;
  return j;
}

ojson job_to_json(const Job& job) {
  ojson j;
  j["job_id"] = job.job_id;
  j["state"] = job_state_name(job.state);
  auto history = ojson::array();
  for (auto s : job.history) history.push_back(job_state_name(s));
  j["state_history"] = std::move(history);
  j["request"] = request_to_json(job.request);
  if (job.result) j["result"] = result_to_json(*job.result);
  if (job.error) j["error"] = {{"code", job.error->code}, {"message", job.error->message}};
  return j;
}

JobStore::JobStore(std::filesystem::path snapshot) : snapshot_(std::move(snapshot)) {
  if (snapshot_.empty() || !std::filesystem::exists(snapshot_)) return;
  try {
    const ojson doc = ojson::parse(read_file(snapshot_));
    for (const auto& body : doc.at("jobs")) {
      Entry e;
      e.job.job_id = body.at("job_id").get<std::string>();
      const auto state = parse_job_state(body.at("state").get<std::string>());
      if (!state || !is_terminal(*state)) continue;
      e.job.state = *state;
      e.frozen = body.dump();
      jobs_.emplace(e.job.job_id, std::move(e));
    }
    logger()->info("restored {} finished jobs from {}", jobs_.size(), snapshot_.string());
  } catch (const std::exception& ex) {
    logger()->warn("ignoring unreadable job snapshot {}: {}", snapshot_.string(), ex.what());
  }
}

std::string JobStore::create(PredictionRequest request) {
  std::unique_lock lock(mu_);
  std::string id;
  do {
    id = new_job_id();
  } while (jobs_.contains(id));
  Entry e;
  e.job.job_id = id;
  e.job.request = std::move(request);
  e.job.history = {JobState::kQueued};
  jobs_.emplace(id, std::move(e));
  return id;
}

bool JobStore::advance(const std::string& job_id, JobState next) {
  if (is_terminal(next)) return false;
  std::unique_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end() || !is_valid_transition(it->second.job.state, next)) return false;
  it->second.job.state = next;
  it->second.job.history.push_back(next);
  return true;
}

bool JobStore::finish(const std::string& job_id, PredictionResult result) {
  std::unique_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end() || !is_valid_transition(it->second.job.state, JobState::kDone)) return false;
  Job& job = it->second.job;
  job.state = JobState::kDone;
  job.history.push_back(JobState::kDone);
  job.result = std::move(result);
  it->second.frozen = job_to_json(job).dump();
  persist_locked();
  return true;
}

bool JobStore::fail(const std::string& job_id, JobError error) {
  std::unique_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end() || !is_valid_transition(it->second.job.state, JobState::kFailed)) return false;
  Job& job = it->second.job;
  job.state = JobState::kFailed;
  job.history.push_back(JobState::kFailed);
  job.error = std::move(error);
  it->second.frozen = job_to_json(job).dump();
  persist_locked();
  return true;
}

std::optional<std::string> JobStore::body(const std::string& job_id) const {
  std::shared_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  if (!it->second.frozen.empty()) return it->second.frozen;
  return job_to_json(it->second.job).dump();
}

std::optional<JobState> JobStore::state(const std::string& job_id) const {
  std::shared_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second.job.state;
}

std::optional<PredictionRequest> JobStore::request(const std::string& job_id) const {
  std::shared_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second.job.request;
}

std::size_t JobStore::size() const {
  std::shared_lock lock(mu_);
  return jobs_.size();
}

void JobStore::persist_locked() const {
  if (snapshot_.empty()) return;
  ojson doc;
  doc["version"] = 1;
  doc["jobs"] = ojson::array();
  for (const auto& [id, e] : jobs_) {
    if (!e.frozen.empty()) doc["jobs"].push_back(ojson::parse(e.frozen));
  }
  try {
    write_file_atomic(snapshot_, doc.dump() + "\n");
  } catch (const std::exception& ex) {
    logger()->warn("could not write job snapshot {}: {}", snapshot_.string(), ex.what());
  }
}

struct Service::Impl {
  ServiceConfig config;
  ProviderSet providers;
  CalibrationModel model;
  std::string model_id;
  JobStore store;
  httplib::Server server;

  std::mutex queue_mu;
  std::condition_variable_any queue_cv;
  std::deque<std::string> queue;
  std::vector<std::jthread> workers;
  bool stopped = false;

  Impl(ServiceConfig c, ProviderSet p, CalibrationModel m)
      : config(std::move(c)), providers(std::move(p)), model(std::move(m)),
        model_id(wizs::model_id(model)), store(config.snapshot) {}

  void work(std::stop_token stop) {
    for (;;) {
      std::string job_id;
      {
        std::unique_lock lock(queue_mu);
        if (!queue_cv.wait(lock, stop, [&] { return !queue.empty(); })) return;
        job_id = queue.front();
        queue.pop_front();
      }
      execute(job_id);
    }
  }

  void execute(const std::string& job_id) {
    const auto request = store.request(job_id);
    if (!request) return;
    logger()->info("job_id={} state=started query=\"{}\"", job_id, request->query);
    try {
      auto result = run_prediction(*request, providers, model, [&](JobState s) {
        if (store.advance(job_id, s)) {
          logger()->info("job_id={} state={}", job_id, job_state_name(s));
        }
      });
      const double acc = result.predicted_accuracy;
      store.finish(job_id, std::move(result));
      logger()->info("job_id={} state=done predicted_accuracy={}", job_id, format_double(acc));
    } catch (const Error& e) {
      store.fail(job_id, {std::string(error_code_name(e.code())), e.message()});
      logger()->warn("job_id={} state=failed error=\"{}\"", job_id, e.what());
    } catch (const std::exception& e) {
      store.fail(job_id, {"Internal", e.what()});
      logger()->error("job_id={} state=failed error=\"{}\"", job_id, e.what());
    }
  }

  void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message,
                  bool retry_after = false) {
    res.status = status;
    if (retry_after) res.set_header("Retry-After", std::to_string(config.retry_after_seconds));
    res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(), "application/json");
  }

  // Maps library errors to HTTP: validation 422, provider trouble 502.
  void send_library_error(httplib::Response& res, const Error& e) {
    switch (e.code()) {
      case ErrorCode::kInvalidArgument:
        return send_error(res, 422, error_code_name(e.code()), e.message());
      case ErrorCode::kProviderUnavailable:
      case ErrorCode::kProviderShapeError:
      case ErrorCode::kPartialResult:
        return send_error(res, 502, error_code_name(e.code()), e.message(), true);
      default:
        return send_error(res, 500, error_code_name(e.code()), e.message());
    }
  }

  std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
      json j = json::parse(req.body);
      if (j.is_object()) return j;
    } catch (const json::exception&) {
    }
    send_error(res, 400, "BadRequest", "request body must be a JSON object");
    return std::nullopt;
  }

  // Field type problems are validation failures (422).
  static std::optional<std::string> string_field(const json& j, const char* name) {
    if (!j.contains(name) || j[name].is_null()) return std::nullopt;
    if (!j[name].is_string()) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("'{}' must be a string", name));
    }
    return j[name].get<std::string>();
  }

  PredictionRequest parse_prediction(const json& j) {
    PredictionRequest r;
    r.query = string_field(j, "query").value_or("");
    r.domain = string_field(j, "domain").value_or("");
    if (j.contains("alternatives") && !j["alternatives"].is_null()) {
      const auto& a = j["alternatives"];
      if (!a.is_array()) throw Error(ErrorCode::kInvalidArgument, "'alternatives' must be an array");
      std::vector<std::string> alts;
      for (const auto& item : a) {
        if (!item.is_string()) throw Error(ErrorCode::kInvalidArgument, "alternatives must be strings");
        alts.push_back(item.get<std::string>());
      }
      r.alternatives = std::move(alts);
    }
    if (j.contains("n_images") && !j["n_images"].is_null()) {
      if (!j["n_images"].is_number_integer()) {
        throw Error(ErrorCode::kInvalidArgument, "'n_images' must be an integer");
      }
      const auto n = j["n_images"].get<long long>();
      r.n_images = static_cast<int>(std::clamp<long long>(n, -1, 1000000));
    }
    validate_request(r);
    if (!r.n_images) r.n_images = providers.n_images;
    return r;
  }

  void routes() {
    server.Post("/api/alternatives", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req, res);
      if (!body) return;
      try {
        const std::string query = trim(string_field(*body, "query").value_or(""));
        if (query.empty()) return send_error(res, 422, "InvalidArgument", "query must not be empty");
        const auto alt = generate_alternatives(query, string_field(*body, "domain").value_or(""),
                                               *providers.textgen);
        res.set_content(ojson{{"alternatives", alt.labels},
                              {"duplicates_removed", alt.duplicates_removed},
                              {"query_echoes_removed", alt.query_echoes_removed}}
                            .dump(),
                        "application/json");
      } catch (const Error& e) {
        send_library_error(res, e);
      }
    });

    server.Post("/api/predict", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req, res);
      if (!body) return;
      PredictionRequest request;
      try {
        request = parse_prediction(*body);
      } catch (const Error& e) {
        return send_library_error(res, e);
      }
      std::string job_id;
      {
        std::lock_guard lock(queue_mu);
        if (static_cast<int>(queue.size()) >= config.queue_cap) {
          return send_error(res, 429, "QueueFull",
                            fmt::format("{} jobs are already waiting", queue.size()), true);
        }
        job_id = store.create(std::move(request));
        queue.push_back(job_id);
      }
      queue_cv.notify_one();
      logger()->info("job_id={} state=queued", job_id);
      res.status = 202;
      res.set_header("Location", "/api/jobs/" + job_id);
      res.set_content(ojson{{"job_id", job_id}, {"state", "queued"}}.dump(), "application/json");
    });

    server.Get(R"(/api/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = store.body(req.matches[1]);
      if (!body) return send_error(res, 404, "NotFound", "unknown job id");
      res.set_header("Cache-Control", "no-store");
      res.set_content(*body, "application/json");
    });

    server.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string ref = req.matches[1];
      const auto bytes = providers.images->get(ref);
      if (!bytes) return send_error(res, 404, "NotFound", "unknown image ref");
      res.set_header("Cache-Control", "public, max-age=31536000, immutable");
      res.set_header("ETag", "\"" + ref + "\"");
      res.set_content(*bytes, ImageStore::content_type(*bytes));
    });

    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(ojson{{"status", "ok"},
                            {"calibration_model_id", model_id},
                            {"calibration_label", model.label},
                            {"jobs", store.size()}}
                          .dump(),
                      "application/json");
    });

    if (!config.static_dir.empty()) {
      if (std::filesystem::is_directory(config.static_dir)) {
        server.set_mount_point("/", config.static_dir.string());
      } else {
        logger()->warn("static_dir {} not found; serving the API only", config.static_dir.string());
      }
    }
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      logger()->debug("{} {} -> {}", req.method, req.path, res.status);
    });
  }
};

Service::Service(ServiceConfig config, ProviderSet providers, CalibrationModel model)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(providers), std::move(model))) {
  impl_->routes();
  for (int w = 0; w < impl_->config.workers; ++w) {
    impl_->workers.emplace_back([this](std::stop_token st) { impl_->work(st); });
  }
}

Service::~Service() { stop(); }

int Service::bind() {
  auto& c = impl_->config;
  if (c.port == 0) {
    const int port = impl_->server.bind_to_any_port(c.host);
    if (port < 0) throw Error(ErrorCode::kIo, "cannot bind " + c.host);
    c.port = port;
  } else if (!impl_->server.bind_to_port(c.host, c.port)) {
    throw Error(ErrorCode::kIo, fmt::format("cannot bind {}:{}", c.host, c.port));
  }
  logger()->info("listening on http://{}:{} calibration_model={} ({})", c.host, c.port,
                 impl_->model_id, impl_->model.label);
  return c.port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (!impl_ || impl_->stopped) return;
  impl_->stopped = true;
  impl_->server.stop();
  for (auto& w : impl_->workers) w.request_stop();
  impl_->queue_cv.notify_all();
  impl_->workers.clear();
}

JobStore& Service::jobs() { return impl_->store; }

}  // namespace wizs
